use super::MaterialError;

pub const PAIR_THRESHOLD_KEV: f64 = 2.0 * crate::particle::ELECTRON_MASS_KEV;

/// Mass attenuation coefficients (cm²/g) on an energy grid (keV). Absorption
/// edges appear as two nearly coincident grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonXsTable {
    energy: Vec<f64>,
    photo: Vec<f64>,
    compton: Vec<f64>,
    pair: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonMu {
    pub photoelectric: f64,
    pub compton: f64,
    pub pair: f64,
}

impl PhotonMu {
    pub fn total(&self) -> f64 {
        self.photoelectric + self.compton + self.pair
    }

    pub fn scaled(&self, f: f64) -> PhotonMu {
        PhotonMu {
            photoelectric: self.photoelectric * f,
            compton: self.compton * f,
            pair: self.pair * f,
        }
    }
}

impl PhotonXsTable {
    pub fn new(
        energy: Vec<f64>,
        photo: Vec<f64>,
        compton: Vec<f64>,
        pair: Vec<f64>,
    ) -> Result<Self, MaterialError> {
        let n = energy.len();
        if n < 2 || photo.len() != n || compton.len() != n || pair.len() != n {
            return Err(MaterialError::Table(
                "photon table columns have inconsistent length".into(),
            ));
        }
        for i in 0..n {
            if i > 0 && energy[i] <= energy[i - 1] {
                return Err(MaterialError::Table(format!(
                    "photon energy grid not increasing at row {}",
                    i + 1
                )));
            }
            if photo[i] < 0.0 || compton[i] < 0.0 || pair[i] < 0.0 {
                return Err(MaterialError::Table(format!(
                    "negative coefficient at row {}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            energy,
            photo,
            compton,
            pair,
        })
    }

    /// Parse `E_keV,photoelectric_cm2_g,compton_cm2_g,pair_cm2_g` rows; `#`
    /// lines are comments.
    pub fn parse_csv(text: &str) -> Result<Self, MaterialError> {
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut header = false;
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header {
                if t != "E_keV,photoelectric_cm2_g,compton_cm2_g,pair_cm2_g" {
                    return Err(MaterialError::Table(format!(
                        "line {}: unexpected header",
                        i + 1
                    )));
                }
                header = true;
                continue;
            }
            let parts: Vec<&str> = t.split(',').collect();
            if parts.len() != 4 {
                return Err(MaterialError::Table(format!(
                    "line {}: expected 4 columns",
                    i + 1
                )));
            }
            for (c, p) in cols.iter_mut().zip(parts) {
                c.push(
                    p.trim()
                        .parse()
                        .map_err(|e| MaterialError::Table(format!("line {}: {e}", i + 1)))?,
                );
            }
        }
        let [e, ph, co, pa] = cols;
        Self::new(e, ph, co, pa)
    }

    pub fn e_min(&self) -> f64 {
        self.energy[0]
    }

    pub fn e_max(&self) -> f64 {
        *self.energy.last().unwrap()
    }

    pub fn grid(&self) -> &[f64] {
        &self.energy
    }

    /// Mass attenuation coefficients (cm²/g).
    pub fn mass_mu(&self, e_kev: f64) -> Result<PhotonMu, MaterialError> {
        if !(e_kev >= self.e_min() && e_kev <= self.e_max()) {
            return Err(MaterialError::EnergyOutOfRange {
                energy_kev: e_kev,
                lo: self.e_min(),
                hi: self.e_max(),
            });
        }
        let i = self.energy.partition_point(|&x| x <= e_kev);
        let i = i.clamp(1, self.energy.len() - 1) - 1;
        if self.energy[i] == e_kev {
            let pair = if e_kev <= PAIR_THRESHOLD_KEV {
                0.0
            } else {
                self.pair[i]
            };
            return Ok(PhotonMu {
                photoelectric: self.photo[i],
                compton: self.compton[i],
                pair,
            });
        }
        let (e0, e1) = (self.energy[i], self.energy[i + 1]);
        let f = (e_kev / e0).ln() / (e1 / e0).ln();
        let pair = if e_kev <= PAIR_THRESHOLD_KEV {
            0.0
        } else if self.pair[i] > 0.0 {
            loglog(self.pair[i], self.pair[i + 1], f)
        } else {
            // threshold segment: rises quadratically from the pair threshold
            let t = (e_kev - PAIR_THRESHOLD_KEV) / (e1 - PAIR_THRESHOLD_KEV);
            self.pair[i + 1] * t * t
        };
        Ok(PhotonMu {
            photoelectric: loglog(self.photo[i], self.photo[i + 1], f),
            compton: loglog(self.compton[i], self.compton[i + 1], f),
            pair,
        })
    }
}

fn loglog(y0: f64, y1: f64, f: f64) -> f64 {
    if y0 <= 0.0 || y1 <= 0.0 {
        return y0 + (y1 - y0) * f;
    }
    (y0.ln() + f * (y1 / y0).ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> PhotonXsTable {
        PhotonXsTable::new(
            vec![10.0, 100.0, 1000.0, 2000.0],
            vec![5.0, 0.5, 0.01, 0.005],
            vec![0.2, 0.15, 0.06, 0.04],
            vec![0.0, 0.0, 0.0, 0.001],
        )
        .unwrap()
    }

    #[test]
    fn grid_points_exact() {
        let t = table();
        let m = t.mass_mu(100.0).unwrap();
        assert_eq!(m.photoelectric, 0.5);
        assert_eq!(m.compton, 0.15);
    }

    #[test]
    fn pair_zero_below_threshold() {
        let t = table();
        assert_eq!(t.mass_mu(1021.0).unwrap().pair, 0.0);
        assert!(t.mass_mu(1500.0).unwrap().pair > 0.0);
    }

    #[test]
    fn out_of_grid_is_error() {
        assert!(table().mass_mu(5.0).is_err());
        assert!(table().mass_mu(3000.0).is_err());
    }

    #[test]
    fn loglog_between_points() {
        let m = table().mass_mu(31.622_776_601_683_793).unwrap();
        assert!((m.photoelectric - (5.0f64 * 0.5).sqrt()).abs() < 1e-12);
    }
}
