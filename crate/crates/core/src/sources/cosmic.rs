use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::SourceError;
use crate::particle::{ParticleState, Species, SpeciesGroup, MUON_MASS_KEV};

/// Altitude of the reference laboratory, m.
pub const BOULDER_ALTITUDE_M: f64 = 1650.0;

/// μ⁺/μ⁻ ratio at ground level.
pub const MUON_CHARGE_RATIO: f64 = 1.27;

/// Scale height of the muon altitude dependence; exp(1650/5780) = 1.33.
const MUON_SCALE_HEIGHT_M: f64 = 5780.0;

/// Ground-level differential muon intensity, cm⁻² s⁻¹ sr⁻¹ MeV⁻¹, for kinetic
/// energy in MeV. Gaisser's formula with the low-energy and curved-atmosphere
/// corrections of Guan et al. (2015), times exp(h / 5780 m).
pub fn muon_flux(e_kin_mev: f64, cos_zenith: f64, altitude_m: f64) -> f64 {
    if cos_zenith <= 0.0 || e_kin_mev <= 0.0 {
        return 0.0;
    }
    let c = cos_zenith.min(1.0);
    let (p1, p2, p3, p4, p5) = (0.102_573, -0.068_287, 0.958_633, 0.040_725_3, 0.817_285);
    let cs =
        ((c * c + p1 * p1 + p2 * c.powf(p3) + p4 * c.powf(p5)) / (1.0 + p1 * p1 + p2 + p4)).sqrt();
    let e = (e_kin_mev + MUON_MASS_KEV * 1e-3) * 1e-3;
    let per_gev = 0.14
        * (e * (1.0 + 3.64 / (e * cs.powf(1.29)))).powf(-2.7)
        * (1.0 / (1.0 + 1.1 * e * cs / 115.0) + 0.054 / (1.0 + 1.1 * e * cs / 850.0));
    per_gev * 1e-3 * (altitude_m / MUON_SCALE_HEIGHT_M).exp()
}

/// Differential intensity of one species on an (E, cos θ) grid. Between
/// energy nodes the flux is a power law (linear where a node is zero);
/// between cosine nodes it is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTable {
    species: Species,
    e_mev: Vec<f64>,
    cos: Vec<f64>,
    flux: Vec<f64>,
    cell_cum: Vec<f64>,
    cell_max: Vec<f64>,
}

/// ∫_{e0}^{e} of the energy interpolant between (e0, f0) and (e1, f1).
fn seg_integral(e0: f64, e1: f64, f0: f64, f1: f64, e: f64) -> f64 {
    if e <= e0 {
        return 0.0;
    }
    if f0 > 0.0 && f1 > 0.0 {
        let k = (f1 / f0).ln() / (e1 / e0).ln();
        let r = e / e0;
        if (k + 1.0).abs() < 1e-9 {
            f0 * e0 * r.ln()
        } else {
            f0 * e0 * (r.powf(k + 1.0) - 1.0) / (k + 1.0)
        }
    } else {
        let slope = (f1 - f0) / (e1 - e0);
        let d = e - e0;
        f0 * d + 0.5 * slope * d * d
    }
}

fn seg_value(e0: f64, e1: f64, f0: f64, f1: f64, e: f64) -> f64 {
    if f0 > 0.0 && f1 > 0.0 {
        f0 * (e / e0).powf((f1 / f0).ln() / (e1 / e0).ln())
    } else {
        f0 + (f1 - f0) * (e - e0) / (e1 - e0)
    }
}

/// ∫_{c0}^{c} c'(1 - t) dc' and ∫_{c0}^{c} c' t dc' with t = (c' - c0)/Δc.
fn cos_weights(c0: f64, dc: f64, c: f64) -> (f64, f64) {
    let s = ((c - c0) / dc).clamp(0.0, 1.0);
    // substitute c' = c0 + dc·t
    let w_lo = dc * (c0 * (s - 0.5 * s * s) + dc * (0.5 * s * s - s * s * s / 3.0));
    let w_hi = dc * (0.5 * c0 * s * s + dc * s * s * s / 3.0);
    (w_lo, w_hi)
}

impl FluxTable {
    /// `flux[i * cos.len() + j]` is the intensity at `e_mev[i]`, `cos[j]`.
    pub fn new(
        species: Species,
        e_mev: Vec<f64>,
        cos: Vec<f64>,
        flux: Vec<f64>,
    ) -> Result<Self, SourceError> {
        let bad = |msg: &str| SourceError::FluxGrid {
            species,
            msg: msg.to_string(),
        };
        if e_mev.len() < 2 || cos.len() < 2 {
            return Err(bad("need at least two energy and two cosine nodes"));
        }
        if flux.len() != e_mev.len() * cos.len() {
            return Err(bad("grid is not rectangular"));
        }
        if e_mev[0] <= 0.0 || e_mev.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("energies must be positive and strictly increasing"));
        }
        if cos[0] < 0.0 || *cos.last().unwrap() > 1.0 || cos.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("cosines must increase strictly within [0, 1]"));
        }
        if flux.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(bad("flux must be finite and non-negative"));
        }
        let (ne, nc) = (e_mev.len(), cos.len());
        let mut cell_cum = Vec::with_capacity((ne - 1) * (nc - 1));
        let mut cell_max = Vec::with_capacity((ne - 1) * (nc - 1));
        let mut acc = 0.0;
        for i in 0..ne - 1 {
            let (e0, e1) = (e_mev[i], e_mev[i + 1]);
            for j in 0..nc - 1 {
                let (c0, c1) = (cos[j], cos[j + 1]);
                let f = |a: usize, b: usize| flux[a * nc + b];
                let i_lo = seg_integral(e0, e1, f(i, j), f(i + 1, j), e1);
                let i_hi = seg_integral(e0, e1, f(i, j + 1), f(i + 1, j + 1), e1);
                let (w_lo, w_hi) = cos_weights(c0, c1 - c0, c1);
                acc += 2.0 * PI * (i_lo * w_lo + i_hi * w_hi);
                cell_cum.push(acc);
                // envelope of f·E·c over the cell for the rejection step
                let m = [
                    f(i, j) * e0,
                    f(i + 1, j) * e1,
                    f(i, j + 1) * e0,
                    f(i + 1, j + 1) * e1,
                ]
                .into_iter()
                .fold(0.0, f64::max);
                cell_max.push(1.05 * m * c1);
            }
        }
        Ok(Self {
            species,
            e_mev,
            cos,
            flux,
            cell_cum,
            cell_max,
        })
    }

    /// Tabulate a function of (kinetic energy MeV, cos θ).
    pub fn from_fn(
        species: Species,
        e_mev: Vec<f64>,
        cos: Vec<f64>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, SourceError> {
        let flux = e_mev
            .iter()
            .flat_map(|&e| cos.iter().map(move |&c| (e, c)))
            .map(|(e, c)| f(e, c))
            .collect();
        Self::new(species, e_mev, cos, flux)
    }

    pub fn species(&self) -> Species {
        self.species
    }

    pub fn energies_mev(&self) -> &[f64] {
        &self.e_mev
    }

    pub fn cosines(&self) -> &[f64] {
        &self.cos
    }

    pub fn values(&self) -> &[f64] {
        &self.flux
    }

    /// Interpolated intensity, cm⁻² s⁻¹ sr⁻¹ MeV⁻¹; zero off the grid.
    pub fn value(&self, e_mev: f64, cos: f64) -> f64 {
        let (ne, nc) = (self.e_mev.len(), self.cos.len());
        if e_mev < self.e_mev[0]
            || e_mev > self.e_mev[ne - 1]
            || cos < self.cos[0]
            || cos > self.cos[nc - 1]
        {
            return 0.0;
        }
        let i = self.e_mev.partition_point(|&x| x <= e_mev).clamp(1, ne - 1) - 1;
        let j = self.cos.partition_point(|&x| x <= cos).clamp(1, nc - 1) - 1;
        let along = |jj: usize| {
            seg_value(
                self.e_mev[i],
                self.e_mev[i + 1],
                self.flux[i * nc + jj],
                self.flux[(i + 1) * nc + jj],
                e_mev,
            )
        };
        let t = (cos - self.cos[j]) / (self.cos[j + 1] - self.cos[j]);
        (1.0 - t) * along(j) + t * along(j + 1)
    }

    /// Particles crossing a horizontal plane downward, cm⁻² s⁻¹.
    pub fn plane_rate(&self) -> f64 {
        self.cell_cum.last().copied().unwrap_or(0.0)
    }

    /// Fraction of the plane-crossing rate below kinetic energy `e_mev`.
    pub fn cdf_energy(&self, e_mev: f64) -> f64 {
        let nc = self.cos.len();
        let mut acc = 0.0;
        for i in 0..self.e_mev.len() - 1 {
            let (e0, e1) = (self.e_mev[i], self.e_mev[i + 1]);
            if e_mev <= e0 {
                break;
            }
            let upto = e_mev.min(e1);
            for j in 0..nc - 1 {
                let il = seg_integral(
                    e0,
                    e1,
                    self.flux[i * nc + j],
                    self.flux[(i + 1) * nc + j],
                    upto,
                );
                let ih = seg_integral(
                    e0,
                    e1,
                    self.flux[i * nc + j + 1],
                    self.flux[(i + 1) * nc + j + 1],
                    upto,
                );
                let (wl, wh) =
                    cos_weights(self.cos[j], self.cos[j + 1] - self.cos[j], self.cos[j + 1]);
                acc += 2.0 * PI * (il * wl + ih * wh);
            }
        }
        acc / self.plane_rate()
    }

    /// Fraction of the plane-crossing rate with cos θ below `c`.
    pub fn cdf_cos(&self, c: f64) -> f64 {
        let nc = self.cos.len();
        let mut acc = 0.0;
        for i in 0..self.e_mev.len() - 1 {
            let (e0, e1) = (self.e_mev[i], self.e_mev[i + 1]);
            for j in 0..nc - 1 {
                if c <= self.cos[j] {
                    break;
                }
                let il = seg_integral(
                    e0,
                    e1,
                    self.flux[i * nc + j],
                    self.flux[(i + 1) * nc + j],
                    e1,
                );
                let ih = seg_integral(
                    e0,
                    e1,
                    self.flux[i * nc + j + 1],
                    self.flux[(i + 1) * nc + j + 1],
                    e1,
                );
                let (wl, wh) = cos_weights(
                    self.cos[j],
                    self.cos[j + 1] - self.cos[j],
                    c.min(self.cos[j + 1]),
                );
                acc += 2.0 * PI * (il * wl + ih * wh);
            }
        }
        acc / self.plane_rate()
    }

    /// Draw (kinetic energy MeV, cos θ) from the plane-crossing distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let nc1 = self.cos.len() - 1;
        let u = rng.random::<f64>() * self.plane_rate();
        let k = self
            .cell_cum
            .partition_point(|&x| x <= u)
            .min(self.cell_cum.len() - 1);
        let (i, j) = (k / nc1, k % nc1);
        let (le0, le1) = (self.e_mev[i].ln(), self.e_mev[i + 1].ln());
        let (c0, c1) = (self.cos[j], self.cos[j + 1]);
        let m = self.cell_max[k];
        loop {
            let e = (le0 + (le1 - le0) * rng.random::<f64>()).exp();
            let c = c0 + (c1 - c0) * rng.random::<f64>();
            let g = self.value(e, c) * e * c;
            debug_assert!(g <= m * (1.0 + 1e-9), "rejection envelope too small");
            if rng.random::<f64>() * m <= g {
                return (e, c);
            }
        }
    }
}

/// How group scale factors enter the generated particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleMode {
    /// Species are drawn in proportion to their scaled rates; weights are 1.
    #[default]
    Rate,
    /// Species are drawn from unscaled rates; the scale becomes the weight.
    Weight,
}

/// Horizontal square on which primaries start, centred on the z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationPlane {
    pub z_cm: f64,
    pub side_cm: f64,
}

impl GenerationPlane {
    pub fn area_cm2(&self) -> f64 {
        self.side_cm * self.side_cm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosmicFluxModel {
    tables: Vec<FluxTable>,
    em_scale: f64,
    hadronic_scale: f64,
    mode: ScaleMode,
    cum: Vec<f64>,
}

impl CosmicFluxModel {
    pub fn new(tables: Vec<FluxTable>) -> Result<Self, SourceError> {
        let mut m = Self {
            tables,
            em_scale: 1.0,
            hadronic_scale: 1.0,
            mode: ScaleMode::Rate,
            cum: Vec::new(),
        };
        m.rebuild()?;
        Ok(m)
    }

    fn rebuild(&mut self) -> Result<(), SourceError> {
        let mut acc = 0.0;
        self.cum = self
            .tables
            .iter()
            .map(|t| {
                let w = match self.mode {
                    ScaleMode::Rate => self.scale_for(t.species),
                    ScaleMode::Weight => 1.0,
                };
                acc += w * t.plane_rate();
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(SourceError::EmptyModel);
        }
        Ok(())
    }

    /// Analytic intensities for the reference laboratory at 1650 m with the
    /// default group scales (0.79 electromagnetic, 0.88 for the rest).
    pub fn reference() -> Self {
        let m =
            Self::new(reference_tables(BOULDER_ALTITUDE_M)).expect("reference tables are valid");
        m.with_scales(0.79, 0.88).expect("positive scales")
    }

    pub fn with_scales(mut self, em: f64, hadronic_muon: f64) -> Result<Self, SourceError> {
        for s in [em, hadronic_muon] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SourceError::BadScale(s));
            }
        }
        self.em_scale = em;
        self.hadronic_scale = hadronic_muon;
        self.rebuild()?;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: ScaleMode) -> Result<Self, SourceError> {
        self.mode = mode;
        self.rebuild()?;
        Ok(self)
    }

    /// Keep only the listed species.
    pub fn restricted(&self, keep: &[Species]) -> Result<Self, SourceError> {
        let mut m = self.clone();
        m.tables.retain(|t| keep.contains(&t.species));
        m.rebuild()?;
        Ok(m)
    }

    pub fn scales(&self) -> (f64, f64) {
        (self.em_scale, self.hadronic_scale)
    }

    pub fn scale_for(&self, s: Species) -> f64 {
        match s.group() {
            SpeciesGroup::Electromagnetic => self.em_scale,
            SpeciesGroup::HadronicMuon => self.hadronic_scale,
        }
    }

    pub fn tables(&self) -> &[FluxTable] {
        &self.tables
    }

    /// Scaled downward crossing rate of one species through a horizontal
    /// plane, cm⁻² s⁻¹.
    pub fn species_rate_per_cm2(&self, s: Species) -> f64 {
        self.tables
            .iter()
            .filter(|t| t.species == s)
            .map(|t| t.plane_rate())
            .sum::<f64>()
            * self.scale_for(s)
    }

    /// Scaled total crossing rate, cm⁻² s⁻¹.
    pub fn rate_per_cm2(&self) -> f64 {
        self.tables
            .iter()
            .map(|t| t.plane_rate() * self.scale_for(t.species))
            .sum()
    }

    /// Sum of unscaled rates of one group.
    pub fn unscaled_group_rate(&self, g: SpeciesGroup) -> f64 {
        self.tables
            .iter()
            .filter(|t| t.species.group() == g)
            .map(|t| t.plane_rate())
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, plane: &GenerationPlane, rng: &mut R) -> ParticleState {
        let u = rng.random::<f64>() * self.cum.last().unwrap();
        let k = self
            .cum
            .partition_point(|&x| x <= u)
            .min(self.tables.len() - 1);
        let t = &self.tables[k];
        let (e_mev, c) = t.sample(rng);
        let phi = 2.0 * PI * rng.random::<f64>();
        let s = (1.0 - c * c).max(0.0).sqrt();
        let dir = [s * phi.cos(), s * phi.sin(), -c];
        let x = (rng.random::<f64>() - 0.5) * plane.side_cm;
        let y = (rng.random::<f64>() - 0.5) * plane.side_cm;
        let weight = match self.mode {
            ScaleMode::Rate => 1.0,
            ScaleMode::Weight => self.scale_for(t.species),
        };
        ParticleState {
            species: t.species,
            energy_kev: e_mev * 1e3,
            direction: dir,
            position_cm: [x, y, plane.z_cm],
            weight,
        }
    }

    /// `species,E_MeV,cos_zenith,flux_per_cm2_s_sr_MeV`; values print in
    /// shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("species,E_MeV,cos_zenith,flux_per_cm2_s_sr_MeV\n");
        for t in &self.tables {
            let nc = t.cos.len();
            for (i, e) in t.e_mev.iter().enumerate() {
                for (j, c) in t.cos.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        t.species.label(),
                        e,
                        c,
                        t.flux[i * nc + j]
                    );
                }
            }
        }
        out
    }

    /// Parse the CSV format. Rows of one species must form a full grid, in
    /// energy-major order.
    pub fn parse_csv(text: &str) -> Result<Self, SourceError> {
        let mut rows: Vec<(Species, f64, f64, f64, usize)> = Vec::new();
        let mut header = false;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header {
                if t != "species,E_MeV,cos_zenith,flux_per_cm2_s_sr_MeV" {
                    return Err(SourceError::FluxRow {
                        line: lineno,
                        msg: "unexpected header".into(),
                    });
                }
                header = true;
                continue;
            }
            let p: Vec<&str> = t.split(',').collect();
            if p.len() != 4 {
                return Err(SourceError::FluxRow {
                    line: lineno,
                    msg: "expected 4 columns".into(),
                });
            }
            let sp: Species = p[0].parse().map_err(|e: crate::particle::UnknownSpecies| {
                SourceError::FluxRow {
                    line: lineno,
                    msg: e.to_string(),
                }
            })?;
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| SourceError::FluxRow {
                    line: lineno,
                    msg: e.to_string(),
                })
            };
            let (e, c, f) = (num(p[1])?, num(p[2])?, num(p[3])?);
            if !(f.is_finite() && f >= 0.0) {
                return Err(SourceError::FluxRow {
                    line: lineno,
                    msg: format!("negative or non-finite flux {f}"),
                });
            }
            rows.push((sp, e, c, f, lineno));
        }
        let mut tables = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let sp = rows[start].0;
            let end = rows[start..]
                .iter()
                .position(|r| r.0 != sp)
                .map_or(rows.len(), |n| start + n);
            let block = &rows[start..end];
            let mut cos: Vec<f64> = Vec::new();
            for r in block {
                if r.1 != block[0].1 {
                    break;
                }
                cos.push(r.2);
            }
            let nc = cos.len();
            if block.len() % nc != 0 {
                return Err(SourceError::FluxRow {
                    line: block[block.len() - 1].4,
                    msg: "incomplete grid".into(),
                });
            }
            let mut e_mev = Vec::new();
            for (k, r) in block.iter().enumerate() {
                let (i, j) = (k / nc, k % nc);
                if j == 0 {
                    if let Some(&prev) = e_mev.last() {
                        if r.1 <= prev {
                            return Err(SourceError::FluxRow {
                                line: r.4,
                                msg: "energies not increasing".into(),
                            });
                        }
                    }
                    e_mev.push(r.1);
                }
                if r.1 != e_mev[i] || r.2 != cos[j] {
                    return Err(SourceError::FluxRow {
                        line: r.4,
                        msg: "row breaks the rectangular grid".into(),
                    });
                }
            }
            let flux = block.iter().map(|r| r.3).collect();
            tables.push(FluxTable::new(sp, e_mev, cos, flux)?);
            start = end;
        }
        Self::new(tables)
    }

    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SourceError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SourceError> {
        std::fs::write(path, self.to_csv()).map_err(|e| SourceError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(i as f64 / per_decade as f64))
        .collect()
}

fn cos_grid() -> Vec<f64> {
    (0..=20).map(|j| j as f64 / 20.0).collect()
}

/// Scale `shape` so its vertical intensity integrated above `e_above` MeV is `target`.
fn normalized(shape: impl Fn(f64) -> f64, e_above: f64, target: f64) -> impl Fn(f64) -> f64 {
    // trapezoid in ln E
    let n = 4000;
    let (a, b) = (e_above.ln(), 1e6f64.ln());
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for k in 0..=n {
        let e = (a + h * k as f64).exp();
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        s += w * shape(e) * e;
    }
    let k = target / (s * h);
    move |e| k * shape(e)
}

/// Vertical intensities (cm⁻² s⁻¹ sr⁻¹) at the reference site used to fix
/// the analytic non-muon spectra.
mod anchors {
    /// e⁻ + e⁺ above 10 MeV: sea-level 3×10⁻³ carried up through
    /// ≈180 g/cm² less air with the 110 g/cm² attenuation length of the
    /// hadronic cascade that feeds the soft component.
    pub const ELECTRONS_ABOVE_10_MEV: f64 = 1.6e-2;
    /// Photons above 10 MeV.
    pub const GAMMAS_ABOVE_10_MEV: f64 = 1.2e-2;
    /// Protons above 430 MeV (1 GeV/c).
    pub const PROTONS_ABOVE_430_MEV: f64 = 3.1e-4;
    /// Neutrons above 10 MeV.
    pub const NEUTRONS_ABOVE_10_MEV: f64 = 8.8e-3;
    /// Charged pions above 1 GeV.
    pub const PIONS_ABOVE_1_GEV: f64 = 1.0e-5;
    pub const ELECTRON_FRACTION_NEGATIVE: f64 = 2.0 / 3.0;
}

/// Analytic intensity tables for all nine species at `altitude_m`. Only the
/// muon tables follow the altitude; the others are fixed to the reference site.
pub fn reference_tables(altitude_m: f64) -> Vec<FluxTable> {
    use anchors::*;
    let c = cos_grid();
    let mu_e = log_grid(100.0, 1.0e5, 20);
    let mu_plus = MUON_CHARGE_RATIO / (1.0 + MUON_CHARGE_RATIO);
    let electron = normalized(
        |e: f64| (e / 100.0).powf(-1.0) / (1.0 + (e / 100.0).powf(1.6)) * e / (e + 5.0),
        10.0,
        ELECTRONS_ABOVE_10_MEV,
    );
    let gamma = normalized(
        |e: f64| e.powf(-2.0) * e / (e + 2.0) / (1.0 + e / 3000.0),
        10.0,
        GAMMAS_ABOVE_10_MEV,
    );
    let proton = normalized(
        |e: f64| (e / 500.0).powf(0.4) / (1.0 + e / 500.0).powf(3.1),
        430.0,
        PROTONS_ABOVE_430_MEV,
    );
    let neutron = normalized(
        |e: f64| 1.0 / e / (1.0 + (e / 150.0).powf(1.7)),
        10.0,
        NEUTRONS_ABOVE_10_MEV,
    );
    let pion = normalized(
        |e: f64| (e / 1000.0 + 0.3).powf(-2.7) * e / (e + 100.0),
        1000.0,
        PIONS_ABOVE_1_GEV,
    );
    let em_e = log_grid(1.0, 1.0e5, 10);
    let had_e = log_grid(1.0, 1.0e5, 10);
    let ang = |n: f64| move |cz: f64| if cz <= 0.0 { 0.0 } else { cz.powf(n) };
    let (a3, a35) = (ang(3.0), ang(3.5));
    let build = |s: Species, e: &[f64], f: &dyn Fn(f64, f64) -> f64| {
        FluxTable::from_fn(s, e.to_vec(), c.clone(), f).expect("valid analytic table")
    };
    vec![
        build(Species::MuMinus, &mu_e, &|e, cz| {
            (1.0 - mu_plus) * muon_flux(e, cz, altitude_m)
        }),
        build(Species::MuPlus, &mu_e, &|e, cz| {
            mu_plus * muon_flux(e, cz, altitude_m)
        }),
        build(Species::Electron, &em_e, &|e, cz| {
            ELECTRON_FRACTION_NEGATIVE * electron(e) * a3(cz)
        }),
        build(Species::Positron, &em_e, &|e, cz| {
            (1.0 - ELECTRON_FRACTION_NEGATIVE) * electron(e) * a3(cz)
        }),
        build(Species::Gamma, &em_e, &|e, cz| gamma(e) * a3(cz)),
        build(Species::Proton, &had_e, &|e, cz| proton(e) * a35(cz)),
        build(Species::Neutron, &had_e, &|e, cz| neutron(e) * a35(cz)),
        build(Species::PiMinus, &log_grid(10.0, 1.0e5, 10), &|e, cz| {
            0.5 * pion(e) * a35(cz)
        }),
        build(Species::PiPlus, &log_grid(10.0, 1.0e5, 10), &|e, cz| {
            0.5 * pion(e) * a35(cz)
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn integrate_vertical_muons(e_lo: f64, altitude: f64) -> f64 {
        let n = 20000;
        let (a, b) = (e_lo.ln(), 1e7f64.ln());
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|k| {
                let e = (a + h * k as f64).exp();
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * muon_flux(e, 1.0, altitude) * e
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn vertical_muon_intensity_above_one_gev() {
        // standard value ≈ 70 m⁻² s⁻¹ sr⁻¹ for p > 1 GeV/c
        let i = integrate_vertical_muons(1000.0 - 105.66 + 5.6, 0.0) * 1e4;
        assert!((i - 70.0).abs() / 70.0 < 0.15, "{i}");
    }

    #[test]
    fn altitude_ratio() {
        let sea = CosmicFluxModel::new(reference_tables(0.0))
            .unwrap()
            .restricted(&[Species::MuMinus, Species::MuPlus])
            .unwrap();
        let hi = CosmicFluxModel::new(reference_tables(BOULDER_ALTITUDE_M))
            .unwrap()
            .restricted(&[Species::MuMinus, Species::MuPlus])
            .unwrap();
        let r = hi.rate_per_cm2() / sea.rate_per_cm2();
        assert!((r - 1.33).abs() < 0.02, "{r}");
    }

    #[test]
    fn horizontal_flux_is_zero() {
        assert_eq!(muon_flux(5000.0, 0.0, 0.0), 0.0);
        assert!(muon_flux(5000.0, 0.5, 0.0) > 0.0);
    }

    fn tiny_table() -> FluxTable {
        FluxTable::new(
            Species::MuMinus,
            vec![100.0, 1000.0],
            vec![0.0, 1.0],
            vec![0.0, 2.0, 0.0, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn minimal_grid_and_validation() {
        let t = tiny_table();
        assert!(t.plane_rate() > 0.0);
        assert!(FluxTable::new(
            Species::MuMinus,
            vec![100.0, 1000.0],
            vec![0.0, 1.0],
            vec![0.0, -2.0, 0.0, 0.2]
        )
        .is_err());
        assert!(FluxTable::new(
            Species::MuMinus,
            vec![1000.0, 100.0],
            vec![0.0, 1.0],
            vec![0.0; 4]
        )
        .is_err());
    }

    #[test]
    fn negative_flux_row_is_named() {
        let text = "species,E_MeV,cos_zenith,flux_per_cm2_s_sr_MeV\nmu-,100,0,0\nmu-,100,1,2\nmu-,1000,0,-1\nmu-,1000,1,0.2\n";
        match CosmicFluxModel::parse_csv(text) {
            Err(SourceError::FluxRow { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = CosmicFluxModel::new(reference_tables(1650.0)).unwrap();
        let back = CosmicFluxModel::parse_csv(&m.to_csv()).unwrap();
        assert_eq!(back.tables(), m.tables());
    }

    #[test]
    fn cell_integrals_match_quadrature() {
        let t = &reference_tables(1650.0)[0];
        // brute-force midpoint quadrature of 2π ∫∫ f c dc dE in (ln E, c)
        let (n_e, n_c) = (3000, 200);
        let (a, b) = (
            t.energies_mev()[0].ln(),
            t.energies_mev().last().unwrap().ln(),
        );
        let h = (b - a) / n_e as f64;
        let mut s = 0.0;
        for i in 0..n_e {
            let e = (a + h * (i as f64 + 0.5)).exp();
            for j in 0..n_c {
                let c = (j as f64 + 0.5) / n_c as f64;
                s += t.value(e, c) * c * e;
            }
        }
        s *= 2.0 * PI * h / n_c as f64;
        assert!(
            (s / t.plane_rate() - 1.0).abs() < 2e-3,
            "{s} {}",
            t.plane_rate()
        );
    }

    #[test]
    fn single_species_model() {
        let m = CosmicFluxModel::new(vec![tiny_table()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plane = GenerationPlane {
            z_cm: 10.0,
            side_cm: 2.0,
        };
        for _ in 0..1000 {
            let p = m.sample(&plane, &mut rng);
            assert_eq!(p.species, Species::MuMinus);
            assert!(p.direction[2] < 0.0);
            assert!(p.position_cm[0].abs() <= 1.0 && p.position_cm[2] == 10.0);
        }
    }

    #[test]
    fn scaled_total_rate() {
        let base = CosmicFluxModel::new(reference_tables(1650.0)).unwrap();
        let scaled = base.clone().with_scales(0.79, 0.88).unwrap();
        let want = 0.79 * base.unscaled_group_rate(SpeciesGroup::Electromagnetic)
            + 0.88 * base.unscaled_group_rate(SpeciesGroup::HadronicMuon);
        assert!((scaled.rate_per_cm2() / want - 1.0).abs() < 1e-12);
        assert!(base.clone().with_scales(0.0, 1.0).is_err());
    }
}
