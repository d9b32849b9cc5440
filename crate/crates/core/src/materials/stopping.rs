use crate::particle::{Species, ELECTRON_MASS_KEV};

/// K = 4π N_A r_e² m_e c², MeV cm²/mol.
pub const BETHE_K: f64 = 0.307_075;

/// Mean excitation energy and Sternheimer density-effect parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingParams {
    pub mean_excitation_ev: f64,
    pub cbar: f64,
    pub x0: f64,
    pub x1: f64,
    pub a: f64,
    pub k: f64,
    pub delta0: f64,
}

impl StoppingParams {
    pub fn density_effect(&self, beta_gamma: f64) -> f64 {
        let x = beta_gamma.log10();
        let ln10 = std::f64::consts::LN_10;
        if x >= self.x1 {
            2.0 * ln10 * x - self.cbar
        } else if x >= self.x0 {
            2.0 * ln10 * x - self.cbar + self.a * (self.x1 - x).powf(self.k)
        } else {
            self.delta0 * 10f64.powf(2.0 * (x - self.x0))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Kinematics {
    pub beta2: f64,
    pub gamma: f64,
    pub beta_gamma: f64,
}

pub fn kinematics(mass_kev: f64, e_kin_kev: f64) -> Kinematics {
    let gamma = 1.0 + e_kin_kev / mass_kev;
    let beta2 = 1.0 - 1.0 / (gamma * gamma);
    Kinematics {
        beta2,
        gamma,
        beta_gamma: (gamma * gamma - 1.0).sqrt(),
    }
}

/// Largest kinetic energy transferable to a free electron in one collision.
pub fn max_transfer_kev(species: Species, e_kin_kev: f64) -> f64 {
    match species {
        Species::Electron => 0.5 * e_kin_kev,
        Species::Positron => e_kin_kev,
        _ => {
            let m = species.mass_kev();
            let k = kinematics(m, e_kin_kev);
            let r = ELECTRON_MASS_KEV / m;
            2.0 * ELECTRON_MASS_KEV * k.beta_gamma * k.beta_gamma
                / (1.0 + 2.0 * k.gamma * r + r * r)
        }
    }
}

/// Mean collision mass stopping power, MeV cm²/g.
pub fn mass_stopping(
    params: &StoppingParams,
    z_over_a: f64,
    species: Species,
    e_kin_kev: f64,
) -> f64 {
    let i_kev = params.mean_excitation_ev * 1e-3;
    match species {
        Species::Electron | Species::Positron => {
            let tau = e_kin_kev / ELECTRON_MASS_KEV;
            let k = kinematics(ELECTRON_MASS_KEV, e_kin_kev);
            let delta = params.density_effect(k.beta_gamma);
            let i_rel = i_kev / ELECTRON_MASS_KEV;
            let f = if species == Species::Electron {
                1.0 - k.beta2
                    + (tau * tau / 8.0 - (2.0 * tau + 1.0) * std::f64::consts::LN_2)
                        / ((tau + 1.0) * (tau + 1.0))
            } else {
                let y = tau + 2.0;
                2.0 * std::f64::consts::LN_2
                    - k.beta2 / 12.0 * (23.0 + 14.0 / y + 10.0 / (y * y) + 4.0 / (y * y * y))
            };
            let bracket = (tau * tau * (tau + 2.0) / (2.0 * i_rel * i_rel)).ln() + f - delta;
            0.5 * BETHE_K * z_over_a / k.beta2 * bracket.max(0.1)
        }
        _ => {
            let m = species.mass_kev();
            let k = kinematics(m, e_kin_kev);
            let tmax = max_transfer_kev(species, e_kin_kev);
            let delta = params.density_effect(k.beta_gamma);
            let arg =
                2.0 * ELECTRON_MASS_KEV * k.beta_gamma * k.beta_gamma * tmax / (i_kev * i_kev);
            let bracket = 0.5 * arg.ln() - k.beta2 - 0.5 * delta;
            let z = species.charge() as f64;
            BETHE_K * z * z * z_over_a / k.beta2 * bracket.max(0.05)
        }
    }
}

/// Mass CSDA range table (g/cm²) on a log energy grid.
#[derive(Debug, Clone)]
pub struct RangeTable {
    ln_e: Vec<f64>,
    range: Vec<f64>,
    ln_range: Vec<f64>,
    mass_stop: Vec<f64>,
}

const POINTS_PER_DECADE: usize = 40;

impl RangeTable {
    pub fn build(
        params: &StoppingParams,
        z_over_a: f64,
        species: Species,
        e_lo: f64,
        e_hi: f64,
    ) -> Self {
        let decades = (e_hi / e_lo).log10();
        let n = (decades * POINTS_PER_DECADE as f64).ceil() as usize + 1;
        let step = (e_hi / e_lo).ln() / (n - 1) as f64;
        let ln_e: Vec<f64> = (0..n).map(|i| e_lo.ln() + step * i as f64).collect();
        let s = |e_kev: f64| mass_stopping(params, z_over_a, species, e_kev) * 1e3; // keV cm²/g
        let mass_stop: Vec<f64> = ln_e.iter().map(|&l| s(l.exp())).collect();
        // range at the bottom of the table: S ∝ E^-0.7 extrapolation
        let mut range = vec![e_lo / (1.7 * mass_stop[0])];
        let gl = [
            (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
            (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
            (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        ];
        for i in 1..n {
            let (a, b) = (ln_e[i - 1], ln_e[i]);
            let mut acc = 0.0;
            for (x, w) in gl {
                let l = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let e = l.exp();
                acc += w * e / s(e);
            }
            let prev = range[i - 1];
            range.push(prev + 0.5 * (b - a) * acc);
        }
        let ln_range = range.iter().map(|r| r.ln()).collect();
        Self {
            ln_e,
            range,
            ln_range,
            mass_stop,
        }
    }

    pub fn e_lo(&self) -> f64 {
        self.ln_e[0].exp()
    }

    pub fn e_hi(&self) -> f64 {
        self.ln_e[self.ln_e.len() - 1].exp()
    }

    fn seg(&self, ln_e: f64) -> (usize, f64) {
        let step = self.ln_e[1] - self.ln_e[0];
        let x = ((ln_e - self.ln_e[0]) / step).clamp(0.0, (self.ln_e.len() - 1) as f64 - 1e-12);
        let i = (x.floor() as usize).min(self.ln_e.len() - 2);
        (i, x - i as f64)
    }

    /// Mass range, g/cm².
    pub fn range(&self, e_kev: f64) -> f64 {
        if e_kev <= self.e_lo() {
            return self.range[0] * (e_kev / self.e_lo()).powf(1.7);
        }
        let (i, f) = self.seg(e_kev.ln());
        (self.ln_range[i] + f * (self.ln_range[i + 1] - self.ln_range[i])).exp()
    }

    /// Mass stopping power, keV cm²/g (interpolated).
    pub fn stopping(&self, e_kev: f64) -> f64 {
        let (i, f) = self.seg(e_kev.max(self.e_lo()).ln());
        (self.mass_stop[i].ln() + f * (self.mass_stop[i + 1] / self.mass_stop[i]).ln()).exp()
    }

    /// Energy whose mass range is `r`.
    pub fn energy_for_range(&self, r: f64) -> f64 {
        if r <= self.range[0] {
            return self.e_lo() * (r / self.range[0]).max(0.0).powf(1.0 / 1.7);
        }
        let lr = r.ln();
        let j = self
            .ln_range
            .partition_point(|&x| x <= lr)
            .clamp(1, self.ln_range.len() - 1)
            - 1;
        let f = (lr - self.ln_range[j]) / (self.ln_range[j + 1] - self.ln_range[j]);
        (self.ln_e[j] + f * (self.ln_e[j + 1] - self.ln_e[j])).exp()
    }

    /// Kinetic energy after travelling `mass_path` g/cm²; 0 when the particle stops.
    pub fn energy_after(&self, e_kev: f64, mass_path: f64) -> f64 {
        if mass_path <= 0.0 {
            return e_kev;
        }
        let r = self.range(e_kev);
        if mass_path >= r {
            return 0.0;
        }
        if mass_path < 0.02 * r {
            // midpoint rule is more accurate than differencing two large ranges
            let s0 = self.stopping(e_kev);
            let mid = (e_kev - 0.5 * s0 * mass_path).max(0.5 * e_kev);
            return (e_kev - self.stopping(mid) * mass_path).max(0.0);
        }
        self.energy_for_range(r - mass_path).min(e_kev)
    }
}
