use rand::Rng;

use super::Element;
use crate::particle::NEUTRON_MASS_KEV;

const HBAR_C_MEV_FM: f64 = 197.326_98;
const BARN_CM2: f64 = 1e-24;
const AVOGADRO: f64 = 6.022_140_76e23;

/// Elastic cross section (barn) of one nucleus. Hydrogen uses the classic
/// two-term effective-range fit; heavier nuclei a black-disk estimate
/// π(R + ƛ)² with ƛ capped at R so the low-energy limit is 4πR².
pub fn elastic_barn(z: u32, a: f64, e_kin_kev: f64) -> f64 {
    let e_mev = e_kin_kev * 1e-3;
    if z == 1 {
        let np = |e: f64| {
            3.0 * std::f64::consts::PI
                / (1.206 * e + (-1.86 + 0.094_15 * e + 0.000_130_6 * e * e).powi(2))
                + std::f64::consts::PI / (1.206 * e + (0.4223 + 0.13 * e).powi(2))
        };
        if e_mev <= 100.0 {
            return np(e_mev);
        }
        return (np(100.0) * (100.0 / e_mev).sqrt()).max(0.02);
    }
    let m = NEUTRON_MASS_KEV * 1e-3;
    let p = (e_mev * (e_mev + 2.0 * m)).sqrt();
    let lambda_bar = HBAR_C_MEV_FM / p;
    let r = 1.25 * a.cbrt();
    let fm2 = std::f64::consts::PI * (r + lambda_bar.min(r)).powi(2);
    fm2 * 1e-2
}

/// Nucleon–nucleus inelastic cross section (barn): 45 mb·A^0.7 above a
/// ramp from 10 to 25 MeV. Hydrogen has none in this energy range.
pub fn inelastic_barn(a: f64, e_kin_kev: f64) -> f64 {
    if a < 1.5 || e_kin_kev <= INELASTIC_MIN_KEV {
        return 0.0;
    }
    let ramp = ((e_kin_kev - INELASTIC_MIN_KEV) / 15_000.0).min(1.0);
    0.045 * a.powf(0.7) * ramp
}

pub const INELASTIC_MIN_KEV: f64 = 10_000.0;
const BINDING_KEV: f64 = 8_000.0;
const EVAPORATION_T_KEV: f64 = 2_000.0;

/// Products of one inelastic hadron–nucleus collision.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakup {
    /// Recoil and alpha energy, deposited where the collision happened.
    pub local_kev: f64,
    /// Energy spent unbinding the emitted nucleons.
    pub binding_kev: f64,
    /// (is_proton, kinetic keV, cos relative to the projectile direction)
    pub nucleons: Vec<(bool, f64, f64)>,
}

/// Crude cascade plus evaporation: above 50 MeV a forward leading nucleon
/// takes 40–90% of the energy, then nucleons with a 2 MeV temperature
/// boil off at 8 MeV binding each until less than 10 MeV of excitation
/// is left, which stays local.
pub fn sample_breakup<R: Rng + ?Sized>(e_kin_kev: f64, z_over_a: f64, rng: &mut R) -> Breakup {
    let mut left = e_kin_kev;
    let mut nucleons = Vec::new();
    let mut binding = 0.0;
    if left > 50_000.0 {
        let t = left * (0.4 + 0.5 * rng.random::<f64>());
        nucleons.push((
            rng.random::<f64>() < z_over_a,
            t,
            0.8 + 0.2 * rng.random::<f64>(),
        ));
        left -= t;
    }
    while left > INELASTIC_MIN_KEV {
        // Gamma(2, T) kinetic energy
        let t = (-EVAPORATION_T_KEV
            * (rng.random::<f64>() * rng.random::<f64>())
                .max(f64::MIN_POSITIVE)
                .ln())
        .min(left - BINDING_KEV);
        nucleons.push((
            rng.random::<f64>() < z_over_a,
            t,
            2.0 * rng.random::<f64>() - 1.0,
        ));
        left -= t + BINDING_KEV;
        binding += BINDING_KEV;
    }
    Breakup {
        local_kev: left,
        binding_kev: binding,
        nucleons,
    }
}

/// Pre-tabulated macroscopic neutron cross sections of a material.
#[derive(Debug, Clone)]
pub struct NeutronTable {
    ln_e: Vec<f64>,
    // per element partial macroscopic xs, cm⁻¹ at unit density scaling
    partial: Vec<Vec<f64>>,
    inelastic: Vec<f64>,
    mass_numbers: Vec<f64>,
}

const E_LO_KEV: f64 = 1.0;
const E_HI_KEV: f64 = 1.0e7;
const PER_DECADE: usize = 50;

impl NeutronTable {
    pub fn build(elements: &[Element], density: f64) -> Self {
        let n = ((E_HI_KEV / E_LO_KEV).log10() * PER_DECADE as f64) as usize + 1;
        let step = (E_HI_KEV / E_LO_KEV).ln() / (n - 1) as f64;
        let ln_e: Vec<f64> = (0..n).map(|i| E_LO_KEV.ln() + step * i as f64).collect();
        let partial = elements
            .iter()
            .map(|el| {
                let number_density = density * el.mass_fraction * AVOGADRO / el.a;
                ln_e.iter()
                    .map(|&l| number_density * elastic_barn(el.z, el.a, l.exp()) * BARN_CM2)
                    .collect()
            })
            .collect();
        let inelastic = ln_e
            .iter()
            .map(|&l| {
                elements
                    .iter()
                    .map(|el| {
                        density * el.mass_fraction * AVOGADRO / el.a
                            * inelastic_barn(el.a, l.exp())
                            * BARN_CM2
                    })
                    .sum()
            })
            .collect();
        Self {
            ln_e,
            partial,
            inelastic,
            mass_numbers: elements.iter().map(|e| e.a / 1.008_665).collect(),
        }
    }

    fn interp(&self, v: &[f64], e_kev: f64) -> f64 {
        let l = e_kev.clamp(E_LO_KEV, E_HI_KEV).ln();
        let step = self.ln_e[1] - self.ln_e[0];
        let x = (l - self.ln_e[0]) / step;
        let i = (x.floor() as usize).min(self.ln_e.len() - 2);
        let f = x - i as f64;
        v[i] + f * (v[i + 1] - v[i])
    }

    /// Total macroscopic elastic cross section, cm⁻¹.
    pub fn sigma(&self, e_kev: f64) -> f64 {
        self.partial.iter().map(|p| self.interp(p, e_kev)).sum()
    }

    /// Macroscopic inelastic cross section, cm⁻¹.
    pub fn inelastic_sigma(&self, e_kev: f64) -> f64 {
        if e_kev <= INELASTIC_MIN_KEV {
            return 0.0;
        }
        self.interp(&self.inelastic, e_kev)
    }

    /// Pick a target nucleus ∝ its partial cross section; returns its mass in
    /// neutron masses.
    pub fn pick_target<R: Rng + ?Sized>(&self, e_kev: f64, rng: &mut R) -> f64 {
        let parts: Vec<f64> = self.partial.iter().map(|p| self.interp(p, e_kev)).collect();
        let total: f64 = parts.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (i, p) in parts.iter().enumerate() {
            if u < *p {
                return self.mass_numbers[i];
            }
            u -= p;
        }
        *self.mass_numbers.last().unwrap()
    }
}

/// Outcome of one elastic collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticScatter {
    pub recoil_kev: f64,
    pub energy_out_kev: f64,
    pub cos_lab: f64,
}

/// Isotropic centre-of-mass scatter off a nucleus of mass `a` (neutron masses).
pub fn elastic_kinematics(a: f64, e_kin_kev: f64, mu_cm: f64) -> ElasticScatter {
    let denom = (a + 1.0) * (a + 1.0);
    let s = a * a + 2.0 * a * mu_cm + 1.0;
    let e_out = e_kin_kev * s / denom;
    let cos_lab = if s > 0.0 {
        (1.0 + a * mu_cm) / s.sqrt()
    } else {
        1.0
    };
    ElasticScatter {
        recoil_kev: e_kin_kev - e_out,
        energy_out_kev: e_out,
        cos_lab: cos_lab.clamp(-1.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn hydrogen_reference_points() {
        assert!((elastic_barn(1, 1.008, 1000.0) - 4.26).abs() < 0.1);
        assert!((elastic_barn(1, 1.008, 14_000.0) - 0.69).abs() < 0.05);
    }

    #[test]
    fn heavy_nucleus_limits() {
        let lo = elastic_barn(14, 28.0855, 1.0);
        let r = 1.25 * 28.0855f64.cbrt();
        assert!((lo - 4.0 * std::f64::consts::PI * r * r * 1e-2).abs() < 1e-9);
        assert!(elastic_barn(14, 28.0855, 1e6) < lo);
    }

    #[test]
    fn silicon_inelastic_and_breakup_budget() {
        assert!((inelastic_barn(28.0855, 1e6) - 0.045 * 28.0855f64.powf(0.7)).abs() < 1e-12);
        assert_eq!(inelastic_barn(1.0, 1e6), 0.0);
        assert_eq!(inelastic_barn(28.0, 9_000.0), 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for e in [12_000.0, 40_000.0, 300_000.0, 5e6] {
            for _ in 0..200 {
                let b = sample_breakup(e, 0.5, &mut rng);
                let out: f64 = b.nucleons.iter().map(|n| n.1).sum();
                assert!((out + b.binding_kev + b.local_kev - e).abs() < 1e-6 * e);
                assert!(b.local_kev >= 0.0 && b.local_kev <= INELASTIC_MIN_KEV);
                assert!(b.nucleons.iter().all(|n| n.1 >= 0.0 && n.2.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn kinematic_extremes() {
        let a = 28.0;
        let back = elastic_kinematics(a, 1000.0, -1.0);
        assert!((back.recoil_kev / 1000.0 - 4.0 * a / ((a + 1.0) * (a + 1.0))).abs() < 1e-12);
        let fwd = elastic_kinematics(a, 1000.0, 1.0);
        assert!(fwd.recoil_kev.abs() < 1e-9);
        assert!((fwd.cos_lab - 1.0).abs() < 1e-12);
    }
}
