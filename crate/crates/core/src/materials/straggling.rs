use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use super::stopping::{kinematics, max_transfer_kev, BETHE_K};
use super::{Material, MaterialError};
use crate::particle::{Species, ELECTRON_MASS_KEV};

/// Location of the maximum of the standard Landau density.
pub const LANDAU_MODE: f64 = -0.222_78;

/// Soft collisions are truncated here; harder transfers become explicit
/// knock-on electrons.
pub const DELTA_CUT_KEV: f64 = 100.0;

/// Standard Landau variate via the Chambers-Mallows-Stuck construction for a
/// totally skewed stable law with α = 1.
pub fn sample_landau<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
        let w: f64 = Exp1.sample(rng);
        let a = FRAC_PI_2 + v;
        if a <= 1e-300 || w <= 0.0 {
            continue;
        }
        let x = a * v.tan() - (w * v.cos() / a).ln();
        if x.is_finite() {
            return x;
        }
    }
}

/// Thin-absorber Landau parameters for a traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauParams {
    pub xi_kev: f64,
    pub mpv_kev: f64,
}

pub fn landau_params(
    mat: &Material,
    species: Species,
    e_kin_kev: f64,
    path_cm: f64,
) -> LandauParams {
    let m = species.mass_kev();
    let k = kinematics(m, e_kin_kev);
    let z2 = (species.charge() as f64).powi(2);
    let xi_kev = 0.5 * BETHE_K * z2 * mat.z_over_a() * mat.density() * path_cm / k.beta2 * 1e3;
    let i_kev = mat.stopping_params().mean_excitation_ev * 1e-3;
    let delta = mat.stopping_params().density_effect(k.beta_gamma);
    let bracket = (2.0 * ELECTRON_MASS_KEV * k.beta_gamma * k.beta_gamma / i_kev).ln()
        + (xi_kev / i_kev).ln()
        + 0.200
        - k.beta2
        - delta;
    LandauParams {
        xi_kev,
        mpv_kev: xi_kev * bracket,
    }
}

/// Energy lost by a charged particle over `path_cm`: a Landau sample in the
/// thin-absorber regime, the continuous-slowing-down mean otherwise.
pub fn straggled_loss<R: Rng + ?Sized>(
    mat: &Material,
    species: Species,
    e_kin_kev: f64,
    path_cm: f64,
    rng: &mut R,
) -> Result<f64, MaterialError> {
    if species.charge() == 0 {
        return Err(MaterialError::UnsupportedSpecies(species));
    }
    if path_cm <= 0.0 {
        return Ok(0.0);
    }
    let mean = e_kin_kev - mat.energy_after(species, e_kin_kev, path_cm)?;
    if mean >= 0.1 * e_kin_kev {
        return Ok(mean.clamp(0.0, e_kin_kev));
    }
    let p = landau_params(mat, species, e_kin_kev, path_cm);
    let lambda = sample_landau(rng);
    Ok((p.mpv_kev + p.xi_kev * (lambda - LANDAU_MODE)).clamp(0.0, e_kin_kev))
}

/// Loss split into a truncated soft part and individual hard knock-on
/// electrons that the caller transports.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinLoss {
    pub soft_kev: f64,
    pub deltas_kev: Vec<f64>,
}

impl ThinLoss {
    pub fn total(&self) -> f64 {
        self.soft_kev + self.deltas_kev.iter().sum::<f64>()
    }
}

pub fn sample_thin_loss<R: Rng + ?Sized>(
    mat: &Material,
    species: Species,
    e_kin_kev: f64,
    path_cm: f64,
    rng: &mut R,
) -> ThinLoss {
    let p = landau_params(mat, species, e_kin_kev, path_cm);
    let tmax = max_transfer_kev(species, e_kin_kev);
    let cut = DELTA_CUT_KEV.min(tmax).max(p.xi_kev);
    let lambda_cut = cut / p.xi_kev + LANDAU_MODE;
    let soft = loop {
        let l = sample_landau(rng);
        if l <= lambda_cut {
            break (p.mpv_kev + p.xi_kev * (l - LANDAU_MODE)).max(0.0);
        }
    };
    let mut deltas = Vec::new();
    if tmax > cut {
        let nu = p.xi_kev * (1.0 / cut - 1.0 / tmax);
        if nu > 0.0 {
            let n = Poisson::new(nu)
                .map(|d| d.sample(rng) as usize)
                .unwrap_or(0);
            for _ in 0..n {
                let u: f64 = rng.random();
                deltas.push(1.0 / (1.0 / cut - u * (1.0 / cut - 1.0 / tmax)));
            }
        }
    }
    let mut out = ThinLoss {
        soft_kev: soft,
        deltas_kev: deltas,
    };
    // never lose more than the particle has
    let total = out.total();
    if total > e_kin_kev {
        let f = e_kin_kev / total;
        out.soft_kev *= f;
        out.deltas_kev.iter_mut().for_each(|d| *d *= f);
    }
    out
}

/// Polar-angle cosine of a knock-on electron of kinetic energy `t_kev`.
pub fn delta_cos_theta(species: Species, e_kin_kev: f64, t_kev: f64) -> f64 {
    let m = species.mass_kev();
    let e_tot = e_kin_kev + m;
    let p = (e_kin_kev * (e_kin_kev + 2.0 * m)).sqrt();
    let p_delta = (t_kev * (t_kev + 2.0 * ELECTRON_MASS_KEV)).sqrt();
    (t_kev * (e_tot + ELECTRON_MASS_KEV) / (p_delta * p)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Landau density by direct numerical integration of its Laplace
    /// representation, p(λ) = (1/π) ∫ exp(-t ln t - λ t) sin(π t) dt.
    fn landau_pdf(lambda: f64) -> f64 {
        let n = 200_000;
        let t_max = 60.0;
        let h = t_max / n as f64;
        let mut acc = 0.0;
        for i in 1..n {
            let t = i as f64 * h;
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * (-t * t.ln() - lambda * t).exp() * (std::f64::consts::PI * t).sin();
        }
        acc * h / 3.0 / std::f64::consts::PI
    }

    #[test]
    fn sampler_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400_000;
        let (lo, hi, bins) = (-3.0, 9.0, 24);
        let w = (hi - lo) / bins as f64;
        let mut hist = vec![0usize; bins];
        for _ in 0..n {
            let x = sample_landau(&mut rng);
            if x >= lo && x < hi {
                hist[((x - lo) / w) as usize] += 1;
            }
        }
        for (i, &c) in hist.iter().enumerate() {
            let a = lo + i as f64 * w;
            // Simpson over the bin
            let p = (landau_pdf(a) + 4.0 * landau_pdf(a + 0.5 * w) + landau_pdf(a + w)) / 6.0 * w;
            let expect = p * n as f64;
            let sigma = expect.sqrt().max(1.0);
            assert!(
                ((c as f64) - expect).abs() < 5.0 * sigma,
                "bin {i}: {c} vs {expect}"
            );
        }
    }

    #[test]
    fn density_mode_location() {
        let mut best = (f64::MIN, 0.0);
        let mut l = -0.5;
        while l < 0.1 {
            let p = landau_pdf(l);
            if p > best.0 {
                best = (p, l);
            }
            l += 0.002;
        }
        assert!((best.1 - LANDAU_MODE).abs() < 0.005);
        assert!((best.0 - 0.1807).abs() < 0.001);
    }

    #[test]
    fn delta_angle_limits() {
        let c = delta_cos_theta(Species::MuMinus, 4e6, 1000.0);
        assert!((c - (1000.0f64 / 2021.998).sqrt()).abs() < 0.01);
        assert!(delta_cos_theta(Species::MuMinus, 4e6, 10.0) < 0.2);
    }
}
