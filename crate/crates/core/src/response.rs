//! Detector response: NaI resolution, TKID nonlinearity and calibration,
//! and coupling of frame deposits into the island signal.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::spectra::{EnergySpectrum, SpectrumError};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
/// Boltzmann constant, eV/K.
const K_B_EV: f64 = 8.617_333_262e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ResponseError {
    #[error("resolution scale must be positive, got {0}")]
    BadScale(f64),
    #[error(
        "bins near {energy_kev:.1} keV are wider than twice the resolution σ = {sigma_kev:.2} keV"
    )]
    CoarseBinning { energy_kev: f64, sigma_kev: f64 },
    #[error("energy {0} keV outside the TKID model range [0, 20000] keV")]
    EnergyOutOfRange(f64),
    #[error("phase {0} rad outside the invertible range")]
    PhaseOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Gaussian NaI resolution with σ(E) = A·√E, keV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiResolution {
    scale: f64,
}

impl NaiResolution {
    pub fn new(scale: f64) -> Result<Self, ResponseError> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(ResponseError::BadScale(scale));
        }
        Ok(Self { scale })
    }

    pub fn from_fwhm_at(fwhm_kev: f64, e_kev: f64) -> Result<Self, ResponseError> {
        Self::new(fwhm_kev / FWHM_PER_SIGMA / e_kev.sqrt())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sigma(&self, e_kev: f64) -> f64 {
        self.scale * e_kev.max(0.0).sqrt()
    }

    pub fn fwhm(&self, e_kev: f64) -> f64 {
        FWHM_PER_SIGMA * self.sigma(e_kev)
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Convolve a spectrum with the energy-dependent Gaussian. Each bin's
/// content is spread from its centre and the kernel is renormalised over the
/// binning range, so total in-range counts are preserved exactly.
pub fn nai_smear(
    spec: &EnergySpectrum,
    res: &NaiResolution,
) -> Result<EnergySpectrum, ResponseError> {
    let b = spec.binning();
    if res.scale() == 0.0 {
        return Ok(spec.clone());
    }
    let edges = b.edges();
    let n = b.n_bins();
    let counts = spec.counts();
    for i in 0..n {
        let s = res.sigma(b.center(i));
        if counts[i] != 0.0 && s < 0.5 * b.width(i) {
            return Err(ResponseError::CoarseBinning {
                energy_kev: b.center(i),
                sigma_kev: s,
            });
        }
    }
    let mut out = vec![0.0; n];
    let mut cdf = vec![0.0; n + 1];
    for i in 0..n {
        let c = counts[i];
        if c == 0.0 {
            continue;
        }
        let mu = b.center(i);
        let s = res.sigma(mu);
        // only bins within 8σ carry weight
        let lo = edges
            .partition_point(|&e| e < mu - 8.0 * s)
            .saturating_sub(1);
        let hi = (edges.partition_point(|&e| e <= mu + 8.0 * s) + 1).min(n + 1);
        for k in lo..hi {
            cdf[k] = normal_cdf((edges[k] - mu) / s);
        }
        let norm = cdf[hi - 1] - cdf[lo];
        if norm <= 0.0 {
            out[i] += c;
            continue;
        }
        for k in lo..hi - 1 {
            out[k] += c * (cdf[k + 1] - cdf[k]) / norm;
        }
    }
    Ok(EnergySpectrum::from_counts(
        b.clone(),
        out,
        spec.livetime(),
    )?)
}

/// Heat capacity C(T) = c₃·T³ of the island, quasiparticle density
/// n ∝ √T·exp(−Δ/kT) of the resonator film.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TkidResponseModel {
    pub t0_k: f64,
    pub tc_k: f64,
    /// keV/K⁴
    pub c3_kev_per_k4: f64,
    /// Radians per unit of normalised quasiparticle density.
    pub responsivity: f64,
}

pub const TKID_E_MAX_KEV: f64 = 20_000.0;
pub const CALIBRATION_LINE_KEV: f64 = 42.2;

impl Default for TkidResponseModel {
    fn default() -> Self {
        Self::with_excursion(0.175, 0.85, 10_000.0, 0.01, 0.05)
    }
}

impl TkidResponseModel {
    /// Choose c₃ so an event of `e_top_kev` heats the island by the fraction
    /// `dt_frac` of T₀, and the responsivity so 42.2 keV reads `theta_ref`.
    pub fn with_excursion(
        t0_k: f64,
        tc_k: f64,
        e_top_kev: f64,
        dt_frac: f64,
        theta_ref: f64,
    ) -> Self {
        let t1 = t0_k * (1.0 + dt_frac);
        let c3 = 4.0 * e_top_kev / (t1.powi(4) - t0_k.powi(4));
        let mut m = Self {
            t0_k,
            tc_k,
            c3_kev_per_k4: c3,
            responsivity: 1.0,
        };
        m.responsivity = theta_ref / m.raw(CALIBRATION_LINE_KEV);
        m
    }

    pub fn gap_ev(&self) -> f64 {
        1.76 * K_B_EV * self.tc_k
    }

    fn n_qp(&self, t: f64) -> f64 {
        let d = self.gap_ev();
        let d0 = d / (K_B_EV * self.t0_k);
        // normalised to n(T₀) = 1
        (t / self.t0_k).sqrt() * (d0 - d / (K_B_EV * t)).exp()
    }

    /// Final temperature after depositing `e_kev`; ∫C dT = E with C = c₃T³.
    pub fn temperature_after(&self, e_kev: f64) -> f64 {
        (self.t0_k.powi(4) + 4.0 * e_kev / self.c3_kev_per_k4).powf(0.25)
    }

    fn raw(&self, e_kev: f64) -> f64 {
        self.n_qp(self.temperature_after(e_kev)) - 1.0
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        let ok = self.t0_k > 0.0
            && self.tc_k > self.t0_k
            && self.c3_kev_per_k4 > 0.0
            && self.responsivity > 0.0;
        if !ok {
            return Err(ResponseError::Parameter(
                "TKID model needs 0 < T0 < Tc and positive c3 and responsivity".into(),
            ));
        }
        Ok(())
    }

    /// Phase response, radians.
    pub fn forward(&self, e_kev: f64) -> Result<f64, ResponseError> {
        if !(0.0..=TKID_E_MAX_KEV).contains(&e_kev) {
            return Err(ResponseError::EnergyOutOfRange(e_kev));
        }
        Ok(self.responsivity * self.raw(e_kev))
    }

    fn invert(&self, theta: f64) -> Result<f64, ResponseError> {
        let top = self.forward(TKID_E_MAX_KEV)?;
        if !(theta >= 0.0 && theta <= top) {
            return Err(ResponseError::PhaseOutOfRange(theta));
        }
        let (mut lo, mut hi) = (0.0, TKID_E_MAX_KEV);
        // Newton with bisection safeguard
        let mut e = theta / self.forward(CALIBRATION_LINE_KEV)? * CALIBRATION_LINE_KEV;
        for _ in 0..200 {
            e = e.clamp(lo, hi);
            let f = self.forward(e)? - theta;
            if f > 0.0 {
                hi = e;
            } else {
                lo = e;
            }
            let h = 1e-6 * e.max(1.0);
            let df = (self.forward((e + h).min(TKID_E_MAX_KEV))?
                - self.forward((e - h).max(0.0))?)
                / ((e + h).min(TKID_E_MAX_KEV) - (e - h).max(0.0));
            let next = if df > 0.0 {
                e - f / df
            } else {
                0.5 * (lo + hi)
            };
            let next = if next <= lo || next >= hi {
                0.5 * (lo + hi)
            } else {
                next
            };
            if (next - e).abs() <= 1e-14 * e.max(1e-3) || hi - lo < 1e-13 * hi.max(1.0) {
                return Ok(next);
            }
            e = next;
        }
        Ok(e)
    }

    /// Energy estimate for `theta`, with the forward map rescaled so that
    /// `anchor.0` maps exactly to `anchor.1` keV.
    pub fn calibrate(&self, theta: f64, anchor: (f64, f64)) -> Result<f64, ResponseError> {
        let (theta_ref, e_ref) = anchor;
        if !(theta_ref > 0.0) {
            return Err(ResponseError::PhaseOutOfRange(theta_ref));
        }
        let gain = self.forward(e_ref)? / theta_ref;
        if theta == theta_ref {
            return Ok(e_ref);
        }
        self.invert(theta * gain)
    }
}

/// TKID energy resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TkidResolution {
    ConstantFwhm { fwhm_kev: f64 },
    FractionalFwhm { fraction: f64 },
}

impl TkidResolution {
    /// Default for a substrate of the given thickness.
    pub fn for_thickness(thickness_um: f64) -> Self {
        TkidResolution::ConstantFwhm {
            fwhm_kev: if thickness_um >= 1000.0 { 10.0 } else { 20.0 },
        }
    }

    pub fn sigma(&self, e_kev: f64) -> f64 {
        match *self {
            TkidResolution::ConstantFwhm { fwhm_kev } => fwhm_kev / FWHM_PER_SIGMA,
            TkidResolution::FractionalFwhm { fraction } => fraction * e_kev / FWHM_PER_SIGMA,
        }
    }

    pub fn smear<R: Rng + ?Sized>(&self, e_kev: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        e_kev + self.sigma(e_kev) * z
    }
}

/// Fraction of a frame deposit that appears in the island signal. Highest at
/// the four legs joining the island to the frame and falling exponentially
/// to a far-field floor; zero outside the frame ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameCouplingModel {
    pub leg_coupling: f64,
    pub far_coupling: f64,
    pub decay_length_mm: f64,
    pub inner_half_mm: f64,
    pub outer_half_mm: f64,
}

impl Default for FrameCouplingModel {
    fn default() -> Self {
        Self {
            leg_coupling: 0.5,
            far_coupling: 0.03,
            decay_length_mm: 2.0,
            inner_half_mm: 3.0,
            outer_half_mm: 5.83,
        }
    }
}

impl FrameCouplingModel {
    pub fn validate(&self) -> Result<(), ResponseError> {
        let ok = (0.0..=1.0).contains(&self.leg_coupling)
            && (0.0..=self.leg_coupling).contains(&self.far_coupling)
            && self.decay_length_mm > 0.0
            && self.inner_half_mm > 0.0
            && self.outer_half_mm > self.inner_half_mm;
        if !ok {
            return Err(ResponseError::Parameter(
                "frame coupling needs 0 ≤ far ≤ leg ≤ 1, positive decay length and inner < outer"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Effective frame area, mm².
    pub fn area_mm2(&self) -> f64 {
        4.0 * (self.outer_half_mm.powi(2) - self.inner_half_mm.powi(2))
    }

    /// Coupling versus distance from the nearest leg.
    pub fn coupling_at_distance(&self, d_mm: f64) -> f64 {
        self.far_coupling
            + (self.leg_coupling - self.far_coupling)
                * (-d_mm.max(0.0) / self.decay_length_mm).exp()
    }

    pub fn legs_mm(&self) -> [[f64; 2]; 4] {
        let a = self.inner_half_mm;
        [[0.0, a], [0.0, -a], [a, 0.0], [-a, 0.0]]
    }

    /// Coupling at a chip-plane position given in cm.
    pub fn coupling(&self, xy_cm: [f64; 2]) -> f64 {
        let (x, y) = (xy_cm[0] * 10.0, xy_cm[1] * 10.0);
        let m = x.abs().max(y.abs());
        if m < self.inner_half_mm || m > self.outer_half_mm {
            return 0.0;
        }
        let d = self
            .legs_mm()
            .iter()
            .map(|l| ((x - l[0]).powi(2) + (y - l[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        self.coupling_at_distance(d)
    }

    /// Apparent island energy from a frame deposit.
    pub fn couple(&self, deposit_kev: f64, xy_cm: [f64; 2]) -> f64 {
        deposit_kev * self.coupling(xy_cm)
    }
}
