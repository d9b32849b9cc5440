//! Synthetic TKID readout: phase streams with two-exponential pulses and
//! Gaussian noise, IQ-arc conversion, level triggering, a noise-weighted
//! two-template amplitude fit and reduction to a calibrated spectrum.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::MaterialLibrary;
use crate::particle::{ParticleState, Species};
use crate::response::{ResponseError, TkidResolution, TkidResponseModel, CALIBRATION_LINE_KEV};
use crate::spectra::{BinningScheme, EnergySpectrum, SpectrumError};
use crate::transport::{transport_event, ChipSpec, LabSpec, TransportError, VolumeKind};

pub const SAMPLE_PERIOD_NS: f64 = 800.0;
const SAMPLE_PERIOD_US: f64 = SAMPLE_PERIOD_NS * 1e-3;
pub const SAMPLE_RATE_HZ: f64 = 1e9 / SAMPLE_PERIOD_NS;
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("invalid pulse parameter: {0}")]
    Parameter(String),
    #[error("template design is singular on the record grid")]
    SingularDesign,
    #[error("no calibration cluster near phase {0:.4} rad")]
    AnchorNotFound(f64),
    #[error("record has {got} samples, filter expects {want}")]
    RecordLength { got: usize, want: usize },
    #[error("stream file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Fast-to-slow amplitude ratio as a function of energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastRatioLaw {
    Constant(f64),
    /// ratio(E) = ratio_at_anchor · (E / 42.2 keV)^exponent
    PowerLaw {
        ratio_at_anchor: f64,
        exponent: f64,
    },
}

impl FastRatioLaw {
    pub fn ratio(&self, e_kev: f64) -> f64 {
        match *self {
            FastRatioLaw::Constant(r) => r,
            FastRatioLaw::PowerLaw {
                ratio_at_anchor,
                exponent,
            } => ratio_at_anchor * (e_kev.max(1e-3) / CALIBRATION_LINE_KEV).powf(exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseShapeParams {
    pub rise_us: f64,
    pub fast_us: f64,
    pub slow_us: f64,
    pub fast_ratio: FastRatioLaw,
}

impl Default for PulseShapeParams {
    fn default() -> Self {
        Self {
            rise_us: 2.0,
            fast_us: 60.0,
            slow_us: 240.0,
            fast_ratio: FastRatioLaw::Constant(0.35),
        }
    }
}

impl PulseShapeParams {
    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.rise_us > 0.0 && self.rise_us < self.fast_us && self.fast_us < self.slow_us) {
            return Err(PulseError::Parameter(format!(
                "need 0 < rise < fast < slow, got {} / {} / {} µs",
                self.rise_us, self.fast_us, self.slow_us
            )));
        }
        Ok(())
    }

    fn component(&self, tau_us: f64, t_us: f64) -> f64 {
        if t_us <= 0.0 {
            0.0
        } else {
            (-t_us / tau_us).exp() - (-t_us / self.rise_us).exp()
        }
    }

    /// Unit-amplitude fast shape at `t_us` after onset.
    pub fn fast(&self, t_us: f64) -> f64 {
        self.component(self.fast_us, t_us)
    }

    pub fn slow(&self, t_us: f64) -> f64 {
        self.component(self.slow_us, t_us)
    }

    /// Templates on an `n`-sample grid with onset at fractional sample
    /// `onset`.
    pub fn templates(&self, n: usize, onset: f64) -> (Vec<f64>, Vec<f64>) {
        let t = |i: usize| (i as f64 - onset) * SAMPLE_PERIOD_US;
        (
            (0..n).map(|i| self.fast(t(i))).collect(),
            (0..n).map(|i| self.slow(t(i))).collect(),
        )
    }
}

/// Stationary Gaussian phase noise given by a one-sided PSD (rad²/Hz),
/// interpolated log-log between table points and held flat outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    psd: Vec<(f64, f64)>,
}

impl NoiseModel {
    pub fn new(mut psd: Vec<(f64, f64)>) -> Result<Self, PulseError> {
        psd.sort_by(|a, b| a.0.total_cmp(&b.0));
        if psd.is_empty()
            || psd
                .iter()
                .any(|&(f, s)| !(f > 0.0 && f.is_finite() && s >= 0.0 && s.is_finite()))
        {
            return Err(PulseError::Parameter(
                "PSD needs positive frequencies and finite non-negative power".into(),
            ));
        }
        Ok(Self { psd })
    }

    /// White level `white` (rad²/Hz) with a 1/f rise below `corner_hz`.
    pub fn white_plus_flicker(white: f64, corner_hz: f64) -> Result<Self, PulseError> {
        let n = 241;
        let (lo, hi) = (0.1_f64.ln(), (SAMPLE_RATE_HZ / 2.0).ln());
        Self::new(
            (0..n)
                .map(|i| {
                    let f = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
                    (f, white * (1.0 + corner_hz / f))
                })
                .collect(),
        )
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.psd
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            psd: self.psd.iter().map(|&(f, s)| (f, s * factor)).collect(),
        }
    }

    pub fn density(&self, f: f64) -> f64 {
        let p = &self.psd;
        if f <= p[0].0 {
            return p[0].1;
        }
        if f >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let k = p.partition_point(|q| q.0 <= f);
        let (a, b) = (p[k - 1], p[k]);
        if a.1 <= 0.0 || b.1 <= 0.0 {
            let w = (f - a.0) / (b.0 - a.0);
            return a.1 + w * (b.1 - a.1);
        }
        let w = (f / a.0).ln() / (b.0 / a.0).ln();
        (a.1.ln() + w * (b.1 / a.1).ln()).exp()
    }

    /// Discrete one-sided spectrum on an `n`-point grid: power per line.
    fn line_powers(&self, n: usize) -> Vec<f64> {
        let df = SAMPLE_RATE_HZ / n as f64;
        (0..n)
            .map(|j| {
                if j == 0 || 2 * j >= n {
                    0.0
                } else {
                    self.density(j as f64 * df) * df
                }
            })
            .collect()
    }

    /// Per-sample RMS of a stream of `n` samples.
    pub fn rms(&self, n: usize) -> f64 {
        self.line_powers(n).iter().sum::<f64>().sqrt()
    }

    /// Autocovariance at lags 0..n, from the PSD on a fine frequency grid.
    pub fn autocovariance(&self, n: usize) -> Vec<f64> {
        let m = (8 * n).next_power_of_two().max(1 << 18);
        let mut buf: Vec<Complex64> = self
            .line_powers(m)
            .into_iter()
            .map(|p| Complex64::new(p, 0.0))
            .collect();
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        buf[..n].iter().map(|c| c.re).collect()
    }

    /// `n` samples of noise drawn by shaping white Gaussian Fourier
    /// coefficients.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        if n == 0 {
            return Vec::new();
        }
        let p = self.line_powers(n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..n {
            if 2 * j >= n {
                break;
            }
            let c = (p[j] * n as f64 * n as f64 / 4.0).sqrt();
            let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            buf[j] = Complex64::new(a * c, b * c);
            buf[n - j] = buf[j].conj();
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

/// Resonance circle in the complex transmission plane: θ maps to
/// center + radius·e^{i(offset + θ)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceArc {
    pub center: [f64; 2],
    pub radius: f64,
    pub phase_offset: f64,
}

impl Default for ResonanceArc {
    fn default() -> Self {
        Self {
            center: [0.5, 0.0],
            radius: 0.5,
            phase_offset: PI,
        }
    }
}

impl ResonanceArc {
    pub fn validate(&self) -> Result<(), PulseError> {
        if !(self.radius > 0.0) {
            return Err(PulseError::Parameter("arc radius must be positive".into()));
        }
        Ok(())
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let [x, y] = self.center;
        Self {
            center: [c * x - s * y, s * x + c * y],
            radius: self.radius,
            phase_offset: self.phase_offset + angle,
        }
    }
}

pub fn iq_project(theta: &[f64], arc: &ResonanceArc) -> (Vec<f64>, Vec<f64>) {
    theta
        .iter()
        .map(|&t| {
            let a = arc.phase_offset + t;
            (
                arc.center[0] + arc.radius * a.cos(),
                arc.center[1] + arc.radius * a.sin(),
            )
        })
        .unzip()
}

/// Angle around the arc centre relative to the offset, wrapped to (−π, π].
pub fn iq_to_phase(i: &[f64], q: &[f64], arc: &ResonanceArc) -> Vec<f64> {
    i.iter()
        .zip(q)
        .map(|(&x, &y)| {
            let a = (y - arc.center[1]).atan2(x - arc.center[0]) - arc.phase_offset;
            let w = a.rem_euclid(2.0 * PI);
            if w > PI {
                w - 2.0 * PI
            } else {
                w
            }
        })
        .collect()
}

/// Energy-to-amplitude chain for synthesis: TKID phase response plus an
/// extra Gaussian energy smearing that, together with the filter noise,
/// makes up the device resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseResponse {
    pub tkid: TkidResponseModel,
    pub target: TkidResolution,
    /// Energy resolution the noise alone gives after the filter, σ in keV.
    pub filter_sigma_kev: f64,
}

impl PulseResponse {
    pub fn noiseless(tkid: TkidResponseModel) -> Self {
        Self {
            tkid,
            target: TkidResolution::ConstantFwhm { fwhm_kev: 0.0 },
            filter_sigma_kev: 0.0,
        }
    }

    pub fn smearing_sigma(&self, e_kev: f64) -> f64 {
        (self.target.sigma(e_kev).powi(2) - self.filter_sigma_kev.powi(2))
            .max(0.0)
            .sqrt()
    }

    /// (fast, slow) phase amplitudes for a deposit.
    pub fn amplitudes<R: Rng + ?Sized>(
        &self,
        e_kev: f64,
        shape: &PulseShapeParams,
        rng: &mut R,
    ) -> Result<(f64, f64), PulseError> {
        let s = self.smearing_sigma(e_kev);
        let e = if s > 0.0 {
            e_kev + s * rng.sample::<f64, _>(StandardNormal)
        } else {
            e_kev
        };
        let e = e.clamp(0.0, crate::response::TKID_E_MAX_KEV);
        let a_s = self.tkid.forward(e)?;
        Ok((shape.fast_ratio.ratio(e) * a_s, a_s))
    }
}

/// Phase stream of `duration_s` with pulses at the given (time s, energy
/// keV) events, noise and an optional linear baseline drift (rad/s).
pub fn synthesize_stream<R: Rng + ?Sized>(
    events: &[(f64, f64)],
    shape: &PulseShapeParams,
    noise: Option<&NoiseModel>,
    response: &PulseResponse,
    duration_s: f64,
    drift_rad_per_s: f64,
    rng: &mut R,
) -> Result<Vec<f64>, PulseError> {
    shape.validate()?;
    if !(duration_s >= 0.0) {
        return Err(PulseError::Parameter(format!("duration {duration_s} s")));
    }
    let n = (duration_s * SAMPLE_RATE_HZ).round() as usize;
    let mut out = match noise {
        Some(m) => m.generate(n, rng),
        None => vec![0.0; n],
    };
    if drift_rad_per_s != 0.0 {
        for (i, v) in out.iter_mut().enumerate() {
            *v += drift_rad_per_s * i as f64 / SAMPLE_RATE_HZ;
        }
    }
    // pulses are negligible after this many slow decay times
    let tail = (shape.slow_us * 40.0 / SAMPLE_PERIOD_US).ceil() as usize;
    for &(t, e) in events {
        if !(0.0..=duration_s).contains(&t) {
            return Err(PulseError::Parameter(format!(
                "event time {t} s outside the stream"
            )));
        }
        let (af, a_s) = response.amplitudes(e, shape, rng)?;
        let onset = t * SAMPLE_RATE_HZ;
        let first = onset.ceil() as usize;
        for (i, v) in out.iter_mut().enumerate().skip(first).take(tail) {
            let dt = (i as f64 - onset) * SAMPLE_PERIOD_US;
            *v += af * shape.fast(dt) + a_s * shape.slow(dt);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub pre_samples: usize,
    pub post_samples: usize,
    pub consecutive: usize,
    pub threshold_sigma: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            pre_samples: 256,
            post_samples: 1792,
            consecutive: 4,
            threshold_sigma: 3.0,
        }
    }
}

impl TriggerConfig {
    pub fn record_len(&self) -> usize {
        self.pre_samples + self.post_samples
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecord {
    pub sample_period_ns: f64,
    pub pre_trigger: usize,
    pub samples: Vec<f64>,
    /// Stream index of the first sample of the qualifying run.
    pub trigger_index: usize,
    pub timestamp_s: f64,
    /// A second qualifying crossing fell inside the post-trigger window
    /// once the fitted pulse is removed; set by `OptimalFilter::fit_record`.
    pub pileup: bool,
}

fn qualifying_run(stream: &[f64], from: usize, to: usize, level: f64, k: usize) -> Option<usize> {
    let mut run = 0;
    for (i, &v) in stream.iter().enumerate().take(to).skip(from) {
        if v > level {
            run += 1;
            if run == k {
                return Some(i + 1 - k);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Cut records wherever `consecutive` samples in a row exceed
/// threshold_sigma·rms. Triggers too close to the stream ends to hold a
/// full record are dropped. The next search starts one record length
/// after a trigger.
pub fn trigger(
    stream: &[f64],
    rms: f64,
    cfg: &TriggerConfig,
) -> Result<Vec<PulseRecord>, PulseError> {
    if !(rms > 0.0) {
        return Err(PulseError::Parameter(format!(
            "rms must be positive, got {rms}"
        )));
    }
    if cfg.consecutive == 0 || cfg.record_len() == 0 {
        return Err(PulseError::Parameter(
            "trigger needs a run length and a record length".into(),
        ));
    }
    let level = cfg.threshold_sigma * rms;
    let len = cfg.record_len();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(i) = qualifying_run(stream, from, stream.len(), level, cfg.consecutive) {
        from = i + len;
        if i < cfg.pre_samples || i + cfg.post_samples > stream.len() {
            continue;
        }
        out.push(PulseRecord {
            sample_period_ns: SAMPLE_PERIOD_NS,
            pre_trigger: cfg.pre_samples,
            samples: stream[i - cfg.pre_samples..i + cfg.post_samples].to_vec(),
            trigger_index: i,
            timestamp_s: i as f64 / SAMPLE_RATE_HZ,
            pileup: false,
        });
    }
    Ok(out)
}

/// Solve T·x = b for symmetric positive-definite Toeplitz T with first
/// column `r` (Levinson recursion).
pub fn solve_toeplitz(r: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    if n == 0 {
        return Some(Vec::new());
    }
    if r.len() < n || !(r[0] > 0.0) {
        return None;
    }
    let mut f = vec![1.0 / r[0]];
    let mut x = vec![b[0] / r[0]];
    f.reserve(n);
    x.reserve(n);
    for k in 1..n {
        let ef: f64 = (0..k).map(|i| r[k - i] * f[i]).sum();
        let denom = 1.0 - ef * ef;
        if !(denom > 0.0) {
            return None;
        }
        let mut g = vec![0.0; k + 1];
        for i in 0..=k {
            let fwd = if i < k { f[i] } else { 0.0 };
            let bwd = if i > 0 { f[k - i] } else { 0.0 };
            g[i] = (fwd - ef * bwd) / denom;
        }
        f = g;
        let ex: f64 = (0..k).map(|i| r[k - i] * x[i]).sum();
        let c = b[k] - ex;
        x.push(0.0);
        for i in 0..=k {
            x[i] += c * f[k - i];
        }
    }
    Some(x)
}

/// Fitted amplitudes for one record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateFit {
    pub a_fast: f64,
    pub a_slow: f64,
    pub baseline: f64,
    /// GLS variance of `a_slow`.
    pub var_slow: f64,
    /// Template onset relative to the nominal trigger position, samples.
    pub shift: isize,
}

struct Design {
    shift: isize,
    fast: Vec<f64>,
    slow: Vec<f64>,
    // C⁻¹·[fast, slow, 1]
    weighted: [Vec<f64>; 3],
    cov: Matrix3<f64>,
}

/// Generalized least squares with the record-length noise covariance,
/// fitting fast and slow templates plus a constant. The constant makes the
/// amplitudes blind to the DC level. Template onset is chosen from a small
/// window of integer shifts by best fit.
pub struct OptimalFilter {
    n: usize,
    designs: Vec<Design>,
}

impl OptimalFilter {
    /// `onset` is the template start in samples from the record start for
    /// shift zero; shifts in `-max_shift..=max_shift` are tried.
    pub fn new(
        shape: &PulseShapeParams,
        noise: &NoiseModel,
        n: usize,
        onset: f64,
        max_shift: usize,
    ) -> Result<Self, PulseError> {
        shape.validate()?;
        let r = noise.autocovariance(n);
        let mut designs = Vec::new();
        for s in -(max_shift as isize)..=max_shift as isize {
            let (fast, slow) = shape.templates(n, onset + s as f64);
            Self::check_independent(&fast, &slow)?;
            let one = vec![1.0; n];
            let cols = [fast, slow, one];
            let weighted: Vec<Vec<f64>> = cols
                .iter()
                .map(|c| solve_toeplitz(&r, c).ok_or(PulseError::SingularDesign))
                .collect::<Result<_, _>>()?;
            let m = Matrix3::from_fn(|i, j| dot(&cols[i], &weighted[j]));
            let cov = m.try_inverse().ok_or(PulseError::SingularDesign)?;
            let [a, b, c]: [Vec<f64>; 3] = weighted.try_into().expect("three columns");
            let [fast, slow, _] = cols;
            designs.push(Design {
                shift: s,
                fast,
                slow,
                weighted: [a, b, c],
                cov,
            });
        }
        Ok(Self { n, designs })
    }

    /// Filter for a stream's trigger records, onset placed where the
    /// trigger normally fires relative to the pulse start.
    pub fn for_trigger(
        shape: &PulseShapeParams,
        noise: &NoiseModel,
        cfg: &TriggerConfig,
    ) -> Result<Self, PulseError> {
        Self::new(
            shape,
            noise,
            cfg.record_len(),
            cfg.pre_samples as f64 - 2.0,
            6,
        )
    }

    fn check_independent(a: &[f64], b: &[f64]) -> Result<(), PulseError> {
        let (aa, bb, ab) = (dot(a, a), dot(b, b), dot(a, b));
        if aa == 0.0 || bb == 0.0 || (aa * bb - ab * ab) <= 1e-12 * aa * bb {
            return Err(PulseError::SingularDesign);
        }
        Ok(())
    }

    pub fn record_len(&self) -> usize {
        self.n
    }

    /// GLS standard deviation of `a_slow`, radians.
    pub fn sigma_slow(&self) -> f64 {
        let mid = &self.designs[self.designs.len() / 2];
        mid.cov[(1, 1)].sqrt()
    }

    pub fn fit(&self, samples: &[f64]) -> Result<TemplateFit, PulseError> {
        if samples.len() != self.n {
            return Err(PulseError::RecordLength {
                got: samples.len(),
                want: self.n,
            });
        }
        let mut best: Option<(f64, TemplateFit)> = None;
        for d in &self.designs {
            let z = Vector3::new(
                dot(&d.weighted[0], samples),
                dot(&d.weighted[1], samples),
                dot(&d.weighted[2], samples),
            );
            let beta = d.cov * z;
            // yᵀC⁻¹y is common to all shifts, so the best fit maximizes βᵀz
            let explained = beta.dot(&z);
            let fit = TemplateFit {
                a_fast: beta[0],
                a_slow: beta[1],
                baseline: beta[2],
                var_slow: d.cov[(1, 1)],
                shift: d.shift,
            };
            if best.as_ref().is_none_or(|b| explained > b.0) {
                best = Some((explained, fit));
            }
        }
        Ok(best.expect("at least one design").1)
    }
}

impl OptimalFilter {
    /// Fit a trigger record and flag pile-up: a qualifying run in the
    /// residual after the trigger. Onset mismatch leaves a residual that
    /// scales with the pulse, so the level carries a 2% allowance on the
    /// fitted peak.
    pub fn fit_record(
        &self,
        rec: &mut PulseRecord,
        rms: f64,
        cfg: &TriggerConfig,
    ) -> Result<TemplateFit, PulseError> {
        let fit = self.fit(&rec.samples)?;
        let d = self
            .designs
            .iter()
            .find(|d| d.shift == fit.shift)
            .expect("fit shift comes from a design");
        let model = |i: usize| fit.a_fast * d.fast[i] + fit.a_slow * d.slow[i] + fit.baseline;
        let peak = (0..self.n)
            .map(|i| model(i) - fit.baseline)
            .fold(0.0, f64::max);
        let level = cfg.threshold_sigma * rms + 0.02 * peak;
        let resid: Vec<f64> = (0..self.n).map(|i| rec.samples[i] - model(i)).collect();
        let start = (rec.pre_trigger + cfg.consecutive).min(self.n);
        rec.pileup = qualifying_run(&resid, start, self.n, level, cfg.consecutive).is_some();
        Ok(fit)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fit one record against fast and slow templates already on its grid.
pub fn two_template_fit(
    rec: &PulseRecord,
    fast: &[f64],
    slow: &[f64],
    noise: &NoiseModel,
) -> Result<TemplateFit, PulseError> {
    let n = rec.samples.len();
    if fast.len() != n || slow.len() != n {
        return Err(PulseError::RecordLength {
            got: fast.len().min(slow.len()),
            want: n,
        });
    }
    OptimalFilter::check_independent(fast, slow)?;
    let r = noise.autocovariance(n);
    let one = vec![1.0; n];
    let cols = [fast, slow, one.as_slice()];
    let w: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| solve_toeplitz(&r, c).ok_or(PulseError::SingularDesign))
        .collect::<Result<_, _>>()?;
    let m = Matrix3::from_fn(|i, j| dot(cols[i], &w[j]));
    let cov = m.try_inverse().ok_or(PulseError::SingularDesign)?;
    let z = Vector3::new(
        dot(&w[0], &rec.samples),
        dot(&w[1], &rec.samples),
        dot(&w[2], &rec.samples),
    );
    let beta = cov * z;
    Ok(TemplateFit {
        a_fast: beta[0],
        a_slow: beta[1],
        baseline: beta[2],
        var_slow: cov[(1, 1)],
        shift: 0,
    })
}

/// Resolution σ in keV at `e_kev` implied by the filter noise alone.
pub fn filter_sigma_kev(
    filter: &OptimalFilter,
    tkid: &TkidResponseModel,
    e_kev: f64,
) -> Result<f64, PulseError> {
    let h = 1e-3 * e_kev.max(1.0);
    let slope = (tkid.forward(e_kev + h)? - tkid.forward((e_kev - h).max(0.0))?)
        / (e_kev + h - (e_kev - h).max(0.0));
    Ok(filter.sigma_slow() / slope)
}

/// Default noise for a device: white plus 1/f below 1 kHz, scaled so the
/// filter alone resolves the calibration line to `fwhm_kev`.
pub fn noise_for_filter_fwhm(
    shape: &PulseShapeParams,
    tkid: &TkidResponseModel,
    cfg: &TriggerConfig,
    fwhm_kev: f64,
) -> Result<NoiseModel, PulseError> {
    let unit = NoiseModel::white_plus_flicker(1e-12, 1000.0)?;
    let f = OptimalFilter::for_trigger(shape, &unit, cfg)?;
    let s = filter_sigma_kev(&f, tkid, CALIBRATION_LINE_KEV)?;
    let want = fwhm_kev / FWHM_PER_SIGMA;
    Ok(unit.scaled((want / s).powi(2)))
}

/// Where to look for the calibration cluster in fitted slow amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSearch {
    pub expected_theta: f64,
    /// Relative half-width of the search window around `expected_theta`.
    pub window: f64,
    pub min_events: usize,
}

impl Default for AnchorSearch {
    fn default() -> Self {
        Self {
            expected_theta: 0.05,
            window: 0.5,
            min_events: 20,
        }
    }
}

/// Centroid of the densest cluster of values within the search window:
/// start at the histogram mode, then iterate a ±2.5σ mean.
pub fn find_anchor(a_slow: &[f64], search: &AnchorSearch) -> Result<f64, PulseError> {
    let (lo, hi) = (
        search.expected_theta * (1.0 - search.window),
        search.expected_theta * (1.0 + search.window),
    );
    let mut inside: Vec<f64> = a_slow
        .iter()
        .copied()
        .filter(|v| (lo..=hi).contains(v))
        .collect();
    if inside.len() < search.min_events.max(2) {
        return Err(PulseError::AnchorNotFound(search.expected_theta));
    }
    inside.sort_by(f64::total_cmp);
    let nb = 40;
    let mut hist = vec![0usize; nb];
    for &v in &inside {
        hist[(((v - lo) / (hi - lo) * nb as f64) as usize).min(nb - 1)] += 1;
    }
    let mode = (0..nb).max_by_key(|&i| hist[i]).unwrap();
    let mut c = lo + (mode as f64 + 0.5) * (hi - lo) / nb as f64;
    let mut w = (hi - lo) / 4.0;
    for _ in 0..50 {
        let sel: Vec<f64> = inside
            .iter()
            .copied()
            .filter(|v| (v - c).abs() <= w)
            .collect();
        if sel.len() < 2 {
            break;
        }
        let m = sel.iter().sum::<f64>() / sel.len() as f64;
        let sd = (sel.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (sel.len() - 1) as f64).sqrt();
        let done = (m - c).abs() < 1e-12 * c.abs() && (2.5 * sd - w).abs() < 1e-9 * w;
        c = m;
        w = (2.5 * sd).max(1e-12);
        if done {
            break;
        }
    }
    Ok(c)
}

/// Calibrated spectrum from fitted records. Pile-up records are dropped.
/// Returns the spectrum and the anchor phase used.
pub fn reduce_to_spectrum(
    records: &[PulseRecord],
    fits: &[TemplateFit],
    tkid: &TkidResponseModel,
    search: &AnchorSearch,
    binning: &BinningScheme,
    livetime_s: f64,
) -> Result<(EnergySpectrum, Option<f64>), PulseError> {
    let mut spec = EnergySpectrum::new(binning.clone(), livetime_s)?;
    let good: Vec<f64> = records
        .iter()
        .zip(fits)
        .filter(|(r, _)| !r.pileup)
        .map(|(_, f)| f.a_slow)
        .collect();
    if good.is_empty() {
        return Ok((spec, None));
    }
    let anchor = find_anchor(&good, search)?;
    let top = tkid.forward(crate::response::TKID_E_MAX_KEV)?
        / (tkid.forward(CALIBRATION_LINE_KEV)? / anchor);
    for &a in &good {
        if a <= 0.0 || a > top {
            continue;
        }
        spec.accumulate(tkid.calibrate(a, (anchor, CALIBRATION_LINE_KEV))?, 1.0)?;
    }
    Ok((spec, Some(anchor)))
}

/// Check-source lines: the two K lines blended into the calibration peak.
pub const CHECK_SOURCE_LINES: [(f64, f64); 2] = [(41.0, 0.8), (47.0, 0.2)];

/// Reduction in full-energy island counts from a copper foil of
/// `foil_um` between a normal-incidence pencil beam and the chip, for
/// photons drawn from `lines` (keV, relative intensity). Only events where
/// a photon carries the energy into the island count.
pub fn foil_attenuation(
    lib: &MaterialLibrary,
    chip: &ChipSpec,
    foil_um: f64,
    lines: &[(f64, f64)],
    n_photons: u64,
    seed: u64,
) -> Result<f64, PulseError> {
    if lines.is_empty() || lines.iter().any(|&(e, w)| !(e > 0.0 && w >= 0.0)) {
        return Err(PulseError::Parameter(
            "check-source lines need positive energies and non-negative weights".into(),
        ));
    }
    let wsum: f64 = lines.iter().map(|l| l.1).sum();
    let count = |lid_mm: f64| -> Result<u64, PulseError> {
        let c = ChipSpec {
            lid_thickness_mm: lid_mm,
            lid_gap_mm: 0.5,
            ..*chip
        };
        let geom = LabSpec::bare().with_chip(lib, &c)?;
        let island = c.island_box();
        let z0 = c.top_cm() + 0.05 + 0.1 * lid_mm + 1.0;
        let mut hits = 0;
        for i in 0..n_photons {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let mut u = rng.random::<f64>() * wsum;
            let e = lines
                .iter()
                .find(|l| {
                    u -= l.1;
                    u < 0.0
                })
                .unwrap_or(&lines[lines.len() - 1])
                .0;
            let x =
                island.lo[0] + (island.hi[0] - island.lo[0]) * (0.25 + 0.5 * rng.random::<f64>());
            let y =
                island.lo[1] + (island.hi[1] - island.lo[1]) * (0.25 + 0.5 * rng.random::<f64>());
            let p = ParticleState {
                species: Species::Gamma,
                energy_kev: e,
                direction: [0.0, 0.0, -1.0],
                position_cm: [x, y, z0],
                weight: 1.0,
            };
            let r = transport_event(&p, i, &geom, &mut rng);
            // photoelectrons knocked out of the foil are not line counts
            if r.deposit(VolumeKind::Island) >= 0.95 * e
                && r.incident[VolumeKind::Island.index()] == Some(Species::Gamma)
            {
                hits += 1;
            }
        }
        Ok(hits)
    };
    let open = count(0.0)?;
    let covered = count(foil_um * 1e-3)?;
    if covered == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(open as f64 / covered as f64)
}

/// Raw stream file: the text line `sample_period_ns=800` then the samples
/// as little-endian f32.
pub fn write_stream<W: Write>(mut w: W, stream: &[f64]) -> Result<(), PulseError> {
    writeln!(w, "sample_period_ns={}", SAMPLE_PERIOD_NS)?;
    for &v in stream {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_stream<R: BufRead>(mut r: R) -> Result<Vec<f64>, PulseError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let period: f64 = header
        .trim()
        .strip_prefix("sample_period_ns=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| PulseError::Format(format!("bad header {:?}", header.trim())))?;
    if period != SAMPLE_PERIOD_NS {
        return Err(PulseError::Format(format!(
            "sample period {period} ns, expected {SAMPLE_PERIOD_NS}"
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(PulseError::Format("trailing partial sample".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// One CSV row per record: trigger index, timestamp, pile-up flag and the
/// fitted amplitudes.
pub fn records_to_csv(records: &[PulseRecord], fits: &[TemplateFit]) -> String {
    let mut s = String::from("trigger_index,timestamp_s,pileup,a_fast,a_slow,baseline,shift\n");
    for (r, f) in records.iter().zip(fits) {
        s.push_str(&format!(
            "{},{:.9},{},{:.9e},{:.9e},{:.9e},{}\n",
            r.trigger_index, r.timestamp_s, r.pileup as u8, f.a_fast, f.a_slow, f.baseline, f.shift
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn white(level: f64) -> NoiseModel {
        NoiseModel::new(vec![(1.0, level), (SAMPLE_RATE_HZ, level)]).unwrap()
    }

    #[test]
    fn empty_quiet_stream_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = synthesize_stream(
            &[],
            &PulseShapeParams::default(),
            None,
            &PulseResponse::noiseless(TkidResponseModel::default()),
            0.01,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s.len(), 12_500);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pulse_peaks_at_closed_form_time() {
        let shape = PulseShapeParams {
            fast_ratio: FastRatioLaw::Constant(0.0),
            ..Default::default()
        };
        // single exponential pair peaks where d/dt vanishes
        let (r, s) = (shape.rise_us, shape.slow_us);
        let t_peak = (s / r).ln() * r * s / (s - r);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t0 = 1e-3;
        let st = synthesize_stream(
            &[(t0, 100.0)],
            &shape,
            None,
            &PulseResponse::noiseless(TkidResponseModel::default()),
            0.005,
            0.0,
            &mut rng,
        )
        .unwrap();
        let imax = (0..st.len())
            .max_by(|&a, &b| st[a].total_cmp(&st[b]))
            .unwrap();
        let t_max = imax as f64 * SAMPLE_PERIOD_US - t0 * 1e6;
        assert!(
            (t_max - t_peak).abs() <= SAMPLE_PERIOD_US,
            "{t_max} vs {t_peak}"
        );
        // brute-force check of the closed form on a fine grid
        let fine = (1..200_000)
            .map(|i| i as f64 * 1e-4)
            .max_by(|a, b| shape.slow(*a).total_cmp(&shape.slow(*b)))
            .unwrap();
        assert!((fine - t_peak).abs() < 2e-4);
    }

    #[test]
    fn noise_rms_matches_psd() {
        let m = NoiseModel::white_plus_flicker(1e-9, 1000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1 << 20;
        let x = m.generate(n, &mut rng);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!((rms / m.rms(n) - 1.0).abs() < 0.02, "{rms} {}", m.rms(n));
    }

    #[test]
    fn autocovariance_zero_lag_is_variance() {
        let m = white(2e-10);
        let r = m.autocovariance(16);
        let var = 2e-10 * SAMPLE_RATE_HZ / 2.0;
        assert!((r[0] / var - 1.0).abs() < 1e-4);
        assert!(r[1].abs() < 1e-4 * var);
    }

    #[test]
    fn iq_basics() {
        let arc = ResonanceArc::default();
        let (i, q) = iq_project(&[0.0], &arc);
        assert!((i[0] - (arc.center[0] + arc.radius * arc.phase_offset.cos())).abs() < 1e-15);
        assert!((q[0] - (arc.center[1] + arc.radius * arc.phase_offset.sin())).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn iq_round_trip_and_rotation(th in proptest::collection::vec(-3.0f64..3.0, 1..50), rot in -6.0f64..6.0, cx in -1.0f64..1.0, r in 0.1f64..2.0) {
            let arc = ResonanceArc { center: [cx, 0.3], radius: r, phase_offset: 0.7 };
            let (i, q) = iq_project(&th, &arc);
            let back = iq_to_phase(&i, &q, &arc);
            for (a, b) in th.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let ra = arc.rotated(rot);
            let (s, c) = rot.sin_cos();
            let i2: Vec<f64> = i.iter().zip(&q).map(|(x, y)| c * x - s * y).collect();
            let q2: Vec<f64> = i.iter().zip(&q).map(|(x, y)| s * x + c * y).collect();
            let back2 = iq_to_phase(&i2, &q2, &ra);
            for (a, b) in back.iter().zip(&back2) {
                let d = (a - b).rem_euclid(2.0 * PI);
                prop_assert!(d.min(2.0 * PI - d) < 1e-9);
            }
        }

        #[test]
        fn toeplitz_solve_matches_dense(n in 1usize..30, decay in 0.05f64..0.9, seed in 0u64..1000) {
            let r: Vec<f64> = (0..n).map(|k| decay.powi(k as i32)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = solve_toeplitz(&r, &b).unwrap();
            for i in 0..n {
                let lhs: f64 = (0..n).map(|j| r[i.abs_diff(j)] * x[j]).sum();
                prop_assert!((lhs - b[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trigger_thresholds() {
        let shape = PulseShapeParams::default();
        let tkid = TkidResponseModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = synthesize_stream(
            &[(0.001, 42.2)],
            &shape,
            None,
            &PulseResponse::noiseless(tkid),
            0.005,
            0.0,
            &mut rng,
        )
        .unwrap();
        let peak = st.iter().cloned().fold(0.0, f64::max);
        assert_eq!(
            trigger(&st, peak / 10.0, &TriggerConfig::default())
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            trigger(&st, peak / 2.0, &TriggerConfig::default())
                .unwrap()
                .len(),
            0
        );
        assert!(trigger(&st, 0.0, &TriggerConfig::default()).is_err());
    }

    #[test]
    fn false_trigger_rate_matches_run_probability() {
        let cfg = TriggerConfig {
            pre_samples: 8,
            post_samples: 24,
            consecutive: 4,
            threshold_sigma: 1.0,
        };
        let m = white(1e-8);
        let n = 2_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = m.generate(n, &mut rng);
        let got = trigger(&x, m.rms(n), &cfg).unwrap().len() as f64;
        // brute-force oracle: same rule on independent Gaussian draws
        let mut orng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<f64> = (0..n).map(|_| orng.sample(StandardNormal)).collect();
        let want = trigger(&y, 1.0, &cfg).unwrap().len() as f64;
        assert!(want > 200.0);
        assert!(
            (got - want).abs() < 4.0 * (want + got).sqrt(),
            "{got} vs {want}"
        );
    }

    #[test]
    fn noiseless_fit_is_exact_and_dc_blind() {
        let shape = PulseShapeParams::default();
        let n = 512;
        let (f, s) = shape.templates(n, 40.0);
        let (af, a_s, b) = (0.0123, 0.0456, -0.3);
        let samples: Vec<f64> = (0..n).map(|i| af * f[i] + a_s * s[i] + b).collect();
        let rec = PulseRecord {
            sample_period_ns: SAMPLE_PERIOD_NS,
            pre_trigger: 40,
            samples,
            trigger_index: 40,
            timestamp_s: 0.0,
            pileup: false,
        };
        let noise = NoiseModel::white_plus_flicker(1e-10, 1000.0).unwrap();
        let fit = two_template_fit(&rec, &f, &s, &noise).unwrap();
        assert!(
            (fit.a_fast - af).abs() < 1e-9 * af && (fit.a_slow - a_s).abs() < 1e-9 * a_s,
            "{fit:?}"
        );
        let shifted = PulseRecord {
            samples: rec.samples.iter().map(|v| v + 17.5).collect(),
            ..rec.clone()
        };
        let fit2 = two_template_fit(&shifted, &f, &s, &noise).unwrap();
        assert!(((fit2.a_slow - fit.a_slow) / fit.a_slow).abs() < 1e-9);
        assert!(matches!(
            two_template_fit(&rec, &s, &s, &noise),
            Err(PulseError::SingularDesign)
        ));
    }

    #[test]
    fn white_noise_ensemble_unbiased_with_gls_variance() {
        let shape = PulseShapeParams::default();
        let n = 512;
        let noise = white(1e-10);
        let filter = OptimalFilter::new(&shape, &noise, n, 40.0, 0).unwrap();
        let (f, s) = shape.templates(n, 40.0);
        let a_s = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 2000;
        let est: Vec<f64> = (0..k)
            .map(|_| {
                let x = noise.generate(n, &mut rng);
                let y: Vec<f64> = (0..n)
                    .map(|i| x[i] + 0.35 * a_s * f[i] + a_s * s[i])
                    .collect();
                filter.fit(&y).unwrap().a_slow
            })
            .collect();
        let mean = est.iter().sum::<f64>() / k as f64;
        let var = est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let pred = filter.sigma_slow().powi(2);
        assert!(
            (mean - a_s).abs() < 3.0 * (pred / k as f64).sqrt(),
            "{mean}"
        );
        assert!((var / pred - 1.0).abs() < 0.1, "{var} {pred}");
    }

    #[test]
    fn stream_file_round_trip() {
        let x = vec![0.0, 1.5, -2.25, 1e-3];
        let mut buf = Vec::new();
        write_stream(&mut buf, &x).unwrap();
        assert!(buf.starts_with(b"sample_period_ns=800\n"));
        assert_eq!(buf.len(), 21 + 16);
        let back = read_stream(&buf[..]).unwrap();
        assert_eq!(back, x.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>());
        assert!(read_stream(&b"sample_period_ns=400\n"[..]).is_err());
    }

    #[test]
    fn empty_records_give_empty_spectrum() {
        let (s, a) = reduce_to_spectrum(
            &[],
            &[],
            &TkidResponseModel::default(),
            &AnchorSearch::default(),
            &BinningScheme::piecewise(),
            1.0,
        )
        .unwrap();
        assert_eq!(s.total(), 0.0);
        assert!(a.is_none());
    }

    #[test]
    fn shape_rejects_bad_ordering() {
        assert!(PulseShapeParams {
            rise_us: 70.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
