//! Source-intensity fits to NaI spectra: decay-segment activities plus the
//! resolution scale from the gamma region, cosmic group scales from the
//! region above the terrestrial endpoint.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::response::{nai_smear, NaiResolution, ResponseError};
use crate::sources::Segment;
use crate::spectra::{BinningScheme, EnergySpectrum, SpectrumError};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit window [{0}, {1}] keV holds no bins of the data")]
    EmptyWindow(f64, f64),
    #[error("template for {0} is empty inside the fit window")]
    DegenerateTemplate(String),
    #[error("missing template for segment {0}")]
    MissingTemplate(Segment),
    #[error("spectra do not share a binning")]
    BinningMismatch,
    #[error("optimizer did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("curvature matrix at the optimum is singular")]
    Singular,
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// Poisson deviance 2Σ[μ − n + n·ln(n/μ)] of expected counts `mu` against
/// observed `n`.
pub fn poisson_deviance(n: &[f64], mu: &[f64]) -> f64 {
    n.iter()
        .zip(mu)
        .map(|(&n, &m)| {
            let m = m.max(1e-300);
            if n > 0.0 {
                m - n + n * (n / m).ln()
            } else {
                m
            }
        })
        .sum::<f64>()
        * 2.0
}

/// Bounded Nelder–Mead. Points are clipped into `[lo, hi]` before every
/// evaluation, so the simplex never leaves the box.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter below this (in the caller's units).
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            f_tol: 1e-9,
            x_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn clip(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

impl NelderMead {
    pub fn minimize(
        &self,
        f: &mut dyn FnMut(&[f64]) -> f64,
        x0: &[f64],
        step: &[f64],
        lo: &[f64],
        hi: &[f64],
    ) -> Minimum {
        let n = x0.len();
        let mut eval = |x: &mut Vec<f64>| {
            clip(x, lo, hi);
            f(x)
        };
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut first = x0.to_vec();
        clip(&mut first, lo, hi);
        pts.push(first.clone());
        for i in 0..n {
            let mut p = first.clone();
            p[i] += step[i];
            if p[i] > hi[i] {
                p[i] = first[i] - step[i];
            }
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter_mut().map(&mut eval).collect();
        let mut it = 0;
        let mut converged = false;
        while it < self.max_iter {
            it += 1;
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            pts = order.iter().map(|&i| pts[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();
            let spread = vals[n] - vals[0];
            let diam = pts[1..]
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&pts[0])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= self.f_tol * (1.0 + vals[0].abs()) && diam <= self.x_tol {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..n)
                    .map(|k| centroid[k] + t * (pts[n][k] - centroid[k]))
                    .collect()
            };
            let mut xr = along(-1.0);
            let fr = eval(&mut xr);
            if fr < vals[0] {
                let mut xe = along(-2.0);
                let fe = eval(&mut xe);
                if fe < fr {
                    pts[n] = xe;
                    vals[n] = fe;
                } else {
                    pts[n] = xr;
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                pts[n] = xr;
                vals[n] = fr;
                continue;
            }
            let (mut xc, outside) = if fr < vals[n] {
                (along(-0.5), true)
            } else {
                (along(0.5), false)
            };
            let fc = eval(&mut xc);
            if (outside && fc <= fr) || (!outside && fc < vals[n]) {
                pts[n] = xc;
                vals[n] = fc;
                continue;
            }
            for i in 1..=n {
                let mut p: Vec<f64> = (0..n)
                    .map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k]))
                    .collect();
                vals[i] = eval(&mut p);
                pts[i] = p;
            }
        }
        let best = (0..=n)
            .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
            .unwrap();
        Minimum {
            x: pts[best].clone(),
            f: vals[best],
            iterations: it,
            converged,
        }
    }
}

/// Per-segment NaI spectra for unit specific activity (1 Bq/kg), not yet
/// smeared. Each template's rate is counts / livetime.
#[derive(Debug, Clone, Default)]
pub struct SegmentTemplates {
    map: BTreeMap<Segment, EnergySpectrum>,
}

impl SegmentTemplates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, seg: Segment, spectrum: EnergySpectrum) -> Result<(), FitError> {
        if let Some(first) = self.map.values().next() {
            if first.binning() != spectrum.binning() {
                return Err(FitError::BinningMismatch);
            }
        }
        self.map.insert(seg, spectrum);
        Ok(())
    }

    pub fn get(&self, seg: Segment) -> Option<&EnergySpectrum> {
        self.map.get(&seg)
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.map.keys().copied()
    }

    fn rate(&self, seg: Segment) -> Result<Vec<f64>, FitError> {
        let s = self.map.get(&seg).ok_or(FitError::MissingTemplate(seg))?;
        Ok(s.counts().iter().map(|c| c / s.livetime()).collect())
    }

    /// Expected unsmeared spectrum for `activities`, as a rate per bin.
    pub fn predict(&self, activities: &BTreeMap<Segment, f64>) -> Result<Vec<f64>, FitError> {
        let n = self.map.values().next().map_or(0, |s| s.binning().n_bins());
        let mut out = vec![0.0; n];
        for (&seg, &a) in activities {
            for (o, r) in out.iter_mut().zip(self.rate(seg)?) {
                *o += a * r;
            }
        }
        Ok(out)
    }
}

/// One fitted quantity with its 1σ statistical error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn relative_error(&self) -> f64 {
        if self.value != 0.0 {
            self.error / self.value.abs()
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActivityFitOptions {
    pub window_kev: (f64, f64),
    /// Fit the pre-radon uranium segment on its own instead of tying it to
    /// the rest of the chain.
    pub float_u_pre: bool,
    pub starts: usize,
    pub seed: u64,
    pub initial_resolution: f64,
    pub optimizer: NelderMead,
}

impl Default for ActivityFitOptions {
    fn default() -> Self {
        Self {
            window_kev: (300.0, 2750.0),
            float_u_pre: false,
            starts: 8,
            seed: 0x5eed,
            initial_resolution: NaiResolution::from_fwhm_at(100.0, 1000.0)
                .map(|r| r.scale())
                .unwrap_or(1.3),
            optimizer: NelderMead::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActivityFit {
    /// Fitted activity groups, labelled by segment name or "U" for the
    /// tied uranium chain.
    pub activities: Vec<(String, Estimate)>,
    pub resolution_scale: Estimate,
    pub window_kev: (f64, f64),
    pub deviance: f64,
    pub n_bins: usize,
    pub evaluations: usize,
}

impl ActivityFit {
    pub fn activity(&self, label: &str) -> Option<Estimate> {
        self.activities
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, e)| *e)
    }

    pub fn dof(&self) -> usize {
        self.n_bins.saturating_sub(self.activities.len() + 1)
    }
}

impl fmt::Display for ActivityFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{{")?;
        writeln!(
            f,
            "  \"window_kev\": [{}, {}],",
            self.window_kev.0, self.window_kev.1
        )?;
        writeln!(f, "  \"deviance\": {:.4},", self.deviance)?;
        writeln!(f, "  \"dof\": {},", self.dof())?;
        writeln!(
            f,
            "  \"resolution_scale\": {{\"value\": {:.6}, \"error\": {:.6}}},",
            self.resolution_scale.value, self.resolution_scale.error
        )?;
        writeln!(f, "  \"activities_bq_per_kg\": {{")?;
        for (i, (l, e)) in self.activities.iter().enumerate() {
            let comma = if i + 1 < self.activities.len() {
                ","
            } else {
                ""
            };
            writeln!(
                f,
                "    \"{l}\": {{\"value\": {:.4}, \"error\": {:.4}}}{comma}",
                e.value, e.error
            )?;
        }
        writeln!(f, "  }}")?;
        write!(f, "}}")
    }
}

fn groups(float_u_pre: bool) -> Vec<(String, Vec<Segment>)> {
    let mut g = vec![("K40".to_string(), vec![Segment::K40])];
    if float_u_pre {
        g.push(("U-pre".into(), vec![Segment::UPre]));
        g.push(("U-post".into(), vec![Segment::UPost]));
    } else {
        g.push(("U".into(), vec![Segment::UPre, Segment::UPost]));
    }
    g.push(("Th-a".into(), vec![Segment::ThA]));
    g.push(("Th-b".into(), vec![Segment::ThB]));
    g
}

fn window_bins(b: &BinningScheme, window: (f64, f64)) -> Vec<usize> {
    (0..b.n_bins())
        .filter(|&i| b.edges()[i] >= window.0 && b.edges()[i + 1] <= window.1)
        .collect()
}

struct ActivityProblem<'a> {
    binning: &'a BinningScheme,
    livetime: f64,
    observed: Vec<f64>,
    // per group, unsmeared expected counts per bin at unit activity
    basis: Vec<Vec<f64>>,
    fixed: Vec<f64>,
    bins: Vec<usize>,
}

impl ActivityProblem<'_> {
    fn unsmeared(&self, a: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.binning.n_bins()];
        for (ai, t) in a.iter().zip(&self.basis) {
            for (o, v) in s.iter_mut().zip(t) {
                *o += ai * v;
            }
        }
        s
    }

    fn expected(&self, a: &[f64], scale: f64) -> Result<Vec<f64>, FitError> {
        let raw = EnergySpectrum::from_counts(
            self.binning.clone(),
            self.unsmeared(a).into_iter().map(|v| v.max(0.0)).collect(),
            self.livetime,
        )?;
        let sm = nai_smear(&raw, &NaiResolution::new(scale)?)?;
        Ok(self
            .bins
            .iter()
            .map(|&i| sm.counts()[i] + self.fixed[i])
            .collect())
    }

    fn deviance(&self, a: &[f64], scale: f64) -> f64 {
        match self.expected(a, scale) {
            Ok(mu) => poisson_deviance(
                &self
                    .bins
                    .iter()
                    .map(|&i| self.observed[i])
                    .collect::<Vec<_>>(),
                &mu,
            ),
            Err(_) => f64::INFINITY,
        }
    }

    /// Multiplicative EM updates for the activities at fixed resolution;
    /// a good non-negative start for the simplex.
    fn em_start(&self, scale: f64, iters: usize) -> Result<Vec<f64>, FitError> {
        let k = self.basis.len();
        let res = NaiResolution::new(scale)?;
        let smeared: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|t| {
                let s =
                    EnergySpectrum::from_counts(self.binning.clone(), t.clone(), self.livetime)?;
                Ok(nai_smear(&s, &res)?.counts().to_vec())
            })
            .collect::<Result<_, FitError>>()?;
        let n_obs: f64 = self
            .bins
            .iter()
            .map(|&i| (self.observed[i] - self.fixed[i]).max(0.0))
            .sum();
        let mut a: Vec<f64> = smeared
            .iter()
            .map(|t| {
                let tot: f64 = self.bins.iter().map(|&i| t[i]).sum();
                n_obs / (k as f64 * tot)
            })
            .collect();
        for _ in 0..iters {
            let mu: Vec<f64> = self
                .bins
                .iter()
                .map(|&i| self.fixed[i] + (0..k).map(|j| a[j] * smeared[j][i]).sum::<f64>())
                .collect();
            for j in 0..k {
                let tot: f64 = self.bins.iter().map(|&i| smeared[j][i]).sum();
                let num: f64 = self
                    .bins
                    .iter()
                    .zip(&mu)
                    .map(|(&i, &m)| smeared[j][i] * self.observed[i] / m.max(1e-300))
                    .sum();
                a[j] *= num / tot;
            }
        }
        Ok(a)
    }
}

/// Fit decay-segment activities and the NaI resolution scale to a measured
/// spectrum. `fixed_cosmic` is added unchanged to the model (same binning
/// and livetime convention as `measured`).
pub fn fit_activities(
    measured: &EnergySpectrum,
    templates: &SegmentTemplates,
    fixed_cosmic: Option<&EnergySpectrum>,
    opts: &ActivityFitOptions,
) -> Result<ActivityFit, FitError> {
    let b = measured.binning();
    let bins = window_bins(b, opts.window_kev);
    if bins.is_empty() {
        return Err(FitError::EmptyWindow(opts.window_kev.0, opts.window_kev.1));
    }
    let livetime = measured.livetime();
    let groups = groups(opts.float_u_pre);
    let mut basis = Vec::new();
    for (label, segs) in &groups {
        let mut v = vec![0.0; b.n_bins()];
        // content far below the window cannot reach it after smearing
        let keep = |i: usize| b.center(i) >= 0.5 * opts.window_kev.0;
        for &s in segs {
            let t = templates.get(s).ok_or(FitError::MissingTemplate(s))?;
            if t.binning() != b {
                return Err(FitError::BinningMismatch);
            }
            for (i, (o, r)) in v.iter_mut().zip(templates.rate(s)?).enumerate() {
                if keep(i) {
                    *o += r * livetime;
                }
            }
        }
        // smearing moves counts by at most a few σ; check the widened window
        let lo = opts.window_kev.0 * 0.5;
        let hi = opts.window_kev.1 * 1.5;
        if (0..b.n_bins())
            .filter(|&i| b.center(i) >= lo && b.center(i) <= hi)
            .all(|i| v[i] <= 0.0)
        {
            return Err(FitError::DegenerateTemplate(label.clone()));
        }
        basis.push(v);
    }
    let fixed = match fixed_cosmic {
        Some(c) => {
            if c.binning() != b {
                return Err(FitError::BinningMismatch);
            }
            c.counts()
                .iter()
                .map(|v| v / c.livetime() * livetime)
                .collect()
        }
        None => vec![0.0; b.n_bins()],
    };
    let problem = ActivityProblem {
        binning: b,
        livetime,
        observed: measured.counts().to_vec(),
        basis,
        fixed,
        bins,
    };
    let k = groups.len();
    let a0 = problem.em_start(opts.initial_resolution, 300)?;

    // Work in coordinates scaled by the starting point so the simplex sees
    // all parameters on a unit scale.
    let scale0: Vec<f64> = a0
        .iter()
        .map(|v| v.max(1e-6))
        .chain([opts.initial_resolution])
        .collect();
    let dim = k + 1;
    let lo: Vec<f64> = (0..dim)
        .map(|i| if i < k { 0.0 } else { 0.5 / scale0[k] })
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|i| if i < k { 1e3 } else { 5.0 / scale0[k] })
        .collect();
    let mut evals = 0usize;
    let mut f = |x: &[f64]| -> f64 {
        evals += 1;
        let a: Vec<f64> = (0..k).map(|i| x[i] * scale0[i]).collect();
        problem.deviance(&a, x[k] * scale0[k])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Minimum> = None;
    for s in 0..opts.starts.max(1) {
        let x0: Vec<f64> = (0..dim)
            .map(|_| {
                if s == 0 {
                    1.0
                } else {
                    (1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0)).max(0.0)
                }
            })
            .collect();
        let step = vec![0.05; dim];
        let m = opts.optimizer.minimize(&mut f, &x0, &step, &lo, &hi);
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    // polish from the best point with a fresh small simplex
    let polish = opts
        .optimizer
        .minimize(&mut f, &best.x.clone(), &vec![0.01; dim], &lo, &hi);
    if polish.f <= best.f {
        best = polish;
    }
    if !best.converged {
        return Err(FitError::NoConvergence(best.iterations));
    }
    let cov = deviance_covariance(&mut f, &best.x, &lo)?;
    let total_evals = evals;
    // a non-positive diagonal means the quadratic approximation failed there
    let estimate = |i: usize| {
        let v = cov[(i, i)];
        Estimate {
            value: best.x[i] * scale0[i],
            error: if v > 0.0 {
                v.sqrt() * scale0[i]
            } else {
                f64::NAN
            },
        }
    };
    Ok(ActivityFit {
        activities: groups
            .iter()
            .enumerate()
            .map(|(i, (l, _))| (l.clone(), estimate(i)))
            .collect(),
        resolution_scale: estimate(k),
        window_kev: opts.window_kev,
        deviance: best.f,
        n_bins: problem.bins.len(),
        evaluations: total_evals,
    })
}

/// Covariance 2·H⁻¹ of a deviance from a finite-difference Hessian. Near
/// a lower bound the stencil is shifted so no point crosses it.
fn deviance_covariance(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    lo: &[f64],
) -> Result<DMatrix<f64>, FitError> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-3 * v.abs().max(1e-2)).collect();
    let centre: Vec<f64> = (0..n).map(|i| x[i].max(lo[i] + 2.0 * h[i])).collect();
    let at = |f: &mut dyn FnMut(&[f64]) -> f64, d: &[(usize, f64)]| {
        let mut p = centre.clone();
        for &(i, s) in d {
            p[i] += s * h[i];
        }
        f(&p)
    };
    let f0 = at(f, &[]);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = at(f, &[(i, 1.0)]);
        let fm = at(f, &[(i, -1.0)]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let v = (at(f, &[(i, 1.0), (j, 1.0)])
                - at(f, &[(i, 1.0), (j, -1.0)])
                - at(f, &[(i, -1.0), (j, 1.0)])
                + at(f, &[(i, -1.0), (j, -1.0)]))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let inv = hess.try_inverse().ok_or(FitError::Singular)?;
    Ok(inv * 2.0)
}

/// Multiplicative intensity factors for the two cosmic groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosmicScaleFit {
    pub em: Estimate,
    pub hadronic_muon: Estimate,
    pub window_kev: (f64, f64),
    pub chi2: f64,
    pub n_bins: usize,
}

impl fmt::Display for CosmicScaleFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{\n  \"window_kev\": [{}, {}],\n  \"chi2\": {:.4},\n  \"bins\": {},\n  \"em_scale\": {{\"value\": {:.5}, \"error\": {:.5}}},\n  \"hadronic_muon_scale\": {{\"value\": {:.5}, \"error\": {:.5}}}\n}}",
            self.window_kev.0, self.window_kev.1, self.chi2, self.n_bins, self.em.value, self.em.error, self.hadronic_muon.value, self.hadronic_muon.error
        )
    }
}

/// Two-parameter weighted least squares of `measured` against
/// `s_em·em + s_h·hadronic_muon` over bins inside `window_kev`. Component
/// spectra are rates (counts / livetime) at unit scale. Bin variances are
/// the measured counts, floored at one.
pub fn fit_cosmic_scales(
    measured: &EnergySpectrum,
    em: &EnergySpectrum,
    hadronic_muon: &EnergySpectrum,
    window_kev: (f64, f64),
) -> Result<CosmicScaleFit, FitError> {
    let b = measured.binning();
    if em.binning() != b || hadronic_muon.binning() != b {
        return Err(FitError::BinningMismatch);
    }
    let bins = window_bins(b, window_kev);
    if bins.is_empty() || bins.iter().all(|&i| measured.counts()[i] <= 0.0) {
        return Err(FitError::EmptyWindow(window_kev.0, window_kev.1));
    }
    let t = measured.livetime();
    let col = |s: &EnergySpectrum, i: usize| s.counts()[i] / s.livetime() * t;
    let m = bins.len();
    let mut x = DMatrix::zeros(m, 2);
    let mut y = DVector::zeros(m);
    for (r, &i) in bins.iter().enumerate() {
        let w = 1.0 / measured.counts()[i].max(1.0).sqrt();
        x[(r, 0)] = col(em, i) * w;
        x[(r, 1)] = col(hadronic_muon, i) * w;
        y[r] = measured.counts()[i] * w;
    }
    let xtx = x.transpose() * &x;
    let cov = xtx.clone().try_inverse().ok_or(FitError::Singular)?;
    let beta = &cov * x.transpose() * &y;
    let resid = &y - &x * &beta;
    Ok(CosmicScaleFit {
        em: Estimate {
            value: beta[0],
            error: cov[(0, 0)].sqrt(),
        },
        hadronic_muon: Estimate {
            value: beta[1],
            error: cov[(1, 1)].sqrt(),
        },
        window_kev,
        chi2: resid.norm_squared(),
        n_bins: m,
    })
}

/// Channel-to-energy map E = c0 + c1·ch + c2·ch², from two reference
/// lines and an optional third pin for mild nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCalibration {
    pub coefficients: [f64; 3],
}

impl EnergyCalibration {
    pub fn two_point((ch1, e1): (f64, f64), (ch2, e2): (f64, f64)) -> Result<Self, FitError> {
        if ch1 == ch2 {
            return Err(FitError::Singular);
        }
        let c1 = (e2 - e1) / (ch2 - ch1);
        Ok(Self {
            coefficients: [e1 - c1 * ch1, c1, 0.0],
        })
    }

    /// Exact quadratic through three (channel, energy) pins.
    pub fn three_point(p: [(f64, f64); 3]) -> Result<Self, FitError> {
        let a = DMatrix::from_fn(3, 3, |r, c| p[r].0.powi(c as i32));
        let y = DVector::from_iterator(3, p.iter().map(|q| q.1));
        let c = a.lu().solve(&y).ok_or(FitError::Singular)?;
        Ok(Self {
            coefficients: [c[0], c[1], c[2]],
        })
    }

    pub fn energy(&self, channel: f64) -> f64 {
        let [c0, c1, c2] = self.coefficients;
        c0 + c1 * channel + c2 * channel * channel
    }

    /// Energy edges for a spectrum recorded on channel edges.
    pub fn apply(&self, channel_spectrum: &EnergySpectrum) -> Result<EnergySpectrum, FitError> {
        let edges: Vec<f64> = channel_spectrum
            .binning()
            .edges()
            .iter()
            .map(|&c| self.energy(c))
            .collect();
        let b = BinningScheme::new(edges)?;
        Ok(EnergySpectrum::from_counts(
            b,
            channel_spectrum.counts().to_vec(),
            channel_spectrum.livetime(),
        )?)
    }
}
