//! Deposited-energy histograms and their integrals.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("binning needs at least two edges, got {0}")]
    TooFewEdges(usize),
    #[error("bin edge {index} ({value} keV) is negative or not finite")]
    BadEdge { index: usize, value: f64 },
    #[error("bin edges must increase strictly (edge {index})")]
    NotIncreasing { index: usize },
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("livetime must be positive, got {0}")]
    BadLivetime(f64),
    #[error("binning mismatch")]
    BinningMismatch,
    #[error("target binning is not a coarsening of the source binning")]
    NotCoarser,
    #[error("integration range [{0}, {1}) is empty")]
    EmptyRange(f64, f64),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("read failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinningScheme {
    edges: Vec<f64>,
}

impl BinningScheme {
    pub fn new(edges: Vec<f64>) -> Result<Self, SpectrumError> {
        if edges.len() < 2 {
            return Err(SpectrumError::TooFewEdges(edges.len()));
        }
        for (i, &e) in edges.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(SpectrumError::BadEdge { index: i, value: e });
            }
            if i > 0 && e <= edges[i - 1] {
                return Err(SpectrumError::NotIncreasing { index: i });
            }
        }
        Ok(Self { edges })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self, SpectrumError> {
        let step = (hi - lo) / n as f64;
        Self::new((0..=n).map(|i| lo + step * i as f64).collect())
    }

    /// 20 keV bins to 1 MeV, 50 keV to 2 MeV, 200 keV to 5 MeV, 500 keV to 20 MeV.
    pub fn piecewise() -> Self {
        let mut edges = Vec::with_capacity(116);
        let segments: [(f64, f64, f64); 4] = [
            (0.0, 1000.0, 20.0),
            (1000.0, 2000.0, 50.0),
            (2000.0, 5000.0, 200.0),
            (5000.0, 20000.0, 500.0),
        ];
        for (lo, hi, step) in segments {
            let n = ((hi - lo) / step).round() as usize;
            for i in 0..n {
                edges.push(lo + step * i as f64);
            }
        }
        edges.push(20000.0);
        Self { edges }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    /// Half-open lookup: a value on an interior edge belongs to the upper bin.
    pub fn locate(&self, e: f64) -> Option<usize> {
        if !(e >= self.lo() && e < self.hi()) {
            return None;
        }
        let idx = self.edges.partition_point(|&x| x <= e);
        Some(idx - 1)
    }

    pub fn is_coarsening_of(&self, finer: &BinningScheme) -> bool {
        let (lo, hi) = (self.lo(), self.hi());
        if lo != finer.lo() || hi != finer.hi() {
            return false;
        }
        self.edges
            .iter()
            .all(|e| finer.edges.binary_search_by(|x| x.total_cmp(e)).is_ok())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LivetimeMerge {
    /// Independent exposures: livetimes add.
    Measured,
    /// Weighted Monte Carlo shards already normalized to the same livetime.
    Preserve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    binning: BinningScheme,
    counts: Vec<f64>,
    sumw2: Vec<f64>,
    underflow: f64,
    overflow: f64,
    livetime_s: f64,
    // exact Σ w·E, kept per bin so thresholds on edges stay exact
    energy: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSummary {
    pub event_rate: f64,
    pub power: f64,
    pub mean_energy: Option<f64>,
    pub e_min: f64,
    pub e_max: f64,
}

impl BudgetSummary {
    pub fn mean_or_zero(&self) -> f64 {
        self.mean_energy.unwrap_or(0.0)
    }
}

impl EnergySpectrum {
    pub fn new(binning: BinningScheme, livetime_s: f64) -> Result<Self, SpectrumError> {
        if !(livetime_s > 0.0 && livetime_s.is_finite()) {
            return Err(SpectrumError::BadLivetime(livetime_s));
        }
        let n = binning.n_bins();
        Ok(Self {
            binning,
            counts: vec![0.0; n],
            sumw2: vec![0.0; n],
            underflow: 0.0,
            overflow: 0.0,
            livetime_s,
            energy: vec![0.0; n],
        })
    }

    pub fn from_counts(
        binning: BinningScheme,
        counts: Vec<f64>,
        livetime_s: f64,
    ) -> Result<Self, SpectrumError> {
        let mut s = Self::new(binning, livetime_s)?;
        if counts.len() != s.counts.len() {
            return Err(SpectrumError::BinningMismatch);
        }
        for (i, c) in counts.into_iter().enumerate() {
            if c < 0.0 || !c.is_finite() {
                return Err(SpectrumError::NegativeWeight(c));
            }
            s.counts[i] = c;
            s.sumw2[i] = c;
            s.energy[i] = c * s.binning.center(i);
        }
        Ok(s)
    }

    pub fn binning(&self) -> &BinningScheme {
        &self.binning
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn sumw2(&self) -> &[f64] {
        &self.sumw2
    }

    pub fn underflow(&self) -> f64 {
        self.underflow
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn livetime(&self) -> f64 {
        self.livetime_s
    }

    pub fn set_livetime(&mut self, livetime_s: f64) -> Result<(), SpectrumError> {
        if !(livetime_s > 0.0 && livetime_s.is_finite()) {
            return Err(SpectrumError::BadLivetime(livetime_s));
        }
        self.livetime_s = livetime_s;
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, deposit_kev: f64, weight: f64) -> Result<(), SpectrumError> {
        if weight < 0.0 || !weight.is_finite() {
            return Err(SpectrumError::NegativeWeight(weight));
        }
        match self.binning.locate(deposit_kev) {
            Some(b) => {
                self.counts[b] += weight;
                self.sumw2[b] += weight * weight;
                self.energy[b] += weight * deposit_kev;
            }
            None if deposit_kev < self.binning.lo() => self.underflow += weight,
            None => self.overflow += weight,
        }
        Ok(())
    }

    /// Multiply all weights by `factor` (used to normalize Monte Carlo shards).
    pub fn scale(&mut self, factor: f64) {
        for i in 0..self.counts.len() {
            self.counts[i] *= factor;
            self.sumw2[i] *= factor * factor;
            self.energy[i] *= factor;
        }
        self.underflow *= factor;
        self.overflow *= factor;
    }

    pub fn rate_density(&self, bin: usize) -> f64 {
        self.counts[bin] / (self.livetime_s * self.binning.width(bin))
    }

    /// Rate, power and mean energy over [e_min, e_max). Partial bins are
    /// pro-rated assuming uniform density; power uses bin centers.
    pub fn integrate(&self, e_min: f64, e_max: f64) -> Result<BudgetSummary, SpectrumError> {
        self.integrate_with(e_min, e_max, false)
    }

    /// Like [`integrate`](Self::integrate) but whole bins use the exact
    /// accumulated per-event energies instead of bin centers.
    pub fn integrate_exact(&self, e_min: f64, e_max: f64) -> Result<BudgetSummary, SpectrumError> {
        self.integrate_with(e_min, e_max, true)
    }

    fn integrate_with(
        &self,
        e_min: f64,
        e_max: f64,
        exact: bool,
    ) -> Result<BudgetSummary, SpectrumError> {
        if !(e_min < e_max) {
            return Err(SpectrumError::EmptyRange(e_min, e_max));
        }
        let mut rate = 0.0;
        let mut power = 0.0;
        for b in 0..self.binning.n_bins() {
            let (lo, hi) = (self.binning.edges[b], self.binning.edges[b + 1]);
            let olo = lo.max(e_min);
            let ohi = hi.min(e_max);
            if ohi <= olo {
                continue;
            }
            let frac = (ohi - olo) / (hi - lo);
            let c = self.counts[b] * frac;
            rate += c;
            if exact && frac == 1.0 {
                power += self.energy[b];
            } else {
                power += c * self.binning.center(b);
            }
        }
        rate /= self.livetime_s;
        power /= self.livetime_s;
        let mean = if rate > 0.0 { Some(power / rate) } else { None };
        Ok(BudgetSummary {
            event_rate: rate,
            power,
            mean_energy: mean,
            e_min,
            e_max,
        })
    }

    pub fn merge(
        &self,
        other: &EnergySpectrum,
        mode: LivetimeMerge,
    ) -> Result<EnergySpectrum, SpectrumError> {
        if self.binning != other.binning {
            return Err(SpectrumError::BinningMismatch);
        }
        let mut out = self.clone();
        out.merge_in(other, mode)?;
        Ok(out)
    }

    pub fn merge_in(
        &mut self,
        other: &EnergySpectrum,
        mode: LivetimeMerge,
    ) -> Result<(), SpectrumError> {
        if self.binning != other.binning {
            return Err(SpectrumError::BinningMismatch);
        }
        for i in 0..self.counts.len() {
            self.counts[i] += other.counts[i];
            self.sumw2[i] += other.sumw2[i];
            self.energy[i] += other.energy[i];
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        if mode == LivetimeMerge::Measured {
            self.livetime_s += other.livetime_s;
        }
        Ok(())
    }

    pub fn rebin(&self, coarse: &BinningScheme) -> Result<EnergySpectrum, SpectrumError> {
        if !coarse.is_coarsening_of(&self.binning) {
            return Err(SpectrumError::NotCoarser);
        }
        let mut out = EnergySpectrum::new(coarse.clone(), self.livetime_s)?;
        for b in 0..self.binning.n_bins() {
            let target = coarse
                .locate(self.binning.edges[b])
                .ok_or(SpectrumError::NotCoarser)?;
            out.counts[target] += self.counts[b];
            out.sumw2[target] += self.sumw2[b];
            out.energy[target] += self.energy[b];
        }
        out.underflow = self.underflow;
        out.overflow = self.overflow;
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# livetime_s={}", self.livetime_s);
        s.push_str("e_lo_keV,e_hi_keV,counts,rate_per_s_per_keV\n");
        for b in 0..self.binning.n_bins() {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e}",
                self.binning.edges[b],
                self.binning.edges[b + 1],
                self.counts[b],
                self.rate_density(b)
            );
        }
        s
    }

    /// Parse the CSV written by [`to_csv`](Self::to_csv). Counts are taken as
    /// unit-weight events for error purposes.
    pub fn from_csv<R: Read>(reader: R) -> Result<EnergySpectrum, SpectrumError> {
        let mut livetime = None;
        let mut edges: Vec<f64> = Vec::new();
        let mut counts = Vec::new();
        let mut saw_header = false;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| SpectrumError::Io(e.to_string()))?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("livetime_s=") {
                    livetime = Some(v.trim().parse::<f64>().map_err(|e| SpectrumError::Csv {
                        line: lineno,
                        msg: e.to_string(),
                    })?);
                }
                continue;
            }
            if !saw_header {
                if t != "e_lo_keV,e_hi_keV,counts,rate_per_s_per_keV" {
                    return Err(SpectrumError::Csv {
                        line: lineno,
                        msg: format!("unexpected header `{t}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let cols: Vec<&str> = t.split(',').collect();
            if cols.len() != 4 {
                return Err(SpectrumError::Csv {
                    line: lineno,
                    msg: format!("expected 4 columns, got {}", cols.len()),
                });
            }
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| SpectrumError::Csv {
                    line: lineno,
                    msg: e.to_string(),
                })
            };
            let (lo, hi, c) = (num(cols[0])?, num(cols[1])?, num(cols[2])?);
            match edges.last() {
                None => {
                    edges.push(lo);
                }
                Some(&last) if last != lo => {
                    return Err(SpectrumError::Csv {
                        line: lineno,
                        msg: "bins are not contiguous".into(),
                    });
                }
                _ => {}
            }
            edges.push(hi);
            counts.push(c);
        }
        let livetime = livetime.ok_or(SpectrumError::Csv {
            line: 1,
            msg: "missing `# livetime_s=` line".into(),
        })?;
        let binning = BinningScheme::new(edges)?;
        EnergySpectrum::from_counts(binning, counts, livetime)
    }
}
