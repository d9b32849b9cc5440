use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use substrate_bg::fitting::{
    fit_activities, fit_cosmic_scales, ActivityFitOptions, SegmentTemplates,
};
use substrate_bg::materials::MaterialLibrary;
use substrate_bg::particle::{Species, SpeciesGroup};
use substrate_bg::pulses::{
    filter_sigma_kev, noise_for_filter_fwhm, records_to_csv, reduce_to_spectrum, synthesize_stream,
    trigger, write_stream, AnchorSearch, OptimalFilter, PulseResponse, CHECK_SOURCE_LINES,
    SAMPLE_RATE_HZ,
};
use substrate_bg::response::{TkidResolution, CALIBRATION_LINE_KEV, TKID_E_MAX_KEV};
use substrate_bg::sources::{ActivityConfig, CosmicFluxModel, DecaySampler, LineCatalog, Segment};
use substrate_bg::spectra::{BinningScheme, EnergySpectrum, LivetimeMerge};
use substrate_bg::transport::{
    run_campaign, CampaignOptions, CampaignResult, SlabStack, SourceSpec,
};

use crate::config::{CampaignConfig, Detector, PulseRunConfig};
use crate::svg::{LinePlot, Series};
use crate::CliError;

/// Budget thresholds reported for every spectrum, keV.
pub const BUDGET_THRESHOLDS: [f64; 2] = [0.0, 40.0];
/// Bin-wise agreement band for model/measurement comparisons.
pub const AGREEMENT_FACTOR: f64 = 1.5;

fn rt(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| rt(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, content).map_err(|e| rt(format!("{}: {e}", path.display())))
}

pub fn read_spectrum(path: &Path) -> Result<EnergySpectrum, CliError> {
    let f =
        fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    EnergySpectrum::from_csv(f).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sum of two spectra as rates: `b` is rescaled to `a`'s livetime.
pub fn add_rates(a: &EnergySpectrum, b: &EnergySpectrum) -> Result<EnergySpectrum, CliError> {
    let mut b = b.clone();
    b.scale(a.livetime() / b.livetime());
    a.merge(&b, LivetimeMerge::Preserve).map_err(rt)
}

fn file_name(spectrum: &str) -> String {
    spectrum.replace('/', "_")
}

fn budget_json(spec: &EnergySpectrum, area_mm2: Option<f64>) -> Result<Value, CliError> {
    let mut m = serde_json::Map::new();
    for e_min in BUDGET_THRESHOLDS {
        let b = spec.integrate(e_min, spec.binning().hi()).map_err(rt)?;
        let mut v = json!({
            "event_rate_per_s": b.event_rate,
            "power_kev_per_s": b.power,
            "mean_energy_kev": b.mean_energy,
        });
        if let Some(a) = area_mm2 {
            v["event_rate_per_s_per_mm2"] = json!(b.event_rate / a);
        }
        m.insert(format!("e_min_{e_min}_kev"), v);
    }
    Ok(Value::Object(m))
}

struct Inputs {
    lib: MaterialLibrary,
    catalog: LineCatalog,
}

fn load_inputs() -> Result<Inputs, CliError> {
    let lib = MaterialLibrary::load_default()
        .map_err(|e| CliError::Config(format!("material data: {e}")))?;
    let catalog =
        LineCatalog::load_default().map_err(|e| CliError::Config(format!("line catalog: {e}")))?;
    Ok(Inputs { lib, catalog })
}

struct Runner<'a> {
    cfg: &'a CampaignConfig,
    inputs: &'a Inputs,
    threads: Option<usize>,
}

impl Runner<'_> {
    fn options(&self, seed: u64) -> CampaignOptions {
        CampaignOptions {
            threads: self.threads,
            frame_coupling: self.cfg.frame_model.then_some(self.cfg.frame_coupling),
            ..CampaignOptions::new(self.cfg.n_primaries, seed)
        }
    }

    fn terrestrial(
        &self,
        geom: &SlabStack,
        activity: &ActivityConfig,
    ) -> Result<CampaignResult, CliError> {
        let sampler = DecaySampler::new(&self.inputs.catalog, activity).map_err(rt)?;
        let src = SourceSpec::Terrestrial {
            sampler,
            bank_primaries: self.cfg.bank_primaries,
        };
        run_campaign(&src, geom, &self.options(self.cfg.seed)).map_err(rt)
    }

    fn cosmic(&self, geom: &SlabStack) -> Result<CampaignResult, CliError> {
        let c = self.cfg.cosmic;
        let model = CosmicFluxModel::reference()
            .with_scales(c.em_scale, c.hadronic_muon_scale)
            .map_err(rt)?;
        run_campaign(
            &SourceSpec::Cosmic(model),
            geom,
            &self.options(self.cfg.seed.wrapping_add(1)),
        )
        .map_err(rt)
    }

    /// Terrestrial runs leave out the ceiling: it is far from the floor
    /// source and only costs time.
    fn geometries(&self, thickness_um: Option<f64>) -> Result<(SlabStack, SlabStack), CliError> {
        let lab = self.cfg.lab();
        let ground = crate::config::without_ceiling(lab);
        let build = |l: &substrate_bg::transport::LabSpec| match thickness_um {
            Some(t) => l.with_chip(&self.inputs.lib, &self.cfg.chip(t)),
            None => l.with_nai(&self.inputs.lib, self.cfg.nai_axis),
        };
        Ok((build(&ground).map_err(rt)?, build(&lab).map_err(rt)?))
    }
}

/// Combined per-source results for one detector configuration.
struct SourceRuns {
    by_source: BTreeMap<&'static str, CampaignResult>,
}

impl SourceRuns {
    fn total(&self, name: &str) -> Result<Option<EnergySpectrum>, CliError> {
        let mut acc: Option<EnergySpectrum> = None;
        for r in self.by_source.values() {
            if let Some(s) = r.spectrum(name) {
                acc = Some(match acc {
                    None => s.clone(),
                    Some(a) => add_rates(&a, s)?,
                });
            }
        }
        Ok(acc)
    }
}

fn write_spectra(dir: &Path, r: &CampaignResult) -> Result<(), CliError> {
    for (name, s) in &r.spectra {
        write(&dir.join(format!("{}.csv", file_name(name))), s.to_csv())?;
    }
    Ok(())
}

const TOTAL_NAMES: [&str; 4] = ["island", "frame_apparent", "island+frame", "nai"];

fn run_chip(runner: &Runner, thickness_um: f64) -> Result<SourceRuns, CliError> {
    let cfg = runner.cfg;
    let (ground, full) = runner.geometries(Some(thickness_um))?;
    let mut by_source = BTreeMap::new();
    if cfg.sources.terrestrial() {
        by_source.insert(
            "terrestrial",
            runner.terrestrial(&ground, &cfg.activities.to_config(&cfg.lab()))?,
        );
    }
    if cfg.sources.cosmic() {
        by_source.insert("cosmic", runner.cosmic(&full)?);
    }
    Ok(SourceRuns { by_source })
}

fn thickness_dir(t: f64) -> String {
    format!("{t}um")
}

pub fn simulate(cfg: &CampaignConfig, threads: Option<usize>) -> Result<(), CliError> {
    let inputs = load_inputs()?;
    let runner = Runner {
        cfg,
        inputs: &inputs,
        threads,
    };
    let out = &cfg.output_dir;
    match cfg.detector {
        Detector::Chip => {
            let mut budget = serde_json::Map::new();
            for &t in &cfg.thicknesses_um {
                let runs = run_chip(&runner, t)?;
                let dir = out.join(thickness_dir(t));
                let area = cfg.chip(t).island_side_mm.powi(2);
                let mut entry = serde_json::Map::new();
                for (src, r) in &runs.by_source {
                    write_spectra(&dir.join(src), r)?;
                    let mut m = serde_json::Map::new();
                    for name in TOTAL_NAMES {
                        if let Some(s) = r.spectrum(name) {
                            m.insert(name.into(), budget_json(s, Some(area))?);
                        }
                    }
                    m.insert("n_primaries".into(), json!(r.n_primaries));
                    m.insert("livetime_s".into(), json!(r.livetime_s));
                    entry.insert((*src).into(), Value::Object(m));
                }
                let mut tot = serde_json::Map::new();
                for name in TOTAL_NAMES {
                    if let Some(s) = runs.total(name)? {
                        write(
                            &dir.join("total").join(format!("{}.csv", file_name(name))),
                            s.to_csv(),
                        )?;
                        tot.insert(name.into(), budget_json(&s, Some(area))?);
                    }
                }
                entry.insert("total".into(), Value::Object(tot));
                budget.insert(thickness_dir(t), Value::Object(entry));
            }
            write(&out.join("budget.json"), pretty(&Value::Object(budget))?)
        }
        Detector::Nai => simulate_nai(&runner),
    }
}

fn pretty(v: &Value) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(rt)
}

/// NaI campaigns: one template per decay segment at unit activity, the
/// configured terrestrial total, and the cosmic spectrum split by species
/// group for scale fitting.
fn simulate_nai(runner: &Runner) -> Result<(), CliError> {
    let cfg = runner.cfg;
    let (ground, full) = runner.geometries(None)?;
    let out = cfg.output_dir.join("nai");
    let mut budget = serde_json::Map::new();
    if cfg.sources.terrestrial() {
        let lab = cfg.lab();
        for seg in Segment::ALL {
            let mut a = ActivityConfig::only(seg, 1.0);
            a.slab_thickness_cm = lab.floor_thickness_cm;
            let r = runner.terrestrial(&ground, &a)?;
            let s = r
                .spectrum("nai")
                .ok_or_else(|| rt("campaign produced no NaI spectrum"))?;
            write(
                &out.join("templates").join(format!("{}.csv", seg.label())),
                s.to_csv(),
            )?;
        }
        let r = runner.terrestrial(&ground, &cfg.activities.to_config(&lab))?;
        write_spectra(&out.join("terrestrial"), &r)?;
        if let Some(s) = r.spectrum("nai") {
            budget.insert("terrestrial".into(), budget_json(s, None)?);
        }
    }
    if cfg.sources.cosmic() {
        let r = runner.cosmic(&full)?;
        write_spectra(&out.join("cosmic"), &r)?;
        for (group, label) in [
            (SpeciesGroup::Electromagnetic, "em"),
            (SpeciesGroup::HadronicMuon, "hadronic_muon"),
        ] {
            let mut acc: Option<EnergySpectrum> = None;
            for sp in Species::ALL.iter().filter(|s| s.group() == group) {
                if let Some(s) = r.spectrum(&format!("nai/{}", sp.label())) {
                    acc = Some(match acc {
                        None => s.clone(),
                        Some(a) => a.merge(s, LivetimeMerge::Preserve).map_err(rt)?,
                    });
                }
            }
            if let Some(s) = acc {
                write(
                    &out.join("cosmic").join(format!("group_{label}.csv")),
                    s.to_csv(),
                )?;
            }
        }
        if let Some(s) = r.spectrum("nai") {
            budget.insert("cosmic".into(), budget_json(s, None)?);
        }
    }
    write(&out.join("budget.json"), pretty(&Value::Object(budget))?)
}

pub fn sweep(cfg: &CampaignConfig, threads: Option<usize>) -> Result<(), CliError> {
    if cfg.detector != Detector::Chip {
        return Err(CliError::Config("sweep needs detector = \"chip\"".into()));
    }
    let inputs = load_inputs()?;
    let runner = Runner {
        cfg,
        inputs: &inputs,
        threads,
    };
    let mut csv = String::from("thickness_um,source,spectrum,e_min_keV,rate_per_s,rate_per_s_per_mm2,power_keV_per_s,mean_energy_keV\n");
    let mut curves: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for &t in &cfg.thicknesses_um {
        let runs = run_chip(&runner, t)?;
        let area = cfg.chip(t).island_side_mm.powi(2);
        let mut rows: Vec<(String, EnergySpectrum)> = runs
            .by_source
            .iter()
            .filter_map(|(src, r)| r.spectrum("island").map(|s| (src.to_string(), s.clone())))
            .collect();
        if let Some(s) = runs.total("island")? {
            rows.push(("total".into(), s));
        }
        for (src, s) in &rows {
            for e_min in BUDGET_THRESHOLDS {
                let b = s.integrate(e_min, s.binning().hi()).map_err(rt)?;
                csv.push_str(&format!(
                    "{t},{src},island,{e_min},{:e},{:e},{:e},{}\n",
                    b.event_rate,
                    b.event_rate / area,
                    b.power,
                    b.mean_energy.map(|m| format!("{m:e}")).unwrap_or_default()
                ));
                curves
                    .entry(format!("{src} rate, E>{e_min} keV"))
                    .or_default()
                    .push((t, b.event_rate / area));
            }
        }
    }
    write(&cfg.output_dir.join("sweep.csv"), &csv)?;
    let plot = LinePlot {
        title: "Island event rate vs substrate thickness".into(),
        x_label: "thickness (um)".into(),
        y_label: "event rate (1/s/mm2)".into(),
        log_x: true,
        log_y: true,
        series: curves
            .into_iter()
            .map(|(name, points)| Series {
                dashed: name.contains("E>0 "),
                name,
                points,
            })
            .collect(),
        guides: vec![],
    };
    write(&cfg.output_dir.join("sweep.svg"), plot.render())
}

pub struct FitActivitiesArgs {
    pub measured: PathBuf,
    pub templates: PathBuf,
    pub cosmic: Option<PathBuf>,
    pub window_kev: (f64, f64),
    pub float_u_pre: bool,
    pub seed: u64,
}

pub fn fit_activities_cmd(a: &FitActivitiesArgs) -> Result<String, CliError> {
    let measured = read_spectrum(&a.measured)?;
    let mut templates = SegmentTemplates::new();
    for seg in Segment::ALL {
        let p = a.templates.join(format!("{}.csv", seg.label()));
        templates
            .insert(seg, read_spectrum(&p)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    let cosmic = a.cosmic.as_deref().map(read_spectrum).transpose()?;
    let opts = ActivityFitOptions {
        window_kev: a.window_kev,
        float_u_pre: a.float_u_pre,
        seed: a.seed,
        ..ActivityFitOptions::default()
    };
    let fit = fit_activities(&measured, &templates, cosmic.as_ref(), &opts).map_err(rt)?;
    Ok(format!("{fit}\n"))
}

pub fn fit_cosmic_cmd(
    measured: &Path,
    em: &Path,
    had: &Path,
    window_kev: (f64, f64),
) -> Result<String, CliError> {
    let fit = fit_cosmic_scales(
        &read_spectrum(measured)?,
        &read_spectrum(em)?,
        &read_spectrum(had)?,
        window_kev,
    )
    .map_err(rt)?;
    Ok(format!("{fit}\n"))
}

/// Draws energies from a spectrum's bin contents, uniform within a bin.
struct SpectrumSampler {
    edges: Vec<f64>,
    cdf: Vec<f64>,
}

impl SpectrumSampler {
    fn new(s: &EnergySpectrum) -> Result<Self, CliError> {
        let edges = s.binning().edges().to_vec();
        let mut acc = 0.0;
        let cdf: Vec<f64> = s
            .counts()
            .iter()
            .zip(edges.windows(2))
            .map(|(c, e)| {
                if e[0] < TKID_E_MAX_KEV {
                    acc += c.max(0.0);
                }
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(CliError::Config(
                "background spectrum is empty below the readout ceiling".into(),
            ));
        }
        Ok(Self { edges, cdf })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let b = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        let (lo, hi) = (self.edges[b], self.edges[b + 1].min(TKID_E_MAX_KEV));
        lo + (hi - lo) * rng.random::<f64>()
    }
}

fn check_line<R: Rng>(rng: &mut R) -> f64 {
    let total: f64 = CHECK_SOURCE_LINES.iter().map(|l| l.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(e, w) in &CHECK_SOURCE_LINES {
        if u < w {
            return e;
        }
        u -= w;
    }
    CHECK_SOURCE_LINES[CHECK_SOURCE_LINES.len() - 1].0
}

pub fn pulses(cfg: &PulseRunConfig) -> Result<(), CliError> {
    let background = cfg
        .background_spectrum
        .as_deref()
        .map(read_spectrum)
        .transpose()?
        .map(|s| SpectrumSampler::new(&s))
        .transpose()?;
    let noise = noise_for_filter_fwhm(&cfg.shape, &cfg.tkid, &cfg.trigger, cfg.filter_fwhm_kev)
        .map_err(rt)?;
    let filter = OptimalFilter::for_trigger(&cfg.shape, &noise, &cfg.trigger).map_err(rt)?;
    let filter_sigma = filter_sigma_kev(&filter, &cfg.tkid, CALIBRATION_LINE_KEV).map_err(rt)?;
    let response = PulseResponse {
        tkid: cfg.tkid,
        target: TkidResolution::ConstantFwhm {
            fwhm_kev: cfg.device_fwhm_kev,
        },
        filter_sigma_kev: filter_sigma,
    };
    let rec_s = cfg.trigger.record_len() as f64 / SAMPLE_RATE_HZ;
    let pre_s = cfg.trigger.pre_samples as f64 / SAMPLE_RATE_HZ;
    let n_seg = (cfg.duration_s / cfg.segment_s).ceil().max(1.0) as usize;
    let rate = cfg.check_source_rate_hz
        + if background.is_some() {
            cfg.background_rate_hz
        } else {
            0.0
        };

    let mut records = Vec::new();
    let mut injected = 0usize;
    let mut livetime = 0.0;
    for k in 0..n_seg {
        let seg_len = (cfg.duration_s - k as f64 * cfg.segment_s).min(cfg.segment_s);
        // events whose record would run past the segment end are not placed
        let usable = (seg_len - pre_s - rec_s).max(0.0);
        livetime += usable;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let mut events = Vec::new();
        let mut t = 0.0;
        while rate > 0.0 {
            t += -(1.0 - rng.random::<f64>()).ln() / rate;
            if t >= usable {
                break;
            }
            let e = match &background {
                Some(b) if rng.random::<f64>() * rate >= cfg.check_source_rate_hz => {
                    b.sample(&mut rng)
                }
                _ => check_line(&mut rng),
            };
            events.push((pre_s + t, e));
        }
        injected += events.len();
        let stream = synthesize_stream(
            &events,
            &cfg.shape,
            Some(&noise),
            &response,
            seg_len,
            cfg.drift_rad_per_s,
            &mut rng,
        )
        .map_err(rt)?;
        if k == 0 && cfg.write_stream {
            let mut buf = Vec::new();
            write_stream(&mut buf, &stream).map_err(rt)?;
            write(&cfg.output_dir.join("stream.bin"), buf)?;
        }
        let rms = noise.rms(stream.len());
        let mut recs = trigger(&stream, rms, &cfg.trigger).map_err(rt)?;
        let offset = k as f64 * cfg.segment_s;
        let fits: Vec<_> = recs
            .par_iter_mut()
            .map(|r| {
                r.timestamp_s += offset;
                filter.fit_record(r, rms, &cfg.trigger)
            })
            .collect::<Result<_, _>>()
            .map_err(rt)?;
        records.extend(recs.into_iter().zip(fits));
    }
    let (recs, fits): (Vec<_>, Vec<_>) = records.into_iter().unzip();
    let search = AnchorSearch {
        expected_theta: cfg.tkid.forward(CALIBRATION_LINE_KEV).map_err(rt)?,
        ..AnchorSearch::default()
    };
    let (spec, anchor) = reduce_to_spectrum(
        &recs,
        &fits,
        &cfg.tkid,
        &search,
        &BinningScheme::piecewise(),
        livetime,
    )
    .map_err(rt)?;
    let out = &cfg.output_dir;
    write(&out.join("records.csv"), records_to_csv(&recs, &fits))?;
    write(&out.join("spectrum.csv"), spec.to_csv())?;

    let peak = anchor.map(|a| -> Result<Value, CliError> {
        let e: Vec<f64> = recs
            .iter()
            .zip(&fits)
            .filter(|(r, f)| !r.pileup && f.a_slow > 0.0)
            .map(|(_, f)| cfg.tkid.calibrate(f.a_slow, (a, CALIBRATION_LINE_KEV)))
            .collect::<Result<_, _>>()
            .map_err(rt)?;
        let win: Vec<f64> = e.into_iter().filter(|e| (e - CALIBRATION_LINE_KEV).abs() < 2.0 * cfg.device_fwhm_kev.max(5.0)).collect();
        let n = win.len() as f64;
        let m = win.iter().sum::<f64>() / n;
        let sd = (win.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Ok(json!({ "events": win.len(), "centroid_kev": m, "fwhm_kev": sd * 2.0 * (2.0 * 2f64.ln()).sqrt() }))
    });
    let diag = json!({
        "duration_s": cfg.duration_s,
        "livetime_s": livetime,
        "segments": n_seg,
        "events_injected": injected,
        "records": recs.len(),
        "pileup_records": recs.iter().filter(|r| r.pileup).count(),
        "noise_rms_rad": noise.rms(cfg.trigger.record_len()),
        "filter_fwhm_kev": filter_sigma * 2.0 * (2.0 * 2f64.ln()).sqrt(),
        "device_fwhm_kev": cfg.device_fwhm_kev,
        "anchor_phase_rad": anchor,
        "calibration_peak": peak.transpose()?,
        "spectrum_counts": spec.total(),
    });
    write(&out.join("diagnostics.json"), pretty(&diag)?)
}

pub struct ReportArgs {
    pub model: PathBuf,
    pub measured: PathBuf,
    pub model_frame: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Bring a spectrum onto `target`'s binning when it is a refinement of it.
fn align(
    s: EnergySpectrum,
    target: &BinningScheme,
    what: &Path,
) -> Result<EnergySpectrum, CliError> {
    if s.binning() == target {
        Ok(s)
    } else {
        s.rebin(target).map_err(|_| {
            CliError::Config(format!(
                "{}: binning is neither equal to nor finer than the measurement's",
                what.display()
            ))
        })
    }
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let measured = read_spectrum(&a.measured)?;
    let b = measured.binning().clone();
    let model = align(read_spectrum(&a.model)?, &b, &a.model)?;
    let frame = a
        .model_frame
        .as_ref()
        .map(|p| read_spectrum(p).and_then(|s| align(s, &b, p)))
        .transpose()?;
    let mut csv = String::from("e_lo_keV,e_hi_keV,measured_rate,model_rate,ratio,outside_band");
    if frame.is_some() {
        csv.push_str(",model_frame_rate,ratio_frame,outside_band_frame");
    }
    csv.push('\n');
    let ratio = |m: f64, d: f64| if d > 0.0 { m / d } else { f64::NAN };
    let outside =
        |r: f64| r.is_finite() && !(1.0 / AGREEMENT_FACTOR..=AGREEMENT_FACTOR).contains(&r);
    let (mut meas_pts, mut model_pts, mut frame_pts, mut ratio_pts, mut frame_ratio_pts) =
        (vec![], vec![], vec![], vec![], vec![]);
    let mut flagged = 0;
    for i in 0..b.n_bins() {
        let (lo, hi, c) = (b.edges()[i], b.edges()[i + 1], b.center(i));
        let d = measured.rate_density(i);
        let m = model.rate_density(i);
        let r = ratio(m, d);
        flagged += outside(r) as usize;
        csv.push_str(&format!("{lo},{hi},{d:e},{m:e},{r:e},{}", outside(r)));
        meas_pts.push((c, d));
        model_pts.push((c, m));
        ratio_pts.push((c, r));
        if let Some(f) = &frame {
            let mf = f.rate_density(i);
            let rf = ratio(mf, d);
            csv.push_str(&format!(",{mf:e},{rf:e},{}", outside(rf)));
            frame_pts.push((c, mf));
            frame_ratio_pts.push((c, rf));
        }
        csv.push('\n');
    }
    write(&a.output_dir.join("comparison.csv"), &csv)?;
    let mut series = vec![
        Series {
            name: "measured".into(),
            points: meas_pts,
            dashed: false,
        },
        Series {
            name: "model".into(),
            points: model_pts,
            dashed: false,
        },
    ];
    let mut ratios = vec![Series {
        name: "model/measured".into(),
        points: ratio_pts,
        dashed: false,
    }];
    if frame.is_some() {
        series.push(Series {
            name: "model + frame".into(),
            points: frame_pts,
            dashed: true,
        });
        ratios.push(Series {
            name: "(model + frame)/measured".into(),
            points: frame_ratio_pts,
            dashed: true,
        });
    }
    let spectra = LinePlot {
        title: "Energy spectra".into(),
        x_label: "energy (keV)".into(),
        y_label: "rate (1/s/keV)".into(),
        log_x: true,
        log_y: true,
        series,
        guides: vec![],
    };
    write(&a.output_dir.join("spectra.svg"), spectra.render())?;
    let ratio_plot = LinePlot {
        title: "Model / measurement".into(),
        x_label: "energy (keV)".into(),
        y_label: "ratio".into(),
        log_x: true,
        log_y: true,
        series: ratios,
        guides: vec![
            (AGREEMENT_FACTOR, format!("x{AGREEMENT_FACTOR}")),
            (1.0 / AGREEMENT_FACTOR, format!("/{AGREEMENT_FACTOR}")),
        ],
    };
    write(&a.output_dir.join("ratio.svg"), ratio_plot.render())?;
    eprintln!(
        "{flagged} of {} bins outside [1/{AGREEMENT_FACTOR}, {AGREEMENT_FACTOR}]",
        b.n_bins()
    );
    Ok(())
}

/// Check data loads for `--dry-run`.
pub fn check_inputs() -> Result<(), CliError> {
    load_inputs().map(|_| ())
}
