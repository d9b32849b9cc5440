//! Acceptance criteria. Runs as a plain binary so every criterion prints
//! exactly one PASS/FAIL line regardless of output capture; exits non-zero
//! when any criterion fails.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use substrate_bg::fitting::{fit_activities, ActivityFitOptions, SegmentTemplates};
use substrate_bg::materials::MaterialLibrary;
use substrate_bg::particle::Species;
use substrate_bg::pulses::*;
use substrate_bg::response::{
    nai_smear, NaiResolution, TkidResolution, TkidResponseModel, CALIBRATION_LINE_KEV,
};
use substrate_bg::sources::{
    muon_flux, ActivityConfig, CosmicFluxModel, DecaySampler, LineCatalog, Segment,
    BOULDER_ALTITUDE_M,
};
use substrate_bg::spectra::{BinningScheme, EnergySpectrum};
use substrate_bg::transport::*;

struct Check {
    ok: bool,
    text: String,
}

fn check(ok: bool, text: impl Into<String>) -> Check {
    Check {
        ok,
        text: text.into(),
    }
}

fn within(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn within_rel(x: f64, want: f64, rel: f64) -> bool {
    (x / want - 1.0).abs() <= rel
}

/// Campaigns shared between criteria, each run once on first use.
struct Lab {
    lib: MaterialLibrary,
    catalog: LineCatalog,
    runs: BTreeMap<String, CampaignResult>,
}

const COSMIC_PRIMARIES: u64 = 4_000_000;
const TERRESTRIAL_PRIMARIES: u64 = 6_000_000;
const BANK: u64 = 400_000;

impl Lab {
    fn new() -> Self {
        Self {
            lib: MaterialLibrary::bundled().unwrap(),
            catalog: LineCatalog::bundled(),
            runs: BTreeMap::new(),
        }
    }

    fn chip_geom(&self, chip: &ChipSpec, ceiling: bool) -> SlabStack {
        LabSpec {
            ceiling,
            ..LabSpec::default()
        }
        .with_chip(&self.lib, chip)
        .unwrap()
    }

    fn cosmic(&mut self, key: &str, chip: ChipSpec, n: u64, seed: u64) -> &CampaignResult {
        if !self.runs.contains_key(key) {
            let geom = self.chip_geom(&chip, true);
            let r = run_campaign(
                &SourceSpec::Cosmic(CosmicFluxModel::reference()),
                &geom,
                &CampaignOptions::new(n, seed),
            )
            .unwrap();
            self.runs.insert(key.to_string(), r);
        }
        &self.runs[key]
    }

    fn terrestrial(&mut self, key: &str, chip: ChipSpec, n: u64, seed: u64) -> &CampaignResult {
        if !self.runs.contains_key(key) {
            let geom = self.chip_geom(&chip, false);
            let sampler = DecaySampler::new(&self.catalog, &ActivityConfig::default()).unwrap();
            let r = run_campaign(
                &SourceSpec::Terrestrial {
                    sampler,
                    bank_primaries: BANK,
                },
                &geom,
                &CampaignOptions::new(n, seed),
            )
            .unwrap();
            self.runs.insert(key.to_string(), r);
        }
        &self.runs[key]
    }

    fn cosmic_si(&mut self, t_um: f64, orientation: Orientation) -> &CampaignResult {
        let key = format!("cosmic-si-{t_um}-{orientation:?}");
        let seed = 100
            + t_um as u64
            + if orientation == Orientation::Vertical {
                7
            } else {
                0
            };
        self.cosmic(
            &key,
            ChipSpec {
                thickness_um: t_um,
                orientation,
                ..ChipSpec::default()
            },
            COSMIC_PRIMARIES,
            seed,
        )
    }

    fn terrestrial_si(&mut self, t_um: f64) -> &CampaignResult {
        let key = format!("terrestrial-si-{t_um}");
        self.terrestrial(
            &key,
            ChipSpec {
                thickness_um: t_um,
                ..ChipSpec::default()
            },
            TERRESTRIAL_PRIMARIES,
            200 + t_um as u64,
        )
    }
}

fn budget(r: &CampaignResult, name: &str, e_min: f64) -> (f64, f64) {
    let b = r.spectrum(name).unwrap().integrate(e_min, 1e12).unwrap();
    (b.event_rate, b.power)
}

/// Most probable value of the peak inside [lo, hi]: counts grouped into
/// `group` keV bins, smoothed over three groups, the largest interior local
/// maximum refined by a parabola through its neighbours.
fn peak_position(s: &EnergySpectrum, lo: f64, hi: f64, group: f64) -> Option<f64> {
    let n = ((hi - lo) / group).round() as usize;
    let mut h = vec![0.0; n];
    let b = s.binning();
    for i in 0..b.n_bins() {
        let c = b.center(i);
        if c >= lo && c < hi {
            h[(((c - lo) / group) as usize).min(n - 1)] += s.counts()[i];
        }
    }
    let sm: Vec<f64> = (0..n)
        .map(|i| h[i.saturating_sub(1)..(i + 2).min(n)].iter().sum::<f64>())
        .collect();
    let k = (2..n - 2)
        .filter(|&i| sm[i] >= sm[i - 1] && sm[i] >= sm[i + 1])
        .max_by(|&a, &b| sm[a].total_cmp(&sm[b]))?;
    let (y0, y1, y2) = (sm[k - 1], sm[k], sm[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let off = if denom < 0.0 {
        0.5 * (y0 - y2) / denom
    } else {
        0.0
    };
    Some(lo + (k as f64 + 0.5 + off.clamp(-0.5, 0.5)) * group)
}

fn sum_spectra(r: &CampaignResult, names: &[&str]) -> EnergySpectrum {
    let mut it = names.iter().filter_map(|n| r.spectrum(n));
    let mut acc = it.next().unwrap().clone();
    for s in it {
        acc.merge_in(s, substrate_bg::spectra::LivetimeMerge::Preserve)
            .unwrap();
    }
    acc
}

// 1
fn landau_mpv(lab: &mut Lab) -> Vec<Check> {
    let muons = CosmicFluxModel::reference()
        .restricted(&[Species::MuMinus, Species::MuPlus])
        .unwrap();
    let mut out = Vec::new();
    for (t, want, lo, hi, group) in [
        (500.0, 170.0, 60.0, 400.0, 10.0),
        (1500.0, 520.0, 200.0, 1200.0, 20.0),
    ] {
        let geom = lab.chip_geom(
            &ChipSpec {
                thickness_um: t,
                ..ChipSpec::default()
            },
            true,
        );
        let t0 = Instant::now();
        let r = run_campaign(
            &SourceSpec::Cosmic(muons.clone()),
            &geom,
            &CampaignOptions::new(1_000_000, 1 + t as u64),
        )
        .unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let mpv = peak_position(r.spectrum("island").unwrap(), lo, hi, group).unwrap_or(f64::NAN);
        out.push(check(
            within_rel(mpv, want, 0.10),
            format!(
                "{t} um MPV {:.3} MeV (want {:.2} ± 10%)",
                mpv / 1e3,
                want / 1e3
            ),
        ));
        out.push(check(secs < 120.0, format!("1e6 muons in {secs:.0} s")));
    }
    out
}

// 2
fn escape_fraction(lab: &mut Lab) -> Vec<Check> {
    let geom = lab.chip_geom(&ChipSpec::default(), false);
    let sampler = DecaySampler::new(&lab.catalog, &ActivityConfig::default()).unwrap();
    let t0 = Instant::now();
    let f =
        slab_escape_fraction(&sampler, geom.layer_named("floor").unwrap(), 1_000_000, 2).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    vec![
        check(
            within(f, 0.20, 0.05),
            format!("escape {f:.3} (want 0.20 ± 0.05)"),
        ),
        check(secs < 120.0, format!("1e6 photons in {secs:.0} s")),
    ]
}

// 3
fn terrestrial_budgets(lab: &mut Lab) -> Vec<Check> {
    let t0 = Instant::now();
    let mut out = Vec::new();
    for (t, rate, power) in [(500.0, 0.0153, 2.98), (1500.0, 0.038, 8.3)] {
        let (r, p) = budget(lab.terrestrial_si(t), "island", 40.0);
        out.push(check(
            within_rel(r, rate, 0.3),
            format!("{t} um rate {r:.4} (want {rate})"),
        ));
        out.push(check(
            within_rel(p, power, 0.3),
            format!("power {p:.2} (want {power})"),
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    out.push(check(secs < 600.0, format!("{secs:.0} s")));
    out
}

// 4
fn cosmic_budgets(lab: &mut Lab) -> Vec<Check> {
    let t0 = Instant::now();
    let mut out = Vec::new();
    for (t, rate, power) in [(500.0, 0.0075, 1.91), (1500.0, 0.0090, 5.3)] {
        let (r, p) = budget(lab.cosmic_si(t, Orientation::Horizontal), "island", 40.0);
        out.push(check(
            within_rel(r, rate, 0.3),
            format!("{t} um rate {r:.4} (want {rate})"),
        ));
        out.push(check(
            within_rel(p, power, 0.3),
            format!("power {p:.2} (want {power})"),
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    let r = lab.cosmic_si(500.0, Orientation::Horizontal);
    let all = r
        .spectrum("island")
        .unwrap()
        .integrate(2000.0, 1e12)
        .unwrap()
        .event_rate;
    let hadrons = sum_spectra(r, &["island/p", "island/n"])
        .integrate(2000.0, 1e12)
        .unwrap()
        .event_rate;
    let n_hi = r
        .spectrum("island")
        .unwrap()
        .integrate(2000.0, 1e12)
        .unwrap()
        .event_rate
        * r.livetime_s;
    let frac = hadrons / all;
    let err = (frac * (1.0 - frac) / n_hi).sqrt();
    out.push(check(
        frac > 0.80,
        format!(
            "p+n share above 2 MeV {:.0} ± {:.0}% (want > 80%)",
            100.0 * frac,
            100.0 * err
        ),
    ));
    out.push(check(secs < 600.0, format!("{secs:.0} s")));
    out
}

// 5
fn thickness_ratios(lab: &mut Lab) -> Vec<Check> {
    let (_, p500_0) = budget(lab.terrestrial_si(500.0), "island", 0.0);
    let (_, p500_40) = budget(lab.terrestrial_si(500.0), "island", 40.0);
    let (_, p1500_0) = budget(lab.terrestrial_si(1500.0), "island", 0.0);
    let (_, p1500_40) = budget(lab.terrestrial_si(1500.0), "island", 40.0);
    let chip = ChipSpec {
        thickness_um: 1.0,
        ..ChipSpec::default()
    };
    let area = chip.island_side_mm.powi(2);
    let (rc, _) = budget(
        lab.cosmic("cosmic-si-1", chip, 2_000_000, 301),
        "island",
        0.0,
    );
    let (rt, _) = budget(
        lab.terrestrial("terrestrial-si-1", chip, TERRESTRIAL_PRIMARIES, 302),
        "island",
        0.0,
    );
    let floor = (rc + rt) / area;
    vec![
        check(
            within(p1500_0 / p500_0, 3.1, 0.3),
            format!("power ratio {:.2} (want 3.1 ± 0.3)", p1500_0 / p500_0),
        ),
        check(
            within(p1500_40 / p500_40, 2.8, 0.3),
            format!("above 40 keV {:.2} (want 2.8 ± 0.3)", p1500_40 / p500_40),
        ),
        check(
            (0.5..=2.0).contains(&(floor / 4e-4)),
            format!("1 um rate {floor:.2e} /s/mm2 (want 4e-4 within x2)"),
        ),
    ]
}

// 6
fn orientation(lab: &mut Lab) -> Vec<Check> {
    let (rh, ph) = budget(
        lab.cosmic_si(500.0, Orientation::Horizontal),
        "island",
        40.0,
    );
    let (rv, pv) = budget(lab.cosmic_si(500.0, Orientation::Vertical), "island", 40.0);
    vec![
        check(
            within(rv / rh, 0.67, 0.10),
            format!("V/H rate {:.3} (want 0.67 ± 0.10)", rv / rh),
        ),
        check(
            within(pv / ph, 0.98, 0.03),
            format!("V/H power {:.3} (want 0.98 ± 0.03)", pv / ph),
        ),
    ]
}

/// ∫∫ I(E, cosθ) dE dΩ over the downward hemisphere.
fn integrated_muon_flux(altitude_m: f64) -> f64 {
    let (ne, nc) = (400, 200);
    let (l0, l1) = (1.0f64.ln(), 1e6f64.ln());
    let mut sum = 0.0;
    for i in 0..ne {
        let e = (l0 + (i as f64 + 0.5) * (l1 - l0) / ne as f64).exp();
        let de = e * (l1 - l0) / ne as f64;
        for j in 0..nc {
            let c = (j as f64 + 0.5) / nc as f64;
            sum += muon_flux(e, c, altitude_m) * de * 2.0 * std::f64::consts::PI / nc as f64;
        }
    }
    sum
}

// 7
fn nai_cosmic(lab: &mut Lab) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rates = Vec::new();
    for (axis, want, seed) in [
        (Orientation::Horizontal, 34_000.0, 71),
        (Orientation::Vertical, 37_000.0, 72),
    ] {
        let geom = LabSpec::default().with_nai(&lab.lib, axis).unwrap();
        let r = run_campaign(
            &SourceSpec::Cosmic(CosmicFluxModel::reference()),
            &geom,
            &CampaignOptions::new(3_000_000, seed),
        )
        .unwrap();
        let s = r.spectrum("nai").unwrap();
        let mpv = peak_position(s, 20_000.0, 70_000.0, 1000.0).unwrap_or(f64::NAN);
        out.push(check(
            within_rel(mpv, want, 0.10),
            format!(
                "{axis:?} MPV {:.1} MeV (want {} ± 10%)",
                mpv / 1e3,
                want / 1e3
            ),
        ));
        rates.push(s.integrate(3000.0, 1e12).unwrap().event_rate);
    }
    out.push(check(
        within_rel(rates[1], rates[0], 0.05),
        format!("V/H rate above 3 MeV {:.3}", rates[1] / rates[0]),
    ));
    let ratio = integrated_muon_flux(BOULDER_ALTITUDE_M) / integrated_muon_flux(0.0);
    out.push(check(
        within(ratio, 1.33, 0.02),
        format!("muon flux ratio {ratio:.3} (want 1.33 ± 0.02)"),
    ));
    out
}

// 8
fn activity_closure(lab: &mut Lab) -> Vec<Check> {
    let t0 = Instant::now();
    let geom = LabSpec {
        ceiling: false,
        ..LabSpec::default()
    }
    .with_nai(&lab.lib, Orientation::Horizontal)
    .unwrap();
    let mut templates = SegmentTemplates::new();
    for (k, seg) in Segment::ALL.into_iter().enumerate() {
        let sampler = DecaySampler::new(&lab.catalog, &ActivityConfig::only(seg, 1.0)).unwrap();
        let r = run_campaign(
            &SourceSpec::Terrestrial {
                sampler,
                bank_primaries: BANK,
            },
            &geom,
            &CampaignOptions::new(1_000_000, 80 + k as u64),
        )
        .unwrap();
        templates
            .insert(seg, r.spectrum("nai").unwrap().clone())
            .unwrap();
    }
    let truth = [
        (Segment::K40, 1030.0),
        (Segment::UPre, 76.0),
        (Segment::UPost, 76.0),
        (Segment::ThA, 126.0),
        (Segment::ThB, 82.0),
    ];
    let resolution = NaiResolution::from_fwhm_at(100.0, 1000.0).unwrap();
    // a one-hour measurement
    let livetime = 3600.0;
    let rates = templates.predict(&truth.iter().copied().collect()).unwrap();
    let b = templates.get(Segment::K40).unwrap().binning().clone();
    // content far below the fit window is left out, as the fit does; the
    // 20 keV bins are coarser than the resolution there
    let mean: Vec<f64> = rates
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if b.center(i) >= 100.0 {
                r * livetime
            } else {
                0.0
            }
        })
        .collect();
    let mean = EnergySpectrum::from_counts(b.clone(), mean, livetime).unwrap();
    let mean = nai_smear(&mean, &resolution).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let counts: Vec<f64> = mean
        .counts()
        .iter()
        .map(|&m| {
            if m > 0.0 {
                Poisson::new(m).unwrap().sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    let measured = EnergySpectrum::from_counts(b, counts, livetime).unwrap();

    let fit = fit_activities(&measured, &templates, None, &ActivityFitOptions::default()).unwrap();
    let mut out = Vec::new();
    let mut pulls = Vec::new();
    let mut ok = true;
    for (label, want, rel_err) in [
        ("K40", 1030.0, 0.01),
        ("U", 76.0, 0.01),
        ("Th-a", 126.0, 0.01),
        ("Th-b", 82.0, 0.003),
    ] {
        let e = fit.activity(label).unwrap();
        let pull = (e.value - want) / e.error;
        ok &= pull.abs() < 3.0;
        pulls.push(format!(
            "{label} {:.1}±{:.2}%",
            e.value,
            100.0 * e.relative_error()
        ));
        out.push(check(
            e.relative_error() > rel_err / 3.0 && e.relative_error() < rel_err * 3.0,
            format!("{label} error ≈{:.1}%", 100.0 * rel_err),
        ));
    }
    let a = fit.resolution_scale;
    ok &= ((a.value - resolution.scale()) / a.error).abs() < 3.0;
    out.insert(
        0,
        check(
            ok,
            format!(
                "within 3σ: {} A {:.3}±{:.3}",
                pulls.join(" "),
                a.value,
                a.error
            ),
        ),
    );
    let floated = fit_activities(
        &measured,
        &templates,
        None,
        &ActivityFitOptions {
            float_u_pre: true,
            ..ActivityFitOptions::default()
        },
    )
    .unwrap();
    let u_pre = floated.activity("U-pre").unwrap();
    out.push(check(
        !(u_pre.relative_error() < 1.0),
        format!("floated U-pre {:.0} ± {:.0}", u_pre.value, u_pre.error),
    ));
    let secs = t0.elapsed().as_secs_f64();
    out.push(check(secs < 300.0, format!("{secs:.0} s")));
    out
}

fn mono_events(n: usize, spacing_s: f64, e_kev: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| (spacing_s * (i + 1) as f64, e_kev))
        .collect()
}

// 9
fn pulse_pipeline(lab: &mut Lab) -> Vec<Check> {
    let mut out = Vec::new();
    let shape = PulseShapeParams::default();
    let tkid = TkidResponseModel::default();

    // noiseless and DC shift
    let n = 512;
    let (f, s) = shape.templates(n, 40.0);
    let (af, a_s) = (0.0123, 0.0456);
    let samples: Vec<f64> = (0..n).map(|i| af * f[i] + a_s * s[i] - 0.3).collect();
    let rec = PulseRecord {
        sample_period_ns: SAMPLE_PERIOD_NS,
        pre_trigger: 40,
        samples,
        trigger_index: 40,
        timestamp_s: 0.0,
        pileup: false,
    };
    let flat = NoiseModel::white_plus_flicker(1e-10, 1000.0).unwrap();
    let fit = two_template_fit(&rec, &f, &s, &flat).unwrap();
    let exact = ((fit.a_fast - af) / af)
        .abs()
        .max(((fit.a_slow - a_s) / a_s).abs());
    out.push(check(
        exact < 1e-9,
        format!("noiseless rel err {exact:.1e}"),
    ));
    let shifted = PulseRecord {
        samples: rec.samples.iter().map(|v| v + 17.5).collect(),
        ..rec.clone()
    };
    let fit2 = two_template_fit(&shifted, &f, &s, &flat).unwrap();
    let dc = ((fit2.a_slow - fit.a_slow) / fit.a_slow).abs();
    out.push(check(dc < 1e-9, format!("DC shift {dc:.1e}")));

    // white-noise ensemble
    let white = NoiseModel::new(vec![(1.0, 1e-10), (SAMPLE_RATE_HZ, 1e-10)]).unwrap();
    let filter = OptimalFilter::new(&shape, &white, n, 40.0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let k = 2000;
    let est: Vec<f64> = (0..k)
        .map(|_| {
            let x = white.generate(n, &mut rng);
            let y: Vec<f64> = (0..n)
                .map(|i| x[i] + 0.35 * 0.01 * f[i] + 0.01 * s[i])
                .collect();
            filter.fit(&y).unwrap().a_slow
        })
        .collect();
    let mean = est.iter().sum::<f64>() / k as f64;
    let z = (mean - 0.01) / (filter.sigma_slow() / (k as f64).sqrt());
    out.push(check(z.abs() < 3.0, format!("white-noise bias {z:.2}σ")));

    // end-to-end linearity and the blended calibration peak
    let cfg = TriggerConfig::default();
    let noise = noise_for_filter_fwhm(&shape, &tkid, &cfg, 2.5).unwrap();
    let of = OptimalFilter::for_trigger(&shape, &noise, &cfg).unwrap();
    let fs = filter_sigma_kev(&of, &tkid, CALIBRATION_LINE_KEV).unwrap();
    let resp = PulseResponse {
        tkid,
        target: TkidResolution::ConstantFwhm { fwhm_kev: 20.0 },
        filter_sigma_kev: fs,
    };
    let quiet = PulseResponse {
        target: TkidResolution::ConstantFwhm { fwhm_kev: 0.0 },
        ..resp
    };
    let mut pts = Vec::new();
    for e in [42.0, 133.0, 420.0, 1330.0, 4200.0] {
        let stream = synthesize_stream(
            &mono_events(100, 0.01, e),
            &shape,
            Some(&noise),
            &quiet,
            1.05,
            0.0,
            &mut rng,
        )
        .unwrap();
        let rms = noise.rms(stream.len());
        let recs = trigger(&stream, rms, &cfg).unwrap();
        let a = recs
            .iter()
            .map(|r| of.fit(&r.samples).unwrap().a_slow)
            .sum::<f64>()
            / recs.len() as f64;
        pts.push((e.ln(), a.ln()));
    }
    let m = pts.len() as f64;
    let (sx, sy) = (
        pts.iter().map(|p| p.0).sum::<f64>(),
        pts.iter().map(|p| p.1).sum::<f64>(),
    );
    let (sxx, sxy) = (
        pts.iter().map(|p| p.0 * p.0).sum::<f64>(),
        pts.iter().map(|p| p.0 * p.1).sum::<f64>(),
    );
    let alpha = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    out.push(check(
        (0.98..=1.08).contains(&alpha),
        format!("alpha {alpha:.4}"),
    ));

    let dur = 20.0;
    let events: Vec<(f64, f64)> = (0..1998)
        .map(|i| {
            let e = if rng.random::<f64>() < CHECK_SOURCE_LINES[0].1 {
                CHECK_SOURCE_LINES[0].0
            } else {
                CHECK_SOURCE_LINES[1].0
            };
            (0.01 * (i + 1) as f64 + 0.002 * rng.random::<f64>(), e)
        })
        .collect();
    let stream =
        synthesize_stream(&events, &shape, Some(&noise), &resp, dur, 0.0, &mut rng).unwrap();
    let rms = noise.rms(stream.len());
    let mut recs = trigger(&stream, rms, &cfg).unwrap();
    let fits: Vec<_> = recs
        .iter_mut()
        .map(|r| of.fit_record(r, rms, &cfg).unwrap())
        .collect();
    let binning = BinningScheme::uniform(0.0, 200.0, 200).unwrap();
    let (_, anchor) =
        reduce_to_spectrum(&recs, &fits, &tkid, &AnchorSearch::default(), &binning, dur).unwrap();
    let peak = tkid
        .calibrate(
            anchor.unwrap(),
            (
                tkid.forward(CALIBRATION_LINE_KEV).unwrap(),
                CALIBRATION_LINE_KEV,
            ),
        )
        .unwrap();
    out.push(check(
        within(peak, 42.2, 0.5),
        format!("blend peak {peak:.2} keV"),
    ));

    let chip = ChipSpec::default();
    let blend = foil_attenuation(&lab.lib, &chip, 203.0, &CHECK_SOURCE_LINES, 300_000, 3).unwrap();
    let hundred = foil_attenuation(&lab.lib, &chip, 203.0, &[(100.0, 1.0)], 3_000_000, 4).unwrap();
    out.push(check(
        within(blend, 2.2, 0.2),
        format!("foil blend {blend:.2} (want 2.2 ± 0.2)"),
    ));
    out.push(check(
        within(hundred, 1.1, 0.05),
        format!("foil 100 keV {hundred:.3} (want 1.1 ± 0.05)"),
    ));
    out
}

// 10
fn tkid_bounds(_: &mut Lab) -> Vec<Check> {
    let m = TkidResponseModel::default();
    let slope = m.forward(1.0).unwrap();
    let dev = |e: f64| m.forward(e).unwrap() / (e * slope) - 1.0;
    let below_mev = (1..=100)
        .map(|k| 10.0 * k as f64)
        .map(|e| dev(e).abs())
        .fold(0.0, f64::max);
    let at_10 = dev(10_000.0).abs();
    let anchor = (
        m.forward(CALIBRATION_LINE_KEV).unwrap(),
        CALIBRATION_LINE_KEV,
    );
    let round = (0..=40)
        .map(|k| 10f64.powf(k as f64 / 10.0) * 1.0)
        .filter(|&e| e <= 10_000.0)
        .map(|e| (m.calibrate(m.forward(e).unwrap(), anchor).unwrap() / e - 1.0).abs())
        .fold(0.0, f64::max);
    vec![
        check(
            below_mev < 0.03,
            format!("deviation below 1 MeV {:.2}%", 100.0 * below_mev),
        ),
        check(at_10 <= 0.20, format!("at 10 MeV {:.1}%", 100.0 * at_10)),
        check(round < 1e-6, format!("calibrate∘forward {round:.1e}")),
    ]
}

// 11
fn frame_model(lab: &mut Lab) -> Vec<Check> {
    let (rt, pt) = budget(lab.terrestrial_si(500.0), "island", 40.0);
    let (rtf, ptf) = budget(lab.terrestrial_si(500.0), "island+frame", 40.0);
    let (rc, pc) = budget(
        lab.cosmic_si(500.0, Orientation::Horizontal),
        "island",
        40.0,
    );
    let (rcf, pcf) = budget(
        lab.cosmic_si(500.0, Orientation::Horizontal),
        "island+frame",
        40.0,
    );
    let (r0, p0, r1, p1) = (rt + rc, pt + pc, rtf + rcf, ptf + pcf);
    vec![
        check(
            within_rel(r0, 0.0227, 0.3),
            format!("without frame {r0:.4} /s, {p0:.2} keV/s (want 0.0227)"),
        ),
        check(
            within_rel(r1, 0.035, 0.3),
            format!("with frame {r1:.4} /s (want 0.035)"),
        ),
        check(
            within_rel(p1, 5.9, 0.3),
            format!("{p1:.2} keV/s (want 5.9)"),
        ),
    ]
}

/// Pearson χ² between two spectra's rates over the given coarse bins.
fn compatibility(
    a: &EnergySpectrum,
    b: &EnergySpectrum,
    coarse: &BinningScheme,
    e_min: f64,
) -> (f64, usize) {
    let (a, b) = (a.rebin(coarse).unwrap(), b.rebin(coarse).unwrap());
    let (la, lb) = (a.livetime(), b.livetime());
    let mut chi2 = 0.0;
    let mut dof = 0;
    for i in 0..coarse.n_bins() {
        if coarse.edges()[i] < e_min {
            continue;
        }
        let var = a.sumw2()[i] / (la * la) + b.sumw2()[i] / (lb * lb);
        if var > 0.0 {
            chi2 += (a.counts()[i] / la - b.counts()[i] / lb).powi(2) / var;
            dof += 1;
        }
    }
    (chi2, dof)
}

// 12
fn sapphire(lab: &mut Lab) -> Vec<Check> {
    let chip = ChipSpec {
        substrate: SubstrateMaterial::Sapphire,
        thickness_um: 300.0,
        ..ChipSpec::default()
    };
    let sap = lab
        .cosmic("cosmic-sapphire-300", chip, COSMIC_PRIMARIES, 121)
        .spectrum("island")
        .unwrap()
        .clone();
    let si = lab
        .cosmic_si(500.0, Orientation::Horizontal)
        .spectrum("island")
        .unwrap()
        .clone();
    // logarithmic 100 keV – 20 MeV bins on the 5 keV grid
    let mut edges: Vec<f64> = vec![0.0, 100.0];
    while *edges.last().unwrap() < 20_000.0 {
        let next = (edges.last().unwrap() * 1.25 / 5.0).round() * 5.0;
        edges.push(next.min(20_000.0));
    }
    let coarse = BinningScheme::new(edges).unwrap();
    let (chi2, dof) = compatibility(&si, &sap, &coarse, 100.0);
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2);
    let lo = |s: &EnergySpectrum| s.integrate(0.0, 100.0).unwrap().event_rate;
    let ratio = lo(&si) / lo(&sap);
    vec![
        check(
            p > 0.001,
            format!("above 100 keV chi2 {chi2:.1}/{dof} p={p:.3}"),
        ),
        check(
            within(ratio, 5.0 / 3.0, 0.2),
            format!("below 100 keV Si/sapphire {ratio:.2} (want 1.67 ± 0.2)"),
        ),
    ]
}

// 13
fn determinism(lab: &mut Lab) -> Vec<Check> {
    let geom = lab.chip_geom(&ChipSpec::default(), true);
    let ground = lab.chip_geom(&ChipSpec::default(), false);
    let sampler = DecaySampler::new(&lab.catalog, &ActivityConfig::default()).unwrap();
    let sources = [
        (SourceSpec::Cosmic(CosmicFluxModel::reference()), &geom),
        (
            SourceSpec::Terrestrial {
                sampler,
                bank_primaries: 20_000,
            },
            &ground,
        ),
    ];
    let csv = |src: &SourceSpec, g: &SlabStack, threads: usize| -> Vec<String> {
        let opts = CampaignOptions {
            threads: Some(threads),
            ..CampaignOptions::new(40_000, 13)
        };
        run_campaign(src, g, &opts)
            .unwrap()
            .spectra
            .values()
            .map(|s| s.to_csv())
            .collect()
    };
    let mut ok = true;
    for (src, g) in &sources {
        let one = csv(src, g, 1);
        ok &= one == csv(src, g, 4) && one == csv(src, g, 1);
    }
    vec![check(
        ok,
        "byte-identical spectra with 1 and 4 threads and on rerun",
    )]
}

type Criterion = fn(&mut Lab) -> Vec<Check>;

fn main() {
    let criteria: [(&str, Criterion); 13] = [
        ("Landau MPV peaks", landau_mpv),
        ("Concrete escape fraction", escape_fraction),
        ("Terrestrial budgets", terrestrial_budgets),
        ("Cosmic budgets", cosmic_budgets),
        ("Thickness ratios", thickness_ratios),
        ("Orientation", orientation),
        ("NaI cosmic validation", nai_cosmic),
        ("Activity-fit self-closure", activity_closure),
        ("Pulse pipeline", pulse_pipeline),
        ("TKID nonlinearity bounds", tkid_bounds),
        ("Frame model", frame_model),
        ("Sapphire equivalence", sapphire),
        ("Determinism", determinism),
    ];
    let mut lab = Lab::new();
    let mut failed = Vec::new();
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let t0 = Instant::now();
        let checks = run(&mut lab);
        let ok = checks.iter().all(|c| c.ok);
        let detail: Vec<String> = checks
            .iter()
            .map(|c| {
                if c.ok {
                    c.text.clone()
                } else {
                    format!("{} [x]", c.text)
                }
            })
            .collect();
        println!(
            "{} {:2} {name}: {} ({:.0} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            detail.join("; "),
            t0.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    let ran = if only.is_empty() {
        criteria.len()
    } else {
        only.len()
    };
    println!("acceptance: {} of {ran} criteria pass", ran - failed.len());
    if !failed.is_empty() {
        println!("failing: {failed:?}");
        std::process::exit(1);
    }
}
