use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use substrate_bg::particle::Species;
use substrate_bg::sources::{
    reference_tables, ActivityConfig, CosmicFluxModel, DecaySampler, FluxTable, GenerationPlane,
    LineCatalog, Segment, SlabRegion, BOULDER_ALTITUDE_M,
};

// Kolmogorov distance between the empirical CDF of `xs` and `cdf`.
fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

// 0.1% critical value of the one-sample KS statistic
fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

#[test]
fn flux_table_samples_follow_their_marginals() {
    for table in reference_tables(BOULDER_ALTITUDE_M) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 20_000;
        let draws: Vec<(f64, f64)> = (0..n).map(|_| table.sample(&mut rng)).collect();
        let de = ks_distance(draws.iter().map(|d| d.0).collect(), |e| table.cdf_energy(e));
        let dc = ks_distance(draws.iter().map(|d| d.1).collect(), |c| table.cdf_cos(c));
        assert!(de < ks_critical(n), "{:?} energy D = {de}", table.species());
        assert!(dc < ks_critical(n), "{:?} cos D = {dc}", table.species());
    }
}

#[test]
fn cos_squared_muons_sample_as_cos_cubed_crossing() {
    // flux ∝ cos²θ gives plane crossings with density ∝ cos³θ, CDF c⁴
    let e: Vec<f64> = (0..=20)
        .map(|i| 10f64.powf(2.0 + 0.15 * i as f64))
        .collect();
    let c: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    let t = FluxTable::from_fn(Species::MuMinus, e, c, |e, c| c * c * e.powf(-2.7)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 30_000;
    let cs: Vec<f64> = (0..n).map(|_| t.sample(&mut rng).1).collect();
    let d = ks_distance(cs, |c| c.powi(4));
    assert!(d < ks_critical(n), "D = {d}");
}

#[test]
fn primaries_start_on_the_plane_heading_down() {
    let model = CosmicFluxModel::reference();
    let plane = GenerationPlane {
        z_cm: 300.0,
        side_cm: 200.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 20_000;
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let p = model.sample(&plane, &mut rng);
        assert_eq!(p.position_cm[2], 300.0);
        assert!(p.direction[2] <= 0.0);
        let norm: f64 = p.direction.iter().map(|d| d * d).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        xs.push(p.position_cm[0]);
    }
    let d = ks_distance(xs, |x| (x / 200.0 + 0.5).clamp(0.0, 1.0));
    assert!(d < ks_critical(n), "D = {d}");
}

#[test]
fn decay_segments_follow_activity_times_yield() {
    let cat = LineCatalog::bundled();
    let act = ActivityConfig::default();
    let s = DecaySampler::new(&cat, &act).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        let (seg, _) = s.sample_line(&mut rng);
        counts[Segment::ALL.iter().position(|&x| x == seg).unwrap()] += 1;
    }
    let weights: Vec<f64> = Segment::ALL
        .iter()
        .map(|&g| act.activity(g) * cat.segment_yield(g))
        .collect();
    let total: f64 = weights.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, w)| {
            let exp = n as f64 * w / total;
            (c as f64 - exp).powi(2) / exp
        })
        .sum();
    // 4 degrees of freedom, 0.1% level
    assert!(chi2 < 18.47, "chi2 = {chi2}");
}

#[test]
fn slab_emission_is_isotropic_and_inside_the_slab() {
    let cat = LineCatalog::bundled();
    let s = DecaySampler::new(&cat, &ActivityConfig::only(Segment::K40, 500.0)).unwrap();
    let slab = SlabRegion {
        z_bottom_cm: -22.0,
        z_top_cm: 0.0,
        side_cm: 400.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 20_000;
    let mut uz = Vec::with_capacity(n);
    for _ in 0..n {
        let p = s.sample(&slab, &mut rng);
        assert!((p.energy_kev - 1460.82).abs() < 0.01);
        assert!((-22.0..=0.0).contains(&p.position_cm[2]));
        assert!(p.position_cm[0].abs() <= 200.0 && p.position_cm[1].abs() <= 200.0);
        uz.push(p.direction[2]);
    }
    let d = ks_distance(uz, |c| (c + 1.0) / 2.0);
    assert!(d < ks_critical(n), "D = {d}");
}

proptest! {
    #[test]
    fn flux_model_csv_round_trips(em in 0.1f64..3.0, had in 0.1f64..3.0, k in 1usize..4) {
        let tables: Vec<FluxTable> = reference_tables(BOULDER_ALTITUDE_M).into_iter().take(k).collect();
        let m = CosmicFluxModel::new(tables).unwrap().with_scales(em, had).unwrap();
        let back = CosmicFluxModel::parse_csv(&m.to_csv()).unwrap();
        prop_assert_eq!(back.tables(), m.tables());
    }

    #[test]
    fn emission_rate_is_linear_in_activity(a in 1.0f64..5000.0, f in 0.1f64..10.0) {
        let cat = LineCatalog::bundled();
        let r1 = DecaySampler::new(&cat, &ActivityConfig::only(Segment::ThB, a)).unwrap().emission_rate_per_cm2();
        let r2 = DecaySampler::new(&cat, &ActivityConfig::only(Segment::ThB, a * f)).unwrap().emission_rate_per_cm2();
        prop_assert!((r2 / r1 / f - 1.0).abs() < 1e-12);
    }
}
