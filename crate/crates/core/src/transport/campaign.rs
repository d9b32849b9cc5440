use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::geometry::{Layer, SlabStack, VolumeKind};
use super::tracker::{transport_event_from, transport_event_with, EnergyLedger};
use super::TransportError;
use crate::particle::{ParticleState, Species, Vec3};
use crate::response::FrameCouplingModel;
use crate::sources::{CosmicFluxModel, DecaySampler, GenerationPlane, SlabRegion};
use crate::spectra::{BinningScheme, EnergySpectrum};

/// Primaries per work unit. Chunks are the unit of parallelism and are
/// merged in index order, so results do not depend on the thread count.
const CHUNK: u64 = 4096;
/// Chunks held in memory before they are folded into the spectra.
const BATCH_CHUNKS: u64 = 64;
/// Stream offset separating the terrestrial banking stage from stage two.
const BANK_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone)]
pub enum SourceSpec {
    /// Flux through a horizontal plane above everything.
    Cosmic(CosmicFluxModel),
    /// Decay gammas from the floor slab, in two stages: photons escaping
    /// the top of an isolated slab are banked, then replayed from the slab
    /// surface into the full geometry.
    Terrestrial {
        sampler: DecaySampler,
        bank_primaries: u64,
    },
    /// A fixed particle repeated; one primary per second of livetime.
    Pencil(ParticleState),
}

#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub n_primaries: u64,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub binning: BinningScheme,
    pub nai_binning: BinningScheme,
    pub frame_coupling: Option<FrameCouplingModel>,
}

impl CampaignOptions {
    pub fn new(n_primaries: u64, seed: u64) -> Self {
        Self {
            n_primaries,
            seed,
            threads: None,
            binning: BinningScheme::uniform(0.0, 20_000.0, 4000).expect("valid binning"),
            nai_binning: BinningScheme::uniform(0.0, 100_000.0, 5000).expect("valid binning"),
            frame_coupling: Some(FrameCouplingModel::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    /// `island`, `frame_raw`, `frame_apparent`, `island+frame`, `nai` and
    /// `island/<species>`, `nai/<species>` split by the species that entered
    /// the volume.
    pub spectra: BTreeMap<String, EnergySpectrum>,
    pub n_primaries: u64,
    /// Primaries per second represented by the source.
    pub source_rate_per_s: f64,
    pub livetime_s: f64,
    pub ledger: EnergyLedger,
    /// Photons leaving the slab top per emitted photon (terrestrial only).
    pub slab_escape_fraction: Option<f64>,
}

impl CampaignResult {
    pub fn spectrum(&self, name: &str) -> Option<&EnergySpectrum> {
        self.spectra.get(name)
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    island_species: Species,
    nai_species: Species,
    weight: f64,
    island: f64,
    frame_raw: f64,
    frame_apparent: f64,
    nai: f64,
}

struct Bank {
    photons: Vec<(f64, Vec3)>,
    floor_top: f64,
    emitted: u64,
}

fn primary_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn floor_layer(geom: &SlabStack) -> Result<&Layer, TransportError> {
    geom.layer_named("floor").ok_or_else(|| {
        TransportError::Campaign("terrestrial source needs a layer named `floor`".into())
    })
}

fn in_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, TransportError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| TransportError::Campaign(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Stage one of the terrestrial source: emit inside an isolated slab and
/// keep photons that leave its top face.
fn build_bank(
    sampler: &DecaySampler,
    floor: &Layer,
    n: u64,
    seed: u64,
) -> Result<Bank, TransportError> {
    let slab = SlabStack::new(vec![floor.clone()], vec![])?;
    let region = SlabRegion {
        z_bottom_cm: floor.z_bottom_cm,
        z_top_cm: floor.z_top_cm,
        side_cm: 1.0,
    };
    let top = floor.z_top_cm;
    let chunks: Vec<Vec<(f64, Vec3)>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let mut rng = primary_rng(seed, BANK_STREAM + i);
                let p = sampler.sample(&region, &mut rng);
                transport_event_with(&p, i, &slab, &mut rng, &mut |e| {
                    if e.species == Species::Gamma
                        && e.direction[2] > 0.0
                        && e.position_cm[2] >= top
                    {
                        out.push((e.energy_kev, e.direction));
                    }
                });
            }
            out
        })
        .collect();
    Ok(Bank {
        photons: chunks.into_iter().flatten().collect(),
        floor_top: top,
        emitted: n,
    })
}

fn generate(
    source: &SourceSpec,
    bank: Option<&Bank>,
    geom: &SlabStack,
    rng: &mut ChaCha8Rng,
) -> ParticleState {
    let l = geom.cell_side_cm();
    match source {
        SourceSpec::Cosmic(model) => {
            let plane = GenerationPlane {
                z_cm: geom.world_z().1 + 1.0,
                side_cm: l,
            };
            model.sample(&plane, rng)
        }
        SourceSpec::Terrestrial { .. } => {
            let bank = bank.expect("bank built for terrestrial source");
            let k = rng.random_range(0..bank.photons.len());
            let (e, u) = bank.photons[k];
            let x = (rng.random::<f64>() - 0.5) * l;
            let y = (rng.random::<f64>() - 0.5) * l;
            ParticleState {
                species: Species::Gamma,
                energy_kev: e,
                direction: u,
                position_cm: [x, y, bank.floor_top],
                weight: 1.0,
            }
        }
        SourceSpec::Pencil(p) => *p,
    }
}

/// Run `n_primaries` through `geom` and histogram deposits per volume,
/// normalised to real time through the source rate.
pub fn run_campaign(
    source: &SourceSpec,
    geom: &SlabStack,
    opts: &CampaignOptions,
) -> Result<CampaignResult, TransportError> {
    if opts.n_primaries == 0 {
        return Err(TransportError::Campaign(
            "n_primaries must be at least 1".into(),
        ));
    }
    if let Some(fc) = &opts.frame_coupling {
        fc.validate()
            .map_err(|e| TransportError::Campaign(e.to_string()))?;
    }
    in_pool(opts.threads, || run_inner(source, geom, opts))?
}

fn run_inner(
    source: &SourceSpec,
    geom: &SlabStack,
    opts: &CampaignOptions,
) -> Result<CampaignResult, TransportError> {
    let l2 = geom.cell_side_cm().powi(2);
    let (bank, rate, escape) = match source {
        SourceSpec::Cosmic(model) => (None, model.rate_per_cm2() * l2, None),
        SourceSpec::Terrestrial {
            sampler,
            bank_primaries,
        } => {
            let bank = build_bank(
                sampler,
                floor_layer(geom)?,
                (*bank_primaries).max(1),
                opts.seed,
            )?;
            if bank.photons.is_empty() {
                return Err(TransportError::Campaign(
                    "no photons escaped the floor slab; raise bank_primaries".into(),
                ));
            }
            let frac = bank.photons.len() as f64 / bank.emitted as f64;
            (
                Some(bank),
                sampler.emission_rate_per_cm2() * frac * l2,
                Some(frac),
            )
        }
        SourceSpec::Pencil(_) => (None, 1.0, None),
    };
    let footprint = match source {
        SourceSpec::Terrestrial { .. } => {
            Some(floor_layer(geom)?.half_width_cm).filter(|w| w.is_finite())
        }
        _ => None,
    };
    let has = |k: VolumeKind| geom.volume(k).is_some();
    let coupling = opts.frame_coupling.as_ref();

    let mut spectra: BTreeMap<String, EnergySpectrum> = BTreeMap::new();
    let mut add = |name: String, b: &BinningScheme| -> Result<(), TransportError> {
        spectra.insert(name, EnergySpectrum::new(b.clone(), 1.0)?);
        Ok(())
    };
    if has(VolumeKind::Island) {
        add("island".into(), &opts.binning)?;
        for s in Species::ALL {
            add(format!("island/{}", s.label()), &opts.binning)?;
        }
    }
    if has(VolumeKind::Frame) {
        add("frame_raw".into(), &opts.binning)?;
        add("frame_apparent".into(), &opts.binning)?;
        add("island+frame".into(), &opts.binning)?;
    }
    if has(VolumeKind::Nai) {
        add("nai".into(), &opts.nai_binning)?;
        for s in Species::ALL {
            add(format!("nai/{}", s.label()), &opts.nai_binning)?;
        }
    }

    let n = opts.n_primaries;
    let n_chunks = n.div_ceil(CHUNK);
    let mut ledger = EnergyLedger::default();
    let mut batch_start = 0;
    while batch_start < n_chunks {
        let batch_end = (batch_start + BATCH_CHUNKS).min(n_chunks);
        let results: Vec<(Vec<Scored>, EnergyLedger)> = (batch_start..batch_end)
            .into_par_iter()
            .map(|c| {
                let mut scored = Vec::new();
                let mut led = EnergyLedger::default();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = primary_rng(opts.seed, i);
                    let p = generate(source, bank.as_ref(), geom, &mut rng);
                    let r = transport_event_from(&p, i, geom, footprint, &mut rng, &mut |_| {});
                    led.add(&r.ledger);
                    if !r.any() {
                        continue;
                    }
                    let frame_apparent = coupling.map_or(0.0, |fc| {
                        r.frame_hits
                            .iter()
                            .map(|h| fc.couple(h.energy_kev, h.xy_cm))
                            .sum()
                    });
                    scored.push(Scored {
                        island_species: r.incident[VolumeKind::Island.index()].unwrap_or(r.species),
                        nai_species: r.incident[VolumeKind::Nai.index()].unwrap_or(r.species),
                        weight: r.weight,
                        island: r.deposit(VolumeKind::Island),
                        frame_raw: r.deposit(VolumeKind::Frame),
                        frame_apparent,
                        nai: r.deposit(VolumeKind::Nai),
                    });
                }
                (scored, led)
            })
            .collect();
        for (scored, led) in results {
            ledger.add(&led);
            for s in scored {
                let mut fill = |name: &str, e: f64| -> Result<(), TransportError> {
                    if e > 0.0 {
                        if let Some(sp) = spectra.get_mut(name) {
                            sp.accumulate(e, s.weight)?;
                        }
                    }
                    Ok(())
                };
                fill("island", s.island)?;
                fill(&format!("island/{}", s.island_species.label()), s.island)?;
                fill("frame_raw", s.frame_raw)?;
                fill("frame_apparent", s.frame_apparent)?;
                fill("island+frame", s.island + s.frame_apparent)?;
                fill("nai", s.nai)?;
                fill(&format!("nai/{}", s.nai_species.label()), s.nai)?;
            }
        }
        batch_start = batch_end;
    }
    let livetime = n as f64 / rate;
    for sp in spectra.values_mut() {
        sp.set_livetime(livetime)?;
    }
    Ok(CampaignResult {
        spectra,
        n_primaries: n,
        source_rate_per_s: rate,
        livetime_s: livetime,
        ledger,
        slab_escape_fraction: escape,
    })
}

/// Photons leaving the top of a slab per photon emitted uniformly inside it.
pub fn slab_escape_fraction(
    sampler: &DecaySampler,
    slab: &Layer,
    n: u64,
    seed: u64,
) -> Result<f64, TransportError> {
    let bank = build_bank(sampler, slab, n.max(1), seed)?;
    Ok(bank.photons.len() as f64 / bank.emitted as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialLibrary;
    use crate::sources::{ActivityConfig, LineCatalog};
    use crate::transport::{ChipSpec, LabSpec};

    fn lib() -> MaterialLibrary {
        MaterialLibrary::bundled().unwrap()
    }

    #[test]
    fn zero_primaries_rejected() {
        let geom = LabSpec::bare()
            .with_chip(&lib(), &ChipSpec::default())
            .unwrap();
        let p = ParticleState {
            species: Species::Gamma,
            energy_kev: 100.0,
            direction: [0.0, 0.0, -1.0],
            position_cm: [0.0, 0.0, 1.0],
            weight: 1.0,
        };
        assert!(run_campaign(&SourceSpec::Pencil(p), &geom, &CampaignOptions::new(0, 1)).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let geom = LabSpec::default()
            .with_chip(&lib(), &ChipSpec::default())
            .unwrap();
        let src = SourceSpec::Cosmic(CosmicFluxModel::reference());
        let mut o = CampaignOptions::new(9000, 77);
        o.threads = Some(1);
        let a = run_campaign(&src, &geom, &o).unwrap();
        o.threads = Some(3);
        let b = run_campaign(&src, &geom, &o).unwrap();
        assert_eq!(a.spectra, b.spectra);
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn pencil_livetime_is_primary_count() {
        let chip = ChipSpec {
            lid_thickness_mm: 0.0,
            ..Default::default()
        };
        let geom = LabSpec::bare().with_chip(&lib(), &chip).unwrap();
        let p = ParticleState {
            species: Species::Gamma,
            energy_kev: 60.0,
            direction: [0.0, 0.0, -1.0],
            position_cm: [0.0, 0.0, 1.0],
            weight: 1.0,
        };
        let r = run_campaign(
            &SourceSpec::Pencil(p),
            &geom,
            &CampaignOptions::new(5000, 3),
        )
        .unwrap();
        assert_eq!(r.livetime_s, 5000.0);
        let island = r.spectrum("island").unwrap();
        // 1 - exp(-μt) ≈ 3% for 500 µm Si at 60 keV
        let f = island.total() / 5000.0;
        assert!(f > 0.02 && f < 0.045, "{f}");
        assert!((r.ledger.imbalance()).abs() < 1e-6 * r.ledger.initial);
    }

    #[test]
    fn concrete_slab_escape_fraction() {
        let sampler =
            DecaySampler::new(&LineCatalog::bundled(), &ActivityConfig::default()).unwrap();
        let geom = LabSpec::default()
            .with_chip(&lib(), &ChipSpec::default())
            .unwrap();
        let f = slab_escape_fraction(&sampler, floor_layer(&geom).unwrap(), 40_000, 11).unwrap();
        assert!((f - 0.20).abs() < 0.05, "{f}");
    }
}
