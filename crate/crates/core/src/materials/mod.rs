//! Materials and their interaction data.

mod neutron;
mod photon;
mod stopping;
mod straggling;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

pub use neutron::{
    elastic_barn, elastic_kinematics, inelastic_barn, sample_breakup, Breakup, ElasticScatter,
    NeutronTable, INELASTIC_MIN_KEV,
};
pub use photon::{PhotonMu, PhotonXsTable, PAIR_THRESHOLD_KEV};
pub use stopping::{kinematics, mass_stopping, max_transfer_kev, RangeTable, StoppingParams};
pub use straggling::{
    delta_cos_theta, landau_params, sample_landau, sample_thin_loss, straggled_loss, LandauParams,
    ThinLoss, DELTA_CUT_KEV, LANDAU_MODE,
};

use crate::particle::Species;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("energy {energy_kev} keV outside [{lo}, {hi}] keV")]
    EnergyOutOfRange { energy_kev: f64, lo: f64, hi: f64 },
    #[error("species {0} not supported here")]
    UnsupportedSpecies(Species),
    #[error("mass fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("density must be positive, got {0}")]
    BadDensity(f64),
    #[error("table: {0}")]
    Table(String),
    #[error("unknown material `{0}`")]
    Unknown(String),
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub z: u32,
    pub a: f64,
    pub mass_fraction: f64,
}

/// Energy limits (keV) of the range tables.
const LEPTON_RANGE: (f64, f64) = (10.0, 1.0e8);
const HEAVY_RANGE: (f64, f64) = (1.0e3, 1.0e10);

#[derive(Debug, Clone)]
struct RangeSet {
    electron: RangeTable,
    positron: RangeTable,
    muon: RangeTable,
    pion: RangeTable,
    proton: RangeTable,
}

#[derive(Debug, Clone)]
pub struct Material {
    name: String,
    density: f64,
    composition: Vec<Element>,
    z_over_a: f64,
    photon: PhotonXsTable,
    stopping: StoppingParams,
    ranges: Arc<RangeSet>,
    neutron: Arc<NeutronTable>,
    /// Radiation length, g/cm².
    x0: f64,
}

/// Radiation length of one element, g/cm² (Dahl's fit).
fn element_x0(z: u32, a: f64) -> f64 {
    let z = z as f64;
    716.4 * a / (z * (z + 1.0) * (287.0 / z.sqrt()).ln())
}

impl Material {
    pub fn new(
        name: &str,
        density: f64,
        composition: Vec<Element>,
        photon: PhotonXsTable,
        stopping: StoppingParams,
    ) -> Result<Self, MaterialError> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(MaterialError::BadDensity(density));
        }
        let sum: f64 = composition.iter().map(|e| e.mass_fraction).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MaterialError::FractionSum(sum));
        }
        let z_over_a = composition
            .iter()
            .map(|e| e.mass_fraction * e.z as f64 / e.a)
            .sum();
        let build =
            |s: Species, (lo, hi): (f64, f64)| RangeTable::build(&stopping, z_over_a, s, lo, hi);
        let ranges = RangeSet {
            electron: build(Species::Electron, LEPTON_RANGE),
            positron: build(Species::Positron, LEPTON_RANGE),
            muon: build(Species::MuMinus, HEAVY_RANGE),
            pion: build(Species::PiMinus, HEAVY_RANGE),
            proton: build(Species::Proton, HEAVY_RANGE),
        };
        let neutron = NeutronTable::build(&composition, density);
        let x0 = 1.0
            / composition
                .iter()
                .map(|e| e.mass_fraction / element_x0(e.z, e.a))
                .sum::<f64>();
        Ok(Self {
            name: name.to_string(),
            density,
            composition,
            z_over_a,
            photon,
            stopping,
            ranges: Arc::new(ranges),
            neutron: Arc::new(neutron),
            x0,
        })
    }

    /// Same material at another density; mass coefficients are unchanged.
    pub fn with_density(&self, density: f64) -> Result<Self, MaterialError> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(MaterialError::BadDensity(density));
        }
        let mut m = self.clone();
        m.density = density;
        m.neutron = Arc::new(NeutronTable::build(&m.composition, density));
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn composition(&self) -> &[Element] {
        &self.composition
    }

    pub fn z_over_a(&self) -> f64 {
        self.z_over_a
    }

    pub fn stopping_params(&self) -> &StoppingParams {
        &self.stopping
    }

    pub fn photon_table(&self) -> &PhotonXsTable {
        &self.photon
    }

    /// Radiation length, cm.
    pub fn radiation_length(&self) -> f64 {
        self.x0 / self.density
    }

    /// Linear attenuation coefficients, cm⁻¹.
    pub fn photon_mu(&self, e_kev: f64) -> Result<PhotonMu, MaterialError> {
        Ok(self.photon.mass_mu(e_kev)?.scaled(self.density))
    }

    fn range_table(&self, species: Species) -> Result<&RangeTable, MaterialError> {
        Ok(match species {
            Species::Electron => &self.ranges.electron,
            Species::Positron => &self.ranges.positron,
            Species::MuMinus | Species::MuPlus => &self.ranges.muon,
            Species::PiMinus | Species::PiPlus => &self.ranges.pion,
            Species::Proton => &self.ranges.proton,
            s => return Err(MaterialError::UnsupportedSpecies(s)),
        })
    }

    /// Mean collision stopping power, keV/cm.
    pub fn stopping_power(&self, species: Species, e_kin_kev: f64) -> Result<f64, MaterialError> {
        let (lo, hi) = match species {
            Species::Electron | Species::Positron => (50.0, 5.0e4),
            Species::MuMinus
            | Species::MuPlus
            | Species::Proton
            | Species::PiMinus
            | Species::PiPlus => (1.0e3, 1.0e8),
            s => return Err(MaterialError::UnsupportedSpecies(s)),
        };
        if !(e_kin_kev >= lo && e_kin_kev <= hi) {
            return Err(MaterialError::EnergyOutOfRange {
                energy_kev: e_kin_kev,
                lo,
                hi,
            });
        }
        Ok(mass_stopping(&self.stopping, self.z_over_a, species, e_kin_kev) * 1e3 * self.density)
    }

    /// Electron CSDA range, cm.
    pub fn csda_range(&self, e_kev: f64) -> Result<f64, MaterialError> {
        if !(50.0..=5.0e4).contains(&e_kev) {
            return Err(MaterialError::EnergyOutOfRange {
                energy_kev: e_kev,
                lo: 50.0,
                hi: 5.0e4,
            });
        }
        Ok(self.ranges.electron.range(e_kev) / self.density)
    }

    /// CSDA range of any charged species, cm (no range check).
    pub fn range(&self, species: Species, e_kev: f64) -> Result<f64, MaterialError> {
        Ok(self.range_table(species)?.range(e_kev) / self.density)
    }

    /// Lowest energy covered by the range table for `species`.
    pub fn range_floor(&self, species: Species) -> Result<f64, MaterialError> {
        Ok(self.range_table(species)?.e_lo())
    }

    /// Kinetic energy left after `path_cm` of continuous slowing down.
    pub fn energy_after(
        &self,
        species: Species,
        e_kev: f64,
        path_cm: f64,
    ) -> Result<f64, MaterialError> {
        Ok(self
            .range_table(species)?
            .energy_after(e_kev, path_cm * self.density))
    }

    /// Macroscopic hadron–nucleus inelastic cross section, cm⁻¹.
    pub fn nuclear_sigma(&self, e_kev: f64) -> f64 {
        self.neutron.inelastic_sigma(e_kev)
    }

    pub fn nuclear_breakup<R: Rng + ?Sized>(&self, e_kev: f64, rng: &mut R) -> Breakup {
        sample_breakup(e_kev, self.z_over_a, rng)
    }

    /// Macroscopic elastic neutron cross section, cm⁻¹.
    pub fn neutron_sigma(&self, e_kev: f64) -> f64 {
        self.neutron.sigma(e_kev)
    }

    /// One elastic collision on a nucleus drawn ∝ its partial cross section.
    pub fn neutron_elastic<R: Rng + ?Sized>(&self, e_kev: f64, rng: &mut R) -> ElasticScatter {
        let a = self.neutron.pick_target(e_kev, rng);
        let mu = 2.0 * rng.random::<f64>() - 1.0;
        elastic_kinematics(a, e_kev, mu)
    }
}

fn parse_composition(text: &str) -> Result<Vec<Element>, MaterialError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("Z,") {
            continue;
        }
        let p: Vec<&str> = t.split(',').collect();
        let bad = |msg: String| MaterialError::Table(format!("composition line {}: {msg}", i + 1));
        if p.len() != 3 {
            return Err(bad("expected Z,A,frac".into()));
        }
        out.push(Element {
            z: p[0].trim().parse().map_err(|e| bad(format!("{e}")))?,
            a: p[1].trim().parse().map_err(|e| bad(format!("{e}")))?,
            mass_fraction: p[2].trim().parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

fn parse_density(photon_csv: &str) -> Option<f64> {
    photon_csv.lines().find_map(|l| {
        l.trim()
            .strip_prefix("# density_g_cm3=")
            .and_then(|v| v.trim().parse().ok())
    })
}

fn parse_stopping(text: &str) -> Result<BTreeMap<String, StoppingParams>, MaterialError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("name,") {
            continue;
        }
        let p: Vec<&str> = t.split(',').collect();
        if p.len() != 8 {
            return Err(MaterialError::Table(format!(
                "stopping line {}: expected 8 columns",
                i + 1
            )));
        }
        let mut v = [0.0; 7];
        for (k, s) in p[1..].iter().enumerate() {
            v[k] = s
                .trim()
                .parse()
                .map_err(|e| MaterialError::Table(format!("stopping line {}: {e}", i + 1)))?;
        }
        out.insert(
            p[0].trim().to_string(),
            StoppingParams {
                mean_excitation_ev: v[0],
                cbar: v[1],
                x0: v[2],
                x1: v[3],
                a: v[4],
                k: v[5],
                delta0: v[6],
            },
        );
    }
    Ok(out)
}

macro_rules! bundled {
    ($($name:literal),*) => {
        &[$(($name,
            include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/materials/", $name, ".csv")),
            include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/materials/", $name, ".composition.csv")))),*]
    };
}

const BUNDLED: &[(&str, &str, &str)] = bundled!(
    "concrete", "silicon", "aluminum", "sapphire", "nai", "copper", "iron", "lead", "water"
);
const BUNDLED_STOPPING: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/data/materials/stopping.csv"
));

/// Named materials available to geometries.
#[derive(Debug, Clone, Default)]
pub struct MaterialLibrary {
    materials: BTreeMap<String, Arc<Material>>,
}

impl MaterialLibrary {
    pub fn bundled() -> Result<Self, MaterialError> {
        let stopping = parse_stopping(BUNDLED_STOPPING)?;
        let mut lib = Self::default();
        for (name, photon, comp) in BUNDLED {
            lib.insert(build_material(name, photon, comp, &stopping)?);
        }
        Ok(lib)
    }

    /// Load every `<name>.csv` + `<name>.composition.csv` pair plus
    /// `stopping.csv` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, MaterialError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| MaterialError::Io {
                path: p.display().to_string(),
                msg: e.to_string(),
            })
        };
        let stopping = parse_stopping(&read(&dir.join("stopping.csv"))?)?;
        let mut lib = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| MaterialError::Io {
            path: dir.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter_map(|f| f.strip_suffix(".composition.csv").map(str::to_string))
            .collect();
        names.sort();
        for name in names {
            let photon = read(&dir.join(format!("{name}.csv")))?;
            let comp = read(&dir.join(format!("{name}.composition.csv")))?;
            lib.insert(build_material(&name, &photon, &comp, &stopping)?);
        }
        Ok(lib)
    }

    /// Bundled data, or the directory named by `SUBSTRATE_BG_DATA` when set.
    pub fn load_default() -> Result<Self, MaterialError> {
        match std::env::var_os(crate::DATA_ENV) {
            Some(dir) => Self::from_dir(&Path::new(&dir).join("materials")),
            None => Self::bundled(),
        }
    }

    pub fn insert(&mut self, m: Material) {
        self.materials.insert(m.name.clone(), Arc::new(m));
    }

    pub fn get(&self, name: &str) -> Result<Arc<Material>, MaterialError> {
        self.materials
            .get(name)
            .cloned()
            .ok_or_else(|| MaterialError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }
}

fn build_material(
    name: &str,
    photon_csv: &str,
    comp_csv: &str,
    stopping: &BTreeMap<String, StoppingParams>,
) -> Result<Material, MaterialError> {
    let density = parse_density(photon_csv)
        .ok_or_else(|| MaterialError::Table(format!("{name}: missing density comment")))?;
    let table = PhotonXsTable::parse_csv(photon_csv)?;
    let comp = parse_composition(comp_csv)?;
    let sp = *stopping
        .get(name)
        .ok_or_else(|| MaterialError::Table(format!("{name}: no stopping parameters")))?;
    Material::new(name, density, comp, table, sp)
}
