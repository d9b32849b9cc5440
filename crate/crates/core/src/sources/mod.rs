//! Primary particle generators: cosmic-ray secondaries and decay-chain gammas.

mod cosmic;
mod lines;
mod phase_space;

use thiserror::Error;

pub use cosmic::{
    muon_flux, reference_tables, CosmicFluxModel, FluxTable, GenerationPlane, ScaleMode,
    BOULDER_ALTITUDE_M, MUON_CHARGE_RATIO,
};
pub use lines::{ActivityConfig, DecaySampler, EmissionLine, LineCatalog, Segment, SlabRegion};
pub use phase_space::{read_phase_space, write_phase_space};

use crate::particle::Species;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("flux table line {line}: {msg}")]
    FluxRow { line: usize, msg: String },
    #[error("flux table for {species}: {msg}")]
    FluxGrid { species: Species, msg: String },
    #[error("flux model has no particles to generate")]
    EmptyModel,
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
    #[error("line catalog line {line}: {msg}")]
    CatalogRow { line: usize, msg: String },
    #[error("all segment activities are zero")]
    ZeroActivity,
    #[error("activity for {0} is negative")]
    NegativeActivity(Segment),
    #[error("slab must have positive thickness and density")]
    BadSlab,
    #[error("phase-space line {line}: {msg}")]
    PhaseSpaceRow { line: usize, msg: String },
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}
