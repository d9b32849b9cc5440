//! Monte Carlo transport through planar layers and small sensitive volumes.

mod campaign;
mod geometry;
mod tracker;

pub use campaign::*;
pub use geometry::*;
pub use tracker::*;

use thiserror::Error;

use crate::materials::MaterialError;
use crate::sources::SourceError;
use crate::spectra::SpectrumError;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("campaign: {0}")]
    Campaign(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}
