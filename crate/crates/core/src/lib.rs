//! Natural radiation backgrounds in small cryogenic substrates: flux and
//! decay-line sources, slab transport, detector response, spectrum fitting
//! and thermal-detector pulse processing.

pub mod fitting;
pub mod materials;
pub mod particle;
pub mod pulses;
pub mod response;
pub mod sources;
pub mod spectra;
pub mod transport;

/// Environment variable naming a directory that replaces the bundled data.
pub const DATA_ENV: &str = "SUBSTRATE_BG_DATA";
