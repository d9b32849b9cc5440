use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use substrate_bg::pulses::{PulseShapeParams, TriggerConfig};
use substrate_bg::response::{FrameCouplingModel, TkidResponseModel};
use substrate_bg::sources::ActivityConfig;
use substrate_bg::transport::{ChipSpec, LabSpec, Orientation};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceSelection {
    Terrestrial,
    Cosmic,
    #[default]
    Both,
}

impl SourceSelection {
    pub fn terrestrial(self) -> bool {
        matches!(self, Self::Terrestrial | Self::Both)
    }

    pub fn cosmic(self) -> bool {
        matches!(self, Self::Cosmic | Self::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    #[default]
    Chip,
    Nai,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Activities {
    pub k40: f64,
    pub u_chain: f64,
    pub u_pre: Option<f64>,
    pub th_a: f64,
    pub th_b: f64,
}

impl Default for Activities {
    fn default() -> Self {
        let a = ActivityConfig::default();
        Self {
            k40: a.k40,
            u_chain: a.u_chain,
            u_pre: a.u_pre,
            th_a: a.th_a,
            th_b: a.th_b,
        }
    }
}

impl Activities {
    pub fn to_config(self, lab: &LabSpec) -> ActivityConfig {
        ActivityConfig {
            k40: self.k40,
            u_chain: self.u_chain,
            u_pre: self.u_pre,
            th_a: self.th_a,
            th_b: self.th_b,
            slab_thickness_cm: lab.floor_thickness_cm,
            ..ActivityConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosmicScales {
    pub em_scale: f64,
    pub hadronic_muon_scale: f64,
}

impl Default for CosmicScales {
    fn default() -> Self {
        Self {
            em_scale: 0.79,
            hadronic_muon_scale: 0.88,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryFile {
    lab: Option<LabSpec>,
    chip: Option<ChipSpec>,
}

fn default_thicknesses() -> Vec<f64> {
    vec![500.0]
}

fn default_bank() -> u64 {
    200_000
}

fn yes() -> bool {
    true
}

/// One campaign manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// TOML file with `[lab]` and `[chip]` tables; inline tables win.
    #[serde(default)]
    pub geometry: Option<PathBuf>,
    #[serde(default)]
    pub sources: SourceSelection,
    #[serde(default)]
    pub detector: Detector,
    #[serde(default)]
    pub nai_axis: Orientation,
    pub n_primaries: u64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_thicknesses")]
    pub thicknesses_um: Vec<f64>,
    #[serde(default)]
    pub activities: Activities,
    #[serde(default)]
    pub cosmic: CosmicScales,
    #[serde(default)]
    pub lab: Option<LabSpec>,
    #[serde(default)]
    pub chip: Option<ChipSpec>,
    #[serde(default = "default_bank")]
    pub bank_primaries: u64,
    #[serde(default = "yes")]
    pub frame_model: bool,
    #[serde(default)]
    pub frame_coupling: FrameCouplingModel,
}

/// 1-based line of the first `key =` or `[key]` in the text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .is_some_and(|r| r.trim_start().starts_with('='))
                || t.starts_with(&format!("[{key}]"))
        })
        .map(|i| i + 1)
}

fn at(text: &str, key: &str, msg: impl std::fmt::Display) -> CliError {
    match line_of(text, key) {
        Some(l) => CliError::Config(format!("line {l}: {msg}")),
        None => CliError::Config(msg.to_string()),
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl CampaignConfig {
    /// Parse and validate; relative paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: CampaignConfig = parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(g) = &cfg.geometry {
            let g = base.join(g);
            if !g.is_file() {
                return Err(at(
                    &text,
                    "geometry",
                    format!("geometry file {} does not exist", g.display()),
                ));
            }
            let gtext = read_text(&g)?;
            let file: GeometryFile = parse(&gtext, &g)?;
            cfg.lab = cfg.lab.or(file.lab);
            cfg.chip = cfg.chip.or(file.chip);
            cfg.geometry = Some(g);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if cfg.n_primaries == 0 {
            return Err(at(&text, "n_primaries", "n_primaries must be at least 1"));
        }
        if cfg.bank_primaries == 0 {
            return Err(at(
                &text,
                "bank_primaries",
                "bank_primaries must be at least 1",
            ));
        }
        if cfg.thicknesses_um.is_empty()
            || cfg
                .thicknesses_um
                .iter()
                .any(|t| !(*t > 0.0 && t.is_finite()))
        {
            return Err(at(
                &text,
                "thicknesses_um",
                "thicknesses must be a non-empty list of positive values",
            ));
        }
        let a = cfg.activities;
        if [a.k40, a.u_chain, a.th_a, a.th_b, a.u_pre.unwrap_or(0.0)]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(at(&text, "activities", "activities must be non-negative"));
        }
        let c = cfg.cosmic;
        if !(c.em_scale > 0.0 && c.hadronic_muon_scale > 0.0) {
            return Err(at(&text, "cosmic", "cosmic scales must be positive"));
        }
        cfg.frame_coupling
            .validate()
            .map_err(|e| at(&text, "frame_coupling", e))?;
        Ok(cfg)
    }

    pub fn lab(&self) -> LabSpec {
        self.lab.unwrap_or_default()
    }

    pub fn chip(&self, thickness_um: f64) -> ChipSpec {
        ChipSpec {
            thickness_um,
            ..self.chip.unwrap_or_default()
        }
    }
}

fn default_duration() -> f64 {
    60.0
}

fn default_segment() -> f64 {
    10.0
}

fn default_check_rate() -> f64 {
    2.0
}

fn default_device_fwhm() -> f64 {
    20.0
}

fn default_filter_fwhm() -> f64 {
    2.5
}

/// Synthetic pulse run: check-source and optional background events
/// through synthesis, trigger, filter and calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseRunConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Streams are synthesized in independent segments of this length.
    #[serde(default = "default_segment")]
    pub segment_s: f64,
    #[serde(default = "default_check_rate")]
    pub check_source_rate_hz: f64,
    #[serde(default)]
    pub background_rate_hz: f64,
    /// Spectrum CSV whose shape the background energies follow.
    #[serde(default)]
    pub background_spectrum: Option<PathBuf>,
    #[serde(default = "default_device_fwhm")]
    pub device_fwhm_kev: f64,
    #[serde(default = "default_filter_fwhm")]
    pub filter_fwhm_kev: f64,
    #[serde(default)]
    pub drift_rad_per_s: f64,
    /// Write the first segment's raw stream.
    #[serde(default)]
    pub write_stream: bool,
    #[serde(default)]
    pub shape: PulseShapeParams,
    #[serde(default)]
    pub trigger: TriggerConfig,
    #[serde(default)]
    pub tkid: TkidResponseModel,
}

impl PulseRunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: PulseRunConfig = parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(b) = &cfg.background_spectrum {
            let b = base.join(b);
            if !b.is_file() {
                return Err(at(
                    &text,
                    "background_spectrum",
                    format!("{} does not exist", b.display()),
                ));
            }
            cfg.background_spectrum = Some(b);
        }
        if !(cfg.duration_s > 0.0) {
            return Err(at(&text, "duration_s", "duration_s must be positive"));
        }
        let rec_s = cfg.trigger.record_len() as f64 * substrate_bg::pulses::SAMPLE_PERIOD_NS * 1e-9;
        if !(cfg.segment_s > 4.0 * rec_s) {
            return Err(at(
                &text,
                "segment_s",
                "segment_s must hold several records",
            ));
        }
        if !(cfg.check_source_rate_hz >= 0.0 && cfg.background_rate_hz >= 0.0) {
            return Err(at(
                &text,
                "check_source_rate_hz",
                "rates must be non-negative",
            ));
        }
        if !(cfg.device_fwhm_kev >= 0.0 && cfg.filter_fwhm_kev > 0.0) {
            return Err(at(&text, "filter_fwhm_kev", "resolutions must be positive"));
        }
        cfg.shape.validate().map_err(|e| at(&text, "shape", e))?;
        cfg.tkid.validate().map_err(|e| at(&text, "tkid", e))?;
        Ok(cfg)
    }
}

pub fn without_ceiling(lab: LabSpec) -> LabSpec {
    LabSpec {
        ceiling: false,
        ..lab
    }
}
