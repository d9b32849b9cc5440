use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use super::SourceError;
use crate::particle::{isotropic, ParticleState, Species};

/// Decay-chain segments assumed to be each in secular equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    K40,
    /// ²³⁸U down to ²²⁶Ra.
    UPre,
    /// ²²²Rn and below.
    UPost,
    /// ²³²Th down to ²²⁴Ra.
    ThA,
    /// ²²⁰Rn and below.
    ThB,
}

impl Segment {
    pub const ALL: [Segment; 5] = [
        Segment::K40,
        Segment::UPre,
        Segment::UPost,
        Segment::ThA,
        Segment::ThB,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Segment::K40 => "K40",
            Segment::UPre => "U-pre",
            Segment::UPost => "U-post",
            Segment::ThA => "Th-a",
            Segment::ThB => "Th-b",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Segment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Segment::ALL
            .into_iter()
            .find(|g| g.label() == s.trim())
            .ok_or_else(|| format!("unknown segment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionLine {
    pub segment: Segment,
    pub isotope: String,
    pub energy_kev: f64,
    /// Photons per decay of the segment parent (branching included).
    pub intensity: f64,
    pub xray: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineCatalog {
    lines: Vec<EmissionLine>,
}

const BUNDLED_CATALOG: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/data/lines/catalog.csv"
));

impl LineCatalog {
    /// Parse `segment,isotope,E_keV,intensity_per_decay`; an isotope suffix
    /// `:x` marks an x-ray.
    pub fn parse_csv(text: &str) -> Result<Self, SourceError> {
        let mut lines = Vec::new();
        let mut header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header {
                if t != "segment,isotope,E_keV,intensity_per_decay" {
                    return Err(SourceError::CatalogRow {
                        line,
                        msg: "unexpected header".into(),
                    });
                }
                header = true;
                continue;
            }
            let p: Vec<&str> = t.split(',').collect();
            if p.len() != 4 {
                return Err(SourceError::CatalogRow {
                    line,
                    msg: "expected 4 columns".into(),
                });
            }
            let segment: Segment = p[0]
                .parse()
                .map_err(|msg| SourceError::CatalogRow { line, msg })?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| SourceError::CatalogRow {
                        line,
                        msg: e.to_string(),
                    })
            };
            let (energy_kev, intensity) = (num(p[2])?, num(p[3])?);
            if energy_kev < 50.0 {
                return Err(SourceError::CatalogRow {
                    line,
                    msg: format!("line energy {energy_kev} keV is below 50 keV"),
                });
            }
            if !(intensity > 0.0 && intensity <= 10.0) {
                return Err(SourceError::CatalogRow {
                    line,
                    msg: format!("intensity {intensity} outside (0, 10]"),
                });
            }
            let (isotope, xray) = match p[1].trim().strip_suffix(":x") {
                Some(iso) => (iso.to_string(), true),
                None => (p[1].trim().to_string(), false),
            };
            lines.push(EmissionLine {
                segment,
                isotope,
                energy_kev,
                intensity,
                xray,
            });
        }
        Ok(Self { lines })
    }

    pub fn bundled() -> Self {
        Self::parse_csv(BUNDLED_CATALOG).expect("bundled catalog parses")
    }

    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SourceError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse_csv(&text)
    }

    /// Bundled catalog, or `lines/catalog.csv` under `SUBSTRATE_BG_DATA`.
    pub fn load_default() -> Result<Self, SourceError> {
        match std::env::var_os(crate::DATA_ENV) {
            Some(dir) => Self::load(&Path::new(&dir).join("lines").join("catalog.csv")),
            None => Ok(Self::bundled()),
        }
    }

    pub fn from_lines(lines: Vec<EmissionLine>) -> Self {
        Self { lines }
    }

    pub fn lines(&self) -> &[EmissionLine] {
        &self.lines
    }

    pub fn segment_lines(&self, seg: Segment) -> impl Iterator<Item = &EmissionLine> {
        self.lines.iter().filter(move |l| l.segment == seg)
    }

    /// Photons per parent decay summed over the segment.
    pub fn segment_yield(&self, seg: Segment) -> f64 {
        self.segment_lines(seg).map(|l| l.intensity).sum()
    }

    /// (gamma-ray lines, x-ray lines) in the listed segments.
    pub fn count(&self, segs: &[Segment]) -> (usize, usize) {
        let sel = self.lines.iter().filter(|l| segs.contains(&l.segment));
        sel.fold(
            (0, 0),
            |(g, x), l| if l.xray { (g, x + 1) } else { (g + 1, x) },
        )
    }
}

/// Specific activities (Bq/kg of the segment parent) and the emitting slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityConfig {
    pub k40: f64,
    pub u_chain: f64,
    /// Pre-radon uranium; follows `u_chain` when unset.
    pub u_pre: Option<f64>,
    pub th_a: f64,
    pub th_b: f64,
    pub slab_density_g_cm3: f64,
    pub slab_thickness_cm: f64,
}

impl Default for ActivityConfig {
    /// Reference-laboratory floor: 22 cm of ordinary concrete.
    fn default() -> Self {
        Self {
            k40: 1030.0,
            u_chain: 76.0,
            u_pre: None,
            th_a: 126.0,
            th_b: 82.0,
            slab_density_g_cm3: 2.30,
            slab_thickness_cm: 22.0,
        }
    }
}

impl ActivityConfig {
    pub fn only(seg: Segment, activity: f64) -> Self {
        let mut a = Self {
            k40: 0.0,
            u_chain: 0.0,
            u_pre: Some(0.0),
            th_a: 0.0,
            th_b: 0.0,
            ..Self::default()
        };
        a.set(seg, activity);
        a
    }

    pub fn activity(&self, seg: Segment) -> f64 {
        match seg {
            Segment::K40 => self.k40,
            Segment::UPre => self.u_pre.unwrap_or(self.u_chain),
            Segment::UPost => self.u_chain,
            Segment::ThA => self.th_a,
            Segment::ThB => self.th_b,
        }
    }

    pub fn set(&mut self, seg: Segment, value: f64) {
        match seg {
            Segment::K40 => self.k40 = value,
            Segment::UPre => self.u_pre = Some(value),
            Segment::UPost => self.u_chain = value,
            Segment::ThA => self.th_a = value,
            Segment::ThB => self.th_b = value,
        }
    }

    /// Slab mass per unit floor area, kg/cm².
    pub fn areal_mass_kg_cm2(&self) -> f64 {
        self.slab_density_g_cm3 * self.slab_thickness_cm * 1e-3
    }
}

/// Emitting volume: a horizontal slab, square in x and y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabRegion {
    pub z_bottom_cm: f64,
    pub z_top_cm: f64,
    pub side_cm: f64,
}

/// Precomputed segment and line choice for decay-gamma emission.
#[derive(Debug, Clone)]
pub struct DecaySampler {
    seg_cum: Vec<(Segment, f64)>,
    line_cum: Vec<Vec<(f64, f64)>>,
    rate_per_cm2: f64,
}

impl DecaySampler {
    pub fn new(catalog: &LineCatalog, activity: &ActivityConfig) -> Result<Self, SourceError> {
        if !(activity.slab_density_g_cm3 > 0.0 && activity.slab_thickness_cm > 0.0) {
            return Err(SourceError::BadSlab);
        }
        let mut seg_cum = Vec::new();
        let mut line_cum = Vec::new();
        let mut acc = 0.0;
        for seg in Segment::ALL {
            let a = activity.activity(seg);
            if a < 0.0 {
                return Err(SourceError::NegativeActivity(seg));
            }
            let y = catalog.segment_yield(seg);
            if a * y <= 0.0 {
                continue;
            }
            acc += a * y * activity.areal_mass_kg_cm2();
            seg_cum.push((seg, acc));
            let mut lacc = 0.0;
            line_cum.push(
                catalog
                    .segment_lines(seg)
                    .map(|l| {
                        lacc += l.intensity;
                        (l.energy_kev, lacc)
                    })
                    .collect(),
            );
        }
        if acc <= 0.0 {
            return Err(SourceError::ZeroActivity);
        }
        Ok(Self {
            seg_cum,
            line_cum,
            rate_per_cm2: acc,
        })
    }

    /// Photons emitted per second per cm² of floor.
    pub fn emission_rate_per_cm2(&self) -> f64 {
        self.rate_per_cm2
    }

    /// Draw a line energy (keV) and its segment.
    pub fn sample_line<R: Rng + ?Sized>(&self, rng: &mut R) -> (Segment, f64) {
        let u = rng.random::<f64>() * self.rate_per_cm2;
        let k = self
            .seg_cum
            .partition_point(|s| s.1 <= u)
            .min(self.seg_cum.len() - 1);
        let lines = &self.line_cum[k];
        let v = rng.random::<f64>() * lines.last().unwrap().1;
        let j = lines.partition_point(|l| l.1 <= v).min(lines.len() - 1);
        (self.seg_cum[k].0, lines[j].0)
    }

    /// Photon emitted uniformly in the slab volume, isotropic over 4π.
    pub fn sample<R: Rng + ?Sized>(&self, slab: &SlabRegion, rng: &mut R) -> ParticleState {
        let (_, e) = self.sample_line(rng);
        let x = (rng.random::<f64>() - 0.5) * slab.side_cm;
        let y = (rng.random::<f64>() - 0.5) * slab.side_cm;
        let z = slab.z_bottom_cm + (slab.z_top_cm - slab.z_bottom_cm) * rng.random::<f64>();
        let dir = isotropic(rng.random(), rng.random());
        ParticleState {
            species: Species::Gamma,
            energy_kev: e,
            direction: dir,
            position_cm: [x, y, z],
            weight: 1.0,
        }
    }
}
