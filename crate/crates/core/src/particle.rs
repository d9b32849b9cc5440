use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const ELECTRON_MASS_KEV: f64 = 510.998_95;
pub const MUON_MASS_KEV: f64 = 105_658.375;
pub const PROTON_MASS_KEV: f64 = 938_272.088;
pub const NEUTRON_MASS_KEV: f64 = 939_565.420;
pub const PION_MASS_KEV: f64 = 139_570.39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Gamma,
    Electron,
    Positron,
    MuMinus,
    MuPlus,
    Proton,
    Neutron,
    PiMinus,
    PiPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeciesGroup {
    /// e±, γ
    Electromagnetic,
    /// μ±, p, n, π±
    HadronicMuon,
}

impl Species {
    pub const ALL: [Species; 9] = [
        Species::Gamma,
        Species::Electron,
        Species::Positron,
        Species::MuMinus,
        Species::MuPlus,
        Species::Proton,
        Species::Neutron,
        Species::PiMinus,
        Species::PiPlus,
    ];

    pub fn mass_kev(self) -> f64 {
        match self {
            Species::Gamma => 0.0,
            Species::Electron | Species::Positron => ELECTRON_MASS_KEV,
            Species::MuMinus | Species::MuPlus => MUON_MASS_KEV,
            Species::Proton => PROTON_MASS_KEV,
            Species::Neutron => NEUTRON_MASS_KEV,
            Species::PiMinus | Species::PiPlus => PION_MASS_KEV,
        }
    }

    pub fn charge(self) -> i32 {
        match self {
            Species::Gamma | Species::Neutron => 0,
            Species::Electron | Species::MuMinus | Species::PiMinus => -1,
            Species::Positron | Species::MuPlus | Species::Proton | Species::PiPlus => 1,
        }
    }

    pub fn is_lepton_em(self) -> bool {
        matches!(self, Species::Electron | Species::Positron)
    }

    pub fn is_heavy_charged(self) -> bool {
        matches!(
            self,
            Species::MuMinus
                | Species::MuPlus
                | Species::Proton
                | Species::PiMinus
                | Species::PiPlus
        )
    }

    pub fn group(self) -> SpeciesGroup {
        match self {
            Species::Gamma | Species::Electron | Species::Positron => SpeciesGroup::Electromagnetic,
            _ => SpeciesGroup::HadronicMuon,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Species::Gamma => "gamma",
            Species::Electron => "e-",
            Species::Positron => "e+",
            Species::MuMinus => "mu-",
            Species::MuPlus => "mu+",
            Species::Proton => "p",
            Species::Neutron => "n",
            Species::PiMinus => "pi-",
            Species::PiPlus => "pi+",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown species `{0}`")]
pub struct UnknownSpecies(pub String);

impl FromStr for Species {
    type Err = UnknownSpecies;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "gamma" => Species::Gamma,
            "e-" => Species::Electron,
            "e+" => Species::Positron,
            "mu-" => Species::MuMinus,
            "mu+" => Species::MuPlus,
            "p" => Species::Proton,
            "n" => Species::Neutron,
            "pi-" => Species::PiMinus,
            "pi+" => Species::PiPlus,
            other => return Err(UnknownSpecies(other.to_string())),
        })
    }
}

pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn add_scaled(p: Vec3, u: Vec3, s: f64) -> Vec3 {
    [p[0] + u[0] * s, p[1] + u[1] * s, p[2] + u[2] * s]
}

/// Rotate unit vector `u` by polar angle (given as its cosine) and azimuth.
pub fn deflect(u: Vec3, cos_theta: f64, phi: f64) -> Vec3 {
    let cos_theta = cos_theta.clamp(-1.0, 1.0);
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let (sp, cp) = phi.sin_cos();
    let out = if u[2].abs() > 0.999_999_99 {
        let sign = u[2].signum();
        [sin_theta * cp, sin_theta * sp * sign, cos_theta * sign]
    } else {
        let t = (1.0 - u[2] * u[2]).sqrt();
        [
            u[0] * cos_theta + sin_theta * (u[0] * u[2] * cp - u[1] * sp) / t,
            u[1] * cos_theta + sin_theta * (u[1] * u[2] * cp + u[0] * sp) / t,
            u[2] * cos_theta - sin_theta * t * cp,
        ]
    };
    let n = norm(out);
    [out[0] / n, out[1] / n, out[2] / n]
}

pub fn isotropic(r1: f64, r2: f64) -> Vec3 {
    let cz = 2.0 * r1 - 1.0;
    let s = (1.0 - cz * cz).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * r2;
    [s * phi.cos(), s * phi.sin(), cz]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub species: Species,
    pub energy_kev: f64,
    pub direction: Vec3,
    pub position_cm: Vec3,
    pub weight: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ParticleError {
    #[error("direction is not a unit vector (|u| = {0})")]
    NotUnit(f64),
    #[error("energy must be positive, got {0}")]
    BadEnergy(f64),
    #[error("weight must be positive, got {0}")]
    BadWeight(f64),
}

impl ParticleState {
    pub fn new(
        species: Species,
        energy_kev: f64,
        direction: Vec3,
        position_cm: Vec3,
        weight: f64,
    ) -> Result<Self, ParticleError> {
        let n = norm(direction);
        if (n - 1.0).abs() > 1e-9 {
            return Err(ParticleError::NotUnit(n));
        }
        if !(energy_kev > 0.0 && energy_kev.is_finite()) {
            return Err(ParticleError::BadEnergy(energy_kev));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(ParticleError::BadWeight(weight));
        }
        Ok(Self {
            species,
            energy_kev,
            direction,
            position_cm,
            weight,
        })
    }

    pub fn momentum_kev(&self) -> f64 {
        let m = self.species.mass_kev();
        (self.energy_kev * (self.energy_kev + 2.0 * m)).sqrt()
    }
}
