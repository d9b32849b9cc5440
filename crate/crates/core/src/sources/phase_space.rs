use std::io::{BufRead, Write};

use super::SourceError;
use crate::particle::{ParticleState, Species};

/// Write `species,E_keV,ux,uy,uz,x_cm,y_cm,z_cm,weight` rows after a
/// `# seed=` comment.
pub fn write_phase_space<W: Write>(
    mut w: W,
    seed: u64,
    particles: &[ParticleState],
) -> std::io::Result<()> {
    writeln!(w, "# seed={seed}")?;
    writeln!(w, "species,E_keV,ux,uy,uz,x_cm,y_cm,z_cm,weight")?;
    for p in particles {
        let [ux, uy, uz] = p.direction;
        let [x, y, z] = p.position_cm;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            p.species.label(),
            p.energy_kev,
            ux,
            uy,
            uz,
            x,
            y,
            z,
            p.weight
        )?;
    }
    Ok(())
}

/// Returns the seed from the header and the particles.
pub fn read_phase_space<R: BufRead>(
    r: R,
) -> Result<(Option<u64>, Vec<ParticleState>), SourceError> {
    let mut seed = None;
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| SourceError::PhaseSpaceRow {
            line: lineno,
            msg: e.to_string(),
        })?;
        let t = line.trim();
        if let Some(v) = t.strip_prefix("# seed=") {
            seed = Some(v.trim().parse().map_err(|_| SourceError::PhaseSpaceRow {
                line: lineno,
                msg: "bad seed".into(),
            })?);
            continue;
        }
        if t.is_empty() || t.starts_with('#') || t.starts_with("species,") {
            continue;
        }
        let p: Vec<&str> = t.split(',').collect();
        let bad = |msg: String| SourceError::PhaseSpaceRow { line: lineno, msg };
        if p.len() != 9 {
            return Err(bad("expected 9 columns".into()));
        }
        let species: Species = p[0]
            .parse()
            .map_err(|e: crate::particle::UnknownSpecies| bad(e.to_string()))?;
        let mut v = [0.0; 8];
        for (k, s) in p[1..].iter().enumerate() {
            v[k] = s
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?;
        }
        let state = ParticleState::new(species, v[0], [v[1], v[2], v[3]], [v[4], v[5], v[6]], v[7])
            .map_err(|e| bad(e.to_string()))?;
        out.push(state);
    }
    Ok((seed, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sources::{CosmicFluxModel, GenerationPlane};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let m = CosmicFluxModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let plane = GenerationPlane {
            z_cm: 300.0,
            side_cm: 10.0,
        };
        let ps: Vec<_> = (0..200).map(|_| m.sample(&plane, &mut rng)).collect();
        let mut buf = Vec::new();
        write_phase_space(&mut buf, 9, &ps).unwrap();
        let (seed, back) = read_phase_space(&buf[..]).unwrap();
        assert_eq!(seed, Some(9));
        assert_eq!(back, ps);
    }
}
