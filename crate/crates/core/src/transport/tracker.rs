use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::geometry::{ChipSpec, Region, SlabStack, VolumeKind};
use crate::materials::{delta_cos_theta, sample_thin_loss, Material, INELASTIC_MIN_KEV};
use crate::particle::{
    add_scaled, deflect, isotropic, norm, ParticleState, Species, Vec3, ELECTRON_MASS_KEV,
};

/// Below this kinetic energy photons and e± deposit where they stand.
pub const CUTOFF_KEV: f64 = 10.0;
/// Heavy charged particles below this deposit locally.
const HEAVY_CUTOFF_KEV: f64 = 1000.0;
/// Nudge past a boundary so the next lookup lands in the new region.
const EPS_CM: f64 = 1e-9;
/// Longest charged-particle step inside the frame, so hit positions resolve
/// the coupling length.
const FRAME_STEP_CM: f64 = 0.05;
const MAX_STEPS: usize = 1_000_000;
/// e± above this radiate discrete bremsstrahlung photons.
const BREM_MIN_KEV: f64 = 5000.0;
/// e± steps between multiple-scattering kicks are capped at this fraction
/// of both the radiation length and the residual range.
const MSC_STEP_FRACTION: f64 = 0.2;
const MSC_MIN_STEP_CM: f64 = 1e-4;
/// Photons softer than this fraction of the electron energy stay with the
/// electron.
const BREM_Y_CUT: f64 = 0.02;

/// Bremsstrahlung photons with k > y_cut·E per radiation length, complete
/// screening.
fn brem_per_x0() -> f64 {
    let y = BREM_Y_CUT;
    4.0 / 3.0 * (1.0 / y).ln() - 4.0 / 3.0 * (1.0 - y) + 0.5 * (1.0 - y * y)
}

/// Photon energy fraction from (4/3)(1 − y)/y + y on [y_cut, 1].
fn sample_brem_fraction<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let span = (1.0 / BREM_Y_CUT).ln();
    loop {
        let y = BREM_Y_CUT * (span * rng.random::<f64>()).exp();
        let f = 4.0 / 3.0 * (1.0 - y) + y * y;
        if rng.random::<f64>() * 4.0 / 3.0 <= f {
            return y;
        }
    }
}

/// Where each unit of a primary's energy ended up. `initial + annihilation`
/// balances `deposited + escaped + pair_mass + binding + discarded`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLedger {
    pub initial: f64,
    pub deposited: f64,
    pub escaped: f64,
    /// Rest mass created in pair production.
    pub pair_mass: f64,
    /// Rest mass released by positron annihilation.
    pub annihilation: f64,
    /// Spent unbinding nucleons in nuclear breakup.
    pub binding: f64,
    /// Energy of particles dropped without scoring (slow neutrons, runaway
    /// tracks).
    pub discarded: f64,
}

impl EnergyLedger {
    pub fn imbalance(&self) -> f64 {
        self.initial + self.annihilation
            - (self.deposited + self.escaped + self.pair_mass + self.binding + self.discarded)
    }

    pub fn add(&mut self, o: &EnergyLedger) {
        self.initial += o.initial;
        self.deposited += o.deposited;
        self.escaped += o.escaped;
        self.pair_mass += o.pair_mass;
        self.annihilation += o.annihilation;
        self.binding += o.binding;
        self.discarded += o.discarded;
    }
}

/// A frame deposit and its chip-plane position (cm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHit {
    pub energy_kev: f64,
    pub xy_cm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepositRecord {
    pub primary_id: u64,
    pub species: Species,
    pub primary_energy_kev: f64,
    pub weight: f64,
    /// Indexed by `VolumeKind::index`.
    pub deposits_kev: [f64; 3],
    pub frame_hits: Vec<FrameHit>,
    /// Species of the particle that carried energy into each volume (first
    /// depositing track that entered from outside).
    pub incident: [Option<Species>; 3],
    pub ledger: EnergyLedger,
}

impl DepositRecord {
    pub fn deposit(&self, kind: VolumeKind) -> f64 {
        self.deposits_kev[kind.index()]
    }

    pub fn any(&self) -> bool {
        self.deposits_kev.iter().any(|&d| d > 0.0)
    }
}

/// Sample the scattered-photon energy fraction and cos θ from the
/// Klein–Nishina cross section.
pub fn sample_klein_nishina<R: Rng + ?Sized>(e_kev: f64, rng: &mut R) -> (f64, f64) {
    let k = e_kev / ELECTRON_MASS_KEV;
    let eps0 = 1.0 / (1.0 + 2.0 * k);
    let eps0sq = eps0 * eps0;
    let a1 = -eps0.ln();
    let a2 = a1 + 0.5 * (1.0 - eps0sq);
    loop {
        let (eps, epssq) = if a1 > a2 * rng.random::<f64>() {
            let e = (-a1 * rng.random::<f64>()).exp();
            (e, e * e)
        } else {
            let sq = eps0sq + (1.0 - eps0sq) * rng.random::<f64>();
            (sq.sqrt(), sq)
        };
        let onecost = (1.0 - eps) / (eps * k);
        let sint2 = onecost * (2.0 - onecost);
        let g = 1.0 - eps * sint2 / (1.0 + epssq);
        if g >= rng.random::<f64>() {
            return (eps, 1.0 - onecost);
        }
    }
}

struct Track {
    species: Species,
    e: f64,
    p: Vec3,
    u: Vec3,
    /// Species that entered the sensitive volume this track descends from.
    tag: Option<Species>,
    /// Lateral distance folded away by periodic wrapping so far.
    shift: [f64; 2],
}

impl Track {
    fn child(&self, species: Species, e: f64, p: Vec3, u: Vec3) -> Track {
        Track {
            species,
            e,
            p,
            u,
            tag: self.tag,
            shift: self.shift,
        }
    }

    fn wrap(&mut self, geom: &SlabStack) {
        let d = geom.wrap(&mut self.p);
        self.shift[0] += d[0];
        self.shift[1] += d[1];
    }

    fn enter(&mut self, region: Region) {
        if self.tag.is_none() && matches!(region, Region::Volume(_)) {
            self.tag = Some(self.species);
        }
    }
}

struct Event<'g> {
    geom: &'g SlabStack,
    /// Emission point and half-width of a finite source layer. Periodic
    /// images of the sensitive volumes whose emitter falls outside it do
    /// not score.
    footprint: Option<([f64; 2], f64)>,
    rec: DepositRecord,
    stack: Vec<Track>,
    steps: usize,
}

impl<'g> Event<'g> {
    fn deposit(&mut self, region: Region, e: f64, at: Vec3, t: &Track) {
        if e <= 0.0 {
            return;
        }
        self.rec.ledger.deposited += e;
        let seen = match self.footprint {
            Some((o, w)) => (o[0] - t.shift[0]).abs() <= w && (o[1] - t.shift[1]).abs() <= w,
            None => true,
        };
        let tag = t.tag;
        if let (Region::Volume(i), true) = (region, seen) {
            let v = &self.geom.volumes()[i];
            self.rec.deposits_kev[v.kind.index()] += e;
            let slot = &mut self.rec.incident[v.kind.index()];
            if slot.is_none() {
                *slot = tag;
            }
            if v.kind == VolumeKind::Frame {
                self.rec.frame_hits.push(FrameHit {
                    energy_kev: e,
                    xy_cm: ChipSpec::to_chip_plane(v.orientation, at),
                });
            }
        }
    }

    /// Move to the next boundary in vacuum. Returns false on escape.
    fn drift(&mut self, t: &mut Track) -> bool {
        match self.geom.distance_to_boundary(t.p, t.u) {
            Some(d) => {
                t.p = add_scaled(t.p, t.u, d + EPS_CM);
                t.wrap(self.geom);
                true
            }
            None => false,
        }
    }

    fn escape(&mut self, t: &Track, on_escape: &mut dyn FnMut(&ParticleState)) {
        self.rec.ledger.escaped += t.e;
        on_escape(&ParticleState {
            species: t.species,
            energy_kev: t.e,
            direction: t.u,
            position_cm: t.p,
            weight: self.rec.weight,
        });
    }

    fn runaway(&mut self) -> bool {
        self.steps += 1;
        self.steps > MAX_STEPS
    }

    fn annihilate(&mut self, t: &Track, rng: &mut (impl Rng + ?Sized)) {
        self.rec.ledger.annihilation += 2.0 * ELECTRON_MASS_KEV;
        let u = isotropic(rng.random(), rng.random());
        self.stack
            .push(t.child(Species::Gamma, ELECTRON_MASS_KEV, t.p, u));
        self.stack.push(t.child(
            Species::Gamma,
            ELECTRON_MASS_KEV,
            t.p,
            [-u[0], -u[1], -u[2]],
        ));
    }

    fn photon<R: Rng + ?Sized>(
        &mut self,
        mut t: Track,
        rng: &mut R,
        on_escape: &mut dyn FnMut(&ParticleState),
    ) {
        loop {
            if self.runaway() {
                self.rec.ledger.discarded += t.e;
                return;
            }
            let region = self.geom.locate(t.p);
            t.enter(region);
            if t.e < CUTOFF_KEV {
                self.deposit(region, t.e, t.p, &t);
                return;
            }
            let Some(mat) = self.geom.material(region).cloned() else {
                if !self.drift(&mut t) {
                    self.escape(&t, on_escape);
                    return;
                }
                continue;
            };
            let mu = photon_mu(&mat, t.e);
            let s = -(1.0 - rng.random::<f64>()).ln() / mu.total();
            let d = self
                .geom
                .distance_to_boundary(t.p, t.u)
                .unwrap_or(f64::INFINITY);
            if s >= d {
                t.p = add_scaled(t.p, t.u, d + EPS_CM);
                t.wrap(self.geom);
                if self.geom.escaped(t.p, t.u) {
                    self.escape(&t, on_escape);
                    return;
                }
                continue;
            }
            t.p = add_scaled(t.p, t.u, s);
            let r = rng.random::<f64>() * mu.total();
            if r < mu.photoelectric {
                self.stack.push(t.child(Species::Electron, t.e, t.p, t.u));
                return;
            } else if r < mu.photoelectric + mu.compton {
                let (eps, cos) = sample_klein_nishina(t.e, rng);
                let phi = 2.0 * PI * rng.random::<f64>();
                let u2 = deflect(t.u, cos, phi);
                let e2 = eps * t.e;
                let te = t.e - e2;
                let pe = [
                    t.e * t.u[0] - e2 * u2[0],
                    t.e * t.u[1] - e2 * u2[1],
                    t.e * t.u[2] - e2 * u2[2],
                ];
                let n = norm(pe);
                let ue = if n > 0.0 {
                    [pe[0] / n, pe[1] / n, pe[2] / n]
                } else {
                    t.u
                };
                self.stack.push(t.child(Species::Electron, te, t.p, ue));
                t.e = e2;
                t.u = u2;
            } else {
                let k = (t.e - 2.0 * ELECTRON_MASS_KEV).max(0.0);
                self.rec.ledger.pair_mass += t.e - k;
                let x = rng.random::<f64>();
                self.stack.push(t.child(Species::Electron, x * k, t.p, t.u));
                self.stack
                    .push(t.child(Species::Positron, (1.0 - x) * k, t.p, t.u));
                return;
            }
        }
    }

    fn charged<R: Rng + ?Sized>(
        &mut self,
        mut t: Track,
        rng: &mut R,
        on_escape: &mut dyn FnMut(&ParticleState),
    ) {
        let floor = if t.species.is_lepton_em() {
            CUTOFF_KEV
        } else {
            HEAVY_CUTOFF_KEV
        };
        loop {
            if self.runaway() {
                self.rec.ledger.discarded += t.e;
                return;
            }
            let region = self.geom.locate(t.p);
            t.enter(region);
            if t.e < floor {
                self.stop(t, region, rng);
                return;
            }
            let Some(mat) = self.geom.material(region).cloned() else {
                if !self.drift(&mut t) {
                    self.escape(&t, on_escape);
                    return;
                }
                continue;
            };
            let range = mat.range(t.species, t.e).unwrap_or(0.0);
            // Below the radiation threshold an electron in passive material
            // makes no secondaries; if it cannot leave its layer its fate
            // is local.
            if let Region::Layer(i) = region {
                if t.species.is_lepton_em() && t.e <= BREM_MIN_KEV {
                    let l = &self.geom.layers()[i];
                    let room = (t.p[2] - l.z_bottom_cm).min(l.z_top_cm - t.p[2]);
                    if range < room
                        && !self.geom.in_band(t.p[2] - range)
                        && !self.geom.in_band(t.p[2] + range)
                        && !self.geom.in_band(t.p[2])
                    {
                        self.stop(t, region, rng);
                        return;
                    }
                }
            }
            let mut d = self
                .geom
                .distance_to_boundary(t.p, t.u)
                .unwrap_or(f64::INFINITY);
            let sensitive = matches!(region, Region::Volume(_));
            if let Region::Volume(i) = region {
                if self.geom.volumes()[i].kind == VolumeKind::Frame {
                    d = d.min(FRAME_STEP_CM);
                }
            }
            if t.species.is_lepton_em() {
                let cap = (MSC_STEP_FRACTION * range)
                    .max(MSC_MIN_STEP_CM)
                    .min(MSC_STEP_FRACTION * mat.radiation_length());
                d = d.min(cap);
            }
            let mut nuclear = false;
            if t.species.is_heavy_charged()
                && t.species != Species::MuPlus
                && t.species != Species::MuMinus
                && t.e > INELASTIC_MIN_KEV
            {
                let sigma = mat.nuclear_sigma(t.e);
                if sigma > 0.0 {
                    let s = -(1.0 - rng.random::<f64>()).ln() / sigma;
                    if s < d && s < range {
                        d = s;
                        nuclear = true;
                    }
                }
            }
            let mut radiate = false;
            if t.species.is_lepton_em() && t.e > BREM_MIN_KEV {
                let s = -(1.0 - rng.random::<f64>()).ln() * mat.radiation_length() / brem_per_x0();
                if s < d && s < range {
                    d = s;
                    radiate = true;
                }
            }
            if range <= d {
                let end = add_scaled(t.p, t.u, range);
                let mid = add_scaled(t.p, t.u, 0.5 * range);
                self.deposit(region, t.e, mid, &t);
                t.p = end;
                t.e = 0.0;
                self.stop(t, region, rng);
                return;
            }
            let after = mat
                .energy_after(t.species, t.e, d)
                .unwrap_or(0.0)
                .clamp(0.0, t.e);
            let mean = t.e - after;
            let kick = highland_theta0(t.species, 0.5 * (t.e + after), d / mat.radiation_length());
            let mid = add_scaled(t.p, t.u, 0.5 * d);
            if sensitive && mean < 0.1 * t.e {
                let loss = sample_thin_loss(&mat, t.species, t.e, d, rng);
                self.deposit(region, loss.soft_kev, mid, &t);
                for &de in &loss.deltas_kev {
                    let cos = delta_cos_theta(t.species, t.e, de);
                    let phi = 2.0 * PI * rng.random::<f64>();
                    let at = add_scaled(t.p, t.u, d * rng.random::<f64>());
                    self.stack
                        .push(t.child(Species::Electron, de, at, deflect(t.u, cos, phi)));
                }
                t.e -= loss.total();
            } else {
                self.deposit(region, mean, mid, &t);
                t.e = after;
            }
            if kick > 0.0 {
                let (tx, ty): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let theta = (kick * tx.hypot(ty)).min(PI);
                let phi = 2.0 * PI * rng.random::<f64>();
                let u = deflect(t.u, theta.cos(), phi);
                t.p = add_scaled(t.p, t.u, d);
                t.u = u;
                d = 0.0;
            }
            if nuclear {
                t.p = add_scaled(t.p, t.u, d);
                self.breakup(t, region, &mat, rng);
                return;
            }
            if radiate {
                t.p = add_scaled(t.p, t.u, d);
                let k = sample_brem_fraction(rng) * t.e;
                self.stack.push(t.child(Species::Gamma, k, t.p, t.u));
                t.e -= k;
                continue;
            }
            t.p = add_scaled(t.p, t.u, d + EPS_CM);
            t.wrap(self.geom);
            if self.geom.escaped(t.p, t.u) {
                self.escape(&t, on_escape);
                return;
            }
        }
    }

    fn stop<R: Rng + ?Sized>(&mut self, t: Track, region: Region, rng: &mut R) {
        self.deposit(region, t.e, t.p, &t);
        if t.species == Species::Positron {
            self.annihilate(&t, rng);
        }
    }

    fn breakup<R: Rng + ?Sized>(&mut self, t: Track, region: Region, mat: &Material, rng: &mut R) {
        let b = mat.nuclear_breakup(t.e, rng);
        self.rec.ledger.binding += b.binding_kev;
        self.deposit(region, b.local_kev, t.p, &t);
        for (proton, e, cos) in b.nucleons {
            let u = deflect(t.u, cos, 2.0 * PI * rng.random::<f64>());
            self.stack.push(t.child(
                if proton {
                    Species::Proton
                } else {
                    Species::Neutron
                },
                e,
                t.p,
                u,
            ));
        }
    }

    fn neutron<R: Rng + ?Sized>(
        &mut self,
        mut t: Track,
        rng: &mut R,
        on_escape: &mut dyn FnMut(&ParticleState),
    ) {
        loop {
            if self.runaway() {
                self.rec.ledger.discarded += t.e;
                return;
            }
            if t.e < CUTOFF_KEV {
                self.rec.ledger.discarded += t.e;
                return;
            }
            let region = self.geom.locate(t.p);
            t.enter(region);
            let Some(mat) = self.geom.material(region).cloned() else {
                if !self.drift(&mut t) {
                    self.escape(&t, on_escape);
                    return;
                }
                continue;
            };
            let inelastic = mat.nuclear_sigma(t.e);
            let sigma = mat.neutron_sigma(t.e) + inelastic;
            let s = if sigma > 0.0 {
                -(1.0 - rng.random::<f64>()).ln() / sigma
            } else {
                f64::INFINITY
            };
            let d = self
                .geom
                .distance_to_boundary(t.p, t.u)
                .unwrap_or(f64::INFINITY);
            if s >= d {
                if !d.is_finite() {
                    self.rec.ledger.discarded += t.e;
                    return;
                }
                t.p = add_scaled(t.p, t.u, d + EPS_CM);
                t.wrap(self.geom);
                if self.geom.escaped(t.p, t.u) {
                    self.escape(&t, on_escape);
                    return;
                }
                continue;
            }
            t.p = add_scaled(t.p, t.u, s);
            if rng.random::<f64>() * sigma < inelastic {
                self.breakup(t, region, &mat, rng);
                return;
            }
            let sc = mat.neutron_elastic(t.e, rng);
            self.deposit(region, sc.recoil_kev, t.p, &t);
            t.e = sc.energy_out_kev;
            t.u = deflect(t.u, sc.cos_lab, 2.0 * PI * rng.random::<f64>());
        }
    }
}

/// Highland width of the projected multiple-scattering angle after `x0s`
/// radiation lengths.
fn highland_theta0(species: Species, e: f64, x0s: f64) -> f64 {
    let z = f64::from(species.charge().abs());
    if z == 0.0 || x0s <= 0.0 || e <= 0.0 {
        return 0.0;
    }
    let m = species.mass_kev();
    let beta_cp = e * (e + 2.0 * m) / (e + m);
    13_600.0 / beta_cp * z * x0s.sqrt() * (1.0 + 0.038 * x0s.ln()).max(0.1)
}

fn photon_mu(mat: &Material, e: f64) -> crate::materials::PhotonMu {
    let tab = mat.photon_table();
    let e = e.clamp(tab.e_min(), tab.e_max());
    mat.photon_mu(e).expect("energy clamped to table range")
}

/// Track one primary and all its secondaries to absorption or escape.
pub fn transport_event<R: Rng + ?Sized>(
    p: &ParticleState,
    id: u64,
    geom: &SlabStack,
    rng: &mut R,
) -> DepositRecord {
    transport_event_with(p, id, geom, rng, &mut |_| {})
}

/// As `transport_event`, also handing every particle that leaves the world
/// to `on_escape`.
pub fn transport_event_with<R: Rng + ?Sized>(
    p: &ParticleState,
    id: u64,
    geom: &SlabStack,
    rng: &mut R,
    on_escape: &mut dyn FnMut(&ParticleState),
) -> DepositRecord {
    transport_event_from(p, id, geom, None, rng, on_escape)
}

/// As `transport_event_with` for a primary emitted by a source layer of
/// finite lateral half-width centred under the sensitive volumes.
pub fn transport_event_from<R: Rng + ?Sized>(
    p: &ParticleState,
    id: u64,
    geom: &SlabStack,
    source_half_width_cm: Option<f64>,
    rng: &mut R,
    on_escape: &mut dyn FnMut(&ParticleState),
) -> DepositRecord {
    let rec = DepositRecord {
        primary_id: id,
        species: p.species,
        primary_energy_kev: p.energy_kev,
        weight: p.weight,
        deposits_kev: [0.0; 3],
        frame_hits: Vec::new(),
        incident: [None; 3],
        ledger: EnergyLedger {
            initial: p.energy_kev,
            ..Default::default()
        },
    };
    let mut start = p.position_cm;
    geom.wrap(&mut start);
    let footprint = source_half_width_cm.map(|w| ([start[0], start[1]], w));
    let mut ev = Event {
        geom,
        footprint,
        rec,
        stack: Vec::new(),
        steps: 0,
    };
    ev.stack.push(Track {
        species: p.species,
        e: p.energy_kev,
        p: start,
        u: p.direction,
        tag: None,
        shift: [0.0; 2],
    });
    while let Some(mut t) = ev.stack.pop() {
        if t.e <= 0.0 {
            t.enter(geom.locate(t.p));
            if t.species == Species::Positron {
                ev.annihilate(&t, rng);
            }
            continue;
        }
        match t.species {
            Species::Gamma => ev.photon(t, rng, on_escape),
            Species::Neutron => ev.neutron(t, rng, on_escape),
            _ => ev.charged(t, rng, on_escape),
        }
    }
    ev.rec
}
