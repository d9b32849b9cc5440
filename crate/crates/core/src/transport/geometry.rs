use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::TransportError;
use crate::materials::{Material, MaterialLibrary};
use crate::particle::Vec3;

/// Orientation of a chip or the NaI cylinder axis. A vertical chip has its
/// large faces in the x–z plane; a vertical cylinder has its axis along z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Orientation {
    #[default]
    #[serde(alias = "H", alias = "horizontal")]
    Horizontal,
    #[serde(alias = "V", alias = "vertical")]
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VolumeKind {
    Island,
    Frame,
    Nai,
}

impl VolumeKind {
    pub const ALL: [VolumeKind; 3] = [VolumeKind::Island, VolumeKind::Frame, VolumeKind::Nai];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            VolumeKind::Island => "island",
            VolumeKind::Frame => "frame",
            VolumeKind::Nai => "nai",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    fn is_empty(&self) -> bool {
        (0..3).any(|k| self.hi[k] <= self.lo[k])
    }

    fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.lo[k] && p[k] < self.hi[k])
    }

    /// Entry and exit distances along the ray, if it meets the box ahead.
    fn ray(&self, p: Vec3, u: Vec3) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            if u[k].abs() < 1e-300 {
                if p[k] < self.lo[k] || p[k] >= self.hi[k] {
                    return None;
                }
                continue;
            }
            let a = (self.lo[k] - p[k]) / u[k];
            let b = (self.hi[k] - p[k]) / u[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t1 > t0.max(0.0)).then_some((t0, t1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Boxes(Vec<Aabb>),
    Cylinder {
        center: Vec3,
        radius: f64,
        half_length: f64,
        axis: Orientation,
    },
}

impl Shape {
    fn contains(&self, p: Vec3) -> bool {
        match self {
            Shape::Boxes(bs) => bs.iter().any(|b| b.contains(p)),
            Shape::Cylinder {
                center,
                radius,
                half_length,
                axis,
            } => {
                let (a, b, c) = cyl_axes(*axis);
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                d[a].abs() <= *half_length && d[b] * d[b] + d[c] * d[c] <= radius * radius
            }
        }
    }

    /// Distance to the next surface crossing along the ray (entry when
    /// outside, exit when inside).
    fn next_crossing(&self, p: Vec3, u: Vec3) -> Option<f64> {
        match self {
            Shape::Boxes(bs) => bs
                .iter()
                .filter(|b| !b.is_empty())
                .filter_map(|b| b.ray(p, u))
                .map(|(t0, t1)| if t0 > 0.0 { t0 } else { t1 })
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t)))),
            Shape::Cylinder {
                center,
                radius,
                half_length,
                axis,
            } => {
                let (a, b, c) = cyl_axes(*axis);
                let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                // slab along the axis
                let (s0, s1) = if u[a].abs() < 1e-300 {
                    if d[a].abs() > *half_length {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let x = (-half_length - d[a]) / u[a];
                    let y = (half_length - d[a]) / u[a];
                    (x.min(y), x.max(y))
                };
                // infinite cylinder
                let qa = u[b] * u[b] + u[c] * u[c];
                let qb = d[b] * u[b] + d[c] * u[c];
                let qc = d[b] * d[b] + d[c] * d[c] - radius * radius;
                let (r0, r1) = if qa < 1e-300 {
                    if qc > 0.0 {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let disc = qb * qb - qa * qc;
                    if disc <= 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    ((-qb - sq) / qa, (-qb + sq) / qa)
                };
                let t0 = s0.max(r0);
                let t1 = s1.min(r1);
                if t1 <= t0.max(0.0) {
                    return None;
                }
                Some(if t0 > 0.0 { t0 } else { t1 })
            }
        }
    }

    /// Bounding box.
    fn bounds(&self) -> Aabb {
        match self {
            Shape::Boxes(bs) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for b in bs {
                    for k in 0..3 {
                        lo[k] = lo[k].min(b.lo[k]);
                        hi[k] = hi[k].max(b.hi[k]);
                    }
                }
                Aabb { lo, hi }
            }
            Shape::Cylinder {
                center,
                radius,
                half_length,
                axis,
            } => {
                let (a, _, _) = cyl_axes(*axis);
                let mut lo = [center[0] - radius, center[1] - radius, center[2] - radius];
                let mut hi = [center[0] + radius, center[1] + radius, center[2] + radius];
                lo[a] = center[a] - half_length;
                hi[a] = center[a] + half_length;
                Aabb { lo, hi }
            }
        }
    }
}

fn cyl_axes(axis: Orientation) -> (usize, usize, usize) {
    match axis {
        Orientation::Horizontal => (0, 1, 2),
        Orientation::Vertical => (2, 0, 1),
    }
}

#[derive(Debug, Clone)]
pub struct SensitiveVolume {
    pub kind: VolumeKind,
    pub material: Arc<Material>,
    pub shape: Shape,
    /// Orientation of the chip plane, used to express frame hits in chip
    /// coordinates.
    pub orientation: Orientation,
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub name: String,
    pub material: Arc<Material>,
    pub z_bottom_cm: f64,
    pub z_top_cm: f64,
    /// Lateral half-width of a square slab; infinite for an unbounded one.
    /// Only a source layer's extent matters to transport.
    pub half_width_cm: f64,
}

/// Where a point sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Volume(usize),
    Layer(usize),
    Vacuum,
}

/// Laterally infinite horizontal layers plus small sensitive volumes near
/// the origin. Volumes repeat on a square lattice of side `cell_side_cm`,
/// which is how a laterally uniform flux is represented with finite
/// generation area.
#[derive(Debug, Clone)]
pub struct SlabStack {
    layers: Vec<Layer>,
    volumes: Vec<SensitiveVolume>,
    cell_side: f64,
    band: (f64, f64),
    world: (f64, f64),
    planes: Vec<f64>,
}

impl SlabStack {
    pub fn new(layers: Vec<Layer>, volumes: Vec<SensitiveVolume>) -> Result<Self, TransportError> {
        for (i, l) in layers.iter().enumerate() {
            if !(l.z_top_cm > l.z_bottom_cm) {
                return Err(TransportError::Geometry(format!(
                    "layer `{}` has non-positive thickness",
                    l.name
                )));
            }
            if !(l.half_width_cm > 0.0) {
                return Err(TransportError::Geometry(format!(
                    "layer `{}` has non-positive lateral extent",
                    l.name
                )));
            }
            if i > 0 && l.z_top_cm > layers[i - 1].z_bottom_cm {
                return Err(TransportError::Geometry(format!(
                    "layer `{}` overlaps or is above `{}`; list layers top-down",
                    l.name,
                    layers[i - 1].name
                )));
            }
        }
        let bounds: Vec<Aabb> = volumes.iter().map(|v| v.shape.bounds()).collect();
        for (i, a) in bounds.iter().enumerate() {
            for b in &bounds[i + 1..] {
                if (0..3).all(|k| a.lo[k] < b.hi[k] && b.lo[k] < a.hi[k])
                    && !a.is_empty()
                    && !b.is_empty()
                {
                    // bounding boxes of the island and surrounding frame overlap by design; check pieces
                    if !pieces_disjoint(a, b, &volumes) {
                        return Err(TransportError::Geometry("sensitive volumes overlap".into()));
                    }
                }
            }
            for l in &layers {
                if a.hi[2] > l.z_bottom_cm && a.lo[2] < l.z_top_cm {
                    return Err(TransportError::Geometry(format!(
                        "a sensitive volume intersects layer `{}`",
                        l.name
                    )));
                }
            }
        }
        let (band, lateral) = if bounds.is_empty() {
            ((0.0, 0.0), 1.0)
        } else {
            let lo = bounds.iter().map(|b| b.lo[2]).fold(f64::INFINITY, f64::min);
            let hi = bounds
                .iter()
                .map(|b| b.hi[2])
                .fold(f64::NEG_INFINITY, f64::max);
            let lat = bounds
                .iter()
                .flat_map(|b| [b.lo[0].abs(), b.hi[0].abs(), b.lo[1].abs(), b.hi[1].abs()])
                .fold(0.0, f64::max);
            ((lo, hi), (2.0 * lat).max(hi - lo))
        };
        let cell_side = 3.0 * lateral;
        let mut planes: Vec<f64> = layers
            .iter()
            .flat_map(|l| [l.z_bottom_cm, l.z_top_cm])
            .collect();
        if !bounds.is_empty() {
            planes.extend([band.0, band.1]);
        }
        planes.sort_by(f64::total_cmp);
        planes.dedup();
        let world = match (planes.first(), planes.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (0.0, 0.0),
        };
        Ok(Self {
            layers,
            volumes,
            cell_side,
            band,
            world,
            planes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn volumes(&self) -> &[SensitiveVolume] {
        &self.volumes
    }

    pub fn volume(&self, kind: VolumeKind) -> Option<&SensitiveVolume> {
        self.volumes.iter().find(|v| v.kind == kind)
    }

    /// Lateral period of the volume lattice, cm.
    pub fn cell_side_cm(&self) -> f64 {
        self.cell_side
    }

    /// Lowest and highest boundary plane.
    pub fn world_z(&self) -> (f64, f64) {
        self.world
    }

    pub fn layer_named(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub(crate) fn in_band(&self, z: f64) -> bool {
        !self.volumes.is_empty() && z >= self.band.0 && z <= self.band.1
    }

    /// Fold a point back into the central cell; returns the lateral
    /// distance removed.
    pub(crate) fn wrap(&self, p: &mut Vec3) -> [f64; 2] {
        let l = self.cell_side;
        let mut moved = [0.0; 2];
        for k in 0..2 {
            if p[k] < -0.5 * l || p[k] >= 0.5 * l {
                moved[k] = l * ((p[k] + 0.5 * l) / l).floor();
                p[k] -= moved[k];
            }
        }
        moved
    }

    pub fn locate(&self, p: Vec3) -> Region {
        if self.in_band(p[2]) {
            for (i, v) in self.volumes.iter().enumerate() {
                if v.shape.contains(p) {
                    return Region::Volume(i);
                }
            }
        }
        // layers are sorted top-down and half-open at the top
        for (i, l) in self.layers.iter().enumerate() {
            if p[2] >= l.z_bottom_cm && p[2] < l.z_top_cm {
                return Region::Layer(i);
            }
        }
        Region::Vacuum
    }

    pub fn material(&self, r: Region) -> Option<&Arc<Material>> {
        match r {
            Region::Volume(i) => Some(&self.volumes[i].material),
            Region::Layer(i) => Some(&self.layers[i].material),
            Region::Vacuum => None,
        }
    }

    /// Distance to the next boundary of any kind, or `None` when the ray
    /// leaves the world.
    pub(crate) fn distance_to_boundary(&self, p: Vec3, u: Vec3) -> Option<f64> {
        let mut d = f64::INFINITY;
        if u[2] > 0.0 {
            let k = self.planes.partition_point(|&z| z <= p[2]);
            if let Some(&z) = self.planes.get(k) {
                d = (z - p[2]) / u[2];
            }
        } else if u[2] < 0.0 {
            let k = self.planes.partition_point(|&z| z < p[2]);
            if k > 0 {
                d = (self.planes[k - 1] - p[2]) / u[2];
            }
        }
        if self.in_band(p[2]) {
            for v in &self.volumes {
                if let Some(t) = v.shape.next_crossing(p, u) {
                    d = d.min(t);
                }
            }
            let h = 0.5 * self.cell_side;
            for k in 0..2 {
                if u[k] > 0.0 {
                    d = d.min((h - p[k]) / u[k]);
                } else if u[k] < 0.0 {
                    d = d.min((-h - p[k]) / u[k]);
                }
            }
        }
        d.is_finite().then_some(d.max(0.0))
    }

    /// True once the particle is outside all planes and heading away.
    pub(crate) fn escaped(&self, p: Vec3, u: Vec3) -> bool {
        (p[2] >= self.world.1 && u[2] >= 0.0)
            || (p[2] <= self.world.0 && u[2] <= 0.0)
            || (self.planes.is_empty())
    }
}

fn pieces_disjoint(a: &Aabb, b: &Aabb, volumes: &[SensitiveVolume]) -> bool {
    let find = |bb: &Aabb| volumes.iter().find(|v| v.shape.bounds() == *bb);
    match (find(a), find(b)) {
        (Some(va), Some(vb)) => match (&va.shape, &vb.shape) {
            (Shape::Boxes(xs), Shape::Boxes(ys)) => xs.iter().all(|x| {
                ys.iter().all(|y| {
                    x.is_empty()
                        || y.is_empty()
                        || !(0..3).all(|k| x.lo[k] < y.hi[k] && y.lo[k] < x.hi[k])
                })
            }),
            _ => false,
        },
        _ => false,
    }
}

/// Chip layout: square island with a surrounding square frame ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipSpec {
    pub substrate: SubstrateMaterial,
    pub thickness_um: f64,
    pub island_side_mm: f64,
    pub orientation: Orientation,
    pub frame: bool,
    /// Half-width of the frame's inner edge, mm.
    pub frame_inner_half_mm: f64,
    /// Half-width of the frame's outer edge, mm.
    pub frame_outer_half_mm: f64,
    /// Copper lid thickness above the chip, mm; zero disables it.
    pub lid_thickness_mm: f64,
    pub lid_gap_mm: f64,
    /// Override of the substrate density, g/cm³.
    pub density_g_cm3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SubstrateMaterial {
    #[default]
    Silicon,
    Sapphire,
}

impl SubstrateMaterial {
    pub fn name(self) -> &'static str {
        match self {
            SubstrateMaterial::Silicon => "silicon",
            SubstrateMaterial::Sapphire => "sapphire",
        }
    }
}

impl Default for ChipSpec {
    fn default() -> Self {
        Self {
            substrate: SubstrateMaterial::Silicon,
            thickness_um: 500.0,
            island_side_mm: 5.0,
            orientation: Orientation::Horizontal,
            frame: true,
            frame_inner_half_mm: 3.0,
            // (2·5.83)² − 6² ≈ 100 mm²
            frame_outer_half_mm: 5.83,
            lid_thickness_mm: 1.0,
            lid_gap_mm: 0.5,
            density_g_cm3: None,
        }
    }
}

impl ChipSpec {
    /// Chip-plane box (half-extents in mm) mapped to the world.
    fn placed(&self, x: (f64, f64), y: (f64, f64)) -> Aabb {
        let t = self.thickness_um * 1e-4 * 0.5;
        let (x, y) = ((x.0 * 0.1, x.1 * 0.1), (y.0 * 0.1, y.1 * 0.1));
        match self.orientation {
            Orientation::Horizontal => Aabb {
                lo: [x.0, y.0, -t],
                hi: [x.1, y.1, t],
            },
            Orientation::Vertical => Aabb {
                lo: [x.0, -t, y.0],
                hi: [x.1, t, y.1],
            },
        }
    }

    pub fn island_box(&self) -> Aabb {
        let h = 0.5 * self.island_side_mm;
        self.placed((-h, h), (-h, h))
    }

    pub fn frame_boxes(&self) -> Vec<Aabb> {
        let (a, b) = (self.frame_inner_half_mm, self.frame_outer_half_mm);
        vec![
            self.placed((-b, b), (a, b)),
            self.placed((-b, b), (-b, -a)),
            self.placed((-b, -a), (-a, a)),
            self.placed((a, b), (-a, a)),
        ]
    }

    /// Top of the chip's bounding box, cm.
    pub fn top_cm(&self) -> f64 {
        match self.orientation {
            Orientation::Horizontal => self.thickness_um * 1e-4 * 0.5,
            Orientation::Vertical => {
                0.1 * if self.frame {
                    self.frame_outer_half_mm
                } else {
                    0.5 * self.island_side_mm
                }
            }
        }
    }

    pub fn volumes(&self, lib: &MaterialLibrary) -> Result<Vec<SensitiveVolume>, TransportError> {
        let mut mat = lib.get(self.substrate.name())?;
        if let Some(rho) = self.density_g_cm3 {
            mat = Arc::new(mat.with_density(rho)?);
        }
        let mut v = vec![SensitiveVolume {
            kind: VolumeKind::Island,
            material: mat.clone(),
            shape: Shape::Boxes(vec![self.island_box()]),
            orientation: self.orientation,
        }];
        if self.frame {
            v.push(SensitiveVolume {
                kind: VolumeKind::Frame,
                material: mat,
                shape: Shape::Boxes(self.frame_boxes()),
                orientation: self.orientation,
            });
        }
        Ok(v)
    }

    /// Chip-plane coordinates (cm) of a world point.
    pub fn to_chip_plane(orientation: Orientation, p: Vec3) -> [f64; 2] {
        match orientation {
            Orientation::Horizontal => [p[0], p[1]],
            Orientation::Vertical => [p[0], p[2]],
        }
    }
}

/// Surrounding laboratory: concrete ceiling and floor, aluminium cryostat
/// shells above and below the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabSpec {
    pub ceiling: bool,
    pub ceiling_thickness_cm: f64,
    pub ceiling_bottom_cm: f64,
    pub cryostat: bool,
    pub shell_thickness_cm: f64,
    pub shell_half_height_cm: f64,
    pub floor: bool,
    pub floor_thickness_cm: f64,
    pub floor_top_cm: f64,
    /// Half-width of the square floor slab centred under the device.
    pub floor_half_width_cm: f64,
}

impl Default for LabSpec {
    fn default() -> Self {
        Self {
            ceiling: true,
            ceiling_thickness_cm: 18.0,
            ceiling_bottom_cm: 250.0,
            cryostat: true,
            shell_thickness_cm: 1.0,
            shell_half_height_cm: 30.0,
            floor: true,
            floor_thickness_cm: 22.0,
            floor_top_cm: -108.0,
            floor_half_width_cm: 150.0,
        }
    }
}

impl LabSpec {
    pub fn bare() -> Self {
        Self {
            ceiling: false,
            cryostat: false,
            floor: false,
            ..Self::default()
        }
    }

    fn layers(
        &self,
        lib: &MaterialLibrary,
        inner: Vec<Layer>,
    ) -> Result<Vec<Layer>, TransportError> {
        let mut out = Vec::new();
        if self.ceiling {
            out.push(Layer {
                name: "ceiling".into(),
                material: lib.get("concrete")?,
                z_bottom_cm: self.ceiling_bottom_cm,
                z_top_cm: self.ceiling_bottom_cm + self.ceiling_thickness_cm,
                half_width_cm: f64::INFINITY,
            });
        }
        if self.cryostat {
            let h = self.shell_half_height_cm;
            out.push(Layer {
                name: "cryostat_top".into(),
                material: lib.get("aluminum")?,
                z_bottom_cm: h,
                z_top_cm: h + self.shell_thickness_cm,
                half_width_cm: f64::INFINITY,
            });
        }
        out.extend(inner);
        if self.cryostat {
            let h = self.shell_half_height_cm;
            out.push(Layer {
                name: "cryostat_bottom".into(),
                material: lib.get("aluminum")?,
                z_bottom_cm: -h - self.shell_thickness_cm,
                z_top_cm: -h,
                half_width_cm: f64::INFINITY,
            });
        }
        if self.floor {
            out.push(Layer {
                name: "floor".into(),
                material: lib.get("concrete")?,
                z_bottom_cm: self.floor_top_cm - self.floor_thickness_cm,
                z_top_cm: self.floor_top_cm,
                half_width_cm: self.floor_half_width_cm,
            });
        }
        Ok(out)
    }

    /// Lab around a chip with its copper lid.
    pub fn with_chip(
        &self,
        lib: &MaterialLibrary,
        chip: &ChipSpec,
    ) -> Result<SlabStack, TransportError> {
        let mut inner = Vec::new();
        if chip.lid_thickness_mm > 0.0 {
            let bottom = chip.top_cm() + 0.1 * chip.lid_gap_mm;
            inner.push(Layer {
                name: "lid".into(),
                material: lib.get("copper")?,
                z_bottom_cm: bottom,
                z_top_cm: bottom + 0.1 * chip.lid_thickness_mm,
                half_width_cm: f64::INFINITY,
            });
        }
        SlabStack::new(self.layers(lib, inner)?, chip.volumes(lib)?)
    }

    /// Lab around a bare 76.2 mm × 76.2 mm NaI cylinder (no cryostat).
    pub fn with_nai(
        &self,
        lib: &MaterialLibrary,
        axis: Orientation,
    ) -> Result<SlabStack, TransportError> {
        let lab = LabSpec {
            cryostat: false,
            ..*self
        };
        let nai = SensitiveVolume {
            kind: VolumeKind::Nai,
            material: lib.get("nai")?,
            shape: Shape::Cylinder {
                center: [0.0; 3],
                radius: 3.81,
                half_length: 3.81,
                axis,
            },
            orientation: axis,
        };
        SlabStack::new(lab.layers(lib, Vec::new())?, vec![nai])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> MaterialLibrary {
        MaterialLibrary::bundled().unwrap()
    }

    #[test]
    fn frame_area_is_100_mm2() {
        let c = ChipSpec::default();
        let a: f64 = c
            .frame_boxes()
            .iter()
            .map(|b| (b.hi[0] - b.lo[0]) * (b.hi[1] - b.lo[1]) * 100.0)
            .sum();
        assert!((a - 100.0).abs() < 0.5, "{a}");
    }

    #[test]
    fn default_lab_geometry() {
        let g = LabSpec::default()
            .with_chip(&lib(), &ChipSpec::default())
            .unwrap();
        let names: Vec<&str> = g.layers().iter().map(|l| l.name.as_str()).collect();
        assert_eq!(
            names,
            ["ceiling", "cryostat_top", "lid", "cryostat_bottom", "floor"]
        );
        assert!(matches!(g.locate([0.0, 0.0, 0.0]), Region::Volume(0)));
        assert!(matches!(g.locate([0.4, 0.0, 0.0]), Region::Volume(1)));
        assert_eq!(g.locate([0.27, 0.0, 0.0]), Region::Vacuum);
        assert!((g.cell_side_cm() - 3.0 * 1.166).abs() < 1e-9);
    }

    #[test]
    fn layers_must_be_top_down() {
        let l = lib();
        let c = l.get("concrete").unwrap();
        let a = Layer {
            name: "a".into(),
            material: c.clone(),
            z_bottom_cm: 0.0,
            z_top_cm: 1.0,
            half_width_cm: f64::INFINITY,
        };
        let b = Layer {
            name: "b".into(),
            material: c,
            z_bottom_cm: 2.0,
            z_top_cm: 3.0,
            half_width_cm: f64::INFINITY,
        };
        assert!(SlabStack::new(vec![a.clone(), b.clone()], vec![]).is_err());
        assert!(SlabStack::new(vec![b, a], vec![]).is_ok());
    }

    #[test]
    fn cylinder_crossings() {
        let s = Shape::Cylinder {
            center: [0.0; 3],
            radius: 1.0,
            half_length: 2.0,
            axis: Orientation::Vertical,
        };
        assert_eq!(
            s.next_crossing([0.0, 0.0, 5.0], [0.0, 0.0, -1.0]),
            Some(3.0)
        );
        assert_eq!(
            s.next_crossing([-3.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            Some(2.0)
        );
        assert_eq!(s.next_crossing([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), Some(1.0));
        assert_eq!(s.next_crossing([0.0, 5.0, 0.0], [1.0, 0.0, 0.0]), None);
        let h = Shape::Cylinder {
            center: [0.0; 3],
            radius: 1.0,
            half_length: 2.0,
            axis: Orientation::Horizontal,
        };
        assert_eq!(
            h.next_crossing([0.0, 0.0, 5.0], [0.0, 0.0, -1.0]),
            Some(4.0)
        );
    }

    #[test]
    fn wrap_into_cell() {
        let g = LabSpec::default()
            .with_chip(&lib(), &ChipSpec::default())
            .unwrap();
        let l = g.cell_side_cm();
        let mut p = [2.7 * l, -1.2 * l, 0.0];
        g.wrap(&mut p);
        assert!(p[0] >= -0.5 * l && p[0] < 0.5 * l && p[1] >= -0.5 * l && p[1] < 0.5 * l);
        assert!((p[0] - (-0.3 * l)).abs() < 1e-9 && (p[1] - (-0.2 * l)).abs() < 1e-9);
    }
}
