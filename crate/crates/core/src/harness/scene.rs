//! Synthetic scenes: piecewise-constant box fields, analytic ray-cast scenes
//! and camera paths.

use nalgebra::{Matrix3, Vector3};

use crate::energy::{Observation, ObservationBundle};
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::harness::noise::{add_noise_masked, NoiseSpec};

/// Axis-aligned square with its top-left corner at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub row: usize,
    pub col: usize,
    pub side: usize,
    pub depth: f64,
}

/// Box sides and corners of the default 128×128 layout.
const DEFAULT_LAYOUT: [(usize, usize, usize); 4] = [(12, 12, 8), (12, 60, 16), (60, 12, 32), (56, 56, 64)];

/// Four boxes of sides {8, 16, 32, 64} at `background + offsets[i]`,
/// with positions and sides scaled to `size / 128`.
pub fn default_boxes(size: usize, background: f64, offsets: [f64; 4]) -> Vec<BoxSpec> {
    DEFAULT_LAYOUT
        .iter()
        .zip(offsets)
        .map(|(&(row, col, side), off)| BoxSpec {
            row: row * size / 128,
            col: col * size / 128,
            side: (side * size / 128).max(1),
            depth: background + off,
        })
        .collect()
}

/// Background field with boxes painted in order; later boxes overwrite.
pub fn make_boxes_scene(grid: Grid, boxes: &[BoxSpec], background: f64) -> Result<ScalarField> {
    let mut f = ScalarField::constant(grid, background);
    for b in boxes {
        if b.row + b.side > grid.height || b.col + b.side > grid.width {
            return Err(Error::domain(format!("box {b:?} does not fit in a {}×{} grid", grid.width, grid.height)));
        }
        for r in b.row..b.row + b.side {
            for c in b.col..b.col + b.side {
                f.set(r, c, b.depth);
            }
        }
    }
    Ok(f)
}

/// `k` independently noised copies of an aligned depth field.
pub fn noisy_bundle(truth: &ScalarField, valid: &[bool], k: usize, noise: &NoiseSpec) -> Result<ObservationBundle> {
    let views = (0..k)
        .map(|i| {
            let spec = NoiseSpec { seed: noise.seed.wrapping_add(i as u64), ..*noise };
            Ok(Observation::masked(add_noise_masked(truth, valid, &spec)?, valid.to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    ObservationBundle::new(views)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere { center: Vector3<f64>, radius: f64 },
    /// Infinite plane through `point` with unit `normal`.
    Plane { point: Vector3<f64>, normal: Vector3<f64> },
    /// Axis-aligned cuboid.
    Cuboid { min: Vector3<f64>, max: Vector3<f64> },
}

impl Primitive {
    /// Nearest positive ray parameter and outward surface normal.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        const EPS: f64 = 1e-9;
        match *self {
            Primitive::Sphere { center, radius } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - d.norm_squared() * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let a = d.norm_squared();
                let t = [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > EPS)?;
                Some((t, (o + d * t - center) / radius))
            }
            Primitive::Plane { point, normal } => {
                let den = normal.dot(d);
                if den.abs() < EPS {
                    return None;
                }
                let t = normal.dot(&(point - o)) / den;
                (t > EPS).then_some((t, normal))
            }
            Primitive::Cuboid { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                for a in 0..3 {
                    if d[a].abs() < EPS {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    if ta > t0 {
                        t0 = ta;
                        axis = a;
                    }
                    t1 = t1.min(tb);
                }
                if t0 > t1 || t0 <= EPS {
                    return None;
                }
                let mut n = Vector3::zeros();
                n[axis] = -d[axis].signum();
                Some((t0, n))
            }
        }
    }
}

/// Primitives with per-primitive albedo for the intensity render.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    pub primitives: Vec<(Primitive, f64)>,
    /// World-space direction towards the light.
    pub light: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub depth: ScalarField,
    pub valid: Vec<bool>,
    /// Lambertian shading in [0, 1]; 0 where nothing is hit.
    pub intensity: ScalarField,
}

impl AnalyticScene {
    /// Unit sphere at the origin with a smaller sphere and a slab in front of it.
    pub fn object() -> Self {
        Self {
            primitives: vec![
                (Primitive::Sphere { center: Vector3::zeros(), radius: 1.0 }, 0.8),
                (Primitive::Sphere { center: Vector3::new(0.55, -0.45, -0.75), radius: 0.35 }, 0.5),
                (
                    Primitive::Cuboid { min: Vector3::new(-1.1, 0.55, -1.1), max: Vector3::new(0.2, 0.85, -0.3) },
                    0.3,
                ),
            ],
            light: Vector3::new(-0.4, -0.6, -1.0).normalize(),
        }
    }

    /// Ground plane at depth 300 (+z) with blocks rising towards the camera.
    pub fn urban() -> Self {
        let ground = 300.0;
        let block = |x0: f64, y0: f64, w: f64, h: f64, height: f64| Primitive::Cuboid {
            min: Vector3::new(x0, y0, ground - height),
            max: Vector3::new(x0 + w, y0 + h, ground),
        };
        Self {
            primitives: vec![
                (Primitive::Plane { point: Vector3::new(0.0, 0.0, ground), normal: Vector3::new(0.0, 0.0, -1.0) }, 0.6),
                (block(-150.0, -140.0, 60.0, 70.0, 60.0), 0.9),
                (block(-60.0, -150.0, 50.0, 90.0, 100.0), 0.4),
                (block(30.0, -120.0, 80.0, 50.0, 35.0), 0.75),
                (block(-140.0, 20.0, 90.0, 60.0, 80.0), 0.5),
                (block(10.0, 10.0, 40.0, 40.0, 120.0), 0.85),
                (block(80.0, 40.0, 60.0, 100.0, 50.0), 0.35),
            ],
            light: Vector3::new(0.3, -0.5, -1.0).normalize(),
        }
    }

    /// Ray-cast depth along the camera axis, validity and shading.
    pub fn render(&self, grid: Grid, camera: &CameraIntrinsics, pose: &Pose) -> Rendering {
        let mut depth = ScalarField::zeros(grid);
        let mut intensity = ScalarField::zeros(grid);
        let mut valid = vec![false; grid.len()];
        let origin = pose.translation;
        for r in 0..grid.height {
            for c in 0..grid.width {
                let ray_cam = camera.unproject(c as f64, r as f64);
                let dir = pose.rotation * ray_cam;
                let hit = self
                    .primitives
                    .iter()
                    .filter_map(|(p, albedo)| p.intersect(&origin, &dir).map(|(t, n)| (t, n, *albedo)))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((t, n, albedo)) = hit {
                    // `ray_cam` has unit z, so `t` is the camera-frame depth.
                    let i = grid.index(r, c);
                    depth.data[i] = t;
                    valid[i] = true;
                    intensity.data[i] = 0.1 + 0.9 * albedo * n.dot(&self.light).max(0.0);
                }
            }
        }
        Rendering { depth, valid, intensity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Orbit,
    Translation,
}

pub const ORBIT_RADIUS: f64 = 3.0;
pub const ORBIT_STEP: f64 = std::f64::consts::PI / 36.0;

/// Camera-to-world poses. Orbit: cameras on a circle of radius 3 around the
/// origin in the x–z plane, looking at it, `spacing` radians apart and centred
/// on the pose at `(0, 0, −3)`. Translation: identity orientation, positions
/// `spacing` apart along x and centred on the origin.
pub fn synth_camera_path(kind: PathKind, count: usize, spacing: f64) -> Result<Vec<Pose>> {
    if count == 0 {
        return Err(Error::domain("camera path needs at least one pose"));
    }
    let centre = (count - 1) as f64 / 2.0;
    (0..count)
        .map(|k| {
            let s = (k as f64 - centre) * spacing;
            match kind {
                PathKind::Translation => Ok(Pose::from_translation(Vector3::new(s, 0.0, 0.0))),
                PathKind::Orbit => {
                    // rotation about the world y axis keeps the optical axis on the origin
                    let (sin, cos) = s.sin_cos();
                    let rotation = Matrix3::new(cos, 0.0, sin, 0.0, 1.0, 0.0, -sin, 0.0, cos);
                    Pose::new(rotation, rotation * Vector3::new(0.0, 0.0, -ORBIT_RADIUS))
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxes_construction() {
        let g = Grid::new(128, 128);
        assert_eq!(make_boxes_scene(g, &[], 2.0).unwrap(), ScalarField::constant(g, 2.0));
        let b = BoxSpec { row: 3, col: 4, side: 8, depth: 3.0 };
        let f = make_boxes_scene(g, &[b], 2.0).unwrap();
        assert_eq!(f.data.iter().filter(|&&v| v == 3.0).count(), 64);
        let boxes = default_boxes(128, 5.0, [1.0, -1.0, 0.5, -0.5]);
        let f = make_boxes_scene(g, &boxes, 5.0).unwrap();
        for (b, expect) in boxes.iter().zip([64, 256, 1024, 4096]) {
            assert_eq!(f.data.iter().filter(|&&v| v == b.depth).count(), expect);
        }
        assert!(make_boxes_scene(Grid::new(8, 8), &[BoxSpec { row: 4, col: 0, side: 5, depth: 1.0 }], 0.0).is_err());
    }

    #[test]
    fn orbit_geometry() {
        let one = synth_camera_path(PathKind::Orbit, 1, ORBIT_STEP).unwrap();
        assert!((one[0].translation - Vector3::new(0.0, 0.0, -3.0)).norm() < 1e-12);
        assert!((one[0].rotation - Matrix3::identity()).norm() < 1e-12);
        let path = synth_camera_path(PathKind::Orbit, 5, ORBIT_STEP).unwrap();
        let chord = 2.0 * 3.0 * (std::f64::consts::PI / 72.0).sin();
        for w in path.windows(2) {
            assert!(((w[1].translation - w[0].translation).norm() - chord).abs() < 1e-12);
        }
        for p in &path {
            // optical axis passes through the origin
            let axis = p.rotation * Vector3::z();
            assert!(p.translation.cross(&axis).norm() < 1e-12);
            assert!(p.translation.dot(&axis) < 0.0);
        }
        assert!(synth_camera_path(PathKind::Orbit, 0, 1.0).is_err());
    }

    #[test]
    fn translation_span() {
        let path = synth_camera_path(PathKind::Translation, 11, 4.0).unwrap();
        assert!(((path[10].translation - path[0].translation).norm() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_render_depth() {
        let g = Grid::new(64, 64);
        let cam = CameraIntrinsics::virtual_camera(64, 64);
        let pose = synth_camera_path(PathKind::Orbit, 1, ORBIT_STEP).unwrap()[0];
        let r = AnalyticScene::object().render(g, &cam, &pose);
        let centre = g.index(32, 32);
        assert!(r.valid[centre]);
        assert!((r.depth.data[centre] - 2.0).abs() < 1e-9);
        assert!(!r.valid[0]);
    }

    #[test]
    fn urban_ground_depth() {
        let g = Grid::new(64, 64);
        let cam = CameraIntrinsics::virtual_camera(64, 64);
        let r = AnalyticScene::urban().render(g, &cam, &Pose::identity());
        assert!(r.valid.iter().all(|&v| v));
        assert!(r.depth.data.iter().all(|&d| d > 100.0 && d <= 300.0 + 1e-9));
        assert!(r.depth.data.iter().any(|&d| (d - 300.0).abs() < 1e-9));
    }
}

/// A synthetic multi-view dataset.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub camera: CameraIntrinsics,
    pub poses: Vec<Pose>,
    /// Noisy depth and validity per view.
    pub views: Vec<(ScalarField, Vec<bool>)>,
    /// Noise-free depth and validity per view.
    pub truths: Vec<(ScalarField, Vec<bool>)>,
    pub intensities: Vec<ScalarField>,
}

/// Builds the dataset described by a `[scene]` section. View `k` uses noise
/// seed `seed + k`.
pub fn synthesize(scene: &crate::harness::config::SceneSection) -> Result<SyntheticData> {
    use crate::harness::config::SceneKind;
    if scene.views == 0 {
        return Err(Error::config("scene needs at least one view"));
    }
    if scene.width == 0 || scene.height == 0 {
        return Err(Error::config("scene width and height must be positive"));
    }
    let grid = Grid::new(scene.width, scene.height);
    let camera = CameraIntrinsics::virtual_camera(scene.width, scene.height);
    let noise = |k: usize| NoiseSpec { kind: scene.noise, scale: scene.noise_scale, seed: scene.seed.wrapping_add(k as u64) };

    let (poses, truths, intensities) = match scene.kind {
        SceneKind::Boxes => {
            let size = scene.width.min(scene.height);
            let gt = make_boxes_scene(grid, &default_boxes(size, scene.background, scene.offsets), scene.background)?;
            let (lo, hi) = (gt.min(), gt.max());
            let image = gt.map(|d| if hi > lo { (d - lo) / (hi - lo) } else { 0.5 });
            let valid = vec![true; grid.len()];
            let n = scene.views;
            (vec![Pose::identity(); n], vec![(gt, valid); n], vec![image; n])
        }
        SceneKind::Orbit | SceneKind::Translation => {
            let (analytic, kind, step) = if scene.kind == SceneKind::Orbit {
                (AnalyticScene::object(), PathKind::Orbit, ORBIT_STEP)
            } else {
                (AnalyticScene::urban(), PathKind::Translation, 4.0)
            };
            let poses = synth_camera_path(kind, scene.views, scene.spacing.unwrap_or(step))?;
            let renders: Vec<Rendering> = poses.iter().map(|p| analytic.render(grid, &camera, p)).collect();
            let truths = renders.iter().map(|r| (r.depth.clone(), r.valid.clone())).collect();
            let images = renders.into_iter().map(|r| r.intensity).collect();
            (poses, truths, images)
        }
    };
    let views = truths
        .iter()
        .enumerate()
        .map(|(k, (d, valid))| {
            let noisy = add_noise_masked(d, valid, &noise(k))?;
            // noise may push a sample behind the camera; such samples are dropped
            let valid: Vec<bool> = noisy.data.iter().zip(valid).map(|(&z, &ok)| ok && z > 0.0).collect();
            Ok((noisy, valid))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticData { camera, poses, views, truths, intensities })
}
