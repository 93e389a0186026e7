//! Pinhole cameras, rigid poses, depth reprojection and heuristic confidence
//! priors.
//!
//! Pixel `(u, v)` is column `u`, row `v`, with integer coordinates at pixel
//! centres. Camera frames have `x` right, `y` down and `z` along the optical
//! axis; depth is the `z` coordinate of the surface point.

use nalgebra::{Matrix3, Vector3};

use crate::energy::ConfidenceField;
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};

/// Lower clamp applied to heuristic confidences so they stay strictly positive.
pub const CONFIDENCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cu: f64, cv: f64) -> Result<Self> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::domain(format!("focal length must be positive, got {f}")));
        }
        Ok(Self { f, cu, cv })
    }

    /// The 640×480 virtual camera `(f, cu, cv) = (576, 320, 240)` rescaled to
    /// a `width × height` image.
    pub fn virtual_camera(width: usize, height: usize) -> Self {
        Self { f: 576.0 * width as f64 / 640.0, cu: 320.0 * width as f64 / 640.0, cv: 240.0 * height as f64 / 480.0 }
    }

    /// `A⁻¹ [u, v, 1]ᵀ`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cu) / self.f, (v - self.cv) / self.f, 1.0)
    }

    /// Perspective projection; `None` for points with `z ≤ 0`.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.f * p.x / p.z + self.cu, self.f * p.y / p.z + self.cv))
    }

    /// Unit viewing ray through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        self.unproject(u, v).normalize()
    }
}

/// Rigid transform `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        if !pose.is_rigid(1e-9) {
            return Err(Error::domain("rotation must be orthonormal with determinant +1"));
        }
        Ok(pose)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Transform taking camera-`k` coordinates into the reference camera,
    /// given both camera-to-world poses.
    pub fn relative(camera_to_world_k: &Pose, camera_to_world_ref: &Pose) -> Pose {
        camera_to_world_ref.inverse().compose(camera_to_world_k)
    }

    /// Row-major `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_row_major(m: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Pose::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }
}

/// Per-pixel 3-D points; `None` where the source depth is invalid.
pub type PointField = Vec<Option<Vector3<f64>>>;

/// `X̃(u) = d(u) R A⁻¹ [u; 1] + t` for every valid pixel.
pub fn backproject(depth: &ScalarField, valid: &[bool], camera: &CameraIntrinsics, relative: &Pose) -> PointField {
    let grid = depth.grid;
    let mut out = Vec::with_capacity(grid.len());
    for r in 0..grid.height {
        for c in 0..grid.width {
            let i = grid.index(r, c);
            let d = depth.data[i];
            out.push((valid[i] && d > 0.0 && d.is_finite()).then(|| {
                relative.rotation * (camera.unproject(c as f64, r as f64) * d) + relative.translation
            }));
        }
    }
    out
}

/// Forward-warps a depth map into another camera with the same intrinsics.
///
/// Each valid source pixel is backprojected, moved by `relative`, projected
/// and rounded to the nearest target pixel; colliding points keep the
/// smallest depth. Returns the warped depth (sentinel `0.0` where invalid)
/// and its validity mask.
pub fn reproject(
    depth: &ScalarField,
    valid: &[bool],
    relative: &Pose,
    camera: &CameraIntrinsics,
) -> (ScalarField, Vec<bool>) {
    let grid = depth.grid;
    let mut zbuf = vec![f64::INFINITY; grid.len()];
    for p in backproject(depth, valid, camera, relative).into_iter().flatten() {
        let Some((u, v)) = camera.project(&p) else { continue };
        let (cu, rv) = (u.round(), v.round());
        if cu < 0.0 || rv < 0.0 || cu >= grid.width as f64 || rv >= grid.height as f64 {
            continue;
        }
        let i = grid.index(rv as usize, cu as usize);
        if p.z < zbuf[i] {
            zbuf[i] = p.z;
        }
    }
    let mask: Vec<bool> = zbuf.iter().map(|z| z.is_finite()).collect();
    let data = zbuf.iter().map(|&z| if z.is_finite() { z } else { 0.0 }).collect();
    (ScalarField { grid, data }, mask)
}

/// Unit surface normals facing the camera; `None` where undefined.
pub type NormalMap = Vec<Option<Vector3<f64>>>;

/// Normals from the cross product of forward-difference tangents of the
/// backprojected surface. The last row and column are invalid.
pub fn normal_map(depth: &ScalarField, valid: &[bool], camera: &CameraIntrinsics) -> NormalMap {
    let grid = depth.grid;
    let points = backproject(depth, valid, camera, &Pose::identity());
    let mut normals = vec![None; grid.len()];
    for r in 0..grid.height.saturating_sub(1) {
        for c in 0..grid.width.saturating_sub(1) {
            let i = grid.index(r, c);
            let (Some(p), Some(pu), Some(pv)) = (points[i], points[i + 1], points[i + grid.width]) else {
                continue;
            };
            let n = (pu - p).cross(&(pv - p));
            let len = n.norm();
            if len < 1e-12 {
                continue;
            }
            let mut n = n / len;
            if n.dot(&camera.unproject(c as f64, r as f64)) > 0.0 {
                n = -n;
            }
            normals[i] = Some(n);
        }
    }
    normals
}

/// `|n(u) · r(u)|` clamped to `[CONFIDENCE_FLOOR, 1]`.
pub fn geometric_confidence(depth: &ScalarField, valid: &[bool], camera: &CameraIntrinsics) -> ConfidenceField {
    let grid = depth.grid;
    let normals = normal_map(depth, valid, camera);
    let field = ScalarField::from_fn(grid, |r, c| match normals[grid.index(r, c)] {
        Some(n) => n.dot(&camera.ray(c as f64, r as f64)).abs().clamp(CONFIDENCE_FLOOR, 1.0),
        None => CONFIDENCE_FLOOR,
    });
    ConfidenceField::new(field).expect("clamped to a positive range")
}

/// Normalized Gaussian taps truncated at `3σ`.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(field: &ScalarField, sigma: f64) -> ScalarField {
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return field.clone();
    }
    let radius = (taps.len() / 2) as i64;
    let grid = field.grid;
    let (w, h) = (grid.width as i64, grid.height as i64);
    let horiz = ScalarField::from_fn(grid, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * field.get(r, (c as i64 + k as i64 - radius).clamp(0, w - 1) as usize))
            .sum()
    });
    ScalarField::from_fn(grid, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horiz.get((r as i64 + k as i64 - radius).clamp(0, h - 1) as usize, c))
            .sum()
    })
}

/// Appearance prior `gain · ‖G_σ ∗ ∇I‖^exponent + CONFIDENCE_FLOOR`.
pub fn edge_confidence(image: &ScalarField, gain: f64, exponent: f64, sigma: f64) -> Result<ConfidenceField> {
    if !(gain > 0.0) || !(sigma >= 0.0) || !(exponent > 0.0) {
        return Err(Error::domain("edge confidence needs gain > 0, exponent > 0, sigma ≥ 0"));
    }
    let g = crate::grid::grad(image);
    let gu = gaussian_blur(&ScalarField { grid: image.grid, data: g.u }, sigma);
    let gv = gaussian_blur(&ScalarField { grid: image.grid, data: g.v }, sigma);
    let data = gu
        .data
        .iter()
        .zip(&gv.data)
        .map(|(a, b)| gain * a.hypot(*b).powf(exponent) + CONFIDENCE_FLOOR)
        .collect();
    ConfidenceField::new(ScalarField { grid: image.grid, data })
}

/// Hyper-parameters `(W, b)` whose confidence bound `2bW_ii` equals the
/// pointwise product of the priors.
///
/// A prior whose maximum exceeds 1 is divided by that maximum first; every
/// prior is then clamped below at [`CONFIDENCE_FLOOR`].
pub fn prior_to_hyperparams(priors: &[ConfidenceField], b0: f64) -> Result<(ScalarField, f64)> {
    let first = priors.first().ok_or_else(|| Error::config("at least one confidence prior is required"))?;
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::domain(format!("b must be positive, got {b0}")));
    }
    let grid: Grid = first.grid();
    let mut combined = vec![1.0; grid.len()];
    for prior in priors {
        grid.check(prior.grid())?;
        let scale = prior.max().max(1.0);
        for (c, &p) in combined.iter_mut().zip(prior.values()) {
            *c *= (p / scale).max(CONFIDENCE_FLOOR);
        }
    }
    let w = combined.into_iter().map(|c| c / (2.0 * b0)).collect();
    Ok((ScalarField { grid, data: w }, b0))
}
