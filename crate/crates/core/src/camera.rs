//! Pinhole camera with Brown-Conrady lens distortion.
//!
//! Pixels are addressed as `p = (col, row, 1)ᵀ` with zero-based indices.
//! Camera coordinates have `x` to the right, `y` down and `z` forward.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec2, Vec3};
use crate::skeleton::Pose3D;

/// Iteration cap of the fixed-point undistortion.
pub const UNDISTORT_MAX_ITERS: usize = 20;
/// Per-coordinate step below which the fixed point is considered reached.
pub const UNDISTORT_STEP_TOL: f64 = 1e-12;
/// Largest accepted `‖distort(xu) − xd‖∞` after undistortion.
pub const UNDISTORT_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        let all_finite = [fx, fy, cx, cy, skew].iter().all(|v| v.is_finite());
        if !all_finite || fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Domain(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0,
        )
    }

    /// `K⁻¹ (u, v, 1)ᵀ`, returned as its first two components.
    pub fn normalize(&self, pixel: Vec2) -> Vec2 {
        let y = (pixel.y - self.cy) / self.fy;
        let x = (pixel.x - self.cx - self.skew * y) / self.fx;
        Vec2::new(x, y)
    }

    /// `K (x, y, 1)ᵀ`, returned as its first two components.
    pub fn denormalize(&self, point: Vec2) -> Vec2 {
        Vec2::new(
            self.fx * point.x + self.skew * point.y + self.cx,
            self.fy * point.y + self.cy,
        )
    }
}

/// Five-coefficient radial-tangential distortion. All zero is an ideal pinhole.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    pub k3: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        [self.k1, self.k2, self.p1, self.p2, self.k3]
            .iter()
            .all(|&c| c == 0.0)
    }

    fn radial(&self, r2: f64) -> f64 {
        1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
    }

    fn tangential(&self, p: Vec2) -> Vec2 {
        let r2 = p.norm_squared();
        Vec2::new(
            2.0 * self.p1 * p.x * p.y + self.p2 * (r2 + 2.0 * p.x * p.x),
            self.p1 * (r2 + 2.0 * p.y * p.y) + 2.0 * self.p2 * p.x * p.y,
        )
    }

    /// Maps an ideal normalized image point to where the lens images it.
    pub fn distort(&self, p: Vec2) -> Vec2 {
        p * self.radial(p.norm_squared()) + self.tangential(p)
    }

    /// Inverts [`Distortion::distort`] by the fixed-point iteration
    /// `xu ← (xd − tangential(xu)) / radial(xu)`.
    pub fn undistort(&self, distorted: Vec2) -> Result<Vec2> {
        if self.is_zero() {
            return Ok(distorted);
        }
        let mut p = distorted;
        let mut iterations = 0;
        while iterations < UNDISTORT_MAX_ITERS {
            iterations += 1;
            let next = (distorted - self.tangential(p)) / self.radial(p.norm_squared());
            let step = (next - p).amax();
            p = next;
            if !(step >= UNDISTORT_STEP_TOL) {
                break;
            }
        }
        let residual = (self.distort(p) - distorted).amax();
        if residual.is_finite() && residual <= UNDISTORT_RESIDUAL_TOL {
            Ok(p)
        } else {
            Err(Error::NoConvergence {
                iterations,
                residual,
            })
        }
    }
}

/// Rigid transform `P' = R P + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    rotation: Mat3,
    translation: Vec3,
}

impl Extrinsics {
    pub const ROTATION_TOL: f64 = 1e-10;

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Mat3::identity()).amax();
        let det = rotation.determinant();
        if !(ortho <= Self::ROTATION_TOL && (det - 1.0).abs() <= Self::ROTATION_TOL) {
            return Err(Error::Domain(format!(
                "extrinsic rotation is not a proper rotation (|RᵀR − I| = {ortho:e}, det = {det})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("extrinsic translation is not finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `(Rᵀ, −Rᵀ t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Position of the camera centre in the source frame.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera at `eye` looking at `target`; image `y` points along `−up`
    /// projected onto the image plane.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() <= crate::geometry::EPS {
            return Err(Error::Domain("look-at camera sits on its target".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(up);
        if right.norm() <= 1e-9 * up.norm() {
            return Err(Error::Domain(
                "look-at view axis is parallel to the up vector".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Self {
            rotation,
            translation: -(rotation * eye),
        })
    }
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    pub extrinsics: Extrinsics,
    pub width: usize,
    pub height: usize,
    /// Sample pixel centres at `+0.5` instead of at the integer indices.
    pub half_pixel: bool,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image size must be at least 1×1, got {width}×{height}"
            )));
        }
        Ok(Self {
            intrinsics,
            distortion: Distortion::default(),
            extrinsics: Extrinsics::identity(),
            width,
            height,
            half_pixel: false,
        })
    }

    pub fn with_distortion(mut self, distortion: Distortion) -> Self {
        self.distortion = distortion;
        self
    }

    pub fn with_extrinsics(mut self, extrinsics: Extrinsics) -> Self {
        self.extrinsics = extrinsics;
        self
    }

    /// Same view at another resolution; intrinsics are rescaled so the
    /// image keeps its field of view.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("image size must be at least 1×1".into()));
        }
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let k = &self.intrinsics;
        let mut out = self.clone();
        out.intrinsics = Intrinsics::new(k.fx * sx, k.fy * sy, k.cx * sx, k.cy * sy, k.skew * sx)?;
        out.width = width;
        out.height = height;
        Ok(out)
    }

    fn pixel(&self, row: usize, col: usize) -> Vec2 {
        let offset = if self.half_pixel { 0.5 } else { 0.0 };
        Vec2::new(col as f64 + offset, row as f64 + offset)
    }

    /// Unit ray through pixel `(row, col)` in camera coordinates.
    pub fn ray(&self, row: usize, col: usize) -> Result<Vec3> {
        let distorted = self.intrinsics.normalize(self.pixel(row, col));
        let p = self.distortion.undistort(distorted)?;
        Ok(Vec3::new(p.x, p.y, 1.0).normalize())
    }

    /// Projects a point given in camera coordinates to pixel coordinates.
    pub fn project(&self, p: &Vec3) -> Vec2 {
        let ideal = Vec2::new(p.x / p.z, p.y / p.z);
        self.intrinsics.denormalize(self.distortion.distort(ideal))
    }
}

/// One unit ray per pixel, row-major.
#[derive(Debug, Clone)]
pub struct RayGrid {
    pub width: usize,
    pub height: usize,
    pub rays: Vec<Vec3>,
}

impl RayGrid {
    pub fn get(&self, row: usize, col: usize) -> &Vec3 {
        &self.rays[row * self.width + col]
    }
}

/// Casts the ray of every pixel. Rows are computed in parallel.
pub fn ray_grid(camera: &CameraModel) -> Result<RayGrid> {
    let rows: Vec<Vec<Vec3>> = (0..camera.height)
        .into_par_iter()
        .map(|row| {
            (0..camera.width)
                .map(|col| {
                    camera.ray(row, col).map_err(|e| Error::Pixel {
                        row,
                        col,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(RayGrid {
        width: camera.width,
        height: camera.height,
        rays: rows.into_iter().flatten().collect(),
    })
}

/// Moves every joint into the frame of `extrinsics`.
pub fn transform_pose(pose: &Pose3D, extrinsics: &Extrinsics) -> Pose3D {
    Pose3D {
        joints: pose.joints.iter().map(|p| extrinsics.apply(p)).collect(),
        root: pose.root,
    }
}

/// Image-up direction of the reference frame (`y` points down).
pub const ORBIT_UP: Vec3 = Vec3::new(0.0, -1.0, 0.0);

/// `n` cameras on the sphere of radius `radius` around `center`, raised by
/// `elevation` radians and evenly spaced in azimuth starting at `+x`. Each
/// looks at `center`; intrinsics, distortion and resolution come from
/// `template`.
pub fn orbit_cameras(
    center: &Vec3,
    radius: f64,
    elevation: f64,
    n: usize,
    template: &CameraModel,
) -> Result<Vec<CameraModel>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!(
            "orbit radius must be positive, got {radius}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("orbit needs at least one camera".into()));
    }
    (0..n)
        .map(|k| {
            let azimuth = TAU * k as f64 / n as f64;
            let offset = Vec3::new(
                elevation.cos() * azimuth.cos(),
                -elevation.sin(),
                elevation.cos() * azimuth.sin(),
            );
            let eye = center + radius * offset;
            let extrinsics = Extrinsics::look_at(&eye, center, &ORBIT_UP)?;
            Ok(template.clone().with_extrinsics(extrinsics))
        })
        .collect()
}
