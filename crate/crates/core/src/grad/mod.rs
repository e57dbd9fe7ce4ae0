//! Exact gradients of the renderer, and the numerical oracles that certify
//! them.
//!
//! The backward pass is hand-derived. Per pixel the weights are a softmax
//! of `ℓ_k = ln F_k − ln(1 + z*_k⁴)`, and `ℓ_k` depends on the primitive only
//! through `a = rᵀSr`, `b = rᵀSμ` and `c = μᵀSμ`. Sensitivities to those
//! three scalars are accumulated per primitive across pixels and pushed
//! through `S = Σ⁻¹`, then through the limb shape
//! `Σ = wI + (L − w) n nᵀ` (what `R diag(L, w, w) Rᵀ` equals for any
//! rotation taking the first axis onto the limb direction `n`).
//!
//! The background depth is `β` times the largest `z*` of the image, so its
//! sensitivity lands on the single (pixel, primitive) pair attaining that
//! maximum.

mod certify;
mod fd;
mod oracle;

pub use certify::{
    gradcheck, oracle_compare, random_density_case, relative_error, random_small_scene, DensityCase,
    GradCheckReport, OracleReport, SmallScene, GRADCHECK_ABS_FLOOR, GRADCHECK_STEP, GRADCHECK_TOL,
    ORACLE_TOL,
};
pub use fd::fd_gradient;
pub use oracle::{quad_oracle, quad_oracle_log, QuadratureOptions};

use rayon::prelude::*;

use crate::camera::{transform_pose, CameraModel, Extrinsics};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::renderer::{render, FeatureImage, RenderParams, Scene};
use crate::skeleton::{primitives_from_pose, Appearances, Pose3D, SkeletonTopology};
use crate::special::d_ln_erfc;

/// Upstream sensitivity `dLoss/dJ`, shaped like the rendered image.
pub type AdjointImage = FeatureImage;

/// Everything a render needs besides the pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSetup {
    pub topology: SkeletonTopology,
    pub appearances: Appearances,
    pub camera: CameraModel,
    pub params: RenderParams,
}

impl SceneSetup {
    pub fn render(&self, pose: &Pose3D) -> Result<FeatureImage> {
        render_pose(pose, &self.topology, &self.appearances, &self.camera, &self.params)
    }

    pub fn backward(&self, pose: &Pose3D, adjoint: &AdjointImage) -> Result<SceneGradients> {
        render_backward(
            pose,
            &self.topology,
            &self.appearances,
            &self.camera,
            &self.params,
            adjoint,
        )
    }
}

/// Gradient of a scalar `⟨adjoint, J⟩` with respect to the scene inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGradients {
    /// Per joint position, in the pose's own frame.
    pub joints: Vec<Vec3>,
    /// Per limb width.
    pub widths: Vec<f64>,
    pub appearances: Appearances,
    pub background: Vec<f64>,
}

impl SceneGradients {
    /// Flattened as joints (xyz each), widths, appearances, background.
    pub fn to_flat(&self) -> Vec<f64> {
        self.joints
            .iter()
            .flat_map(|p| p.iter().copied())
            .chain(self.widths.iter().copied())
            .chain(self.appearances.as_slice().iter().copied())
            .chain(self.background.iter().copied())
            .collect()
    }
}

/// Renders a pose: joints are moved into the camera frame, turned into
/// primitives and rendered.
pub fn render_pose(
    pose: &Pose3D,
    topology: &SkeletonTopology,
    appearances: &Appearances,
    camera: &CameraModel,
    params: &RenderParams,
) -> Result<FeatureImage> {
    let local = transform_pose(pose, &camera.extrinsics);
    let prims = primitives_from_pose(&local, topology, appearances)?;
    render(&prims, &camera_frame(camera), params)
}

fn camera_frame(camera: &CameraModel) -> CameraModel {
    camera.clone().with_extrinsics(Extrinsics::identity())
}

/// Per-primitive sensitivities to `a`, `b` and `c`, summed over pixels.
#[derive(Debug, Clone)]
struct PrimAccum {
    /// Σ ∂/∂a · r rᵀ
    a_rr: Mat3,
    /// Σ ∂/∂b · r
    b_r: Vec3,
    /// Σ ∂/∂c
    c: f64,
}

impl PrimAccum {
    fn zero() -> Self {
        Self {
            a_rr: Mat3::zeros(),
            b_r: Vec3::zeros(),
            c: 0.0,
        }
    }

    fn add(&mut self, other: &PrimAccum) {
        self.a_rr += other.a_rr;
        self.b_r += other.b_r;
        self.c += other.c;
    }
}

struct RowAccum {
    prims: Vec<PrimAccum>,
    appearances: Vec<f64>,
    background: Vec<f64>,
    background_depth: f64,
}

impl RowAccum {
    fn zero(prims: usize, channels: usize) -> Self {
        Self {
            prims: vec![PrimAccum::zero(); prims],
            appearances: vec![0.0; prims * channels],
            background: vec![0.0; channels],
            background_depth: 0.0,
        }
    }

    fn add(&mut self, other: &RowAccum) {
        for (a, b) in self.prims.iter_mut().zip(&other.prims) {
            a.add(b);
        }
        for (a, b) in self.appearances.iter_mut().zip(&other.appearances) {
            *a += b;
        }
        for (a, b) in self.background.iter_mut().zip(&other.background) {
            *a += b;
        }
        self.background_depth += other.background_depth;
    }
}

/// `d/dz (−ln(1 + z⁴))`
fn d_neg_ln_raster(z: f64) -> f64 {
    let z3 = z * z * z;
    -4.0 * z3 / (1.0 + z3 * z)
}

/// Gradient of `⟨adjoint, render_pose(pose, …)⟩` with respect to the joint
/// positions, limb widths, appearances and background appearance.
///
/// Accumulation runs per image row and rows are summed in order, so the
/// result does not depend on thread scheduling.
pub fn render_backward(
    pose: &Pose3D,
    topology: &SkeletonTopology,
    appearances: &Appearances,
    camera: &CameraModel,
    params: &RenderParams,
    adjoint: &AdjointImage,
) -> Result<SceneGradients> {
    let channels = params.channels();
    if adjoint.shape() != (camera.height, camera.width, channels) {
        return Err(Error::Domain(format!(
            "adjoint is {:?}, render is {:?}",
            adjoint.shape(),
            (camera.height, camera.width, channels)
        )));
    }
    let local = transform_pose(pose, &camera.extrinsics);
    let prims = primitives_from_pose(&local, topology, appearances)?;
    let scene = Scene::new(&prims, &camera_frame(camera), params)?;
    let m = scene.prims.len();
    let alpha = params.alpha;
    let sqrt_alpha = alpha.sqrt();
    let width = camera.width;
    let bg = scene.background;
    let d_bg_log_weight =
        -d_ln_erfc(-bg.depth / sqrt_alpha) / sqrt_alpha + d_neg_ln_raster(bg.depth);

    let rows: Vec<RowAccum> = (0..camera.height)
        .into_par_iter()
        .map(|row| -> Result<RowAccum> {
            let mut acc = RowAccum::zero(m, channels);
            let mut weights = Vec::with_capacity(m + 1);
            let mut terms = Vec::with_capacity(m);
            let mut dots = Vec::with_capacity(m + 1);
            for col in 0..width {
                let index = row * width + col;
                let r = &scene.rays.rays[index];
                let adj = adjoint.pixel(row, col);
                scene.weights(index, &mut weights)?;
                terms.clear();
                terms.extend(scene.prims.iter().map(|p| p.terms(r, alpha)));

                dots.clear();
                dots.extend(
                    (0..=m).map(|k| adj.iter().zip(scene.appearance(k)).map(|(g, a)| g * a).sum::<f64>()),
                );
                let mean: f64 = weights.iter().zip(&dots).map(|(w, d)| w * d).sum();

                for k in 0..m {
                    let w = weights[k];
                    for (o, g) in acc.appearances[k * channels..(k + 1) * channels]
                        .iter_mut()
                        .zip(adj)
                    {
                        *o += w * g;
                    }
                    let d_log_weight = w * (dots[k] - mean);
                    if d_log_weight == 0.0 {
                        continue;
                    }
                    let t = &terms[k];
                    let (a, b) = (t.a, t.b);
                    let x = -b / (alpha * a).sqrt();
                    let e = d_ln_erfc(x);
                    let dz = d_neg_ln_raster(t.z_star);
                    let d_a = -0.5 / a - e * x / (2.0 * a) - b * b / (alpha * a * a) - dz * b / (a * a);
                    let d_b = -e / (alpha * a).sqrt() + 2.0 * b / (alpha * a) + dz / a;
                    let d_c = -1.0 / alpha;
                    let p = &mut acc.prims[k];
                    p.a_rr += (d_log_weight * d_a) * r * r.transpose();
                    p.b_r += (d_log_weight * d_b) * r;
                    p.c += d_log_weight * d_c;
                }
                let w_bg = weights[m];
                for (o, g) in acc.background.iter_mut().zip(adj) {
                    *o += w_bg * g;
                }
                acc.background_depth += w_bg * (dots[m] - mean) * d_bg_log_weight;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = RowAccum::zero(m, channels);
    for row in &rows {
        total.add(row);
    }

    if let (false, Some(argmax)) = (bg.clamped, scene.depth_max) {
        let dz = params.beta * total.background_depth;
        let r = &scene.rays.rays[argmax.pixel];
        let (a, b) = scene.prims[argmax.primitive].a_b(r);
        let p = &mut total.prims[argmax.primitive];
        p.a_rr += (-dz * b / (a * a)) * r * r.transpose();
        p.b_r += (dz / a) * r;
    }

    let mut d_joints = vec![Vec3::zeros(); local.len()];
    let mut d_widths = vec![0.0; m];
    for (k, ((&(i, j), &w), acc)) in topology
        .edges()
        .iter()
        .zip(topology.widths())
        .zip(&total.prims)
        .enumerate()
    {
        let prim = &scene.prims[k];
        let s = &prim.precision;
        let mu = &prim.mean;
        let d_precision = acc.a_rr + acc.b_r * mu.transpose() + acc.c * mu * mu.transpose();
        let d_mean = s * acc.b_r + 2.0 * acc.c * (s * mu);
        let d_shape = -(s * d_precision * s);
        let g = 0.5 * (d_shape + d_shape.transpose());

        let d = local.joints[j] - local.joints[i];
        let len = d.norm();
        let n = d / len;
        let gd = g * d;
        let dgd = d.dot(&gd);
        d_widths[k] = g.trace() - dgd / (len * len);
        let h = 1.0 / len - w / (len * len);
        let dh = -1.0 / (len * len) + 2.0 * w / (len * len * len);
        let d_dir = dh * dgd * n + 2.0 * h * gd;
        d_joints[i] += 0.5 * d_mean - d_dir;
        d_joints[j] += 0.5 * d_mean + d_dir;
    }
    let rt = camera.extrinsics.rotation().transpose();
    for g in &mut d_joints {
        *g = rt * *g;
    }

    Ok(SceneGradients {
        joints: d_joints,
        widths: d_widths,
        appearances: Appearances::from_flat(total.appearances, channels)?,
        background: total.background,
    })
}

/// `⟨x, y⟩` over all samples of two equally shaped images.
pub fn image_dot(x: &FeatureImage, y: &FeatureImage) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::Shape(format!(
            "{:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum())
}
