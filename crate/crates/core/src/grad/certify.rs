//! Randomized certification runs: closed-form integral against quadrature,
//! and backward pass against central differences.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::fd::fd_gradient;
use super::oracle::{quad_oracle_log, QuadratureOptions};
use super::{image_dot, AdjointImage, SceneSetup};
use crate::camera::{transform_pose, CameraModel, Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Spd3, Vec3};
use crate::renderer::{log_density_integral, FeatureImage, RenderParams};
use crate::skeleton::{Appearances, Pose3D, SkeletonTopology};

/// Bound on the closed-form vs quadrature relative error.
pub const ORACLE_TOL: f64 = 1e-6;
/// Bound on the gradient vs central-difference relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Absolute error accepted on near-zero gradient components.
pub const GRADCHECK_ABS_FLOOR: f64 = 1e-8;
pub const GRADCHECK_STEP: f64 = 1e-5;

/// One `(r, μ, Σ, α)` input to the density integral.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCase {
    pub r: Vec3,
    pub mu: Vec3,
    pub sigma: Spd3,
    pub alpha: f64,
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let q = Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    );
    *UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .matrix()
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Random case with `α ∈ [10⁻², 1]`, `cond(Σ) ≤ 10³` and `‖μ‖ ≤ 20`.
///
/// Half of the cases put `μ` within a few standard deviations of the ray
/// (where the integral is not negligible), the rest anywhere in the ball,
/// including behind the camera.
pub fn random_density_case<R: Rng + ?Sized>(rng: &mut R) -> DensityCase {
    let alpha = log_uniform(rng, 1e-2, 1.0);
    let largest = log_uniform(rng, 0.3, 3.0);
    let cond = log_uniform(rng, 1.0, 1e3);
    let eig = Vec3::new(
        largest,
        log_uniform(rng, largest / cond, largest),
        largest / cond,
    );
    let rot = random_rotation(rng);
    let sigma = Spd3::from_symmetric_part(rot * Mat3::from_diagonal(&eig) * rot.transpose())
        .expect("well-conditioned by construction");
    let r = unit_vector(rng);
    let mu = if rng.random_bool(0.5) {
        let depth = rng.random_range(-3.0..15.0);
        let spread = 3.0 * (alpha * largest).sqrt();
        depth * r + spread * rng.random_range(0.0..1.0) * unit_vector(rng)
    } else {
        20.0 * rng.random_range(0.0f64..1.0).cbrt() * unit_vector(rng)
    };
    let mu = if mu.norm() > 20.0 { mu * (20.0 / mu.norm()) } else { mu };
    DensityCase {
        r,
        mu,
        sigma,
        alpha,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub cases: usize,
    /// Largest error as measured by [`relative_error`].
    pub max_rel_error: f64,
    /// Cases whose integral is below the normal `f64` range.
    pub underflow_cases: usize,
    pub worst: Option<DensityCase>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= ORACLE_TOL
    }
}

/// Relative error of `F_closed` against `F_quad`, given their logarithms.
///
/// `|F_closed / F_quad − 1|` while `F_quad` is a normal `f64`. Below that
/// neither value is representable and `ln F` can reach `−10⁷`, where its
/// own rounding exceeds any fixed bound on the ratio, so the logarithms
/// are compared relative to `|ln F_quad|` instead.
pub fn relative_error(ln_closed: f64, ln_quad: f64) -> f64 {
    if ln_quad >= f64::MIN_POSITIVE.ln() {
        (ln_closed - ln_quad).exp_m1().abs()
    } else {
        (ln_closed - ln_quad).abs() / ln_quad.abs()
    }
}

/// Compares the closed-form density integral with quadrature on `cases`
/// random inputs drawn from `seed`.
pub fn oracle_compare(cases: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<DensityCase> = (0..cases).map(|_| random_density_case(&mut rng)).collect();
    let opts = QuadratureOptions::default();
    let results = inputs
        .par_iter()
        .map(|c| {
            let closed = log_density_integral(&c.r, &c.mu, &c.sigma, c.alpha);
            let quad = quad_oracle_log(&c.r, &c.mu, &c.sigma, c.alpha, &opts)?;
            Ok((relative_error(closed, quad), quad < f64::MIN_POSITIVE.ln()))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    let underflow_cases = results.iter().filter(|r| r.1).count();
    let errors: Vec<f64> = results.into_iter().map(|r| r.0).collect();
    let worst = errors
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &e)| (i, e));
    Ok(OracleReport {
        cases,
        max_rel_error: worst.map_or(0.0, |w| w.1),
        underflow_cases,
        worst: worst.map(|w| inputs[w.0].clone()),
    })
}

/// A scene, a pose and an upstream sensitivity for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallScene {
    pub setup: SceneSetup,
    pub pose: Pose3D,
    pub adjoint: AdjointImage,
}

/// Random tree skeleton of 1 to 5 limbs in front of a camera of at most
/// 16×16 pixels with 4 channels, seen from a random orientation.
pub fn random_small_scene<R: Rng + ?Sized>(rng: &mut R) -> Result<SmallScene> {
    const CHANNELS: usize = 4;
    let edges = rng.random_range(1..=5usize);
    let height = rng.random_range(6..=16usize);
    let width = rng.random_range(6..=16usize);

    let mut local = vec![Vec3::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(2.5..4.0),
    )];
    let mut edge_list = Vec::with_capacity(edges);
    for j in 1..=edges {
        let parent = rng.random_range(0..j);
        let joint = local[parent] + rng.random_range(0.15..0.45) * unit_vector(rng);
        local.push(joint);
        edge_list.push((parent, j));
    }
    let widths = (0..edges).map(|_| rng.random_range(0.03..0.12)).collect();
    let topology = SkeletonTopology::new(edges + 1, edge_list, widths)?;

    let uniform = |rng: &mut R| rng.random_range(-1.0..1.0);
    let rows: Vec<Vec<f64>> = (0..edges)
        .map(|_| (0..CHANNELS).map(|_| uniform(rng)).collect())
        .collect();
    let appearances = Appearances::new(&rows, CHANNELS)?;
    let background = (0..CHANNELS).map(|_| uniform(rng)).collect();
    let params = RenderParams::new(
        crate::renderer::DEFAULT_ALPHA,
        crate::renderer::DEFAULT_BETA,
        background,
    )?;

    let focal = 1.3 * height.max(width) as f64;
    let intrinsics = Intrinsics::new(
        focal,
        focal,
        0.5 * (width - 1) as f64,
        0.5 * (height - 1) as f64,
        0.0,
    )?;
    let extrinsics = Extrinsics::new(random_rotation(rng), 2.0 * unit_vector(rng))?;
    let camera = CameraModel::new(intrinsics, width, height)?.with_extrinsics(extrinsics.clone());
    // joints were placed in the camera frame; express them in the world
    let pose = transform_pose(&Pose3D::new(local), &extrinsics.inverse());

    let adjoint_data = (0..height * width * CHANNELS).map(|_| uniform(rng)).collect();
    let adjoint = FeatureImage::new(height, width, CHANNELS, adjoint_data)?;
    Ok(SmallScene {
        setup: SceneSetup {
            topology,
            appearances,
            camera,
            params,
        },
        pose,
        adjoint,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub components: usize,
    /// Largest `|analytic − fd| / max(|fd|, floor / tol)` over components.
    pub max_error: f64,
    /// Flat index (joints, widths, appearances, background) of the worst
    /// component, with its analytic and finite-difference values.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= GRADCHECK_TOL
    }
}

fn unflatten(setup: &SceneSetup, pose: &Pose3D, x: &[f64]) -> Result<(SceneSetup, Pose3D)> {
    let n = 3 * pose.len();
    let m = setup.topology.edge_count();
    let channels = setup.params.channels();
    let pose = Pose3D::from_flat(&x[..n], pose.root);
    let mut s = setup.clone();
    s.topology = setup.topology.with_widths(x[n..n + m].to_vec())?;
    s.appearances = Appearances::from_flat(x[n + m..n + m + m * channels].to_vec(), channels)?;
    s.params.background = x[n + m + m * channels..].to_vec();
    Ok((s, pose))
}

/// Checks every component of the backward pass of `⟨adjoint, J⟩` against
/// central differences with step `h`.
pub fn gradcheck(
    setup: &SceneSetup,
    pose: &Pose3D,
    adjoint: &AdjointImage,
    h: f64,
) -> Result<GradCheckReport> {
    let analytic = setup.backward(pose, adjoint)?.to_flat();
    let x: Vec<f64> = pose
        .as_flat()
        .into_iter()
        .chain(setup.topology.widths().iter().copied())
        .chain(setup.appearances.as_slice().iter().copied())
        .chain(setup.params.background.iter().copied())
        .collect();
    if x.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient components",
            x.len(),
            analytic.len()
        )));
    }
    let numeric = fd_gradient(
        |p| {
            let (s, pose) = unflatten(setup, pose, p)?;
            image_dot(adjoint, &s.render(&pose)?)
        },
        &x,
        h,
    )?;
    let scale_floor = GRADCHECK_ABS_FLOOR / GRADCHECK_TOL;
    let (worst, max_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(g, f)| (g - f).abs() / f.abs().max(scale_floor))
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradCheckReport {
        components: x.len(),
        max_error,
        worst,
        analytic: analytic[worst],
        numeric: numeric[worst],
    })
}
