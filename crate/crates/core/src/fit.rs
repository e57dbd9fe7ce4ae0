//! Pose recovery by gradient descent through the renderer.
//!
//! The objective is the mean absolute difference between the rendered and
//! the target feature image, plus `λ_a ‖a‖²` when appearances are free.
//!
//! Joints are moved in camera ray coordinates `(x/z, y/z, z)`, so that image
//! position and depth get separate step lengths. Each coordinate steps by
//! the sign of its subgradient with its own length, which grows while the
//! sign holds and halves when it flips. A step that raises the objective is
//! retried at half scale until it does not; the retry scale is not carried
//! into the next iteration.
//!
//! A monocular image leaves the depth of each limb end ambiguous up to a
//! flip about the neighbouring joint, so starting points far enough from
//! the truth can settle in a flipped local minimum.

use crate::camera::transform_pose;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grad::SceneSetup;
use crate::renderer::FeatureImage;
use crate::skeleton::{pose_error, Appearances, Pose3D};

/// Below this the line search gives up and the fit is reported stalled.
pub const MIN_STEP: f64 = 1e-12;
const STEP_GROWTH: f64 = 1.2;
const STEP_SHRINK: f64 = 0.5;
/// Per-coordinate steps never exceed this multiple of the initial step.
const MAX_STEP_RATIO: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Initial step; adapted by the line search afterwards.
    pub step_size: f64,
    /// Weight `λ_a` of the appearance penalty.
    pub appearance_reg: f64,
    /// Stop once an accepted step lowers the loss by less than this.
    pub convergence_tol: f64,
    pub optimize_appearance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_size: 1e-3,
            appearance_reg: 1e-3,
            convergence_tol: 1e-12,
            optimize_appearance: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Domain(format!("step size must be > 0, got {}", self.step_size)));
        }
        if !(self.appearance_reg >= 0.0 && self.appearance_reg.is_finite()) {
            return Err(Error::Domain(format!(
                "appearance regularizer must be >= 0, got {}",
                self.appearance_reg
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Domain(format!(
                "convergence tolerance must be > 0, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub pose: Pose3D,
    pub appearances: Appearances,
    /// Objective at the start of every iteration that ran.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
    pub final_image_loss: f64,
    /// Against the ground truth, when one was supplied.
    pub pose_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The line search fell below [`MIN_STEP`].
    pub stalled: bool,
    pub final_step: f64,
}

/// Mean over pixels and channels of `|J − J*|`.
pub fn l1_image_loss(image: &FeatureImage, target: &FeatureImage) -> Result<f64> {
    if !image.same_shape(target) {
        return Err(Error::Domain(format!(
            "image is {:?}, target is {:?}",
            image.shape(),
            target.shape()
        )));
    }
    let sum: f64 = image
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / image.as_slice().len() as f64)
}

/// Sum of squares of every appearance entry.
pub fn appearance_penalty(appearances: &Appearances) -> f64 {
    appearances.as_slice().iter().map(|v| v * v).sum()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Evaluation {
    loss: f64,
    image_loss: f64,
}

struct Problem<'a> {
    target: &'a FeatureImage,
    setup: SceneSetup,
    cfg: &'a FitConfig,
}

impl Problem<'_> {
    fn evaluate(&self, pose: &Pose3D, appearances: &Appearances) -> Result<(Evaluation, FeatureImage)> {
        let mut setup = self.setup.clone();
        setup.appearances = appearances.clone();
        let image = setup.render(pose)?;
        let image_loss = l1_image_loss(&image, self.target)?;
        let loss = if self.cfg.optimize_appearance {
            image_loss + self.cfg.appearance_reg * appearance_penalty(appearances)
        } else {
            image_loss
        };
        Ok((Evaluation { loss, image_loss }, image))
    }

    /// Subgradient of the objective: joints, then appearances if free.
    fn gradient(
        &self,
        pose: &Pose3D,
        appearances: &Appearances,
        image: &FeatureImage,
    ) -> Result<(Vec<Vec3>, Option<Vec<f64>>)> {
        let scale = 1.0 / image.as_slice().len() as f64;
        let adjoint_data = image
            .as_slice()
            .iter()
            .zip(self.target.as_slice())
            .map(|(a, b)| scale * sign(a - b))
            .collect();
        let adjoint = FeatureImage::new(image.height(), image.width(), image.channels(), adjoint_data)?;
        let mut setup = self.setup.clone();
        setup.appearances = appearances.clone();
        let g = setup.backward(pose, &adjoint)?;
        let d_app = self.cfg.optimize_appearance.then(|| {
            g.appearances
                .as_slice()
                .iter()
                .zip(appearances.as_slice())
                .map(|(d, a)| d + 2.0 * self.cfg.appearance_reg * a)
                .collect()
        });
        Ok((g.joints, d_app))
    }
}

/// Fits the pose (and optionally the appearances) of `setup` so that its
/// render matches `target`, starting from `init`.
pub fn fit_pose(
    target: &FeatureImage,
    init: &Pose3D,
    setup: &SceneSetup,
    cfg: &FitConfig,
    ground_truth: Option<&Pose3D>,
) -> Result<FitReport> {
    cfg.validate()?;
    let expected = (setup.camera.height, setup.camera.width, setup.params.channels());
    if target.shape() != expected {
        return Err(Error::Domain(format!(
            "target is {:?}, camera renders {:?}",
            target.shape(),
            expected
        )));
    }
    let problem = Problem {
        target,
        setup: setup.clone(),
        cfg,
    };
    // joints are optimized as (x/z, y/z, z) in the camera frame, so that
    // depth moves along the viewing ray instead of across the image
    let extrinsics = &setup.camera.extrinsics;
    let rotation = *extrinsics.rotation();
    let to_world = extrinsics.inverse();
    let local = transform_pose(init, extrinsics);
    if let Some(k) = local.joints.iter().position(|p| !(p.z > 0.0)) {
        return Err(Error::Domain(format!(
            "joint {k} of the initial pose is not in front of the camera"
        )));
    }
    let n = 3 * init.len();
    let channels = setup.appearances.channels();
    let unpack = |x: &[f64]| -> Result<Option<(Pose3D, Appearances)>> {
        if x[..n].chunks_exact(3).any(|c| !(c[2] > 0.0)) {
            return Ok(None);
        }
        let joints = x[..n]
            .chunks_exact(3)
            .map(|c| to_world.apply(&Vec3::new(c[0] * c[2], c[1] * c[2], c[2])))
            .collect();
        let pose = Pose3D {
            joints,
            root: init.root,
        };
        let appearances = if cfg.optimize_appearance {
            Appearances::from_flat(x[n..].to_vec(), channels)?
        } else {
            setup.appearances.clone()
        };
        Ok(Some((pose, appearances)))
    };
    let mut x: Vec<f64> = local
        .joints
        .iter()
        .flat_map(|p| [p.x / p.z, p.y / p.z, p.z])
        .collect();
    let mut steps: Vec<f64> = local
        .joints
        .iter()
        .flat_map(|p| [cfg.step_size / p.z, cfg.step_size / p.z, cfg.step_size])
        .collect();
    if cfg.optimize_appearance {
        x.extend_from_slice(setup.appearances.as_slice());
        steps.resize(x.len(), cfg.step_size);
    }
    let max_steps: Vec<f64> = steps.iter().map(|s| MAX_STEP_RATIO * s).collect();
    // start from the caller's pose exactly, not its ray-coordinate round trip
    let mut pose = init.clone();
    let mut appearances = setup.appearances.clone();
    let (mut current, mut image) = problem.evaluate(&pose, &appearances)?;
    let mut previous = vec![0.0; x.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stalled = false;

    for _ in 0..cfg.max_iters {
        trace.push(current.loss);
        let (d_joints, d_app) = problem.gradient(&pose, &appearances, &image)?;
        let mut grad: Vec<f64> = d_joints
            .iter()
            .zip(x.chunks_exact(3))
            .flat_map(|(g, c)| {
                let g = rotation * g;
                [c[2] * g.x, c[2] * g.y, c[0] * g.x + c[1] * g.y + g.z]
            })
            .chain(d_app.into_iter().flatten())
            .collect();
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        for (((g, p), step), max) in grad.iter_mut().zip(&previous).zip(&mut steps).zip(&max_steps) {
            let agreement = *g * p;
            if agreement > 0.0 {
                *step = (*step * STEP_GROWTH).min(*max);
            } else if agreement < 0.0 {
                // overshot along this coordinate: shrink and sit out one step
                *step *= STEP_SHRINK;
                *g = 0.0;
            }
        }
        previous.clone_from(&grad);
        let direction: Vec<f64> = grad.iter().zip(&steps).map(|(g, s)| sign(*g) * s).collect();
        if direction.iter().all(|&d| d == 0.0) {
            continue;
        }

        let mut scale = 1.0;
        loop {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(v, d)| v - scale * d).collect();
            // a step may cross the camera plane or collapse a limb; treat
            // that like a loss increase
            let trial = match unpack(&candidate)? {
                Some((p, a)) => match problem.evaluate(&p, &a) {
                    Ok(t) => Some((t, p, a)),
                    Err(Error::DegenerateEdge { .. }) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            match trial {
                Some(((eval, img), candidate_pose, candidate_app)) if eval.loss <= current.loss => {
                    let decrease = current.loss - eval.loss;
                    x = candidate;
                    pose = candidate_pose;
                    appearances = candidate_app;
                    current = eval;
                    image = img;
                    if decrease < cfg.convergence_tol {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    scale *= 0.5;
                    if steps.iter().all(|&s| scale * s < MIN_STEP) {
                        stalled = true;
                        break;
                    }
                }
            }
        }
        if converged || stalled {
            break;
        }
    }

    let pose_error = ground_truth
        .map(|gt| pose_error(&pose, gt, &vec![1.0; gt.len()]))
        .transpose()?;
    Ok(FitReport {
        iterations: trace.len(),
        pose,
        appearances,
        loss_trace: trace,
        final_loss: current.loss,
        final_image_loss: current.image_loss,
        pose_error,
        converged,
        stalled,
        final_step: steps.iter().fold(0.0, |m: f64, &s| m.max(s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraModel, Intrinsics};
    use crate::renderer::RenderParams;
    use crate::skeleton::SkeletonTopology;

    fn setup() -> (Pose3D, SceneSetup) {
        let topology = SkeletonTopology::new(3, vec![(0, 1), (1, 2)], vec![0.08, 0.05]).unwrap();
        let appearances = Appearances::new(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap();
        let camera =
            CameraModel::new(Intrinsics::new(16.0, 16.0, 7.5, 7.5, 0.0).unwrap(), 16, 16).unwrap();
        let params = RenderParams::new(0.025, 2.0, vec![0.0, 0.0]).unwrap();
        let pose = Pose3D::new(vec![
            Vec3::new(-0.3, -0.2, 3.0),
            Vec3::new(0.1, 0.1, 3.2),
            Vec3::new(0.4, 0.3, 2.9),
        ]);
        (
            pose,
            SceneSetup {
                topology,
                appearances,
                camera,
                params,
            },
        )
    }

    #[test]
    fn l1_of_constant_offset() {
        let a = FeatureImage::filled(3, 2, &[1.0, -2.0]);
        let b = FeatureImage::filled(3, 2, &[1.25, -1.75]);
        assert_eq!(l1_image_loss(&a, &b).unwrap(), 0.25);
        assert_eq!(l1_image_loss(&a, &a).unwrap(), 0.0);
        assert!(l1_image_loss(&a, &FeatureImage::zeros(2, 3, 2)).is_err());
    }

    #[test]
    fn penalty_values() {
        assert_eq!(appearance_penalty(&Appearances::zeros(3, 4)), 0.0);
        let mut a = Appearances::zeros(1, 1);
        a.as_mut_slice()[0] = 3.0;
        assert_eq!(appearance_penalty(&a), 9.0);
    }

    #[test]
    fn fixed_point_stops_immediately() {
        let (pose, s) = setup();
        let target = s.render(&pose).unwrap();
        let report = fit_pose(&target, &pose, &s, &FitConfig::default(), Some(&pose)).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.final_loss, 0.0);
        assert_eq!(report.pose_error, Some(0.0));
    }

    #[test]
    fn descent_is_monotone() {
        let (truth, s) = setup();
        let target = s.render(&truth).unwrap();
        let mut init = truth.clone();
        init.joints[1] += Vec3::new(0.05, -0.03, 0.02);
        let cfg = FitConfig {
            max_iters: 60,
            ..FitConfig::default()
        };
        let report = fit_pose(&target, &init, &s, &cfg, Some(&truth)).unwrap();
        assert!(report.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.final_loss < report.loss_trace[0]);
        assert!(report.loss_trace.len() <= cfg.max_iters);
    }

    #[test]
    fn strong_penalty_shrinks_appearances() {
        let (pose, s) = setup();
        let target = s.render(&pose).unwrap();
        let cfg = FitConfig {
            max_iters: 20,
            appearance_reg: 1e3,
            optimize_appearance: true,
            ..FitConfig::default()
        };
        let report = fit_pose(&target, &pose, &s, &cfg, None).unwrap();
        assert!(appearance_penalty(&report.appearances) < appearance_penalty(&s.appearances));
    }

    #[test]
    fn bad_config_and_target_are_rejected() {
        let (pose, s) = setup();
        let target = s.render(&pose).unwrap();
        let cfg = FitConfig {
            max_iters: 0,
            ..FitConfig::default()
        };
        assert!(fit_pose(&target, &pose, &s, &cfg, None).is_err());
        let small = FeatureImage::zeros(4, 4, 2);
        assert!(fit_pose(&small, &pose, &s, &FitConfig::default(), None).is_err());
    }
}
