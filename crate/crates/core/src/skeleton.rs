//! Skeleton topology, pose containers, primitives built from a pose, and
//! the root-joint depth solver.

use crate::error::{Error, Result};
use crate::geometry::{rotation_between, Mat3, Spd3, Vec2, Vec3, EPS};

/// Joints connected by limbs. Each edge carries a limb width in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonTopology {
    joint_count: usize,
    edges: Vec<(usize, usize)>,
    widths: Vec<f64>,
    names: Option<Vec<String>>,
}

impl SkeletonTopology {
    pub fn new(joint_count: usize, edges: Vec<(usize, usize)>, widths: Vec<f64>) -> Result<Self> {
        if edges.len() != widths.len() {
            return Err(Error::Shape(format!(
                "{} edges but {} widths",
                edges.len(),
                widths.len()
            )));
        }
        for (k, &(i, j)) in edges.iter().enumerate() {
            if i >= joint_count || j >= joint_count {
                return Err(Error::Domain(format!(
                    "edge #{k} ({i}, {j}) references a joint outside 0..{joint_count}"
                )));
            }
            if i == j {
                return Err(Error::Domain(format!("edge #{k} joins joint {i} to itself")));
            }
            if edges[..k]
                .iter()
                .any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
            {
                return Err(Error::Domain(format!("edge #{k} ({i}, {j}) is a duplicate")));
            }
            let w = widths[k];
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Domain(format!(
                    "edge #{k} width {w} violates w_ij > 0"
                )));
            }
        }
        Ok(Self {
            joint_count,
            edges,
            widths,
            names: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.joint_count {
            return Err(Error::Shape(format!(
                "{} joint names for {} joints",
                names.len(),
                self.joint_count
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Copy with other limb widths, validated like [`SkeletonTopology::new`].
    pub fn with_widths(&self, widths: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(self.joint_count, self.edges.clone(), widths)?;
        t.names = self.names.clone();
        Ok(t)
    }
}

/// Joint positions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<Vec3>,
    pub root: Option<usize>,
}

impl Pose3D {
    pub fn new(joints: Vec<Vec3>) -> Self {
        Self { joints, root: None }
    }

    pub fn with_root(mut self, root: usize) -> Self {
        self.root = Some(root);
        self
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn root_index(&self) -> usize {
        self.root.unwrap_or(0)
    }

    /// Offsets of every joint from the root joint.
    pub fn root_relative(&self) -> Pose3D {
        let root = self.joints[self.root_index()];
        Pose3D {
            joints: self.joints.iter().map(|p| p - root).collect(),
            root: self.root,
        }
    }

    pub fn centroid(&self) -> Vec3 {
        self.joints.iter().sum::<Vec3>() / self.joints.len().max(1) as f64
    }

    pub fn as_flat(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn from_flat(values: &[f64], root: Option<usize>) -> Self {
        Self {
            joints: values
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect(),
            root,
        }
    }
}

/// Points in ray coordinates `(X/Z, Y/Z)` with per-joint confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    pub points: Vec<Vec2>,
    pub confidences: Vec<f64>,
}

impl Pose2D {
    pub fn new(points: Vec<Vec2>, confidences: Vec<f64>) -> Result<Self> {
        if points.len() != confidences.len() {
            return Err(Error::Shape(format!(
                "{} points but {} confidences",
                points.len(),
                confidences.len()
            )));
        }
        if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Domain(format!("confidence {c} outside [0, 1]")));
        }
        Ok(Self {
            points,
            confidences,
        })
    }

    /// Exact perspective projection of a camera-frame pose, full confidence.
    pub fn project(pose: &Pose3D) -> Self {
        Self {
            points: pose
                .joints
                .iter()
                .map(|p| Vec2::new(p.x / p.z, p.y / p.z))
                .collect(),
            confidences: vec![1.0; pose.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Row-major `M × A` table of appearance vectors, one row per limb.
#[derive(Debug, Clone, PartialEq)]
pub struct Appearances {
    channels: usize,
    values: Vec<f64>,
}

impl Appearances {
    pub fn new(rows: &[Vec<f64>], channels: usize) -> Result<Self> {
        if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != channels) {
            return Err(Error::Shape(format!(
                "appearance #{k} has {} channels, expected {channels}",
                r.len()
            )));
        }
        Self::from_flat(rows.concat(), channels)
    }

    pub fn from_flat(values: Vec<f64>, channels: usize) -> Result<Self> {
        if channels == 0 || values.len() % channels != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {channels} channels",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("appearance values must be finite".into()));
        }
        Ok(Self { channels, values })
    }

    pub fn zeros(rows: usize, channels: usize) -> Self {
        Self {
            channels,
            values: vec![0.0; rows * channels],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.channels..(k + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.channels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A diffuse Gaussian primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub mean: Vec3,
    pub shape: Spd3,
    pub appearance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSet {
    pub primitives: Vec<Primitive>,
    pub channels: usize,
}

impl PrimitiveSet {
    pub fn new(primitives: Vec<Primitive>, channels: usize) -> Result<Self> {
        if let Some(k) = primitives
            .iter()
            .position(|p| p.appearance.len() != channels)
        {
            return Err(Error::Shape(format!(
                "primitive #{k} has {} appearance channels, expected {channels}",
                primitives[k].appearance.len()
            )));
        }
        Ok(Self {
            primitives,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// Shape of a limb with direction-and-length `d` and width `w`:
/// `R diag(‖d‖, w, w) Rᵀ` with `R` rotating the first canonical axis onto `d`.
pub fn limb_shape(d: &Vec3, width: f64) -> Result<Spd3> {
    let length = d.norm();
    let rotation = rotation_between(&Vec3::x(), d)?;
    let scales = Mat3::from_diagonal(&Vec3::new(length, width, width));
    Spd3::from_symmetric_part(rotation * scales * rotation.transpose())
}

/// One primitive per edge: centred at the midpoint of its joints, elongated
/// along the limb.
pub fn primitives_from_pose(
    pose: &Pose3D,
    topology: &SkeletonTopology,
    appearances: &Appearances,
) -> Result<PrimitiveSet> {
    if pose.len() != topology.joint_count() {
        return Err(Error::Shape(format!(
            "pose has {} joints, topology expects {}",
            pose.len(),
            topology.joint_count()
        )));
    }
    if appearances.len() != topology.edge_count() {
        return Err(Error::Shape(format!(
            "{} appearance rows for {} edges",
            appearances.len(),
            topology.edge_count()
        )));
    }
    let primitives = topology
        .edges()
        .iter()
        .zip(topology.widths())
        .enumerate()
        .map(|(k, (&(i, j), &w))| {
            let (pi, pj) = (pose.joints[i], pose.joints[j]);
            let d = pj - pi;
            if !(d.norm() > EPS) {
                return Err(Error::DegenerateEdge {
                    edge: k,
                    from: i,
                    to: j,
                });
            }
            Ok(Primitive {
                mean: 0.5 * (pi + pj),
                shape: limb_shape(&d, w)?,
                appearance: appearances.row(k).to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrimitiveSet::new(primitives, appearances.channels())
}

/// Confidence-weighted mean squared joint distance.
pub fn pose_error(estimate: &Pose3D, reference: &Pose3D, confidences: &[f64]) -> Result<f64> {
    let n = estimate.len();
    if reference.len() != n || confidences.len() != n {
        return Err(Error::Domain(format!(
            "pose error needs equal lengths (got {n}, {}, {})",
            reference.len(),
            confidences.len()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = estimate
        .joints
        .iter()
        .zip(&reference.joints)
        .zip(confidences)
        .map(|((a, b), c)| c * (a - b).norm_squared())
        .sum();
    Ok(total / n as f64)
}

/// Absolute pose from a root depth: the root sits at `Z·(x, y, 1)` on its
/// ray, every other joint at the root plus its offset.
pub fn compose_absolute_pose(depth: f64, root_ray: Vec2, relative: &Pose3D) -> Result<Pose3D> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::Domain(format!("root depth must be positive, got {depth}")));
    }
    let root = Vec3::new(depth * root_ray.x, depth * root_ray.y, depth);
    let origin = relative.joints[relative.root_index()];
    Ok(Pose3D {
        joints: relative
            .joints
            .iter()
            .map(|p| root + (p - origin))
            .collect(),
        root: relative.root,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RootDepthOptions {
    /// Weight each joint's reprojection error by its 2D confidence.
    pub weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootDepth {
    /// Refined depth of the root joint.
    pub depth: f64,
    /// Averaged closed-form estimate the refinement started from.
    pub initial: f64,
    pub iterations: usize,
    /// `dL/dZ` at the returned depth.
    pub gradient: f64,
}

/// Stop once `|dL/dZ|` falls to this.
pub const ROOT_DEPTH_GRAD_TOL: f64 = 1e-10;
const ROOT_DEPTH_MAX_ITERS: usize = 200;
const ROOT_DEPTH_MAX: f64 = 1e8;

/// Residual data for one non-root joint.
struct JointTerm {
    target: Vec2,
    offset: Vec3,
    weight: f64,
}

struct DepthProblem {
    root_ray: Vec2,
    terms: Vec<JointTerm>,
    scale: f64,
    /// Depths at or below this put some joint behind the pinhole.
    floor: f64,
}

impl DepthProblem {
    fn new(p2d: &Pose2D, relative: &Pose3D, options: RootDepthOptions) -> Result<Self> {
        if p2d.len() != relative.len() {
            return Err(Error::Shape(format!(
                "2D pose has {} joints, 3D pose has {}",
                p2d.len(),
                relative.len()
            )));
        }
        if relative.len() < 2 {
            return Err(Error::Degenerate("root depth needs at least two joints".into()));
        }
        let root = relative.root_index();
        let origin = relative.joints[root];
        let terms: Vec<JointTerm> = (0..relative.len())
            .filter(|&j| j != root)
            .map(|j| JointTerm {
                target: p2d.points[j],
                offset: relative.joints[j] - origin,
                weight: if options.weighted {
                    p2d.confidences[j]
                } else {
                    1.0
                },
            })
            .collect();
        if terms.iter().all(|t| t.offset.norm() <= EPS) {
            return Err(Error::Degenerate("all relative joint offsets are zero".into()));
        }
        if terms.iter().all(|t| t.weight == 0.0) {
            return Err(Error::Degenerate("all joints have zero weight".into()));
        }
        let floor = terms
            .iter()
            .map(|t| -t.offset.z)
            .fold(0.0f64, f64::max);
        Ok(Self {
            root_ray: p2d.points[root],
            scale: 1.0 / terms.len() as f64,
            terms,
            floor,
        })
    }

    /// `(L, dL/dZ, d²L/dZ²)` at root depth `z`.
    fn eval(&self, z: f64) -> (f64, f64, f64) {
        let (xr, yr) = (self.root_ray.x, self.root_ray.y);
        let (mut l, mut g, mut h) = (0.0, 0.0, 0.0);
        for t in &self.terms {
            let zj = z + t.offset.z;
            let x = (z * xr + t.offset.x) / zj;
            let y = (z * yr + t.offset.y) / zj;
            let (ex, ey) = (x - t.target.x, y - t.target.y);
            let (dx, dy) = ((xr - x) / zj, (yr - y) / zj);
            let (ddx, ddy) = (-2.0 * dx / zj, -2.0 * dy / zj);
            l += t.weight * (ex * ex + ey * ey);
            g += t.weight * 2.0 * (ex * dx + ey * dy);
            h += t.weight * 2.0 * (dx * dx + ex * ddx + dy * dy + ey * ddy);
        }
        (l * self.scale, g * self.scale, h * self.scale)
    }

    /// Per-joint stationary depths, averaged over joints whose denominator
    /// does not vanish.
    fn closed_form(&self) -> Result<f64> {
        let (x1, y1) = (self.root_ray.x, self.root_ray.y);
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in &self.terms {
            let (xj, yj) = (t.target.x, t.target.y);
            let (bx, by, bz) = (t.offset.x, t.offset.y, t.offset.z);
            let num = bx * bx
                + by * by
                + ((xj * x1 + yj * y1) * bz - (xj + x1) * bx - (yj + y1) * by) * bz;
            let den = (xj - x1) * (bx - x1 * bz) + (yj - y1) * (by - y1 * bz);
            if den.abs() > EPS * (1.0 + num.abs()) {
                sum += num / den;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Degenerate(
                "every closed-form denominator vanishes".into(),
            ));
        }
        Ok(sum / count as f64)
    }

    fn gradient(&self, z: f64) -> f64 {
        self.eval(z).1
    }

    /// Seed for the refinement when the closed form falls outside the
    /// domain: the best point of a geometric scan.
    fn scan_seed(&self) -> f64 {
        let lo = self.floor + 1e-3;
        (0..400)
            .map(|k| self.floor + 1e-3 * (1e7f64).powf(k as f64 / 399.0))
            .chain(std::iter::once(lo))
            .map(|z| (z, self.eval(z).0))
            .fold((lo, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
            .0
    }

    /// Interval `[a, b]` with `dL/dZ(a) < 0 < dL/dZ(b)` around `seed`.
    fn bracket(&self, seed: f64) -> Result<(f64, f64)> {
        let g0 = self.gradient(seed);
        if g0 == 0.0 {
            return Ok((seed, seed));
        }
        let (mut a, mut b) = (seed, seed);
        if g0 > 0.0 {
            for _ in 0..200 {
                a = self.floor + 0.5 * (a - self.floor);
                if self.gradient(a) < 0.0 {
                    return Ok((a, b));
                }
                b = a;
            }
            Err(Error::Degenerate(
                "reprojection loss keeps decreasing towards the camera".into(),
            ))
        } else {
            while b < ROOT_DEPTH_MAX {
                b = self.floor + 2.0 * (b - self.floor);
                if self.gradient(b) > 0.0 {
                    return Ok((a, b));
                }
                a = b;
            }
            Err(Error::Degenerate(
                "reprojection loss keeps decreasing with depth".into(),
            ))
        }
    }
}

/// Reprojection loss of a root-relative pose placed at root depth `depth`:
/// the mean over non-root joints of the squared distance between the
/// projected joint and its 2D observation.
pub fn reprojection_loss(
    depth: f64,
    p2d: &Pose2D,
    relative: &Pose3D,
    options: RootDepthOptions,
) -> Result<f64> {
    Ok(DepthProblem::new(p2d, relative, options)?.eval(depth).0)
}

/// Smallest root depth that keeps every joint in front of the camera.
pub fn root_depth_floor(relative: &Pose3D) -> f64 {
    let origin = relative.joints[relative.root_index()];
    relative
        .joints
        .iter()
        .map(|p| origin.z - p.z)
        .fold(0.0f64, f64::max)
}

/// Closed-form root depth: the per-joint stationary points of the
/// reprojection loss, averaged.
pub fn root_depth_closed_form(p2d: &Pose2D, relative: &Pose3D) -> Result<f64> {
    DepthProblem::new(p2d, relative, RootDepthOptions::default())?.closed_form()
}

/// Root depth minimizing the reprojection loss, unweighted.
pub fn root_depth(p2d: &Pose2D, relative: &Pose3D) -> Result<RootDepth> {
    root_depth_with(p2d, relative, RootDepthOptions::default())
}

/// Root depth minimizing the reprojection loss.
///
/// Starts from the closed form and refines with Newton steps safeguarded
/// by bisection on `dL/dZ` inside a sign-changing bracket.
pub fn root_depth_with(
    p2d: &Pose2D,
    relative: &Pose3D,
    options: RootDepthOptions,
) -> Result<RootDepth> {
    let problem = DepthProblem::new(p2d, relative, options)?;
    let initial = problem.closed_form()?;
    let seed = if initial.is_finite() && initial > problem.floor {
        initial
    } else {
        problem.scan_seed()
    };
    let (mut a, mut b) = problem.bracket(seed)?;
    let mut z = seed.clamp(a, b);
    let mut iterations = 0;
    let mut g = problem.gradient(z);
    while iterations < ROOT_DEPTH_MAX_ITERS && g.abs() > ROOT_DEPTH_GRAD_TOL {
        iterations += 1;
        if g < 0.0 {
            a = z;
        } else {
            b = z;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
        let (_, grad, hess) = problem.eval(z);
        let newton = z - grad / hess;
        z = if hess > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        g = problem.gradient(z);
    }
    if !(z > 0.0) {
        return Err(Error::BehindCamera(z));
    }
    Ok(RootDepth {
        depth: z,
        initial,
        iterations,
        gradient: g,
    })
}
