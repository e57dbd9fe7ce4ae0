//! JSON scene files.
//!
//! ```json
//! {
//!   "topology": { "joints": 3, "names": ["a", "b", "c"],
//!                 "edges": [[0, 1], [1, 2]], "widths": [0.08, 0.05] },
//!   "appearances": [[1.0, 0.0], [0.0, 1.0]],
//!   "poses": [{ "name": "rest", "root": 0, "joints": [[0.0, 0.0, 3.0], ...] }],
//!   "cameras": [{ "name": "main", "fx": 280.0, "fy": 280.0, "cx": 128.0, "cy": 128.0,
//!                 "skew": 0.0, "k1": 0.0, "k2": 0.0, "p1": 0.0, "p2": 0.0, "k3": 0.0,
//!                 "R": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "t": [0.0, 0.0, 0.0],
//!                 "width": 256, "height": 256, "half_pixel": false }],
//!   "render": { "alpha": 0.025, "beta": 2.0, "background": [0.0, 0.0], "channels": 2,
//!               "min_background_depth": 1.0 }
//! }
//! ```
//!
//! `names`, `root`, `skew`, the distortion coefficients, `R`, `t`,
//! `half_pixel` and `min_background_depth` may be omitted. `R` is row-major
//! and maps world to camera coordinates together with `t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraModel, Distortion, Extrinsics, Intrinsics};
use crate::geometry::{Mat3, Vec3};
use crate::grad::SceneSetup;
use crate::renderer::{RenderParams, DEFAULT_MIN_BACKGROUND_DEPTH};
use crate::skeleton::{Appearances, Pose3D, SkeletonTopology};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// Wrong type, missing or unknown field, or a dangling reference.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    /// Well-formed but numerically invalid.
    #[error("invalid value at {path}: {message}")]
    Invariant { path: String, message: String },
    #[error("no {kind} named {name:?}")]
    Missing { kind: &'static str, name: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn invariant(path: impl Into<String>, message: impl ToString) -> SceneError {
    SceneError::Invariant {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    topology: RawTopology,
    appearances: Vec<Vec<f64>>,
    poses: Vec<RawPose>,
    cameras: Vec<RawCamera>,
    render: RawRender,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    joints: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    edges: Vec<[usize; 2]>,
    widths: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root: Option<usize>,
    joints: Vec<[f64; 3]>,
}

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

fn identity() -> [f64; 9] {
    IDENTITY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    name: String,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    skew: f64,
    #[serde(default)]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default)]
    p1: f64,
    #[serde(default)]
    p2: f64,
    #[serde(default)]
    k3: f64,
    #[serde(rename = "R", default = "identity")]
    rotation: [f64; 9],
    #[serde(rename = "t", default)]
    translation: [f64; 3],
    width: usize,
    height: usize,
    #[serde(default)]
    half_pixel: bool,
}

fn default_min_depth() -> f64 {
    DEFAULT_MIN_BACKGROUND_DEPTH
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRender {
    alpha: f64,
    beta: f64,
    background: Vec<f64>,
    channels: usize,
    #[serde(default = "default_min_depth")]
    min_background_depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPose {
    pub name: String,
    pub pose: Pose3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCamera {
    pub name: String,
    pub camera: CameraModel,
}

/// A validated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub topology: SkeletonTopology,
    pub appearances: Appearances,
    pub poses: Vec<NamedPose>,
    pub cameras: Vec<NamedCamera>,
    pub params: RenderParams,
}

impl SceneFile {
    pub fn pose(&self, name: &str) -> Result<&Pose3D, SceneError> {
        self.poses
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.pose)
            .ok_or_else(|| SceneError::Missing {
                kind: "pose",
                name: name.into(),
            })
    }

    pub fn camera(&self, name: &str) -> Result<&CameraModel, SceneError> {
        self.cameras
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.camera)
            .ok_or_else(|| SceneError::Missing {
                kind: "camera",
                name: name.into(),
            })
    }

    /// Topology, appearances and render parameters seen through `camera`.
    pub fn setup(&self, camera: &CameraModel) -> SceneSetup {
        SceneSetup {
            topology: self.topology.clone(),
            appearances: self.appearances.clone(),
            camera: camera.clone(),
            params: self.params.clone(),
        }
    }
}

fn check_finite(path: &str, values: &[f64]) -> Result<(), SceneError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invariant(format!("{path}[{i}]"), "value must be finite")),
        None => Ok(()),
    }
}

fn validate(raw: RawScene) -> Result<SceneFile, SceneError> {
    let t = &raw.topology;
    if t.edges.len() != t.widths.len() {
        return Err(schema(
            "topology.widths",
            format!("{} widths for {} edges", t.widths.len(), t.edges.len()),
        ));
    }
    for (k, &[i, j]) in t.edges.iter().enumerate() {
        if i >= t.joints || j >= t.joints {
            return Err(schema(
                format!("topology.edges[{k}]"),
                format!("edge ({i}, {j}) references a joint outside 0..{}", t.joints),
            ));
        }
    }
    for (k, &w) in t.widths.iter().enumerate() {
        if !(w > 0.0 && w.is_finite()) {
            return Err(invariant(
                format!("topology.widths[{k}]"),
                format!("width {w} violates w_ij > 0"),
            ));
        }
    }
    let mut topology = SkeletonTopology::new(
        t.joints,
        t.edges.iter().map(|&[i, j]| (i, j)).collect(),
        t.widths.clone(),
    )
    .map_err(|e| invariant("topology.edges", e))?;
    if let Some(names) = &t.names {
        topology = topology
            .with_names(names.clone())
            .map_err(|e| schema("topology.names", e.to_string()))?;
    }

    let r = &raw.render;
    if r.background.len() != r.channels {
        return Err(schema(
            "render.background",
            format!("{} values for {} channels", r.background.len(), r.channels),
        ));
    }
    let mut params =
        RenderParams::new(r.alpha, r.beta, r.background.clone()).map_err(|e| invariant("render", e))?;
    params.min_background_depth = r.min_background_depth;
    params.validate().map_err(|e| invariant("render.min_background_depth", e))?;

    if raw.appearances.len() != topology.edge_count() {
        return Err(schema(
            "appearances",
            format!(
                "{} appearance rows for {} edges",
                raw.appearances.len(),
                topology.edge_count()
            ),
        ));
    }
    for (k, row) in raw.appearances.iter().enumerate() {
        if row.len() != r.channels {
            return Err(schema(
                format!("appearances[{k}]"),
                format!("{} values for {} channels", row.len(), r.channels),
            ));
        }
        check_finite(&format!("appearances[{k}]"), row)?;
    }
    let appearances =
        Appearances::new(&raw.appearances, r.channels).map_err(|e| invariant("appearances", e))?;

    let mut poses = Vec::with_capacity(raw.poses.len());
    for (k, p) in raw.poses.iter().enumerate() {
        let path = format!("poses[{k}]");
        if p.joints.len() != topology.joint_count() {
            return Err(schema(
                format!("{path}.joints"),
                format!("{} joints, topology has {}", p.joints.len(), topology.joint_count()),
            ));
        }
        if let Some(root) = p.root {
            if root >= topology.joint_count() {
                return Err(schema(format!("{path}.root"), format!("joint {root} does not exist")));
            }
        }
        if poses.iter().any(|q: &NamedPose| q.name == p.name) {
            return Err(schema(format!("{path}.name"), format!("duplicate pose {:?}", p.name)));
        }
        for (i, j) in p.joints.iter().enumerate() {
            check_finite(&format!("{path}.joints[{i}]"), j)?;
        }
        let mut pose = Pose3D::new(p.joints.iter().map(|j| Vec3::from(*j)).collect());
        pose.root = p.root;
        poses.push(NamedPose {
            name: p.name.clone(),
            pose,
        });
    }

    let mut cameras = Vec::with_capacity(raw.cameras.len());
    for (k, c) in raw.cameras.iter().enumerate() {
        let path = format!("cameras[{k}]");
        if cameras.iter().any(|q: &NamedCamera| q.name == c.name) {
            return Err(schema(format!("{path}.name"), format!("duplicate camera {:?}", c.name)));
        }
        let intrinsics = Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.skew)
            .map_err(|e| invariant(format!("{path}.fx"), e))?;
        let distortion = Distortion {
            k1: c.k1,
            k2: c.k2,
            p1: c.p1,
            p2: c.p2,
            k3: c.k3,
        };
        check_finite(&format!("{path}.k"), &[c.k1, c.k2, c.p1, c.p2, c.k3])?;
        check_finite(&format!("{path}.R"), &c.rotation)?;
        check_finite(&format!("{path}.t"), &c.translation)?;
        let extrinsics = Extrinsics::new(
            Mat3::from_row_slice(&c.rotation),
            Vec3::from(c.translation),
        )
        .map_err(|e| invariant(format!("{path}.R"), e))?;
        let mut camera = CameraModel::new(intrinsics, c.width, c.height)
            .map_err(|e| invariant(format!("{path}.width"), e))?
            .with_distortion(distortion)
            .with_extrinsics(extrinsics);
        camera.half_pixel = c.half_pixel;
        cameras.push(NamedCamera {
            name: c.name.clone(),
            camera,
        });
    }

    Ok(SceneFile {
        topology,
        appearances,
        poses,
        cameras,
        params,
    })
}

/// Parses and validates a scene.
pub fn parse_scene(text: &str) -> Result<SceneFile, SceneError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawScene = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            schema(path, inner.to_string())
        } else {
            SceneError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        }
    })?;
    de.end().map_err(|e| SceneError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate(raw)
}

fn to_raw(scene: &SceneFile) -> RawScene {
    let t = &scene.topology;
    RawScene {
        topology: RawTopology {
            joints: t.joint_count(),
            names: t.names().map(<[String]>::to_vec),
            edges: t.edges().iter().map(|&(i, j)| [i, j]).collect(),
            widths: t.widths().to_vec(),
        },
        appearances: scene.appearances.rows().map(<[f64]>::to_vec).collect(),
        poses: scene
            .poses
            .iter()
            .map(|p| RawPose {
                name: p.name.clone(),
                root: p.pose.root,
                joints: p.pose.joints.iter().map(|j| [j.x, j.y, j.z]).collect(),
            })
            .collect(),
        cameras: scene
            .cameras
            .iter()
            .map(|c| {
                let cam = &c.camera;
                let r = cam.extrinsics.rotation();
                let t = cam.extrinsics.translation();
                RawCamera {
                    name: c.name.clone(),
                    fx: cam.intrinsics.fx,
                    fy: cam.intrinsics.fy,
                    cx: cam.intrinsics.cx,
                    cy: cam.intrinsics.cy,
                    skew: cam.intrinsics.skew,
                    k1: cam.distortion.k1,
                    k2: cam.distortion.k2,
                    p1: cam.distortion.p1,
                    p2: cam.distortion.p2,
                    k3: cam.distortion.k3,
                    rotation: std::array::from_fn(|i| r[(i / 3, i % 3)]),
                    translation: [t.x, t.y, t.z],
                    width: cam.width,
                    height: cam.height,
                    half_pixel: cam.half_pixel,
                }
            })
            .collect(),
        render: RawRender {
            alpha: scene.params.alpha,
            beta: scene.params.beta,
            background: scene.params.background.clone(),
            channels: scene.params.channels(),
            min_background_depth: scene.params.min_background_depth,
        },
    }
}

/// Pretty-printed JSON; every number is written in the shortest form that
/// parses back to the same value.
pub fn serialize_scene(scene: &SceneFile) -> String {
    let mut text = serde_json::to_string_pretty(&to_raw(scene)).expect("scene values serialize");
    text.push('\n');
    text
}
