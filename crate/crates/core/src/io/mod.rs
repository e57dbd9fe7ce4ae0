//! File formats: scenes, feature images, previews and 2D poses.

mod fimg;
mod ppm;
mod scene;

pub use fimg::{
    decode_feature_image, encode_feature_image, read_feature_image, write_feature_image,
    FimgError,
};
pub use ppm::ppm_preview;
pub use scene::{parse_scene, serialize_scene, NamedCamera, NamedPose, SceneError, SceneFile};

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::Vec2;
use crate::skeleton::Pose2D;

/// The scene shipped with the crate: a 17-joint figure, 16 channels, one
/// 256×256 camera.
pub const SAMPLE_SCENE: &str = include_str!("../../../../scenes/sample.json");

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct Pose2dError {
    pub line: usize,
    pub message: String,
}

/// Parses one `x y confidence` line per joint, in ray coordinates. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_pose2d(text: &str) -> Result<Pose2D, Pose2dError> {
    let mut points = Vec::new();
    let mut confidences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Pose2dError {
                line: line_no,
                message: format!("expected `x y confidence`, found {} fields", fields.len()),
            });
        }
        let mut values = [0.0; 3];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Pose2dError {
                    line: line_no,
                    message: format!("{f:?} is not a finite number"),
                })?;
        }
        if !(0.0..=1.0).contains(&values[2]) {
            return Err(Pose2dError {
                line: line_no,
                message: format!("confidence {} outside [0, 1]", values[2]),
            });
        }
        points.push(Vec2::new(values[0], values[1]));
        confidences.push(values[2]);
    }
    Ok(Pose2D::new(points, confidences).expect("validated line by line"))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so `path` never holds partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
