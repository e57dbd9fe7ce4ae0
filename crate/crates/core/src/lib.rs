//! Differentiable rendering of skeletal figures as diffuse anisotropic
//! Gaussian primitives.
//!
//! A pose (joint positions) and a skeleton topology give one Gaussian per
//! limb. Every camera ray integrates each Gaussian in closed form; a smooth
//! depth preference and a background primitive turn the integrals into
//! per-pixel weights that blend the limbs' appearance vectors into a
//! multi-channel feature image. The image is differentiable in the joint
//! positions, limb widths and appearances, see [`grad`].

pub mod camera;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod renderer;
pub mod skeleton;
pub mod special;

pub use error::{Error, Result};
