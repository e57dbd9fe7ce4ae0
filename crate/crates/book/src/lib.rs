//! The guide's chapters as modules, so that `cargo test` compiles and runs
//! every listing in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/primitives.md")]
pub mod primitives {}
#[doc = include_str!("../../../book/src/ray-integral.md")]
pub mod ray_integral {}
#[doc = include_str!("../../../book/src/compositing.md")]
pub mod compositing {}
#[doc = include_str!("../../../book/src/camera.md")]
pub mod camera {}
#[doc = include_str!("../../../book/src/gradients.md")]
pub mod gradients {}
#[doc = include_str!("../../../book/src/root-depth.md")]
pub mod root_depth {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
