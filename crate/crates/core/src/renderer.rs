//! Forward renderer.
//!
//! Every primitive diffuses density onto every camera ray. For a unit ray
//! `r` and a primitive `(μ, Σ)` with `S = Σ⁻¹`, write `a = rᵀSr`,
//! `b = rᵀSμ`. The density integrated along the ray from the pinhole is
//!
//! ```text
//! F = √(απ) / (2√a) · erfc(−b / √(αa)) · exp(−q / α),   q = μᵀSμ − b²/a
//! ```
//!
//! and the depth of maximal density is `z* = b / a`. Each primitive is
//! weighted by `λ·F` with the smooth rasterization coefficient
//! `λ = 1 / (1 + z*⁴)`, and a background primitive placed `β` times beyond
//! the farthest `z*` of the whole image closes the sum. Pixel values are the
//! normalized weights applied to the appearance vectors.
//!
//! All per-primitive quantities are carried in log space: `ln(λF)` stays
//! finite long after `F` underflows, and the normalization is a softmax.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::camera::{ray_grid, CameraModel, Extrinsics, RayGrid};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Spd3, Vec3};
use crate::skeleton::{Appearances, PrimitiveSet};
use crate::special::ln_erfc;

pub const DEFAULT_ALPHA: f64 = 2.5e-2;
pub const DEFAULT_BETA: f64 = 2.0;
pub const DEFAULT_CHANNELS: usize = 16;
pub const DEFAULT_RESOLUTION: usize = 256;
/// Background depth used when every primitive lies behind the camera.
pub const DEFAULT_MIN_BACKGROUND_DEPTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    /// Scale applied to every primitive shape.
    pub alpha: f64,
    /// How far beyond the farthest primitive the background sits.
    pub beta: f64,
    /// Background appearance; its length is the channel count.
    pub background: Vec<f64>,
    pub min_background_depth: f64,
}

impl RenderParams {
    pub fn new(alpha: f64, beta: f64, background: Vec<f64>) -> Result<Self> {
        let params = Self {
            alpha,
            beta,
            background,
            min_background_depth: DEFAULT_MIN_BACKGROUND_DEPTH,
        };
        params.validate()?;
        Ok(params)
    }

    /// Defaults with `channels` channels and a zero background.
    pub fn with_channels(channels: usize) -> Result<Self> {
        Self::new(DEFAULT_ALPHA, DEFAULT_BETA, vec![0.0; channels])
    }

    pub fn channels(&self) -> usize {
        self.background.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be > 1, got {}", self.beta)));
        }
        if self.background.is_empty() {
            return Err(Error::Domain("at least one channel is required".into()));
        }
        if !self.background.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("background appearance must be finite".into()));
        }
        if !(self.min_background_depth > 0.0 && self.min_background_depth.is_finite()) {
            return Err(Error::Domain(format!(
                "minimum background depth must be > 0, got {}",
                self.min_background_depth
            )));
        }
        Ok(())
    }
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            background: vec![0.0; DEFAULT_CHANNELS],
            min_background_depth: DEFAULT_MIN_BACKGROUND_DEPTH,
        }
    }
}

/// Dense `H × W × A` image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} samples for a {height}×{width}×{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Every pixel set to `value`.
    pub fn filled(height: usize, width: usize, value: &[f64]) -> Self {
        Self {
            height,
            width,
            channels: value.len(),
            data: value.repeat(height * width),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &FeatureImage) -> bool {
        self.shape() == other.shape()
    }
}

/// Per-pixel weights of every primitive followed by the background.
#[derive(Debug, Clone)]
pub struct WeightImage {
    pub height: usize,
    pub width: usize,
    /// Primitives plus one for the background.
    pub count: usize,
    pub data: Vec<f64>,
}

impl WeightImage {
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.count;
        &self.data[start..start + self.count]
    }
}

/// Integral along `r` of `exp(−Δ²(z r, μ, αΣ))` for `z ∈ [0, ∞)`.
pub fn density_integral(r: &Vec3, mu: &Vec3, sigma: &Spd3, alpha: f64) -> f64 {
    log_density_integral(r, mu, sigma, alpha).exp()
}

/// Natural logarithm of [`density_integral`], finite even where the
/// integral itself underflows.
pub fn log_density_integral(r: &Vec3, mu: &Vec3, sigma: &Spd3, alpha: f64) -> f64 {
    let prim = PreparedPrimitive::new(mu, sigma);
    prim.terms(r, alpha).log_density
}

/// Depth along `r` at which the density of `(μ, Σ)` peaks. Does not depend
/// on the shape scale and may be negative.
pub fn optimal_depth(r: &Vec3, mu: &Vec3, sigma: &Spd3) -> f64 {
    let s = sigma.inverse();
    r.dot(&(s * mu)) / r.dot(&(s * r))
}

/// Smooth rasterization coefficient `1 / (1 + z⁴)`.
pub fn raster_coeff(z_star: f64) -> f64 {
    1.0 / (1.0 + z_star.powi(4))
}

/// `ln(1 + z⁴)`, the negated log of [`raster_coeff`].
pub(crate) fn ln_raster_penalty(z: f64) -> f64 {
    z.powi(4).ln_1p()
}

/// The background primitive, shared by every ray of an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundTerms {
    pub depth: f64,
    pub density: f64,
    pub raster: f64,
    /// `ln(λ·F)`.
    pub log_weight: f64,
    /// The depth came from the floor rather than from the primitives.
    pub clamped: bool,
}

impl BackgroundTerms {
    /// Background at `depth`: density of an isotropic unit Gaussian centred
    /// on the ray at that depth.
    pub fn at_depth(depth: f64, alpha: f64, clamped: bool) -> Self {
        let log_density = 0.5 * (PI * alpha).ln() - 2f64.ln() + ln_erfc(-depth / alpha.sqrt());
        let penalty = ln_raster_penalty(depth);
        Self {
            depth,
            density: log_density.exp(),
            raster: (-penalty).exp(),
            log_weight: log_density - penalty,
            clamped,
        }
    }
}

/// Background terms from every optimal depth of the image.
///
/// The background depth is `β · max z*`. When no depth is positive the
/// configured minimum background depth is used instead and a warning is
/// logged.
pub fn background_terms(
    z_stars: impl IntoIterator<Item = f64>,
    params: &RenderParams,
) -> BackgroundTerms {
    let mut any = false;
    let max = z_stars.into_iter().fold(f64::NEG_INFINITY, |m, z| {
        any = true;
        m.max(z)
    });
    background_from_max(max, any, params)
}

fn background_from_max(max: f64, any: bool, params: &RenderParams) -> BackgroundTerms {
    if max > 0.0 {
        BackgroundTerms::at_depth(params.beta * max, params.alpha, false)
    } else {
        if any {
            log::warn!(
                "every primitive lies behind the camera (max z* = {max}); background depth clamped to {}",
                params.min_background_depth
            );
        }
        BackgroundTerms::at_depth(params.min_background_depth, params.alpha, true)
    }
}

/// Normalized influence `λ_k F_k / Σ λ_l F_l` of every primitive, the
/// background included.
pub fn pixel_weights(densities: &[f64], raster: &[f64]) -> Result<Vec<f64>> {
    if densities.len() != raster.len() {
        return Err(Error::Shape(format!(
            "{} densities but {} coefficients",
            densities.len(),
            raster.len()
        )));
    }
    if let Some(bad) = densities
        .iter()
        .chain(raster)
        .find(|v| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::Domain(format!(
            "densities and coefficients must be finite and non-negative, got {bad}"
        )));
    }
    let products: Vec<f64> = densities.iter().zip(raster).map(|(f, l)| f * l).collect();
    let total: f64 = products.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("every primitive has zero weight".into()));
    }
    Ok(products.into_iter().map(|p| p / total).collect())
}

/// Softmax of log-weights, in place.
pub(crate) fn normalize_log_weights(log_weights: &mut [f64]) -> Result<()> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Degenerate("every primitive has zero weight".into()));
    }
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in log_weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// Primitive in camera coordinates with its precision matrix cached.
#[derive(Debug, Clone)]
pub(crate) struct PreparedPrimitive {
    pub mean: Vec3,
    pub precision: Mat3,
    /// `S μ`.
    pub precision_mean: Vec3,
}

/// Quantities of one (ray, primitive) pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RayTerms {
    /// `rᵀSr`
    pub a: f64,
    /// `rᵀSμ`
    pub b: f64,
    pub z_star: f64,
    /// `ln F`
    pub log_density: f64,
}

impl RayTerms {
    pub fn log_weight(&self) -> f64 {
        self.log_density - ln_raster_penalty(self.z_star)
    }
}

impl PreparedPrimitive {
    pub fn new(mean: &Vec3, shape: &Spd3) -> Self {
        let precision = *shape.inverse();
        Self {
            mean: *mean,
            precision,
            precision_mean: precision * mean,
        }
    }

    pub fn a_b(&self, r: &Vec3) -> (f64, f64) {
        (r.dot(&(self.precision * r)), r.dot(&self.precision_mean))
    }

    pub fn z_star(&self, r: &Vec3) -> f64 {
        let (a, b) = self.a_b(r);
        b / a
    }

    pub fn terms(&self, r: &Vec3, alpha: f64) -> RayTerms {
        let (a, b) = self.a_b(r);
        let z_star = b / a;
        // perpendicular Mahalanobis residual, μᵀSμ − b²/a without cancellation
        let m = self.mean - z_star * r;
        let q = m.dot(&(self.precision * m)).max(0.0);
        let x = -b / (alpha * a).sqrt();
        let log_density = 0.5 * (PI * alpha / a).ln() - 2f64.ln() + ln_erfc(x) - q / alpha;
        RayTerms {
            a,
            b,
            z_star,
            log_density,
        }
    }
}

/// Primitives moved into the camera frame.
pub(crate) fn prepare(prims: &PrimitiveSet, extrinsics: &Extrinsics) -> Vec<PreparedPrimitive> {
    prims
        .primitives
        .iter()
        .map(|p| {
            let mean = extrinsics.apply(&p.mean);
            let shape = p.shape.rotated(extrinsics.rotation());
            PreparedPrimitive::new(&mean, &shape)
        })
        .collect()
}

/// Location of the largest optimal depth of an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DepthMax {
    pub value: f64,
    pub pixel: usize,
    pub primitive: usize,
}

/// Largest `z*` over all rays and primitives; ties go to the first in
/// row-major pixel order, then primitive order.
pub(crate) fn max_optimal_depth(rays: &RayGrid, prims: &[PreparedPrimitive]) -> Option<DepthMax> {
    if prims.is_empty() {
        return None;
    }
    let width = rays.width;
    (0..rays.height)
        .into_par_iter()
        .map(|row| {
            let mut best: Option<DepthMax> = None;
            for col in 0..width {
                let pixel = row * width + col;
                let r = &rays.rays[pixel];
                for (k, p) in prims.iter().enumerate() {
                    let z = p.z_star(r);
                    if best.is_none_or(|b| z > b.value) {
                        best = Some(DepthMax {
                            value: z,
                            pixel,
                            primitive: k,
                        });
                    }
                }
            }
            best
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<DepthMax>, c| match acc {
            Some(a) if a.value >= c.value => Some(a),
            _ => Some(c),
        })
}

/// Everything per-image that the pixel kernel needs.
pub(crate) struct Scene<'a> {
    pub rays: RayGrid,
    pub prims: Vec<PreparedPrimitive>,
    pub appearances: Vec<&'a [f64]>,
    pub background: BackgroundTerms,
    pub depth_max: Option<DepthMax>,
    pub params: &'a RenderParams,
}

impl<'a> Scene<'a> {
    pub fn new(
        prims: &'a PrimitiveSet,
        camera: &CameraModel,
        params: &'a RenderParams,
    ) -> Result<Self> {
        params.validate()?;
        if prims.channels != params.channels() {
            return Err(Error::Shape(format!(
                "primitives carry {} channels, render parameters {}",
                prims.channels,
                params.channels()
            )));
        }
        let rays = ray_grid(camera)?;
        let prepared = prepare(prims, &camera.extrinsics);
        let depth_max = max_optimal_depth(&rays, &prepared);
        let background = match depth_max {
            Some(m) => background_from_max(m.value, true, params),
            None => background_from_max(f64::NEG_INFINITY, false, params),
        };
        Ok(Self {
            rays,
            prims: prepared,
            appearances: prims
                .primitives
                .iter()
                .map(|p| p.appearance.as_slice())
                .collect(),
            background,
            depth_max,
            params,
        })
    }

    /// Normalized weights of pixel `index`, background last.
    pub fn weights(&self, index: usize, out: &mut Vec<f64>) -> Result<()> {
        let r = &self.rays.rays[index];
        out.clear();
        out.extend(
            self.prims
                .iter()
                .map(|p| p.terms(r, self.params.alpha).log_weight()),
        );
        out.push(self.background.log_weight);
        normalize_log_weights(out).map_err(|e| Error::Pixel {
            row: index / self.rays.width,
            col: index % self.rays.width,
            source: Box::new(e),
        })
    }

    pub fn appearance(&self, k: usize) -> &[f64] {
        if k < self.appearances.len() {
            self.appearances[k]
        } else {
            &self.params.background
        }
    }
}

/// Renders the feature image of `prims` (given in the camera's source
/// frame) seen through `camera`.
pub fn render(
    prims: &PrimitiveSet,
    camera: &CameraModel,
    params: &RenderParams,
) -> Result<FeatureImage> {
    let scene = Scene::new(prims, camera, params)?;
    let channels = params.channels();
    let (height, width) = (camera.height, camera.width);
    let mut data = vec![0.0; height * width * channels];
    data.par_chunks_mut(width * channels)
        .enumerate()
        .try_for_each(|(row, out)| -> Result<()> {
            let mut weights = Vec::with_capacity(scene.prims.len() + 1);
            for col in 0..width {
                scene.weights(row * width + col, &mut weights)?;
                let pixel = &mut out[col * channels..(col + 1) * channels];
                for (k, w) in weights.iter().enumerate() {
                    for (o, a) in pixel.iter_mut().zip(scene.appearance(k)) {
                        *o += w * a;
                    }
                }
            }
            Ok(())
        })?;
    FeatureImage::new(height, width, channels, data)
}

/// Per-pixel weights of every primitive and the background.
pub fn render_weights(
    prims: &PrimitiveSet,
    camera: &CameraModel,
    params: &RenderParams,
) -> Result<WeightImage> {
    let scene = Scene::new(prims, camera, params)?;
    let count = scene.prims.len() + 1;
    let (height, width) = (camera.height, camera.width);
    let mut data = vec![0.0; height * width * count];
    data.par_chunks_mut(width * count)
        .enumerate()
        .try_for_each(|(row, out)| -> Result<()> {
            let mut weights = Vec::with_capacity(count);
            for col in 0..width {
                scene.weights(row * width + col, &mut weights)?;
                out[col * count..(col + 1) * count].copy_from_slice(&weights);
            }
            Ok(())
        })?;
    Ok(WeightImage {
        height,
        width,
        count,
        data,
    })
}

/// Background terms the renderer would use for this scene.
pub fn scene_background(
    prims: &PrimitiveSet,
    camera: &CameraModel,
    params: &RenderParams,
) -> Result<BackgroundTerms> {
    Ok(Scene::new(prims, camera, params)?.background)
}

/// Smallest and largest value over all appearance vectors and the
/// background, channel by channel.
pub fn appearance_bounds(appearances: &Appearances, background: &[f64]) -> Vec<(f64, f64)> {
    let mut bounds: Vec<(f64, f64)> = background.iter().map(|&b| (b, b)).collect();
    for row in appearances.rows() {
        for (bound, &v) in bounds.iter_mut().zip(row) {
            bound.0 = bound.0.min(v);
            bound.1 = bound.1.max(v);
        }
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::skeleton::Primitive;

    fn iso(v: f64) -> Spd3 {
        Spd3::new(Mat3::identity() * v).unwrap()
    }

    #[test]
    fn density_of_gaussian_ahead_of_pinhole_is_full_mass() {
        let r = Vec3::new(1.0, 2.0, 2.0).normalize();
        let f = density_integral(&r, &(10.0 * r), &Spd3::identity(), 1.0);
        assert!((f - PI.sqrt()).abs() < 1e-12, "{f}");
    }

    #[test]
    fn density_of_gaussian_at_pinhole_is_half_mass() {
        let f = density_integral(&Vec3::z(), &Vec3::zeros(), &Spd3::identity(), 1.0);
        assert!((f - 0.5 * PI.sqrt()).abs() < 1e-15);
        assert!((f - 0.886_226_925_452_758).abs() < 1e-12);
    }

    #[test]
    fn log_density_survives_far_off_ray_primitives() {
        let ln_f = log_density_integral(&Vec3::z(), &Vec3::new(50.0, 0.0, 5.0), &iso(0.01), 0.025);
        assert!(ln_f.is_finite() && ln_f < -1e6);
        assert_eq!(density_integral(&Vec3::z(), &Vec3::new(50.0, 0.0, 5.0), &iso(0.01), 0.025), 0.0);
    }

    #[test]
    fn optimal_depth_of_isotropic_shape_is_projection() {
        let r = Vec3::new(0.1, -0.2, 1.0).normalize();
        let mu = Vec3::new(0.3, 0.4, 2.0);
        assert!((optimal_depth(&r, &mu, &iso(0.7)) - r.dot(&mu)).abs() < 1e-15);
        assert!((optimal_depth(&r, &(5.0 * r), &Spd3::identity()) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn raster_coefficients() {
        assert_eq!(raster_coeff(0.0), 1.0);
        assert_eq!(raster_coeff(1.0), 0.5);
        assert!((raster_coeff(3.0) - 1.0 / 82.0).abs() < 1e-17);
        assert!((raster_coeff(-3.0) - 1.0 / 82.0).abs() < 1e-17);
    }

    #[test]
    fn background_from_depths() {
        let params = RenderParams::new(1.0, 2.0, vec![0.0]).unwrap();
        let bg = background_terms([1.0, 5.0, -2.0, 3.0], &params);
        assert_eq!(bg.depth, 10.0);
        assert!((bg.density - PI.sqrt()).abs() < 1e-12);
        assert!((bg.raster - 1.0 / 10001.0).abs() < 1e-18);
        assert!(!bg.clamped);
    }

    #[test]
    fn background_behind_camera_is_clamped() {
        let params = RenderParams::new(1.0, 2.0, vec![0.0]).unwrap();
        let bg = background_terms([-1.0, -5.0], &params);
        assert!(bg.clamped);
        assert_eq!(bg.depth, DEFAULT_MIN_BACKGROUND_DEPTH);
    }

    #[test]
    fn weights_normalize() {
        assert_eq!(pixel_weights(&[0.3], &[0.2]).unwrap(), vec![1.0]);
        let w = pixel_weights(&[1.0, 1.0, 1e-12], &[0.5, 0.5, 1e-4]).unwrap();
        assert_eq!(w[0], w[1]);
        assert!((w[0] - (0.5 - w[2] / 2.0)).abs() < 1e-15);
        assert!(pixel_weights(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(pixel_weights(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn log_space_normalization_matches_direct() {
        let f = [0.3, 1.2, 1e-5, 0.8];
        let l = [0.9, 0.1, 0.5, 1e-3];
        let direct = pixel_weights(&f, &l).unwrap();
        let mut logs: Vec<f64> = f.iter().zip(&l).map(|(f, l)| (f * l).ln()).collect();
        normalize_log_weights(&mut logs).unwrap();
        for (a, b) in direct.iter().zip(&logs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    fn camera(n: usize) -> CameraModel {
        let c = (n - 1) as f64 / 2.0;
        CameraModel::new(Intrinsics::new(n as f64, n as f64, c, c, 0.0).unwrap(), n, n).unwrap()
    }

    #[test]
    fn empty_scene_renders_background() {
        let params = RenderParams::new(0.1, 2.0, vec![0.25, -1.0]).unwrap();
        let prims = PrimitiveSet::new(vec![], 2).unwrap();
        let img = render(&prims, &camera(4), &params).unwrap();
        assert_eq!(img, FeatureImage::filled(4, 4, &[0.25, -1.0]));
    }

    #[test]
    fn constant_appearance_renders_constant() {
        let b = vec![0.5, 2.0, -3.0];
        let params = RenderParams::new(0.025, 2.0, b.clone()).unwrap();
        let prims = PrimitiveSet::new(
            vec![
                Primitive {
                    mean: Vec3::new(0.1, 0.0, 3.0),
                    shape: iso(0.2),
                    appearance: b.clone(),
                },
                Primitive {
                    mean: Vec3::new(-0.2, 0.1, 2.0),
                    shape: iso(0.1),
                    appearance: b.clone(),
                },
            ],
            3,
        )
        .unwrap();
        let img = render(&prims, &camera(6), &params).unwrap();
        for (v, e) in img.as_slice().iter().zip(b.iter().cycle()) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let params = RenderParams::with_channels(2).unwrap();
        let prims = PrimitiveSet::new(vec![], 3).unwrap();
        assert!(matches!(render(&prims, &camera(2), &params), Err(Error::Shape(_))));
    }

    #[test]
    fn params_validation() {
        assert!(RenderParams::new(0.0, 2.0, vec![0.0]).is_err());
        assert!(RenderParams::new(0.1, 1.0, vec![0.0]).is_err());
        assert!(RenderParams::new(0.1, 2.0, vec![]).is_err());
    }
}
