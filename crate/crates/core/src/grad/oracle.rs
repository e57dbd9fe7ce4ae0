//! Direct numerical evaluation of the ray density integral.
//!
//! Independent of the closed form used by the renderer: the integrand is
//! evaluated point by point with an LU solve of `αΣ`, and integrated by
//! adaptive Gauss-Kronrod (7/15) quadrature with global error control.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Spd3, Vec3};
use crate::special::ln_erfc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Subdivision cap; exceeding it is a numeric error.
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_intervals: 20_000,
        }
    }
}

/// Integration range ends this many ray standard deviations past the peak.
const RANGE_SIGMAS: f64 = 12.0;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights of the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive quadrature over consecutive `breakpoints`; returns the value
/// and the error estimate.
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    breakpoints: &[f64],
    extra_error: f64,
    opts: &QuadratureOptions,
) -> Result<(f64, f64)> {
    let mut heap: BinaryHeap<Interval> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (value, error) = gauss_kronrod(f, w[0], w[1]);
            Interval {
                a: w[0],
                b: w[1],
                value,
                error,
            }
        })
        .collect();
    loop {
        let value: f64 = heap.iter().map(|i| i.value).sum();
        let error: f64 = heap.iter().map(|i| i.error).sum::<f64>() + extra_error;
        if !value.is_finite() {
            return Err(Error::Numeric("quadrature produced a non-finite value".into()));
        }
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok((value, error));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Numeric(format!(
                "quadrature did not reach tolerance within {} intervals (error {error:e})",
                opts.max_intervals
            )));
        }
        let worst = heap.pop().expect("non-empty interval set");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Numeric(
                "quadrature interval cannot be subdivided further".into(),
            ));
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gauss_kronrod(f, a, b);
            heap.push(Interval { a, b, value, error });
        }
    }
}

/// Natural logarithm of `∫₀^∞ exp(−Δ²(z r, μ, αΣ)) dz` by quadrature.
///
/// The integrand is rescaled by its peak on the integration range so the
/// result keeps full relative precision where the integral underflows.
pub fn quad_oracle_log(
    r: &Vec3,
    mu: &Vec3,
    sigma: &Spd3,
    alpha: f64,
    opts: &QuadratureOptions,
) -> Result<f64> {
    let lu = (sigma.matrix() * alpha).lu();
    if !lu.is_invertible() {
        return Err(Error::Domain("shape matrix is singular".into()));
    }
    let solve = |v: &Vec3| lu.solve(v).expect("invertible");
    let delta_sq = |z: f64| {
        let d = z * r - mu;
        d.dot(&solve(&d))
    };
    let ray_precision = r.dot(&solve(r));
    let peak = r.dot(&solve(mu)) / ray_precision;
    let width = 1.0 / ray_precision.sqrt();
    let end = peak.max(0.0) + RANGE_SIGMAS * width;
    let anchor = peak.clamp(0.0, end);
    let shift = delta_sq(anchor);
    // Δ²(z) − Δ²(z₀) = (d − d₀)ᵀ(αΣ)⁻¹(d + d₀) with d − d₀ = (z − z₀) r,
    // which avoids cancelling two large squared distances
    let d_anchor = anchor * r - mu;
    let excess = |z: f64| {
        let d = z * r - mu;
        (z - anchor) * r.dot(&solve(&(d + d_anchor)))
    };
    let above_min = -excess(peak);

    // integrate over t = z / width so the tolerances are scale free
    let g = |t: f64| (-excess(t * width)).exp();
    let t_end = end / width;
    let t_peak = peak / width;
    let mut breakpoints: Vec<f64> = (-12..=12)
        .map(|k| t_peak + k as f64)
        .chain((1..60).map(|j| t_end * 0.5f64.powi(j)))
        .filter(|&t| t > 0.0 && t < t_end)
        .collect();
    breakpoints.push(0.0);
    breakpoints.push(t_end);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // beyond the range: exp(shift − Δ²) ≤ exp(shift − min Δ²) · exp(−(t − t_peak)²)
    let ln_tail = above_min + (0.5 * PI.sqrt()).ln() + ln_erfc(t_end - t_peak);
    let (value, _) = adaptive(&g, &breakpoints, ln_tail.exp(), opts)?;
    Ok(value.ln() + width.ln() - shift)
}

/// `∫₀^∞ exp(−Δ²(z r, μ, αΣ)) dz` by quadrature. Underflows to zero for
/// primitives far from the ray; see [`quad_oracle_log`].
pub fn quad_oracle(r: &Vec3, mu: &Vec3, sigma: &Spd3, alpha: f64) -> Result<f64> {
    Ok(quad_oracle_log(r, mu, sigma, alpha, &QuadratureOptions::default())?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Mat3;

    #[test]
    fn gauss_kronrod_integrates_polynomials_exactly() {
        let (v, e) = gauss_kronrod(&|x: f64| x.powi(6) - 3.0 * x * x, 0.0, 2.0);
        assert!((v - (128.0 / 7.0 - 8.0)).abs() < 1e-13);
        assert!(e < 1e-12);
    }

    #[test]
    fn full_mass_case() {
        let r = Vec3::new(0.0, 0.6, 0.8);
        let f = quad_oracle(&r, &(10.0 * r), &Spd3::identity(), 1.0).unwrap();
        assert!((f - PI.sqrt()).abs() < 1e-9, "{f}");
    }

    #[test]
    fn half_mass_case() {
        let f = quad_oracle(&Vec3::z(), &Vec3::zeros(), &Spd3::identity(), 1.0).unwrap();
        assert!((f - 0.5 * PI.sqrt()).abs() < 1e-9, "{f}");
    }

    #[test]
    fn far_off_ray_is_tiny_not_an_error() {
        let sigma = Spd3::new(Mat3::identity() * 0.01).unwrap();
        let f = quad_oracle(&Vec3::z(), &Vec3::new(15.0, 0.0, 3.0), &sigma, 0.05).unwrap();
        assert!(f < 1e-30);
        let ln_f =
            quad_oracle_log(&Vec3::z(), &Vec3::new(15.0, 0.0, 3.0), &sigma, 0.05, &Default::default())
                .unwrap();
        // exp(−225 / 0.0005) with a Gaussian factor of order one
        assert!((ln_f + 450_000.0).abs() < 10.0, "{ln_f}");
    }

    #[test]
    fn primitive_behind_camera() {
        // Gaussian centred at z = −3 along the ray: F = (√π/2)·erfc(3)
        let f = quad_oracle(&Vec3::z(), &Vec3::new(0.0, 0.0, -3.0), &Spd3::identity(), 1.0).unwrap();
        let expected = 0.5 * PI.sqrt() * 2.209_049_699_858_544e-5;
        assert!((f / expected - 1.0).abs() < 1e-8, "{f} vs {expected}");
    }
}
