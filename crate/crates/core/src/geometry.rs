//! Vector and matrix primitives: rotation between two vectors, squared
//! Mahalanobis distance and symmetric positive definite 3×3 matrices.

use nalgebra::{Cholesky, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Lengths at or below this are treated as zero.
pub const EPS: f64 = 1e-12;

/// Largest tolerated `|m[(i, j)] − m[(j, i)]|` for an [`Spd3`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric positive definite 3×3 matrix, stored with its inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spd3 {
    matrix: Mat3,
    inverse: Mat3,
}

impl Spd3 {
    /// Validates symmetry and positive definiteness.
    ///
    /// A failed Cholesky factorization is reported as a singular matrix.
    pub fn new(matrix: Mat3) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("matrix has non-finite entries".into()));
        }
        let asym = (matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::Domain(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Self::factor(matrix)
    }

    /// Like [`Spd3::new`] but first replaces the matrix by its symmetric part.
    /// Used for products such as `R Λ Rᵀ` that are symmetric only up to rounding.
    pub fn from_symmetric_part(matrix: Mat3) -> Result<Self> {
        Self::new(0.5 * (matrix + matrix.transpose()))
    }

    pub fn identity() -> Self {
        Self {
            matrix: Mat3::identity(),
            inverse: Mat3::identity(),
        }
    }

    fn factor(matrix: Mat3) -> Result<Self> {
        let chol = Cholesky::new(matrix)
            .ok_or_else(|| Error::Domain("matrix is singular or not positive definite".into()))?;
        if chol.l_dirty().diagonal().iter().any(|&d| d <= 0.0 || !d.is_finite()) {
            return Err(Error::Domain("matrix is singular or not positive definite".into()));
        }
        let inv = chol.inverse();
        Ok(Self {
            matrix,
            inverse: 0.5 * (inv + inv.transpose()),
        })
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    /// `s · A` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("scale must be positive, got {s}")));
        }
        Ok(Self {
            matrix: self.matrix * s,
            inverse: self.inverse / s,
        })
    }

    /// `R A Rᵀ` for a rotation `R`.
    pub fn rotated(&self, rotation: &Mat3) -> Self {
        let m = rotation * self.matrix * rotation.transpose();
        let i = rotation * self.inverse * rotation.transpose();
        Self {
            matrix: 0.5 * (m + m.transpose()),
            inverse: 0.5 * (i + i.transpose()),
        }
    }
}

/// Squared Mahalanobis distance `(u − v)ᵀ A⁻¹ (u − v)`.
pub fn mahalanobis_sq(u: &Vec3, v: &Vec3, a: &Spd3) -> f64 {
    let d = u - v;
    d.dot(&(a.inverse() * d)).max(0.0)
}

/// Rotation taking the direction of `x` onto the direction of `y`, acting as
/// the identity on the orthogonal complement of `span(x, y)`.
///
/// Built in the plane spanned by `u = x/‖x‖` and the normalised rejection
/// `v` of `y` on `u`: `R = (I − uuᵀ − vvᵀ) + [u v] G [u v]ᵀ` with `G` the
/// planar rotation by the angle between `x` and `y`.
///
/// Antiparallel inputs have no rejection; the result is then the half turn
/// about a fixed unit vector orthogonal to `x`.
pub fn rotation_between(x: &Vec3, y: &Vec3) -> Result<Mat3> {
    let nx = x.norm();
    let ny = y.norm();
    if !(nx > EPS && ny > EPS) || !nx.is_finite() || !ny.is_finite() {
        return Err(Error::Domain(format!(
            "rotation_between needs non-zero finite vectors (|x| = {nx:e}, |y| = {ny:e})"
        )));
    }
    let u = x / nx;
    let cos = (x.dot(y) / (nx * ny)).clamp(-1.0, 1.0);
    let rejection = y - u.dot(y) * u;
    if rejection.norm() <= EPS * ny {
        return Ok(if cos > 0.0 {
            Mat3::identity()
        } else {
            let axis = orthogonal_unit(&u);
            2.0 * axis * axis.transpose() - Mat3::identity()
        });
    }
    let mut v = rejection.normalize();
    // second Gram-Schmidt pass: the rejection loses orthogonality to u
    // when x and y are nearly parallel
    v -= u.dot(&v) * u;
    v.normalize_mut();

    // sine from the rejection, not sqrt(1 - cos²), which cancels near parallel
    let sin = rejection.norm() / ny;
    let scale = cos.hypot(sin);
    let (cos, sin) = (cos / scale, sin / scale);
    let complement = Mat3::identity() - u * u.transpose() - v * v.transpose();
    let plane = (cos * u + sin * v) * u.transpose() + (cos * v - sin * u) * v.transpose();
    Ok(complement + plane)
}

/// Unit vector orthogonal to unit `u`, via Gram-Schmidt on the canonical
/// axis matching the smallest component of `u`.
fn orthogonal_unit(u: &Vec3) -> Vec3 {
    let k = u.iamin();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    (e - u.dot(&e) * u).normalize()
}
