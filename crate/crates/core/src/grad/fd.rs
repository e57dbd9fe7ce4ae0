use crate::error::{Error, Result};

/// Central-difference gradient `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe)?;
            probe[i] = x[i] - h;
            let minus = f(&probe)?;
            probe[i] = x[i];
            if !(plus.is_finite() && minus.is_finite()) {
                return Err(Error::Numeric(format!(
                    "objective is not finite around component {i} ({plus}, {minus})"
                )));
            }
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}
