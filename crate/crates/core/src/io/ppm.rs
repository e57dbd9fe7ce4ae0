//! Binary PPM previews of three chosen channels.

use crate::error::{Error, Result};
use crate::renderer::FeatureImage;

/// `P6` image with channels `map` shown as red, green and blue, each
/// mapped from `[lo, hi]` to `[0, 255]` and clamped.
pub fn ppm_preview(image: &FeatureImage, map: [usize; 3], range: (f64, f64)) -> Result<Vec<u8>> {
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("preview range [{lo}, {hi}] is empty")));
    }
    if let Some(&c) = map.iter().find(|&&c| c >= image.channels()) {
        return Err(Error::Domain(format!(
            "channel {c} out of range for a {}-channel image",
            image.channels()
        )));
    }
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.reserve(3 * image.width() * image.height());
    let scale = 255.0 / (hi - lo);
    for row in 0..image.height() {
        for col in 0..image.width() {
            let px = image.pixel(row, col);
            out.extend(map.iter().map(|&c| ((px[c] - lo) * scale).round().clamp(0.0, 255.0) as u8));
        }
    }
    Ok(out)
}
