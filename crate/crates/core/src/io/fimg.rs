//! The FIMG feature-image container.
//!
//! Layout, all little-endian: the magic `FIMG`, a `u16` format version,
//! `u32` height, width and channel count, then `H·W·A` `f32` samples,
//! row-major with interleaved channels.

use std::io::{Read, Write};

use thiserror::Error;

use crate::renderer::FeatureImage;

pub const MAGIC: [u8; 4] = *b"FIMG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 3 * 4;

#[derive(Debug, Error)]
pub enum FimgError {
    #[error("not a FIMG file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported FIMG version {0} (expected {VERSION})")]
    Version(u16),
    #[error("FIMG header is truncated ({0} bytes)")]
    TruncatedHeader(usize),
    #[error("FIMG payload is {found} bytes, header requires {expected}")]
    PayloadLength { expected: u64, found: u64 },
    #[error("image dimension {0} does not fit the FIMG header")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serializes `image`; samples are narrowed to `f32`.
pub fn encode_feature_image(image: &FeatureImage) -> Result<Vec<u8>, FimgError> {
    let (h, w, a) = image.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * image.as_slice().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [h, w, a] {
        let dim = u32::try_from(dim).map_err(|_| FimgError::TooLarge(dim))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    for &v in image.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_feature_image(bytes: &[u8]) -> Result<FeatureImage, FimgError> {
    if bytes.len() < 4 {
        return Err(FimgError::TruncatedHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(FimgError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(FimgError::TruncatedHeader(bytes.len()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(FimgError::Version(version));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"));
    let (h, w, a) = (dim(6), dim(10), dim(14));
    let expected = 4 * u64::from(h) * u64::from(w) * u64::from(a);
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(FimgError::PayloadLength {
            expected,
            found: payload.len() as u64,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("four bytes"))))
        .collect();
    Ok(FeatureImage::new(h as usize, w as usize, a as usize, data)
        .expect("payload length matches the header"))
}

pub fn write_feature_image<W: Write>(image: &FeatureImage, mut sink: W) -> Result<(), FimgError> {
    sink.write_all(&encode_feature_image(image)?)?;
    Ok(())
}

pub fn read_feature_image<R: Read>(mut source: R) -> Result<FeatureImage, FimgError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_feature_image(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureImage {
        let data = (0..12).map(|i| i as f64 * 0.25 - 1.0).collect();
        FeatureImage::new(2, 2, 3, data).unwrap()
    }

    #[test]
    fn layout_of_a_small_image() {
        let bytes = encode_feature_image(&sample()).unwrap();
        assert_eq!(bytes.len(), 4 + 2 + 12 + 48);
        assert_eq!(&bytes[..4], b"FIMG");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..18], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[18..22], &(-1.0f32).to_le_bytes());
        let back = decode_feature_image(&bytes).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn distinct_failures() {
        let bytes = encode_feature_image(&sample()).unwrap();
        assert!(matches!(
            decode_feature_image(&bytes[..bytes.len() - 1]),
            Err(FimgError::PayloadLength { expected: 48, found: 47 })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_feature_image(&extra), Err(FimgError::PayloadLength { .. })));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(decode_feature_image(&magic), Err(FimgError::BadMagic(_))));
        let mut version = bytes.clone();
        version[4] = 2;
        assert!(matches!(decode_feature_image(&version), Err(FimgError::Version(2))));
        assert!(matches!(decode_feature_image(&bytes[..10]), Err(FimgError::TruncatedHeader(10))));
    }

    #[test]
    fn reader_and_writer() {
        let mut buf = Vec::new();
        write_feature_image(&sample(), &mut buf).unwrap();
        assert_eq!(read_feature_image(buf.as_slice()).unwrap(), sample());
    }
}
