//! Clip feature files.
//!
//! Layout, all little-endian:
//!
//! | offset | size      | content                          |
//! |--------|-----------|----------------------------------|
//! | 0      | 4         | magic `DVTF`                     |
//! | 4      | 4         | `u32` version (1)                |
//! | 8      | 4         | `u32` clip count `C`             |
//! | 12     | 4         | `u32` feature width `D_c`        |
//! | 16     | 4·C·D_c   | `f32` values, clip-major         |
//!
//! Values are widened to `f64` on load.

use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::model::VideoClipFeatures;
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"DVTF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Header fields `(clips, width)` after checking magic and version.
pub(crate) fn decode_header(bytes: &[u8], path: &Path) -> Result<(usize, usize)> {
    let err = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(err(
            bytes.len(),
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(err(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != FEATURE_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    Ok((u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize))
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<VideoClipFeatures> {
    let err = |offset: usize, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    let (clips, width) = decode_header(bytes, path)?;
    if clips == 0 || width == 0 {
        return Err(err(8, format!("empty feature matrix {clips} x {width}")));
    }
    let expected = HEADER_LEN + 4 * clips * width;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!(
                "payload size mismatch: expected {expected} bytes in total, found {}",
                bytes.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(clips * width);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(err(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(f64::from(v));
    }
    VideoClipFeatures::new(Tensor::new(vec![1, clips, width], data)?)
}

/// Serializes features, narrowing each value to `f32`.
pub fn encode_features(features: &VideoClipFeatures) -> Vec<u8> {
    let (c, d) = (features.num_clips(), features.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * c * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in features.tensor().data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn load_features(path: &Path) -> Result<VideoClipFeatures> {
    decode_features(&read_file(path)?, path)
}

pub fn write_features(path: &Path, features: &VideoClipFeatures) -> Result<()> {
    write_file(path, &encode_features(features))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(c: u32, d: u32, payload: &[f32]) -> Vec<u8> {
        let mut b = FEATURE_MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&c.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        for v in payload {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_clip_major_rows() {
        let bytes = file(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = decode_features(&bytes, Path::new("x")).unwrap();
        assert_eq!(f.num_clips(), 2);
        assert_eq!(f.tensor().row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(f.tensor().row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let bytes = file(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let msg = decode_features(&bytes, Path::new("x")).unwrap_err().to_string();
        assert!(msg.contains("expected 40") && msg.contains("found 36"), "{msg}");
    }

    #[test]
    fn rejects_bad_magic_and_nan() {
        let mut bytes = file(1, 1, &[1.0]);
        bytes[0] = b'X';
        assert!(decode_features(&bytes, Path::new("x")).is_err());
        let bytes = file(1, 2, &[1.0, f32::NAN]);
        let msg = decode_features(&bytes, Path::new("x")).unwrap_err().to_string();
        assert!(msg.contains("byte 20"), "{msg}");
    }
}
