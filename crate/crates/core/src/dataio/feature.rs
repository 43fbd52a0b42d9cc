//! Feature file layout (all integers little-endian):
//!
//! | offset | size    | field                                   |
//! |--------|---------|-----------------------------------------|
//! | 0      | 4       | magic `FEA1`                            |
//! | 4      | 1       | domain (0 = RGB, 1 = energy map)        |
//! | 5      | 4       | `dim`, u32                              |
//! | 9      | 4·dim   | values, IEEE-754 binary32               |

use super::write_atomic;
use crate::data::{Domain, FeatureVector};
use crate::error::{Error, Result};
use std::path::Path;

pub const FEATURE_MAGIC: &[u8; 4] = b"FEA1";
const HEADER_LEN: usize = 9;

/// Values are stored as 32-bit floats.
pub fn write_feature_file(path: &Path, domain: Domain, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Domain("feature vector must have at least one value".into()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite() || !(*v as f32).is_finite()) {
        return Err(Error::Domain(format!("feature value {i} is not finite in 32-bit")));
    }
    let dim = u32::try_from(values.len()).map_err(|_| Error::Domain("feature vector too long".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.push(domain.tag());
    buf.extend_from_slice(&dim.to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_atomic(path, &buf)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureVector> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

fn decode(path: &Path, bytes: &[u8]) -> Result<FeatureVector> {
    let err = |offset: usize, msg: String| Error::Format {
        path: path.into(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(err(0, "bad magic, expected FEA1".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    let domain = Domain::from_tag(bytes[4]).ok_or_else(|| err(4, format!("unknown domain tag {}", bytes[4])))?;
    let dim = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    if dim == 0 {
        return Err(err(5, "dimension is zero".into()));
    }
    let expected = HEADER_LEN + 4 * dim;
    if bytes.len() < expected {
        return Err(err(
            expected,
            format!("truncated: dim {dim} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(err(
            expected,
            format!("dim {dim} declares {expected} bytes but file has {}", bytes.len()),
        ));
    }
    let mut values = Vec::with_capacity(dim);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(err(HEADER_LEN + 4 * i, "non-finite value".into()));
        }
        values.push(v as f64);
    }
    Ok(FeatureVector { domain, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn offset_of(e: Error) -> u64 {
        match e {
            Error::Format { offset, .. } => offset,
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn exact_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fea");
        write_feature_file(&p, Domain::Rgb, &[1.5, -2.25]).unwrap();
        let f = read_feature_file(&p).unwrap();
        assert_eq!(f.values, vec![1.5, -2.25]);
        assert_eq!(f.domain, Domain::Rgb);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 9 + 8);
    }

    #[test]
    fn bad_magic_at_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.fea");
        std::fs::write(&p, b"XXXX\x00\x01\x00\x00\x00\x00\x00\x80\x3f").unwrap();
        assert_eq!(offset_of(read_feature_file(&p).unwrap_err()), 0);
    }

    #[test]
    fn truncated_payload_reports_expected_end() {
        let mut b = b"FEA1\x01".to_vec();
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(offset_of(decode(Path::new("t"), &b).unwrap_err()), 21);
    }

    #[test]
    fn structural_violations() {
        let p = Path::new("t");
        assert_eq!(offset_of(decode(p, b"FEA1\x00\x01").unwrap_err()), 6);
        assert_eq!(offset_of(decode(p, b"FEA1\x07\x01\x00\x00\x00\x00\x00\x00\x00").unwrap_err()), 4);
        assert_eq!(offset_of(decode(p, b"FEA1\x00\x00\x00\x00\x00").unwrap_err()), 5);
        let mut long = b"FEA1\x00\x01\x00\x00\x00".to_vec();
        long.extend_from_slice(&[0u8; 8]);
        assert_eq!(offset_of(decode(p, &long).unwrap_err()), 13);
    }

    #[test]
    fn writer_rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fea");
        assert!(write_feature_file(&p, Domain::Rgb, &[]).is_err());
        assert!(write_feature_file(&p, Domain::Rgb, &[f64::NAN]).is_err());
        assert!(write_feature_file(&p, Domain::Rgb, &[1e300]).is_err());
    }

    proptest! {
        #[test]
        fn any_f32_payload_round_trips(vals in prop::collection::vec(-1e30f32..1e30, 1..64), edm in any::<bool>()) {
            let domain = if edm { Domain::EnergyDistribution } else { Domain::Rgb };
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("p.fea");
            let wide: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
            write_feature_file(&p, domain, &wide).unwrap();
            let f = read_feature_file(&p).unwrap();
            prop_assert_eq!(f.domain, domain);
            prop_assert_eq!(f.values, wide);
        }
    }
}
