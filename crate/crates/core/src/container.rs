//! Binary tensor blobs.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes   "WIOM"
//! version  u16       FORMAT_VERSION
//! dtype    u8        1 = f32, 2 = complex64 (interleaved f32 re, im), 3 = f64
//! rank     u8
//! dims     u64 x rank
//! payload  row-major elements
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex32;
use sha2::{Digest, Sha256};

use crate::error::{Error, LoadError, Result};

pub const MAGIC: [u8; 4] = *b"WIOM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    Complex64 = 2,
    F64 = 3,
}

impl DType {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Self::F32),
            2 => Some(Self::Complex64),
            3 => Some(Self::F64),
            _ => None,
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::Complex64 | Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlobData {
    F32(Vec<f32>),
    Complex64(Vec<Complex32>),
    F64(Vec<f64>),
}

impl BlobData {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::Complex64(_) => DType::Complex64,
            Self::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::Complex64(v) => v.len(),
            Self::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub dims: Vec<usize>,
    pub data: BlobData,
}

impl Blob {
    pub fn new(dims: Vec<usize>, data: BlobData) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() || dims.len() > u8::MAX as usize {
            return Err(Error::Shape(format!(
                "blob dims {dims:?} hold {expected} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = 8 + 8 * self.dims.len();
        let mut out = Vec::with_capacity(header + self.data.len() * self.data.dtype().element_size());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.data.dtype() as u8);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            BlobData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlobData::Complex64(v) => v.iter().for_each(|z| {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }),
            BlobData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// `path` is only used to label errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self, LoadError> {
        let truncated = |expected: u64| LoadError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        };
        if bytes.len() < 8 {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(bad_magic(bytes, path));
            }
            return Err(truncated(8));
        }
        if bytes[..4] != MAGIC {
            return Err(bad_magic(bytes, path));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(LoadError::UnsupportedVersion {
                path: path.to_path_buf(),
                found: version,
            });
        }
        let dtype = DType::from_tag(bytes[6]).ok_or_else(|| LoadError::UnknownDtype {
            path: path.to_path_buf(),
            found: bytes[6],
        })?;
        let rank = bytes[7] as usize;
        let header = 8 + 8 * rank as u64;
        if (bytes.len() as u64) < header {
            return Err(truncated(header));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut count: u64 = 1;
        for r in 0..rank {
            let off = 8 + 8 * r;
            let d = u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8-byte slice"));
            count = count.checked_mul(d).ok_or_else(|| truncated(u64::MAX))?;
            dims.push(d as usize);
        }
        let payload = count
            .checked_mul(dtype.element_size() as u64)
            .and_then(|p| p.checked_add(header))
            .ok_or_else(|| truncated(u64::MAX))?;
        let found = bytes.len() as u64;
        if found < payload {
            return Err(truncated(payload));
        }
        if found > payload {
            return Err(LoadError::TrailingBytes {
                path: path.to_path_buf(),
                extra: found - payload,
            });
        }
        let body = &bytes[header as usize..];
        let word4 = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
        let data = match dtype {
            DType::F32 => BlobData::F32(body.chunks_exact(4).map(word4).collect()),
            DType::Complex64 => BlobData::Complex64(
                body.chunks_exact(8)
                    .map(|c| Complex32::new(word4(&c[..4]), word4(&c[4..])))
                    .collect(),
            ),
            DType::F64 => BlobData::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

fn bad_magic(bytes: &[u8], path: &Path) -> LoadError {
    LoadError::BadMagic {
        path: path.to_path_buf(),
        found: [bytes[0], bytes[1], bytes[2], bytes[3]],
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the blob and returns the SHA-256 of the bytes written.
pub fn write_blob(path: &Path, blob: &Blob) -> Result<String> {
    let bytes = blob.encode();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Reads a blob, optionally checking its SHA-256.
pub fn read_blob(path: &Path, expected_sha256: Option<&str>) -> Result<Blob> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(expected) = expected_sha256 {
        let found = sha256_hex(&bytes);
        if found != expected {
            // Report structural damage first; it is the more useful message.
            Blob::decode(&bytes, path)?;
            return Err(LoadError::Checksum {
                path: path.to_path_buf(),
                expected: expected.to_string(),
                found,
            }
            .into());
        }
    }
    Ok(Blob::decode(&bytes, path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn header_layout_is_little_endian() {
        let blob = Blob::new(vec![2], BlobData::F32(vec![1.0, -2.0])).unwrap();
        let bytes = blob.encode();
        assert_eq!(&bytes[..4], b"WIOM");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 1);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &[0x00, 0x00, 0x80, 0x3f]);
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn complex_payload_is_interleaved() {
        let blob = Blob::new(vec![1, 1], BlobData::Complex64(vec![Complex32::new(1.5, -0.5)])).unwrap();
        let bytes = blob.encode();
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[24..28], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[28..32], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn typed_errors_on_damage() {
        let blob = Blob::new(vec![3, 2], BlobData::F64(vec![0.5; 6])).unwrap();
        let bytes = blob.encode();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Blob::decode(&bad, p()), Err(LoadError::BadMagic { .. })));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Blob::decode(&bad, p()), Err(LoadError::UnsupportedVersion { found: 9, .. })));

        let mut bad = bytes.clone();
        bad[6] = 7;
        assert!(matches!(Blob::decode(&bad, p()), Err(LoadError::UnknownDtype { found: 7, .. })));

        for cut in [0, 3, 7, 12, 30, bytes.len() - 1] {
            assert!(matches!(Blob::decode(&bytes[..cut], p()), Err(LoadError::Truncated { .. })), "cut {cut}");
        }

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Blob::decode(&long, p()), Err(LoadError::TrailingBytes { extra: 1, .. })));

        // Absurd dims must not allocate or overflow.
        let mut huge = bytes[..8 + 16].to_vec();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(Blob::decode(&huge, p()), Err(LoadError::Truncated { .. })));
    }

    #[test]
    fn rejects_inconsistent_dims() {
        assert!(Blob::new(vec![2, 2], BlobData::F32(vec![0.0; 3])).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(dims in proptest::collection::vec(0usize..5, 0..4), seed in any::<u32>(), tag in 0u8..3) {
            let n: usize = dims.iter().product();
            let f = |i: usize| (seed as f64 * 1e-3 + i as f64).sin();
            let data = match tag {
                0 => BlobData::F32((0..n).map(|i| f(i) as f32).collect()),
                1 => BlobData::Complex64((0..n).map(|i| Complex32::new(f(i) as f32, -f(i + 1) as f32)).collect()),
                _ => BlobData::F64((0..n).map(f).collect()),
            };
            let blob = Blob::new(dims, data).unwrap();
            let back = Blob::decode(&blob.encode(), p()).unwrap();
            prop_assert_eq!(back, blob);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = Blob::decode(&bytes, p());
        }
    }
}
