//! EMVOL v1 container.
//!
//! Little-endian layout:
//!
//! | bytes  | field                          |
//! |--------|--------------------------------|
//! | 0..6   | magic `EMVOL1`                 |
//! | 6      | dtype (0 = u8, 1 = f32)        |
//! | 7..19  | `u32` dims nx, ny, nz          |
//! | 19..31 | `f32` spacing sx, sy, sz (nm)  |
//! | 31..   | voxels, x fastest, z slowest   |

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::volume::{voxel_count, AnyVolume, Dtype, Volume, VolumeError, Voxel};

pub const MAGIC: &[u8; 6] = b"EMVOL1";
pub const HEADER_LEN: usize = 31;

#[derive(Debug, Error)]
pub enum EmvolError {
    #[error("missing EMVOL1 magic")]
    BadMagic,
    #[error("file holds {got} bytes but header requires {expected}")]
    TruncatedFile { expected: u64, got: u64 },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("dims {0:?} are zero or overflow")]
    DimOverflow([u32; 3]),
    #[error("{extra} bytes follow the voxel payload")]
    TrailingBytes { extra: u64 },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("volume dims {0:?} do not fit the u32 header fields")]
    DimsTooLarge([usize; 3]),
    #[error("expected a {expected} volume, file holds {found}")]
    WrongDtype { expected: Dtype, found: Dtype },
    #[error("I/O failure: {0}")]
    Io(#[from] io::Error),
}

impl EmvolError {
    pub fn name(&self) -> &'static str {
        match self {
            EmvolError::BadMagic => "BadMagic",
            EmvolError::TruncatedFile { .. } => "TruncatedFile",
            EmvolError::UnknownDtype(_) => "UnknownDtype",
            EmvolError::DimOverflow(_) => "DimOverflow",
            EmvolError::TrailingBytes { .. } => "TrailingBytes",
            EmvolError::Volume(e) => e.name(),
            EmvolError::DimsTooLarge(_) => "DimOverflow",
            EmvolError::WrongDtype { .. } => "WrongDtype",
            EmvolError::Io(_) => "IoFailure",
        }
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte field"))
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte field"))
}

/// Serializes a volume into EMVOL bytes.
pub fn encode<T: Voxel>(volume: &Volume<T>) -> Result<Vec<u8>, EmvolError> {
    let dims = volume.dims();
    let mut header_dims = [0u32; 3];
    for (out, &d) in header_dims.iter_mut().zip(&dims) {
        *out = u32::try_from(d).map_err(|_| EmvolError::DimsTooLarge(dims))?;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + volume.len() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    for d in header_dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for s in volume.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    T::extend_le_bytes(volume.data(), &mut out);
    Ok(out)
}

/// Parses EMVOL bytes.
pub fn decode(bytes: &[u8]) -> Result<AnyVolume, EmvolError> {
    let head = bytes.len().min(MAGIC.len());
    if bytes[..head] != MAGIC[..head] {
        return Err(EmvolError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmvolError::TruncatedFile {
            expected: HEADER_LEN as u64,
            got: bytes.len() as u64,
        });
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or(EmvolError::UnknownDtype(bytes[6]))?;
    let raw_dims = [u32_at(bytes, 7), u32_at(bytes, 11), u32_at(bytes, 15)];
    let spacing = [f32_at(bytes, 19), f32_at(bytes, 23), f32_at(bytes, 27)];
    let dims = raw_dims.map(|d| d as usize);
    let count = voxel_count(dims).map_err(|_| EmvolError::DimOverflow(raw_dims))?;
    let payload = (count as u64)
        .checked_mul(dtype.size() as u64)
        .ok_or(EmvolError::DimOverflow(raw_dims))?;
    let expected = payload + HEADER_LEN as u64;
    let got = bytes.len() as u64;
    if got < expected {
        return Err(EmvolError::TruncatedFile { expected, got });
    }
    if got > expected {
        return Err(EmvolError::TrailingBytes {
            extra: got - expected,
        });
    }
    let body = &bytes[HEADER_LEN..];
    Ok(match dtype {
        Dtype::U8 => AnyVolume::U8(Volume::new(dims, spacing, <u8 as Voxel>::from_le_bytes(body))?),
        Dtype::F32 => AnyVolume::F32(Volume::new(dims, spacing, <f32 as Voxel>::from_le_bytes(body))?),
    })
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<AnyVolume, EmvolError> {
    decode(&fs::read(path)?)
}

pub fn load_u8(path: impl AsRef<Path>) -> Result<Volume<u8>, EmvolError> {
    match load_volume(path)? {
        AnyVolume::U8(v) => Ok(v),
        AnyVolume::F32(_) => Err(EmvolError::WrongDtype {
            expected: Dtype::U8,
            found: Dtype::F32,
        }),
    }
}

pub fn load_f32(path: impl AsRef<Path>) -> Result<Volume<f32>, EmvolError> {
    match load_volume(path)? {
        AnyVolume::F32(v) => Ok(v),
        AnyVolume::U8(_) => Err(EmvolError::WrongDtype {
            expected: Dtype::F32,
            found: Dtype::U8,
        }),
    }
}

/// Writes `bytes` to `path` through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save_volume<T: Voxel>(volume: &Volume<T>, path: impl AsRef<Path>) -> Result<(), EmvolError> {
    let bytes = encode(volume)?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(())
}

pub fn save_any(volume: &AnyVolume, path: impl AsRef<Path>) -> Result<(), EmvolError> {
    match volume {
        AnyVolume::U8(v) => save_volume(v, path),
        AnyVolume::F32(v) => save_volume(v, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::UNIT_SPACING;

    #[test]
    fn single_voxel_file_is_32_bytes() {
        let v = Volume::new([1, 1, 1], UNIT_SPACING, vec![7u8]).unwrap();
        let bytes = encode(&v).unwrap();
        // 6 magic + 1 dtype + 12 dims + 12 spacing + 1 voxel
        assert_eq!(bytes.len(), 6 + 1 + 3 * 4 + 3 * 4 + 1);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..6], b"EMVOL1");
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[31], 7);
    }

    #[test]
    fn f32_payload_is_little_endian() {
        let v = Volume::new([2, 1, 1], [3.0, 3.0, 30.0], vec![0.5f32, 1.0]).unwrap();
        let bytes = encode(&v).unwrap();
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..11], &2u32.to_le_bytes());
        assert_eq!(&bytes[27..31], &30.0f32.to_le_bytes());
        assert_eq!(&bytes[31..35], &0.5f32.to_le_bytes());
        assert_eq!(decode(&bytes).unwrap(), AnyVolume::F32(v));
    }

    #[test]
    fn round_trip_u8() {
        let v = Volume::from_fn([4, 3, 2], |x, y, z| (x * 7 + y * 3 + z) as u8 % 2).unwrap();
        let bytes = encode(&v).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(back, AnyVolume::U8(v.clone()));
        assert_eq!(encode(&v).unwrap(), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&Volume::<u8>::filled([1, 1, 1], 0).unwrap()).unwrap();
        bytes[..6].copy_from_slice(b"XXXXXX");
        assert!(matches!(decode(&bytes), Err(EmvolError::BadMagic)));
        assert!(matches!(decode(b"EMX"), Err(EmvolError::BadMagic)));
        // A cut inside the magic is a short file, not a foreign one.
        assert!(matches!(decode(b"EMV"), Err(EmvolError::TruncatedFile { .. })));
    }

    #[test]
    fn truncated_body() {
        let v = Volume::<f32>::filled([10, 10, 10], 0.25).unwrap();
        let bytes = encode(&v).unwrap();
        let cut = &bytes[..HEADER_LEN + 3999];
        match decode(cut) {
            Err(EmvolError::TruncatedFile { expected, got }) => {
                assert_eq!(expected, 4031);
                assert_eq!(got, 4030);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(decode(&bytes[..20]).unwrap_err().name(), "TruncatedFile");
    }

    #[test]
    fn unknown_dtype_and_zero_dim() {
        let mut bytes = encode(&Volume::<u8>::filled([1, 1, 1], 0).unwrap()).unwrap();
        bytes[6] = 9;
        assert!(matches!(decode(&bytes), Err(EmvolError::UnknownDtype(9))));
        bytes[6] = 0;
        bytes[7..11].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(EmvolError::DimOverflow(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&Volume::<u8>::filled([1, 1, 1], 0).unwrap()).unwrap();
        bytes.push(0);
        assert!(matches!(
            decode(&bytes),
            Err(EmvolError::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.emvol");
        let v = Volume::from_fn([4, 3, 2], |x, y, z| (x + y + z) as u8).unwrap();
        save_volume(&v, &path).unwrap();
        assert_eq!(load_u8(&path).unwrap(), v);
        assert_eq!(load_f32(&path).unwrap_err().name(), "WrongDtype");
        let missing = load_volume(dir.path().join("nope.emvol")).unwrap_err();
        assert_eq!(missing.name(), "IoFailure");
    }
}
