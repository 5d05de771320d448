//! SPDM binary container for depth and semantic grids.
//!
//! Layout: 16-byte header — magic `SPDM`, u32 LE width, u32 LE height,
//! u32 LE channel code (1 = depth as f32, 2 = class ids as u16) — followed by
//! the row-major payload.

use crate::error::{Error, Result};
use crate::pointcloud::{ClassTable, DepthMap, SemanticMap};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SPDM";
const CHANNEL_DEPTH: u32 = 1;
const CHANNEL_CLASS: u32 = 2;

/// Contents of an SPDM file.
#[derive(Debug, Clone, PartialEq)]
pub enum SpdmContent {
    Depth(DepthMap),
    Classes(SemanticMap),
}

/// Writes a depth map. Invalid pixels are stored as 0.0 and read back as
/// invalid, so the validity mask survives the roundtrip while the original
/// values behind it do not.
pub fn write_depth<W: Write>(mut w: W, depth: &DepthMap) -> Result<()> {
    write_header(&mut w, depth.width, depth.height, CHANNEL_DEPTH)?;
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = if depth.is_valid(u, v) {
                depth.depth_at(u, v)
            } else {
                0.0
            };
            w.write_all(&d.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Writes a semantic class grid.
pub fn write_classes<W: Write>(mut w: W, sem: &SemanticMap) -> Result<()> {
    write_header(&mut w, sem.width, sem.height, CHANNEL_CLASS)?;
    for c in sem.raw_classes() {
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

fn write_header<W: Write>(w: &mut W, width: u32, height: u32, channel: u32) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&width.to_le_bytes())?;
    w.write_all(&height.to_le_bytes())?;
    w.write_all(&channel.to_le_bytes())?;
    Ok(())
}

/// Reads an SPDM container from a reader.
pub fn read<R: Read>(mut r: R, origin: &Path) -> Result<SpdmContent> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|_| Error::MalformedFile {
        path: origin.to_path_buf(),
        detail: "file shorter than the 16-byte header".into(),
        offset: 0,
    })?;
    if &header[0..4] != MAGIC {
        return Err(Error::MalformedFile {
            path: origin.to_path_buf(),
            detail: "bad magic, expected SPDM".into(),
            offset: 0,
        });
    }
    let width = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let channel = u32::from_le_bytes(header[12..16].try_into().unwrap());
    let n = width as usize * height as usize;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    match channel {
        CHANNEL_DEPTH => {
            if payload.len() != n * 4 {
                return Err(Error::MalformedFile {
                    path: origin.to_path_buf(),
                    detail: format!("depth payload is {} bytes, expected {}", payload.len(), n * 4),
                    offset: 16,
                });
            }
            let depth: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Ok(SpdmContent::Depth(DepthMap::new(width, height, depth)?))
        }
        CHANNEL_CLASS => {
            if payload.len() != n * 2 {
                return Err(Error::MalformedFile {
                    path: origin.to_path_buf(),
                    detail: format!("class payload is {} bytes, expected {}", payload.len(), n * 2),
                    offset: 16,
                });
            }
            let classes: Vec<u16> = payload
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let n_classes = classes.iter().copied().max().unwrap_or(0) as usize + 1;
            Ok(SpdmContent::Classes(SemanticMap::new(
                width,
                height,
                classes,
                ClassTable::unnamed(n_classes),
            )?))
        }
        other => Err(Error::MalformedFile {
            path: origin.to_path_buf(),
            detail: format!("unknown channel code {other}"),
            offset: 12,
        }),
    }
}

/// Reads an SPDM file expected to hold a depth map.
pub fn read_depth_file(path: &Path) -> Result<DepthMap> {
    match read(std::fs::File::open(path)?, path)? {
        SpdmContent::Depth(d) => Ok(d),
        SpdmContent::Classes(_) => Err(Error::MalformedFile {
            path: path.to_path_buf(),
            detail: "expected a depth channel, found classes".into(),
            offset: 12,
        }),
    }
}

/// Reads an SPDM file expected to hold a semantic class grid.
pub fn read_classes_file(path: &Path) -> Result<SemanticMap> {
    match read(std::fs::File::open(path)?, path)? {
        SpdmContent::Classes(s) => Ok(s),
        SpdmContent::Depth(_) => Err(Error::MalformedFile {
            path: path.to_path_buf(),
            detail: "expected a class channel, found depth".into(),
            offset: 12,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_roundtrip_preserves_validity() {
        let mut depth = DepthMap::new(3, 2, vec![1.0, 2.0, 0.5, 4.0, 5.0, 6.0]).unwrap();
        depth.invalidate(1, 0);
        let mut buf = Vec::new();
        write_depth(&mut buf, &depth).unwrap();
        assert_eq!(&buf[0..4], b"SPDM");
        assert_eq!(buf.len(), 16 + 6 * 4);
        match read(buf.as_slice(), Path::new("mem")).unwrap() {
            SpdmContent::Depth(d) => {
                assert!(!d.is_valid(1, 0));
                assert!(d.is_valid(0, 0));
                assert_eq!(d.depth_at(2, 1), 6.0);
            }
            _ => panic!("expected depth"),
        }
    }

    #[test]
    fn class_roundtrip() {
        let sem = SemanticMap::new(2, 2, vec![0, 1, 2, 1], ClassTable::unnamed(3)).unwrap();
        let mut buf = Vec::new();
        write_classes(&mut buf, &sem).unwrap();
        match read(buf.as_slice(), Path::new("mem")).unwrap() {
            SpdmContent::Classes(s) => assert_eq!(s.raw_classes(), sem.raw_classes()),
            _ => panic!("expected classes"),
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let err = read(&b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0"[..], Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
        let err = read(&b"SPDM"[..], Path::new("m")).unwrap_err();
        assert!(err.to_string().contains("shorter"));
    }
}
