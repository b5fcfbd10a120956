//! Versioned binary checkpoints: named f64 parameter blocks, little-endian.
//!
//! Layout: magic "OFAC", format version u32, then per block a u16 name
//! length, the UTF-8 name, u32 rows, u32 cols, and rows*cols f64 values
//! row-major. Blocks repeat until end of file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OFAC";
pub const FORMAT_VERSION: u32 = 1;

pub fn save(path: &Path, blocks: &[(String, Matrix)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for (name, m) in blocks {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidArg(format!("block name too long: {name}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(m.rows() as u32).to_le_bytes())?;
        w.write_all(&(m.cols() as u32).to_le_bytes())?;
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Matrix)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    let version = read_u32(&mut r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut blocks = Vec::new();
    loop {
        let mut len_buf = [0u8; 2];
        match r.read(&mut len_buf)? {
            0 => break,
            1 => {
                let n = r.read(&mut len_buf[1..])?;
                if n == 0 {
                    return Err(Error::Truncated("block name length".into()));
                }
            }
            _ => {}
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, "block name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::Truncated("block name is not UTF-8".into()))?;
        let rows = read_u32(&mut r, "rows")? as usize;
        let cols = read_u32(&mut r, "cols")? as usize;
        let mut data = vec![0.0f64; rows * cols];
        for v in &mut data {
            let mut buf = [0u8; 8];
            read_exact(&mut r, &mut buf, "block data")?;
            *v = f64::from_le_bytes(buf);
        }
        blocks.push((name, Matrix::from_vec(rows, cols, data)?));
    }
    Ok(blocks)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Truncated(what.to_string()))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ofac");
        let blocks = vec![
            ("w".to_string(), Matrix::from_fn(3, 2, |r, c| (r + c) as f64 * 0.5)),
            ("b".to_string(), Matrix::from_fn(1, 2, |_, c| -(c as f64))),
        ];
        save(&path, &blocks).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded, blocks);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ofac");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(load(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn bad_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.ofac");
        let mut bytes = MAGIC.to_vec();
        bytes.extend(9u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load(&path), Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ofac");
        let blocks = vec![("w".to_string(), Matrix::from_fn(4, 4, |r, c| (r * c) as f64))];
        save(&path, &blocks).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 3]).unwrap();
        assert!(matches!(load(&path), Err(Error::Truncated(_))));
    }
}
