//! Flat binary parameter files.
//!
//! ```text
//! magic    8 bytes  "HTPARAMS"
//! version  u32 LE   1
//! count    u32 LE   number of tensors
//! per tensor:
//!   name_len u32 LE, name (UTF-8)
//!   ndim     u32 LE, dims u64 LE × ndim
//!   values   f64 LE × product(dims)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Params, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HTPARAMS";
pub const VERSION: u32 = 1;

pub fn write_params(params: &Params, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.tensors.len() as u32).to_le_bytes())?;
    for t in &params.tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::ParamFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_params(mut r: impl Read) -> Result<Params> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::ParamFormat(e.to_string()))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::ParamFormat("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::ParamFormat(format!("unsupported version {version}")));
    }
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|e| Error::ParamFormat(e.to_string()))?
            .to_owned();
        let ndim = c.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::ParamFormat(format!("{name}: shape overflow")))?;
        let bytes = c.take(n.checked_mul(8).ok_or_else(|| Error::ParamFormat("size overflow".into()))?)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if c.pos != buf.len() {
        return Err(Error::ParamFormat(format!(
            "{} trailing bytes",
            buf.len() - c.pos
        )));
    }
    Ok(Params { tensors })
}

pub fn save_params(params: &Params, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_params(params, &mut buf).expect("write to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Params> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(f)
}

#[cfg(test)]
mod tests {
    use super::super::ModelConfig;
    use super::*;

    #[test]
    fn header_layout() {
        let p = Params {
            tensors: vec![Tensor {
                name: "ab".into(),
                shape: vec![2],
                data: vec![1.0, -2.5],
            }],
        };
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"HTPARAMS");
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[1, 0, 0, 0]);
        assert_eq!(&buf[16..20], &[2, 0, 0, 0]);
        assert_eq!(&buf[20..22], b"ab");
        assert_eq!(&buf[22..26], &[1, 0, 0, 0]);
        assert_eq!(&buf[26..34], &2u64.to_le_bytes());
        assert_eq!(&buf[34..42], &1.0f64.to_le_bytes());
        assert_eq!(buf.len(), 50);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let p = Params::init(&ModelConfig::default()).unwrap();
        save_params(&p, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);
    }

    #[test]
    fn corrupt_inputs() {
        let p = Params::init(&ModelConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        assert!(read_params(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_params(&extra[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_params(&bad[..]).is_err());
    }
}
