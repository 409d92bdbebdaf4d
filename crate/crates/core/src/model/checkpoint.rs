//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `b"HOLOCKPT"`, `u32` version, `u64` config length + JSON config bytes,
//! `u64` optimizer step, `u64` tensor count, then per tensor:
//! `u32` name length + UTF-8 name, `u8` real-only flag, `u64` rows,
//! `u64` cols, and `rows·cols` `(re, im)` pairs of `f64`.

use std::path::Path;

use super::{HoloModel, ModelConfig};
use crate::autodiff::ParamStore;
use crate::ctensor::{ComplexMatrix, C64};
use crate::error::{HoloError, Result};

const MAGIC: &[u8; 8] = b"HOLOCKPT";
const VERSION: u32 = 1;

pub fn write_checkpoint(model: &HoloModel) -> Result<Vec<u8>> {
    let cfg = serde_json::to_vec(&model.cfg).map_err(|e| HoloError::Format(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&model.store.step().to_le_bytes());
    out.extend_from_slice(&(model.store.len() as u64).to_le_bytes());
    for p in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.real_only as u8);
        out.extend_from_slice(&(p.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(p.value.cols() as u64).to_le_bytes());
        for z in p.value.data() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| HoloError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| HoloError::Format(format!("implausible length {n}")))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<HoloModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(HoloError::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(HoloError::Format(format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = r.len()?;
    let cfg: ModelConfig =
        serde_json::from_slice(r.take(cfg_len)?).map_err(|e| HoloError::Format(format!("config: {e}")))?;
    let step = r.u64()?;
    let count = r.len()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| HoloError::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let real_only = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(HoloError::Format(format!("bad real-only flag {b}"))),
        };
        let rows = r.len()?;
        let cols = r.len()?;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(16) <= bytes.len())
            .ok_or_else(|| HoloError::Format(format!("tensor `{name}` too large")))?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = r.f64()?;
            let im = r.f64()?;
            data.push(C64::new(re, im));
        }
        store.insert(name, ComplexMatrix::new(rows, cols, data)?, real_only)?;
    }
    if r.pos != bytes.len() {
        return Err(HoloError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    store.step = step;
    HoloModel::from_store(cfg, store)
}

pub fn save_checkpoint(model: &HoloModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HoloModel> {
    read_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskKind;

    fn model() -> HoloModel {
        let cfg = ModelConfig {
            seq_len: 4,
            d_in: 2,
            d_model: 4,
            heads: 2,
            d_ff: 4,
            task: TaskKind::Regression { d_out: 2, horizon: 3 },
            ..ModelConfig::default()
        };
        HoloModel::new(cfg, 3).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = write_checkpoint(&m).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.cfg, m.cfg);
        for (a, b) in m.store.iter().zip(back.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.store.len(), m.store.len());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = write_checkpoint(&model()).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(read_checkpoint(&extra).is_err());
    }
}
