//! Checkpoint container.
//!
//! Layout, all little-endian: magic `CKPT`, version u32, then one record per
//! tensor: name length u32, name bytes, rank u32, dims u32×rank, f32 payload.
//! Records run to end of file. Momentum buffers are stored as ordinary
//! records named `<parameter>.velocity` so a resumed run continues bitwise.

use super::optim::{ParamGroup, Parameter};
use super::tensor::Tensor;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &[Parameter<f32>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(werr)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(werr)?;
    for p in params {
        write_record(&mut w, &p.name, &p.value).map_err(werr)?;
        write_record(&mut w, &format!("{}.velocity", p.name), &p.velocity).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

fn write_record(w: &mut impl Write, name: &str, t: &Tensor<f32>) -> std::io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// A raw checkpoint: named tensors in file order.
pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
        offset: 0,
        path,
    };
    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(r.fail("bad magic, expected CKPT"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(&format!("unsupported version {}", version)));
    }
    let mut out = Vec::new();
    loop {
        let name_len = match r.u32_eof("record name length")? {
            Some(v) => v as usize,
            None => break,
        };
        let name = String::from_utf8(r.bytes(name_len, "record name")?)
            .map_err(|_| r.fail("record name is not valid UTF-8"))?;
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f32::from_le_bytes(
                r.bytes(4, "tensor payload")?.try_into().unwrap(),
            ));
        }
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok(out)
}

/// Load a checkpoint into an existing parameter set, matching by name and
/// shape; value and velocity records must both be present.
pub fn load_checkpoint(path: &Path, params: &mut [Parameter<f32>]) -> Result<()> {
    let records = read_checkpoint(path)?;
    let find = |name: &str| -> Result<&Tensor<f32>> {
        records
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("missing record {}", name),
                offset: 0,
            })
    };
    for p in params {
        let value = find(&p.name)?;
        let velocity = find(&format!("{}.velocity", p.name))?;
        if value.shape() != p.value.shape() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!(
                    "shape mismatch for {}: file {:?}, model {:?}",
                    p.name,
                    value.shape(),
                    p.value.shape()
                ),
                offset: 0,
            });
        }
        p.value = value.clone();
        p.velocity = velocity.clone();
    }
    Ok(())
}

/// The learning-rate group a stored tensor belongs to, derived from its name.
pub fn group_for_name(name: &str) -> ParamGroup {
    if name.starts_with("motion.") || name.starts_with("appearance.") {
        ParamGroup::Visual
    } else {
        ParamGroup::Separation
    }
}

struct Reader<'p> {
    inner: BufReader<File>,
    offset: u64,
    path: &'p Path,
}

impl Reader<'_> {
    fn fail(&self, reason: &str) -> Error {
        Error::Checkpoint {
            path: self.path.to_path_buf(),
            reason: reason.into(),
            offset: self.offset,
        }
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| self.fail(&format!("truncated while reading {}", what)))?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    /// Reads a u32 or reports clean end-of-file at a record boundary.
    fn u32_eof(&mut self, what: &str) -> Result<Option<u32>> {
        let mut buf = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            let n = self
                .inner
                .read(&mut buf[filled..])
                .map_err(|_| self.fail(&format!("read error in {}", what)))?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(self.fail(&format!("truncated while reading {}", what)));
            }
            filled += n;
            self.offset += n as u64;
        }
        Ok(Some(u32::from_le_bytes(buf)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<Parameter<f32>> {
        let mut a = Parameter::new(
            "unet.down0.weight",
            ParamGroup::Separation,
            Tensor::from_f64(&[2, 2], &[1.0, -2.0, 0.5, 3.25]).unwrap(),
        );
        a.velocity = Tensor::from_f64(&[2, 2], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = Parameter::new(
            "appearance.c0.bias",
            ParamGroup::Visual,
            Tensor::from_f64(&[3], &[0.0, 7.0, -1.0]).unwrap(),
        );
        vec![a, b]
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let saved = params();
        save_checkpoint(&path, &saved).unwrap();
        let mut loaded = params();
        for p in &mut loaded {
            p.value = Tensor::zeros(p.value.shape());
            p.velocity = Tensor::zeros(p.velocity.shape());
        }
        load_checkpoint(&path, &mut loaded).unwrap();
        for (a, b) in saved.iter().zip(&loaded) {
            assert_eq!(a.value.data(), b.value.data());
            assert_eq!(a.velocity.data(), b.velocity.data());
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(Error::Checkpoint { .. })
        ));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        save_checkpoint(&path, &params()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match read_checkpoint(&path) {
            Err(Error::Checkpoint { offset, .. }) => assert!(offset > 0),
            other => panic!("expected truncation error, got {:?}", other.map(|_| ())),
        }
    }
}
