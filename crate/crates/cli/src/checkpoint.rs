//! Model checkpoint container.
//!
//! Layout (little-endian): magic `LSTM`, u32 version = 1, serialized
//! architecture (u32 kind, u32 n_i, u32 n_c, u32 n_r, u32 n_p, u32 n_o; zero
//! for absent dims), u32 record count, then per record u32 name length, the
//! UTF-8 name, u32 rows, u32 cols, rows*cols f64 values, and finally the u64
//! training step counter. Parameters are stored as 64-bit floats regardless
//! of the training precision (upcast on save), so evaluation is reproducible
//! across precision builds.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use lstmp::cells::{ArchKind, ArchSpec, ModelParams};
use lstmp::Scalar;
use lstmp::{Error, Result};

const MAGIC: [u8; 4] = *b"LSTM";
const VERSION: u32 = 1;

fn kind_code(kind: ArchKind) -> u32 {
    match kind {
        ArchKind::Rnn => 0,
        ArchKind::Lstm => 1,
        ArchKind::LstmRp => 2,
        ArchKind::LstmRpNp => 3,
    }
}

fn kind_from_code(code: u32) -> Result<ArchKind> {
    Ok(match code {
        0 => ArchKind::Rnn,
        1 => ArchKind::Lstm,
        2 => ArchKind::LstmRp,
        3 => ArchKind::LstmRpNp,
        _ => return Err(Error::InvalidArg(format!("unknown architecture code {code}"))),
    })
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    params: &ModelParams<S>,
    step: u64,
) -> Result<()> {
    let spec = params.spec();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [
        kind_code(spec.kind),
        spec.n_i as u32,
        spec.n_c as u32,
        spec.n_r.unwrap_or(0) as u32,
        spec.n_p.unwrap_or(0) as u32,
        spec.n_o as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let blocks = params.blocks();
    w.write_all(&(blocks.len() as u32).to_le_bytes())?;
    for b in blocks {
        w.write_all(&(b.name.len() as u32).to_le_bytes())?;
        w.write_all(b.name.as_bytes())?;
        w.write_all(&(b.rows as u32).to_le_bytes())?;
        w.write_all(&(b.cols as u32).to_le_bytes())?;
        for &v in b.data {
            w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
        }
    }
    w.write_all(&step.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

struct Rd<R> {
    inner: R,
}

impl<R: Read> Rd<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|_| Error::Truncated(what.to_string()))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }
}

/// Load a checkpoint, downcasting values to the requested scalar type.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(ModelParams<S>, u64)> {
    let mut r = Rd { inner: BufReader::new(File::open(path)?) };
    let magic: [u8; 4] = r.bytes("magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let kind = kind_from_code(r.u32("arch kind")?)?;
    let n_i = r.u32("n_i")? as usize;
    let n_c = r.u32("n_c")? as usize;
    let n_r = r.u32("n_r")? as usize;
    let n_p = r.u32("n_p")? as usize;
    let n_o = r.u32("n_o")? as usize;
    let spec = ArchSpec {
        kind,
        n_i,
        n_c,
        n_r: (n_r > 0).then_some(n_r),
        n_p: (n_p > 0).then_some(n_p),
        n_o,
    };
    spec.validate()?;
    let mut params = ModelParams::<S>::zeros(&spec)?;
    let n_records = r.u32("record count")? as usize;
    let expected = params.blocks().len();
    if n_records != expected {
        return Err(Error::InvalidArg(format!(
            "checkpoint has {n_records} records, architecture needs {expected}"
        )));
    }
    for idx in 0..n_records {
        let name_len = r.u32("record name length")? as usize;
        if name_len > 64 {
            return Err(Error::InvalidArg(format!("record name length {name_len} out of range")));
        }
        let mut name = vec![0u8; name_len];
        r.inner.read_exact(&mut name).map_err(|_| Error::Truncated("record name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::InvalidArg("record name is not UTF-8".into()))?;
        let rows = r.u32("record rows")? as usize;
        let cols = r.u32("record cols")? as usize;
        {
            let mut blocks = params.blocks_mut();
            let blk = &mut blocks[idx];
            if blk.name != name {
                return Err(Error::UnknownRecord(name));
            }
            if blk.rows != rows || blk.cols != cols {
                return Err(Error::Shape {
                    op: "load_checkpoint",
                    detail: format!(
                        "record {name} is {rows}x{cols} but architecture needs {}x{}",
                        blk.rows, blk.cols
                    ),
                });
            }
            for v in blk.data.iter_mut() {
                let raw: [u8; 8] = r.bytes("record data")?;
                *v = S::from_config(f64::from_le_bytes(raw));
            }
        }
    }
    let step = u64::from_le_bytes(r.bytes("step counter")?);
    Ok((params, step))
}
