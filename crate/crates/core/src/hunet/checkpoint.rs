//! Versioned binary checkpoints: model configuration and free-form metadata as JSON, followed
//! by named sections of named f64 tensors.
//!
//! Layout (little endian): `"MSMC"`, u32 version, u32 json length, json, u32 section count,
//! then per section a name and u32 tensor count, and per tensor a name, u32 rank, u64 extents
//! and the f64 payload. Names are u32 length + UTF-8 bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{ParamSet, Tensor};

use super::HUNetConfig;

const MAGIC: &[u8; 4] = b"MSMC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: HUNetConfig,
    pub meta: serde_json::Value,
    pub sections: BTreeMap<String, ParamSet<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: HUNetConfig,
    meta: serde_json::Value,
}

fn ckpt_err(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

fn write_name(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_name(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LE>().map_err(ckpt_err)? as usize;
    if n > 1 << 20 {
        return Err(ckpt_err("implausible name length"));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(ckpt_err)?;
    String::from_utf8(buf).map_err(ckpt_err)
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        let header = serde_json::to_vec(&Header {
            model: ckpt.config.clone(),
            meta: ckpt.meta.clone(),
        })
        .map_err(ckpt_err)?;
        w.write_u32::<LE>(header.len() as u32)?;
        w.write_all(&header)?;
        w.write_u32::<LE>(ckpt.sections.len() as u32)?;
        for (name, ps) in &ckpt.sections {
            write_name(&mut w, name)?;
            w.write_u32::<LE>(ps.len() as u32)?;
            for (tname, t) in ps.iter() {
                write_name(&mut w, tname)?;
                w.write_u32::<LE>(t.shape().len() as u32)?;
                for &d in t.shape() {
                    w.write_u64::<LE>(d as u64)?;
                }
                for &v in t.data() {
                    w.write_f64::<LE>(v)?;
                }
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint. With `expected`, a differing stored model configuration is refused.
pub fn load_checkpoint(path: &Path, expected: Option<&HUNetConfig>) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| ckpt_err(format!("{}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(ckpt_err)?;
    if &magic != MAGIC {
        return Err(ckpt_err("not a checkpoint file (bad magic)"));
    }
    let version = r.read_u32::<LE>().map_err(ckpt_err)?;
    if version != VERSION {
        return Err(ckpt_err(format!("unsupported checkpoint version {version}")));
    }
    let hlen = r.read_u32::<LE>().map_err(ckpt_err)? as usize;
    let mut hbuf = vec![0u8; hlen];
    r.read_exact(&mut hbuf).map_err(ckpt_err)?;
    let header: Header = serde_json::from_slice(&hbuf).map_err(ckpt_err)?;
    if let Some(want) = expected {
        if *want != header.model {
            return Err(ckpt_err("stored model configuration differs from the requested one"));
        }
    }
    let nsec = r.read_u32::<LE>().map_err(ckpt_err)?;
    let mut sections = BTreeMap::new();
    for _ in 0..nsec {
        let name = read_name(&mut r)?;
        let count = r.read_u32::<LE>().map_err(ckpt_err)?;
        let mut ps = ParamSet::new();
        for _ in 0..count {
            let tname = read_name(&mut r)?;
            let rank = r.read_u32::<LE>().map_err(ckpt_err)? as usize;
            if rank > 8 {
                return Err(ckpt_err(format!("tensor '{tname}' has rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.read_u64::<LE>().map(|d| d as usize).map_err(ckpt_err))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let mut data = vec![0.0; numel];
            r.read_f64_into::<LE>(&mut data).map_err(ckpt_err)?;
            ps.insert(tname, Tensor::new(shape, data).map_err(ckpt_err)?);
        }
        sections.insert(name, ps);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(ckpt_err)? != 0 {
        return Err(ckpt_err("trailing bytes after last section"));
    }
    Ok(Checkpoint {
        config: header.model,
        meta: header.meta,
        sections,
    })
}
