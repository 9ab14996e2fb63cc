//! Per-point hierarchical feature dumps.
//!
//! Layout, all little-endian: `"MSMF"`, u32 version (1), u64 point count N, u32 level count L,
//! L × u32 channel widths, N·ΣC f32 payload (row-major), N × i32 labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"MSMF";
pub const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    pub channels: Vec<u32>,
    pub num_points: u64,
    pub payload: Vec<f32>,
    pub labels: Vec<i32>,
}

impl FeatureDump {
    pub fn new(channels: Vec<u32>, payload: Vec<f32>, labels: Vec<i32>) -> Result<Self> {
        let dump = Self {
            num_points: labels.len() as u64,
            channels,
            payload,
            labels,
        };
        dump.check()?;
        Ok(dump)
    }

    pub fn width(&self) -> usize {
        self.channels.iter().map(|&c| c as usize).sum()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.payload[i * w..(i + 1) * w]
    }

    fn check(&self) -> Result<()> {
        let n = self.num_points as usize;
        if self.labels.len() != n {
            return Err(Error::Format(format!("{} labels for {n} points", self.labels.len())));
        }
        if self.payload.len() != n * self.width() {
            return Err(Error::Format(format!(
                "payload has {} values, expected {n} × {}",
                self.payload.len(),
                self.width()
            )));
        }
        Ok(())
    }
}

pub fn write_feature_dump(dump: &FeatureDump, path: impl AsRef<Path>) -> Result<()> {
    dump.check()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DUMP_MAGIC)?;
    w.write_u32::<LittleEndian>(DUMP_VERSION)?;
    w.write_u64::<LittleEndian>(dump.num_points)?;
    w.write_u32::<LittleEndian>(dump.channels.len() as u32)?;
    for &c in &dump.channels {
        w.write_u32::<LittleEndian>(c)?;
    }
    for &v in &dump.payload {
        w.write_f32::<LittleEndian>(v)?;
    }
    for &l in &dump.labels {
        w.write_i32::<LittleEndian>(l)?;
    }
    w.flush()?;
    Ok(())
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("feature dump is truncated".into())
}

pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<FeatureDump> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported dump version {version}")));
    }
    let n = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let levels = r.read_u32::<LittleEndian>().map_err(truncated)?;
    let mut channels = Vec::with_capacity(levels as usize);
    for _ in 0..levels {
        channels.push(r.read_u32::<LittleEndian>().map_err(truncated)?);
    }
    let width: u64 = channels.iter().map(|&c| u64::from(c)).sum();
    let header = 4 + 4 + 8 + 4 + 4 * u64::from(levels);
    let expected = header + n * width * 4 + n * 4;
    if len != expected {
        return Err(Error::Format(format!(
            "dump is {len} bytes, header implies {expected}"
        )));
    }
    let mut payload = vec![0f32; (n * width) as usize];
    r.read_f32_into::<LittleEndian>(&mut payload).map_err(truncated)?;
    let mut labels = vec![0i32; n as usize];
    r.read_i32_into::<LittleEndian>(&mut labels).map_err(truncated)?;
    Ok(FeatureDump {
        channels,
        num_points: n,
        payload,
        labels,
    })
}
