//! Binary little-endian PLY with properties `x y z` (double), `red green blue` (uchar),
//! `label instance` (int).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};

use super::PointCloud;

const REQUIRED: [&str; 8] = ["x", "y", "z", "red", "green", "blue", "label", "instance"];

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\ncomment scene_id {}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         property int label\nproperty int instance\nend_header\n",
        cloud.scene_id,
        cloud.len()
    )?;
    for i in 0..cloud.len() {
        for v in cloud.positions[i] {
            w.write_f64::<LittleEndian>(v)?;
        }
        for c in cloud.colors[i] {
            w.write_u8((c.clamp(0.0, 1.0) * 255.0).round() as u8)?;
        }
        w.write_i32::<LittleEndian>(cloud.labels[i])?;
        w.write_i32::<LittleEndian>(cloud.instance_ids[i])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::Format(format!("unknown PLY type '{other}'"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::U8 => f64::from(b[0]),
            Scalar::I16 => f64::from(LittleEndian::read_i16(b)),
            Scalar::U16 => f64::from(LittleEndian::read_u16(b)),
            Scalar::I32 => f64::from(LittleEndian::read_i32(b)),
            Scalar::U32 => f64::from(LittleEndian::read_u32(b)),
            Scalar::F32 => f64::from(LittleEndian::read_f32(b)),
            Scalar::F64 => LittleEndian::read_f64(b),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
    has_list: bool,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<File>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("unexpected end of PLY header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut r)? != "ply" {
        return Err(Error::Format("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut format_ok = false;
    loop {
        let l = next_line(&mut r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => {
                return Err(Error::Format(format!("unsupported PLY format '{other}'")))
            }
            ["comment", "scene_id", id] => scene_id = id.to_string(),
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Format(format!("bad element count '{count}'")))?,
                props: Vec::new(),
                has_list: false,
            }),
            ["property", "list", ..] => {
                elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("property before element".into()))?
                    .has_list = true;
            }
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("property before element".into()))?
                .props
                .push((name.to_string(), Scalar::parse(ty)?)),
            _ => return Err(Error::Format(format!("malformed PLY header line '{l}'"))),
        }
    }
    if !format_ok {
        return Err(Error::Format("PLY header has no binary_little_endian format line".into()));
    }
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    for e in &elements[..=vi] {
        if e.has_list {
            return Err(Error::Format(format!(
                "list properties in element '{}' are not supported",
                e.name
            )));
        }
    }
    let vertex = &elements[vi];
    let mut slots = [(0usize, Scalar::U8); 8];
    for (slot, name) in slots.iter_mut().zip(REQUIRED) {
        let mut off = 0;
        let mut found = None;
        for (pn, ty) in &vertex.props {
            if pn == name {
                found = Some((off, *ty));
            }
            off += ty.size();
        }
        *slot = found.ok_or_else(|| Error::Format(format!("missing required property '{name}'")))?;
    }
    for e in &elements[..vi] {
        let stride: usize = e.props.iter().map(|(_, t)| t.size()).sum();
        let mut skip = vec![0u8; stride * e.count];
        r.read_exact(&mut skip)
            .map_err(|_| Error::Format(format!("truncated element '{}'", e.name)))?;
    }
    let stride: usize = vertex.props.iter().map(|(_, t)| t.size()).sum();
    let mut buf = vec![0u8; stride * vertex.count];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated vertex data".into()))?;

    let n = vertex.count;
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(n),
        colors: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        instance_ids: Vec::with_capacity(n),
        scene_id,
    };
    for row in buf.chunks_exact(stride) {
        let get = |i: usize| slots[i].1.read(&row[slots[i].0..]);
        cloud.positions.push([get(0), get(1), get(2)]);
        let color_scale = |i: usize| match slots[i].1 {
            Scalar::F32 | Scalar::F64 => get(i),
            Scalar::U8 => get(i) / 255.0,
            Scalar::U16 => get(i) / 65535.0,
            _ => get(i) / 255.0,
        };
        cloud.colors.push([color_scale(3), color_scale(4), color_scale(5)]);
        cloud.labels.push(get(6) as i32);
        cloud.instance_ids.push(get(7) as i32);
    }
    Ok(cloud)
}
