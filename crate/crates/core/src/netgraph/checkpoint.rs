//! Binary tensor container used for network checkpoints and dataset dumps.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "LLLNET1\0"
//! count    u32      number of records
//! record   repeated `count` times:
//!   name_len u16, name (utf-8)
//!   dtype    u8     0 = u8, 1 = f32, 2 = f64, 3 = i64
//!   rank     u8
//!   extents  rank × u64
//!   data     product(extents) values, little-endian
//! ```
//!
//! A network checkpoint holds an `arch` record (u8 text: the input shape on
//! the first line, then one layer spec per line), `theta.<l>` for every
//! trainable layer, and optionally `bias.<l>` and `psi.<l>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layer::LayerSpec;
use super::network::Network;
use crate::error::{format_err, Result};
use crate::numkit::{Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"LLLNET1\0";

#[derive(Clone, Debug, PartialEq)]
pub enum RecordData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl RecordData {
    pub fn code(&self) -> u8 {
        match self {
            RecordData::U8(_) => 0,
            RecordData::F32(_) => 1,
            RecordData::F64(_) => 2,
            RecordData::I64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RecordData::U8(v) => v.len(),
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn tensor<T: Scalar>(name: &str, t: &Tensor<T>) -> Self {
        let data = match T::DTYPE {
            crate::numkit::DType::F32 => RecordData::F32(t.data().iter().map(|v| v.f64() as f32).collect()),
            crate::numkit::DType::F64 => RecordData::F64(t.data().iter().map(|v| v.f64()).collect()),
        };
        Self { name: name.to_string(), shape: t.shape().to_vec(), data }
    }

    pub fn text(name: &str, s: &str) -> Self {
        Self { name: name.to_string(), shape: vec![s.len()], data: RecordData::U8(s.as_bytes().to_vec()) }
    }

    /// Real-valued record converted to `T` (f32 records widen exactly).
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let data: Vec<T> = match &self.data {
            RecordData::F32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
            RecordData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
            _ => return Err(format_err!("record {:?} is not real-valued", self.name)),
        };
        Tensor::from_vec(&self.shape, data)
    }

    pub fn as_text(&self) -> Result<&str> {
        match &self.data {
            RecordData::U8(b) => std::str::from_utf8(b).map_err(|_| format_err!("record {:?} is not utf-8", self.name)),
            _ => Err(format_err!("record {:?} is not text", self.name)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub records: Vec<Record>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Record> {
        self.get(name).ok_or_else(|| format_err!("missing record {name:?}"))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.records.len() as u32).to_le_bytes())?;
        for r in &self.records {
            let name = r.name.as_bytes();
            let name_len = u16::try_from(name.len()).map_err(|_| format_err!("record name too long"))?;
            if r.shape.iter().product::<usize>() != r.data.len() {
                return Err(format_err!("record {:?}: extents {:?} do not match {} values", r.name, r.shape, r.data.len()));
            }
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&[r.data.code(), r.shape.len() as u8])?;
            for &e in &r.shape {
                w.write_all(&(e as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(r.data.len() * 8);
            match &r.data {
                RecordData::U8(v) => buf.extend_from_slice(v),
                RecordData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                RecordData::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                RecordData::I64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(format_err!("bad magic {magic:?}"));
        }
        let count = u32::from_le_bytes(read_array(r, "record count")?);
        let mut records = Vec::with_capacity(count.min(1024) as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(read_array(r, "name length")?) as usize;
            let mut name = vec![0u8; name_len];
            read_exact(r, &mut name, "name")?;
            let name = String::from_utf8(name).map_err(|_| format_err!("record name is not utf-8"))?;
            let [code, rank] = read_array::<2>(r, "record header")?;
            let shape = (0..rank)
                .map(|_| Ok(u64::from_le_bytes(read_array(r, "extent")?) as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| format_err!("record {name:?}: extents overflow"))?;
            let width = match code {
                0 => 1,
                1 => 4,
                2 | 3 => 8,
                c => return Err(format_err!("record {name:?}: unknown dtype code {c}")),
            };
            let mut raw = Vec::new();
            let want = (n * width) as u64;
            r.take(want).read_to_end(&mut raw)?;
            if raw.len() as u64 != want {
                return Err(format_err!("record {name:?} truncated"));
            }
            let data = match code {
                0 => RecordData::U8(raw),
                1 => RecordData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                2 => RecordData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                _ => RecordData::I64(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect()),
            };
            records.push(Record { name, shape, data });
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err!("truncated container while reading {what}"),
        _ => e.into(),
    })
}

fn read_array<const N: usize>(r: &mut impl Read, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b, what)?;
    Ok(b)
}

fn arch_text<T: Scalar>(net: &Network<T>) -> String {
    let mut s = String::from("input");
    for e in net.input_shape() {
        s.push_str(&format!(" {e}"));
    }
    for spec in net.specs() {
        s.push('\n');
        s.push_str(&spec.to_string());
    }
    s
}

pub fn network_to_container<T: Scalar>(net: &Network<T>) -> Container {
    let mut c = Container::new();
    c.push(Record::text("arch", &arch_text(net)));
    for (l, w) in net.weights().iter().enumerate() {
        c.push(Record::tensor(&format!("theta.{l}"), w));
    }
    for (l, b) in net.biases().into_iter().flatten().enumerate() {
        c.push(Record::tensor(&format!("bias.{l}"), b));
    }
    for (l, p) in net.feedback().into_iter().flatten().enumerate() {
        c.push(Record::tensor(&format!("psi.{l}"), p));
    }
    c
}

pub fn network_from_container<T: Scalar>(c: &Container) -> Result<Network<T>> {
    let arch = c.require("arch")?.as_text()?;
    let mut lines = arch.lines();
    let input_shape = lines
        .next()
        .and_then(|l| l.strip_prefix("input"))
        .ok_or_else(|| format_err!("arch record lacks an input line"))?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| format_err!("bad input extent {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    let specs = lines.map(|l| l.parse::<LayerSpec>()).collect::<Result<Vec<_>>>()?;
    let depth = specs.iter().filter(|s| s.is_trainable()).count();
    let weights = (0..depth).map(|l| c.require(&format!("theta.{l}"))?.to_tensor()).collect::<Result<Vec<_>>>()?;
    let biases = if c.get("bias.0").is_some() {
        Some((0..depth).map(|l| c.require(&format!("bias.{l}"))?.to_tensor()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let feedback = if depth > 1 && c.get("psi.0").is_some() {
        Some((0..depth - 1).map(|l| c.require(&format!("psi.{l}"))?.to_tensor()).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Network::from_parts(&input_shape, &specs, weights, biases, feedback)
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    network_to_container(net).save(path)
}

pub fn load_network<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    network_from_container(&Container::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_stream_is_format_error() {
        let mut c = Container::new();
        c.push(Record::text("arch", "input 2"));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        for cut in [3, 10, buf.len() - 1] {
            let err = Container::read_from(&mut &buf[..cut]).unwrap_err();
            assert!(matches!(err, crate::Error::Format(_)), "cut {cut}: {err}");
        }
        assert_eq!(Container::read_from(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn header_bytes_are_documented_layout() {
        let mut c = Container::new();
        c.push(Record { name: "v".into(), shape: vec![2], data: RecordData::I64(vec![1, -1]) });
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"LLLNET1\0");
        assert_eq!(&buf[8..12], &1u32.to_le_bytes());
        assert_eq!(&buf[12..15], &[1, 0, b'v']);
        assert_eq!(&buf[15..17], &[3, 1]);
        assert_eq!(&buf[17..25], &2u64.to_le_bytes());
        assert_eq!(buf.len(), 25 + 16);
    }
}
