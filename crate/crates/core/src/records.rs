//! Named-tensor record files shared by the weights and cache formats.
//!
//! Layout (little-endian): 4-byte magic, `u32` version, `u32` record count,
//! then per record: `u32` name length, UTF-8 name, `u8` dtype tag
//! (0 = f32, 1 = f64, 2 = u8), `u32` rank, `u64` per dim, payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::{DType, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl RecordData {
    fn tag(&self) -> u8 {
        match self {
            RecordData::F32(_) => 0,
            RecordData::F64(_) => 1,
            RecordData::U8(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::U8(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn from_tensor<T: Scalar>(name: &str, t: &Tensor<T>) -> Record {
        let data = match T::DTYPE {
            DType::F32 => RecordData::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
            DType::F64 => RecordData::F64(t.to_f64_vec()),
        };
        Record { name: name.to_string(), dims: t.shape().to_vec(), data }
    }

    pub fn from_text(name: &str, text: &str) -> Record {
        let bytes = text.as_bytes().to_vec();
        Record { name: name.to_string(), dims: vec![bytes.len()], data: RecordData::U8(bytes) }
    }

    /// Payload converted to `T`; u8 records are rejected.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let vals: Vec<T> = match &self.data {
            RecordData::F32(v) => v.iter().map(|&x| T::lit(x as f64)).collect(),
            RecordData::F64(v) => v.iter().map(|&x| T::lit(x)).collect(),
            RecordData::U8(_) => {
                return Err(Error::Format(format!("record `{}` is not numeric", self.name)))
            }
        };
        Tensor::new(&self.dims, vals)
    }

    pub fn text(&self) -> Result<&str> {
        match &self.data {
            RecordData::U8(b) => std::str::from_utf8(b)
                .map_err(|_| Error::Format(format!("record `{}` is not UTF-8", self.name))),
            _ => Err(Error::Format(format!("record `{}` is not text", self.name))),
        }
    }
}

pub fn write_records<W: Write>(mut w: W, magic: &[u8; 4], version: u32, records: &[Record]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for rec in records {
        let name = rec.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[rec.data.tag()])?;
        w.write_all(&(rec.dims.len() as u32).to_le_bytes())?;
        for &d in &rec.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        match &rec.data {
            RecordData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            RecordData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
            RecordData::U8(v) => w.write_all(v)?,
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Returns the version and records. Fails on a wrong magic or a truncated file.
pub fn read_records<R: Read>(mut r: R, magic: &[u8; 4]) -> Result<(u32, Vec<Record>)> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(&mut r)?;
    let count = read_u32(&mut r)? as usize;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("record name is not UTF-8".into()))?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let rank = read_u32(&mut r)? as usize;
        let dims = (0..rank).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = match tag[0] {
            0 => {
                let mut buf = vec![0u8; n * 4];
                r.read_exact(&mut buf)?;
                RecordData::F32(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            1 => {
                let mut buf = vec![0u8; n * 8];
                r.read_exact(&mut buf)?;
                RecordData::F64(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            2 => {
                let mut buf = vec![0u8; n];
                r.read_exact(&mut buf)?;
                RecordData::U8(buf)
            }
            t => return Err(Error::Format(format!("unknown dtype tag {t} in `{name}`"))),
        };
        debug_assert_eq!(data.len(), n);
        records.push(Record { name, dims, data });
    }
    Ok((version, records))
}
