//! Binary containers.
//!
//! Both formats share one layout: a 5-byte magic, a little-endian `u16`
//! version, a little-endian `u32` JSON header length, the UTF-8 JSON header,
//! and then little-endian payload bytes.
//!
//! `DIMDL` holds a [`ParamSet`]. Its header is
//! `{"tensors": [{"name", "dtype": "f32", "shape"}, ...], "meta": {...}}`
//! and the payload is each tensor's row-major `f32` data in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 5] = b"DIMDL";
pub const DATASET_MAGIC: &[u8; 5] = b"DISET";
pub const VERSION: u16 = 1;

pub(crate) fn write_preamble(w: &mut impl Write, magic: &[u8; 5], header: &[u8]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(header)?;
    Ok(())
}

pub(crate) fn read_preamble(r: &mut impl Read, magic: &[u8; 5]) -> Result<Vec<u8>> {
    let mut m = [0u8; 5];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut v = [0u8; 2];
    r.read_exact(&mut v)?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut l = [0u8; 4];
    r.read_exact(&mut l)?;
    let mut header = vec![0u8; u32::from_le_bytes(l) as usize];
    r.read_exact(&mut header)?;
    Ok(header)
}

pub(crate) fn write_f32s(w: &mut impl Write, values: &[f32]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_model(w: &mut impl Write, params: &ParamSet<f32>, meta: &serde_json::Value) -> Result<()> {
    let header = ModelHeader {
        tensors: params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    write_preamble(w, MODEL_MAGIC, &serde_json::to_vec(&header)?)?;
    for (_, t) in params.iter() {
        write_f32s(w, t.data())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<(ParamSet<f32>, serde_json::Value)> {
    let header: ModelHeader = serde_json::from_slice(&read_preamble(r, MODEL_MAGIC)?)?;
    let mut params = ParamSet::new();
    for e in header.tensors {
        if e.dtype != "f32" {
            return Err(Error::Format(format!("tensor {:?}: unsupported dtype {}", e.name, e.dtype)));
        }
        let n = e.shape.iter().product();
        let t = Tensor::new(e.shape, read_f32s(r, n)?)?;
        params.insert(e.name, t)?;
    }
    Ok((params, header.meta))
}

pub fn save_model(path: impl AsRef<Path>, params: &ParamSet<f32>, meta: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, params, meta)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ParamSet<f32>, serde_json::Value)> {
    read_model(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn layout_is_bit_exact() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![2], vec![1.0f32, -2.5]).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &json!(null)).unwrap();
        assert_eq!(&buf[..5], b"DIMDL");
        assert_eq!(&buf[5..7], &[1, 0]);
        let hlen = u32::from_le_bytes(buf[7..11].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[11..11 + hlen]).unwrap();
        assert_eq!(header["tensors"][0], json!({"name": "w", "dtype": "f32", "shape": [2]}));
        assert_eq!(&buf[11 + hlen..], &[1.0f32.to_le_bytes(), (-2.5f32).to_le_bytes()].concat());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[3])).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &p, &json!({})).unwrap();
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(matches!(read_model(&mut wrong.as_slice()), Err(Error::Format(_))));
        buf.truncate(buf.len() - 2);
        assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::Io(_))));
    }

    proptest! {
        #[test]
        fn model_round_trip(values in proptest::collection::vec(-1e6f32..1e6, 1..40), split in 0usize..40) {
            let split = split.min(values.len());
            let mut p = ParamSet::new();
            p.insert("a.weight", Tensor::new(vec![split], values[..split].to_vec()).unwrap()).unwrap();
            p.insert("a.bias", Tensor::new(vec![values.len() - split], values[split..].to_vec()).unwrap()).unwrap();
            let meta = json!({"N": 3, "strict_paper_arch": false});
            let mut buf = Vec::new();
            write_model(&mut buf, &p, &meta).unwrap();
            let (q, m) = read_model(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(q, p);
            prop_assert_eq!(m, meta);
        }
    }
}
