//! Binary checkpoints.
//!
//! Layout (little-endian): `PGCKPT`, u16 version, u32 metadata length +
//! UTF-8 metadata (JSON), u32 tensor count, then per tensor: u32 name
//! length + UTF-8 name, u8 dtype (0 = f64), u32 rank, u64 per dim, payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autoencoder::Autoencoder;
use super::network::{parse_layers, Head, Layer, Sequential};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"PGCKPT";
pub const FORMAT_VERSION: u16 = 1;
const DTYPE_F64: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.metadata);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.push(DTYPE_F64);
            out.extend_from_slice(&(t.tensor.shape().len() as u32).to_le_bytes());
            for &d in t.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = |_| Error::Checkpoint("file too short for header".into());
        if r.take(6).map_err(header)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.u16().map_err(header)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let metadata = r
            .string()
            .map_err(|_| Error::Checkpoint("truncated metadata block".into()))?;
        let count = r
            .u32()
            .map_err(|_| Error::Checkpoint("missing tensor count".into()))? as usize;
        // names promised by the metadata, used to report truncation
        let expected: Vec<String> = serde_json::from_str::<ModelMeta>(&metadata)
            .map(|m| m.tensor_names())
            .unwrap_or_default();
        let mut tensors = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let fallback = expected.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            let name = r.string().map_err(|_| Error::Truncated {
                tensor: fallback.clone(),
            })?;
            let truncated = |_| Error::Truncated {
                tensor: name.clone(),
            };
            let dtype = r.u8().map_err(truncated)?;
            if dtype != DTYPE_F64 {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: unsupported dtype tag {dtype}"
                )));
            }
            let rank = r.u32().map_err(truncated)? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64().map_err(truncated)? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name}: shape overflows")))?;
            let payload = r
                .take(len.checked_mul(8).ok_or_else(|| {
                    Error::Checkpoint(format!("tensor {name}: shape overflows"))
                })?)
                .map_err(truncated)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                tensor: Tensor::from_raw(shape, data)?,
                name,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

struct Eof;

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], Eof> {
        let end = self.pos.checked_add(n).ok_or(Eof)?;
        let s = self.bytes.get(self.pos..end).ok_or(Eof)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, Eof> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, Eof> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, Eof> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, Eof> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> std::result::Result<String, Eof> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Eof)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NetMeta {
    prefix: String,
    input_dim: usize,
    layers: String,
    head: Head,
}

/// Metadata block of a model checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    kind: String,
    seed: u64,
    networks: Vec<NetMeta>,
    tensors: Vec<String>,
}

impl ModelMeta {
    fn tensor_names(&self) -> Vec<String> {
        self.tensors.clone()
    }
}

fn net_tensors(prefix: &str, net: &Sequential) -> Vec<NamedTensor> {
    let mut params = net.parameters().into_iter();
    let mut out = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let (wshape, bshape) = match layer {
            Layer::Dense { n_in, n_out, .. } => (vec![*n_out, *n_in], vec![*n_out]),
            Layer::Conv2d { geometry: g, .. } => {
                (vec![g.out_channels, g.patch_len()], vec![g.out_channels])
            }
            _ => continue,
        };
        for shape in [wshape, bshape] {
            let (name, values) = params.next().expect("two tensors per parameterized layer");
            debug_assert!(name.starts_with(&format!("layer{i}.")));
            out.push(NamedTensor {
                name: format!("{prefix}{name}"),
                tensor: Tensor::from_raw(shape, values.to_vec()).expect("parameter shape"),
            });
        }
    }
    out
}

fn model_checkpoint(kind: &str, seed: u64, nets: &[(&str, &Sequential)]) -> Checkpoint {
    let tensors: Vec<NamedTensor> = nets
        .iter()
        .flat_map(|(p, n)| net_tensors(p, n))
        .collect();
    let meta = ModelMeta {
        kind: kind.into(),
        seed,
        networks: nets
            .iter()
            .map(|(p, n)| NetMeta {
                prefix: p.to_string(),
                input_dim: n.input_dim(),
                layers: n.describe(),
                head: n.head(),
            })
            .collect(),
        tensors: tensors.iter().map(|t| t.name.clone()).collect(),
    };
    Checkpoint {
        metadata: serde_json::to_string(&meta).expect("metadata serializes"),
        tensors,
    }
}

fn restore_net(ck: &Checkpoint, meta: &NetMeta) -> Result<Sequential> {
    let layers = parse_layers(&meta.layers)?;
    let mut net = Sequential::new(meta.input_dim, layers, meta.head)?;
    let names: Vec<String> = net
        .parameters()
        .into_iter()
        .map(|(n, _)| format!("{}{n}", meta.prefix))
        .collect();
    let mut failure = None;
    net.update_parameters(|slot, values| {
        let name = &names[slot];
        match ck.tensor(name) {
            Some(t) if t.len() == values.len() => values.copy_from_slice(t.data()),
            Some(t) => {
                failure.get_or_insert(Error::Checkpoint(format!(
                    "tensor {name} has {} values, layer expects {}",
                    t.len(),
                    values.len()
                )));
            }
            None => {
                failure.get_or_insert(Error::Checkpoint(format!("missing tensor {name}")));
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(net),
    }
}

fn parse_meta(ck: &Checkpoint, kind: &str) -> Result<ModelMeta> {
    let meta: ModelMeta = serde_json::from_str(&ck.metadata)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.kind != kind {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a {}, not a {kind}",
            meta.kind
        )));
    }
    Ok(meta)
}

pub fn classifier_checkpoint(net: &Sequential, seed: u64) -> Checkpoint {
    model_checkpoint("classifier", seed, &[("", net)])
}

pub fn save_classifier(net: &Sequential, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    classifier_checkpoint(net, seed).save(path)
}

/// Loads a classifier and the seed it was trained with.
pub fn load_classifier(path: impl AsRef<Path>) -> Result<(Sequential, u64)> {
    let ck = Checkpoint::load(path)?;
    let meta = parse_meta(&ck, "classifier")?;
    let net = restore_net(&ck, &meta.networks[0])?;
    Ok((net, meta.seed))
}

/// Only trained autoencoders have parameters to persist.
pub fn save_autoencoder(ae: &Autoencoder, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let (enc, dec) = ae
        .networks()
        .ok_or_else(|| Error::Checkpoint("exact-chart autoencoders have no parameters".into()))?;
    model_checkpoint("autoencoder", seed, &[("encoder.", enc), ("decoder.", dec)]).save(path)
}

pub fn load_autoencoder(path: impl AsRef<Path>) -> Result<(Autoencoder, u64)> {
    let ck = Checkpoint::load(path)?;
    let meta = parse_meta(&ck, "autoencoder")?;
    if meta.networks.len() != 2 {
        return Err(Error::Checkpoint("autoencoder needs two networks".into()));
    }
    let enc = restore_net(&ck, &meta.networks[0])?;
    let dec = restore_net(&ck, &meta.networks[1])?;
    Ok((Autoencoder::trained(enc, dec)?, meta.seed))
}

/// A single attribution tensor, stored under the name `attribution`.
pub fn save_attribution(values: &Tensor, metadata: &str, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint {
        metadata: metadata.into(),
        tensors: vec![NamedTensor {
            name: "attribution".into(),
            tensor: values.clone(),
        }],
    }
    .save(path)
}

pub fn load_attribution(path: impl AsRef<Path>) -> Result<(Tensor, String)> {
    let ck = Checkpoint::load(path)?;
    let t = ck
        .tensor("attribution")
        .cloned()
        .ok_or_else(|| Error::Checkpoint("no tensor named attribution".into()))?;
    Ok((t, ck.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::evaluate;
    use crate::models::{Activation, MlpSpec};

    fn net() -> Sequential {
        MlpSpec::new(vec![4, 6, 3], Activation::Tanh, Head::Softmax)
            .unwrap()
            .build(11)
            .unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let n = net();
        save_classifier(&n, 11, &a).unwrap();
        let (back, seed) = load_classifier(&a).unwrap();
        assert_eq!(seed, 11);
        save_classifier(&back, seed, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let x = Tensor::vector(vec![0.1, -0.4, 2.0, 0.3]);
        assert_eq!(evaluate(&n, &x).unwrap(), evaluate(&back, &x).unwrap());
    }

    #[test]
    fn truncation_names_the_tensor() {
        let bytes = classifier_checkpoint(&net(), 1).to_bytes();
        // cut inside the last payload (layer2.bias, 3 values)
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(&err, Error::Truncated { tensor } if tensor == "layer2.bias"), "{err}");
        // cut before the last tensor's name is complete
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3 * 8 - 8 - 4 - 1 - 2])
            .unwrap_err();
        assert!(matches!(&err, Error::Truncated { tensor } if tensor == "layer2.bias"), "{err}");
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = classifier_checkpoint(&net(), 1).to_bytes();
        bytes[6] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Checkpoint(m)) if m.contains("version")
        ));
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        save_classifier(&net(), 0, &p).unwrap();
        assert!(load_autoencoder(&p).is_err());
    }
}
