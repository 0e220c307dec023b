//! `.vtft` container: checkpoints, datasets and golden predictions.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset 0   4 bytes  magic "VTFT"
//! offset 4   u32      version (1)
//! offset 8   u64      header_len
//! offset 16  header_len bytes of UTF-8 JSON, right-padded with spaces to a multiple of 4
//! then       payload: raw little-endian tensor data
//! ```
//!
//! The header is compact JSON with keys sorted at every level:
//! `{"metadata":{..},"tensors":{"<name>":{"byte_len":..,"byte_offset":..,"dtype":"f32"|"u32","shape":[..]}}}`.
//! `byte_offset` is relative to the payload start. Writers lay tensors out
//! back to back in sorted-name order, so identical content gives identical
//! bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::TensorF32;
use crate::vit::{predict_from_logits, Batch, ViTConfig, ViTModel};

pub const MAGIC: [u8; 4] = *b"VTFT";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::U32(_) => "u32",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_bits().to_le_bytes())),
            TensorData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    byte_len: u64,
    byte_offset: u64,
    dtype: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    metadata: Value,
    tensors: BTreeMap<String, TensorRecord>,
}

/// In-memory form of a `.vtft` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub version: u32,
    pub metadata: Value,
    pub tensors: BTreeMap<String, Entry>,
}

impl Container {
    pub fn new(metadata: Value) -> Self {
        Self {
            version: VERSION,
            metadata,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert_f32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.insert(
            name.into(),
            Entry {
                shape,
                data: TensorData::F32(data),
            },
        );
    }

    pub fn insert_u32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<u32>) {
        self.tensors.insert(
            name.into(),
            Entry {
                shape,
                data: TensorData::U32(data),
            },
        );
    }

    pub fn f32_tensor(&self, name: &str) -> Result<TensorF32> {
        match self.tensors.get(name) {
            Some(Entry {
                shape,
                data: TensorData::F32(v),
            }) => TensorF32::new(name, shape.clone(), v.clone()),
            Some(_) => Err(Error::Header(format!("tensor `{name}` is not f32"))),
            None => Err(Error::MissingTensor(name.to_string())),
        }
    }

    pub fn u32_tensor(&self, name: &str) -> Result<(Vec<usize>, Vec<u32>)> {
        match self.tensors.get(name) {
            Some(Entry {
                shape,
                data: TensorData::U32(v),
            }) => Ok((shape.clone(), v.clone())),
            Some(_) => Err(Error::Header(format!("tensor `{name}` is not u32"))),
            None => Err(Error::MissingTensor(name.to_string())),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut records = BTreeMap::new();
        let mut offset = 0u64;
        for (name, e) in &self.tensors {
            let n: usize = e.shape.iter().product();
            if n != e.data.len() {
                return Err(Error::Shape {
                    what: name.clone(),
                    expected: e.shape.clone(),
                    actual: vec![e.data.len()],
                });
            }
            let len = 4 * n as u64;
            records.insert(
                name.clone(),
                TensorRecord {
                    byte_len: len,
                    byte_offset: offset,
                    dtype: e.data.dtype().to_string(),
                    shape: e.shape.clone(),
                },
            );
            offset += len;
        }
        let header = Header {
            metadata: self.metadata.clone(),
            tensors: records,
        };
        let mut hbytes = serde_json::to_vec(&header)?;
        while hbytes.len() % 4 != 0 {
            hbytes.push(b' ');
        }

        let mut out = Vec::with_capacity(PREAMBLE + hbytes.len() + offset as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(hbytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&hbytes);
        for e in self.tensors.values() {
            e.data.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let total = bytes.len() as u64;
        if bytes.len() < PREAMBLE {
            return Err(Error::Truncated {
                needed: PREAMBLE as u64,
                actual: total,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let payload_start = (PREAMBLE as u64).checked_add(header_len).ok_or(Error::Truncated {
            needed: u64::MAX,
            actual: total,
        })?;
        if payload_start > total {
            return Err(Error::Truncated {
                needed: payload_start,
                actual: total,
            });
        }
        let header_bytes = &bytes[PREAMBLE..payload_start as usize];
        let header_str = std::str::from_utf8(header_bytes).map_err(|e| Error::Header(format!("header is not UTF-8: {e}")))?;
        let header: Header = serde_json::from_str(header_str).map_err(|e| Error::Header(e.to_string()))?;
        let payload = &bytes[payload_start as usize..];

        // check every record, then overlap between neighbours in offset order
        let mut spans = Vec::with_capacity(header.tensors.len());
        for (name, r) in &header.tensors {
            let n = r
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .ok_or_else(|| Error::Header(format!("`{name}`: shape overflows")))?;
            if r.dtype != "f32" && r.dtype != "u32" {
                return Err(Error::Header(format!("`{name}`: unsupported dtype `{}`", r.dtype)));
            }
            if n.checked_mul(4) != Some(r.byte_len) {
                return Err(Error::Header(format!(
                    "`{name}`: byte_len {} does not match shape {:?}",
                    r.byte_len, r.shape
                )));
            }
            if r.byte_offset % 4 != 0 {
                return Err(Error::Header(format!("`{name}`: byte_offset {} not 4-byte aligned", r.byte_offset)));
            }
            let end = r
                .byte_offset
                .checked_add(r.byte_len)
                .ok_or_else(|| Error::Header(format!("`{name}`: offset overflows")))?;
            if end > payload.len() as u64 {
                return Err(Error::Truncated {
                    needed: payload_start + end,
                    actual: total,
                });
            }
            spans.push((r.byte_offset, end, name));
        }
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Header(format!("tensors `{}` and `{}` overlap", w[0].2, w[1].2)));
            }
        }

        let mut tensors = BTreeMap::new();
        for (name, r) in header.tensors {
            let raw = &payload[r.byte_offset as usize..(r.byte_offset + r.byte_len) as usize];
            let words = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")));
            let data = if r.dtype == "f32" {
                TensorData::F32(words.map(f32::from_bits).collect())
            } else {
                TensorData::U32(words.collect())
            };
            tensors.insert(name, Entry { shape: r.shape, data });
        }
        Ok(Self {
            version,
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn kind_of(meta: &Value) -> Option<&str> {
    meta.get("kind").and_then(Value::as_str)
}

/// Container for a model; `extra` keys are merged into the metadata.
pub fn checkpoint_container(model: &ViTModel, extra: Option<&Map<String, Value>>) -> Result<Container> {
    let mut meta = Map::new();
    meta.insert("kind".into(), json!("checkpoint"));
    meta.insert("config".into(), serde_json::to_value(model.config())?);
    if let Some(extra) = extra {
        for (k, v) in extra {
            meta.insert(k.clone(), v.clone());
        }
    }
    let mut c = Container::new(Value::Object(meta));
    for t in model.params() {
        c.insert_f32(t.name.clone(), t.shape.clone(), t.data.clone());
    }
    Ok(c)
}

pub fn checkpoint_bytes(model: &ViTModel) -> Result<Vec<u8>> {
    checkpoint_container(model, None)?.to_bytes()
}

pub fn save_checkpoint(model: &ViTModel, path: impl AsRef<Path>) -> Result<()> {
    checkpoint_container(model, None)?.write(path)
}

pub fn save_checkpoint_with(model: &ViTModel, path: impl AsRef<Path>, extra: &Map<String, Value>) -> Result<()> {
    checkpoint_container(model, Some(extra))?.write(path)
}

pub fn model_from_container(c: &Container) -> Result<ViTModel> {
    if let Some(k) = kind_of(&c.metadata) {
        if k != "checkpoint" {
            return Err(Error::Header(format!("expected a checkpoint, found kind `{k}`")));
        }
    }
    let config: ViTConfig = serde_json::from_value(
        c.metadata
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Header("checkpoint metadata has no `config`".into()))?,
    )
    .map_err(|e| Error::Header(format!("bad config: {e}")))?;
    let params = c
        .tensors
        .keys()
        .map(|name| c.f32_tensor(name))
        .collect::<Result<Vec<_>>>()?;
    ViTModel::new(config, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ViTModel> {
    model_from_container(&Container::read(path)?)
}

/// Loads a checkpoint and returns its metadata too.
pub fn load_checkpoint_with_meta(path: impl AsRef<Path>) -> Result<(ViTModel, Value)> {
    let c = Container::read(path)?;
    Ok((model_from_container(&c)?, c.metadata))
}

pub fn dataset_container(batch: &Batch, num_classes: Option<usize>) -> Container {
    let mut meta = Map::new();
    meta.insert("kind".into(), json!("dataset"));
    if let Some(n) = num_classes {
        meta.insert("num_classes".into(), json!(n));
    }
    let mut c = Container::new(Value::Object(meta));
    c.insert_f32("images", batch.images.shape.clone(), batch.images.data.clone());
    if let Some(l) = &batch.labels {
        c.insert_u32("labels", vec![l.len()], l.clone());
    }
    c
}

pub fn save_dataset(batch: &Batch, num_classes: Option<usize>, path: impl AsRef<Path>) -> Result<()> {
    dataset_container(batch, num_classes).write(path)
}

pub fn dataset_from_container(c: &Container) -> Result<Batch> {
    let images = c.f32_tensor("images").map_err(|e| match e {
        Error::MissingTensor(_) => Error::Dataset("missing `images` tensor".into()),
        other => other,
    })?;
    if images.shape.len() != 4 {
        return Err(Error::Dataset(format!("images must be rank 4, got {:?}", images.shape)));
    }
    if images.data.iter().any(|v| v.is_nan()) {
        return Err(Error::Dataset("NaN pixel value".into()));
    }
    let labels = match c.tensors.get("labels") {
        None => None,
        Some(_) => {
            let (shape, l) = c.u32_tensor("labels")?;
            if shape != [images.shape[0]] {
                return Err(Error::Dataset(format!("labels shape {shape:?} does not match image count")));
            }
            if let Some(nc) = c.metadata.get("num_classes").and_then(Value::as_u64) {
                if let Some(bad) = l.iter().find(|&&x| u64::from(x) >= nc) {
                    return Err(Error::Dataset(format!("label {bad} out of range for {nc} classes")));
                }
            }
            Some(l)
        }
    };
    Batch::new(images, labels)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Batch> {
    dataset_from_container(&Container::read(path)?)
}

/// SHA-256 over the canonical checkpoint bytes, hex encoded.
pub fn model_digest(model: &ViTModel) -> Result<String> {
    let bytes = checkpoint_bytes(model)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Fault-free predictions tied to the model they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCache {
    pub model_hash: String,
    pub predictions: Vec<u32>,
    pub logits: Option<TensorF32>,
}

impl GoldenCache {
    pub fn is_valid_for(&self, model: &ViTModel) -> Result<bool> {
        Ok(self.model_hash == model_digest(model)?)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(json!({"kind": "golden", "model_hash": self.model_hash}));
        c.insert_u32("predictions", vec![self.predictions.len()], self.predictions.clone());
        if let Some(l) = &self.logits {
            c.insert_f32("logits", l.shape.clone(), l.data.clone());
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if kind_of(&c.metadata) != Some("golden") {
            return Err(Error::Header("expected metadata kind `golden`".into()));
        }
        let model_hash = c
            .metadata
            .get("model_hash")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Header("golden cache without model_hash".into()))?
            .to_string();
        let (_, predictions) = c.u32_tensor("predictions")?;
        let logits = match c.tensors.get("logits") {
            Some(_) => Some(c.f32_tensor("logits")?),
            None => None,
        };
        Ok(Self {
            model_hash,
            predictions,
            logits,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

pub fn compute_golden(model: &ViTModel, batch: &Batch) -> Result<GoldenCache> {
    let logits = model.forward(batch)?;
    let nc = model.config().num_classes;
    let predictions = predict_from_logits(&logits, nc);
    Ok(GoldenCache {
        model_hash: model_digest(model)?,
        predictions,
        logits: Some(TensorF32::new("logits", vec![batch.len(), nc], logits)?),
    })
}
