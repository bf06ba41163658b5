//! Checkpoint files.
//!
//! Layout: magic `CILM1\0`, `u32` format version, `u64` payload length, the
//! payload, then the SHA-256 of the payload. All integers little-endian,
//! parameters and prototypes as `f64`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::prototypes::{Prototype, PrototypeStore};
use super::state::{Checksum, IncrementalModel};
use crate::error::{Error, Result};
use crate::nn::{FeatureExtractor, Head, HeadSet, Linear};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"CILM1\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: IncrementalModel,
    pub prototypes: PrototypeStore,
}

impl Checkpoint {
    /// Fails with a shape error unless the stored extractor has `dims`.
    pub fn expect_dims(&self, dims: &[usize]) -> Result<()> {
        let stored = self.model.extractor.dims();
        if stored != dims {
            return Err(Error::Shape(format!(
                "checkpoint extractor has dims {stored:?}, expected {dims:?}"
            )));
        }
        Ok(())
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn linear(&mut self, l: &Linear) {
        self.f64s(l.weight.values());
        self.f64s(&l.bias);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corruption(format!(
                "payload ends at byte {} while reading {n} more",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= self.bytes.len().max(1 << 20))
            .ok_or_else(|| Error::Corruption(format!("implausible count {v}")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn linear(&mut self, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let weight = Tensor::new(vec![fan_out, fan_in], self.f64s(fan_in * fan_out)?)?;
        Ok(Linear {
            weight,
            bias: self.f64s(fan_out)?,
        })
    }
}

fn encode_payload(model: &IncrementalModel, store: &PrototypeStore) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(model.seed);
    let dims = model.extractor.dims();
    w.usize(dims.len());
    dims.iter().for_each(|&d| w.usize(d));
    for l in model.extractor.layers() {
        w.linear(l);
    }
    w.usize(model.heads.len());
    for (head, classes) in model.heads.heads().iter().zip(&model.head_classes) {
        w.usize(head.classes);
        w.0.push(u8::from(head.rotations));
        classes.iter().for_each(|&c| w.usize(c));
        w.linear(&head.linear);
    }
    model.gradient_steps.iter().for_each(|&s| w.u64(s));
    w.usize(store.len());
    for (class, p) in store.iter() {
        w.usize(class);
        w.usize(p.task);
        w.0.extend_from_slice(&p.extractor.0);
        w.usize(p.mean.len());
        w.f64s(&p.mean);
    }
    w.0
}

fn decode_payload(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let seed = r.u64()?;
    let n_dims = r.usize()?;
    let dims = (0..n_dims).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 {
        return Err(Error::Corruption(format!("bad extractor dims {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|w| r.linear(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    let extractor = FeatureExtractor::from_layers(layers)?;
    let feature_dim = extractor.feature_dim();
    let n_heads = r.usize()?;
    let mut heads = Vec::with_capacity(n_heads);
    let mut head_classes = Vec::with_capacity(n_heads);
    for _ in 0..n_heads {
        let classes = r.usize()?;
        let rotations = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Corruption(format!("bad rotation flag {b}"))),
        };
        head_classes.push((0..classes).map(|_| r.usize()).collect::<Result<Vec<_>>>()?);
        let width = classes * if rotations { 4 } else { 1 };
        heads.push(Head {
            linear: r.linear(feature_dim, width)?,
            classes,
            rotations,
        });
    }
    let gradient_steps = (0..n_heads).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let n_protos = r.usize()?;
    let mut store = PrototypeStore::new();
    for _ in 0..n_protos {
        let class = r.usize()?;
        let task = r.usize()?;
        let checksum = Checksum(r.take(32)?.try_into().expect("32 bytes"));
        let len = r.usize()?;
        let mean = r.f64s(len)?;
        store
            .insert(
                class,
                Prototype {
                    mean,
                    task,
                    extractor: checksum,
                },
            )
            .map_err(|e| Error::Corruption(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Corruption("trailing bytes in payload".into()));
    }
    Ok(Checkpoint {
        model: IncrementalModel {
            extractor,
            heads: HeadSet::from_heads(heads),
            head_classes,
            seed,
            gradient_steps,
        },
        prototypes: store,
    })
}

pub fn encode_checkpoint(model: &IncrementalModel, store: &PrototypeStore) -> Vec<u8> {
    let payload = encode_payload(model, store);
    let mut out = Vec::with_capacity(payload.len() + 50);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 18 + 32 {
        return Err(Error::Corruption(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(Error::Corruption("bad magic, expected CILM1".into()));
    }
    let version = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Corruption(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 18 + len + 32 {
        return Err(Error::Corruption(format!(
            "declared payload of {len} bytes but file holds {}",
            bytes.len().saturating_sub(50)
        )));
    }
    let payload = &bytes[18..18 + len];
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest[..] != bytes[18 + len..] {
        return Err(Error::Corruption("payload checksum mismatch".into()));
    }
    decode_payload(payload)
}

pub fn save_checkpoint(model: &IncrementalModel, store: &PrototypeStore, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model, store))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
