//! Portable trained-model files.
//!
//! Layout (all integers little-endian `u32`):
//! magic `SXAI`, version, header length, UTF-8 `key = value` header, then
//! one block per parameter in declaration order: name length, name, rank,
//! extents, `f32` payload.

use std::path::Path;

use super::{Network, NetworkConfig, Param, Tensor};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kv::{join_list, split_list, KvList};
use crate::signal::{SpectroPipeline, StftParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SXAI";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Affine map applied to dB pixels before they enter the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub fn apply(&self, v: f32) -> f32 {
        ((v as f64 - self.mean) / self.std) as f32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingMeta {
    pub epochs: usize,
    /// Mean loss of the last epoch; NaN when no epoch ran.
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub labels: Vec<String>,
    pub norm: Normalization,
    /// The spectrogram settings the network was trained on.
    pub pipeline: SpectroPipeline,
    pub params: Vec<Param<f32>>,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(
        net: &Network<f32>,
        labels: Vec<String>,
        norm: Normalization,
        pipeline: SpectroPipeline,
        meta: TrainingMeta,
    ) -> Result<Self> {
        if labels.len() != net.config().n_classes {
            return Err(Error::Config(format!(
                "{} labels for a {}-class network",
                labels.len(),
                net.config().n_classes
            )));
        }
        if let Some(bad) = labels
            .iter()
            .find(|l| l.is_empty() || l.contains([',', '\n']))
        {
            return Err(Error::invalid(format!("label {bad:?} cannot be stored")));
        }
        Ok(Self {
            config: net.config().clone(),
            labels,
            norm,
            pipeline,
            params: net.params().to_vec(),
            meta,
        })
    }

    pub fn network(&self) -> Result<Network<f32>> {
        let mut net = Network::zeroed(self.config.clone())?;
        net.set_params(self.params.clone())?;
        Ok(net)
    }

    /// Normalized `[1, 1, H, W]` network input for one image.
    pub fn input(&self, image: &Grid) -> Result<Tensor<f32>> {
        let (h, w) = self.config.input_hw;
        if image.dims() != (h, w) {
            return Err(Error::shape(format!(
                "image {:?} does not match network input {:?}",
                image.dims(),
                (h, w)
            )));
        }
        let data = image
            .as_slice()
            .iter()
            .map(|&v| self.norm.apply(v as f32))
            .collect();
        Tensor::new(vec![1, 1, h, w], data)
    }

    fn header(&self) -> KvList {
        let c = &self.config;
        let p = &self.pipeline;
        let mut kv = KvList::new();
        kv.set("net.input_h", c.input_hw.0);
        kv.set("net.input_w", c.input_hw.1);
        kv.set("net.channels_per_stage", join_list(&c.channels_per_stage));
        kv.set("net.blocks_per_stage", join_list(&c.blocks_per_stage));
        kv.set("net.stem_stride", c.stem_stride);
        kv.set("net.n_classes", c.n_classes);
        kv.set("net.seed", c.seed);
        kv.set("labels", join_list(&self.labels));
        kv.set("norm.mean", self.norm.mean);
        kv.set("norm.std", self.norm.std);
        kv.set("stft.fft_size", p.stft.fft_size);
        kv.set("stft.window_len", p.stft.window_len);
        kv.set("stft.hop", p.stft.hop);
        kv.set("stft.db_floor", p.stft.db_floor);
        kv.set(
            "spectro.f_max",
            p.f_max.map_or("none".to_string(), |f| f.to_string()),
        );
        kv.set("train.epochs", self.meta.epochs);
        kv.set("train.final_loss", self.meta.final_loss);
        kv.set("train.seed", self.meta.seed);
        kv.set("param_count", self.params.len());
        kv
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header().render("");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(CHECKPOINT_MAGIC),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version: expected {CHECKPOINT_VERSION}, found {version}"
            )));
        }
        let header_len = r.u32("header length")? as usize;
        let header = std::str::from_utf8(r.take(header_len, "header")?)
            .map_err(|e| Error::format(format!("header is not UTF-8: {e}")))?;
        let kv = KvList::parse(header).map_err(|e| Error::format(e.to_string()))?;

        let config = NetworkConfig {
            input_hw: (
                kv.parse_value("net.input_h")?,
                kv.parse_value("net.input_w")?,
            ),
            channels_per_stage: kv.parse_list("net.channels_per_stage")?,
            blocks_per_stage: kv.parse_list("net.blocks_per_stage")?,
            stem_stride: kv.parse_value("net.stem_stride")?,
            n_classes: kv.parse_value("net.n_classes")?,
            seed: kv.parse_value("net.seed")?,
        };
        let labels: Vec<String> = split_list(kv.require("labels")?)
            .map(String::from)
            .collect();
        let f_max = match kv.require("spectro.f_max")? {
            "none" => None,
            _ => Some(kv.parse_value("spectro.f_max")?),
        };
        let pipeline = SpectroPipeline {
            stft: StftParams {
                fft_size: kv.parse_value("stft.fft_size")?,
                window_len: kv.parse_value("stft.window_len")?,
                hop: kv.parse_value("stft.hop")?,
                db_floor: kv.parse_value("stft.db_floor")?,
            },
            f_max,
            image_h: config.input_hw.0,
            image_w: config.input_hw.1,
        };
        let norm = Normalization {
            mean: kv.parse_value("norm.mean")?,
            std: kv.parse_value("norm.std")?,
        };
        let meta = TrainingMeta {
            epochs: kv.parse_value("train.epochs")?,
            final_loss: kv.parse_value("train.final_loss")?,
            seed: kv.parse_value("train.seed")?,
        };
        let count: usize = kv.parse_value("param_count")?;

        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32("parameter name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "parameter name")?.to_vec())
                .map_err(|e| Error::format(format!("parameter name is not UTF-8: {e}")))?;
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::format(format!("parameter {name} has rank {rank}")));
            }
            let shape = (0..rank)
                .map(|_| r.u32("extent").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let payload = r.take(len * 4, "parameter payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            let value = Tensor::new(shape, data)
                .map_err(|e| Error::format(format!("parameter {name}: {e}")))?;
            params.push(Param { name, value });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after the last parameter",
                bytes.len() - r.pos
            )));
        }
        let ckpt = Self {
            config,
            labels,
            norm,
            pipeline,
            params,
            meta,
        };
        // Validates names and shapes against the configured layout.
        let net = ckpt
            .network()
            .map_err(|e| Error::format(format!("parameters do not fit the config: {e}")))?;
        if ckpt.labels.len() != net.config().n_classes {
            return Err(Error::format(format!(
                "{} labels for {} classes",
                ckpt.labels.len(),
                net.config().n_classes
            )));
        }
        Ok(ckpt)
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

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(format!(
                "truncated checkpoint: {what} needs {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }
}
