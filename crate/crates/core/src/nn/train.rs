//! Minibatch training over a set of spectrogram images.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, Normalization, TrainingMeta};
use super::network::argmax;
use super::{adam_step, AdamState, Network, Tensor, TrainConfig};
use crate::corpus::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::wav::read_wav;
use crate::signal::SpectroPipeline;

/// Labelled images of one size, stored as raw dB values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    label_set: Vec<String>,
    hw: (usize, usize),
    images: Vec<f32>,
    targets: Vec<usize>,
    ids: Vec<String>,
}

impl Dataset {
    pub fn new(label_set: Vec<String>, hw: (usize, usize)) -> Self {
        Self {
            label_set,
            hw,
            images: Vec::new(),
            targets: Vec::new(),
            ids: Vec::new(),
        }
    }

    /// Loads and renders every clip of `split` through `pipeline`.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        manifest_path: &Path,
        pipeline: &SpectroPipeline,
        split: Split,
    ) -> Result<Self> {
        let mut data = Self::new(
            manifest.label_set.clone(),
            (pipeline.image_h, pipeline.image_w),
        );
        for entry in manifest.split(split) {
            let path = DatasetManifest::resolve(manifest_path, entry);
            let clip = read_wav(&path, &entry.label)?;
            let target = manifest.label_index(&entry.label).ok_or_else(|| {
                Error::invalid(format!("label {:?} not in the label set", entry.label))
            })?;
            data.push(&pipeline.image(&clip)?, target, entry.path.clone())?;
        }
        Ok(data)
    }

    pub fn push(&mut self, image: &Grid, target: usize, id: String) -> Result<()> {
        if image.dims() != self.hw {
            return Err(Error::shape(format!(
                "image {:?} does not match dataset size {:?}",
                image.dims(),
                self.hw
            )));
        }
        if target >= self.label_set.len() {
            return Err(Error::invalid(format!(
                "target {target} outside {} labels",
                self.label_set.len()
            )));
        }
        self.images
            .extend(image.as_slice().iter().map(|&v| v as f32));
        self.targets.push(target);
        self.ids.push(id);
        Ok(())
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    pub fn hw(&self) -> (usize, usize) {
        self.hw
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.hw.0 * self.hw.1;
        &self.images[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> usize {
        self.targets[i]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Mean and standard deviation over every pixel.
    pub fn normalization(&self) -> Normalization {
        let n = self.images.len().max(1) as f64;
        let mean = self.images.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = self
            .images
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        Normalization {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    /// Normalized `[N, 1, H, W]` batch of the given indices.
    pub fn batch(&self, indices: &[usize], norm: &Normalization) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(indices.len() * self.hw.0 * self.hw.1);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| norm.apply(v)));
        }
        Tensor::new(vec![indices.len(), 1, self.hw.0, self.hw.1], data)
    }
}

/// One row of training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean minibatch loss over the epoch.
    pub loss: f64,
    /// Fraction of samples classified correctly by the parameters current
    /// at the time each minibatch was seen.
    pub accuracy: f64,
}

/// Trains `net` on `data` with Adam, shuffling with `cfg.seed` every epoch.
pub fn train(
    net: Network<f32>,
    data: &Dataset,
    pipeline: &SpectroPipeline,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    train_with_progress(net, data, pipeline, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    mut net: Network<f32>,
    data: &Dataset,
    pipeline: &SpectroPipeline,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    if data.hw() != net.config().input_hw || (pipeline.image_h, pipeline.image_w) != data.hw() {
        return Err(Error::shape(format!(
            "images {:?}, pipeline {:?}, network input {:?}",
            data.hw(),
            (pipeline.image_h, pipeline.image_w),
            net.config().input_hw
        )));
    }
    if data.label_set().len() != net.config().n_classes {
        return Err(Error::Config(format!(
            "{} labels for a {}-class network",
            data.label_set().len(),
            net.config().n_classes
        )));
    }
    let norm = data.normalization();
    let mut state = AdamState::new(net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let batch = data.batch(idx, &norm)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.target(i)).collect();
            let out = net.loss_grads_logits(&batch, &labels)?;
            loss_sum += out.loss as f64 * idx.len() as f64;
            correct += out
                .logits
                .iter()
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            step += 1;
            adam_step(net.params_mut(), &out.grads, &mut state, step, cfg)?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    let meta = TrainingMeta {
        epochs: cfg.epochs,
        final_loss: history.last().map_or(f64::NAN, |s| s.loss),
        seed: cfg.seed,
    };
    let checkpoint = Checkpoint::new(&net, data.label_set().to_vec(), norm, *pipeline, meta)?;
    Ok((checkpoint, history))
}
