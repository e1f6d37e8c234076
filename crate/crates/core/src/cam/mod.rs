//! Class activation maps: the linear head's weights applied to the final
//! convolutional features at every spatial position.

mod overlay;
mod profile;

pub use overlay::{overlay, ramp, RgbImage, DEFAULT_ALPHA, RAMP_STOPS};
pub use profile::{
    bands_from_edges, default_bands, frequency_profile, BandImportance, FrequencyImportance,
    DEFAULT_BAND_EDGES,
};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nn::{argmax, softmax, Checkpoint, Network, Scalar, Tensor};
use crate::signal::{resize_bilinear, AudioClip, Spectrogram};

/// `raw[y, x] = sum_c fc_weights[class_id, c] * features[c, y, x]`, computed
/// in f64. `features` is `[C, h, w]` or a single-item `[1, C, h, w]`.
pub fn compute_cam<T: Scalar>(
    features: &Tensor<T>,
    fc_weights: &Tensor<T>,
    class_id: usize,
) -> Result<Grid> {
    let (c, h, w) = match *features.shape() {
        [c, h, w] | [1, c, h, w] => (c, h, w),
        _ => {
            return Err(Error::shape(format!(
                "features must be [C, h, w], got {:?}",
                features.shape()
            )))
        }
    };
    let &[k, wc] = fc_weights.shape() else {
        return Err(Error::shape(format!(
            "fc weights must be [K, C], got {:?}",
            fc_weights.shape()
        )));
    };
    if wc != c {
        return Err(Error::shape(format!(
            "{c} feature channels, fc expects {wc}"
        )));
    }
    if class_id >= k {
        return Err(Error::invalid(format!("class {class_id} outside [0, {k})")));
    }
    let weights = &fc_weights.data()[class_id * c..(class_id + 1) * c];
    let feats = features.data();
    let hw = h * w;
    let mut raw = vec![0.0; hw];
    for (ch, wt) in weights.iter().enumerate() {
        let wt = wt.as_f64();
        for (r, f) in raw.iter_mut().zip(&feats[ch * hw..(ch + 1) * hw]) {
            *r += wt * f.as_f64();
        }
    }
    Grid::from_vec(h, w, raw)
}

/// Min-max normalization to [0, 1]; a constant map becomes all zeros.
pub fn normalize_cam(raw: &Grid) -> Grid {
    let (lo, hi) = raw.min_max();
    if hi > lo {
        raw.map(|v| (v - lo) / (hi - lo))
    } else {
        raw.map(|_| 0.0)
    }
}

/// Bilinear resize of a map onto the spectrogram's `[bins x frames]` grid.
pub fn upsample_cam(normalized: &Grid, spec: &Spectrogram) -> Result<Grid> {
    resize_bilinear(normalized, spec.n_bins(), spec.n_frames())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamMap {
    pub raw: Grid,
    pub normalized: Grid,
    /// `normalized` at spectrogram resolution.
    pub upsampled: Grid,
    pub class_id: usize,
    pub logit: f64,
}

/// Everything needed to explain one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub spectrogram: Spectrogram,
    pub cam: CamMap,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

/// A checkpoint with its network built once, for explaining many clips.
#[derive(Debug, Clone)]
pub struct Explainer {
    checkpoint: Checkpoint,
    net: Network<f32>,
}

impl Explainer {
    pub fn new(checkpoint: Checkpoint) -> Result<Self> {
        let net = checkpoint.network()?;
        Ok(Self { checkpoint, net })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    /// CAM for `class_id`, or for the predicted class when `None`.
    pub fn explain(&self, clip: &AudioClip, class_id: Option<usize>) -> Result<Explanation> {
        let pipeline = &self.checkpoint.pipeline;
        let spectrogram = pipeline.spectrogram(clip)?;
        let image = resize_bilinear(&spectrogram.values, pipeline.image_h, pipeline.image_w)?;
        let input = self.checkpoint.input(&image)?;
        let (logits, features) = self.net.forward(&input)?;
        let logits = logits.item(0);
        let predicted = argmax(logits);
        let class_id = class_id.unwrap_or(predicted);
        let raw = compute_cam(&features, self.net.fc_weight(), class_id)?;
        let normalized = normalize_cam(&raw);
        let upsampled = upsample_cam(&normalized, &spectrogram)?;
        Ok(Explanation {
            cam: CamMap {
                raw,
                normalized,
                upsampled,
                class_id,
                logit: logits[class_id] as f64,
            },
            probabilities: softmax(logits).iter().map(|&p| p as f64).collect(),
            predicted,
            spectrogram,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkConfig;
    use crate::signal::{log_spectrogram, StftParams};

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn constant_channel_gives_constant_map() {
        let raw = compute_cam(
            &t(vec![1, 2, 3], vec![1.0; 6]),
            &t(vec![1, 1], vec![1.0]),
            0,
        )
        .unwrap();
        assert!(raw.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(raw.mean(), 1.0);
    }

    #[test]
    fn weighted_channel_sum() {
        let feats = t(vec![2, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let w = t(vec![2, 2], vec![0.0, 0.0, 2.0, -1.0]);
        let raw = compute_cam(&feats, &w, 1).unwrap();
        assert_eq!(raw.as_slice(), &[2.0, -1.0, -1.0, 2.0]);
        let zero = compute_cam(&feats, &w, 0).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_class_or_shapes() {
        let feats = t(vec![2, 2, 2], vec![0.0; 8]);
        assert!(matches!(
            compute_cam(&feats, &t(vec![2, 2], vec![0.0; 4]), 2),
            Err(Error::InvalidInput(_))
        ));
        assert!(compute_cam(&feats, &t(vec![2, 3], vec![0.0; 6]), 0).is_err());
        assert!(compute_cam(
            &t(vec![4, 2], vec![0.0; 8]),
            &t(vec![1, 4], vec![0.0; 4]),
            0
        )
        .is_err());
    }

    #[test]
    fn normalization_examples() {
        let raw = Grid::from_rows(&[[0.0, 5.0], [10.0, 2.5]]).unwrap();
        let n = normalize_cam(&raw);
        assert_eq!(n.as_slice(), &[0.0, 0.5, 1.0, 0.25]);
        let c = normalize_cam(&Grid::filled(3, 3, -4.0));
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_ignores_positive_affine_maps() {
        let raw = Grid::from_fn(4, 5, |r, c| ((r * 7 + c * 3) % 11) as f64 - 4.0);
        let base = normalize_cam(&raw);
        for (a, b) in [(0.5, 3.0), (12.0, -100.0), (1e-3, 0.0)] {
            let n = normalize_cam(&raw.map(|v| a * v + b));
            for (x, y) in n.as_slice().iter().zip(base.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    fn tone_spec() -> Spectrogram {
        let samples: Vec<f64> = (0..4000).map(|i| 0.5 * (i as f64 * 0.3).sin()).collect();
        let clip = AudioClip::new(samples, 16000, "tone", "tone").unwrap();
        log_spectrogram(&clip, &StftParams::default()).unwrap()
    }

    #[test]
    fn upsampling_bounds_and_shapes() {
        let spec = tone_spec();
        let one = upsample_cam(&Grid::filled(1, 1, 0.3), &spec).unwrap();
        assert_eq!(one.dims(), (spec.n_bins(), spec.n_frames()));
        assert!(one.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let same = Grid::from_fn(spec.n_bins(), spec.n_frames(), |r, c| {
            ((r + c) % 3) as f64 / 2.0
        });
        assert_eq!(upsample_cam(&same, &spec).unwrap(), same);
        let small = normalize_cam(&Grid::from_fn(3, 4, |r, c| (r * 4 + c) as f64));
        let up = upsample_cam(&small, &spec).unwrap();
        assert!(up.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gap_identity_through_the_explainer() {
        let net = Network::<f32>::new(NetworkConfig {
            input_hw: (16, 16),
            channels_per_stage: vec![4, 8],
            blocks_per_stage: vec![1, 1],
            stem_stride: 2,
            n_classes: 3,
            seed: 8,
        })
        .unwrap();
        let pipeline = crate::signal::SpectroPipeline {
            image_h: 16,
            image_w: 16,
            ..Default::default()
        };
        let ckpt = Checkpoint::new(
            &net,
            vec!["a".into(), "b".into(), "c".into()],
            crate::nn::Normalization {
                mean: -50.0,
                std: 20.0,
            },
            pipeline,
            crate::nn::TrainingMeta {
                epochs: 0,
                final_loss: f64::NAN,
                seed: 0,
            },
        )
        .unwrap();
        let ex = Explainer::new(ckpt).unwrap();
        let samples: Vec<f64> = (0..4000).map(|i| 0.5 * (i as f64 * 0.3).sin()).collect();
        let clip = AudioClip::new(samples, 16000, "tone", "tone").unwrap();
        for class in 0..3 {
            let e = ex.explain(&clip, Some(class)).unwrap();
            let bias = ex.network().fc_bias()[class] as f64;
            assert!((e.cam.raw.mean() - (e.cam.logit - bias)).abs() < 1e-5);
            assert_eq!(
                e.cam.upsampled.dims(),
                (e.spectrogram.n_bins(), e.spectrogram.n_frames())
            );
        }
        let p: f64 = ex.explain(&clip, None).unwrap().probabilities.iter().sum();
        assert!((p - 1.0).abs() < 1e-6);
    }
}
