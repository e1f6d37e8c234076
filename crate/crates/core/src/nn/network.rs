//! Residual CNN: stem conv -> residual stages -> global average pooling ->
//! linear head. The head's weights and the last stage's activations are
//! what class activation maps are built from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::conv::{backward_one, forward_one, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Input image `(height, width)`.
    pub input_hw: (usize, usize),
    /// Channel width of each stage; the stem outputs `channels_per_stage[0]`.
    pub channels_per_stage: Vec<usize>,
    /// Residual blocks in each stage.
    pub blocks_per_stage: Vec<usize>,
    /// Stride of the 3x3 stem conv (1 or 2).
    pub stem_stride: usize,
    pub n_classes: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_hw: (64, 64),
            channels_per_stage: vec![16, 32, 64],
            blocks_per_stage: vec![2, 2, 2],
            stem_stride: 2,
            n_classes: 2,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 {
            return err(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.channels_per_stage.is_empty() {
            return err("at least one stage is required".into());
        }
        if self.channels_per_stage.len() != self.blocks_per_stage.len() {
            return err(format!(
                "{} channel widths for {} stages",
                self.channels_per_stage.len(),
                self.blocks_per_stage.len()
            ));
        }
        if self.channels_per_stage.contains(&0) {
            return err("stage widths must be positive".into());
        }
        if self.input_hw.0 < 8 || self.input_hw.1 < 8 {
            return err(format!("input {:?} is smaller than 8x8", self.input_hw));
        }
        if !(self.stem_stride == 1 || self.stem_stride == 2) {
            return err(format!(
                "stem_stride must be 1 or 2, got {}",
                self.stem_stride
            ));
        }
        Ok(())
    }

    /// Spatial size of the final feature map.
    pub fn feature_hw(&self) -> (usize, usize) {
        let stem = ConvGeom {
            in_c: 1,
            out_c: 1,
            kernel: 3,
            stride: self.stem_stride,
            padding: 1,
        };
        let (mut h, mut w) = stem.out_dims(self.input_hw.0, self.input_hw.1);
        let down = ConvGeom {
            in_c: 1,
            out_c: 1,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        for _ in 1..self.channels_per_stage.len() {
            (h, w) = down.out_dims(h, w);
        }
        (h, w)
    }

    pub fn feature_channels(&self) -> usize {
        *self.channels_per_stage.last().expect("validated")
    }
}

/// A named learnable array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvLayer {
    geom: ConvGeom,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    conv1: ConvLayer,
    conv2: ConvLayer,
    /// 1x1 projection on the shortcut when stride or width changes.
    proj: Option<ConvLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    params: Vec<Param<T>>,
    stem: ConvLayer,
    blocks: Vec<Block>,
    fc_weight: usize,
    fc_bias: usize,
}

struct LayoutBuilder {
    shapes: Vec<(String, Vec<usize>)>,
}

impl LayoutBuilder {
    fn conv(&mut self, name: &str, geom: ConvGeom) -> ConvLayer {
        let weight = self.shapes.len();
        self.shapes
            .push((format!("{name}.weight"), geom.weight_shape()));
        self.shapes.push((format!("{name}.bias"), vec![geom.out_c]));
        ConvLayer {
            geom,
            weight,
            bias: weight + 1,
        }
    }
}

fn conv3(in_c: usize, out_c: usize, stride: usize) -> ConvGeom {
    ConvGeom {
        in_c,
        out_c,
        kernel: 3,
        stride,
        padding: 1,
    }
}

impl<T: Scalar> Network<T> {
    /// Builds the layer layout with He-normal weights and zero biases drawn
    /// from `config.seed`, in parameter declaration order.
    ///
    /// The head's weight columns are then centred across classes. Cross-
    /// entropy gradients of the head sum to zero over classes, so whatever
    /// class-mean row the head starts with is never trained; centring makes
    /// it zero, which keeps an untrained common term out of every class
    /// activation map. Centred entries are rescaled to keep the He variance.
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(net.config.seed);
        for p in &mut net.params {
            if !p.name.ends_with(".weight") {
                continue;
            }
            let fan_in: usize = p.value.shape()[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in p.value.data_mut() {
                *v = T::from_f64(normal.sample(&mut rng));
            }
        }
        let (k, c) = (net.config.n_classes, net.config.feature_channels());
        let scale = (k as f64 / (k - 1) as f64).sqrt();
        let fc = net.params[net.fc_weight].value.data_mut();
        for ch in 0..c {
            let mean = (0..k).map(|r| fc[r * c + ch].as_f64()).sum::<f64>() / k as f64;
            for r in 0..k {
                fc[r * c + ch] = T::from_f64((fc[r * c + ch].as_f64() - mean) * scale);
            }
        }
        Ok(net)
    }

    /// Same layout with every parameter zero.
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut b = LayoutBuilder { shapes: Vec::new() };
        let c0 = config.channels_per_stage[0];
        let stem = b.conv("stem", conv3(1, c0, config.stem_stride));
        let mut blocks = Vec::new();
        let mut in_c = c0;
        for (s, (&width, &n_blocks)) in config
            .channels_per_stage
            .iter()
            .zip(&config.blocks_per_stage)
            .enumerate()
        {
            for k in 0..n_blocks {
                let stride = if s > 0 && k == 0 { 2 } else { 1 };
                let name = format!("stage{s}.block{k}");
                let conv1 = b.conv(&format!("{name}.conv1"), conv3(in_c, width, stride));
                let conv2 = b.conv(&format!("{name}.conv2"), conv3(width, width, 1));
                let proj = (stride != 1 || in_c != width).then(|| {
                    b.conv(
                        &format!("{name}.proj"),
                        ConvGeom {
                            in_c,
                            out_c: width,
                            kernel: 1,
                            stride,
                            padding: 0,
                        },
                    )
                });
                blocks.push(Block { conv1, conv2, proj });
                in_c = width;
            }
            if n_blocks == 0 && s > 0 {
                return Err(Error::Config(format!(
                    "stage {s} has no blocks; every stage after the first needs one to downsample"
                )));
            }
        }
        if in_c != config.feature_channels() {
            return Err(Error::Config(
                "last stage has no blocks, so its width is never reached".into(),
            ));
        }
        let fc_weight = b.shapes.len();
        b.shapes
            .push(("fc.weight".into(), vec![config.n_classes, in_c]));
        b.shapes.push(("fc.bias".into(), vec![config.n_classes]));
        let params = b
            .shapes
            .into_iter()
            .map(|(name, shape)| Param {
                name,
                value: Tensor::zeros(shape),
            })
            .collect();
        Ok(Self {
            config,
            params,
            stem,
            blocks,
            fc_weight,
            fc_bias: fc_weight + 1,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    /// Replaces all parameters; names and shapes must match the layout.
    pub fn set_params(&mut self, params: Vec<Param<T>>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (have, new) in self.params.iter().zip(&params) {
            if have.name != new.name || have.value.shape() != new.value.shape() {
                return Err(Error::shape(format!(
                    "parameter {} {:?} does not match layout {} {:?}",
                    new.name,
                    new.value.shape(),
                    have.name,
                    have.value.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// `[n_classes, feature_channels]`.
    pub fn fc_weight(&self) -> &Tensor<T> {
        &self.params[self.fc_weight].value
    }

    pub fn fc_bias(&self) -> &[T] {
        self.params[self.fc_bias].value.data()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            stem: self.stem,
            blocks: self.blocks.clone(),
            fc_weight: self.fc_weight,
            fc_bias: self.fc_bias,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let (h, w) = self.config.input_hw;
        match *batch.shape() {
            [n, 1, bh, bw] if bh == h && bw == w => Ok(n),
            _ => Err(Error::shape(format!(
                "batch must be [N, 1, {h}, {w}], got {:?}",
                batch.shape()
            ))),
        }
    }

    fn w(&self, idx: usize) -> &[T] {
        self.params[idx].value.data()
    }

    fn forward_one(&self, x: &[T]) -> Trace<T> {
        let (mut h, mut w) = self.config.input_hw;
        let mut stem_cols = Vec::new();
        let mut act = forward_one(
            &self.stem.geom,
            self.w(self.stem.weight),
            self.w(self.stem.bias),
            x,
            h,
            w,
            &mut stem_cols,
        );
        relu(&mut act);
        (h, w) = self.stem.geom.out_dims(h, w);
        let stem_out = act.clone();
        let stem_hw = (h, w);

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let in_hw = (h, w);
            let mut cols1 = Vec::new();
            let mut mid = forward_one(
                &b.conv1.geom,
                self.w(b.conv1.weight),
                self.w(b.conv1.bias),
                &act,
                h,
                w,
                &mut cols1,
            );
            relu(&mut mid);
            let mid_hw = b.conv1.geom.out_dims(h, w);
            let mut cols2 = Vec::new();
            let mut out = forward_one(
                &b.conv2.geom,
                self.w(b.conv2.weight),
                self.w(b.conv2.bias),
                &mid,
                mid_hw.0,
                mid_hw.1,
                &mut cols2,
            );
            let mut proj_cols = Vec::new();
            match &b.proj {
                Some(p) => {
                    let s = forward_one(
                        &p.geom,
                        self.w(p.weight),
                        self.w(p.bias),
                        &act,
                        h,
                        w,
                        &mut proj_cols,
                    );
                    add_assign(&mut out, &s);
                }
                None => add_assign(&mut out, &act),
            }
            relu(&mut out);
            act = out.clone();
            (h, w) = mid_hw;
            blocks.push(BlockTrace {
                in_hw,
                mid_hw,
                cols1,
                mid,
                cols2,
                proj_cols,
                out,
            });
        }

        let c = self.config.feature_channels();
        let hw = h * w;
        // The head is accumulated in f64 so that, in single precision too,
        // the logits equal the spatial mean of the class activation maps
        // up to one final rounding.
        let gap64: Vec<f64> = act
            .chunks_exact(hw)
            .map(|ch| ch.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64)
            .collect();
        let fc = self.w(self.fc_weight);
        let logits: Vec<T> = self
            .w(self.fc_bias)
            .iter()
            .enumerate()
            .map(|(r, b)| {
                let row = &fc[r * c..(r + 1) * c];
                let dot: f64 = row.iter().zip(&gap64).map(|(w, g)| w.as_f64() * g).sum();
                T::from_f64(b.as_f64() + dot)
            })
            .collect();
        let gap: Vec<T> = gap64.into_iter().map(T::from_f64).collect();
        Trace {
            stem_cols,
            stem_out,
            stem_hw,
            blocks,
            features: act,
            feature_hw: (h, w),
            gap,
            logits,
        }
    }

    /// Accumulates the parameter gradients of one sample given `dlogits`.
    fn backward_one(&self, t: &Trace<T>, dlogits: &[T], grads: &mut [Vec<T>]) {
        let c = self.config.feature_channels();
        let k = self.config.n_classes;
        let (fh, fw) = t.feature_hw;
        let hw = fh * fw;

        T::gemm(
            k,
            1,
            c,
            T::one(),
            dlogits,
            false,
            &t.gap,
            false,
            T::one(),
            &mut grads[self.fc_weight],
        );
        for (g, d) in grads[self.fc_bias].iter_mut().zip(dlogits) {
            *g = *g + *d;
        }
        let mut dgap = vec![T::zero(); c];
        T::gemm(
            c,
            k,
            1,
            T::one(),
            self.w(self.fc_weight),
            true,
            dlogits,
            false,
            T::zero(),
            &mut dgap,
        );
        let scale = T::one() / T::from_f64(hw as f64);
        let mut d: Vec<T> = dgap
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * scale, hw))
            .collect();

        for (b, bt) in self.blocks.iter().zip(&t.blocks).rev() {
            relu_backward(&mut d, &bt.out);
            let (h, w) = bt.in_hw;
            let dshort = match &b.proj {
                Some(p) => {
                    let (gw, gb) = two_mut(grads, p.weight, p.bias);
                    backward_one(
                        &p.geom,
                        self.w(p.weight),
                        &d,
                        &bt.proj_cols,
                        h,
                        w,
                        gw,
                        gb,
                        true,
                    )
                    .expect("dx requested")
                }
                None => d.clone(),
            };
            let (gw, gb) = two_mut(grads, b.conv2.weight, b.conv2.bias);
            let mut dmid = backward_one(
                &b.conv2.geom,
                self.w(b.conv2.weight),
                &d,
                &bt.cols2,
                bt.mid_hw.0,
                bt.mid_hw.1,
                gw,
                gb,
                true,
            )
            .expect("dx requested");
            relu_backward(&mut dmid, &bt.mid);
            let (gw, gb) = two_mut(grads, b.conv1.weight, b.conv1.bias);
            let mut dx = backward_one(
                &b.conv1.geom,
                self.w(b.conv1.weight),
                &dmid,
                &bt.cols1,
                h,
                w,
                gw,
                gb,
                true,
            )
            .expect("dx requested");
            add_assign(&mut dx, &dshort);
            d = dx;
        }

        relu_backward(&mut d, &t.stem_out);
        let (h, w) = self.config.input_hw;
        let _ = t.stem_hw;
        let (gw, gb) = two_mut(grads, self.stem.weight, self.stem.bias);
        backward_one(
            &self.stem.geom,
            self.w(self.stem.weight),
            &d,
            &t.stem_cols,
            h,
            w,
            gw,
            gb,
            false,
        );
    }

    /// Logits `[N, K]` and final-stage features `[N, C, h, w]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = self.check_batch(batch)?;
        let (fh, fw) = self.config.feature_hw();
        let c = self.config.feature_channels();
        let mut logits = Vec::with_capacity(n * self.config.n_classes);
        let mut feats = Vec::with_capacity(n * c * fh * fw);
        for i in 0..n {
            let t = self.forward_one(batch.item(i));
            logits.extend_from_slice(&t.logits);
            feats.extend_from_slice(&t.features);
        }
        Ok((
            Tensor::new(vec![n, self.config.n_classes], logits)?,
            Tensor::new(vec![n, c, fh, fw], feats)?,
        ))
    }

    /// Logits only, one row per sample.
    pub fn predict_logits(&self, batch: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let n = self.check_batch(batch)?;
        Ok((0..n)
            .map(|i| self.forward_one(batch.item(i)).logits)
            .collect())
    }

    /// Mean cross-entropy over the batch and its gradient for every
    /// parameter, in declaration order.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<(T, Vec<Param<T>>)> {
        let out = self.loss_grads_logits(batch, labels)?;
        Ok((out.loss, out.grads))
    }

    pub(crate) fn loss_grads_logits(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<StepOutput<T>> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {n} samples",
                labels.len()
            )));
        }
        let k = self.config.n_classes;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} outside [0, {k})")));
        }
        let mut grads: Vec<Vec<T>> = self
            .params
            .iter()
            .map(|p| vec![T::zero(); p.value.len()])
            .collect();
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut loss = T::zero();
        let mut all_logits = Vec::with_capacity(n);
        for (i, &label) in labels.iter().enumerate() {
            let t = self.forward_one(batch.item(i));
            let probs = softmax(&t.logits);
            loss = loss - log_softmax_at(&t.logits, label);
            let dlogits: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(j, &p)| (if j == label { p - T::one() } else { p }) * inv_n)
                .collect();
            self.backward_one(&t, &dlogits, &mut grads);
            all_logits.push(t.logits);
        }
        let grads = self
            .params
            .iter()
            .zip(grads)
            .map(|(p, g)| Param {
                name: p.name.clone(),
                value: Tensor::new(p.value.shape().to_vec(), g).expect("layout shape"),
            })
            .collect();
        Ok(StepOutput {
            loss: loss * inv_n,
            logits: all_logits,
            grads,
        })
    }
}

pub(crate) struct StepOutput<T> {
    pub loss: T,
    pub logits: Vec<Vec<T>>,
    pub grads: Vec<Param<T>>,
}

struct BlockTrace<T> {
    in_hw: (usize, usize),
    mid_hw: (usize, usize),
    cols1: Vec<T>,
    mid: Vec<T>,
    cols2: Vec<T>,
    proj_cols: Vec<T>,
    out: Vec<T>,
}

struct Trace<T> {
    stem_cols: Vec<T>,
    stem_out: Vec<T>,
    stem_hw: (usize, usize),
    blocks: Vec<BlockTrace<T>>,
    features: Vec<T>,
    feature_hw: (usize, usize),
    gap: Vec<T>,
    logits: Vec<T>,
}

fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn relu<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `d` wherever the ReLU output was not positive.
fn relu_backward<T: Scalar>(d: &mut [T], out: &[T]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

fn add_assign<T: Scalar>(a: &mut [T], b: &[T]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x = *x + y;
    }
}

/// Numerically stable softmax of one logit row.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at<T: Scalar>(logits: &[T], idx: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    logits[idx] - lse
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
