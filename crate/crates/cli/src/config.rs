//! Run configuration: one flat `key = value` file, overridable by flags of
//! the same names.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sxai_core::corpus::{voicing_classes, vowel_classes, ClassDef, Source, SpeechSpecs, Split};
use sxai_core::kv::{split_list, KvList};
use sxai_core::nn::{NetworkConfig, TrainConfig};
use sxai_core::signal::{SpectroPipeline, StftParams};
use sxai_core::{Error, Result};

/// One documented configuration key.
pub struct Key {
    pub name: &'static str,
    /// Default value, or a description of how it is derived.
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(name: &'static str, default: &'static str, doc: &'static str) -> Key {
    Key { name, default, doc }
}

/// Every key accepted in a config file or as a `--<key>` flag.
pub const KEYS: &[Key] = &[
    key(
        "experiment",
        "vowel_fullband",
        "vowel_fullband | vowel_4k | voiced_unvoiced | custom",
    ),
    key(
        "seed",
        "7",
        "seed for synthesis, the train/test split, initialization and shuffling",
    ),
    key("output_dir", "out", "directory receiving every artifact"),
    key("specs_file", "(built-in)", "speech spec file for synthesis"),
    key("clips_per_class", "1000", "synthetic clips per class"),
    key("sample_rate", "22050", "synthesis sample rate in Hz"),
    key(
        "train_fraction",
        "0.7",
        "fraction of each class assigned to the train split",
    ),
    key(
        "labels",
        "(preset)",
        "comma-separated class labels; required for custom",
    ),
    key(
        "f_max",
        "(preset)",
        "spectrogram cap in Hz or `nyquist`; required for custom",
    ),
    key(
        "manifest",
        "<output_dir>/corpus/manifest.csv",
        "dataset manifest to read or write",
    ),
    key("image_h", "64", "network input height (frequency rows)"),
    key("image_w", "64", "network input width (time columns)"),
    key("fft_size", "512", "STFT size in samples (power of two)"),
    key("window_len", "512", "Hann window length in samples"),
    key("hop", "128", "STFT hop in samples"),
    key("db_floor", "-80", "lowest dB value kept in spectrograms"),
    key("channels_per_stage", "8,16,32", "residual stage widths"),
    key("blocks_per_stage", "1,1,1", "residual blocks per stage"),
    key(
        "stem_stride",
        "2",
        "stride of the first convolution (1 or 2)",
    ),
    key("batch_size", "32", "minibatch size"),
    key("learning_rate", "0.0001", "Adam step size"),
    key("beta1", "0.9", "Adam first-moment decay"),
    key("beta2", "0.999", "Adam second-moment decay"),
    key("eps", "1e-8", "Adam denominator offset"),
    key("epochs", "30", "training epochs"),
    key(
        "checkpoint",
        "<output_dir>/model.sxai",
        "checkpoint to write (train) or read",
    ),
    key(
        "eval_split",
        "test",
        "manifest split scored by eval (train | test)",
    ),
    key(
        "explain_split",
        "test",
        "manifest split explained by explain (train | test)",
    ),
    key(
        "explain_per_class",
        "3",
        "clips per class rendered as overlay PNGs",
    ),
    key(
        "explain_clip",
        "(none)",
        "explain this WAV instead of a manifest split",
    ),
    key(
        "explain_class",
        "(predicted)",
        "class label whose map explain_clip renders",
    ),
    key(
        "band_edges",
        "700,1500,2500,4000",
        "interior frequency-band edges in Hz",
    ),
    key("alpha", "0.45", "heatmap opacity in overlays"),
    key("wav_dir", "(none)", "extract: directory of recordings"),
    key(
        "alignment_dir",
        "(none)",
        "extract: directory of `<stem>.csv` phone alignments",
    ),
    key(
        "keep",
        "(none)",
        "extract: comma-separated phone labels to keep",
    ),
    key(
        "strict",
        "false",
        "extract: abort on unpaired or malformed files",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    VowelFullband,
    Vowel4k,
    VoicedUnvoiced,
    Custom,
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vowel_fullband" => Ok(Self::VowelFullband),
            "vowel_4k" => Ok(Self::Vowel4k),
            "voiced_unvoiced" => Ok(Self::VoicedUnvoiced),
            "custom" => Ok(Self::Custom),
            other => Err(Error::Config(format!("unknown experiment {other:?}"))),
        }
    }
}

impl Experiment {
    /// The pinned spectrogram cap; `Some(None)` pins Nyquist.
    fn preset_f_max(self) -> Option<Option<f64>> {
        match self {
            Self::VowelFullband => Some(None),
            Self::Vowel4k | Self::VoicedUnvoiced => Some(Some(4000.0)),
            Self::Custom => None,
        }
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub specs: SpeechSpecs,
    pub clips_per_class: usize,
    pub sample_rate: u32,
    pub train_fraction: f64,
    pub labels: Vec<String>,
    pub pipeline: SpectroPipeline,
    pub manifest: PathBuf,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub checkpoint: PathBuf,
    pub eval_split: Split,
    pub explain_split: Split,
    pub explain_per_class: usize,
    pub explain_clip: Option<PathBuf>,
    pub explain_class: Option<String>,
    pub band_edges: Vec<f64>,
    pub alpha: f64,
    pub wav_dir: Option<PathBuf>,
    pub alignment_dir: Option<PathBuf>,
    pub keep: BTreeSet<String>,
    pub strict: bool,
}

fn value<T>(kv: &KvList, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    match kv.get(key) {
        None => Ok(default),
        Some(raw) => raw
            .parse()
            .map_err(|e| Error::Config(format!("{key} = {raw:?}: {e}"))),
    }
}

fn list<T>(kv: &KvList, key: &str, default: Vec<T>) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    match kv.get(key) {
        None => Ok(default),
        Some(raw) => split_list(raw)
            .map(|item| {
                item.parse()
                    .map_err(|e| Error::Config(format!("{key}: item {item:?}: {e}")))
            })
            .collect(),
    }
}

fn parse_f_max(raw: &str) -> Result<Option<f64>> {
    if raw == "nyquist" {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(f) if f.is_finite() && f > 0.0 => Ok(Some(f)),
        _ => Err(Error::Config(format!(
            "f_max = {raw:?}: expected Hz or `nyquist`"
        ))),
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` on top and resolves.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut kv = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                KvList::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => KvList::new(),
        };
        for (k, v) in overrides {
            kv.set(k, v);
        }
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &KvList) -> Result<Self> {
        if let Some(bad) = kv.keys().find(|k| !KEYS.iter().any(|key| key.name == *k)) {
            return Err(Error::Config(format!("unknown config key {bad:?}")));
        }
        let experiment: Experiment = value(kv, "experiment", Experiment::VowelFullband)?;
        let seed = value(kv, "seed", 7u64)?;
        let output_dir: PathBuf = value(kv, "output_dir", PathBuf::from("out"))?;
        let specs = match kv.get("specs_file") {
            Some(p) => SpeechSpecs::load(p)?,
            None => SpeechSpecs::default(),
        };

        let preset_labels = match experiment {
            Experiment::VowelFullband | Experiment::Vowel4k => Some(
                specs
                    .vowels
                    .iter()
                    .map(|v| v.name.clone())
                    .collect::<Vec<_>>(),
            ),
            Experiment::VoicedUnvoiced => Some(vec!["voiced".to_string(), "unvoiced".to_string()]),
            Experiment::Custom => None,
        };
        let labels: Vec<String> = match (kv.get("labels"), &preset_labels) {
            (Some(raw), preset) => {
                let given: Vec<String> = split_list(raw).map(String::from).collect();
                if let Some(p) = preset {
                    if *p != given {
                        return Err(Error::Config(format!(
                            "this experiment pins labels = {}",
                            p.join(",")
                        )));
                    }
                }
                given
            }
            (None, Some(p)) => p.clone(),
            (None, None) => return Err(Error::Config("custom experiments must set labels".into())),
        };
        if labels.len() < 2 {
            return Err(Error::Config("at least two labels are required".into()));
        }
        let f_max = match (kv.get("f_max"), experiment.preset_f_max()) {
            (Some(raw), Some(pinned)) => {
                if parse_f_max(raw)? != pinned {
                    return Err(Error::Config(format!(
                        "this experiment pins f_max = {}",
                        pinned.map_or("nyquist".to_string(), |f| f.to_string())
                    )));
                }
                pinned
            }
            (Some(raw), None) => parse_f_max(raw)?,
            (None, Some(pinned)) => pinned,
            (None, None) => return Err(Error::Config("custom experiments must set f_max".into())),
        };

        let stft = StftParams {
            fft_size: value(kv, "fft_size", 512)?,
            window_len: value(kv, "window_len", 512)?,
            hop: value(kv, "hop", 128)?,
            db_floor: value(kv, "db_floor", -80.0)?,
        };
        stft.validate().map_err(|e| Error::Config(e.to_string()))?;
        let pipeline = SpectroPipeline {
            stft,
            f_max,
            image_h: value(kv, "image_h", 64)?,
            image_w: value(kv, "image_w", 64)?,
        };
        let network = NetworkConfig {
            input_hw: (pipeline.image_h, pipeline.image_w),
            channels_per_stage: list(kv, "channels_per_stage", vec![8, 16, 32])?,
            blocks_per_stage: list(kv, "blocks_per_stage", vec![1, 1, 1])?,
            stem_stride: value(kv, "stem_stride", 2)?,
            n_classes: labels.len(),
            seed,
        };
        network.validate()?;
        let train = TrainConfig {
            batch_size: value(kv, "batch_size", 32)?,
            learning_rate: value(kv, "learning_rate", 1e-4)?,
            beta1: value(kv, "beta1", 0.9)?,
            beta2: value(kv, "beta2", 0.999)?,
            eps: value(kv, "eps", 1e-8)?,
            epochs: value(kv, "epochs", 30)?,
            seed,
        };
        train.validate()?;

        let alpha = value(kv, "alpha", 0.45)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha = {alpha} outside [0, 1]")));
        }
        let band_edges: Vec<f64> = list(kv, "band_edges", vec![700.0, 1500.0, 2500.0, 4000.0])?;
        if band_edges.windows(2).any(|w| w[1] <= w[0]) || band_edges.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config(
                "band_edges must be positive and increasing".into(),
            ));
        }
        let train_fraction = value(kv, "train_fraction", 0.7)?;
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction = {train_fraction} outside (0, 1)"
            )));
        }
        let explain_class: Option<String> = kv.get("explain_class").map(String::from);
        if let Some(c) = &explain_class {
            if !labels.contains(c) {
                return Err(Error::Config(format!("explain_class {c:?} is not a label")));
            }
        }
        let split = |key: &str| -> Result<Split> {
            kv.get(key)
                .map_or(Ok(Split::Test), |raw| raw.parse())
                .map_err(|e: Error| Error::Config(format!("{key}: {e}")))
        };

        Ok(Self {
            experiment,
            seed,
            manifest: kv.get("manifest").map_or_else(
                || output_dir.join("corpus").join("manifest.csv"),
                PathBuf::from,
            ),
            checkpoint: kv
                .get("checkpoint")
                .map_or_else(|| output_dir.join("model.sxai"), PathBuf::from),
            output_dir,
            specs,
            clips_per_class: value(kv, "clips_per_class", 1000)?,
            sample_rate: value(kv, "sample_rate", 22050)?,
            train_fraction,
            labels,
            pipeline,
            network,
            train,
            eval_split: split("eval_split")?,
            explain_split: split("explain_split")?,
            explain_per_class: value(kv, "explain_per_class", 3)?,
            explain_clip: kv.get("explain_clip").map(PathBuf::from),
            explain_class,
            band_edges,
            alpha,
            wav_dir: kv.get("wav_dir").map(PathBuf::from),
            alignment_dir: kv.get("alignment_dir").map(PathBuf::from),
            keep: kv
                .get("keep")
                .map(|raw| split_list(raw).map(String::from).collect())
                .unwrap_or_default(),
            strict: value(kv, "strict", false)?,
        })
    }

    /// Synthetic class definitions for this experiment.
    pub fn classes(&self) -> Result<Vec<ClassDef>> {
        match self.experiment {
            Experiment::VowelFullband | Experiment::Vowel4k => Ok(vowel_classes(&self.specs)),
            Experiment::VoicedUnvoiced => Ok(voicing_classes(&self.specs)),
            Experiment::Custom => self
                .labels
                .iter()
                .map(|l| {
                    let source = if let Some(v) = self.specs.vowel(l) {
                        Source::Vowel(v.clone())
                    } else if let Some(c) = self.specs.consonant(l) {
                        Source::Consonant(c.clone())
                    } else {
                        return Err(Error::Config(format!(
                            "label {l:?} names no vowel or consonant in the speech specs"
                        )));
                    };
                    Ok(ClassDef {
                        label: l.clone(),
                        sources: vec![source],
                    })
                })
                .collect(),
        }
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::from(
        "Configuration keys (config file `key = value` lines or `--<key> <value>` flags;\n\
         flags override the file, unknown keys are errors):\n",
    );
    for k in KEYS {
        out.push_str(&format!(
            "  {:width$}  {} [default: {}]\n",
            k.name, k.doc, k.default
        ));
    }
    out
}
