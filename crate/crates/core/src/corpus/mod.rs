//! Labelled clip sources: synthesis with known formant structure, and phone
//! segments cut from aligned recordings.

mod alignment;
mod manifest;
mod specs;
mod synth;

pub use alignment::{extract_segments, parse_alignment, SegmentAnnotation, ALIGNMENT_HEADER};
pub use manifest::{
    build_manifest, subsample_per_class, DatasetManifest, ManifestEntry, Split, MANIFEST_HEADER,
};
pub use specs::{SpeechSpecs, DEFAULT_SPECS};
pub use synth::{
    jittered_formants, synth_unvoiced, synth_vowel, ConsonantSpec, VowelSpec, PEAK_LEVEL,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

/// Per-clip seed: a SplitMix64 finalizer over the base seed and clip index,
/// so clips can be generated in any order or in parallel.
pub fn clip_seed(base_seed: u64, clip_index: u64) -> u64 {
    let mut z = base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(clip_index)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One generator a class can draw from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Vowel(VowelSpec),
    Consonant(ConsonantSpec),
}

impl Source {
    pub fn name(&self) -> &str {
        match self {
            Source::Vowel(v) => &v.name,
            Source::Consonant(c) => &c.name,
        }
    }

    /// Draws duration (and f0 for vowels) uniformly from the spec's ranges,
    /// then synthesizes with the same seed.
    pub fn generate(&self, sample_rate: u32, seed: u64) -> Result<AudioClip> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03);
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        match self {
            Source::Vowel(v) => {
                let duration = uniform(&mut rng, v.duration_range);
                let f0 = uniform(&mut rng, v.f0_range);
                synth_vowel(v, f0, duration, sample_rate, seed)
            }
            Source::Consonant(c) => {
                let duration = uniform(&mut rng, c.duration_range);
                synth_unvoiced(c, duration, sample_rate, seed)
            }
        }
    }
}

/// A class label and the sources its clips are drawn from, round-robin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub label: String,
    pub sources: Vec<Source>,
}

/// The five vowels, one class each.
pub fn vowel_classes(specs: &SpeechSpecs) -> Vec<ClassDef> {
    specs
        .vowels
        .iter()
        .map(|v| ClassDef {
            label: v.name.clone(),
            sources: vec![Source::Vowel(v.clone())],
        })
        .collect()
}

/// `voiced` pools every vowel, `unvoiced` every consonant.
pub fn voicing_classes(specs: &SpeechSpecs) -> Vec<ClassDef> {
    vec![
        ClassDef {
            label: "voiced".into(),
            sources: specs.vowels.iter().cloned().map(Source::Vowel).collect(),
        },
        ClassDef {
            label: "unvoiced".into(),
            sources: specs
                .consonants
                .iter()
                .cloned()
                .map(Source::Consonant)
                .collect(),
        },
    ]
}

/// Generates `per_class` clips for every class. Clip `j` of class `c` uses
/// seed `clip_seed(base_seed, c * per_class + j)` and source `j mod n_sources`.
/// `source_id` is set to `<label>/<label>_<j>.wav`.
pub fn synthesize_corpus(
    classes: &[ClassDef],
    per_class: usize,
    sample_rate: u32,
    base_seed: u64,
) -> Result<Vec<AudioClip>> {
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for (c, class) in classes.iter().enumerate() {
        if class.sources.is_empty() {
            return Err(Error::invalid(format!(
                "class {:?} has no sources",
                class.label
            )));
        }
        for j in 0..per_class {
            let seed = clip_seed(base_seed, (c * per_class + j) as u64);
            let mut clip = class.sources[j % class.sources.len()].generate(sample_rate, seed)?;
            clip.label = class.label.clone();
            clip.source_id = format!("{0}/{0}_{j:05}.wav", class.label);
            out.push(clip);
        }
    }
    Ok(out)
}
