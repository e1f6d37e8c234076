//! Dataset manifests: which file belongs to which class and split.
//!
//! On disk:
//!
//! ```text
//! # labels = i,u,ae,er,aa
//! # seed = 7
//! path,label,split
//! i/i_00000.wav,i,train
//! ```
//!
//! Paths are stored as given, normally relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kv::{join_list, split_list, KvList};
use crate::signal::AudioClip;

pub const MANIFEST_HEADER: &str = "path,label,split";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub label_set: Vec<String>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Entry counts per `(label, split)`.
    pub fn counts(&self) -> BTreeMap<(String, Split), usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.label.clone(), e.split)).or_insert(0) += 1;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut pre = KvList::new();
        pre.set("labels", join_list(&self.label_set));
        pre.set("seed", self.seed);
        let mut out = pre.render("# ");
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.path, e.label, e.split));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pre = KvList::new();
        let mut entries = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if !seen_header && rest.contains('=') {
                    pre.push_line(rest.trim(), line_no)?;
                }
                continue;
            }
            if !seen_header {
                if line != MANIFEST_HEADER {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected header {MANIFEST_HEADER:?}"),
                    });
                }
                seen_header = true;
                continue;
            }
            // Paths may contain commas; label and split never do.
            let mut it = line.rsplitn(3, ',');
            let (split, label, path) = match (it.next(), it.next(), it.next()) {
                (Some(s), Some(l), Some(p)) if !p.is_empty() && !l.is_empty() => (s, l, p),
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "expected `path,label,split`".into(),
                    })
                }
            };
            let split = split.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("unknown split {split:?}"),
            })?;
            entries.push(ManifestEntry {
                path: path.to_string(),
                label: label.to_string(),
                split,
            });
        }
        if !seen_header {
            return Err(Error::format("manifest has no header row"));
        }
        let label_set: Vec<String> = split_list(pre.require("labels")?)
            .map(str::to_string)
            .collect();
        let seed = pre.parse_value("seed")?;
        let manifest = Self {
            entries,
            label_set,
            seed,
        };
        if let Some(e) = manifest
            .entries
            .iter()
            .find(|e| manifest.label_index(&e.label).is_none())
        {
            return Err(Error::format(format!(
                "entry {:?} has label {:?} outside the label set",
                e.path, e.label
            )));
        }
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Resolves an entry path against the directory holding the manifest.
    pub fn resolve(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }
}

/// Stratified, seeded train/test split. Each clip's `source_id` becomes the
/// entry path. Within a class the members are shuffled and the first
/// `round(n * train_fraction)` go to train; classes appear in label order.
pub fn build_manifest(
    clips: &[AudioClip],
    label_set: &[String],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_class: Vec<Vec<&AudioClip>> = vec![Vec::new(); label_set.len()];
    for c in clips {
        let idx = label_set
            .iter()
            .position(|l| *l == c.label)
            .ok_or_else(|| Error::invalid(format!("clip label {:?} not in label set", c.label)))?;
        by_class[idx].push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(clips.len());
    for (members, label) in by_class.iter_mut().zip(label_set) {
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * train_fraction).round() as usize;
        for (i, c) in members.iter().enumerate() {
            entries.push(ManifestEntry {
                path: c.source_id.clone(),
                label: label.clone(),
                split: if i < n_train {
                    Split::Train
                } else {
                    Split::Test
                },
            });
        }
    }
    Ok(DatasetManifest {
        entries,
        label_set: label_set.to_vec(),
        seed,
    })
}

/// Uniform random subsample of at most `cap` clips per label, keeping the
/// input order of the survivors.
pub fn subsample_per_class(clips: Vec<AudioClip>, cap: usize, seed: u64) -> Vec<AudioClip> {
    let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in clips.iter().enumerate() {
        by_label.entry(c.label.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; clips.len()];
    for idx in by_label.values_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(cap) {
            keep[i] = true;
        }
    }
    clips
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}
