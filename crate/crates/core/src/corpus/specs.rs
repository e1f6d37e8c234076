//! The synthesis table file: vowel and consonant specs as dotted
//! `key = value` lines (`vowel.<name>.<field>`, `consonant.<name>.<field>`).

use std::path::Path;

use super::synth::{ConsonantSpec, VowelSpec};
use crate::error::{Error, Result};
use crate::kv::KvList;

pub const DEFAULT_SPECS: &str = include_str!("../../data/speech_specs.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSpecs {
    pub vowels: Vec<VowelSpec>,
    pub consonants: Vec<ConsonantSpec>,
}

impl Default for SpeechSpecs {
    fn default() -> Self {
        Self::parse(DEFAULT_SPECS).expect("built-in speech specs are valid")
    }
}

#[derive(Default)]
struct VowelFields {
    formants: Option<[f64; 4]>,
    bandwidths: Option<[f64; 4]>,
    f0_range: Option<(f64, f64)>,
    duration_range: Option<(f64, f64)>,
}

#[derive(Default)]
struct ConsonantFields {
    band: Option<(f64, f64)>,
    burst: Option<bool>,
    duration_range: Option<(f64, f64)>,
}

fn floats<const N: usize>(key: &str, raw: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = crate::kv::split_list(raw)
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("{key}: {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    v.try_into().map_err(|v: Vec<f64>| {
        Error::Config(format!("{key}: expected {N} numbers, got {}", v.len()))
    })
}

fn pair(key: &str, raw: &str) -> Result<(f64, f64)> {
    let [a, b] = floats::<2>(key, raw)?;
    Ok((a, b))
}

fn missing(kind: &str, name: &str, field: &str) -> Error {
    Error::Config(format!("{kind} {name:?} is missing `{field}`"))
}

impl SpeechSpecs {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvList::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut formant_jitter = 0.0;
        let mut f0_jitter = 0.0;
        let mut vowels: Vec<(String, VowelFields)> = Vec::new();
        let mut consonants: Vec<(String, ConsonantFields)> = Vec::new();

        for (key, value) in kv.iter() {
            let parts: Vec<&str> = key.split('.').collect();
            match parts[..] {
                ["formant_jitter"] => formant_jitter = floats::<1>(key, value)?[0],
                ["f0_jitter"] => f0_jitter = floats::<1>(key, value)?[0],
                ["vowel", name, field] => {
                    let slot = entry(&mut vowels, name);
                    match field {
                        "formants" => slot.formants = Some(floats(key, value)?),
                        "bandwidths" => slot.bandwidths = Some(floats(key, value)?),
                        "f0_range" => slot.f0_range = Some(pair(key, value)?),
                        "duration_range" => slot.duration_range = Some(pair(key, value)?),
                        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                    }
                }
                ["consonant", name, field] => {
                    let slot = entry(&mut consonants, name);
                    match field {
                        "band" => slot.band = Some(pair(key, value)?),
                        "burst" => {
                            slot.burst = Some(value.parse().map_err(|_| {
                                Error::Config(format!("{key}: expected true or false"))
                            })?)
                        }
                        "duration_range" => slot.duration_range = Some(pair(key, value)?),
                        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }

        let vowels = vowels
            .into_iter()
            .map(|(name, f)| {
                let spec = VowelSpec {
                    formants: f
                        .formants
                        .ok_or_else(|| missing("vowel", &name, "formants"))?,
                    bandwidths: f
                        .bandwidths
                        .ok_or_else(|| missing("vowel", &name, "bandwidths"))?,
                    f0_range: f
                        .f0_range
                        .ok_or_else(|| missing("vowel", &name, "f0_range"))?,
                    duration_range: f
                        .duration_range
                        .ok_or_else(|| missing("vowel", &name, "duration_range"))?,
                    formant_jitter,
                    f0_jitter,
                    name,
                };
                spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;
        let consonants = consonants
            .into_iter()
            .map(|(name, f)| {
                Ok(ConsonantSpec {
                    noise_band: f.band.ok_or_else(|| missing("consonant", &name, "band"))?,
                    burst: f
                        .burst
                        .ok_or_else(|| missing("consonant", &name, "burst"))?,
                    duration_range: f
                        .duration_range
                        .ok_or_else(|| missing("consonant", &name, "duration_range"))?,
                    name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vowels, consonants })
    }

    pub fn vowel(&self, name: &str) -> Option<&VowelSpec> {
        self.vowels.iter().find(|v| v.name == name)
    }

    pub fn consonant(&self, name: &str) -> Option<&ConsonantSpec> {
        self.consonants.iter().find(|c| c.name == name)
    }
}

fn entry<'a, T: Default>(list: &'a mut Vec<(String, T)>, name: &str) -> &'a mut T {
    let idx = match list.iter().position(|(n, _)| n == name) {
        Some(i) => i,
        None => {
            list.push((name.to_string(), T::default()));
            list.len() - 1
        }
    };
    &mut list[idx].1
}
