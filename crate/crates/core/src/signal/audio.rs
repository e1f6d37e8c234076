use crate::error::{Error, Result};

/// A mono sample buffer with its rate, class label and provenance tag.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    pub label: String,
    pub source_id: String,
}

impl AudioClip {
    /// Validates samples (nonempty, finite, within [-1, 1]) and rate.
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        label: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("audio clip has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::invalid(format!(
                "sample {i} = {} is not a finite value in [-1, 1]",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            label: label.into(),
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(AudioClip::new(vec![], 16000, "x", "t").is_err());
        assert!(AudioClip::new(vec![0.0, 1.5], 16000, "x", "t").is_err());
        assert!(AudioClip::new(vec![f64::NAN], 16000, "x", "t").is_err());
        assert!(AudioClip::new(vec![0.0], 0, "x", "t").is_err());
    }

    #[test]
    fn duration_in_seconds() {
        let c = AudioClip::new(vec![0.0; 22050], 22050, "i", "t").unwrap();
        assert_eq!(c.duration(), 1.0);
        assert_eq!(c.nyquist(), 11025.0);
    }
}
