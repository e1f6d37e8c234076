//! Audio to fixed-size log-magnitude spectrogram images.

mod audio;
mod resize;
mod spectrogram;
mod stft;
pub mod wav;

pub use audio::AudioClip;
pub use resize::resize_bilinear;
pub use spectrogram::{cap_frequency, log_spectrogram, Spectrogram, MAG_EPSILON};
pub use stft::{hann, stft, Stft, StftParams};

use crate::error::Result;
use crate::grid::Grid;

/// Clip -> dB spectrogram -> optional frequency cap -> bilinear resize.
///
/// Row 0 of the produced image is the lowest frequency bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectroPipeline {
    pub stft: StftParams,
    /// `None` keeps the full band up to Nyquist.
    pub f_max: Option<f64>,
    pub image_h: usize,
    pub image_w: usize,
}

impl Default for SpectroPipeline {
    fn default() -> Self {
        Self {
            stft: StftParams::default(),
            f_max: None,
            image_h: 64,
            image_w: 64,
        }
    }
}

impl SpectroPipeline {
    /// The (possibly capped) spectrogram the image is resized from.
    pub fn spectrogram(&self, clip: &AudioClip) -> Result<Spectrogram> {
        let spec = log_spectrogram(clip, &self.stft)?;
        match self.f_max {
            Some(f) => cap_frequency(&spec, f),
            None => Ok(spec),
        }
    }

    pub fn image(&self, clip: &AudioClip) -> Result<Grid> {
        let spec = self.spectrogram(clip)?;
        resize_bilinear(&spec.values, self.image_h, self.image_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capped_image_has_configured_size() {
        let clip = AudioClip::new(vec![0.1; 3000], 22050, "x", "t").unwrap();
        let p = SpectroPipeline {
            f_max: Some(4000.0),
            ..SpectroPipeline::default()
        };
        assert_eq!(p.spectrogram(&clip).unwrap().n_bins(), 93);
        assert_eq!(p.image(&clip).unwrap().dims(), (64, 64));
    }
}
