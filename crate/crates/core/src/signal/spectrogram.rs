use super::stft::{stft, StftParams};
use super::AudioClip;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Added to magnitudes before taking the log so silent bins stay finite.
pub const MAG_EPSILON: f64 = 1e-10;

/// Log-magnitude spectrogram, `values[bin][frame]` in dB, bin 0 = 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Grid,
    pub sample_rate: u32,
    pub params: StftParams,
    /// Upper frequency of the retained band: Nyquist, or the cap applied.
    pub f_max: f64,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sample_rate as f64 / self.params.fft_size as f64
    }

    pub fn freq_of_bin(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.params.fft_size as f64
    }

    pub fn time_of_frame(&self, frame: usize) -> f64 {
        (frame * self.params.hop) as f64 / self.sample_rate as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }
}

/// `max(20 log10(|X| + 1e-10), db_floor)` for every STFT cell.
pub fn log_spectrogram(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram> {
    let x = stft(clip, params)?;
    let floor = params.db_floor;
    let values = Grid::from_fn(x.n_bins, x.n_frames, |k, t| {
        (20.0 * (x.get(k, t).norm() + MAG_EPSILON).log10()).max(floor)
    });
    Ok(Spectrogram {
        values,
        sample_rate: clip.sample_rate(),
        params: *params,
        f_max: clip.nyquist(),
    })
}

/// Keeps exactly the rows whose bin frequency is `<= f_max`.
pub fn cap_frequency(spec: &Spectrogram, f_max: f64) -> Result<Spectrogram> {
    let nyquist = spec.nyquist();
    if !(f_max > 0.0 && f_max <= nyquist) {
        return Err(Error::invalid(format!(
            "f_max {f_max} Hz outside (0, {nyquist}]"
        )));
    }
    // b * sr / fft <= f_max, compared without dividing.
    let sr = spec.sample_rate as f64;
    let fft = spec.params.fft_size as f64;
    let keep = (0..spec.n_bins())
        .take_while(|&b| b as f64 * sr <= f_max * fft)
        .count();
    Ok(Spectrogram {
        values: spec.values.truncate_rows(keep),
        sample_rate: spec.sample_rate,
        params: spec.params,
        f_max: f_max.min(spec.f_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, sr: u32, secs: f64) -> AudioClip {
        let n = (sr as f64 * secs) as usize;
        let s = (0..n)
            .map(|i| 0.8 * (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip::new(s, sr, "tone", "test").unwrap()
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let c = AudioClip::new(vec![0.0; 4000], 22050, "z", "t").unwrap();
        let s = log_spectrogram(&c, &StftParams::default()).unwrap();
        assert!(s.values.as_slice().iter().all(|&v| v == -80.0));
    }

    #[test]
    fn tone_maps_to_its_frequency() {
        let s = log_spectrogram(&tone(1000.0, 22050, 0.5), &StftParams::default()).unwrap();
        for t in 0..s.n_frames() {
            let peak = (0..s.n_bins())
                .max_by(|&a, &b| s.values.get(a, t).total_cmp(&s.values.get(b, t)))
                .unwrap();
            assert!((s.freq_of_bin(peak) - 1000.0).abs() <= s.bin_width_hz());
        }
        assert_eq!(s.time_of_frame(2), 256.0 / 22050.0);
    }

    #[test]
    fn cap_at_4k_keeps_93_rows() {
        let s = log_spectrogram(&tone(300.0, 22050, 0.2), &StftParams::default()).unwrap();
        let c = cap_frequency(&s, 4000.0).unwrap();
        assert_eq!(c.n_bins(), 93);
        assert!(c.freq_of_bin(92) <= 4000.0);
        assert!(c.freq_of_bin(93) > 4000.0);
        assert_eq!(c.n_frames(), s.n_frames());
        assert_eq!(c.f_max, 4000.0);
    }

    #[test]
    fn cap_at_nyquist_is_identity() {
        let s = log_spectrogram(&tone(300.0, 22050, 0.2), &StftParams::default()).unwrap();
        assert_eq!(cap_frequency(&s, 11025.0).unwrap(), s);
    }

    #[test]
    fn cap_below_one_bin_keeps_dc_row() {
        let s = log_spectrogram(&tone(300.0, 22050, 0.2), &StftParams::default()).unwrap();
        assert_eq!(cap_frequency(&s, 10.0).unwrap().n_bins(), 1);
    }

    #[test]
    fn cap_out_of_range_rejected() {
        let s = log_spectrogram(&tone(300.0, 22050, 0.2), &StftParams::default()).unwrap();
        assert!(matches!(
            cap_frequency(&s, 0.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            cap_frequency(&s, 11026.0),
            Err(Error::InvalidInput(_))
        ));
    }

    proptest! {
        #[test]
        fn values_finite_and_floored(samples in prop::collection::vec(-1.0f64..=1.0, 1..3000)) {
            let c = AudioClip::new(samples, 16000, "r", "p").unwrap();
            let s = log_spectrogram(&c, &StftParams::default()).unwrap();
            prop_assert!(s.values.as_slice().iter().all(|v| v.is_finite() && *v >= -80.0));
        }

        #[test]
        fn nested_caps_compose(a in 1.0f64..11025.0, b in 1.0f64..11025.0) {
            let s = log_spectrogram(&tone(700.0, 22050, 0.1), &StftParams::default()).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let twice = cap_frequency(&cap_frequency(&s, lo).unwrap(), hi).unwrap();
            let once = cap_frequency(&s, lo).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn capped_axis_matches_original(f in 1.0f64..11025.0) {
            let s = log_spectrogram(&tone(700.0, 22050, 0.1), &StftParams::default()).unwrap();
            let c = cap_frequency(&s, f).unwrap();
            for b in 0..c.n_bins() {
                prop_assert_eq!(c.freq_of_bin(b), s.freq_of_bin(b));
                prop_assert_eq!(c.values.row(b), s.values.row(b));
            }
        }
    }
}
