use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};

/// Analysis parameters. Only the Hann window is supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftParams {
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
    /// Lower clamp for log magnitudes, in dB. Negative.
    pub db_floor: f64,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            fft_size: 512,
            window_len: 512,
            hop: 128,
            db_floor: -80.0,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if !(0 < self.hop && self.hop <= self.window_len && self.window_len <= self.fft_size) {
            return Err(Error::invalid(format!(
                "need 0 < hop ({}) <= window_len ({}) <= fft_size ({})",
                self.hop, self.window_len, self.fft_size
            )));
        }
        if !(self.db_floor.is_finite() && self.db_floor < 0.0) {
            return Err(Error::invalid(format!(
                "db_floor {} must be a negative finite value",
                self.db_floor
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames for a signal of `len` samples. Signals shorter than one
    /// window yield a single zero-padded frame.
    pub fn n_frames(&self, len: usize) -> usize {
        if len <= self.window_len {
            1
        } else {
            1 + (len - self.window_len) / self.hop
        }
    }

    /// Periodic Hann window of `window_len` points.
    pub fn window(&self) -> Vec<f64> {
        hann(self.window_len)
    }
}

pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            let s = (PI * n as f64 / len as f64).sin();
            s * s
        })
        .collect()
}

/// Complex STFT laid out as `[bin][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stft {
    pub n_bins: usize,
    pub n_frames: usize,
    data: Vec<Complex64>,
}

impl Stft {
    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[bin * self.n_frames + frame]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Bins of one frame, low to high frequency.
    pub fn frame(&self, frame: usize) -> Vec<Complex64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }
}

/// Frame `t`, bin `k` is the DFT of the Hann-windowed samples
/// `[t * hop, t * hop + window_len)`, zero-padded to `fft_size`. Samples past the
/// end of the clip count as zero.
pub fn stft(clip: &AudioClip, params: &StftParams) -> Result<Stft> {
    params.validate()?;
    let samples = clip.samples();
    if samples.is_empty() {
        return Err(Error::invalid("empty clip"));
    }
    let n_bins = params.n_bins();
    let n_frames = params.n_frames(samples.len());
    let window = params.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.fft_size);

    let mut data = vec![Complex64::new(0.0, 0.0); n_bins * n_frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); params.fft_size];
    for t in 0..n_frames {
        let start = t * params.hop;
        buf.fill(Complex64::new(0.0, 0.0));
        for (n, w) in window.iter().enumerate() {
            if let Some(&x) = samples.get(start + n) {
                buf[n].re = x * w;
            }
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(n_bins).enumerate() {
            data[k * n_frames + t] = *v;
        }
    }
    Ok(Stft {
        n_bins,
        n_frames,
        data,
    })
}
