//! Source-filter synthesis of vowels and unvoiced consonants.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

pub const PEAK_LEVEL: f64 = 0.9;

/// Length of the raised-cosine fade applied at both ends of every clip.
const FADE_SECS: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub struct VowelSpec {
    pub name: String,
    /// F1..F4 in Hz.
    pub formants: [f64; 4],
    /// B1..B4 in Hz.
    pub bandwidths: [f64; 4],
    pub duration_range: (f64, f64),
    pub f0_range: (f64, f64),
    /// Each formant is scaled by a seeded factor in `[1 - j, 1 + j]`.
    pub formant_jitter: f64,
    /// f0 is scaled by a seeded factor in `[1 - j, 1 + j]`.
    pub f0_jitter: f64,
}

impl VowelSpec {
    pub fn validate(&self) -> Result<()> {
        let f = &self.formants;
        if !(f[0] > 0.0 && f[0] < f[1] && f[1] < f[2] && f[2] < f[3]) {
            return Err(Error::invalid(format!(
                "vowel {}: formants must be positive and increasing, got {f:?}",
                self.name
            )));
        }
        if self.bandwidths.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid(format!(
                "vowel {}: bandwidths must be positive",
                self.name
            )));
        }
        check_range(&self.name, "duration_range", self.duration_range)?;
        check_range(&self.name, "f0_range", self.f0_range)?;
        if !(0.0..0.5).contains(&self.formant_jitter) || !(0.0..0.5).contains(&self.f0_jitter) {
            return Err(Error::invalid(format!(
                "vowel {}: jitter fractions must lie in [0, 0.5)",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsonantSpec {
    pub name: String,
    /// Emphasised noise band `(low, high)` in Hz.
    pub noise_band: (f64, f64),
    /// Plosive onset burst (true) or steady frication (false).
    pub burst: bool,
    pub duration_range: (f64, f64),
}

impl ConsonantSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let (lo, hi) = self.noise_band;
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 <= lo && lo < hi && hi <= nyquist) {
            return Err(Error::invalid(format!(
                "consonant {}: need 0 <= low < high <= {nyquist}, got ({lo}, {hi})",
                self.name
            )));
        }
        check_range(&self.name, "duration_range", self.duration_range)
    }
}

fn check_range(name: &str, what: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "{name}: {what} ({lo}, {hi}) is not a positive interval"
        )));
    }
    Ok(())
}

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x <= hi
}

/// Two-pole resonator with unity gain at DC:
/// `y[n] = a x[n] + b y[n-1] + c y[n-2]`.
#[derive(Debug, Clone, Copy)]
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, sample_rate: f64) -> Self {
        let t = 1.0 / sample_rate;
        let c = -(-2.0 * PI * bandwidth * t).exp();
        let b = 2.0 * (-PI * bandwidth * t).exp() * (2.0 * PI * freq * t).cos();
        Self {
            a: 1.0 - b - c,
            b,
            c,
            y1: 0.0,
            y2: 0.0,
        }
    }

    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn jitter_factor(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    if amount == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - amount..=1.0 + amount)
    }
}

fn n_samples(duration: f64, sample_rate: u32) -> Result<usize> {
    let n = (duration * sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(Error::invalid(format!(
            "duration {duration} s gives no samples at {sample_rate} Hz"
        )));
    }
    Ok(n)
}

fn fade_and_normalize(samples: &mut [f64], sample_rate: u32) {
    let fade = ((FADE_SECS * sample_rate as f64) as usize).min(samples.len() / 2);
    let n = samples.len();
    for i in 0..fade {
        let g = 0.5 - 0.5 * (PI * (i as f64 + 0.5) / fade as f64).cos();
        samples[i] *= g;
        samples[n - 1 - i] *= g;
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = PEAK_LEVEL / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
}

/// The formant frequencies a given seed produces for `spec`, in order.
pub fn jittered_formants(spec: &VowelSpec, seed: u64) -> [f64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let _f0 = jitter_factor(&mut rng, spec.f0_jitter);
    spec.formants
        .map(|f| f * jitter_factor(&mut rng, spec.formant_jitter))
}

/// Impulse train at `f0` through four cascaded resonators at F1..F4.
///
/// The seed scales f0 and each formant by the spec's jitter fractions; the
/// duration is used as given. Output is peak-normalized to 0.9.
pub fn synth_vowel(
    spec: &VowelSpec,
    f0: f64,
    duration: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioClip> {
    spec.validate()?;
    if !in_range(f0, spec.f0_range) {
        return Err(Error::invalid(format!(
            "f0 {f0} Hz outside {:?} for vowel {}",
            spec.f0_range, spec.name
        )));
    }
    if !in_range(duration, spec.duration_range) {
        return Err(Error::invalid(format!(
            "duration {duration} s outside {:?} for vowel {}",
            spec.duration_range, spec.name
        )));
    }
    if f0 >= spec.formants[0] {
        return Err(Error::invalid(format!(
            "f0 {f0} Hz must lie below F1 {} Hz",
            spec.formants[0]
        )));
    }
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = f0 * jitter_factor(&mut rng, spec.f0_jitter);
    let formants = spec
        .formants
        .map(|f| f * jitter_factor(&mut rng, spec.formant_jitter));
    if formants[3] >= sr / 2.0 {
        return Err(Error::invalid(format!(
            "F4 {} Hz is not below Nyquist {} Hz",
            formants[3],
            sr / 2.0
        )));
    }

    let n = n_samples(duration, sample_rate)?;
    let mut filters: Vec<Resonator> = formants
        .iter()
        .zip(spec.bandwidths)
        .map(|(&f, b)| Resonator::new(f, b, sr))
        .collect();
    // Random start phase so pulses do not always sit on sample 0.
    let mut phase: f64 = rng.random_range(0.0..1.0);
    let step = f0 / sr;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        phase += step;
        let x = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        let y = filters.iter_mut().fold(x, |acc, r| r.step(acc));
        out.push(y);
    }
    fade_and_normalize(&mut out, sample_rate);
    AudioClip::new(
        out,
        sample_rate,
        spec.name.clone(),
        format!("synth:{}:{seed}", spec.name),
    )
}

/// Gain applied to the noise spectrum: 1 inside the band, a raised-cosine
/// skirt of [`SKIRT_HZ`] on each side, [`FLOOR_GAIN`] elsewhere.
fn band_gain(f: f64, (lo, hi): (f64, f64)) -> f64 {
    let skirt = |d: f64| {
        if d >= SKIRT_HZ {
            0.0
        } else {
            0.5 + 0.5 * (PI * d / SKIRT_HZ).cos()
        }
    };
    let g = if f < lo {
        skirt(lo - f)
    } else if f > hi {
        skirt(f - hi)
    } else {
        1.0
    };
    g.max(FLOOR_GAIN)
}

const SKIRT_HZ: f64 = 250.0;
const FLOOR_GAIN: f64 = 0.03;

/// Seeded white noise shaped towards `noise_band`. Plosives get an
/// exponentially decaying onset burst over a weaker aspiration tail.
pub fn synth_unvoiced(
    spec: &ConsonantSpec,
    duration: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioClip> {
    spec.validate(sample_rate)?;
    if !in_range(duration, spec.duration_range) {
        return Err(Error::invalid(format!(
            "duration {duration} s outside {:?} for consonant {}",
            spec.duration_range, spec.name
        )));
    }
    let n = n_samples(duration, sample_rate)?;
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *v *= band_gain(bin as f64 * sr / n as f64, spec.noise_band);
    }
    planner.plan_fft_inverse(n).process(&mut buf);

    let mut out: Vec<f64> = buf.iter().map(|c| c.re / n as f64).collect();
    if spec.burst {
        let tau = 0.008 * sr;
        for (i, s) in out.iter_mut().enumerate() {
            *s *= 0.25 + 0.75 * (-(i as f64) / tau).exp();
        }
    }
    fade_and_normalize(&mut out, sample_rate);
    AudioClip::new(
        out,
        sample_rate,
        spec.name.clone(),
        format!("synth:{}:{seed}", spec.name),
    )
}
