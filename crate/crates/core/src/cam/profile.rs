//! Per-frequency-band summaries of a full-resolution CAM.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::Spectrogram;

/// Interior edges of the default bands; the outer edges are 0 and `f_max`.
pub const DEFAULT_BAND_EDGES: [f64; 4] = [700.0, 1500.0, 2500.0, 4000.0];

/// Default bands 0-700-1500-2500-4000-f_max Hz, truncated at `f_max`.
pub fn default_bands(f_max: f64) -> Vec<(f64, f64)> {
    bands_from_edges(&DEFAULT_BAND_EDGES, f_max)
}

/// Bands `0-e1, e1-e2, ..., en-f_max` over ascending interior edges; edges
/// at or beyond `f_max` are dropped.
pub fn bands_from_edges(edges: &[f64], f_max: f64) -> Vec<(f64, f64)> {
    let mut bands = Vec::new();
    let mut low = 0.0;
    for &edge in edges.iter().chain([f_max].iter()) {
        let high = edge.min(f_max);
        if high > low {
            bands.push((low, high));
            low = high;
        }
    }
    bands
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandImportance {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Mean normalized CAM over the band's rows and all frames.
    pub importance: f64,
    /// No spectrogram row falls in this band; `importance` is 0.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyImportance {
    pub bands: Vec<BandImportance>,
    /// First band with the largest importance.
    pub peak_band: (f64, f64),
}

impl FrequencyImportance {
    fn from_bands(bands: Vec<BandImportance>) -> Self {
        let mut best = 0;
        for (i, b) in bands.iter().enumerate() {
            if b.importance > bands[best].importance {
                best = i;
            }
        }
        let peak_band = (bands[best].low_hz, bands[best].high_hz);
        Self { bands, peak_band }
    }

    /// Band-wise mean of several profiles over identical bands. A band is
    /// empty only if it is empty in every profile; means run over the
    /// profiles where it is not.
    pub fn mean(profiles: &[FrequencyImportance]) -> Result<Self> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::invalid("no profiles to average"))?;
        let mut bands = first.bands.clone();
        for (i, band) in bands.iter_mut().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for p in profiles {
                let b = p.bands.get(i).filter(|b| {
                    b.low_hz == band.low_hz
                        && b.high_hz == band.high_hz
                        && p.bands.len() == first.bands.len()
                });
                let b = b.ok_or_else(|| Error::invalid("profiles use different bands"))?;
                if !b.empty {
                    sum += b.importance;
                    n += 1;
                }
            }
            band.empty = n == 0;
            band.importance = if n == 0 { 0.0 } else { sum / n as f64 };
        }
        Ok(Self::from_bands(bands))
    }

    /// `band_low_hz,band_high_hz,mean_importance` rows, then a
    /// `# peak_band = low-high` line and, if any, `# empty_band = low-high`
    /// lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band_low_hz,band_high_hz,mean_importance\n");
        for b in &self.bands {
            let _ = writeln!(out, "{},{},{:.6}", b.low_hz, b.high_hz, b.importance);
        }
        let _ = writeln!(
            out,
            "# peak_band = {}-{}",
            self.peak_band.0, self.peak_band.1
        );
        for b in self.bands.iter().filter(|b| b.empty) {
            let _ = writeln!(out, "# empty_band = {}-{}", b.low_hz, b.high_hz);
        }
        out
    }
}

/// Mean of `cam_full` over the rows whose centre frequency lies in each band
/// (`[low, high)`, the last band closed), averaged over all frames. The bands
/// must partition `[0, spec.f_max]`.
pub fn frequency_profile(
    cam_full: &Grid,
    spec: &Spectrogram,
    bands: &[(f64, f64)],
) -> Result<FrequencyImportance> {
    if cam_full.dims() != spec.values.dims() {
        return Err(Error::shape(format!(
            "CAM {:?} does not match spectrogram {:?}",
            cam_full.dims(),
            spec.values.dims()
        )));
    }
    check_partition(bands, spec.f_max)?;
    let mut sums = vec![(0.0, 0usize); bands.len()];
    for row in 0..cam_full.rows() {
        let f = spec.freq_of_bin(row);
        let last = bands.len() - 1;
        let slot = bands
            .iter()
            .enumerate()
            .position(|(i, &(lo, hi))| f >= lo && (f < hi || (i == last && f <= hi)));
        if let Some(i) = slot {
            let r = cam_full.row(row);
            sums[i].0 += r.iter().sum::<f64>() / r.len() as f64;
            sums[i].1 += 1;
        }
    }
    let bands = bands
        .iter()
        .zip(sums)
        .map(|(&(low_hz, high_hz), (sum, n))| BandImportance {
            low_hz,
            high_hz,
            importance: if n == 0 { 0.0 } else { sum / n as f64 },
            empty: n == 0,
        })
        .collect();
    Ok(FrequencyImportance::from_bands(bands))
}

fn check_partition(bands: &[(f64, f64)], f_max: f64) -> Result<()> {
    let bad = |m: String| Err(Error::invalid(m));
    let (Some(first), Some(last)) = (bands.first(), bands.last()) else {
        return bad("no frequency bands given".into());
    };
    if first.0 != 0.0 {
        return bad(format!("bands must start at 0 Hz, not {}", first.0));
    }
    if (last.1 - f_max).abs() > 1e-6 {
        return bad(format!(
            "bands end at {} Hz but the spectrogram reaches {f_max} Hz",
            last.1
        ));
    }
    for (i, &(lo, hi)) in bands.iter().enumerate() {
        if !(hi > lo) {
            return bad(format!("band {lo}-{hi} Hz is empty or reversed"));
        }
        if i > 0 && bands[i - 1].1 != lo {
            return bad(format!("gap or overlap between bands at {lo} Hz"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::StftParams;

    /// 16 kHz, 512-point FFT: bin width 31.25 Hz; capped at 4000 Hz.
    fn spec(frames: usize) -> Spectrogram {
        let rows = 129;
        Spectrogram {
            values: Grid::zeros(rows, frames),
            sample_rate: 16000,
            params: StftParams::default(),
            f_max: 4000.0,
        }
    }

    #[test]
    fn default_bands_follow_f_max() {
        assert_eq!(
            default_bands(11025.0),
            vec![
                (0.0, 700.0),
                (700.0, 1500.0),
                (1500.0, 2500.0),
                (2500.0, 4000.0),
                (4000.0, 11025.0)
            ]
        );
        assert_eq!(default_bands(4000.0).len(), 4);
        assert_eq!(default_bands(1000.0), vec![(0.0, 700.0), (700.0, 1000.0)]);
    }

    #[test]
    fn constant_map_is_band_uniform() {
        let s = spec(5);
        let p = frequency_profile(&Grid::filled(129, 5, 1.0), &s, &default_bands(4000.0)).unwrap();
        assert!(p.bands.iter().all(|b| b.importance == 1.0 && !b.empty));
        assert_eq!(p.peak_band, (0.0, 700.0));
    }

    #[test]
    fn indicator_band_is_the_peak() {
        let s = spec(4);
        let cam = Grid::from_fn(129, 4, |r, _| {
            let f = r as f64 * 31.25;
            if (500.0..1000.0).contains(&f) {
                1.0
            } else {
                0.0
            }
        });
        let bands = [
            (0.0, 500.0),
            (500.0, 1000.0),
            (1000.0, 2000.0),
            (2000.0, 4000.0),
        ];
        let p = frequency_profile(&cam, &s, &bands).unwrap();
        assert_eq!(p.peak_band, (500.0, 1000.0));
        assert_eq!(p.bands[1].importance, 1.0);
        for i in [0, 2, 3] {
            assert_eq!(p.bands[i].importance, 0.0);
        }
        let csv = p.to_csv();
        assert!(csv.starts_with("band_low_hz,band_high_hz,mean_importance\n0,500,0.000000\n"));
        assert!(csv.ends_with("# peak_band = 500-1000\n"));
    }

    #[test]
    fn empty_bands_are_flagged() {
        let s = spec(2);
        let bands = [(0.0, 10.0), (10.0, 20.0), (20.0, 4000.0)];
        let p = frequency_profile(&Grid::filled(129, 2, 0.5), &s, &bands).unwrap();
        assert!(!p.bands[0].empty);
        assert!(p.bands[1].empty && p.bands[1].importance == 0.0);
        assert!(p.to_csv().contains("# empty_band = 10-20\n"));
    }

    #[test]
    fn bands_must_partition() {
        let s = spec(2);
        let cam = Grid::zeros(129, 2);
        for bands in [
            vec![],
            vec![(100.0, 4000.0)],
            vec![(0.0, 3000.0)],
            vec![(0.0, 1000.0), (1200.0, 4000.0)],
            vec![(0.0, 1000.0), (1000.0, 1000.0), (1000.0, 4000.0)],
        ] {
            assert!(frequency_profile(&cam, &s, &bands).is_err(), "{bands:?}");
        }
        assert!(matches!(
            frequency_profile(&Grid::zeros(3, 2), &s, &default_bands(4000.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn averaging_profiles() {
        let s = spec(3);
        let bands = default_bands(4000.0);
        let a = frequency_profile(
            &Grid::from_fn(
                129,
                3,
                |r, _| if (r as f64 * 31.25) < 700.0 { 1.0 } else { 0.0 },
            ),
            &s,
            &bands,
        )
        .unwrap();
        let b = frequency_profile(
            &Grid::from_fn(
                129,
                3,
                |r, _| if r as f64 * 31.25 >= 2500.0 { 1.0 } else { 0.0 },
            ),
            &s,
            &bands,
        )
        .unwrap();
        let m = FrequencyImportance::mean(&[a.clone(), a, b]).unwrap();
        assert!((m.bands[0].importance - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.bands[3].importance - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.peak_band, (0.0, 700.0));
        assert!(FrequencyImportance::mean(&[]).is_err());
    }
}
