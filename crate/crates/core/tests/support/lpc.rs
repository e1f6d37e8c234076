//! Linear-prediction spectral-envelope oracle for synthesized vowels,
//! shared by the synthesizer tests and the acceptance suite.

// Each including test target uses a different subset.
#![allow(dead_code)]

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn fft(mut buf: Vec<Complex64>) -> Vec<Complex64> {
    FftPlanner::<f64>::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

pub fn real(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = x.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    v.resize(n, Complex64::new(0.0, 0.0));
    v
}

/// Solves the symmetric positive-definite system `m x = b` by Gaussian
/// elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let acc: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - acc) / m[row][row];
    }
    x
}

/// Least-squares linear prediction `x[n] = -sum_k a[k] x[n-k]` over the rows
/// `n` in `rows`. Returns `[1, a1..ap]`.
fn lpc_rows(x: &[f64], order: usize, rows: &[usize]) -> Vec<f64> {
    let phi = |i: usize, j: usize| -> f64 { rows.iter().map(|&n| x[n - i] * x[n - j]).sum() };
    let m: Vec<Vec<f64>> = (1..=order)
        .map(|i| (1..=order).map(|j| phi(i, j)).collect())
        .collect();
    let b: Vec<f64> = (1..=order).map(|i| -phi(i, 0)).collect();
    let mut a = vec![1.0];
    a.extend(solve(m, b));
    a
}

/// Covariance-method linear prediction on the clip interior (10 ms trimmed
/// at each end). A second pass drops the rows whose first-pass residual is
/// an outlier: those are the excitation instants, which would otherwise bias
/// the fit towards the harmonics.
fn covariance_lpc(x: &[f64], order: usize, sample_rate: f64) -> Vec<f64> {
    let trim = (0.01 * sample_rate) as usize + order;
    let rows: Vec<usize> = (trim..x.len() - trim).collect();
    let first = lpc_rows(x, order, &rows);
    let residual = |n: usize| -> f64 { (0..=order).map(|k| first[k] * x[n - k]).sum() };
    let peak = rows.iter().map(|&n| residual(n).abs()).fold(0.0, f64::max);
    let quiet: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&n| residual(n).abs() < 0.1 * peak)
        .collect();
    lpc_rows(x, order, &quiet)
}

/// All-pole spectral envelope |1 / A(f)| sampled by a 32768-point FFT
/// (0.67 Hz grid at 22.05 kHz); returns the lowest-frequency local maximum
/// above `min_hz`.
pub fn envelope_first_peak(samples: &[f64], sample_rate: f64, order: usize, min_hz: f64) -> f64 {
    let a = covariance_lpc(samples, order, sample_rate);
    let grid = 1 << 15;
    let resp = fft(real(&a, grid));
    let env: Vec<f64> = resp.iter().take(grid / 2).map(|c| 1.0 / c.norm()).collect();
    let hz = |k: usize| k as f64 * sample_rate / grid as f64;
    (1..env.len() - 1)
        .find(|&k| hz(k) >= min_hz && env[k] > env[k - 1] && env[k] >= env[k + 1])
        .map(hz)
        .expect("envelope has a peak")
}
