//! Shared signal-processing helpers: FFT-based convolution, spectra, windows.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Root-mean-square of a signal.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Mean power (mean of squared samples).
pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Full linear convolution, direct form. O(n*k); used for short kernels and as
/// the oracle for the FFT path.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let n = x.len() + h.len() - 1;
    let mut y = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            y[i + j] += xi * hj;
        }
    }
    y
}

/// Full linear convolution via a single zero-padded FFT.
pub fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let n = x.len() + h.len() - 1;
    let size = next_pow2(n);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = x
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut b: Vec<Complex<f64>> = h
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(b.iter()) {
        *ai *= bi;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

/// Full linear convolution; picks direct or FFT form by problem size.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    const DIRECT_LIMIT: usize = 1 << 20;
    if x.len().saturating_mul(h.len()) <= DIRECT_LIMIT {
        convolve_direct(x, h)
    } else {
        convolve_fft(x, h)
    }
}

/// Power spectrum |FFT(x .* hann)|^2 over bins 0..=n/2.
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let window = hann_window(n);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(window.iter())
        .map(|(&v, &w)| Complex::new(v * w, 0.0))
        .collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Welch power spectral density estimate with 50% overlapping Hann segments.
/// Returns (bin frequencies in Hz, mean power per bin).
pub fn welch_psd(x: &[f64], sample_rate: u32, segment_len: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(segment_len > 0 && x.len() >= segment_len);
    let hop = segment_len / 2;
    let n_bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment_len <= x.len() {
        let ps = power_spectrum(&x[start..start + segment_len]);
        for (a, p) in acc.iter_mut().zip(ps.iter()) {
            *a += p;
        }
        count += 1;
        start += hop;
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    let freqs = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / segment_len as f64)
        .collect();
    (freqs, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn direct_and_fft_convolution_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..997).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = convolve_direct(&x, &h);
        let b = convolve_fft(&x, &h);
        assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn convolution_with_unit_impulse_is_identity() {
        let x = vec![1.0, -2.0, 3.0, 0.5];
        let y = convolve_direct(&x, &[1.0]);
        assert_eq!(x, y);
    }

    #[test]
    fn power_spectrum_peak_tracks_sine_frequency() {
        let n = 1024;
        let fs = 16000.0;
        let f = 1000.0;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
            .collect();
        let ps = power_spectrum(&x);
        let peak = ps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let expected = (f / fs * n as f64).round() as usize;
        assert_eq!(peak, expected);
    }
}
