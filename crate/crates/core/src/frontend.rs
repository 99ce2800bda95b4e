//! Audio frontend: resampling, fixed-length segmentation, energy gating and
//! log-mel spectrogram extraction.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::dsp;

/// Linear-energy floor applied before the log compression.
pub const LOG_MEL_FLOOR: f64 = 1e-10;

/// Windowed-sinc taps per polyphase branch of the resampler.
const RESAMPLE_TAPS_PER_PHASE: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("empty input signal")]
    EmptySignal,
    #[error("track too short: {got_s:.3}s, segment length is {need_s:.3}s")]
    TrackTooShort { got_s: f64, need_s: f64 },
    #[error("segment length {got} does not match configured {want} samples")]
    SegmentLength { got: usize, want: usize },
    #[error("invalid frontend config: {0}")]
    InvalidConfig(String),
    #[error("sample rate mismatch: waveform {got} Hz, config {want} Hz")]
    SampleRate { got: u32, want: u32 },
}

/// Mono PCM audio at a known sample rate. Samples are dimensionless
/// amplitudes, nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean sample power; the reference for track-relative energy gating.
    pub fn mean_power(&self) -> f64 {
        dsp::mean_power(&self.samples)
    }
}

/// A fixed-length slice of a track: exactly `segment_samples()` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    pub samples: Vec<f64>,
    pub source_track: u32,
    pub start_time: f64,
}

/// F x T matrix of log-compressed mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpec {
    /// Shape (n_mels, n_frames).
    pub values: Array2<f64>,
}

impl LogMelSpec {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Frontend parameters. Defaults follow the engine's reference configuration:
/// 16 kHz, 960 ms segments, 100 ms hop, 0 dB gate, 64x96 log-mel output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    /// Segment length L in milliseconds.
    pub segment_ms: u32,
    /// Hop length H in milliseconds.
    pub hop_ms: u32,
    /// Energy gate threshold t in dB relative to the reference power.
    pub energy_threshold_db: f64,
    /// Apply the energy gate during database creation (training sampling
    /// always gates).
    pub gate_database: bool,
    pub n_mels: usize,
    pub n_frames: usize,
    pub fft_size: usize,
    /// STFT hop in samples.
    pub frame_hop: usize,
    pub mel_fmin: f64,
    pub mel_fmax: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            segment_ms: 960,
            hop_ms: 100,
            energy_threshold_db: 0.0,
            gate_database: false,
            n_mels: 64,
            n_frames: 96,
            fft_size: 1024,
            frame_hop: 160,
            mel_fmin: 0.0,
            mel_fmax: 8_000.0,
        }
    }
}

impl FrontendConfig {
    /// Segment length in samples (15360 at the defaults).
    pub fn segment_samples(&self) -> usize {
        (self.sample_rate as u64 * self.segment_ms as u64 / 1000) as usize
    }

    /// Hop length in samples (1600 at the defaults).
    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    pub fn segment_seconds(&self) -> f64 {
        self.segment_ms as f64 / 1000.0
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_ms as f64 / 1000.0
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        let fail = |m: String| Err(FrontendError::InvalidConfig(m));
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        if self.segment_ms == 0 || self.hop_ms == 0 {
            return fail("segment_ms and hop_ms must be positive".into());
        }
        if (self.sample_rate as u64 * self.segment_ms as u64) % 1000 != 0 {
            return fail("segment_ms must be a whole number of samples".into());
        }
        if (self.sample_rate as u64 * self.hop_ms as u64) % 1000 != 0 {
            return fail("hop_ms must be a whole number of samples".into());
        }
        if self.n_mels == 0 || self.n_frames == 0 || self.fft_size == 0 || self.frame_hop == 0 {
            return fail("mel dimensions, fft_size and frame_hop must be positive".into());
        }
        let seg = self.segment_samples();
        // Centered framing: one frame per frame_hop, so the frame count is
        // exactly segment_samples / frame_hop.
        if seg % self.frame_hop != 0 {
            return fail(format!(
                "segment length {seg} samples is not a multiple of frame_hop {}",
                self.frame_hop
            ));
        }
        if seg / self.frame_hop != self.n_frames {
            return fail(format!(
                "centered framing yields {} frames, config says {}",
                seg / self.frame_hop,
                self.n_frames
            ));
        }
        if self.fft_size / 2 + 1 > seg {
            return fail("fft_size too large for the segment length".into());
        }
        if !(self.mel_fmin >= 0.0 && self.mel_fmin < self.mel_fmax) {
            return fail("mel_fmin must be >= 0 and < mel_fmax".into());
        }
        if self.mel_fmax > self.sample_rate as f64 / 2.0 {
            return fail("mel_fmax exceeds Nyquist".into());
        }
        Ok(())
    }
}

/// Band-limited rational resampling with a windowed-sinc polyphase filter.
///
/// Same-rate input is returned sample-identical. Output duration matches the
/// input within one sample period.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform, FrontendError> {
    assert!(w.sample_rate > 0 && target_rate > 0);
    if w.samples.is_empty() {
        return Err(FrontendError::EmptySignal);
    }
    if w.sample_rate == target_rate {
        return Ok(w.clone());
    }

    let g = gcd(w.sample_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (w.sample_rate as u64 / g) as usize;

    // Anti-alias/anti-image cutoff relative to the input Nyquist.
    let band = (up as f64 / down as f64).min(1.0);
    let half_width = RESAMPLE_TAPS_PER_PHASE as f64 / (2.0 * band);

    // One tap set per fractional phase frac = p/up, covering
    // [frac - half_width, frac + half_width] in input-sample units.
    let phases: Vec<(isize, Vec<f64>)> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let j_min = (frac - half_width).ceil() as isize;
            let j_max = (frac + half_width).floor() as isize;
            let mut taps: Vec<f64> = (j_min..=j_max)
                .map(|j| windowed_sinc(j as f64 - frac, band, half_width))
                .collect();
            let sum: f64 = taps.iter().sum();
            for t in taps.iter_mut() {
                *t /= sum;
            }
            (j_min, taps)
        })
        .collect();

    let n_in = w.samples.len();
    let n_out = (n_in as u128 * up as u128 / down as u128) as usize;
    let x = &w.samples;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let num = n * down;
        let i0 = (num / up) as isize;
        let (j_min, taps) = &phases[num % up];
        let mut acc = 0.0;
        for (j, &t) in taps.iter().enumerate() {
            let k = i0 + j_min + j as isize;
            if k >= 0 && (k as usize) < n_in {
                acc += x[k as usize] * t;
            }
        }
        out.push(acc);
    }

    Ok(Waveform {
        samples: out,
        sample_rate: target_rate,
    })
}

fn windowed_sinc(t: f64, band: f64, half_width: f64) -> f64 {
    let u = t / half_width;
    if u.abs() > 1.0 {
        return 0.0;
    }
    // Blackman window.
    let w = 0.42 + 0.5 * (std::f64::consts::PI * u).cos()
        + 0.08 * (2.0 * std::f64::consts::PI * u).cos();
    band * sinc(band * t) * w
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cut a track into L-length segments at hop H. Segment k starts at sample
/// k * hop_samples; the count is floor((duration - L) / H) + 1.
pub fn segment_stream(
    w: &Waveform,
    cfg: &FrontendConfig,
    track_id: u32,
) -> Result<Vec<AudioSegment>, FrontendError> {
    if w.sample_rate != cfg.sample_rate {
        return Err(FrontendError::SampleRate {
            got: w.sample_rate,
            want: cfg.sample_rate,
        });
    }
    let seg_len = cfg.segment_samples();
    let hop = cfg.hop_samples();
    if w.samples.len() < seg_len {
        return Err(FrontendError::TrackTooShort {
            got_s: w.duration_seconds(),
            need_s: cfg.segment_seconds(),
        });
    }
    let count = (w.samples.len() - seg_len) / hop + 1;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * hop;
        out.push(AudioSegment {
            samples: w.samples[start..start + seg_len].to_vec(),
            source_track: track_id,
            start_time: start as f64 / cfg.sample_rate as f64,
        });
    }
    Ok(out)
}

/// Keep a segment iff its level relative to `reference_power` is at or above
/// the threshold: 10*log10(mean(seg^2) / reference_power) >= threshold_db.
/// An all-zero segment is always discarded.
pub fn energy_gate(seg: &AudioSegment, reference_power: f64, threshold_db: f64) -> bool {
    assert!(reference_power > 0.0, "reference power must be positive");
    let p = dsp::mean_power(&seg.samples);
    if p <= 0.0 {
        return false;
    }
    10.0 * (p / reference_power).log10() >= threshold_db
}

/// Precomputed machinery for log-mel extraction: window, mel filterbank and
/// FFT plan. Reusable and safe to share across threads.
pub struct MelExtractor {
    cfg: FrontendConfig,
    window: Vec<f64>,
    /// Row-major (n_mels x n_bins) triangular filters.
    filters: Vec<f64>,
    /// Per-band (f_lo, f_center, f_hi) in Hz.
    band_edges: Vec<(f64, f64, f64)>,
    fft: Arc<dyn Fft<f64>>,
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl MelExtractor {
    pub fn new(cfg: &FrontendConfig) -> Result<Self, FrontendError> {
        cfg.validate()?;
        let n_bins = cfg.fft_size / 2 + 1;
        let mel_lo = hz_to_mel(cfg.mel_fmin);
        let mel_hi = hz_to_mel(cfg.mel_fmax);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();

        let mut filters = vec![0.0; cfg.n_mels * n_bins];
        let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
        for m in 0..cfg.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                filters[m * n_bins + k] = rising.min(falling).max(0.0);
            }
        }
        let band_edges = (0..cfg.n_mels)
            .map(|m| (edges[m], edges[m + 1], edges[m + 2]))
            .collect();

        let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            cfg: cfg.clone(),
            window: dsp::hann_window(cfg.fft_size),
            filters,
            band_edges,
            fft,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Triangular support (f_lo, f_center, f_hi) of mel band `m` in Hz.
    pub fn band_support(&self, m: usize) -> (f64, f64, f64) {
        self.band_edges[m]
    }

    /// Log-mel spectrogram of one segment's samples. Frame k is centered at
    /// sample k * frame_hop with reflect padding at the edges.
    pub fn compute(&self, samples: &[f64]) -> Result<LogMelSpec, FrontendError> {
        let want = self.cfg.segment_samples();
        if samples.len() != want {
            return Err(FrontendError::SegmentLength {
                got: samples.len(),
                want,
            });
        }

        let cfg = &self.cfg;
        let n = samples.len() as isize;
        let fft_size = cfg.fft_size;
        let n_bins = fft_size / 2 + 1;
        let half = (fft_size / 2) as isize;

        let mut values = Array2::<f64>::zeros((cfg.n_mels, cfg.n_frames));
        let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];

        for t in 0..cfg.n_frames {
            let center = (t * cfg.frame_hop) as isize;
            for (i, slot) in buf.iter_mut().enumerate() {
                let mut idx = center - half + i as isize;
                // Reflect at the boundaries (no edge repetition).
                if idx < 0 {
                    idx = -idx;
                }
                if idx >= n {
                    idx = 2 * n - 2 - idx;
                }
                *slot = Complex::new(samples[idx as usize] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            for m in 0..cfg.n_mels {
                let row = &self.filters[m * n_bins..(m + 1) * n_bins];
                let e: f64 = row.iter().zip(power.iter()).map(|(w, p)| w * p).sum();
                values[[m, t]] = e.max(LOG_MEL_FLOOR).ln();
            }
        }

        Ok(LogMelSpec { values })
    }
}

/// One-shot log-mel extraction. Hot paths should build a [`MelExtractor`]
/// once and call [`MelExtractor::compute`].
pub fn log_mel(seg: &AudioSegment, cfg: &FrontendConfig) -> Result<LogMelSpec, FrontendError> {
    MelExtractor::new(cfg)?.compute(&seg.samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, rate: u32, seconds: f64) -> Waveform {
        let n = (rate as f64 * seconds).round() as usize;
        Waveform {
            samples: (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            sample_rate: rate,
        }
    }

    fn segment_of(w: &Waveform, cfg: &FrontendConfig) -> AudioSegment {
        AudioSegment {
            samples: w.samples[..cfg.segment_samples()].to_vec(),
            source_track: 0,
            start_time: 0.0,
        }
    }

    #[test]
    fn resample_one_second_of_44k1_gives_16000_samples() {
        let w = sine(440.0, 44_100, 1.0);
        let r = resample(&w, 16_000).unwrap();
        assert_eq!(r.sample_rate, 16_000);
        assert_eq!(r.samples.len(), 16_000);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let w = sine(440.0, 16_000, 0.25);
        let r = resample(&w, 16_000).unwrap();
        assert_eq!(w.samples, r.samples);
    }

    #[test]
    fn resample_empty_is_rejected() {
        let w = Waveform {
            samples: vec![],
            sample_rate: 48_000,
        };
        assert!(matches!(
            resample(&w, 16_000),
            Err(FrontendError::EmptySignal)
        ));
    }

    #[test]
    fn resampled_sine_keeps_its_spectral_peak() {
        // Oracle: DFT peak bin of the resampled signal must equal the DFT
        // peak bin of an analytically generated 16 kHz sine.
        let w = sine(1000.0, 48_000, 1.0);
        let r = resample(&w, 16_000).unwrap();
        assert_eq!(r.samples.len(), 16_000);

        let n = 8192;
        let start = 2048; // skip filter edge effects
        let resampled_peak = peak_bin(&r.samples[start..start + n]);

        let reference = sine(1000.0, 16_000, 1.0);
        let reference_peak = peak_bin(&reference.samples[start..start + n]);
        assert_eq!(resampled_peak, reference_peak);

        // Also check amplitude survives band-limited interpolation.
        let rms_mid = crate::dsp::rms(&r.samples[start..start + n]);
        assert!((rms_mid - 1.0 / 2f64.sqrt()).abs() < 0.01, "rms {rms_mid}");
    }

    fn peak_bin(x: &[f64]) -> usize {
        let ps = crate::dsp::power_spectrum(x);
        ps.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn thirty_second_track_yields_291_segments() {
        let cfg = FrontendConfig::default();
        let w = Waveform {
            samples: vec![0.1; 30 * 16_000],
            sample_rate: 16_000,
        };
        let segs = segment_stream(&w, &cfg, 7).unwrap();
        assert_eq!(segs.len(), 291);
        assert_eq!(segs[0].start_time, 0.0);
        assert!((segs[1].start_time - 0.1).abs() < 1e-12);
        assert!(segs.iter().all(|s| s.samples.len() == 15_360));
        assert!(segs.iter().all(|s| s.source_track == 7));
    }

    #[test]
    fn exact_length_track_yields_one_segment() {
        let cfg = FrontendConfig::default();
        let w = Waveform {
            samples: vec![0.1; cfg.segment_samples()],
            sample_rate: 16_000,
        };
        let segs = segment_stream(&w, &cfg, 0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].start_time, 0.0);
    }

    #[test]
    fn too_short_track_is_an_error() {
        let cfg = FrontendConfig::default();
        let w = Waveform {
            samples: vec![0.1; cfg.segment_samples() - 1],
            sample_rate: 16_000,
        };
        assert!(matches!(
            segment_stream(&w, &cfg, 0),
            Err(FrontendError::TrackTooShort { .. })
        ));
    }

    proptest! {
        #[test]
        fn segment_count_matches_enumeration(extra in 0usize..200_000) {
            let cfg = FrontendConfig::default();
            let len = cfg.segment_samples() + extra;
            let w = Waveform { samples: vec![0.5; len], sample_rate: 16_000 };
            let segs = segment_stream(&w, &cfg, 0).unwrap();
            // Direct enumeration oracle.
            let mut expected = 0usize;
            let mut start = 0usize;
            while start + cfg.segment_samples() <= len {
                expected += 1;
                start += cfg.hop_samples();
            }
            prop_assert_eq!(segs.len(), expected);
        }
    }

    #[test]
    fn gate_keeps_boundary_level() {
        let seg = AudioSegment {
            samples: vec![0.5; 1000],
            source_track: 0,
            start_time: 0.0,
        };
        let p = dsp::mean_power(&seg.samples);
        assert!(energy_gate(&seg, p, 0.0)); // exactly 0 dB: kept
    }

    #[test]
    fn gate_discards_silence() {
        let seg = AudioSegment {
            samples: vec![0.0; 1000],
            source_track: 0,
            start_time: 0.0,
        };
        assert!(!energy_gate(&seg, 0.01, -120.0));
    }

    #[test]
    fn gate_level_arithmetic() {
        // mean power = 2 x reference: level = 10*log10(2) = +3.0103 dB.
        let seg = AudioSegment {
            samples: vec![2.0f64.sqrt(); 512],
            source_track: 0,
            start_time: 0.0,
        };
        assert!(energy_gate(&seg, 1.0, 0.0));
        assert!(energy_gate(&seg, 1.0, 3.0));
        assert!(!energy_gate(&seg, 1.0, 3.02));
    }

    proptest! {
        #[test]
        fn gate_is_monotone_in_power(a in 0.001f64..1.0, b in 0.001f64..1.0, t in -20.0f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let seg_lo = AudioSegment { samples: vec![lo; 256], source_track: 0, start_time: 0.0 };
            let seg_hi = AudioSegment { samples: vec![hi; 256], source_track: 0, start_time: 0.0 };
            if energy_gate(&seg_lo, 0.25, t) {
                prop_assert!(energy_gate(&seg_hi, 0.25, t));
            }
        }
    }

    #[test]
    fn log_mel_shape_is_64_by_96() {
        let cfg = FrontendConfig::default();
        let w = sine(440.0, 16_000, 1.0);
        let spec = log_mel(&segment_of(&w, &cfg), &cfg).unwrap();
        assert_eq!(spec.values.dim(), (64, 96));
    }

    #[test]
    fn log_mel_of_silence_is_the_log_floor() {
        let cfg = FrontendConfig::default();
        let seg = AudioSegment {
            samples: vec![0.0; cfg.segment_samples()],
            source_track: 0,
            start_time: 0.0,
        };
        let spec = log_mel(&seg, &cfg).unwrap();
        let floor = LOG_MEL_FLOOR.ln();
        assert!(spec.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn log_mel_sine_peaks_in_the_band_containing_its_frequency() {
        let cfg = FrontendConfig::default();
        let ex = MelExtractor::new(&cfg).unwrap();
        let w = sine(1000.0, 16_000, 1.0);
        let spec = ex.compute(&w.samples[..cfg.segment_samples()]).unwrap();

        let row_energy: Vec<f64> = (0..cfg.n_mels)
            .map(|m| spec.values.row(m).sum())
            .collect();
        let argmax = row_energy
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;

        // Independent oracle: recompute band edges straight from the mel
        // formula and check the winning band's triangle contains 1 kHz.
        let mel_lo = hz_to_mel(cfg.mel_fmin);
        let mel_hi = hz_to_mel(cfg.mel_fmax);
        let edge =
            |i: usize| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64);
        let (lo, hi) = (edge(argmax), edge(argmax + 2));
        assert!(
            lo < 1000.0 && 1000.0 < hi,
            "band {argmax} covers [{lo:.1}, {hi:.1}] Hz"
        );
        let (slo, _, shi) = ex.band_support(argmax);
        assert_eq!((slo, shi), (lo, hi));
    }

    #[test]
    fn log_mel_is_deterministic() {
        let cfg = FrontendConfig::default();
        let w = sine(733.0, 16_000, 1.0);
        let seg = segment_of(&w, &cfg);
        let a = log_mel(&seg, &cfg).unwrap();
        let b = log_mel(&seg, &cfg).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn amplitude_scaling_shifts_log_mel_by_two_log_gain() {
        let cfg = FrontendConfig::default();
        let w = sine(620.0, 16_000, 1.0);
        let seg = segment_of(&w, &cfg);
        let gain = 3.0f64;
        let scaled = AudioSegment {
            samples: seg.samples.iter().map(|s| s * gain).collect(),
            source_track: 0,
            start_time: 0.0,
        };
        let a = log_mel(&seg, &cfg).unwrap();
        let b = log_mel(&scaled, &cfg).unwrap();
        let shift = 2.0 * gain.ln();
        let floor = LOG_MEL_FLOOR.ln();
        let mut checked = 0usize;
        for (&va, &vb) in a.values.iter().zip(b.values.iter()) {
            // Only where both sit above the clamp.
            if va > floor + 1e-9 && vb > floor + 1e-9 {
                assert!((vb - va - shift).abs() < 1e-9, "{va} {vb}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }
}
