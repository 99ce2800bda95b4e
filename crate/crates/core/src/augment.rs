//! Distortion chain for contrastive pair construction: time offset,
//! reverberation, noise mixing at a target SNR, and SpecAugment masking.
//!
//! All randomness flows through a caller-provided generator, so two runs with
//! equal seeds produce bit-identical pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dsp;
use crate::frontend::{AudioSegment, FrontendConfig, FrontendError, LogMelSpec, MelExtractor, Waveform};
use crate::wav::{self, WavError};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("shifted window [{start_s:.3}s + {len_s:.3}s] is outside the track")]
    OffsetOutOfBounds { start_s: f64, len_s: f64 },
    #[error("noise clip too short: {got} samples, need {need}")]
    NoiseTooShort { got: usize, need: usize },
    #[error("noise window has zero power")]
    ZeroPowerNoise,
    #[error("segment has zero power, SNR undefined")]
    ZeroPowerSegment,
    #[error("room impulse response is empty")]
    EmptyRir,
    #[error("room impulse response is all zeros")]
    ZeroRir,
    #[error("{0} bank is empty but its stage is enabled")]
    EmptyBank(&'static str),
    #[error("sample rate mismatch: signal {signal} Hz vs {other} Hz")]
    SampleRate { signal: u32, other: u32 },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Augmentation parameters. The defaults mirror the reference pipeline:
/// shifts up to 40% of the hop, 0-25 dB SNR noise, two time and two
/// frequency masks of 10% axis width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Maximum time offset as a fraction of the hop H.
    pub max_offset_fraction: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub spec_time_masks: usize,
    pub spec_freq_masks: usize,
    /// Mask width as a fraction of the masked axis length.
    pub mask_width_fraction: f64,
    pub offset_enabled: bool,
    pub reverb_enabled: bool,
    pub noise_enabled: bool,
    pub spec_augment_enabled: bool,
    /// Per-stage application probability (1.0 = always when enabled).
    pub offset_prob: f64,
    pub reverb_prob: f64,
    pub noise_prob: f64,
    pub spec_augment_prob: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_offset_fraction: 0.4,
            snr_min_db: 0.0,
            snr_max_db: 25.0,
            spec_time_masks: 2,
            spec_freq_masks: 2,
            mask_width_fraction: 0.1,
            offset_enabled: true,
            reverb_enabled: true,
            noise_enabled: true,
            spec_augment_enabled: true,
            offset_prob: 1.0,
            reverb_prob: 1.0,
            noise_prob: 1.0,
            spec_augment_prob: 1.0,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.max_offset_fraction) {
            return Err("max_offset_fraction must be in [0, 1)".into());
        }
        if self.snr_min_db > self.snr_max_db {
            return Err("snr_min_db must be <= snr_max_db".into());
        }
        if self.mask_width_fraction < 0.0 || self.mask_width_fraction > 1.0 {
            return Err("mask_width_fraction must be in [0, 1]".into());
        }
        for (name, p) in [
            ("offset_prob", self.offset_prob),
            ("reverb_prob", self.reverb_prob),
            ("noise_prob", self.noise_prob),
            ("spec_augment_prob", self.spec_augment_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1]"));
            }
        }
        Ok(())
    }

    fn stage_applies(&self, enabled: bool, prob: f64, rng: &mut impl Rng) -> bool {
        enabled && (prob >= 1.0 || rng.gen::<f64>() < prob)
    }
}

/// Background noise audio used for SNR mixing.
#[derive(Debug, Clone)]
pub struct NoiseClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// Room impulse response with its nominal reverberation time.
#[derive(Debug, Clone)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub t60_s: f64,
}

/// What the stochastic chain actually did; kept for test introspection.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInfo {
    /// Drawn time offset in seconds (0 when the stage did not apply).
    pub offset_s: f64,
    /// Achieved start time of the positive segment in seconds.
    pub positive_start_s: f64,
    pub rir_index: Option<usize>,
    pub noise_index: Option<usize>,
    pub snr_db: Option<f64>,
}

/// Cut the L-length window at `start_s + delta` where delta is drawn
/// uniformly from [-f*H, +f*H]. Returns the segment and the drawn delta.
pub fn time_offset_segment(
    track: &Waveform,
    start_s: f64,
    track_id: u32,
    fe: &FrontendConfig,
    aug: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(AudioSegment, f64), AugmentError> {
    let bound = aug.max_offset_fraction * fe.hop_seconds();
    let u: f64 = rng.gen();
    let delta = (2.0 * u - 1.0) * bound;
    let seg = cut_segment(track, start_s + delta, track_id, fe)?;
    Ok((seg, delta))
}

/// Exact L-length window at `start_s` (no randomness).
pub fn cut_segment(
    track: &Waveform,
    start_s: f64,
    track_id: u32,
    fe: &FrontendConfig,
) -> Result<AudioSegment, AugmentError> {
    let seg_len = fe.segment_samples();
    let start = (start_s * fe.sample_rate as f64).round() as i64;
    if start < 0 || start as usize + seg_len > track.samples.len() {
        return Err(AugmentError::OffsetOutOfBounds {
            start_s,
            len_s: fe.segment_seconds(),
        });
    }
    let start = start as usize;
    Ok(AudioSegment {
        samples: track.samples[start..start + seg_len].to_vec(),
        source_track: track_id,
        start_time: start as f64 / fe.sample_rate as f64,
    })
}

/// Mix a noise window into the segment at the requested SNR. The window is
/// cut from the clip at a uniformly random offset.
pub fn mix_noise(
    seg: &AudioSegment,
    noise: &NoiseClip,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<AudioSegment, AugmentError> {
    let len = seg.samples.len();
    if noise.samples.len() < len {
        return Err(AugmentError::NoiseTooShort {
            got: noise.samples.len(),
            need: len,
        });
    }
    let max_off = noise.samples.len() - len;
    let off = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
    mix_noise_window(seg, &noise.samples[off..off + len], snr_db)
}

/// Deterministic core of the SNR mix: out = seg + g * window with
/// g = rms(seg) / (rms(window) * 10^(snr/20)).
pub fn mix_noise_window(
    seg: &AudioSegment,
    window: &[f64],
    snr_db: f64,
) -> Result<AudioSegment, AugmentError> {
    assert_eq!(seg.samples.len(), window.len());
    let rs = dsp::rms(&seg.samples);
    let rn = dsp::rms(window);
    if rn <= 0.0 {
        return Err(AugmentError::ZeroPowerNoise);
    }
    if rs <= 0.0 {
        return Err(AugmentError::ZeroPowerSegment);
    }
    let gain = rs / (rn * 10f64.powf(snr_db / 20.0));
    let samples = seg
        .samples
        .iter()
        .zip(window.iter())
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok(AudioSegment {
        samples,
        source_track: seg.source_track,
        start_time: seg.start_time,
    })
}

/// Convolve a signal with a peak-normalized RIR; the full convolution is
/// truncated to the input length so the direct path keeps its level.
pub fn apply_reverb(signal: &[f64], rir: &RoomImpulseResponse) -> Result<Vec<f64>, AugmentError> {
    if rir.taps.is_empty() {
        return Err(AugmentError::EmptyRir);
    }
    let peak = rir.taps.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if peak <= 0.0 {
        return Err(AugmentError::ZeroRir);
    }
    let normalized: Vec<f64> = rir.taps.iter().map(|t| t / peak).collect();
    let mut y = dsp::convolve(signal, &normalized);
    y.truncate(signal.len());
    Ok(y)
}

/// Mask spans applied by [`spec_augment`]: (start, width) per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecMasks {
    pub time: Vec<(usize, usize)>,
    pub freq: Vec<(usize, usize)>,
}

/// SpecAugment: mask `spec_time_masks` column bands and `spec_freq_masks`
/// row bands, each round(fraction * axis) wide, filled with the
/// spectrogram's mean value.
pub fn spec_augment(spec: &LogMelSpec, cfg: &AugmentConfig, rng: &mut impl Rng) -> LogMelSpec {
    spec_augment_detailed(spec, cfg, rng).0
}

pub fn spec_augment_detailed(
    spec: &LogMelSpec,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (LogMelSpec, SpecMasks) {
    let (n_mels, n_frames) = spec.values.dim();
    let fill = spec.values.mean().unwrap_or(0.0);
    let mut out = spec.values.clone();
    let mut masks = SpecMasks {
        time: Vec::new(),
        freq: Vec::new(),
    };

    let t_width = (cfg.mask_width_fraction * n_frames as f64).round() as usize;
    for _ in 0..cfg.spec_time_masks {
        if t_width == 0 {
            break;
        }
        let start = rng.gen_range(0..=n_frames - t_width);
        out.slice_mut(ndarray::s![.., start..start + t_width]).fill(fill);
        masks.time.push((start, t_width));
    }

    let f_width = (cfg.mask_width_fraction * n_mels as f64).round() as usize;
    for _ in 0..cfg.spec_freq_masks {
        if f_width == 0 {
            break;
        }
        let start = rng.gen_range(0..=n_mels - f_width);
        out.slice_mut(ndarray::s![start..start + f_width, ..]).fill(fill);
        masks.freq.push((start, f_width));
    }

    (LogMelSpec { values: out }, masks)
}

/// Build one (anchor, positive) spectrogram pair. The anchor is the clean
/// segment at `start_s`; the positive runs the enabled stages in fixed
/// order: offset -> reverb -> noise -> SpecAugment. When both reverb and
/// noise apply, the noise window is convolved with the same RIR before
/// mixing.
#[allow(clippy::too_many_arguments)]
pub fn make_pair(
    track: &Waveform,
    start_s: f64,
    track_id: u32,
    noise_bank: &[NoiseClip],
    rir_bank: &[RoomImpulseResponse],
    fe: &FrontendConfig,
    aug: &AugmentConfig,
    mel: &MelExtractor,
    rng: &mut impl Rng,
) -> Result<(LogMelSpec, LogMelSpec, PairInfo), AugmentError> {
    if aug.noise_enabled && noise_bank.is_empty() {
        return Err(AugmentError::EmptyBank("noise"));
    }
    if aug.reverb_enabled && rir_bank.is_empty() {
        return Err(AugmentError::EmptyBank("rir"));
    }

    let clean = cut_segment(track, start_s, track_id, fe)?;
    let anchor = mel.compute(&clean.samples)?;

    let mut info = PairInfo {
        offset_s: 0.0,
        positive_start_s: clean.start_time,
        rir_index: None,
        noise_index: None,
        snr_db: None,
    };

    // Offset stage; re-draw when the shifted window falls off the track.
    let mut seg = if aug.stage_applies(aug.offset_enabled, aug.offset_prob, rng) {
        let mut last_err = None;
        let mut found = None;
        for _ in 0..16 {
            match time_offset_segment(track, start_s, track_id, fe, aug, rng) {
                Ok((s, delta)) => {
                    info.offset_s = delta;
                    info.positive_start_s = s.start_time;
                    found = Some(s);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        match found {
            Some(s) => s,
            None => return Err(last_err.unwrap()),
        }
    } else {
        clean.clone()
    };

    // Reverb stage.
    let mut rir_for_noise = None;
    if aug.stage_applies(aug.reverb_enabled, aug.reverb_prob, rng) {
        let idx = rng.gen_range(0..rir_bank.len());
        let rir = &rir_bank[idx];
        if rir.sample_rate != fe.sample_rate {
            return Err(AugmentError::SampleRate {
                signal: fe.sample_rate,
                other: rir.sample_rate,
            });
        }
        seg.samples = apply_reverb(&seg.samples, rir)?;
        info.rir_index = Some(idx);
        rir_for_noise = Some(rir);
    }

    // Noise stage.
    if aug.stage_applies(aug.noise_enabled, aug.noise_prob, rng) {
        let idx = rng.gen_range(0..noise_bank.len());
        let clip = &noise_bank[idx];
        if clip.sample_rate != fe.sample_rate {
            return Err(AugmentError::SampleRate {
                signal: fe.sample_rate,
                other: clip.sample_rate,
            });
        }
        let len = seg.samples.len();
        if clip.samples.len() < len {
            return Err(AugmentError::NoiseTooShort {
                got: clip.samples.len(),
                need: len,
            });
        }
        let max_off = clip.samples.len() - len;
        let off = if max_off == 0 { 0 } else { rng.gen_range(0..=max_off) };
        let mut window = clip.samples[off..off + len].to_vec();
        if let Some(rir) = rir_for_noise {
            window = apply_reverb(&window, rir)?;
        }
        let snr = aug.snr_min_db + rng.gen::<f64>() * (aug.snr_max_db - aug.snr_min_db);
        seg = mix_noise_window(&seg, &window, snr)?;
        info.noise_index = Some(idx);
        info.snr_db = Some(snr);
    }

    let mut positive = mel.compute(&seg.samples)?;

    if aug.stage_applies(aug.spec_augment_enabled, aug.spec_augment_prob, rng) {
        positive = spec_augment(&positive, aug, rng);
    }

    Ok((anchor, positive, info))
}

fn wav_files_sorted(dir: &Path) -> Result<Vec<std::path::PathBuf>, AugmentError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "wav").unwrap_or(false))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every `*.wav` in `dir` (sorted by name) as a noise clip, resampling
/// to `target_rate` when needed.
pub fn load_noise_bank(dir: &Path, target_rate: u32) -> Result<Vec<NoiseClip>, AugmentError> {
    let mut bank = Vec::new();
    for path in wav_files_sorted(dir)? {
        let w = wav::read_wav(&path)?;
        let w = crate::frontend::resample(&w, target_rate)?;
        bank.push(NoiseClip {
            samples: w.samples,
            sample_rate: w.sample_rate,
        });
    }
    Ok(bank)
}

/// Load every `*.wav` in `dir` (sorted by name) as an RIR. The nominal t60
/// is parsed from a `_t60_<ms>ms` filename suffix when present.
pub fn load_rir_bank(dir: &Path, target_rate: u32) -> Result<Vec<RoomImpulseResponse>, AugmentError> {
    let mut bank = Vec::new();
    for path in wav_files_sorted(dir)? {
        let w = wav::read_wav(&path)?;
        let w = crate::frontend::resample(&w, target_rate)?;
        let t60_s = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(parse_t60_ms)
            .unwrap_or(0.0);
        bank.push(RoomImpulseResponse {
            taps: w.samples,
            sample_rate: w.sample_rate,
            t60_s,
        });
    }
    Ok(bank)
}

fn parse_t60_ms(stem: &str) -> Option<f64> {
    let idx = stem.find("_t60_")?;
    let rest = &stem[idx + 5..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse::<f64>().ok().map(|ms| ms / 1000.0)
}
