//! Synthetic audio generation: white/pink noise clips, exponentially decaying
//! room impulse responses, and colored-noise-modulated tone tracks for
//! desk-scale experiments without licensed corpora.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::augment::{NoiseClip, RoomImpulseResponse};
use crate::frontend::Waveform;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("t60 must be positive, got {0}")]
    NonPositiveT60(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
}

impl std::str::FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            other => Err(format!("unknown noise kind '{other}' (expected white|pink)")),
        }
    }
}

/// RMS amplitude of the Gaussian tail relative to the unit direct-path tap.
const RIR_TAIL_LEVEL: f64 = 0.1;

/// Generate a unit-RMS noise clip. White is i.i.d. Gaussian; pink shapes the
/// spectrum to -3 dB/octave (power ~ 1/f).
pub fn synth_noise(
    kind: NoiseKind,
    duration_s: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<NoiseClip, SynthError> {
    if duration_s <= 0.0 {
        return Err(SynthError::NonPositiveDuration(duration_s));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut samples: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();

    if kind == NoiseKind::Pink {
        samples = shape_pink(&samples);
    }

    let rms = crate::dsp::rms(&samples);
    if rms > 0.0 {
        for s in samples.iter_mut() {
            *s /= rms;
        }
    }
    Ok(NoiseClip {
        samples,
        sample_rate,
    })
}

/// Multiply the spectrum by 1/sqrt(f) so power falls as 1/f.
fn shape_pink(white: &[f64]) -> Vec<f64> {
    let n = white.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = white.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for k in 1..n {
        // Mirror-symmetric bin frequency keeps the signal real.
        let f = k.min(n - k) as f64;
        buf[k] *= 1.0 / f.sqrt();
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Generate an RIR with a unit direct-path tap followed by an exponentially
/// decaying Gaussian tail reaching -60 dB at `t60_s`.
pub fn synth_rir(
    t60_s: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<RoomImpulseResponse, SynthError> {
    if t60_s <= 0.0 {
        return Err(SynthError::NonPositiveT60(t60_s));
    }
    let fs = sample_rate as f64;
    let len = ((1.25 * t60_s * fs).ceil() as usize).max(8);
    // ln(10^3): amplitude envelope hits -60 dB at n = t60 * fs.
    let alpha = 6.907_755_278_982_137 / (t60_s * fs);
    let mut taps = Vec::with_capacity(len);
    taps.push(1.0);
    for n in 1..len {
        let g: f64 = StandardNormal.sample(rng);
        taps.push(RIR_TAIL_LEVEL * g * (-alpha * n as f64).exp());
    }
    Ok(RoomImpulseResponse {
        taps,
        sample_rate,
        t60_s,
    })
}

/// Synthesize one toy corpus track: a handful of slowly drifting tones with
/// noise-derived amplitude envelopes over a quiet pink-noise bed. Content
/// varies along the track so adjacent segments are distinguishable.
pub fn synth_track(duration_s: f64, sample_rate: u32, rng: &mut impl Rng) -> Waveform {
    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut samples = vec![0.0f64; n];

    let tones = 4;
    for _ in 0..tones {
        let f0: f64 = rng.gen_range(150.0..3200.0);
        let f1 = f0 * rng.gen_range(0.7..1.4);
        let amp = rng.gen_range(0.15..0.35);
        // Two incommensurate slow modulators give a wandering envelope.
        let m1 = rng.gen_range(0.15..1.1);
        let m2 = rng.gen_range(0.2..1.7);
        let p1 = rng.gen_range(0.0..std::f64::consts::TAU);
        let p2 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phase0 = rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let sweep = f0 * t + (f1 - f0) * t * t / (2.0 * duration_s);
            let carrier = (std::f64::consts::TAU * sweep + phase0).sin();
            let e1 = 0.5 + 0.5 * (std::f64::consts::TAU * m1 * t + p1).sin();
            let e2 = 0.5 + 0.5 * (std::f64::consts::TAU * m2 * t + p2).sin();
            *s += amp * (0.25 + 0.75 * e1 * e2) * carrier;
        }
    }

    // Pink bed keeps every segment above silence.
    let bed = synth_noise(NoiseKind::Pink, duration_s, sample_rate, rng).unwrap();
    for (s, b) in samples.iter_mut().zip(bed.samples.iter()) {
        *s += 0.01 * b;
    }

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = 0.7 / peak;
        for s in samples.iter_mut() {
            *s *= g;
        }
    }
    Waveform {
        samples,
        sample_rate,
    }
}
