//! Seeded synthetic scenes: speech-shaped excitation, STFT-domain and
//! RIR-based reverberation, noise at a target SNR, and their ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::reverb::{room_to_ab, RoomParams};
use crate::stft::{istft, stft, AnalysisConfig, AudioBuffer, SpectralFrames, ABSOLUTE_FLOOR};

/// Direct-path window of generated RIRs, seconds.
pub const RIR_DIRECT_WINDOW: f64 = 0.002;
/// Early part removed from the RIR for the reverberation reference, seconds.
pub const EARLY_REFLECTION_CUTOFF: f64 = 0.030;
/// Frames within this many dB of the loudest frame count as active.
pub const ACTIVE_RANGE_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            other => Err(Error::InvalidParameter(format!("unknown noise kind '{other}' (white|pink)"))),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
        })
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Unit-variance Gaussian white noise.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| normal(&mut rng)).collect()
}

/// Unit-variance noise with a -3 dB/octave power slope, shaped in the
/// frequency domain; DC is removed.
pub fn pink_noise(len: usize, seed: u64) -> Vec<f64> {
    if len == 0 {
        return Vec::new();
    }
    let white = white_noise(len, seed);
    let mut buf: Vec<Complex<f64>> = white.iter().map(|&x| Complex::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for k in 1..len {
        let f = k.min(len - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|x| *x /= rms);
    }
    out
}

pub fn noise(kind: NoiseKind, len: usize, seed: u64) -> Vec<f64> {
    match kind {
        NoiseKind::White => white_noise(len, seed),
        NoiseKind::Pink => pink_noise(len, seed),
    }
}

/// Speech-shaped test signal: voiced syllables with a wandering pitch,
/// three formant resonances and a breath component, separated by pauses.
/// Peak level is 0.5.
pub fn speech_like(duration: f64, sample_rate: u32, seed: u64) -> AudioBuffer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let len = (duration * sr).round() as usize;
    let mut out = vec![0.0; len];
    let mut pos = (rng.gen_range(0.05..0.2) * sr) as usize;
    let nyq = 0.5 * sr;
    while pos < len {
        let dur = (rng.gen_range(0.12..0.35) * sr) as usize;
        let f0_start = rng.gen_range(90.0..220.0);
        let f0_end = f0_start * rng.gen_range(0.8..1.2);
        let formants = [
            (rng.gen_range(300.0..850.0), rng.gen_range(60.0..120.0)),
            (rng.gen_range(900.0..2300.0), rng.gen_range(80.0..160.0)),
            (rng.gen_range(2300.0..3300.0), rng.gen_range(120.0..220.0)),
        ];
        let level = rng.gen_range(0.3..1.0);
        let attack = 0.015 * sr;
        let release = 0.025 * sr;
        let mut phase = 0.0f64;
        let end = (pos + dur).min(len);
        let shape = |f: f64| -> f64 {
            formants.iter().map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2))).sum::<f64>() + 0.02
        };
        for i in pos..end {
            let n = (i - pos) as f64;
            let frac = n / dur as f64;
            let f0: f64 = f0_start + (f0_end - f0_start) * frac;
            phase += 2.0 * std::f64::consts::PI * f0 / sr;
            let env = if n < attack {
                0.5 - 0.5 * (std::f64::consts::PI * n / attack).cos()
            } else if (dur as f64 - n) < release {
                0.5 - 0.5 * (std::f64::consts::PI * (dur as f64 - n) / release).cos()
            } else {
                1.0
            };
            let mut v = 0.0;
            let mut h = 1.0;
            while h * f0 < 0.5 * nyq {
                v += shape(h * f0) * (h * phase).sin() / h.sqrt();
                h += 1.0;
            }
            v += 0.05 * normal(&mut rng);
            out[i] += level * env * v;
        }
        pos = end + (rng.gen_range(0.05..0.4) * sr) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    AudioBuffer { samples: out, sample_rate }
}

/// Per-frame energy over 32 ms frames with 8 ms hop.
fn frame_energies(x: &[f64], sample_rate: u32) -> Vec<(usize, f64)> {
    let n = (0.032 * sample_rate as f64) as usize;
    let hop = (0.008 * sample_rate as f64) as usize;
    if x.len() < n {
        return vec![(0, x.iter().map(|v| v * v).sum())];
    }
    (0..=(x.len() - n) / hop).map(|t| (t * hop, x[t * hop..t * hop + n].iter().map(|v| v * v).sum())).collect()
}

/// Mean power of `x` over frames within [`ACTIVE_RANGE_DB`] of the loudest.
pub fn active_power(x: &[f64], sample_rate: u32) -> f64 {
    let e = frame_energies(x, sample_rate);
    let max = e.iter().fold(0.0f64, |m, v| m.max(v.1));
    if max <= 0.0 {
        return 0.0;
    }
    let thr = max * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);
    let active: Vec<f64> = e.iter().filter(|v| v.1 >= thr).map(|v| v.1).collect();
    let n = (0.032 * sample_rate as f64) as usize;
    active.iter().sum::<f64>() / (active.len() * n.min(x.len())) as f64
}

/// Noise scaled so that the active-region power ratio to `signal` is `snr` dB.
pub fn scaled_noise(signal: &AudioBuffer<f64>, kind: NoiseKind, snr: f64, seed: u64) -> Result<Vec<f64>> {
    if !snr.is_finite() {
        return Err(Error::InvalidParameter(format!("SNR must be finite, got {snr}")));
    }
    let mut n = noise(kind, signal.len(), seed);
    let ps = active_power(&signal.samples, signal.sample_rate);
    let pn = n.iter().map(|x| x * x).sum::<f64>() / n.len().max(1) as f64;
    let scale = if pn > 0.0 { (ps / pn / 10f64.powf(snr / 10.0)).sqrt() } else { 0.0 };
    n.iter_mut().for_each(|x| *x *= scale);
    Ok(n)
}

/// `signal + noise` at the requested SNR.
pub fn mix_noise(signal: &AudioBuffer<f64>, kind: NoiseKind, snr: f64, seed: u64) -> Result<AudioBuffer<f64>> {
    let n = scaled_noise(signal, kind, snr, seed)?;
    let samples = signal.samples.iter().zip(&n).map(|(s, n)| s + n).collect();
    AudioBuffer::new(samples, signal.sample_rate)
}

/// Decaying-noise RIR: unit direct path at 0, a seeded Gaussian tail from
/// [`RIR_DIRECT_WINDOW`] with amplitude envelope `exp(-3·ln10·t/T60)`,
/// scaled so the direct-to-tail energy ratio is `room.drr` dB.
pub fn polack_rir(room: &RoomParams, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    room.validate()?;
    let sr = sample_rate as f64;
    let len = ((1.2 * room.t60 + 0.01) * sr).ceil() as usize;
    let start = (RIR_DIRECT_WINDOW * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![0.0; len.max(start + 1)];
    h[0] = 1.0;
    let decay = 3.0 * std::f64::consts::LN_10 / room.t60;
    let mut tail_energy = 0.0;
    for (i, v) in h.iter_mut().enumerate().skip(start) {
        *v = normal(&mut rng) * (-decay * i as f64 / sr).exp();
        tail_energy += *v * *v;
    }
    let target = 10f64.powf(-room.drr / 10.0);
    let scale = if tail_energy > 0.0 { (target / tail_energy).sqrt() } else { 0.0 };
    h.iter_mut().skip(start).for_each(|v| *v *= scale);
    Ok(h)
}

/// Linear convolution by FFT; output length `x.len() + h.len() - 1`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
        b.resize(n, Complex::new(0.0, 0.0));
        b
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// Convolution with the RIR after zeroing its first [`EARLY_REFLECTION_CUTOFF`];
/// truncated to the input length.
pub fn true_reverb_reference(clean: &AudioBuffer<f64>, rir: &[f64]) -> Result<AudioBuffer<f64>> {
    let cut = (EARLY_REFLECTION_CUTOFF * clean.sample_rate as f64).round() as usize;
    if rir.len() <= cut {
        return Err(Error::InsufficientInput(format!("RIR of {} samples is within the early cutoff", rir.len())));
    }
    let mut late = rir.to_vec();
    late[..cut].iter_mut().for_each(|v| *v = 0.0);
    let mut y = convolve(&clean.samples, &late);
    y.truncate(clean.len());
    AudioBuffer::new(y, clean.sample_rate)
}

/// Reverberant audio from an RIR, truncated to the input length.
pub fn reverberate(clean: &AudioBuffer<f64>, rir: &[f64]) -> Result<AudioBuffer<f64>> {
    let mut y = convolve(&clean.samples, rir);
    y.truncate(clean.len());
    AudioBuffer::new(y, clean.sample_rate)
}

/// True log-magnitudes of each component, frames × bins, in nats.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub s_true: Matrix<f64>,
    pub r_true: Matrix<f64>,
    pub z_true: Matrix<f64>,
    pub n_true: Matrix<f64>,
    pub room: RoomParams,
    pub a: f64,
    pub b: f64,
}

fn floored_log(c: Complex<f64>) -> f64 {
    c.norm().max(ABSOLUTE_FLOOR).ln()
}

fn log_matrix(frames: &SpectralFrames<f64>) -> Matrix<f64> {
    Matrix { data: frames.data.iter().map(|&c| floored_log(c)).collect(), rows: frames.n_frames, cols: frames.n_bins }
}

/// Reverberation generated frame-by-frame by
/// `R_t = √a·R_{t-1}·e^{jθ} + √b·S_{t-1}·e^{jψ}` with seeded uniform phases.
/// Returns `S + R` and the reverberation alone.
pub fn stft_domain_reverb(
    clean: &SpectralFrames<f64>,
    room: &RoomParams,
    seed: u64,
) -> Result<(SpectralFrames<f64>, SpectralFrames<f64>)> {
    let (a, b) = room_to_ab(room)?;
    stft_domain_reverb_ab(clean, a, b, seed)
}

/// [`stft_domain_reverb`] for explicit `(a, b)`.
pub fn stft_domain_reverb_ab(
    clean: &SpectralFrames<f64>,
    a: f64,
    b: f64,
    seed: u64,
) -> Result<(SpectralFrames<f64>, SpectralFrames<f64>)> {
    if !((0.0..1.0).contains(&a) && b >= 0.0) {
        return Err(Error::InvalidParameter(format!("need 0 <= a < 1 and b >= 0, got a={a}, b={b}")));
    }
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rev = SpectralFrames::zeros(clean.n_frames, clean.config, clean.sample_rate, clean.signal_len);
    let two_pi = 2.0 * std::f64::consts::PI;
    for t in 1..clean.n_frames {
        for k in 0..clean.n_bins {
            let theta: f64 = rng.gen_range(0.0..two_pi);
            let psi: f64 = rng.gen_range(0.0..two_pi);
            let r = rev.get(t - 1, k) * Complex::from_polar(sa, theta) + clean.get(t - 1, k) * Complex::from_polar(sb, psi);
            rev.set(t, k, r);
        }
    }
    let mut y = clean.clone();
    for (o, r) in y.data.iter_mut().zip(&rev.data) {
        *o += r;
    }
    Ok((y, rev))
}

/// A noisy STFT-domain reverberant scene and its ground truth.
#[derive(Debug, Clone)]
pub struct StftScene {
    pub clean: AudioBuffer<f64>,
    pub observed: SpectralFrames<f64>,
    pub truth: GroundTruth,
}

impl StftScene {
    /// Time-domain rendering of the observation.
    pub fn observed_audio(&self) -> Result<AudioBuffer<f64>> {
        let mut a = istft(&self.observed, &self.observed.config)?;
        a.samples.resize(self.clean.len(), 0.0);
        Ok(a)
    }
}

/// Reverberates `clean` in the STFT domain and adds noise whose power is
/// `snr` dB below the reverberant signal's active power.
pub fn stft_scene(
    clean: &AudioBuffer<f64>,
    room: &RoomParams,
    kind: NoiseKind,
    snr: f64,
    seed: u64,
    config: &AnalysisConfig,
) -> Result<StftScene> {
    let (a, b) = room_to_ab(room)?;
    let s = stft(clean, config)?;
    let (sr_frames, rev) = stft_domain_reverb_ab(&s, a, b, seed)?;
    let reverberant = istft(&sr_frames, config)?;
    let noise_audio = AudioBuffer::new(scaled_noise(&reverberant, kind, snr, seed ^ 0x9e37_79b9)?, clean.sample_rate)?;
    let mut padded = noise_audio.samples.clone();
    padded.resize(clean.len(), 0.0);
    let n = stft(&AudioBuffer::new(padded, clean.sample_rate)?, config)?;
    let mut y = sr_frames.clone();
    let mut z = rev.clone();
    for i in 0..y.data.len() {
        y.data[i] += n.data[i];
        z.data[i] += n.data[i];
    }
    let truth = GroundTruth {
        s_true: log_matrix(&s),
        r_true: log_matrix(&rev),
        z_true: log_matrix(&z),
        n_true: log_matrix(&n),
        room: *room,
        a,
        b,
    };
    Ok(StftScene { clean: clean.clone(), observed: y, truth })
}

/// Schroeder-integration T60 of an RIR from a linear fit of the energy
/// decay curve between -5 and -35 dB.
pub fn schroeder_t60(rir: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for i in (0..rir.len()).rev() {
        acc += rir[i] * rir[i];
        edc[i] = acc;
    }
    let total = edc.first().copied()?;
    if total <= 0.0 {
        return None;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).max(1e-30).log10()).collect();
    let pts: Vec<(f64, f64)> = db
        .iter()
        .enumerate()
        .filter(|(_, &d)| (-35.0..=-5.0).contains(&d))
        .map(|(i, &d)| (i as f64 / sample_rate as f64, d))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}

/// Direct (first [`RIR_DIRECT_WINDOW`]) to remainder energy ratio in dB.
pub fn rir_drr(rir: &[f64], sample_rate: u32) -> f64 {
    let cut = ((RIR_DIRECT_WINDOW * sample_rate as f64).round() as usize).min(rir.len());
    let d: f64 = rir[..cut].iter().map(|v| v * v).sum();
    let r: f64 = rir[cut..].iter().map(|v| v * v).sum();
    10.0 * (d / r).log10()
}
