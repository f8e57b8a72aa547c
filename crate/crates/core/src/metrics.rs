//! Objective distances between a reference and a test signal.
//!
//! All three metrics share one framing: 32 ms Hann frames, 8 ms hop, and
//! average over frames whose reference energy is within 40 dB of the
//! loudest reference frame.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::simkit::ACTIVE_RANGE_DB;
use crate::stft::AudioBuffer;

pub const CEPSTRAL_ORDER: usize = 24;
pub const SEGSNR_MIN: f64 = -10.0;
pub const SEGSNR_MAX: f64 = 35.0;

const FRAME: f64 = 0.032;
const HOP: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub cepstral_distance: f64,
    pub log_spectral_distance: f64,
    pub segmental_snr: f64,
}

fn check(reference: &AudioBuffer<f64>, test: &AudioBuffer<f64>) -> Result<()> {
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, test has {}",
            reference.len(),
            test.len()
        )));
    }
    if reference.sample_rate != test.sample_rate {
        return Err(Error::ConfigMismatch("sample rates differ".into()));
    }
    Ok(())
}

struct Framing {
    n: usize,
    hop: usize,
    count: usize,
}

impl Framing {
    fn new(len: usize, sample_rate: u32) -> Result<Self> {
        let n = (FRAME * sample_rate as f64).round() as usize;
        let hop = (HOP * sample_rate as f64).round() as usize;
        if len < n {
            return Err(Error::InsufficientInput(format!("{len} samples is shorter than one frame")));
        }
        Ok(Self { n, hop, count: (len - n) / hop + 1 })
    }

    fn slice<'a>(&self, x: &'a [f64], t: usize) -> &'a [f64] {
        &x[t * self.hop..t * self.hop + self.n]
    }

    /// Indices of frames with reference energy within the active range.
    fn active(&self, x: &[f64]) -> Vec<usize> {
        let e: Vec<f64> = (0..self.count).map(|t| self.slice(x, t).iter().map(|v| v * v).sum()).collect();
        let max = e.iter().fold(0.0f64, |m, &v| m.max(v));
        if max <= 0.0 {
            return Vec::new();
        }
        let thr = max * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);
        (0..self.count).filter(|&t| e[t] >= thr).collect()
    }
}

/// Magnitude spectra of the given frames, full FFT length.
fn spectra(x: &[f64], fr: &Framing, frames: &[usize]) -> Vec<Vec<f64>> {
    let fft = FftPlanner::new().plan_fft_forward(fr.n);
    let win: Vec<f64> =
        (0..fr.n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / fr.n as f64).cos()).collect();
    frames
        .iter()
        .map(|&t| {
            let mut buf: Vec<Complex<f64>> =
                fr.slice(x, t).iter().zip(&win).map(|(&v, &w)| Complex::new(v * w, 0.0)).collect();
            fft.process(&mut buf);
            buf.iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Log spectra (nats) of both signals with a floor shared per frame,
/// 160 dB below the louder of the two frame peaks.
fn paired_log_spectra(a: &[f64], b: &[f64], fr: &Framing, frames: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let sa = spectra(a, fr, frames);
    let sb = spectra(b, fr, frames);
    let mut la = Vec::with_capacity(sa.len());
    let mut lb = Vec::with_capacity(sb.len());
    for (x, y) in sa.iter().zip(&sb) {
        let peak = x.iter().chain(y).fold(0.0f64, |m, &v| m.max(v));
        let floor = (peak * 1e-8).max(1e-15);
        la.push(x.iter().map(|v| v.max(floor).ln()).collect());
        lb.push(y.iter().map(|v| v.max(floor).ln()).collect());
    }
    (la, lb)
}

/// Real cepstrum coefficients `c_0..=c_order` of a full log-magnitude spectrum.
fn cepstrum(log_mag: &[f64], order: usize) -> Vec<f64> {
    let n = log_mag.len();
    let mut buf: Vec<Complex<f64>> = log_mag.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf[..=order].iter().map(|c| c.re / n as f64).collect()
}

/// Mean truncated-cepstrum distance in dB:
/// `(10/ln10)·√(2·Σ_{i=1..24}(c_i - c'_i)² + (c_0 - c'_0)²)`.
pub fn cepstral_distance(reference: &AudioBuffer<f64>, test: &AudioBuffer<f64>) -> Result<f64> {
    check(reference, test)?;
    let fr = Framing::new(reference.len(), reference.sample_rate)?;
    let active = fr.active(&reference.samples);
    if active.is_empty() {
        return Ok(0.0);
    }
    let (a, b) = paired_log_spectra(&reference.samples, &test.samples, &fr, &active);
    let k = 10.0 / std::f64::consts::LN_10;
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let cx = cepstrum(x, CEPSTRAL_ORDER);
            let cy = cepstrum(y, CEPSTRAL_ORDER);
            let tail: f64 = (1..=CEPSTRAL_ORDER).map(|i| (cx[i] - cy[i]).powi(2)).sum();
            k * (2.0 * tail + (cx[0] - cy[0]).powi(2)).sqrt()
        })
        .sum();
    Ok(total / active.len() as f64)
}

/// Mean over frames of the RMS difference of the dB log spectra.
pub fn log_spectral_distance(reference: &AudioBuffer<f64>, test: &AudioBuffer<f64>) -> Result<f64> {
    check(reference, test)?;
    let fr = Framing::new(reference.len(), reference.sample_rate)?;
    let active = fr.active(&reference.samples);
    if active.is_empty() {
        return Ok(0.0);
    }
    let (a, b) = paired_log_spectra(&reference.samples, &test.samples, &fr, &active);
    let bins = fr.n / 2 + 1;
    let k = 20.0 / std::f64::consts::LN_10;
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| ((0..bins).map(|i| (k * (x[i] - y[i])).powi(2)).sum::<f64>() / bins as f64).sqrt())
        .sum();
    Ok(total / active.len() as f64)
}

/// Per-frame SNR of `test` against `reference`, clamped to
/// `[SEGSNR_MIN, SEGSNR_MAX]` and averaged over active frames.
pub fn segmental_snr(reference: &AudioBuffer<f64>, test: &AudioBuffer<f64>) -> Result<f64> {
    check(reference, test)?;
    let fr = Framing::new(reference.len(), reference.sample_rate)?;
    let active = fr.active(&reference.samples);
    if active.is_empty() {
        return Ok(SEGSNR_MIN);
    }
    let total: f64 = active
        .iter()
        .map(|&t| {
            let r = fr.slice(&reference.samples, t);
            let x = fr.slice(&test.samples, t);
            let sig: f64 = r.iter().map(|v| v * v).sum();
            let err: f64 = r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            let snr = if err > 0.0 { 10.0 * (sig / err).log10() } else { SEGSNR_MAX };
            snr.clamp(SEGSNR_MIN, SEGSNR_MAX)
        })
        .sum();
    Ok(total / active.len() as f64)
}

pub fn evaluate(reference: &AudioBuffer<f64>, test: &AudioBuffer<f64>) -> Result<Metrics> {
    Ok(Metrics {
        cepstral_distance: cepstral_distance(reference, test)?,
        log_spectral_distance: log_spectral_distance(reference, test)?,
        segmental_snr: segmental_snr(reference, test)?,
    })
}
