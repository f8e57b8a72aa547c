//! Short-time Fourier analysis and overlap-add synthesis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative floor applied to magnitudes before taking logs.
pub const RELATIVE_FLOOR: f64 = 1e-10;
/// Absolute floor applied to magnitudes before taking logs.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&x| x * x).sum()
    }
}

/// Analysis window applied at both analysis and synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// Square root of the periodic Hann window.
    #[default]
    SqrtHann,
    /// Periodic Hann at analysis, rectangular at synthesis.
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    /// Frame length in seconds.
    pub frame_length: f64,
    /// Frame increment `L` in seconds.
    pub frame_increment: f64,
    pub window: Window,
    /// Transform size in samples; `None` uses the frame length.
    pub fft_size: Option<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { frame_length: 0.032, frame_increment: 0.008, window: Window::SqrtHann, fft_size: None }
    }
}

impl AnalysisConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length * sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.frame_increment * sample_rate as f64).round() as usize
    }

    pub fn fft_len(&self, sample_rate: u32) -> usize {
        self.fft_size.unwrap_or_else(|| self.frame_samples(sample_rate))
    }

    pub fn bins(&self, sample_rate: u32) -> usize {
        self.fft_len(sample_rate) / 2 + 1
    }

    /// Checks the geometry and the constant-overlap-add condition.
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let n = self.frame_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if n == 0 || hop == 0 || hop > n {
            return Err(Error::InvalidParameter(format!(
                "need 0 < hop ({hop}) <= frame ({n}) samples"
            )));
        }
        if self.fft_len(sample_rate) < n {
            return Err(Error::InvalidParameter("fft size shorter than the frame".into()));
        }
        let ripple = cola_ripple(&self.window_pair::<f64>(n), hop);
        if ripple > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "window/hop pair is not overlap-add constant (ripple {ripple:.2e})"
            )));
        }
        Ok(())
    }

    /// Analysis and synthesis windows of length `n`.
    pub fn window_pair<T: Real>(&self, n: usize) -> (Vec<T>, Vec<T>) {
        let hann: Vec<T> = (0..n)
            .map(|i| {
                let x = T::lit(2.0) * T::PI() * T::of_usize(i) / T::of_usize(n);
                T::lit(0.5) - T::lit(0.5) * x.cos()
            })
            .collect();
        match self.window {
            Window::SqrtHann => {
                let w: Vec<T> = hann.iter().map(|x| x.sqrt()).collect();
                (w.clone(), w)
            }
            Window::Hann => (hann, vec![T::one(); n]),
        }
    }
}

/// Peak-to-mean deviation of the overlap-added window product.
fn cola_ripple(windows: &(Vec<f64>, Vec<f64>), hop: usize) -> f64 {
    let n = windows.0.len();
    let mut acc = vec![0.0; hop];
    for i in 0..n {
        acc[i % hop] += windows.0[i] * windows.1[i];
    }
    let mean = acc.iter().sum::<f64>() / hop as f64;
    acc.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean
}

/// Complex STFT, `n_frames × n_bins`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrames<T> {
    pub data: Vec<Complex<T>>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub config: AnalysisConfig,
    pub sample_rate: u32,
    /// Length of the analysed signal in samples.
    pub signal_len: usize,
}

impl<T: Real> SpectralFrames<T> {
    pub fn zeros(n_frames: usize, config: AnalysisConfig, sample_rate: u32, signal_len: usize) -> Self {
        let n_bins = config.bins(sample_rate);
        Self {
            data: vec![Complex::new(T::zero(), T::zero()); n_frames * n_bins],
            n_frames,
            n_bins,
            config,
            sample_rate,
            signal_len,
        }
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> Complex<T> {
        self.data[t * self.n_bins + k]
    }

    #[inline]
    pub fn set(&mut self, t: usize, k: usize, v: Complex<T>) {
        self.data[t * self.n_bins + k] = v;
    }

    pub fn frame(&self, t: usize) -> &[Complex<T>] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn magnitude(&self) -> Vec<T> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<T> {
        self.data.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn phase(&self) -> Vec<T> {
        self.data.iter().map(|c| c.arg()).collect()
    }

    /// Natural log of the floored magnitudes.
    pub fn log_magnitude(&self) -> Vec<T> {
        log_magnitude(self)
    }

    /// Bin index nearest to `hz`.
    pub fn bin_of(&self, hz: f64) -> usize {
        let n = self.config.fft_len(self.sample_rate) as f64;
        ((hz * n / self.sample_rate as f64).round() as usize).min(self.n_bins - 1)
    }
}

/// Frames the signal, windows each frame and transforms it.
pub fn stft<T: Real>(audio: &AudioBuffer<T>, config: &AnalysisConfig) -> Result<SpectralFrames<T>> {
    config.validate(audio.sample_rate)?;
    let sr = audio.sample_rate;
    let n = config.frame_samples(sr);
    let hop = config.hop_samples(sr);
    let nfft = config.fft_len(sr);
    if audio.len() < n {
        return Err(Error::InsufficientInput(format!(
            "{} samples is shorter than one {n}-sample frame",
            audio.len()
        )));
    }
    let n_frames = (audio.len() - n) / hop + 1;
    let (win, _) = config.window_pair::<T>(n);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let mut out = SpectralFrames::zeros(n_frames, *config, sr, audio.len());
    let mut buf = vec![Complex::new(T::zero(), T::zero()); nfft];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < n { Complex::new(audio.samples[start + i] * win[i], T::zero()) } else { Complex::new(T::zero(), T::zero()) };
        }
        fft.process(&mut buf);
        out.data[t * out.n_bins..(t + 1) * out.n_bins].copy_from_slice(&buf[..out.n_bins]);
    }
    Ok(out)
}

/// Overlap-add resynthesis of the analysed span, `(T-1)·hop + frame` samples.
pub fn istft<T: Real>(frames: &SpectralFrames<T>, config: &AnalysisConfig) -> Result<AudioBuffer<T>> {
    let sr = frames.sample_rate;
    config.validate(sr)?;
    if config.bins(sr) != frames.n_bins {
        return Err(Error::ConfigMismatch(format!(
            "config implies {} bins, frames have {}",
            config.bins(sr),
            frames.n_bins
        )));
    }
    let n = config.frame_samples(sr);
    let hop = config.hop_samples(sr);
    let nfft = config.fft_len(sr);
    if frames.n_frames == 0 {
        return AudioBuffer::new(Vec::new(), sr);
    }
    let len = (frames.n_frames - 1) * hop + n;
    let (wa, ws) = config.window_pair::<T>(n);
    let ifft = FftPlanner::new().plan_fft_inverse(nfft);
    let mut out = vec![T::zero(); len];
    let mut norm = vec![T::zero(); len];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); nfft];
    let scale = T::one() / T::of_usize(nfft);
    for t in 0..frames.n_frames {
        let row = frames.frame(t);
        buf[..frames.n_bins].copy_from_slice(row);
        // Hermitian extension; DC and Nyquist imaginary parts are dropped.
        for k in frames.n_bins..nfft {
            buf[k] = buf[nfft - k].conj();
        }
        buf[0].im = T::zero();
        if nfft.is_multiple_of(2) {
            buf[nfft / 2].im = T::zero();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for i in 0..n {
            out[start + i] = out[start + i] + buf[i].re * scale * ws[i];
            norm[start + i] = norm[start + i] + wa[i] * ws[i];
        }
    }
    let peak = norm.iter().fold(T::zero(), |m, &x| m.max(x));
    let tiny = peak * T::lit(1e-3);
    for (o, w) in out.iter_mut().zip(&norm) {
        *o = if *w > tiny { *o / *w } else { T::zero() };
    }
    AudioBuffer::new(out, sr)
}

/// Natural log of `max(|X|, 1e-10·(frame peak), 1e-12)`.
pub fn log_magnitude<T: Real>(frames: &SpectralFrames<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(frames.data.len());
    for t in 0..frames.n_frames {
        let row = frames.frame(t);
        let peak = row.iter().fold(T::zero(), |m, c| m.max(c.norm()));
        let floor = (peak * T::lit(RELATIVE_FLOOR)).max(T::lit(ABSOLUTE_FLOOR));
        out.extend(row.iter().map(|c| c.norm().max(floor).ln()));
    }
    out
}

/// Log of a single magnitude under the absolute floor only.
pub fn floored_log<T: Real>(mag: T) -> T {
    mag.max(T::lit(ABSOLUTE_FLOOR)).ln()
}
