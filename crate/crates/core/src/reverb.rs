//! Reverberation parameters and their priors.
//!
//! Per frame and bin, late reverberation follows
//! `R_t = √a·R_{t-1}·e^{jθ} + √b·S_{t-1}·e^{jψ}`. The filter tracks
//! `γ = ½ln a` and `β = ½ln b`, with Gaussian priors fitted to free decay
//! regions of the pre-cleaned observation.

use crate::error::{Error, Result};
use crate::lognorm::{fuse, LogGaussian};
use crate::scalar::Real;

/// Upper bound kept on `γ` so that `a < 1`.
pub const GAMMA_CEILING: f64 = -1e-4;
/// `(ln 10 / 20)²`: one dB² of amplitude expressed in nats².
pub const DB2_TO_NATS2: f64 = DB_TO_NATS * DB_TO_NATS;
/// Amplitude dB to nats.
pub const DB_TO_NATS: f64 = std::f64::consts::LN_10 / 20.0;

/// Room acoustics in the units they are usually quoted in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomParams {
    /// Reverberation time in seconds.
    pub t60: f64,
    /// Direct-to-reverberant power ratio in dB.
    pub drr: f64,
    /// Frame increment `L` in seconds.
    pub frame_increment: f64,
}

impl RoomParams {
    pub fn new(t60: f64, drr: f64, frame_increment: f64) -> Result<Self> {
        let r = Self { t60, drr, frame_increment };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t60 > 0.0) || !self.t60.is_finite() {
            return Err(Error::InvalidParameter(format!("T60 must be positive, got {}", self.t60)));
        }
        if !(self.frame_increment > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame increment must be positive, got {}",
                self.frame_increment
            )));
        }
        if self.drr.is_nan() {
            return Err(Error::InvalidParameter("DRR is NaN".into()));
        }
        Ok(())
    }
}

/// `a = 10^(-6L/T60)`, `b = (1-a)/10^(DRR/10)`.
pub fn room_to_ab(room: &RoomParams) -> Result<(f64, f64)> {
    room.validate()?;
    let a = 10f64.powf(-6.0 * room.frame_increment / room.t60);
    let b = (1.0 - a) / 10f64.powf(room.drr / 10.0);
    Ok((a, b))
}

/// `(γ, β) = (½ln a, ½ln b)`.
pub fn ab_to_gamma_beta(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("a must lie in (0, 1), got {a}")));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("b must be positive, got {b}")));
    }
    Ok((0.5 * a.ln(), 0.5 * b.ln()))
}

/// Inverse map: `T60 = -3·ln10·L/γ`, `DRR = (1 - e^{2γ})/e^{2β}` in dB.
pub fn gamma_beta_to_room(gamma: f64, beta: f64, frame_increment: f64) -> Result<RoomParams> {
    if !(gamma < 0.0) {
        return Err(Error::InvalidParameter(format!("γ must be negative, got {gamma}")));
    }
    if !(frame_increment > 0.0) {
        return Err(Error::InvalidParameter("frame increment must be positive".into()));
    }
    let t60 = -3.0 * std::f64::consts::LN_10 * frame_increment / gamma;
    let drr = 10.0 * (-(2.0 * gamma).exp_m1()).log10() - 20.0 * beta / std::f64::consts::LN_10;
    Ok(RoomParams { t60, drr, frame_increment })
}

/// Gaussian beliefs over `γ` and `β` for one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverbParams<T> {
    pub gamma: LogGaussian<T>,
    pub beta: LogGaussian<T>,
}

impl<T: Real> ReverbParams<T> {
    /// Beliefs centred on `room` with the given variances.
    pub fn from_room(room: &RoomParams, gamma_var: T, beta_var: T) -> Result<Self> {
        let (a, b) = room_to_ab(room)?;
        let (g, be) = ab_to_gamma_beta(a, b)?;
        Ok(Self {
            gamma: LogGaussian::new(T::lit(g), gamma_var),
            beta: LogGaussian::new(T::lit(be), beta_var),
        })
    }

    /// Clamps `γ` below [`GAMMA_CEILING`]; returns whether it had to.
    pub fn clamp(&mut self) -> bool {
        let ceiling = T::lit(GAMMA_CEILING);
        if self.gamma.mean > ceiling || self.gamma.mean.is_nan() {
            self.gamma.mean = ceiling;
            true
        } else {
            false
        }
    }

    /// `(T60, DRR)` implied by the current means.
    pub fn room(&self, frame_increment: f64) -> Result<RoomParams> {
        gamma_beta_to_room(self.gamma.mean.to_f64_lossy(), self.beta.mean.to_f64_lossy(), frame_increment)
    }
}

/// Random-walk prediction: means kept, variances grow by `q_gamma`, `q_beta`.
pub fn random_walk_predict<T: Real>(params: &ReverbParams<T>, q_gamma: T, q_beta: T) -> ReverbParams<T> {
    ReverbParams {
        gamma: LogGaussian::new(params.gamma.mean, params.gamma.variance + q_gamma),
        beta: LogGaussian::new(params.beta.mean, params.beta.variance + q_beta),
    }
}

/// A run of frames with strictly decreasing log-magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeDecayRegion<T> {
    /// Index of the first frame of the run.
    pub start: usize,
    pub r_values: Vec<LogGaussian<T>>,
    /// Frames of look-ahead between the filter's frame and the run's end.
    pub look_ahead: usize,
}

impl<T: Real> FreeDecayRegion<T> {
    pub fn len(&self) -> usize {
        self.r_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_values.is_empty()
    }

    /// Frame indices covered by the run.
    pub fn frame_indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Longest run of strictly decreasing means that ends at the last element
/// of `recent`; excluded frames (`None`) break a run. `first_frame` is the
/// frame index of `recent[0]`.
pub fn detect_fdr<T: Real>(
    recent: &[Option<LogGaussian<T>>],
    first_frame: usize,
    min_length: usize,
    look_ahead: usize,
) -> Option<FreeDecayRegion<T>> {
    let last = (*recent.last()?)?;
    let mut values = vec![last];
    for prev in recent[..recent.len() - 1].iter().rev() {
        match prev {
            Some(p) if p.mean > values.last().map(|v| v.mean).unwrap_or(last.mean) => values.push(*p),
            _ => break,
        }
    }
    if values.len() < min_length.max(3) {
        return None;
    }
    values.reverse();
    let start = first_frame + recent.len() - values.len();
    Some(FreeDecayRegion { start, r_values: values, look_ahead })
}

/// Gaussian over `(slope in nats/s, intercept in nats)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePrior<T> {
    pub mean: [T; 2],
    /// Row-major 2×2 covariance.
    pub covariance: [T; 4],
}

/// Weighted least-squares line through the region, leaving out its first
/// frame. Time is measured in seconds from the first fitted frame, so the
/// intercept is the fitted log-magnitude there.
pub fn fit_line_prior<T: Real>(fdr: &FreeDecayRegion<T>, frame_increment: f64) -> Result<LinePrior<T>> {
    fit_line_prior_skipping(fdr, frame_increment, 0)
}

/// As [`fit_line_prior`] but also leaving out the next `skip` frames. The
/// origin of `x` stays at the second frame, so the intercept is the line
/// extrapolated back to it.
pub fn fit_line_prior_skipping<T: Real>(
    fdr: &FreeDecayRegion<T>,
    frame_increment: f64,
    skip: usize,
) -> Result<LinePrior<T>> {
    let pts = fdr.r_values.get(1 + skip..).unwrap_or(&[]);
    if pts.len() < 2 {
        return Err(Error::InsufficientInput(format!("{} usable frames, need 2", pts.len())));
    }
    let l = T::lit(frame_increment);
    let (mut sxx, mut sx1, mut s11, mut sxr, mut s1r) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for (i, g) in pts.iter().enumerate() {
        if !(g.variance > T::zero()) {
            return Err(Error::Singular("free decay frame with zero variance".into()));
        }
        let w = T::one() / g.variance;
        let x = l * T::of_usize(i + skip);
        sxx = sxx + w * x * x;
        sx1 = sx1 + w * x;
        s11 = s11 + w;
        sxr = sxr + w * x * g.mean;
        s1r = s1r + w * g.mean;
    }
    let det = sxx * s11 - sx1 * sx1;
    if !(det > T::lit(1e-300)) {
        return Err(Error::Singular("degenerate line design".into()));
    }
    let inv = [s11 / det, -sx1 / det, -sx1 / det, sxx / det];
    Ok(LinePrior {
        mean: [inv[0] * sxr + inv[1] * s1r, inv[2] * sxr + inv[3] * s1r],
        covariance: inv,
    })
}

/// `γ ~ L·θ₁`, and `β` as the intercept less the first frame's log-magnitude.
pub fn priors_from_line<T: Real>(
    prior: &LinePrior<T>,
    fdr: &FreeDecayRegion<T>,
    frame_increment: f64,
) -> (LogGaussian<T>, LogGaussian<T>) {
    let l = T::lit(frame_increment);
    let gamma = LogGaussian::new(l * prior.mean[0], l * l * prior.covariance[0]);
    let first = fdr.r_values[0];
    let beta = LogGaussian::new(prior.mean[1] - first.mean, prior.covariance[3] + first.variance);
    (gamma, beta)
}

/// Multiplies the predicted beliefs by the decay-region priors.
pub fn apply_priors<T: Real>(
    predicted: &ReverbParams<T>,
    priors: (LogGaussian<T>, LogGaussian<T>),
) -> Result<ReverbParams<T>> {
    Ok(ReverbParams { gamma: fuse(predicted.gamma, priors.0)?, beta: fuse(predicted.beta, priors.1)? })
}

/// At high reverberation-to-noise ratio the observation stands in for `r`
/// with a small fixed variance; other frames are excluded.
pub fn fdr_observation_to_r<T: Real>(
    z: LogGaussian<T>,
    noise_floor: LogGaussian<T>,
    threshold_nats: T,
    variance: T,
) -> Option<LogGaussian<T>> {
    if noise_floor.mean == T::neg_infinity() || z.mean - noise_floor.mean > threshold_nats {
        Some(LogGaussian::new(z.mean, variance))
    } else {
        None
    }
}
