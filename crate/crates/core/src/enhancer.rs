//! The per-bin filter cascade and the utterance-level driver.
//!
//! Each bin runs independently: noise tracking, Log-MMSE pre-cleaning and
//! AR fitting on its own trajectory, then one [`process_frame`] per frame.
//! Bins are distributed over the rayon pool; results are gathered in bin
//! order, so output does not depend on the thread count.

use std::collections::VecDeque;

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::lognorm::{add_independent, constrained_linear_update, LogGaussian, PriorRule, Quadrature, Status};
use crate::reverb::{
    apply_priors, detect_fdr, fdr_observation_to_r, fit_line_prior_skipping, priors_from_line, random_walk_predict,
    ReverbParams, RoomParams, DB2_TO_NATS2, DB_TO_NATS,
};
use crate::scalar::Real;
use crate::speech::{
    decorrelate, estimate_ar_track, log_mmse_preclean_track, predict, recorrelate, smoothed_previous, ArConfig,
    ArModel, PrecleanConfig, SpeechState,
};
use crate::stft::{istft, stft, AnalysisConfig, AudioBuffer, SpectralFrames, ABSOLUTE_FLOOR};
use crate::matrix::Matrix;

/// Sample rate the defaults are tuned for.
pub const SAMPLE_RATE: u32 = 16_000;

/// Step-7 scalar posterior fell back to its priors.
pub const FLAG_SPEECH_FALLBACK: u32 = 1;
/// Step-8 posterior skipped observation points or fell back.
pub const FLAG_REVERB_FALLBACK: u32 = 2;
/// Step-10 posterior skipped observation points or fell back.
pub const FLAG_SPLIT_FALLBACK: u32 = 4;
/// A negative variance was clamped somewhere in the frame.
pub const FLAG_VARIANCE_CLAMP: u32 = 8;
/// `γ` hit its ceiling.
pub const FLAG_GAMMA_CLAMP: u32 = 16;
/// A constrained update was inconsistent and its prior was kept.
pub const FLAG_CONSTRAINT_SKIPPED: u32 = 32;

/// Minimum-statistics noise tracker settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTrackerConfig {
    /// First-order smoothing of the periodogram.
    pub smoothing: f64,
    /// Length of the sliding minimum in seconds.
    pub window: f64,
    /// Multiplier compensating the downward bias of the minimum.
    pub bias: f64,
    /// Fixed variance of the noise log-magnitude belief, nats².
    pub variance: f64,
    /// Added to `½ln(power)` to form the belief mean, nats. The default is
    /// `-γ_E/2`, the mean log-magnitude of Rayleigh-distributed noise.
    pub log_offset: f64,
}

impl Default for NoiseTrackerConfig {
    fn default() -> Self {
        Self { smoothing: 0.85, window: 1.5, bias: 2.0, variance: 0.5, log_offset: -0.2886 }
    }
}

/// Every tunable of the enhancer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerConfig {
    pub analysis: AnalysisConfig,
    pub ar: ArConfig,
    pub preclean: PrecleanConfig,
    pub noise: NoiseTrackerConfig,
    /// Gauss-Hermite points per axis of the prior integrals.
    pub k_gauss: usize,
    /// Phase points of every log-sum integral.
    pub k_phase: usize,
    /// Points over a distributed observation.
    pub k_obs: usize,
    /// Trapezoid nodes per located mode of the posterior integrand.
    pub k_u: usize,
    pub prior_rule: PriorRule,
    pub q_gamma: f64,
    pub q_beta: f64,
    /// Look-ahead `C` of the free-decay detector, frames.
    pub look_ahead: usize,
    /// Frames past `t` at which the AR fitting window for frame `t` ends.
    /// At most `look_ahead`, so it adds no latency.
    pub ar_look_ahead: usize,
    pub min_fdr_length: usize,
    /// Leading decay frames beyond the first left out of the line fit.
    pub fdr_skip: usize,
    /// Longest history searched for a free decay region, frames.
    pub max_fdr_length: usize,
    pub rnr_threshold_db: f64,
    /// Variance assigned to free-decay observations, dB².
    pub fdr_variance_db2: f64,
    pub init_t60: f64,
    pub init_drr: f64,
    pub init_param_variance: f64,
    /// Initial variance of the speech and reverberation log-magnitudes, nats².
    pub init_state_variance: f64,
    /// Lower bound on the AR residual variance, nats².
    pub speech_residual_floor: f64,
    pub gain_floor_db: f64,
    pub gain_ceiling_db: f64,
    /// Output `exp(m + v/2)` instead of `exp(m)`.
    pub lognormal_correction: bool,
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig::default(),
            ar: ArConfig::default(),
            preclean: PrecleanConfig::default(),
            noise: NoiseTrackerConfig::default(),
            k_gauss: 3,
            k_phase: 6,
            k_obs: 3,
            k_u: 17,
            prior_rule: PriorRule::Analytic,
            q_gamma: 1e-7,
            q_beta: 4e-7,
            look_ahead: 3,
            ar_look_ahead: 3,
            min_fdr_length: 4,
            fdr_skip: 1,
            max_fdr_length: 64,
            rnr_threshold_db: 10.0,
            fdr_variance_db2: 1.0,
            init_t60: 0.5,
            init_drr: 0.0,
            init_param_variance: 1.0,
            init_state_variance: 1.0,
            speech_residual_floor: 0.05,
            gain_floor_db: -25.0,
            gain_ceiling_db: 0.0,
            lognormal_correction: false,
        }
    }
}

impl EnhancerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_phase == 0 || self.k_u < 5 {
            return Err(Error::InvalidParameter("sigma point counts out of range".into()));
        }
        if self.min_fdr_length < 3 || self.max_fdr_length < self.min_fdr_length {
            return Err(Error::InvalidParameter("need 3 <= min_fdr_length <= max_fdr_length".into()));
        }
        if self.fdr_skip + 3 > self.min_fdr_length {
            return Err(Error::InvalidParameter("fdr_skip leaves fewer than two fitted frames".into()));
        }
        if self.ar_look_ahead > self.look_ahead {
            return Err(Error::InvalidParameter("ar_look_ahead must not exceed look_ahead".into()));
        }
        if self.ar.order == 0 {
            return Err(Error::InvalidParameter("AR order must be >= 1".into()));
        }
        if !(self.noise.variance > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be positive".into()));
        }
        if self.q_gamma < 0.0 || self.q_beta < 0.0 {
            return Err(Error::InvalidParameter("random-walk variances must be >= 0".into()));
        }
        if !(self.noise.window > 0.0 && self.noise.bias > 0.0 && (0.0..1.0).contains(&self.noise.smoothing)) {
            return Err(Error::InvalidParameter("noise tracker settings out of range".into()));
        }
        RoomParams::new(self.init_t60, self.init_drr, self.analysis.frame_increment)?;
        Ok(())
    }

    pub fn quadrature<T: Real>(&self) -> Result<Quadrature<T>> {
        Ok(Quadrature::new(self.k_gauss, self.k_phase, self.k_obs, self.k_u)?.with_prior_rule(self.prior_rule))
    }
}

/// Noise log-magnitude belief for one frame and bin.
pub type NoiseBelief<T> = LogGaussian<T>;

/// Minimum-statistics tracking of one bin's noise power.
///
/// Returns the bias-compensated noise power per frame.
pub fn track_noise_power<T: Real>(power: &[T], cfg: &NoiseTrackerConfig, frame_increment: f64) -> Vec<T> {
    let window = ((cfg.window / frame_increment).round() as usize).max(1);
    let alpha = T::lit(cfg.smoothing);
    let bias = T::lit(cfg.bias);
    let floor = T::lit(ABSOLUTE_FLOOR * ABSOLUTE_FLOOR);
    let mut out = Vec::with_capacity(power.len());
    let mut deque: VecDeque<(usize, T)> = VecDeque::new();
    let head = power.len().min(10);
    let mut smooth = if head > 0 { power[..head].iter().copied().sum::<T>() / T::of_usize(head) } else { T::zero() };
    for (t, &p) in power.iter().enumerate() {
        let p = if p.is_finite() { p.max(floor) } else { floor };
        smooth = alpha * smooth + (T::one() - alpha) * p;
        while deque.back().is_some_and(|&(_, v)| v >= smooth) {
            deque.pop_back();
        }
        deque.push_back((t, smooth));
        while deque.front().is_some_and(|&(i, _)| i + window <= t) {
            deque.pop_front();
        }
        out.push((deque.front().map_or(smooth, |&(_, v)| v) * bias).max(floor));
    }
    out
}

/// Noise beliefs for a frames × bins power matrix: mean `½ln(power) + offset`
/// with the configured fixed variance.
pub fn track_noise<T: Real>(power: &Matrix<T>, cfg: &NoiseTrackerConfig, frame_increment: f64) -> Matrix<T> {
    let mut out = power.clone();
    for k in 0..power.cols {
        let track = track_noise_power(&power.column(k), cfg, frame_increment);
        let means: Vec<T> = track.iter().map(|&p| T::lit(0.5) * p.ln() + T::lit(cfg.log_offset)).collect();
        out.set_column(k, &means);
    }
    out
}

/// Filter state of one bin between frames.
#[derive(Debug, Clone, PartialEq)]
pub struct BinState<T> {
    pub speech: SpeechState<T>,
    /// `r_{t-1|t-1}`.
    pub reverb: LogGaussian<T>,
    pub params: ReverbParams<T>,
    /// `s_{t-1|t-1}`.
    pub last_speech: LogGaussian<T>,
    /// `s_{t-1|t}`, refreshed by each update.
    pub smoothed_prev_speech: LogGaussian<T>,
}

impl<T: Real> BinState<T> {
    /// State before the first frame, centred on the first observation.
    pub fn initial(y0: T, noise0: T, cfg: &EnhancerConfig) -> Result<Self> {
        let v = T::lit(cfg.init_state_variance);
        let room = RoomParams::new(cfg.init_t60, cfg.init_drr, cfg.analysis.frame_increment)?;
        let pv = T::lit(cfg.init_param_variance);
        let speech = LogGaussian::new(y0, v);
        Ok(Self {
            speech: SpeechState::uniform(cfg.ar.order, y0, v),
            reverb: LogGaussian::new(noise0.min(y0), v),
            params: ReverbParams::from_room(&room, pv, pv)?,
            last_speech: speech,
            smoothed_prev_speech: speech,
        })
    }
}

/// One row of the per-(frame, bin) log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub frame: usize,
    pub bin: usize,
    pub s_mean: f64,
    pub s_var: f64,
    pub r_mean: f64,
    pub r_var: f64,
    pub z_mean: f64,
    pub z_var: f64,
    pub gamma_mean: f64,
    pub gamma_var: f64,
    pub beta_mean: f64,
    pub beta_var: f64,
    pub t60_est: f64,
    pub drr_est: f64,
    pub fallback_flags: u32,
}

impl TraceRecord {
    pub const HEADER: &'static str = "frame,bin,s_mean,s_var,r_mean,r_var,z_mean,z_var,\
gamma_mean,gamma_var,beta_mean,beta_var,t60_est,drr_est,fallback_flags";

    /// Every real field, in header order.
    pub fn values(&self) -> [f64; 12] {
        [
            self.s_mean,
            self.s_var,
            self.r_mean,
            self.r_var,
            self.z_mean,
            self.z_var,
            self.gamma_mean,
            self.gamma_var,
            self.beta_mean,
            self.beta_var,
            self.t60_est,
            self.drr_est,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn to_csv_row(&self) -> String {
        let mut s = format!("{},{}", self.frame, self.bin);
        for v in self.values() {
            s.push(',');
            s.push_str(&format!("{v}"));
        }
        s.push_str(&format!(",{}", self.fallback_flags));
        s
    }
}

/// Everything one frame produces besides the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOutput<T> {
    /// `s_{t|t}`.
    pub speech: LogGaussian<T>,
    /// `r_{t|t}`.
    pub reverb: LogGaussian<T>,
    /// `z_{t|t}`.
    pub disturbance: LogGaussian<T>,
    pub flags: u32,
}

fn status_flags(status: Status, fallback_flag: u32) -> u32 {
    let mut f = 0;
    if status.fallback {
        f |= fallback_flag;
    }
    if status.clamped {
        f |= FLAG_VARIANCE_CLAMP;
    }
    f
}

/// One frame of the cascade for one bin. `priors` are the free-decay priors
/// on `(γ, β)` available at this frame, if any.
pub fn process_frame<T: Real>(
    state: &mut BinState<T>,
    y: T,
    noise: NoiseBelief<T>,
    ar: &ArModel<T>,
    priors: Option<(LogGaussian<T>, LogGaussian<T>)>,
    cfg: &EnhancerConfig,
    quad: &Quadrature<T>,
) -> Result<FrameOutput<T>> {
    let mut flags = 0;

    // Speech prediction and decorrelation.
    let mut model = ar.clone();
    model.residual_variance = model.residual_variance.max(T::lit(cfg.speech_residual_floor));
    let predicted = predict(&state.speech, &model)?;
    let dec = decorrelate(&predicted);
    let s_prior = dec.head;

    // Steps 1-2: random walk, then the free-decay priors.
    let mut params = random_walk_predict(&state.params, T::lit(cfg.q_gamma), T::lit(cfg.q_beta));
    if let Some(p) = priors {
        params = apply_priors(&params, p)?;
    }

    // Steps 3-4: old and new reverberation.
    let delta = add_independent(params.gamma, state.reverb);
    let eps = add_independent(params.beta, state.last_speech);

    // Steps 5-6: reverberation and disturbance priors.
    let (r_prior, st5) = quad.logsum_prior(delta, eps);
    let (z_prior, st6) = quad.logsum_prior(r_prior, noise);
    flags |= status_flags(st5.merge(st6), 0);

    // Step 7: split the observation into speech and disturbance.
    let d7 = quad.posterior_scalar(s_prior, z_prior, y);
    flags |= status_flags(d7.status, FLAG_SPEECH_FALLBACK);
    let s_post = d7.first;
    let z_post = d7.second;

    // Recorrelate for the smoothed previous speech frame.
    let speech = recorrelate(s_post, &dec);
    let s_prev_smoothed = smoothed_previous(&speech);

    // Step 8: reverberation from the disturbance posterior.
    let d8 = quad.posterior_distributed(r_prior, noise, z_post);
    flags |= status_flags(d8.status, FLAG_REVERB_FALLBACK);
    let r_post = d8.first;

    // Steps 9-10: split the reverberation into its old and new parts.
    let eps_prime = add_independent(params.beta, s_prev_smoothed);
    let d10 = quad.posterior_distributed(delta, eps_prime, r_post);
    flags |= status_flags(d10.status, FLAG_SPLIT_FALLBACK);

    // Steps 11-12: constrained updates of γ and β.
    let mut new_params = params;
    match constrained_linear_update(params.gamma, state.reverb, d10.first) {
        Ok((g, _)) => new_params.gamma = g,
        Err(_) => flags |= FLAG_CONSTRAINT_SKIPPED,
    }
    match constrained_linear_update(params.beta, s_prev_smoothed, d10.second) {
        Ok((b, _)) => new_params.beta = b,
        Err(_) => flags |= FLAG_CONSTRAINT_SKIPPED,
    }
    if new_params.clamp() {
        flags |= FLAG_GAMMA_CLAMP;
    }

    // Step 13: posteriors become the next frame's priors.
    state.speech = speech;
    state.reverb = r_post;
    state.params = new_params;
    state.last_speech = s_post;
    state.smoothed_prev_speech = s_prev_smoothed;

    Ok(FrameOutput { speech: s_post, reverb: r_post, disturbance: z_post, flags })
}

/// Free-decay priors at frame `t` from the gated pre-cleaned track.
fn decay_priors<T: Real>(
    gated: &[Option<LogGaussian<T>>],
    t: usize,
    cfg: &EnhancerConfig,
) -> Option<(LogGaussian<T>, LogGaussian<T>)> {
    let end = (t + cfg.look_ahead).min(gated.len() - 1);
    let start = (end + 1).saturating_sub(cfg.max_fdr_length);
    let fdr = detect_fdr(&gated[start..=end], start, cfg.min_fdr_length, cfg.look_ahead)?;
    let line = fit_line_prior_skipping(&fdr, cfg.analysis.frame_increment, cfg.fdr_skip).ok()?;
    let (g, b) = priors_from_line(&line, &fdr, cfg.analysis.frame_increment);
    (g.is_valid() && b.is_valid()).then_some((g, b))
}

/// Per-frame results of one bin.
#[derive(Debug, Clone)]
pub struct BinRun<T> {
    pub bin: usize,
    pub frames: Vec<FrameOutput<T>>,
    pub params: Vec<ReverbParams<T>>,
}

impl<T: Real> BinRun<T> {
    pub fn trace(&self, frame_increment: f64) -> Vec<TraceRecord> {
        self.frames
            .iter()
            .zip(&self.params)
            .enumerate()
            .map(|(t, (o, p))| {
                let room = p.room(frame_increment).ok();
                TraceRecord {
                    frame: t,
                    bin: self.bin,
                    s_mean: o.speech.mean.to_f64_lossy(),
                    s_var: o.speech.variance.to_f64_lossy(),
                    r_mean: o.reverb.mean.to_f64_lossy(),
                    r_var: o.reverb.variance.to_f64_lossy(),
                    z_mean: o.disturbance.mean.to_f64_lossy(),
                    z_var: o.disturbance.variance.to_f64_lossy(),
                    gamma_mean: p.gamma.mean.to_f64_lossy(),
                    gamma_var: p.gamma.variance.to_f64_lossy(),
                    beta_mean: p.beta.mean.to_f64_lossy(),
                    beta_var: p.beta.variance.to_f64_lossy(),
                    t60_est: room.map_or(f64::NAN, |r| r.t60),
                    drr_est: room.map_or(f64::NAN, |r| r.drr),
                    fallback_flags: o.flags,
                }
            })
            .collect()
    }

    /// `(T60, DRR)` estimate per frame.
    pub fn room_track(&self, frame_increment: f64) -> Vec<(f64, f64)> {
        self.params
            .iter()
            .map(|p| p.room(frame_increment).map_or((f64::NAN, f64::NAN), |r| (r.t60, r.drr)))
            .collect()
    }
}

/// Runs the whole filter on one bin's magnitude trajectory.
pub fn run_bin<T: Real>(bin: usize, magnitude: &[T], cfg: &EnhancerConfig, quad: &Quadrature<T>) -> Result<BinRun<T>> {
    let n = magnitude.len();
    let l = cfg.analysis.frame_increment;
    let floor = T::lit(ABSOLUTE_FLOOR);
    let mag: Vec<T> = magnitude.iter().map(|&m| if m.is_finite() { m.max(floor) } else { floor }).collect();
    let power: Vec<T> = mag.iter().map(|&m| m * m).collect();
    let noise_power = track_noise_power(&power, &cfg.noise, l);
    let offset = T::lit(cfg.noise.log_offset);
    let noise_var = T::lit(cfg.noise.variance);
    let noise: Vec<NoiseBelief<T>> =
        noise_power.iter().map(|&p| LogGaussian::new(T::lit(0.5) * p.ln() + offset, noise_var)).collect();

    let clean = log_mmse_preclean_track(&mag, &noise_power, &cfg.preclean)?;
    let clean_log: Vec<T> = clean.iter().map(|&c| c.max(floor).ln()).collect();
    let ar = estimate_ar_track(&clean_log, &cfg.ar, l)?;

    let threshold = T::lit(cfg.rnr_threshold_db * DB_TO_NATS);
    let fdr_var = T::lit(cfg.fdr_variance_db2 * DB2_TO_NATS2);
    let gated: Vec<Option<LogGaussian<T>>> = clean_log
        .iter()
        .zip(&noise)
        .map(|(&c, nb)| fdr_observation_to_r(LogGaussian::new(c, T::zero()), *nb, threshold, fdr_var))
        .collect();

    let y: Vec<T> = mag.iter().map(|m| m.ln()).collect();
    let mut state = BinState::initial(y[0], noise[0].mean, cfg)?;
    let mut frames = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for t in 0..n {
        let priors = decay_priors(&gated, t, cfg);
        let model = &ar[(t + cfg.ar_look_ahead).min(n - 1)];
        let out = process_frame(&mut state, y[t], noise[t], model, priors, cfg, quad)?;
        frames.push(out);
        params.push(state.params);
    }
    Ok(BinRun { bin, frames, params })
}

/// Which bins get a trace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TraceBins {
    #[default]
    None,
    All,
    Only(Vec<usize>),
}

impl TraceBins {
    fn contains(&self, k: usize) -> bool {
        match self {
            TraceBins::None => false,
            TraceBins::All => true,
            TraceBins::Only(v) => v.contains(&k),
        }
    }
}

/// Enhanced spectrum plus the requested traces.
#[derive(Debug, Clone)]
pub struct SpectralEnhancement<T> {
    pub frames: SpectralFrames<T>,
    /// Applied gain per frame and bin.
    pub gains: Matrix<T>,
    pub traces: Vec<TraceRecord>,
}

/// Output gain for one frame.
fn gain<T: Real>(s: LogGaussian<T>, y_mag: T, cfg: &EnhancerConfig) -> T {
    let lo = T::lit(10f64.powf(cfg.gain_floor_db / 20.0));
    let hi = T::lit(10f64.powf(cfg.gain_ceiling_db / 20.0));
    let m = if cfg.lognormal_correction { s.mean + T::lit(0.5) * s.variance } else { s.mean };
    let y = y_mag.max(T::lit(ABSOLUTE_FLOOR));
    let g = (m - y.ln()).exp();
    if g.is_finite() {
        g.max(lo).min(hi)
    } else {
        lo
    }
}

/// Runs the selected bins (all when `bins` is `None`) and returns their
/// results in ascending bin order.
pub fn run_bins<T: Real>(
    frames: &SpectralFrames<T>,
    cfg: &EnhancerConfig,
    bins: Option<&[usize]>,
) -> Result<Vec<BinRun<T>>> {
    cfg.validate()?;
    let quad = cfg.quadrature::<T>()?;
    let selected: Vec<usize> = match bins {
        Some(b) => {
            if let Some(&bad) = b.iter().find(|&&k| k >= frames.n_bins) {
                return Err(Error::InvalidParameter(format!("bin {bad} out of range 0..{}", frames.n_bins)));
            }
            let mut v = b.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => (0..frames.n_bins).collect(),
    };
    selected
        .par_iter()
        .map(|&k| {
            let mag: Vec<T> = (0..frames.n_frames).map(|t| frames.get(t, k).norm()).collect();
            run_bin(k, &mag, cfg, &quad)
        })
        .collect()
}

/// Filters every bin of `frames` and applies the speech estimates as gains.
pub fn enhance_frames<T: Real>(
    frames: &SpectralFrames<T>,
    cfg: &EnhancerConfig,
    trace: &TraceBins,
) -> Result<SpectralEnhancement<T>> {
    let runs = run_bins(frames, cfg, None)?;
    let mut out = frames.clone();
    let mut gains = Matrix::filled(frames.n_frames, frames.n_bins, T::one());
    let mut traces = Vec::new();
    for run in &runs {
        let k = run.bin;
        for (t, o) in run.frames.iter().enumerate() {
            let y = frames.get(t, k);
            let g = gain(o.speech, y.norm(), cfg);
            gains.set(t, k, g);
            out.set(t, k, Complex::new(y.re * g, y.im * g));
        }
        if trace.contains(k) {
            traces.extend(run.trace(cfg.analysis.frame_increment));
        }
    }
    traces.sort_by_key(|r| (r.frame, r.bin));
    Ok(SpectralEnhancement { frames: out, gains, traces })
}

/// Enhanced audio plus the requested traces.
#[derive(Debug, Clone)]
pub struct Enhancement<T> {
    pub audio: AudioBuffer<T>,
    pub traces: Vec<TraceRecord>,
}

/// STFT, per-bin filtering, gain application and resynthesis. The output
/// has the input's length; samples past the last full frame are zero.
pub fn enhance<T: Real>(audio: &AudioBuffer<T>, cfg: &EnhancerConfig, trace: &TraceBins) -> Result<Enhancement<T>> {
    if audio.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedSampleRate(audio.sample_rate, SAMPLE_RATE));
    }
    let frames = stft(audio, &cfg.analysis)?;
    let min_frames = cfg.ar.window_frames(cfg.analysis.frame_increment);
    if frames.n_frames < min_frames {
        return Err(Error::InsufficientInput(format!(
            "{} frames, need at least {min_frames} for one modulation frame",
            frames.n_frames
        )));
    }
    let enhanced = enhance_frames(&frames, cfg, trace)?;
    let mut out = istft(&enhanced.frames, &cfg.analysis)?;
    out.samples.resize(audio.len(), T::zero());
    Ok(Enhancement { audio: out, traces: enhanced.traces })
}
