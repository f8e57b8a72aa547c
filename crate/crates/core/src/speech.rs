//! Speech log-spectrum model: Log-MMSE pre-cleaning, per-bin AR fits over
//! modulation frames and the linear prediction step of the speech filter.

use crate::error::{Error, Result};
use crate::lognorm::LogGaussian;
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::special::exp_int_e1;

/// Settings of the decision-directed Log-MMSE pre-cleaner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecleanConfig {
    /// Decision-directed smoothing of the a-priori SNR.
    pub smoothing: f64,
    /// Lower gain bound in dB.
    pub gain_floor_db: f64,
    /// Lower bound on the a-priori SNR in dB.
    pub min_prior_snr_db: f64,
}

impl Default for PrecleanConfig {
    fn default() -> Self {
        Self { smoothing: 0.9, gain_floor_db: -20.0, min_prior_snr_db: -25.0 }
    }
}

/// Log-MMSE gain for a-priori SNR `xi` and a-posteriori SNR `gamma`.
pub fn log_mmse_gain(xi: f64, gamma: f64) -> f64 {
    let ratio = xi / (1.0 + xi);
    let v = (ratio * gamma).max(1e-300);
    let g = ratio * (0.5 * exp_int_e1(v)).exp();
    if g.is_finite() {
        g.min(1.0)
    } else {
        1.0
    }
}

/// Applies a decision-directed Log-MMSE gain to each bin's magnitude track.
/// Both matrices are frames × bins; `noise_power` is the noise periodogram.
pub fn log_mmse_preclean<T: Real>(
    noisy_mag: &Matrix<T>,
    noise_power: &Matrix<T>,
    cfg: &PrecleanConfig,
) -> Result<Matrix<T>> {
    noisy_mag.same_shape(noise_power)?;
    let mut out = noisy_mag.clone();
    for k in 0..noisy_mag.cols {
        let track = log_mmse_preclean_track(&noisy_mag.column(k), &noise_power.column(k), cfg)?;
        out.set_column(k, &track);
    }
    Ok(out)
}

/// Single-bin form of [`log_mmse_preclean`].
pub fn log_mmse_preclean_track<T: Real>(noisy_mag: &[T], noise_power: &[T], cfg: &PrecleanConfig) -> Result<Vec<T>> {
    if noisy_mag.len() != noise_power.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} magnitudes vs {} noise powers",
            noisy_mag.len(),
            noise_power.len()
        )));
    }
    let floor = 10f64.powf(cfg.gain_floor_db / 20.0);
    let xi_min = 10f64.powf(cfg.min_prior_snr_db / 10.0);
    let alpha = cfg.smoothing;
    let mut prev: Option<(f64, f64)> = None; // (gain², a-posteriori SNR) of the previous frame
    let mut out = Vec::with_capacity(noisy_mag.len());
    for (&ym, &np) in noisy_mag.iter().zip(noise_power) {
        let y = ym.to_f64_lossy();
        let lambda = np.to_f64_lossy();
        if !(lambda > 0.0) || !y.is_finite() {
            out.push(ym);
            prev = None;
            continue;
        }
        let gamma = (y * y / lambda).min(1e12);
        let ml = (gamma - 1.0).max(0.0);
        let xi = match prev {
            Some((g2, gam)) => alpha * g2 * gam + (1.0 - alpha) * ml,
            None => alpha + (1.0 - alpha) * ml,
        }
        .max(xi_min);
        let g = log_mmse_gain(xi, gamma).max(floor);
        prev = Some((g * g, gamma));
        out.push(T::lit(y * g));
    }
    Ok(out)
}

/// Modulation-frame geometry of the AR fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArConfig {
    pub order: usize,
    /// Modulation frame length in seconds.
    pub modulation_frame: f64,
    /// Modulation frame increment in seconds.
    pub modulation_increment: f64,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self { order: 2, modulation_frame: 0.064, modulation_increment: 0.008 }
    }
}

impl ArConfig {
    /// Modulation frame length in acoustic frames for hop `frame_increment`.
    pub fn window_frames(&self, frame_increment: f64) -> usize {
        ((self.modulation_frame / frame_increment).round() as usize).max(self.order + 1)
    }

    /// Acoustic frames between successive fits.
    pub fn step_frames(&self, frame_increment: f64) -> usize {
        ((self.modulation_increment / frame_increment).round() as usize).max(1)
    }
}

/// AR model of one bin's log-magnitude deviations around a local mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel<T> {
    pub coefficients: Vec<T>,
    pub residual_variance: T,
    /// Mean of the modulation frame the model was fitted on.
    pub mean: T,
}

impl<T: Real> ArModel<T> {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn random_walk(order: usize, residual_variance: T) -> Self {
        let mut coefficients = vec![T::zero(); order];
        coefficients[0] = T::one();
        Self { coefficients, residual_variance, mean: T::zero() }
    }
}

/// Levinson-Durbin solve of the order-`p` normal equations on the
/// zero-meaned window.
pub fn fit_ar<T: Real>(window: &[T], p: usize) -> Result<ArModel<T>> {
    if p == 0 {
        return Err(Error::InvalidParameter("AR order must be >= 1".into()));
    }
    if window.len() <= p {
        return Err(Error::InsufficientInput(format!(
            "{} samples cannot fit an order-{p} AR model",
            window.len()
        )));
    }
    let n = window.len();
    let mean = window.iter().copied().sum::<T>() / T::of_usize(n);
    let dev: Vec<T> = window.iter().map(|&x| x - mean).collect();
    let acf: Vec<T> = (0..=p)
        .map(|lag| (lag..n).map(|i| dev[i] * dev[i - lag]).sum::<T>() / T::of_usize(n))
        .collect();
    let scale = window.iter().fold(T::zero(), |m, x| m.max(x.magnitude())).max(T::one());
    if acf[0] <= T::lit(1e-12) * scale * scale {
        return Ok(ArModel { coefficients: vec![T::zero(); p], residual_variance: T::zero(), mean });
    }
    let mut a = vec![T::zero(); p];
    let mut err = acf[0];
    for m in 0..p {
        let mut acc = acf[m + 1];
        for j in 0..m {
            acc = acc - a[j] * acf[m - j];
        }
        let kappa = acc / err;
        let prev = a.clone();
        a[m] = kappa;
        for j in 0..m {
            a[j] = prev[j] - kappa * prev[m - 1 - j];
        }
        err = err * (T::one() - kappa * kappa);
        if err <= T::zero() {
            err = T::zero();
            break;
        }
    }
    Ok(ArModel { coefficients: a, residual_variance: err, mean })
}

/// AR models for every frame of one bin's trajectory. The model used at
/// frame `t` is fitted on the modulation frame ending at `t`, refreshed every
/// `step_frames`; frames before the first full window reuse the first fit.
pub fn estimate_ar_track<T: Real>(series: &[T], cfg: &ArConfig, frame_increment: f64) -> Result<Vec<ArModel<T>>> {
    let w = cfg.window_frames(frame_increment);
    let step = cfg.step_frames(frame_increment);
    if series.len() < w {
        return Err(Error::InsufficientInput(format!(
            "{} frames is shorter than one {w}-frame modulation frame",
            series.len()
        )));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut current = fit_ar(&series[..w], cfg.order)?;
    for t in 0..series.len() {
        if t + 1 >= w && (t + 1 - w).is_multiple_of(step) {
            current = fit_ar(&series[t + 1 - w..=t], cfg.order)?;
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Per-bin AR tracks for a frames × bins log-magnitude matrix; result is
/// indexed `[bin][frame]`.
pub fn estimate_ar<T: Real>(log_mag: &Matrix<T>, cfg: &ArConfig, frame_increment: f64) -> Result<Vec<Vec<ArModel<T>>>> {
    (0..log_mag.cols).map(|k| estimate_ar_track(&log_mag.column(k), cfg, frame_increment)).collect()
}

/// Gaussian over the last `p` speech log-magnitudes, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechState<T> {
    pub mean: Vec<T>,
    /// Row-major `p × p` covariance.
    pub covariance: Vec<T>,
}

impl<T: Real> SpeechState<T> {
    /// Every component at `mean` with independent variance `variance`.
    pub fn uniform(p: usize, mean: T, variance: T) -> Self {
        let mut covariance = vec![T::zero(); p * p];
        for i in 0..p {
            covariance[i * p + i] = variance;
        }
        Self { mean: vec![mean; p], covariance }
    }

    pub fn order(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn cov(&self, i: usize, j: usize) -> T {
        self.covariance[i * self.order() + j]
    }

    /// Marginal of component `i` (0 is the current frame).
    pub fn component(&self, i: usize) -> LogGaussian<T> {
        LogGaussian::new(self.mean[i], self.cov(i, i))
    }
}

/// Companion-matrix prediction around the model's local mean.
pub fn predict<T: Real>(state: &SpeechState<T>, model: &ArModel<T>) -> Result<SpeechState<T>> {
    let p = state.order();
    if model.order() != p {
        return Err(Error::ShapeMismatch(format!("AR order {} vs state order {p}", model.order())));
    }
    let a = &model.coefficients;
    let mut mean = vec![T::zero(); p];
    mean[0] = model.mean + (0..p).map(|i| a[i] * (state.mean[i] - model.mean)).sum::<T>();
    mean[1..p].copy_from_slice(&state.mean[..(p - 1)]);

    // F·Σ: first row is aᵀΣ, the others shift Σ's rows down.
    let mut fs = vec![T::zero(); p * p];
    for j in 0..p {
        fs[j] = (0..p).map(|i| a[i] * state.cov(i, j)).sum();
    }
    for i in 1..p {
        for j in 0..p {
            fs[i * p + j] = state.cov(i - 1, j);
        }
    }
    // (F·Σ)·Fᵀ
    let mut cov = vec![T::zero(); p * p];
    for i in 0..p {
        cov[i * p] = (0..p).map(|j| fs[i * p + j] * a[j]).sum();
        for j in 1..p {
            cov[i * p + j] = fs[i * p + j - 1];
        }
    }
    cov[0] = cov[0] + model.residual_variance.max(T::zero());
    // exact symmetry
    for i in 0..p {
        for j in 0..i {
            let m = T::lit(0.5) * (cov[i * p + j] + cov[j * p + i]);
            cov[i * p + j] = m;
            cov[j * p + i] = m;
        }
    }
    Ok(SpeechState { mean, covariance: cov })
}

/// Speech state split into the current-frame marginal and a remainder that
/// is uncorrelated with it: `tail = x[1..] - gain·x[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrelatedState<T> {
    pub head: LogGaussian<T>,
    pub tail_mean: Vec<T>,
    /// Row-major `(p-1) × (p-1)` covariance of the remainder.
    pub tail_covariance: Vec<T>,
    /// Regression of the older components on the head.
    pub gain: Vec<T>,
}

impl<T: Real> DecorrelatedState<T> {
    /// The `p × p` transform `B` mapping the state to `(head, tail)`.
    pub fn transform(&self) -> Vec<T> {
        let p = self.gain.len() + 1;
        let mut b = vec![T::zero(); p * p];
        for i in 0..p {
            b[i * p + i] = T::one();
        }
        for (i, g) in self.gain.iter().enumerate() {
            b[(i + 1) * p] = -*g;
        }
        b
    }
}

/// Relative threshold below which the head variance is treated as zero.
const PINV_THRESHOLD: f64 = 1e-12;

pub fn decorrelate<T: Real>(state: &SpeechState<T>) -> DecorrelatedState<T> {
    let p = state.order();
    let v0 = state.cov(0, 0);
    let scale = (0..p).map(|i| state.cov(i, i).magnitude()).fold(T::zero(), T::max);
    let inv = if v0 > T::lit(PINV_THRESHOLD) * scale { T::one() / v0 } else { T::zero() };
    let gain: Vec<T> = (1..p).map(|i| state.cov(i, 0) * inv).collect();
    let q = p - 1;
    let mut tail_covariance = vec![T::zero(); q * q];
    for i in 0..q {
        for j in 0..q {
            tail_covariance[i * q + j] = state.cov(i + 1, j + 1) - gain[i] * v0 * gain[j];
        }
    }
    let tail_mean = (0..q).map(|i| state.mean[i + 1] - gain[i] * state.mean[0]).collect();
    DecorrelatedState { head: state.component(0), tail_mean, tail_covariance, gain }
}

/// Reassembles the state around an updated head through `B⁻¹`.
pub fn recorrelate<T: Real>(head: LogGaussian<T>, dec: &DecorrelatedState<T>) -> SpeechState<T> {
    let q = dec.gain.len();
    let p = q + 1;
    let g = &dec.gain;
    let mut mean = vec![head.mean; p];
    let mut cov = vec![T::zero(); p * p];
    cov[0] = head.variance;
    for i in 0..q {
        mean[i + 1] = dec.tail_mean[i] + g[i] * head.mean;
        cov[(i + 1) * p] = g[i] * head.variance;
        cov[i + 1] = g[i] * head.variance;
        for j in 0..q {
            cov[(i + 1) * p + j + 1] = dec.tail_covariance[i * q + j] + g[i] * head.variance * g[j];
        }
    }
    SpeechState { mean, covariance: cov }
}

/// `s_{t-1|t}`: the previous frame's marginal after the current update.
pub fn smoothed_previous<T: Real>(state: &SpeechState<T>) -> LogGaussian<T> {
    if state.order() > 1 {
        state.component(1)
    } else {
        state.component(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn log_mmse_gain_at_unit_snr() {
        // 0.5·exp(0.5·E1(0.5)) with E1(0.5) = 0.5597735947761608
        let expected = 0.5 * (0.5 * 0.559_773_594_776_160_8f64).exp();
        assert_abs_diff_eq!(log_mmse_gain(1.0, 1.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.6615, epsilon = 1e-4);
    }

    #[test]
    fn noiseless_limit_passes_through() {
        let y = Matrix::new(vec![0.5f64, 1.0, 2.0, 0.1], 4, 1).unwrap();
        let n = Matrix::filled(4, 1, 1e-20);
        let out = log_mmse_preclean(&y, &n, &PrecleanConfig::default()).unwrap();
        for (a, b) in out.data.iter().zip(&y.data) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn zeros_stay_finite() {
        let y = Matrix::filled(10, 3, 1e-12f64);
        let n = Matrix::filled(10, 3, 1.0);
        let out = log_mmse_preclean(&y, &n, &PrecleanConfig::default()).unwrap();
        assert!(out.data.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!(out.data.iter().all(|&x| (1e-13..=1e-12).contains(&x)));
    }

    #[test]
    fn preclean_rejects_shape_mismatch() {
        let y = Matrix::filled(4, 2, 1.0f64);
        let n = Matrix::filled(4, 3, 1.0);
        assert!(matches!(log_mmse_preclean(&y, &n, &PrecleanConfig::default()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn ar1_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = vec![0.0f64; 20_000];
        for t in 1..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.9 * x[t - 1] + e;
        }
        let m = fit_ar(&x, 1).unwrap();
        assert!((m.coefficients[0] - 0.9).abs() < 0.05);
        assert!((m.residual_variance - 1.0).abs() < 0.05);
    }

    #[test]
    fn constant_input_gives_zero_model() {
        let m = fit_ar(&[3.0f64; 8], 2).unwrap();
        assert_eq!(m.coefficients, vec![0.0, 0.0]);
        assert_eq!(m.residual_variance, 0.0);
        assert_eq!(m.mean, 3.0);
    }

    #[test]
    fn default_geometry() {
        let c = ArConfig::default();
        assert_eq!(c.window_frames(0.008), 8);
        assert_eq!(c.step_frames(0.008), 1);
        let track = estimate_ar_track(&[0.1f64, 0.3, 0.2, 0.5, 0.4, 0.1, 0.0, 0.2, 0.6], &c, 0.008).unwrap();
        assert_eq!(track.len(), 9);
        assert!(track.iter().all(|m| m.coefficients.len() == 2));
        assert!(estimate_ar_track(&[0.0f64; 7], &c, 0.008).is_err());
    }

    #[test]
    fn random_walk_keeps_mean() {
        let s = SpeechState { mean: vec![1.5f64, -0.2], covariance: vec![0.3, 0.1, 0.1, 0.2] };
        let m = ArModel::random_walk(2, 0.0);
        let out = predict(&s, &m).unwrap();
        assert_eq!(out.mean, vec![1.5, 1.5]);
    }

    #[test]
    fn residual_sets_head_variance() {
        let s = SpeechState { mean: vec![0.0f64, 0.0], covariance: vec![0.0; 4] };
        let m = ArModel { coefficients: vec![0.5, 0.2], residual_variance: 0.7, mean: 0.0 };
        let out = predict(&s, &m).unwrap();
        assert_eq!(out.cov(0, 0), 0.7);
    }

    #[test]
    fn ar2_prediction_matches_matrix_product() {
        let s = SpeechState { mean: vec![1.0f64, 0.5], covariance: vec![0.4, 0.1, 0.1, 0.3] };
        let m = ArModel { coefficients: vec![1.2, -0.4], residual_variance: 0.05, mean: 0.0 };
        let out = predict(&s, &m).unwrap();
        // F = [[1.2, -0.4], [1, 0]]
        assert_abs_diff_eq!(out.mean[0], 1.2 * 1.0 - 0.4 * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.mean[1], 1.0, epsilon = 1e-12);
        let f = [[1.2, -0.4], [1.0, 0.0]];
        let sg = [[0.4, 0.1], [0.1, 0.3]];
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        v += f[i][k] * sg[k][l] * f[j][l];
                    }
                }
                if i == 0 && j == 0 {
                    v += 0.05;
                }
                assert_abs_diff_eq!(out.cov(i, j), v, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_state_decorrelates_trivially() {
        let s = SpeechState { mean: vec![1.0f64, 2.0], covariance: vec![0.5, 0.0, 0.0, 0.2] };
        let d = decorrelate(&s);
        assert_eq!(d.transform(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.head, LogGaussian::new(1.0, 0.5));
    }

    #[test]
    fn schur_elimination_removes_cross_term() {
        let s = SpeechState { mean: vec![0.0f64, 0.0], covariance: vec![1.0, 0.5, 0.5, 1.0] };
        let d = decorrelate(&s);
        let b = d.transform();
        // B Σ Bᵀ off-diagonal
        let sg = [[1.0, 0.5], [0.5, 1.0]];
        let mut cross = 0.0;
        for k in 0..2 {
            for l in 0..2 {
                cross += b[k] * sg[k][l] * b[2 + l];
            }
        }
        assert!(cross.abs() <= 1e-12);
    }

    #[test]
    fn recorrelate_inverts_decorrelate() {
        let s = SpeechState { mean: vec![0.3f64, -1.0], covariance: vec![0.7, 0.25, 0.25, 0.4] };
        let d = decorrelate(&s);
        let back = recorrelate(d.head, &d);
        for (a, b) in back.mean.iter().zip(&s.mean) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in back.covariance.iter().zip(&s.covariance) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn collapsed_head_shifts_history_by_regression() {
        let s = SpeechState { mean: vec![0.0f64, 0.0], covariance: vec![1.0, 0.5, 0.5, 1.0] };
        let d = decorrelate(&s);
        let out = recorrelate(LogGaussian::new(2.0, 0.0), &d);
        assert_abs_diff_eq!(out.mean[1], 0.5 * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cov(1, 1), 0.75, epsilon = 1e-12);
        assert_eq!(smoothed_previous(&out), out.component(1));
    }

    #[test]
    fn zero_head_variance_uses_pseudo_inverse() {
        let s = SpeechState { mean: vec![1.0f64, 2.0], covariance: vec![0.0, 0.0, 0.0, 0.3] };
        let d = decorrelate(&s);
        assert_eq!(d.gain, vec![0.0]);
        let back = recorrelate(d.head, &d);
        assert_eq!(back, s);
    }
}
