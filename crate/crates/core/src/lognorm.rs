//! Gaussian calculus in the log-magnitude domain.
//!
//! Every tracked quantity (speech, reverberation, noise, the reverberation
//! parameters) is a scalar Gaussian over a log-magnitude in nats. The
//! operations here combine and decompose such beliefs:
//!
//! * [`logsum_prior`] gives the moments of `0.5·ln(e^{2a} + e^{2b} + 2cos(φ)e^{a+b})`
//!   for independent Gaussian `a`, `b` and a uniform phase difference `φ`,
//! * [`logsum_posterior_scalar`] splits a scalar observation of such a sum
//!   back into its two components,
//! * [`logsum_posterior_distributed`] does the same against an observation
//!   that is itself a Gaussian belief,
//! * [`constrained_linear_update`] conditions two additive components on
//!   a soft linear constraint, and [`fuse`] multiplies two Gaussians.
//!
//! The posterior integrals are one-dimensional in the log-ratio `u = b - a`
//! at each phase sigma point. They are evaluated on trapezoid grids centred
//! on the Gauss-Newton modes of the integrand, so narrow priors and
//! bimodal posteriors are both resolved with a fixed node budget.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{dilog, gauss_legendre, normal_cdf, normal_pdf};

/// Smallest variance used inside the posterior integrands.
const VARIANCE_FLOOR: f64 = 1e-12;
/// Normalisers below this value trigger the prior fallback.
const NORMALIZER_FLOOR: f64 = 1e-300;
/// Half-width, in local standard deviations, of each trapezoid sub-grid.
const GRID_HALF_WIDTH: f64 = 6.0;
const GAUSS_NEWTON_ITERS: usize = 12;
/// Legendre nodes per piece of the analytic prior's residual integral.
const LEGENDRE_NODES: usize = 24;
/// Beyond this |u|, Li2(e^{-2|u|}) < 1e-17.
const DILOG_CUTOFF: f64 = 20.0;

// Probabilists' Gauss-Hermite rules for N(0, 1).
const GH3_NODES: [f64; 3] = [-1.732_050_807_568_877_2, 0.0, 1.732_050_807_568_877_2];
const GH3_WEIGHTS: [f64; 3] = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0];
const GH5_NODES: [f64; 5] = [
    -2.856_970_013_872_805_6,
    -1.355_626_179_974_266,
    0.0,
    1.355_626_179_974_266,
    2.856_970_013_872_805_6,
];
const GH5_WEIGHTS: [f64; 5] = [
    0.011_257_411_327_720_677,
    0.222_075_922_005_612_57,
    0.533_333_333_333_333_3,
    0.222_075_922_005_612_57,
    0.011_257_411_327_720_677,
];
const GH7_NODES: [f64; 7] = [
    -3.750_439_717_725_742_5,
    -2.366_759_410_734_541,
    -1.154_405_394_739_968_2,
    0.0,
    1.154_405_394_739_968_2,
    2.366_759_410_734_541,
    3.750_439_717_725_742_5,
];
const GH7_WEIGHTS: [f64; 7] = [
    0.000_548_268_855_972_217,
    0.030_757_123_967_586_52,
    0.240_123_178_605_012_7,
    0.457_142_857_142_857_1,
    0.240_123_178_605_012_7,
    0.030_757_123_967_586_52,
    0.000_548_268_855_972_217,
];

/// Scalar Gaussian over a log-magnitude (mean in nats, variance in nats²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGaussian<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: Real> LogGaussian<T> {
    pub fn new(mean: T, variance: T) -> Self {
        debug_assert!(variance >= T::zero() || variance.is_nan());
        Self { mean, variance }
    }

    /// Zero-variance belief.
    pub fn point(mean: T) -> Self {
        Self { mean, variance: T::zero() }
    }

    pub fn std_dev(&self) -> T {
        self.variance.max(T::zero()).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.mean.is_finite() && self.variance.is_finite() && self.variance >= T::zero()
    }
}

/// Weighted deterministic sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> SigmaPointSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weighted sum `Σ wᵢ f(pᵢ)`.
    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        self.iter().fold(T::zero(), |acc, (p, w)| acc + w * f(p))
    }
}

/// First and raw second moment of a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair<T> {
    pub first: T,
    pub second: T,
}

impl<T: Real> MomentPair<T> {
    /// Converts to a Gaussian; the flag reports whether a negative variance
    /// from rounding had to be clamped to zero.
    pub fn to_gaussian(self) -> (LogGaussian<T>, bool) {
        let var = self.second - self.first * self.first;
        if var < T::zero() {
            (LogGaussian::point(self.first), true)
        } else {
            (LogGaussian::new(self.first, var), false)
        }
    }
}

/// Numerical events raised while evaluating an operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Status {
    /// A negative variance was clamped to zero.
    pub clamped: bool,
    /// The normaliser underflowed and the priors were returned unchanged
    /// (for distributed observations: at least one observation point was skipped).
    pub fallback: bool,
}

impl Status {
    pub fn merge(self, other: Status) -> Status {
        Status { clamped: self.clamped || other.clamped, fallback: self.fallback || other.fallback }
    }
}

/// Output of a two-component decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    pub first: LogGaussian<T>,
    pub second: LogGaussian<T>,
    pub status: Status,
}

/// Gauss-Hermite sigma points for `g`; `count` must be 3, 5 or 7.
pub fn gaussian_sigma_points<T: Real>(g: LogGaussian<T>, count: usize) -> Result<SigmaPointSet<T>> {
    let (nodes, weights) = standard_gauss_hermite(count)?;
    let sd = g.std_dev();
    Ok(SigmaPointSet {
        points: nodes.iter().map(|&x| g.mean + sd * T::lit(x)).collect(),
        weights: weights.iter().map(|&w| T::lit(w)).collect(),
    })
}

fn standard_gauss_hermite(count: usize) -> Result<(&'static [f64], &'static [f64])> {
    match count {
        3 => Ok((&GH3_NODES, &GH3_WEIGHTS)),
        5 => Ok((&GH5_NODES, &GH5_WEIGHTS)),
        7 => Ok((&GH7_NODES, &GH7_WEIGHTS)),
        _ => Err(Error::InvalidParameter(format!(
            "gaussian sigma point count must be 3, 5 or 7, got {count}"
        ))),
    }
}

/// Equal-weight phase points `((1..=count) - 0.5)·π/count` on `(0, π)`.
pub fn phase_sigma_points<T: Real>(count: usize) -> Result<SigmaPointSet<T>> {
    if count == 0 {
        return Err(Error::InvalidParameter("phase sigma point count must be >= 1".into()));
    }
    let n = T::of_usize(count);
    let w = T::one() / n;
    Ok(SigmaPointSet {
        points: (1..=count).map(|i| (T::of_usize(i) - T::lit(0.5)) * T::PI() / n).collect(),
        weights: vec![w; count],
    })
}

/// Sum of independent Gaussians: means and variances add.
pub fn add_independent<T: Real>(g1: LogGaussian<T>, g2: LogGaussian<T>) -> LogGaussian<T> {
    LogGaussian::new(g1.mean + g2.mean, g1.variance + g2.variance)
}

/// Difference of independent Gaussians: means subtract, variances add.
pub fn sub_independent<T: Real>(g1: LogGaussian<T>, g2: LogGaussian<T>) -> LogGaussian<T> {
    LogGaussian::new(g1.mean - g2.mean, g1.variance + g2.variance)
}

/// `0.5·ln(e^{2x} + e^{2y} + 2c·e^{x+y})`, the log-magnitude of two phasors
/// with log-magnitudes `x`, `y` and phase-difference cosine `c`.
#[inline]
pub fn log_phasor_sum<T: Real>(x: T, y: T, c: T) -> T {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    let e = (lo - hi).exp();
    let inner = (T::one() + e * e + T::lit(2.0) * c * e).max(T::min_positive_value());
    hi + T::lit(0.5) * inner.ln()
}

/// `f(u) = 0.5·ln(1 + e^{2u} + 2c·e^u)` and its derivative.
#[inline]
fn soft_term<T: Real>(u: T, c: T) -> (T, T) {
    let two = T::lit(2.0);
    let tiny = T::min_positive_value();
    if u <= T::zero() {
        let e = u.exp();
        let den = (T::one() + e * e + two * c * e).max(tiny);
        (T::lit(0.5) * den.ln(), (e * e + c * e) / den)
    } else {
        let e = (-u).exp();
        let den = (e * e + T::one() + two * c * e).max(tiny);
        (u + T::lit(0.5) * den.ln(), (T::one() + c * e) / den)
    }
}

/// Precomputed quadrature rules shared by all log-sum operations.
#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    gauss_nodes: Vec<T>,
    gauss_weights: Vec<T>,
    obs_nodes: Vec<T>,
    obs_weights: Vec<T>,
    phase_cos: Vec<T>,
    phase_weights: Vec<T>,
    grid_offsets: Vec<T>,
    prior_rule: PriorRule,
    legendre: (Vec<f64>, Vec<f64>),
}

/// How [`Quadrature::logsum_prior`] integrates over the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorRule {
    /// Phase average in closed form, the remaining one-dimensional integral
    /// over the log-ratio split at its kink. Sigma-point counts are unused.
    #[default]
    Analytic,
    /// Nested sums: `k_gauss × k_gauss` Gauss-Hermite grid times `k_phase`
    /// phase points.
    SigmaPoints,
}

impl<T: Real> Quadrature<T> {
    /// `k_gauss` points per Gaussian axis of the prior integrals, `k_phase`
    /// phase points, `k_obs` points over a distributed observation and
    /// `k_u` trapezoid nodes per located mode of the posterior integrand.
    pub fn new(k_gauss: usize, k_phase: usize, k_obs: usize, k_u: usize) -> Result<Self> {
        let (gn, gw) = standard_gauss_hermite(k_gauss)?;
        let (on, ow) = standard_gauss_hermite(k_obs)?;
        let phase = phase_sigma_points::<T>(k_phase)?;
        if k_u < 5 {
            return Err(Error::InvalidParameter(format!("k_u must be >= 5, got {k_u}")));
        }
        let half = T::lit(GRID_HALF_WIDTH);
        let step = T::lit(2.0) * half / T::of_usize(k_u - 1);
        Ok(Self {
            gauss_nodes: gn.iter().map(|&x| T::lit(x)).collect(),
            gauss_weights: gw.iter().map(|&x| T::lit(x)).collect(),
            obs_nodes: on.iter().map(|&x| T::lit(x)).collect(),
            obs_weights: ow.iter().map(|&x| T::lit(x)).collect(),
            phase_cos: phase.points.iter().map(|p| p.cos()).collect(),
            phase_weights: phase.weights.clone(),
            grid_offsets: (0..k_u).map(|i| -half + step * T::of_usize(i)).collect(),
            prior_rule: PriorRule::default(),
            legendre: gauss_legendre(LEGENDRE_NODES),
        })
    }

    pub fn with_prior_rule(mut self, rule: PriorRule) -> Self {
        self.prior_rule = rule;
        self
    }

    pub fn prior_rule(&self) -> PriorRule {
        self.prior_rule
    }

    /// Moments of the log-magnitude of a sum of two independent phasors.
    pub fn logsum_prior(&self, a: LogGaussian<T>, b: LogGaussian<T>) -> (LogGaussian<T>, Status) {
        // Canonical argument order makes the result exactly symmetric.
        let (a, b) = if (a.mean, a.variance) <= (b.mean, b.variance) { (a, b) } else { (b, a) };
        if self.prior_rule == PriorRule::Analytic {
            return self.analytic_prior(a, b);
        }
        let shift = a.mean.max(b.mean);
        let (sa, sb) = (a.std_dev(), b.std_dev());
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for (xa, wa) in self.gauss_nodes.iter().zip(&self.gauss_weights) {
            let da = a.mean + sa * *xa - shift;
            for (xb, wb) in self.gauss_nodes.iter().zip(&self.gauss_weights) {
                let db = b.mean + sb * *xb - shift;
                let w = *wa * *wb;
                let mut p1 = T::zero();
                let mut p2 = T::zero();
                for (c, wp) in self.phase_cos.iter().zip(&self.phase_weights) {
                    let r = log_phasor_sum(da, db, *c);
                    p1 = p1 + *wp * r;
                    p2 = p2 + *wp * r * r;
                }
                m1 = m1 + w * p1;
                m2 = m2 + w * p2;
            }
        }
        let (g, clamped) = MomentPair { first: m1, second: m2 }.to_gaussian();
        (LogGaussian::new(g.mean + shift, g.variance), Status { clamped, fallback: false })
    }

    // With u = a - b and ψ = ln|1 + e^{u+jη}|, r = b + ψ. Averaged over η,
    // ψ has mean max(u, 0) and, about that, mean square Li2(e^{-2|u|})/2.
    // Writing b = mb + k(u - μ) + e with e independent of u leaves one
    // integral over u that is not closed-form.
    fn analytic_prior(&self, a: LogGaussian<T>, b: LogGaussian<T>) -> (LogGaussian<T>, Status) {
        let (ma, va) = (a.mean.to_f64_lossy(), a.variance.to_f64_lossy().max(0.0));
        let (mb, vb) = (b.mean.to_f64_lossy(), b.variance.to_f64_lossy().max(0.0));
        let mu = ma - mb;
        let v = va + vb;
        let (pos_mean, pos_var, pos_cov, k, resid) = if v > 0.0 {
            let sd = v.sqrt();
            let (cdf, pdf) = (normal_cdf(mu / sd), normal_pdf(mu / sd));
            let m1 = mu * cdf + sd * pdf;
            let m2 = (mu * mu + v) * cdf + mu * sd * pdf;
            (m1, (m2 - m1 * m1).max(0.0), v * cdf, -vb / v, va * vb / v)
        } else {
            (mu.max(0.0), 0.0, 0.0, 0.0, 0.0)
        };
        let mean = mb + pos_mean;
        let var = resid + k * k * v + pos_var + 2.0 * k * pos_cov + 0.5 * self.mean_dilog(mu, v);
        (LogGaussian::new(T::lit(mean), T::lit(var.max(0.0))), Status::default())
    }

    /// `E{Li2(e^{-2|u|})}` for `u ~ N(mu, v)`.
    fn mean_dilog(&self, mu: f64, v: f64) -> f64 {
        let f = |u: f64| dilog((-2.0 * u.abs()).exp());
        if v <= 1e-24 {
            return f(mu);
        }
        let sd = v.sqrt();
        let lo = (mu - 8.0 * sd).max(-DILOG_CUTOFF);
        let hi = (mu + 8.0 * sd).min(DILOG_CUTOFF);
        if lo >= hi {
            return 0.0;
        }
        let density = |u: f64| normal_pdf((u - mu) / sd) / sd;
        let (nodes, weights) = &self.legendre;
        // Plain rule on [l, h].
        let plain = |l: f64, h: f64| -> f64 {
            let (c, r) = (0.5 * (h + l), 0.5 * (h - l));
            nodes.iter().zip(weights).map(|(x, w)| w * r * f(c + r * x) * density(c + r * x)).sum()
        };
        // |u| = w² near the cusp at zero; `sign` picks the side.
        let cusp = |len: f64, sign: f64| -> f64 {
            let r = 0.5 * len.sqrt();
            nodes
                .iter()
                .zip(weights)
                .map(|(x, w)| {
                    let t = r * (1.0 + x);
                    let u = sign * t * t;
                    w * r * 2.0 * t * f(u) * density(u)
                })
                .sum()
        };
        if lo < 0.0 && hi > 0.0 {
            cusp(-lo, -1.0) + cusp(hi, 1.0)
        } else {
            plain(lo, hi)
        }
    }

    /// Posterior of `(a, b)` given the scalar observation
    /// `y = 0.5·ln(e^{2a} + e^{2b} + 2cos(λ)e^{a+b})`.
    pub fn posterior_scalar(&self, a: LogGaussian<T>, b: LogGaussian<T>, y: T) -> Decomposition<T> {
        match self.raw_posterior(a, b, y) {
            Some(raw) => raw.finish(a, b, Status::default()),
            None => Decomposition { first: a, second: b, status: Status { clamped: false, fallback: true } },
        }
    }

    /// Posterior of `(a, b)` averaged over the sigma points of a Gaussian
    /// observation belief.
    pub fn posterior_distributed(
        &self,
        a: LogGaussian<T>,
        b: LogGaussian<T>,
        obs: LogGaussian<T>,
    ) -> Decomposition<T> {
        let sd = obs.std_dev();
        let mut acc = RawMoments::<T>::zero();
        let mut total_w = T::zero();
        let mut skipped = false;
        for (x, w) in self.obs_nodes.iter().zip(&self.obs_weights) {
            match self.raw_posterior(a, b, obs.mean + sd * *x) {
                Some(raw) => {
                    acc = acc.add_scaled(&raw.normalized(), *w);
                    total_w = total_w + *w;
                }
                None => skipped = true,
            }
        }
        if total_w <= T::zero() {
            return Decomposition { first: a, second: b, status: Status { clamped: false, fallback: true } };
        }
        let status = Status { clamped: false, fallback: skipped };
        acc.scaled(T::one() / total_w).finish(a, b, status)
    }

    /// Unnormalised moments of `(a - a.mean, b - b.mean)`; `None` when the
    /// normaliser underflows.
    fn raw_posterior(&self, a: LogGaussian<T>, b: LogGaussian<T>, y: T) -> Option<RawMoments<T>> {
        // Canonical order keeps the node set, and so the result, exactly
        // exchange-symmetric.
        if (a.mean, a.variance) > (b.mean, b.variance) {
            return self.raw_posterior(b, a, y).map(|r| RawMoments { w: r.w, a1: r.b1, a2: r.b2, b1: r.a1, b2: r.a2 });
        }
        let floor = T::lit(VARIANCE_FLOOR);
        let model = Constraint {
            ma: a.mean,
            va: a.variance.max(floor),
            mb: b.mean,
            vb: b.variance.max(floor),
            y,
        };
        let starts = [b.mean - y, y - a.mean, b.mean - a.mean, T::zero()];

        let mut nodes: Vec<T> = Vec::with_capacity(self.grid_offsets.len() * starts.len());
        let mut samples: Vec<(T, T, T)> = Vec::with_capacity(self.phase_cos.len() * 4 * self.grid_offsets.len());
        let mut modes: Vec<(T, T)> = Vec::with_capacity(starts.len());

        for (c, wp) in self.phase_cos.iter().zip(&self.phase_weights) {
            let c = *c;
            modes.clear();
            // Far from u = 0 the integrand tends to one prior alone; those
            // asymptotic windows catch shoulders that have no mode of their own.
            let asymptotes = [(y - a.mean, model.va.sqrt()), (b.mean - y, model.vb.sqrt())];
            modes.extend(starts.iter().map(|&u0| model.gauss_newton(u0, c)));
            modes.extend(asymptotes);
            merge_windows(&mut modes);
            nodes.clear();
            for &(m, w) in &modes {
                nodes.extend(self.grid_offsets.iter().map(|&t| m + w * t));
            }
            nodes.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));

            let n = nodes.len();
            let log_wp = wp.ln();
            for i in 0..n {
                let left = if i == 0 { nodes[i] } else { nodes[i - 1] };
                let right = if i + 1 == n { nodes[i] } else { nodes[i + 1] };
                let width = T::lit(0.5) * (right - left);
                if width <= T::zero() {
                    continue;
                }
                let u = nodes[i];
                let (s, z, lq) = model.eval(u, c);
                samples.push((lq + log_wp + width.ln(), s - a.mean, z - b.mean));
            }
        }

        let max_lq = samples.iter().fold(T::neg_infinity(), |m, s| m.max(s.0));
        if !max_lq.is_finite() {
            return None;
        }
        let mut raw = RawMoments::<T>::zero();
        for &(lq, da, db) in &samples {
            let w = (lq - max_lq).exp();
            raw.w = raw.w + w;
            raw.a1 = raw.a1 + w * da;
            raw.a2 = raw.a2 + w * da * da;
            raw.b1 = raw.b1 + w * db;
            raw.b2 = raw.b2 + w * db * db;
        }
        let two_pi = T::lit(2.0) * T::PI();
        let log_norm = max_lq + raw.w.ln()
            - T::lit(0.5) * ((two_pi * model.va).ln() + (two_pi * model.vb).ln());
        if !(log_norm >= T::lit(NORMALIZER_FLOOR.ln())) {
            return None;
        }
        Some(raw)
    }

    pub fn gauss_count(&self) -> usize {
        self.gauss_nodes.len()
    }

    pub fn phase_count(&self) -> usize {
        self.phase_cos.len()
    }
}

/// Collapses chains of near-identical `(centre, width)` windows to their
/// widest member. Mirror-invariant, so exchange symmetry survives.
fn merge_windows<T: Real>(windows: &mut Vec<(T, T)>) {
    windows.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let close = |p: (T, T), q: (T, T)| {
        (q.0 - p.0).magnitude() < T::lit(0.25) * p.1.min(q.1) && p.1 < T::lit(2.0) * q.1 && q.1 < T::lit(2.0) * p.1
    };
    let mut out: Vec<(T, T)> = Vec::with_capacity(windows.len());
    let mut i = 0;
    while i < windows.len() {
        let mut j = i + 1;
        while j < windows.len() && close(windows[j - 1], windows[j]) {
            j += 1;
        }
        let group = &windows[i..j];
        let widest = group.iter().fold(T::zero(), |m, g| m.max(g.1));
        let tied: Vec<T> = group.iter().filter(|g| g.1 >= widest * T::lit(1.0 - 1e-9)).map(|g| g.0).collect();
        let centre = tied.iter().copied().sum::<T>() / T::of_usize(tied.len());
        out.push((centre, widest));
        i = j;
    }
    *windows = out;
}

/// `y = s + f(u)` with `u = z - s`, for priors `s ~ N(ma, va)`, `z ~ N(mb, vb)`.
struct Constraint<T> {
    ma: T,
    va: T,
    mb: T,
    vb: T,
    y: T,
}

impl<T: Real> Constraint<T> {
    /// Returns `(s, z, log q)` on the constraint surface at `u`.
    #[inline]
    fn eval(&self, u: T, c: T) -> (T, T, T) {
        let (f, _) = soft_term(u, c);
        let s = self.y - f;
        let z = s + u;
        let ds = s - self.ma;
        let dz = z - self.mb;
        let half = T::lit(0.5);
        (s, z, -half * (ds * ds / self.va + dz * dz / self.vb))
    }

    /// Gauss-Newton mode search on `log q(u)`; returns the mode and its
    /// local standard deviation.
    fn gauss_newton(&self, u0: T, c: T) -> (T, T) {
        let mut u = u0;
        let mut width = T::one();
        let max_step = T::lit(3.0);
        for _ in 0..GAUSS_NEWTON_ITERS {
            let (f, fp) = soft_term(u, c);
            let s = self.y - f;
            let z = s + u;
            let ds_du = -fp;
            let dz_du = T::one() - fp;
            let info = ds_du * ds_du / self.va + dz_du * dz_du / self.vb;
            let grad = -(s - self.ma) * ds_du / self.va - (z - self.mb) * dz_du / self.vb;
            width = T::one() / info.sqrt();
            let mut step = grad / info;
            let limit = max_step.max(T::lit(3.0) * width);
            if step > limit {
                step = limit;
            } else if step < -limit {
                step = -limit;
            }
            u = u + step;
            if step.magnitude() <= T::lit(1e-9) * (T::one() + width) {
                break;
            }
        }
        let (_, fp) = soft_term(u, c);
        let info = fp * fp / self.va + (T::one() - fp) * (T::one() - fp) / self.vb;
        width = width.min(T::one() / info.sqrt());
        (u, width)
    }
}

/// Weighted sums of `1, a, a², b, b²` (components shifted by their prior means).
#[derive(Debug, Clone, Copy)]
struct RawMoments<T> {
    w: T,
    a1: T,
    a2: T,
    b1: T,
    b2: T,
}

impl<T: Real> RawMoments<T> {
    fn zero() -> Self {
        Self { w: T::zero(), a1: T::zero(), a2: T::zero(), b1: T::zero(), b2: T::zero() }
    }

    fn normalized(&self) -> Self {
        self.scaled(T::one() / self.w)
    }

    fn scaled(&self, k: T) -> Self {
        Self { w: self.w * k, a1: self.a1 * k, a2: self.a2 * k, b1: self.b1 * k, b2: self.b2 * k }
    }

    fn add_scaled(&self, o: &Self, k: T) -> Self {
        Self {
            w: self.w + o.w * k,
            a1: self.a1 + o.a1 * k,
            a2: self.a2 + o.a2 * k,
            b1: self.b1 + o.b1 * k,
            b2: self.b2 + o.b2 * k,
        }
    }

    fn finish(self, a: LogGaussian<T>, b: LogGaussian<T>, status: Status) -> Decomposition<T> {
        let n = self.normalized();
        let (ga, ca) = MomentPair { first: n.a1, second: n.a2 }.to_gaussian();
        let (gb, cb) = MomentPair { first: n.b1, second: n.b2 }.to_gaussian();
        Decomposition {
            first: LogGaussian::new(ga.mean + a.mean, ga.variance),
            second: LogGaussian::new(gb.mean + b.mean, gb.variance),
            status: status.merge(Status { clamped: ca || cb, fallback: false }),
        }
    }
}

/// Moments of `r = 0.5·ln(e^{2a} + e^{2b} + 2cos(η)e^{a+b})` for independent
/// `a`, `b` and uniform `η`, by nested sigma-point sums: a `k_gauss × k_gauss`
/// Gauss-Hermite grid times `k_phase` phase points. See [`PriorRule`] for
/// the closed-form alternative used by default inside [`Quadrature`].
pub fn logsum_prior<T: Real>(
    a: LogGaussian<T>,
    b: LogGaussian<T>,
    k_gauss: usize,
    k_phase: usize,
) -> Result<LogGaussian<T>> {
    let q = Quadrature::new(k_gauss, k_phase, 3, 17)?.with_prior_rule(PriorRule::SigmaPoints);
    Ok(q.logsum_prior(a, b).0)
}

/// Posterior of the two components given a scalar observation of their
/// log-magnitude sum. Falls back to the priors (with `status.fallback`)
/// when the observation is numerically inconsistent with them.
pub fn logsum_posterior_scalar<T: Real>(
    prior_a: LogGaussian<T>,
    prior_b: LogGaussian<T>,
    y: T,
    k_phase: usize,
    k_u: usize,
) -> Result<Decomposition<T>> {
    let q = Quadrature::new(3, k_phase, 3, k_u)?;
    Ok(q.posterior_scalar(prior_a, prior_b, y))
}

/// Posterior of the two components given a Gaussian belief over their
/// log-magnitude sum, `E{x^m} = ∫ E{x^m | o} p(o) do` over `k_obs` points.
pub fn logsum_posterior_distributed<T: Real>(
    prior_a: LogGaussian<T>,
    prior_b: LogGaussian<T>,
    obs: LogGaussian<T>,
    k_phase: usize,
    k_u: usize,
    k_obs: usize,
) -> Result<Decomposition<T>> {
    let q = Quadrature::new(3, k_phase, k_obs, k_u)?;
    Ok(q.posterior_distributed(prior_a, prior_b, obs))
}

/// Conditions `(x, y, w) ~ N(μ, diag(σx², σy², σw²))`, `μ = (x̄, ȳ, 0)`,
/// on `x + y - w = total.mean` where `σw² = total.variance`, returning the
/// marginals of `x` and `y`.
pub fn constrained_linear_update<T: Real>(
    prior_x: LogGaussian<T>,
    prior_y: LogGaussian<T>,
    total: LogGaussian<T>,
) -> Result<(LogGaussian<T>, LogGaussian<T>)> {
    let s = prior_x.variance + prior_y.variance + total.variance;
    let innovation = total.mean - (prior_x.mean + prior_y.mean);
    if s <= T::zero() {
        let scale = T::one() + total.mean.magnitude();
        if innovation.magnitude() <= T::lit(1e-12) * scale {
            return Ok((prior_x, prior_y));
        }
        return Err(Error::OverDetermined(format!(
            "zero-variance components violate the constraint by {innovation}"
        )));
    }
    let post = |g: LogGaussian<T>| {
        let gain = g.variance / s;
        LogGaussian::new(g.mean + gain * innovation, (g.variance - gain * g.variance).max(T::zero()))
    };
    Ok((post(prior_x), post(prior_y)))
}

/// Product of two Gaussian densities, renormalised.
pub fn fuse<T: Real>(g1: LogGaussian<T>, g2: LogGaussian<T>) -> Result<LogGaussian<T>> {
    let (v1, v2) = (g1.variance, g2.variance);
    if v1.is_infinite() && v2.is_infinite() {
        return Ok(LogGaussian::new(T::lit(0.5) * (g1.mean + g2.mean), v1));
    }
    if v1.is_infinite() {
        return Ok(g2);
    }
    if v2.is_infinite() {
        return Ok(g1);
    }
    let s = v1 + v2;
    if s <= T::zero() {
        if g1.mean == g2.mean {
            return Ok(g1);
        }
        return Err(Error::InvalidParameter(format!(
            "cannot fuse two zero-variance beliefs with means {} and {}",
            g1.mean, g2.mean
        )));
    }
    Ok(LogGaussian::new((g1.mean * v2 + g2.mean * v1) / s, v1 * v2 / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g(m: f64, v: f64) -> LogGaussian<f64> {
        LogGaussian::new(m, v)
    }

    /// Raw moments of N(0, 1): 1, 0, 1, 0, 3, 0, 15, 0, 105, ...
    fn normal_moment(k: u32) -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            (1..k).step_by(2).map(|x| x as f64).product()
        }
    }

    #[test]
    fn gauss_hermite_three_points() {
        let sp = gaussian_sigma_points(g(0.0, 1.0), 3).unwrap();
        assert_abs_diff_eq!(sp.points[0], -3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sp.points[1], 0.0);
        assert_abs_diff_eq!(sp.points[2], 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sp.weights[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.weights[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_hermite_exact_degree() {
        for count in [3usize, 5, 7] {
            let sp = gaussian_sigma_points(g(0.0, 1.0), count).unwrap();
            let wsum: f64 = sp.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 1.0, epsilon = 1e-12);
            for k in 0..(2 * count as u32) {
                let m = sp.integrate(|x| x.powi(k as i32));
                assert_abs_diff_eq!(m, normal_moment(k), epsilon = 1e-9 * normal_moment(k).max(1.0));
            }
        }
    }

    #[test]
    fn gauss_hermite_rejects_other_counts() {
        assert!(gaussian_sigma_points(g(0.0, 1.0), 4).is_err());
        assert!(gaussian_sigma_points(g(0.0, 1.0), 9).is_err());
    }

    #[test]
    fn degenerate_gaussian_collapses_points() {
        for count in [3, 5, 7] {
            let sp = gaussian_sigma_points(g(-2.5, 0.0), count).unwrap();
            assert!(sp.points.iter().all(|&p| p == -2.5));
        }
    }

    #[test]
    fn sigma_points_match_moments() {
        let target = g(1.3, 0.42);
        for count in [3, 5, 7] {
            let sp = gaussian_sigma_points(target, count).unwrap();
            let mean = sp.integrate(|x| x);
            let var = sp.integrate(|x| (x - mean).powi(2));
            assert_abs_diff_eq!(mean, 1.3, epsilon = 1e-12);
            assert_abs_diff_eq!(var, 0.42, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_points_six() {
        let sp = phase_sigma_points::<f64>(6).unwrap();
        for (i, p) in sp.points.iter().enumerate() {
            assert_abs_diff_eq!(*p, (2 * i + 1) as f64 * std::f64::consts::PI / 12.0, epsilon = 1e-15);
        }
        assert!(sp.weights.iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
        let one = phase_sigma_points::<f64>(1).unwrap();
        assert_abs_diff_eq!(one.points[0], std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(one.weights[0], 1.0);
    }

    #[test]
    fn phase_points_cancel_cosines() {
        // The equal-weight midpoint rule on (0, π) integrates cos(nξ) to zero
        // for every n that is not a multiple of 2K.
        for count in 1..=8usize {
            let sp = phase_sigma_points::<f64>(count).unwrap();
            for n in 1..2 * count {
                let s = sp.integrate(|x| (n as f64 * x).cos());
                assert!(s.abs() < 1e-12, "K={count} n={n}: {s}");
            }
        }
    }

    #[test]
    fn add_independent_examples() {
        let id = add_independent(g(0.0, 0.0), g(0.7, 0.3));
        assert_eq!(id, g(0.7, 0.3));
        let d = add_independent(g(-0.307, 0.01), g(-2.0, 0.25));
        assert_abs_diff_eq!(d.mean, -2.307, epsilon = 1e-12);
        assert_abs_diff_eq!(d.variance, 0.26, epsilon = 1e-12);
        assert_eq!(add_independent(g(1.0, 2.0), g(3.0, 4.0)), add_independent(g(3.0, 4.0), g(1.0, 2.0)));
    }

    #[test]
    fn logsum_prior_equal_points() {
        // Midpoint rule on 0.5·ln(2 + 2cos η): the 2K nodes are the roots of
        // ζ^{2K} = -1, whose product identity gives exactly ln(2)/(2K).
        for k in [1usize, 2, 6, 24, 96] {
            let r = logsum_prior(g(0.0, 0.0), g(0.0, 0.0), 3, k).unwrap();
            assert_abs_diff_eq!(r.mean, std::f64::consts::LN_2 / (2 * k) as f64, epsilon = 1e-12);
        }
        let fine = logsum_prior(g(0.0, 0.0), g(0.0, 0.0), 3, 100_000).unwrap();
        assert!(fine.mean.abs() < 1e-5);
    }

    #[test]
    fn logsum_prior_dominance() {
        let r = logsum_prior(g(0.0, 0.04), g(-20.0, 0.0), 3, 6).unwrap();
        assert_abs_diff_eq!(r.mean, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.variance, 0.04, epsilon = 1e-6);
    }

    #[test]
    fn logsum_prior_symmetric_exactly() {
        let a = g(-1.2, 0.3);
        let b = g(-0.4, 0.05);
        assert_eq!(logsum_prior(a, b, 3, 6).unwrap(), logsum_prior(b, a, 3, 6).unwrap());
    }

    #[test]
    fn logsum_prior_within_phasor_bounds() {
        for &(x, y) in &[(0.0, 0.0), (-1.0, 0.5), (2.0, -3.0), (-4.0, -4.1)] {
            let r = logsum_prior(g(x, 0.0), g(y, 0.0), 3, 6).unwrap();
            let hi = f64::max(x, y);
            let constructive = (f64::exp(x) + f64::exp(y)).ln();
            assert!(r.mean >= hi - 0.35 && r.mean <= constructive, "{x},{y}: {}", r.mean);
        }
    }

    #[test]
    fn posterior_scalar_near_degenerate_priors() {
        let y = 0.5 * (1.0 + (-20f64).exp()).ln();
        let d = logsum_posterior_scalar(g(0.0, 1e-8), g(-10.0, 1e-8), y, 6, 17).unwrap();
        assert!(!d.status.fallback);
        assert_abs_diff_eq!(d.first.mean, 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(d.second.mean, -10.0, epsilon = 1e-4);
        assert!(d.first.variance <= 1.01e-8 && d.second.variance <= 1.01e-8);
    }

    #[test]
    fn posterior_scalar_symmetric_priors() {
        for &y in &[-2.0, -1.0, -0.5, 0.0, 1.0] {
            let d = logsum_posterior_scalar(g(-1.0, 0.25), g(-1.0, 0.25), y, 6, 17).unwrap();
            assert_abs_diff_eq!(d.first.mean, d.second.mean, epsilon = 1e-6);
            assert_abs_diff_eq!(d.first.variance, d.second.variance, epsilon = 1e-6);
        }
    }

    #[test]
    fn posterior_scalar_brackets_observation() {
        let d = logsum_posterior_scalar(g(-1.0, 0.25), g(-1.5, 0.25), -0.7, 6, 17).unwrap();
        let lo = log_phasor_sum(d.first.mean, d.second.mean, -1.0 + 1e-12);
        let hi = log_phasor_sum(d.first.mean, d.second.mean, 1.0);
        assert!(lo <= -0.7 && -0.7 <= hi);
    }

    #[test]
    fn posterior_scalar_falls_back_when_inconsistent() {
        let d = logsum_posterior_scalar(g(0.0, 1e-6), g(0.0, 1e-6), 500.0, 6, 17).unwrap();
        assert!(d.status.fallback);
        assert_eq!(d.first, g(0.0, 1e-6));
        assert_eq!(d.second, g(0.0, 1e-6));
    }

    #[test]
    fn posterior_distributed_degenerate_observation() {
        let a = g(-1.0, 0.25);
        let b = g(-1.5, 0.25);
        let s = logsum_posterior_scalar(a, b, -0.7, 6, 17).unwrap();
        let d = logsum_posterior_distributed(a, b, g(-0.7, 0.0), 6, 17, 3).unwrap();
        assert_abs_diff_eq!(s.first.mean, d.first.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(s.first.variance, d.first.variance, epsilon = 1e-8);
        assert_abs_diff_eq!(s.second.mean, d.second.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(s.second.variance, d.second.variance, epsilon = 1e-8);
    }

    #[test]
    fn posterior_distributed_exchange_symmetry() {
        let a = g(-1.0, 0.25);
        let b = g(-1.5, 0.16);
        let obs = g(-0.7, 0.09);
        let ab = logsum_posterior_distributed(a, b, obs, 6, 17, 3).unwrap();
        let ba = logsum_posterior_distributed(b, a, obs, 6, 17, 3).unwrap();
        assert_abs_diff_eq!(ab.first.mean, ba.second.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(ab.second.mean, ba.first.mean, epsilon = 1e-8);
        assert_abs_diff_eq!(ab.first.variance, ba.second.variance, epsilon = 1e-8);
    }

    #[test]
    fn constrained_update_exact_propagation() {
        let (x, y) = constrained_linear_update(g(0.3, 0.5), g(-1.0, 0.0), g(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(x.mean, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.variance, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.mean, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn constrained_update_hand_example() {
        let (x, y) = constrained_linear_update(g(0.0, 1.0), g(0.0, 1.0), g(2.0, 1.0)).unwrap();
        assert_abs_diff_eq!(x.mean, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.variance, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.mean, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constrained_update_over_determined() {
        assert!(constrained_linear_update(g(0.0, 0.0), g(0.0, 0.0), g(1.0, 0.0)).is_err());
        assert!(constrained_linear_update(g(0.5, 0.0), g(0.5, 0.0), g(1.0, 0.0)).is_ok());
    }

    #[test]
    fn fuse_examples() {
        let same = fuse(g(0.7, 0.4), g(0.7, 0.4)).unwrap();
        assert_abs_diff_eq!(same.mean, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(same.variance, 0.2, epsilon = 1e-12);
        assert_eq!(fuse(g(0.0, 1.0), g(2.0, 1.0)).unwrap(), g(1.0, 0.5));
        assert_eq!(fuse(g(0.3, 0.1), g(5.0, f64::INFINITY)).unwrap(), g(0.3, 0.1));
        let wide = fuse(g(0.3, 0.1), g(5.0, 1e12)).unwrap();
        assert_abs_diff_eq!(wide.mean, 0.3, epsilon = 1e-9);
        assert!(fuse(g(0.0, 0.0), g(1.0, 0.0)).is_err());
    }

    #[test]
    fn moment_pair_clamps() {
        let (g0, clamped) = MomentPair { first: 1.0, second: 1.0 - 1e-12 }.to_gaussian();
        assert!(clamped);
        assert_eq!(g0.variance, 0.0);
    }

    #[test]
    fn works_in_single_precision() {
        let q = Quadrature::<f32>::new(3, 6, 3, 17).unwrap();
        let d = q.posterior_scalar(LogGaussian::new(-1.0, 0.25), LogGaussian::new(-1.5, 0.25), -0.7);
        assert!(d.first.is_valid() && d.second.is_valid());
        let d64 = logsum_posterior_scalar(g(-1.0, 0.25), g(-1.5, 0.25), -0.7, 6, 17).unwrap();
        assert!((d.first.mean as f64 - d64.first.mean).abs() < 1e-3);
    }
}
