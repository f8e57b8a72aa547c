//! Sampling oracles for the log-domain moment integrals.
//!
//! These are independent of the quadrature code in [`crate::lognorm`]: they
//! draw the magnitudes and phase difference directly and estimate moments
//! (or conditional moments, by rejection in a shrinking band around the
//! observation) from the samples. Test-only; enabled by the `oracle`
//! feature for downstream test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sample moments of `0.5·ln(e^{2a} + e^{2b} + 2cos(η)e^{a+b})`, `η ~ U(-π, π)`.
pub fn mc_logsum_prior(a: (f64, f64), b: (f64, f64), n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sa, sb) = (a.1.sqrt(), b.1.sqrt());
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for _ in 0..n {
        let x = a.0 + sa * normal(&mut rng);
        let y = b.0 + sb * normal(&mut rng);
        let eta: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let r = phasor(x, y, eta.cos());
        m1 += r;
        m2 += r * r;
    }
    let mean = m1 / n as f64;
    (mean, m2 / n as f64 - mean * mean)
}

fn phasor(x: f64, y: f64, c: f64) -> f64 {
    0.5 * ((2.0 * x).exp() + (2.0 * y).exp() + 2.0 * c * (x + y).exp()).ln()
}

/// Posterior moments `(mean_a, var_a, mean_b, var_b)`.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorMoments {
    pub mean_a: f64,
    pub var_a: f64,
    pub mean_b: f64,
    pub var_b: f64,
}

/// Pool of prior samples sorted by their log-magnitude sum, with prefix sums
/// so that band-conditional moments cost two binary searches.
pub struct RejectionPool {
    f: Vec<f64>,
    // prefix sums of (a - ma), (a - ma)², (b - mb), (b - mb)²
    prefix: Vec<[f64; 4]>,
    shift: (f64, f64),
}

impl RejectionPool {
    pub fn new(a: (f64, f64), b: (f64, f64), n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sa, sb) = (a.1.sqrt(), b.1.sqrt());
        let mut rows: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| {
                let x = sa * normal(&mut rng);
                let y = sb * normal(&mut rng);
                let lam: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                (phasor(a.0 + x, b.0 + y, lam.cos()), x, y)
            })
            .collect();
        rows.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = [0.0; 4];
        prefix.push(acc);
        for &(_, x, y) in &rows {
            acc[0] += x;
            acc[1] += x * x;
            acc[2] += y;
            acc[3] += y * y;
            prefix.push(acc);
        }
        Self { f: rows.iter().map(|r| r.0).collect(), prefix, shift: (a.0, b.0) }
    }

    /// Raw moments of the samples with `|f - y| < tol`, and their count.
    fn band(&self, y: f64, tol: f64) -> ([f64; 4], usize) {
        let lo = self.f.partition_point(|&v| v <= y - tol);
        let hi = self.f.partition_point(|&v| v < y + tol);
        let n = hi - lo;
        let mut m = [0.0; 4];
        if n > 0 {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk = (self.prefix[hi][k] - self.prefix[lo][k]) / n as f64;
            }
        }
        (m, n)
    }

    /// Conditional raw moments at `y`, extrapolated to zero band width by a
    /// least-squares fit in `tol²` over the given band widths.
    fn conditional(&self, y: f64, tols: &[f64]) -> Option<[f64; 4]> {
        let mut rows = Vec::new();
        for &t in tols {
            let (m, n) = self.band(y, t);
            if n < 200 {
                return None;
            }
            rows.push((t * t, m));
        }
        let k = rows.len() as f64;
        let sx: f64 = rows.iter().map(|r| r.0).sum();
        let sxx: f64 = rows.iter().map(|r| r.0 * r.0).sum();
        let mut out = [0.0; 4];
        for (j, o) in out.iter_mut().enumerate() {
            let sy: f64 = rows.iter().map(|r| r.1[j]).sum();
            let sxy: f64 = rows.iter().map(|r| r.0 * r.1[j]).sum();
            let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
            *o = (sy - slope * sx) / k;
        }
        Some(out)
    }

    /// Posterior moments averaged over weighted observation points.
    pub fn posterior(&self, obs: &[(f64, f64)], tols: &[f64]) -> Option<PosteriorMoments> {
        let mut acc = [0.0; 4];
        let mut wsum = 0.0;
        for &(y, w) in obs {
            if let Some(m) = self.conditional(y, tols) {
                for j in 0..4 {
                    acc[j] += w * m[j];
                }
                wsum += w;
            }
        }
        if wsum <= 0.0 {
            return None;
        }
        let m: Vec<f64> = acc.iter().map(|v| v / wsum).collect();
        Some(PosteriorMoments {
            mean_a: m[0] + self.shift.0,
            var_a: m[1] - m[0] * m[0],
            mean_b: m[2] + self.shift.1,
            var_b: m[3] - m[2] * m[2],
        })
    }
}

/// Equal-weight stratified points of `N(mean, var)` at the quantile midpoints.
pub fn stratified_normal(mean: f64, var: f64, count: usize) -> Vec<(f64, f64)> {
    let sd = var.sqrt();
    (0..count)
        .map(|i| {
            let p = (i as f64 + 0.5) / count as f64;
            (mean + sd * inverse_normal_cdf(p), 1.0 / count as f64)
        })
        .collect()
}

/// Acklam's rational approximation of the standard normal quantile,
/// refined by one Halley step.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let plow = 0.024_25;
    let x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = 0.5 * erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Complementary error function (Numerical Recipes `erfcc`, |rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Brute-force conditional moments of `(x, y)` given `x + y - w = total`
/// for independent Gaussians, on a uniform grid over `(x, y)`.
pub fn grid_constrained(x: (f64, f64), y: (f64, f64), total: (f64, f64), n: usize) -> (f64, f64, f64, f64) {
    let (sx, sy) = (x.1.sqrt(), y.1.sqrt());
    let half = 7.0;
    let hx = 2.0 * half * sx / n as f64;
    let hy = 2.0 * half * sy / n as f64;
    let mut acc = [0.0; 5];
    for i in 0..=n {
        let xv = x.0 - half * sx + hx * i as f64;
        let px = -0.5 * (xv - x.0).powi(2) / x.1;
        for j in 0..=n {
            let yv = y.0 - half * sy + hy * j as f64;
            let py = -0.5 * (yv - y.0).powi(2) / y.1;
            let w = xv + yv - total.0;
            let pw = -0.5 * w * w / total.1;
            let d = (px + py + pw).exp();
            acc[0] += d;
            acc[1] += d * xv;
            acc[2] += d * xv * xv;
            acc[3] += d * yv;
            acc[4] += d * yv * yv;
        }
    }
    let mx = acc[1] / acc[0];
    let my = acc[3] / acc[0];
    (mx, acc[2] / acc[0] - mx * mx, my, acc[4] / acc[0] - my * my)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
