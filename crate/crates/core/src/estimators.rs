//! Tail-probability estimators for `W = n^{1/p-1/2} Σ X_j θ_j` with `X`
//! cone-distributed on the unit ℓ_p sphere.
//!
//! Writing `X = Y/‖Y‖_p` with i.i.d. γ_p coordinates `Y_j`, the event
//! `{W > a}` is the same as
//!
//! ```text
//! (1/n) Σ √n θ_j Y_j  >  a · ((1/n) Σ |Y_j|^p)^{1/p}.
//! ```
//!
//! The Monte Carlo estimator samples `Y` directly. The importance sampler
//! draws each coordinate from the γ_p law tilted by
//! `exp(λ1·√n θ_j·y + λ2·|y|^p - Λ_p(√n θ_j λ1, λ2))` and reweights by the
//! product of likelihood ratios. For `n = 2` the probability is also
//! available by nested quadrature.
//!
//! Replication `r` always uses stream `r` of the run seed, and per-replication
//! results are reduced in replication order, so estimates are identical for
//! any number of worker threads.

use rayon::prelude::*;

use crate::dual::{DualPoint, DualProblem};
use crate::error::{Error, Result};
use crate::pgauss::{PExponent, PGauss};
use crate::prefactor::check_unit;
use crate::quadrature::adaptive_integrate;
use crate::sampling::{p_norm, stream_rng, Direction, PGaussSampler, TiltedSamplerTable};

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Replications whose log likelihood ratio exceeds this are dropped.
pub const MAX_LOG_WEIGHT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Mc,
    Is,
    Oracle,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Mc => "MC",
            EstimatorKind::Is => "IS",
            EstimatorKind::Oracle => "ORACLE",
        })
    }
}

/// Confidence interval construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CiKind {
    /// `mean ± 1.96·SD/√reps`, lower end clamped at zero.
    #[default]
    Normal,
    /// Log-normal interval with the same mean and standard error.
    LogNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub kind: EstimatorKind,
    pub mean: f64,
    /// `ln(mean)`, finite even when `mean` underflows.
    pub log_mean: f64,
    /// Standard error of the mean.
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replications that entered the mean.
    pub reps: usize,
    /// Replications discarded for weight overflow.
    pub dropped: usize,
    pub seed: u64,
    /// Fewer than two replications: the interval collapses to the mean.
    pub degenerate_ci: bool,
}

impl TailEstimate {
    /// 95% interval of the requested kind.
    pub fn ci(&self, kind: CiKind) -> (f64, f64) {
        match kind {
            CiKind::Normal => (self.ci_low, self.ci_high),
            CiKind::LogNormal => {
                if self.mean <= 0.0 || self.degenerate_ci {
                    return (self.mean, self.mean);
                }
                let rel = self.std_err / self.mean;
                let s = (rel * rel).ln_1p().sqrt();
                (self.mean * (-Z95 * s).exp(), self.mean * (Z95 * s).exp())
            }
        }
    }

    /// Half-width of the normal interval.
    pub fn half_width(&self) -> f64 {
        Z95 * self.std_err
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Summarizes per-replication values given as `ln(value)` (`-∞` for zero).
fn summarize(kind: EstimatorKind, logs: &[f64], dropped: usize, seed: u64) -> TailEstimate {
    let reps = logs.len();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if reps == 0 || shift == f64::NEG_INFINITY {
        return TailEstimate {
            kind,
            mean: 0.0,
            log_mean: f64::NEG_INFINITY,
            std_err: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            reps,
            dropped,
            seed,
            degenerate_ci: reps < 2,
        };
    }
    let scaled: Vec<f64> = logs.iter().map(|&l| (l - shift).exp()).collect();
    let nf = reps as f64;
    let mean_s = compensated_sum(scaled.iter().copied()) / nf;
    let scale = shift.exp();
    let (se_s, degenerate) = if reps < 2 {
        (0.0, true)
    } else {
        let ss = compensated_sum(scaled.iter().map(|v| (v - mean_s) * (v - mean_s)));
        ((ss / (nf - 1.0) / nf).sqrt(), false)
    };
    let mean = mean_s * scale;
    let std_err = se_s * scale;
    TailEstimate {
        kind,
        mean,
        log_mean: mean_s.ln() + shift,
        std_err,
        ci_low: ((mean_s - Z95 * se_s) * scale).max(0.0),
        ci_high: (mean_s + Z95 * se_s) * scale,
        reps,
        dropped,
        seed,
        degenerate_ci: degenerate,
    }
}

/// Both forms of the event for one draw of `Y`: the projection of the
/// normalized point, and the equivalent comparison of empirical averages.
fn events(y: &[f64], theta: &[f64], p: f64, a: f64) -> (bool, bool) {
    let n = y.len() as f64;
    let norm = p_norm(y, p);
    let dot = compensated_sum(y.iter().zip(theta).map(|(yi, ti)| yi * ti));
    let w = n.powf(1.0 / p - 0.5) * dot / norm;
    let lhs = n.sqrt() * dot / n;
    let rhs = a * norm / n.powf(1.0 / p);
    (w > a, lhs > rhs)
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        Err(Error::InvalidArgument("need at least one replication".into()))
    } else {
        Ok(())
    }
}

/// Naive Monte Carlo estimate of `P(W > a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub estimate: TailEstimate,
    /// Draws for which the two event forms disagreed (rounding at the boundary).
    pub event_mismatches: usize,
    /// Per-replication indicators.
    pub hits: Vec<bool>,
}

pub fn mc_tail(p: PExponent, a: f64, theta: &Direction, reps: usize, seed: u64) -> Result<McResult> {
    check_reps(reps)?;
    check_unit(&theta.theta)?;
    let n = theta.n;
    let pv = p.get();
    let sampler = PGaussSampler::new(p);
    let outcomes: Vec<(bool, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let y: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            events(&y, &theta.theta, pv, a)
        })
        .collect();
    let event_mismatches = outcomes.iter().filter(|(w, e)| w != e).count();
    let hits: Vec<bool> = outcomes.iter().map(|&(_, e)| e).collect();
    let logs: Vec<f64> = hits.iter().map(|&h| if h { 0.0 } else { f64::NEG_INFINITY }).collect();
    Ok(McResult {
        estimate: summarize(EstimatorKind::Mc, &logs, 0, seed),
        event_mismatches,
        hits,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsResult {
    pub estimate: TailEstimate,
    /// Per-replication indicators under the tilted law (dropped ones excluded).
    pub hits: Vec<bool>,
}

/// Importance-sampling estimate of `P(W > a)` with tilt `λ_a`.
pub fn is_tail(problem: &DualProblem, dp: &DualPoint, theta: &Direction, reps: usize, seed: u64) -> Result<IsResult> {
    is_tail_with_tilt(problem.pgauss(), dp.a, [dp.lambda[0], dp.lambda[1]], theta, reps, seed)
}

/// Importance sampling with an arbitrary tilt `λ`.
pub fn is_tail_with_tilt(
    pg: &PGauss,
    a: f64,
    lambda: [f64; 2],
    theta: &Direction,
    reps: usize,
    seed: u64,
) -> Result<IsResult> {
    check_reps(reps)?;
    check_unit(&theta.theta)?;
    let n = theta.n;
    let pv = pg.p().get();
    let sqn = (n as f64).sqrt();
    let [l1, l2] = lambda;
    let tables: Vec<TiltedSamplerTable> = theta
        .theta
        .par_iter()
        .map(|&t| TiltedSamplerTable::new(pg, sqn * t * l1, l2))
        .collect::<Result<_>>()?;
    let log_norm_total = compensated_sum(tables.iter().map(|t| t.log_norm()));

    // (log contribution, hit), or None when the weight overflowed.
    let outcomes: Vec<Option<(f64, bool)>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let y: Vec<f64> = tables.iter().map(|t| t.sample(&mut rng)).collect();
            let exponent = compensated_sum(
                y.iter()
                    .zip(&tables)
                    .map(|(&yi, t)| t.b() * yi + l2 * yi.abs().powf(pv)),
            );
            let log_w = log_norm_total - exponent;
            if log_w > MAX_LOG_WEIGHT {
                return None;
            }
            let (_, hit) = events(&y, &theta.theta, pv, a);
            Some((if hit { log_w } else { f64::NEG_INFINITY }, hit))
        })
        .collect();
    let dropped = outcomes.iter().filter(|o| o.is_none()).count();
    let kept: Vec<(f64, bool)> = outcomes.into_iter().flatten().collect();
    let logs: Vec<f64> = kept.iter().map(|&(l, _)| l).collect();
    Ok(IsResult {
        estimate: summarize(EstimatorKind::Is, &logs, dropped, seed),
        hits: kept.into_iter().map(|(_, h)| h).collect(),
    })
}

/// `(sld - is)·100/is`, undefined when `is ≤ 0`.
pub fn relative_distance(sld: f64, is_mean: f64) -> Option<f64> {
    (is_mean > 0.0 && is_mean.is_finite()).then(|| (sld - is_mean) * 100.0 / is_mean)
}

/// `P(W > a)` for `n = 2` by nested adaptive quadrature over the γ_p
/// product density.
pub fn brute_tail(p: PExponent, a: f64, theta: [f64; 2]) -> Result<f64> {
    check_unit(&theta)?;
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold a = {a} is not finite")));
    }
    let pv = p.get();
    let pg = PGauss::new(p);
    // Mass of γ_p beyond ±span is below 1e-17.
    let span = (pv * 40.0).powf(1.0 / pv);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let inner_tol = 1e-13;

    let inner = |y1: f64| -> Result<f64> {
        let h = |y2: f64| {
            s * (theta[0] * y1 + theta[1] * y2) - a * (0.5 * (y1.abs().powf(pv) + y2.abs().powf(pv))).powf(1.0 / pv)
        };
        let Some((lo, hi)) = positive_interval(&h, -span, span) else {
            return Ok(0.0);
        };
        if hi - lo <= 0.0 {
            return Ok(0.0);
        }
        let f = |y: f64| pg.density(y);
        // Split at the origin, where f_p may have a kink.
        if lo < 0.0 && hi > 0.0 {
            let (l, _) = adaptive_integrate(f, lo, 0.0, inner_tol)?;
            let (r, _) = adaptive_integrate(f, 0.0, hi, inner_tol)?;
            Ok(l + r)
        } else {
            Ok(adaptive_integrate(f, lo, hi, inner_tol)?.0)
        }
    };

    // Record the first inner failure instead of panicking inside the integrand.
    let failure = std::cell::RefCell::new(None::<Error>);
    let outer = |y1: f64| match inner(y1) {
        Ok(v) => pg.density(y1) * v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let (left, _) = adaptive_integrate(outer, -span, 0.0, 1e-10)?;
    let (right, _) = adaptive_integrate(outer, 0.0, span, 1e-10)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(left + right)
}

/// Interval `{h > 0} ∩ [lo, hi]` of a concave function, if nonempty.
fn positive_interval<F: Fn(f64) -> f64>(h: &F, lo: f64, hi: f64) -> Option<(f64, f64)> {
    // Golden-section search for the maximum.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x0, mut x1) = (lo, hi);
    let mut c = x1 - g * (x1 - x0);
    let mut d = x0 + g * (x1 - x0);
    let (mut hc, mut hd) = (h(c), h(d));
    for _ in 0..200 {
        if x1 - x0 <= 1e-15 * (1.0 + x0.abs().max(x1.abs())) {
            break;
        }
        if hc > hd {
            x1 = d;
            d = c;
            hd = hc;
            c = x1 - g * (x1 - x0);
            hc = h(c);
        } else {
            x0 = c;
            c = d;
            hc = hd;
            d = x0 + g * (x1 - x0);
            hd = h(d);
        }
    }
    let top = 0.5 * (x0 + x1);
    let candidates = [(top, h(top)), (lo, h(lo)), (hi, h(hi))];
    let &(peak, hmax) = candidates
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates");
    if !(hmax > 0.0) {
        return None;
    }
    let left = if h(lo) > 0.0 { lo } else { bisect_root(h, lo, peak) };
    let right = if h(hi) > 0.0 { hi } else { bisect_root(h, peak, hi) };
    Some((left, right))
}

/// Sign change of `h` between `a` and `b`.
fn bisect_root<F: Fn(f64) -> f64>(h: &F, mut a: f64, mut b: f64) -> f64 {
    let sa = h(a) > 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (h(m) > 0.0) == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
