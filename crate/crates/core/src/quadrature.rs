//! Quadrature against the standard Gaussian measure and adaptive 1-D
//! integration with error control.
//!
//! Gauss-Hermite rules use the probabilists' convention: weights sum to one
//! and integrate against `γ₂(du) = e^{-u²/2}/√(2π) du`. Nodes come from the
//! Golub-Welsch eigenproblem on the Jacobi matrix of the Hermite recurrence
//! and are then polished with a few Newton steps on the orthonormal
//! polynomial, with weights from the Christoffel function. Rules are built
//! once per order and shared.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Default order for integrals against γ₂.
pub const DEFAULT_GH_ORDER: usize = 64;

/// Largest supported Gauss-Hermite order (the Christoffel sums overflow beyond this).
pub const MAX_GH_ORDER: usize = 256;

/// Interval cap for [`adaptive_integrate`].
pub const DEFAULT_MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone)]
pub struct GaussHermiteRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermiteRule {
    /// Builds a fresh rule. Prefer [`GaussHermiteRule::cached`].
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_GH_ORDER {
            return Err(Error::InvalidArgument(format!(
                "Gauss-Hermite order {order} not in 1..={MAX_GH_ORDER}"
            )));
        }
        if order == 1 {
            return Ok(Self {
                order,
                nodes: vec![0.0],
                weights: vec![1.0],
            });
        }

        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let beta = (k as f64).sqrt();
            jacobi[(k - 1, k)] = beta;
            jacobi[(k, k - 1)] = beta;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));

        let mut weights = Vec::with_capacity(order);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (pn, pn1, _) = orthonormal_hermite(order, *x);
                let deriv = (order as f64).sqrt() * pn1;
                let step = pn / deriv;
                *x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, _, christoffel) = orthonormal_hermite(order, *x);
            weights.push(1.0 / christoffel);
        }

        // Enforce exact symmetry about the origin.
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -x;
            nodes[j] = x;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        Ok(Self { order, nodes, weights })
    }

    /// Shared rule of the given order, built on first use.
    pub fn cached(order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermiteRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("Gauss-Hermite cache poisoned");
        if let Some(rule) = guard.get(&order) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(Self::new(order)?);
        guard.insert(order, Arc::clone(&rule));
        Ok(rule)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterator over `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Returns `(p_n(x), p_{n-1}(x), Σ_{k<n} p_k(x)²)` for the orthonormal
/// probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}

/// `Σ wᵢ f(uᵢ)` over the rule.
pub fn gaussian_integrate<F: Fn(f64) -> f64>(f: F, rule: &GaussHermiteRule) -> Result<f64> {
    let mut acc = 0.0;
    for (u, w) in rule.iter() {
        let v = f(u);
        if !v.is_finite() {
            return Err(Error::NonFinite("gaussian_integrate integrand"));
        }
        acc += w * v;
    }
    Ok(acc)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate on `[lo, hi]` with the embedded 7-point Gauss
/// difference as error estimate.
pub fn kronrod15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` on `[lo, hi]` to
/// absolute tolerance `tol`. Returns `(value, error estimate)`.
pub fn adaptive_integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    adaptive_integrate_capped(f, lo, hi, tol, DEFAULT_MAX_INTERVALS)
}

pub fn adaptive_integrate_capped<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "adaptive_integrate needs lo < hi and tol > 0 (got [{lo}, {hi}], tol {tol})"
        )));
    }
    let (value, err) = kronrod15(&f, lo, hi);
    if !value.is_finite() {
        return Err(Error::NonFinite("adaptive_integrate integrand"));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, err });
    let mut total_err = err;

    while total_err > tol {
        if heap.len() >= max_intervals {
            return Err(Error::NoConvergence {
                intervals: heap.len(),
                err_est: total_err,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.lo + seg.hi);
        let (v1, e1) = kronrod15(&f, seg.lo, mid);
        let (v2, e2) = kronrod15(&f, mid, seg.hi);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::NonFinite("adaptive_integrate integrand"));
        }
        total_err += e1 + e2 - seg.err;
        heap.push(Segment {
            lo: seg.lo,
            hi: mid,
            value: v1,
            err: e1,
        });
        heap.push(Segment {
            lo: mid,
            hi: seg.hi,
            value: v2,
            err: e2,
        });
        // Re-sum occasionally so the running error total does not drift.
        if heap.len() % 64 == 0 {
            total_err = heap.iter().map(|s| s.err).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let err = heap.iter().map(|s| s.err).sum();
    Ok((value, err))
}
