//! Random generators: directions on the Euclidean sphere, γ_p variates,
//! cone-measure points on the ℓ_p sphere and exponentially tilted γ_p
//! variates.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and a
//! 64-bit stream index, so each replication owns an independent stream and
//! results do not depend on how replications are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::pgauss::{PExponent, PGauss};
use crate::quadrature::kronrod15;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A direction on the unit Euclidean sphere in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub n: usize,
    pub theta: Vec<f64>,
    pub seed: u64,
}

impl Direction {
    /// Direction drawn from stream 0 of `seed`.
    pub fn from_seed(n: usize, seed: u64) -> Result<Self> {
        let mut d = sample_direction(n, &mut stream_rng(seed, 0))?;
        d.seed = seed;
        Ok(d)
    }

    /// `(1, …, 1)/√n`.
    pub fn diagonal(n: usize) -> Result<Self> {
        Self::from_vec(vec![1.0; n])
    }

    /// Normalizes `v` to unit length.
    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if v.is_empty() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("direction needs a nonzero finite vector".into()));
        }
        Ok(Self {
            n: v.len(),
            theta: v.into_iter().map(|x| x / norm).collect(),
            seed: 0,
        })
    }
}

/// Uniform direction: `n` standard normals divided by their norm.
pub fn sample_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Direction> {
    if n == 0 {
        return Err(Error::InvalidArgument("direction dimension must be positive".into()));
    }
    loop {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if z.iter().any(|&x| x != 0.0) {
            return Direction::from_vec(z);
        }
    }
}

/// γ_p sampler: `Y = S·(p·G)^{1/p}` with a uniform sign `S` and
/// `G ~ Gamma(1/p, 1)`.
#[derive(Debug, Clone)]
pub struct PGaussSampler {
    p: f64,
    gamma: Gamma<f64>,
}

impl PGaussSampler {
    pub fn new(p: PExponent) -> Self {
        let pv = p.get();
        Self {
            p: pv,
            gamma: Gamma::new(1.0 / pv, 1.0).expect("shape 1/p is positive and finite"),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = self.gamma.sample(rng);
        let mag = (self.p * g).powf(1.0 / self.p);
        if rng.random::<bool>() {
            mag
        } else {
            -mag
        }
    }
}

pub fn sample_pgauss<R: Rng + ?Sized>(p: PExponent, rng: &mut R) -> f64 {
    PGaussSampler::new(p).sample(rng)
}

/// ℓ_p norm.
pub fn p_norm(v: &[f64], p: f64) -> f64 {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    max * v.iter().map(|x| (x.abs() / max).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Cone-measure point on the unit ℓ_p sphere: i.i.d. γ_p coordinates divided
/// by their ℓ_p norm.
pub fn sample_cone<R: Rng + ?Sized>(n: usize, p: PExponent, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sphere dimension must be positive".into()));
    }
    let sampler = PGaussSampler::new(p);
    loop {
        let y: Vec<f64> = (0..n).map(|_| sampler.sample(rng)).collect();
        let norm = p_norm(&y, p.get());
        if norm > 0.0 {
            return Ok(y.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// Number of knots in a tilted inverse-CDF table.
pub const TILTED_GRID: usize = 2048;
/// The tabulated support ends where the density drops below this fraction
/// of its maximum.
pub const TILTED_CUTOFF: f64 = 1e-18;

/// Law with density `exp(b·y + λ2·|y|^p - Λ_p(b, λ2))·f_p(y)`, i.e.
/// proportional to `exp(b·y - c·|y|^p)` with `c = 1/p - λ2`.
#[derive(Debug, Clone)]
pub struct TiltedSamplerTable {
    p: f64,
    b: f64,
    c: f64,
    lambda2: f64,
    /// `Λ_p(b, λ2)`
    log_norm: f64,
    /// `ln f_p` normalizer
    log_norm_fp: f64,
    kind: TableKind,
}

#[derive(Debug, Clone)]
enum TableKind {
    /// `b = 0`: a rescaled γ_p variate, sampled exactly.
    Scaled { scale: f64, base: PGaussSampler },
    /// Monotone cubic Hermite interpolation of the inverse CDF.
    Inverse {
        cdf: Vec<f64>,
        ys: Vec<f64>,
        slopes: Vec<f64>,
    },
}

impl TiltedSamplerTable {
    pub fn new(pg: &PGauss, b: f64, lambda2: f64) -> Result<Self> {
        let p = pg.p().get();
        let c = 1.0 / p - lambda2;
        if !(c > 0.0) {
            return Err(Error::DomainError {
                t2: lambda2,
                bound: 1.0 / p,
            });
        }
        if !b.is_finite() {
            return Err(Error::NonFinite("tilt coefficient"));
        }
        let log_norm = pg.lambda_value(b, lambda2)?;
        let kind = if b == 0.0 {
            TableKind::Scaled {
                scale: (p * c).powf(-1.0 / p),
                base: PGaussSampler::new(pg.p()),
            }
        } else {
            build_inverse(p, b, c)?
        };
        Ok(Self {
            p,
            b,
            c,
            lambda2,
            log_norm,
            log_norm_fp: pg.log_normalizer(),
            kind,
        })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// `Λ_p(b, λ2)`
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Tilted density at `y`.
    pub fn density(&self, y: f64) -> f64 {
        (self.b * y - self.c * y.abs().powf(self.p) - self.log_norm - self.log_norm_fp).exp()
    }

    /// Tabulated support, if the table is interpolated.
    pub fn support(&self) -> Option<(f64, f64)> {
        match &self.kind {
            TableKind::Scaled { .. } => None,
            TableKind::Inverse { ys, .. } => Some((ys[0], ys[ys.len() - 1])),
        }
    }

    /// Inverse CDF at `u ∈ [0, 1]` (interpolated tables only).
    pub fn quantile(&self, u: f64) -> Option<f64> {
        match &self.kind {
            TableKind::Scaled { .. } => None,
            TableKind::Inverse { cdf, ys, slopes } => Some(hermite_inverse(cdf, ys, slopes, u)),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            TableKind::Scaled { scale, base } => scale * base.sample(rng),
            TableKind::Inverse { cdf, ys, slopes } => hermite_inverse(cdf, ys, slopes, rng.random::<f64>()),
        }
    }
}

pub fn sample_tilted<R: Rng + ?Sized>(table: &TiltedSamplerTable, rng: &mut R) -> f64 {
    table.sample(rng)
}

fn build_inverse(p: f64, b: f64, c: f64) -> Result<TableKind> {
    let phi = |y: f64| b * y - c * y.abs().powf(p);
    let mode = b.signum() * (b.abs() / (c * p)).powf(1.0 / (p - 1.0));
    let phi_max = phi(mode);
    let drop = TILTED_CUTOFF.ln();
    let below = |y: f64| phi(y) - phi_max < drop;
    // Concave exponent: expand outward, then bisect the crossing.
    let locate = |dir: f64| {
        let mut inner = mode;
        let mut step = 1.0f64.min(mode.abs().max(1e-3));
        let mut outer = mode + dir * step;
        while !below(outer) {
            inner = outer;
            step *= 2.0;
            outer = mode + dir * step;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if below(mid) {
                outer = mid;
            } else {
                inner = mid;
            }
        }
        outer
    };
    let lo = locate(-1.0);
    let hi = locate(1.0);
    let weight = |y: f64| (phi(y) - phi_max).exp();

    let h = (hi - lo) / (TILTED_GRID - 1) as f64;
    let mut ys = Vec::with_capacity(TILTED_GRID);
    let mut cum = Vec::with_capacity(TILTED_GRID);
    let mut dens = Vec::with_capacity(TILTED_GRID);
    let mut total = 0.0;
    ys.push(lo);
    cum.push(0.0);
    dens.push(weight(lo));
    for i in 1..TILTED_GRID {
        let a = lo + (i - 1) as f64 * h;
        let bnd = if i == TILTED_GRID - 1 { hi } else { lo + i as f64 * h };
        let (mass, _) = kronrod15(&weight, a, bnd);
        total += mass;
        // Knots that add no mass would make the CDF flat; drop them.
        if total > *cum.last().expect("nonempty") {
            ys.push(bnd);
            cum.push(total);
            dens.push(weight(bnd));
        }
    }
    if !(total > 0.0) || !total.is_finite() || ys.len() < 2 {
        return Err(Error::NonFinite("tilted table mass"));
    }
    let cdf: Vec<f64> = cum.iter().map(|v| v / total).collect();
    // dy/dF = total / weight(y), limited to keep each cell monotone.
    let mut slopes: Vec<f64> = dens.iter().map(|&d| total / d).collect();
    for i in 0..ys.len() - 1 {
        let secant = (ys[i + 1] - ys[i]) / (cdf[i + 1] - cdf[i]);
        let alpha = slopes[i] / secant;
        let beta = slopes[i + 1] / secant;
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let t = 3.0 / r2.sqrt();
            slopes[i] = t * alpha * secant;
            slopes[i + 1] = t * beta * secant;
        }
    }
    Ok(TableKind::Inverse { cdf, ys, slopes })
}

/// Cubic Hermite evaluation of `y(F)` at `u`.
#[inline]
fn hermite_inverse(cdf: &[f64], ys: &[f64], slopes: &[f64], u: f64) -> f64 {
    let last = cdf.len() - 1;
    if u <= 0.0 {
        return ys[0];
    }
    if u >= 1.0 {
        return ys[last];
    }
    // First knot with cdf > u, so cdf[i-1] <= u < cdf[i].
    let i = cdf.partition_point(|&f| f <= u).clamp(1, last);
    let (f0, f1) = (cdf[i - 1], cdf[i]);
    let dx = f1 - f0;
    let t = (u - f0) / dx;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * ys[i - 1] + h10 * dx * slopes[i - 1] + h01 * ys[i] + h11 * dx * slopes[i]
}
