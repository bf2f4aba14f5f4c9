//! The generalized p-th Gaussian law γ_p.
//!
//! γ_p has density `f_p(y) = exp(-|y|^p/p) / (2 p^{1/p} Γ(1+1/p))`. This
//! module provides the density, moments, the moment generating function
//! `M(t) = E[e^{tY}]` with its first two derivatives, and the joint log-MGF
//!
//! ```text
//! Λ_p(t1, t2) = log E[exp(t1·Y + t2·|Y|^p)]
//!             = -(1/p)·log(1 - p·t2) + log M(t1 / (1 - p·t2)^{1/p}),   t2 < 1/p
//! ```
//!
//! with gradient and Hessian.
//!
//! `M` is evaluated from its even-moment power series, whose terms are all
//! nonnegative. Coefficient ratios are tabulated once per exponent and the
//! partial sums are rescaled on the fly, so `log M` stays finite far beyond
//! the range where `M` itself overflows. For large arguments the tilted law
//! concentrates around its mode and the same quantities come from
//! Gauss-Hermite quadrature in the Laplace-scaled variable instead. Adaptive
//! quadrature of the mode-shifted integrand is kept as an independent check.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_integrate, GaussHermiteRule};

/// Exponent `p ∈ (1, ∞)` of the generalized Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Hölder conjugate `p/(p-1)`.
    pub fn conjugate(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }
}

impl TryFrom<f64> for PExponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl std::fmt::Display for PExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Value, gradient and Hessian of a smooth function of two variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEval {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

/// `log M(t)` together with the normalized derivatives `M'(t)/M(t)` and
/// `M''(t)/M(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfLog {
    pub log_m: f64,
    pub d1: f64,
    pub d2: f64,
}

impl MgfLog {
    /// Second derivative of `log M`.
    #[inline]
    pub fn log_d2(&self) -> f64 {
        self.d2 - self.d1 * self.d1
    }
}

/// ln E[Y^k] / k! for even k.
fn log_series_coef(k: usize, p: f64) -> f64 {
    let kf = k as f64;
    kf / p * p.ln() + libm::lgamma((kf + 1.0) / p) - libm::lgamma(1.0 / p) - libm::lgamma(kf + 1.0)
}

/// `|1 + r|^p - 1 - p·r`, accurate for small `r`.
fn bregman_pow(r: f64, p: f64) -> f64 {
    if r.abs() > 0.25 {
        return (1.0 + r).abs().powf(p) - 1.0 - p * r;
    }
    // Binomial series from the quadratic term.
    let mut coef = p * (p - 1.0) / 2.0;
    let mut term = coef * r * r;
    let mut sum = term;
    let mut k = 2.0;
    while term.abs() > 1e-17 * sum.abs() && k < 80.0 {
        coef *= (p - k) / (k + 1.0);
        term = coef * r.powi(k as i32 + 1);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Number of tabulated coefficient ratios per exponent.
const TABLE_LEN: usize = 4096;
/// Value of `(p-1)|t|^{p/(p-1)}` from which the Laplace-scaled quadrature
/// replaces the series. The series then needs about `|t|^{p/(p-1)}/2` terms.
const LAPLACE_THRESHOLD: f64 = 200.0;
const MAX_SERIES_TERMS: usize = 1 << 21;
/// Gauss-Hermite order for the large-argument evaluation.
const LAPLACE_ORDER: usize = 64;
const RESCALE: f64 = 1e250;
const RESCALE_LN: f64 = 575.646_273_248_511_4; // 250·ln 10

#[derive(Debug)]
struct SeriesTable {
    /// E[Y²]/2!
    a2: f64,
    /// ratios[i] = a_{k+2} / a_k with k = 2i + 2, a_k = E[Y^k]/k!.
    ratios: Vec<f64>,
}

impl SeriesTable {
    fn new(p: f64) -> Self {
        let logs: Vec<f64> = (0..=TABLE_LEN).map(|i| log_series_coef(2 * i + 2, p)).collect();
        let ratios = logs.windows(2).map(|w| (w[1] - w[0]).exp()).collect();
        Self {
            a2: logs[0].exp(),
            ratios,
        }
    }

    fn cached(p: f64) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<SeriesTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("series table cache poisoned");
        Arc::clone(guard.entry(p.to_bits()).or_insert_with(|| Arc::new(Self::new(p))))
    }
}

/// Evaluator for γ_p quantities at a fixed exponent. Cheap to clone.
#[derive(Debug, Clone)]
pub struct PGauss {
    p: PExponent,
    /// ln(2 p^{1/p} Γ(1 + 1/p))
    log_norm: f64,
    table: Arc<SeriesTable>,
}

impl PGauss {
    pub fn new(p: PExponent) -> Self {
        let pv = p.get();
        Self {
            p,
            log_norm: (2.0f64).ln() + pv.ln() / pv + libm::lgamma(1.0 + 1.0 / pv),
            table: SeriesTable::cached(pv),
        }
    }

    #[inline]
    pub fn p(&self) -> PExponent {
        self.p
    }

    /// ln of the normalizing constant `2 p^{1/p} Γ(1+1/p)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    #[inline]
    pub fn density(&self, y: f64) -> f64 {
        let p = self.p.get();
        (-y.abs().powf(p) / p - self.log_norm).exp()
    }

    /// `E[Y^m]`: zero for odd `m`, `p^{m/p} Γ((m+1)/p) / Γ(1/p)` for even `m`.
    pub fn moment(&self, m: u32) -> f64 {
        if m % 2 == 1 {
            0.0
        } else {
            self.abs_moment(m as f64)
        }
    }

    /// `E[|Y|^r]` for real `r > -1`.
    pub fn abs_moment(&self, r: f64) -> f64 {
        let p = self.p.get();
        (r / p * p.ln() + libm::lgamma((r + 1.0) / p) - libm::lgamma(1.0 / p)).exp()
    }

    #[inline]
    fn ratio(&self, k: usize) -> f64 {
        let i = (k - 2) / 2;
        match self.table.ratios.get(i) {
            Some(&r) => r,
            None => {
                let p = self.p.get();
                (log_series_coef(k + 2, p) - log_series_coef(k, p)).exp()
            }
        }
    }

    /// Power-series evaluation; `None` when the series is too long to be
    /// worth summing.
    fn mgf_series(&self, t: f64) -> Option<MgfLog> {
        if t == 0.0 {
            return Some(MgfLog {
                log_m: 0.0,
                d1: 0.0,
                d2: 2.0 * self.table.a2,
            });
        }
        let p = self.p.get();
        if (p - 1.0) * t.abs().powf(self.p.conjugate()) >= LAPLACE_THRESHOLD {
            return None;
        }
        // With u = t² and g_k = a_k u^{(k-2)/2}:
        //   M = 1 + u Σ g_k,  M' = t Σ k g_k,  M'' = Σ k(k-1) g_k.
        let u = t * t;
        let mut g = self.table.a2;
        let mut k = 2usize;
        let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
        let mut rescales = 0i32;
        loop {
            let kf = k as f64;
            let c2 = kf * (kf - 1.0);
            s0 += g;
            s1 += kf * g;
            s2 += c2 * g;
            let step = u * self.ratio(k);
            let growth = step * (kf + 2.0) * (kf + 1.0) / c2;
            if growth < 0.5 && c2 * g <= 1e-17 * s2 {
                break;
            }
            g *= step;
            k += 2;
            if g > RESCALE {
                g /= RESCALE;
                s0 /= RESCALE;
                s1 /= RESCALE;
                s2 /= RESCALE;
                rescales += 1;
            }
            if k > MAX_SERIES_TERMS {
                return None;
            }
        }
        let out = if rescales == 0 {
            let m = 1.0 + u * s0;
            MgfLog {
                log_m: (u * s0).ln_1p(),
                d1: t * s1 / m,
                d2: s2 / m,
            }
        } else {
            let m = u * s0;
            MgfLog {
                log_m: m.ln() + rescales as f64 * RESCALE_LN,
                d1: t * s1 / m,
                d2: s2 / m,
            }
        };
        Some(out)
    }

    /// Quadrature evaluation of `log M` and its normalized derivatives,
    /// integrating `y^j exp(ty - |y|^p/p)` after shifting by the exponent's
    /// maximum.
    pub fn mgf_quadrature(&self, t: f64) -> Result<MgfLog> {
        let p = self.p.get();
        let y_mode = t.signum() * t.abs().powf(1.0 / (p - 1.0));
        let m = y_mode.abs().powf(p);
        let phi_max = t * y_mode - m / p;
        // Exponent relative to its maximum, written as a Bregman divergence
        // of |·|^p so that it carries no cancellation near the mode.
        let shifted = |y: f64| {
            if y_mode == 0.0 {
                -y.abs().powf(p) / p
            } else {
                let r = (y - y_mode) / y_mode;
                -m / p * bregman_pow(r, p)
            }
        };
        let cutoff = -50.0;
        let mut lo = y_mode - 1.0;
        let mut step = 1.0;
        while shifted(lo) > cutoff {
            step *= 2.0;
            lo = y_mode - step;
        }
        let mut hi = y_mode + 1.0;
        step = 1.0;
        while shifted(hi) > cutoff {
            step *= 2.0;
            hi = y_mode + step;
        }
        let weight = |y: f64| shifted(y).exp();
        // Laplace width at the mode sets the tolerance scale.
        let curvature = (p - 1.0) * y_mode.abs().powf(p - 2.0);
        let width = if curvature > 0.0 && curvature.is_finite() {
            (1.0 / curvature).sqrt().min(hi - lo)
        } else {
            1.0
        };
        // Moments about the mode avoid cancellation in M''/M - (M'/M)².
        let mut central = [0.0; 3];
        for (j, slot) in central.iter_mut().enumerate() {
            let tol = 1e-12 * width.powi(j as i32 + 1);
            let f = |y: f64| (y - y_mode).powi(j as i32) * weight(y);
            let (left, _) = adaptive_integrate(f, lo, y_mode, tol)?;
            let (right, _) = adaptive_integrate(f, y_mode, hi, tol)?;
            *slot = left + right;
        }
        let c1 = central[1] / central[0];
        let c2 = central[2] / central[0];
        Ok(MgfLog {
            log_m: central[0].ln() + phi_max - self.log_norm,
            d1: y_mode + c1,
            d2: y_mode * y_mode + 2.0 * y_mode * c1 + c2,
        })
    }

    /// Evaluation for large `|t|`, where the tilted law is a narrow bump
    /// around its mode: Gauss-Hermite quadrature in the Laplace-scaled
    /// variable, applied to the smooth ratio of the integrand to its
    /// osculating Gaussian.
    fn mgf_laplace(&self, t: f64) -> Result<MgfLog> {
        let p = self.p.get();
        let y_mode = t.signum() * t.abs().powf(1.0 / (p - 1.0));
        let m = y_mode.abs().powf(p);
        let phi_max = t * y_mode - m / p;
        let sigma = ((p - 1.0) * y_mode.abs().powf(p - 2.0)).sqrt().recip();
        let rule = GaussHermiteRule::cached(LAPLACE_ORDER)?;
        let (mut i0, mut i1, mut i2) = (0.0, 0.0, 0.0);
        for (v, w) in rule.iter() {
            let h = sigma * v;
            let f = (0.5 * v * v - m / p * bregman_pow(h / y_mode, p)).exp();
            i0 += w * f;
            i1 += w * f * h;
            i2 += w * f * h * h;
        }
        let c1 = i1 / i0;
        let c2 = i2 / i0;
        let out = MgfLog {
            log_m: (sigma * i0).ln() + 0.5 * (2.0 * std::f64::consts::PI).ln() + phi_max - self.log_norm,
            d1: y_mode + c1,
            d2: y_mode * y_mode + 2.0 * y_mode * c1 + c2,
        };
        if out.log_m.is_finite() && out.d1.is_finite() && out.d2.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite("log_mgf"))
        }
    }

    /// `log M(t)` with `M'/M` and `M''/M`.
    pub fn log_mgf(&self, t: f64) -> Result<MgfLog> {
        if !t.is_finite() {
            return Err(Error::NonFinite("log_mgf argument"));
        }
        match self.mgf_series(t) {
            Some(m) => Ok(m),
            None => self.mgf_laplace(t),
        }
    }

    /// `d^order/dt^order M(t)` for `order ∈ {0, 1, 2}`.
    pub fn mgf(&self, t: f64, order: u8) -> Result<f64> {
        let m = self.log_mgf(t)?;
        let base = m.log_m.exp();
        let v = match order {
            0 => base,
            1 => base * m.d1,
            2 => base * m.d2,
            _ => return Err(Error::InvalidArgument(format!("mgf derivative order {order} > 2"))),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("mgf value"))
        }
    }

    /// Value, gradient and Hessian of `Λ_p` at `(t1, t2)`, `t2 < 1/p`.
    pub fn lambda(&self, t1: f64, t2: f64) -> Result<LambdaEval> {
        let p = self.p.get();
        let bound = 1.0 / p;
        if !(t2 < bound) {
            return Err(Error::DomainError { t2, bound });
        }
        let w = 1.0 - p * t2;
        let g = w.powf(-1.0 / p);
        let tau = t1 * g;
        let m = self.log_mgf(tau)?;
        let k1 = m.d1;
        let k2 = m.log_d2();

        let value = -w.ln() / p + m.log_m;
        let d1 = k1 * g;
        let d2 = (1.0 + k1 * tau) / w;
        let h11 = k2 * g * g;
        let h12 = g / w * (k2 * tau + k1);
        let h22 = (p + k2 * tau * tau + (1.0 + p) * k1 * tau) / (w * w);
        Ok(LambdaEval {
            value,
            grad: Vector2::new(d1, d2),
            hess: Matrix2::new(h11, h12, h12, h22),
        })
    }

    /// `Λ_p(t1, t2)` only.
    pub fn lambda_value(&self, t1: f64, t2: f64) -> Result<f64> {
        let p = self.p.get();
        let bound = 1.0 / p;
        if !(t2 < bound) {
            return Err(Error::DomainError { t2, bound });
        }
        let w = 1.0 - p * t2;
        let m = self.log_mgf(t1 * w.powf(-1.0 / p))?;
        Ok(-w.ln() / p + m.log_m)
    }
}

/// Density `f_p(y)`.
pub fn density_fp(y: f64, p: PExponent) -> f64 {
    PGauss::new(p).density(y)
}

/// `E[Y^m]` under γ_p.
pub fn moment(m: u32, p: PExponent) -> f64 {
    PGauss::new(p).moment(m)
}

/// `E[|Y|^r]` under γ_p.
pub fn abs_moment(r: f64, p: PExponent) -> f64 {
    PGauss::new(p).abs_moment(r)
}

/// `d^order/dt^order M_{γ_p}(t)`.
pub fn mgf(t: f64, p: PExponent, order: u8) -> Result<f64> {
    PGauss::new(p).mgf(t, order)
}

/// `Λ_p(t1, t2)` with gradient and Hessian.
pub fn lambda_p(t1: f64, t2: f64, p: PExponent) -> Result<LambdaEval> {
    PGauss::new(p).lambda(t1, t2)
}
