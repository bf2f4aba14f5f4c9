//! Sharp tail constants at a dual point.
//!
//! For the threshold `a` with dual point `λ_a` and Hessian `H_a`, the tail of
//! the projection behaves like
//!
//! ```text
//! P(W > a) ≈ C · exp(-n·I_p(a) + √n·R) / (κ_a · ξ_a · √(2πn))
//! ```
//!
//! where `ξ_a² = ⟨H_a λ_a, λ_a⟩` and `κ_a² = 1 - L2/L1` compares the
//! curvature `L1` of the level set `{Ψ_p* = I_p(a)}` with the curvature
//! `L2` of the event boundary `{x1 = a·x2^{1/p}}`, both at `(a, 1)`. The
//! direction enters only through `R` and `C`, built from the empirical
//! measure `(1/n) Σ δ_{√n θ_j}`.

use nalgebra::{Matrix2, Vector2};

use crate::dual::{DualPoint, DualProblem};
use crate::error::{Error, Result};

/// Which curvature ratio defines `κ_a²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KappaForm {
    /// `1 - L2/L1`, which lies in `(0, 1]` because the event boundary is
    /// flatter than the level set it touches.
    LevelOverBoundary,
    /// `1 - L1/L2`, evaluated in absolute value.
    BoundaryOverLevel,
}

impl KappaForm {
    pub const SHIPPED: KappaForm = KappaForm::LevelOverBoundary;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefactorBundle {
    pub a: f64,
    pub rate: f64,
    pub xi: f64,
    /// `κ_a` from the shipped form.
    pub kappa: f64,
    /// `1 - L2/L1`
    pub kappa_sq: f64,
    /// `1 - L1/L2`
    pub kappa_sq_alt: f64,
    pub l1: f64,
    pub l2: f64,
}

impl PrefactorBundle {
    pub fn kappa_for(&self, form: KappaForm) -> f64 {
        match form {
            KappaForm::LevelOverBoundary => self.kappa_sq.sqrt(),
            KappaForm::BoundaryOverLevel => self.kappa_sq_alt.abs().sqrt(),
        }
    }

    /// `ln[exp(-n·I) / (κ ξ √(2πn))]`
    pub fn log_baseline(&self, n: usize) -> f64 {
        self.log_baseline_with(n, KappaForm::SHIPPED)
    }

    pub fn log_baseline_with(&self, n: usize, form: KappaForm) -> f64 {
        let nf = n as f64;
        -nf * self.rate - self.kappa_for(form).ln() - self.xi.ln() - 0.5 * (2.0 * std::f64::consts::PI * nf).ln()
    }

    pub fn baseline(&self, n: usize) -> f64 {
        self.log_baseline(n).exp()
    }
}

/// Curvature of `{x1 = a·x2^{1/p}}` at `(a, 1)`.
pub fn boundary_curvature(a: f64, p: f64) -> f64 {
    p * (p - 1.0) * a / (a * a + p * p).powf(1.5)
}

/// Curvature at `(a, 1)` of the level set of a function with gradient
/// `grad` and Hessian `hess` there.
pub fn level_set_curvature(grad: Vector2<f64>, hess: Matrix2<f64>) -> f64 {
    let (tx, ty) = (grad[0], grad[1]);
    let num = ty * ty * hess[(0, 0)] - 2.0 * tx * ty * hess[(0, 1)] + tx * tx * hess[(1, 1)];
    num.abs() / (tx * tx + ty * ty).powf(1.5)
}

/// `ξ_a`, `κ_a` and the two curvatures.
pub fn constants(dp: &DualPoint) -> Result<PrefactorBundle> {
    if !(dp.a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail constants need a > 0 (got {})",
            dp.a
        )));
    }
    let lambda = dp.lambda;
    let xi = (lambda.dot(&(dp.hessian * lambda))).sqrt();
    // Ψ_p* has gradient λ_a and Hessian H_a⁻¹ at (a, 1).
    let hinv = dp
        .hessian
        .try_inverse()
        .ok_or_else(|| Error::NewtonFailure("singular Hessian at the dual point".into()))?;
    let l1 = level_set_curvature(lambda, hinv);
    let l2 = boundary_curvature(dp.a, dp.p.get());
    if !(l1 > 0.0) || !l1.is_finite() {
        return Err(Error::DegenerateCurvature(l1));
    }
    let kappa_sq = 1.0 - l2 / l1;
    if !(kappa_sq > 0.0) {
        return Err(Error::DegenerateCurvature(l1));
    }
    Ok(PrefactorBundle {
        a: dp.a,
        rate: dp.rate,
        xi,
        kappa: kappa_sq.sqrt(),
        kappa_sq,
        kappa_sq_alt: 1.0 - l1 / l2,
        l1,
        l2,
    })
}

/// Direction-dependent terms for one realized direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCorrections {
    pub n: usize,
    /// `Ψ^n(λ_a) = (1/n) Σ Λ_p(√n θ_j λ1, λ2)`
    pub psi_n: f64,
    /// `√n (Ψ^n - Ψ_p)(λ_a)`
    pub r: f64,
    /// `√n ∇(Ψ^n - Ψ_p)(λ_a)`
    pub c: Vector2<f64>,
    /// `exp(cᵀ H_a⁻¹ c)`
    pub big_c: f64,
    /// `Hess Ψ^n(λ_a)`
    pub hn: Matrix2<f64>,
}

/// Checks that `theta` has unit Euclidean norm.
pub fn check_unit(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::InvalidArgument(
            "direction must have at least one coordinate".into(),
        ));
    }
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction has norm {norm}, expected 1")));
    }
    Ok(())
}

/// `R`, `c`, `C` and `Hess Ψ^n` at `λ_a` for direction `theta`.
pub fn direction_corrections(problem: &DualProblem, dp: &DualPoint, theta: &[f64]) -> Result<DirectionCorrections> {
    check_unit(theta)?;
    let n = theta.len();
    let nf = n as f64;
    let sqn = nf.sqrt();
    let (l1, l2) = (dp.lambda[0], dp.lambda[1]);
    let pg = problem.pgauss();

    let mut value = 0.0;
    let mut grad = Vector2::<f64>::zeros();
    let mut hess = Matrix2::<f64>::zeros();
    for &t in theta {
        let v = sqn * t;
        let ev = pg.lambda(v * l1, l2)?;
        value += ev.value;
        grad[0] += v * ev.grad[0];
        grad[1] += ev.grad[1];
        hess[(0, 0)] += v * v * ev.hess[(0, 0)];
        hess[(0, 1)] += v * ev.hess[(0, 1)];
        hess[(1, 1)] += ev.hess[(1, 1)];
    }
    hess[(1, 0)] = hess[(0, 1)];
    let psi_n = value / nf;
    let grad_n = grad / nf;
    let hn = hess / nf;

    let psi = problem.psi(dp.lambda)?;
    let r = sqn * (psi_n - psi.value);
    let c = sqn * (grad_n - psi.grad);
    let hinv = dp
        .hessian
        .try_inverse()
        .ok_or_else(|| Error::NewtonFailure("singular Hessian at the dual point".into()))?;
    let big_c = c.dot(&(hinv * c)).exp();
    Ok(DirectionCorrections {
        n,
        psi_n,
        r,
        c,
        big_c,
        hn,
    })
}

/// Tail estimate with its natural logarithm; the linear value may underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SldEstimate {
    pub value: f64,
    pub log_value: f64,
}

/// `C·exp(-n·I + √n·R) / (κ ξ √(2πn))`.
pub fn sld_estimate(bundle: &PrefactorBundle, dc: &DirectionCorrections, n: usize) -> SldEstimate {
    let log_value = dc.big_c.ln() + bundle.log_baseline(n) + (n as f64).sqrt() * dc.r;
    SldEstimate {
        value: log_value.exp(),
        log_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtremeOrdering {
    Greater,
    Equal,
    Less,
}

impl std::fmt::Display for ExtremeOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExtremeOrdering::Greater => "GREATER",
            ExtremeOrdering::Equal => "EQUAL",
            ExtremeOrdering::Less => "LESS",
        })
    }
}

/// `Ψ^n(λ_a)` at the diagonal direction `(1,…,1)/√n` and at a coordinate
/// axis, and how they compare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremizerDiagnostic {
    pub n: usize,
    pub psi_uniform: f64,
    pub psi_basis: f64,
    pub ordering: ExtremeOrdering,
}

/// Differences at or below this are reported as [`ExtremeOrdering::Equal`].
pub const EXTREMIZER_TIE: f64 = 1e-9;

pub fn extremizer_diagnostic(problem: &DualProblem, dp: &DualPoint, n: usize) -> Result<ExtremizerDiagnostic> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "extremizer comparison needs n >= 2 (got {n})"
        )));
    }
    let pg = problem.pgauss();
    let (l1, l2) = (dp.lambda[0], dp.lambda[1]);
    let nf = n as f64;
    // Diagonal: every √n θ_j equals 1.
    let psi_uniform = pg.lambda_value(l1, l2)?;
    let psi_basis = (pg.lambda_value(nf.sqrt() * l1, l2)? + (nf - 1.0) * pg.lambda_value(0.0, l2)?) / nf;
    let diff = psi_uniform - psi_basis;
    let ordering = if diff.abs() <= EXTREMIZER_TIE {
        ExtremeOrdering::Equal
    } else if diff > 0.0 {
        ExtremeOrdering::Greater
    } else {
        ExtremeOrdering::Less
    };
    Ok(ExtremizerDiagnostic {
        n,
        psi_uniform,
        psi_basis,
        ordering,
    })
}
