//! The mixed log-MGF `Ψ_p(s) = ∫ Λ_p(u·s1, s2) γ₂(du)` and its Legendre
//! transform.
//!
//! The rate function is `I_p(a) = Ψ_p*(a, 1) = sup_s {a·s1 + s2 - Ψ_p(s)}`,
//! attained at the dual point `λ_a` solving `∇Ψ_p(λ_a) = (a, 1)`. The
//! stationarity system is solved by damped Newton iteration along a
//! continuation path in the first target coordinate, starting from the
//! explicit solution `(0, (1 - 1/x2)/p)` at `x1 = 0`.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::pgauss::{LambdaEval, PExponent, PGauss};
use crate::quadrature::{GaussHermiteRule, DEFAULT_GH_ORDER};

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_NEWTON_STEPS: usize = 50;
const CONTINUATION_STEP: f64 = 0.05;
const MIN_CONTINUATION_STEP: f64 = 1e-6;

/// Solution of the Legendre problem at `(a, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub a: f64,
    pub p: PExponent,
    /// `λ_a`
    pub lambda: Vector2<f64>,
    /// `I_p(a) = a·λ1 + λ2 - Ψ_p(λ_a)`
    pub rate: f64,
    /// `H_a = Hess Ψ_p(λ_a)`
    pub hessian: Matrix2<f64>,
    /// `‖∇Ψ_p(λ_a) - (a, 1)‖`
    pub residual: f64,
}

/// Solution of the Legendre problem at a general target `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugatePoint {
    pub x: Vector2<f64>,
    pub lambda: Vector2<f64>,
    /// `Ψ_p*(x)`
    pub value: f64,
    pub hessian: Matrix2<f64>,
    pub residual: f64,
}

/// `Ψ_p` for a fixed exponent and Gauss-Hermite rule.
#[derive(Debug, Clone)]
pub struct DualProblem {
    pg: PGauss,
    rule: Arc<GaussHermiteRule>,
    /// Positive nodes with doubled weights, plus the zero node if present.
    half_nodes: Vec<(f64, f64)>,
}

impl DualProblem {
    pub fn new(p: PExponent, quad_order: usize) -> Result<Self> {
        let rule = GaussHermiteRule::cached(quad_order)?;
        // Λ_p is even in its first argument, so node pairs ±u collapse.
        let half_nodes = rule
            .iter()
            .filter(|&(u, _): &(f64, f64)| u >= 0.0)
            .map(|(u, w)| if u > 0.0 { (u, 2.0 * w) } else { (u, w) })
            .collect();
        Ok(Self {
            pg: PGauss::new(p),
            rule,
            half_nodes,
        })
    }

    pub fn with_default_rule(p: PExponent) -> Result<Self> {
        Self::new(p, DEFAULT_GH_ORDER)
    }

    pub fn p(&self) -> PExponent {
        self.pg.p()
    }

    pub fn pgauss(&self) -> &PGauss {
        &self.pg
    }

    pub fn rule(&self) -> &GaussHermiteRule {
        &self.rule
    }

    /// Value, gradient and Hessian of `Ψ_p` at `s`.
    pub fn psi(&self, s: Vector2<f64>) -> Result<LambdaEval> {
        let mut value = 0.0;
        let mut grad = Vector2::<f64>::zeros();
        let mut hess = Matrix2::<f64>::zeros();
        for &(u, w) in &self.half_nodes {
            let ev = self.pg.lambda(u * s[0], s[1])?;
            value += w * ev.value;
            grad[0] += w * u * ev.grad[0];
            grad[1] += w * ev.grad[1];
            hess[(0, 0)] += w * u * u * ev.hess[(0, 0)];
            hess[(0, 1)] += w * u * ev.hess[(0, 1)];
            hess[(1, 1)] += w * ev.hess[(1, 1)];
        }
        hess[(1, 0)] = hess[(0, 1)];
        if !(value.is_finite() && grad.iter().all(|v| v.is_finite()) && hess.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("psi"));
        }
        Ok(LambdaEval { value, grad, hess })
    }

    /// `Ψ_p(s)` only.
    pub fn psi_value(&self, s: Vector2<f64>) -> Result<f64> {
        let mut value = 0.0;
        for &(u, w) in &self.half_nodes {
            value += w * self.pg.lambda_value(u * s[0], s[1])?;
        }
        Ok(value)
    }

    fn in_domain(&self, s: &Vector2<f64>) -> bool {
        s[1] < 1.0 / self.p().get() && s.iter().all(|v| v.is_finite())
    }

    /// Damped Newton iteration for `∇Ψ_p(s) = x` from `start`. Returns the
    /// root, the evaluation there and the residual, or `None` if the
    /// iteration stalls.
    fn newton(&self, x: Vector2<f64>, start: Vector2<f64>) -> Result<Option<(Vector2<f64>, LambdaEval, f64)>> {
        let tol = RESIDUAL_TOL * x.norm().max(1.0);
        let mut s = start;
        let mut ev = match self.psi(s) {
            Ok(ev) => ev,
            Err(Error::DomainError { .. } | Error::NonFinite(_) | Error::NoConvergence { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut res = (ev.grad - x).norm();
        for _ in 0..MAX_NEWTON_STEPS {
            let Some(hinv) = ev.hess.try_inverse() else {
                return Ok(None);
            };
            let dir = -(hinv * (ev.grad - x));
            // A small residual alone is not enough: on the boundary of the
            // gradient's range the residual decays while λ runs off to
            // infinity, and the Newton step stays comparable to λ.
            if res < tol && dir.norm() <= 1e-6 * (1.0 + s.norm()) {
                return Ok(Some((s, ev, res)));
            }
            // G(s) = x·s - Ψ(s) is concave; dir is an ascent direction.
            let objective = x.dot(&s) - ev.value;
            let slope = (x - ev.grad).dot(&dir);
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial = s + step * dir;
                if self.in_domain(&trial) {
                    match self.psi(trial) {
                        Ok(tev) => {
                            let tres = (tev.grad - x).norm();
                            let tobj = x.dot(&trial) - tev.value;
                            if tres < res || tobj >= objective + 1e-4 * step * slope {
                                s = trial;
                                ev = tev;
                                res = tres;
                                accepted = true;
                                break;
                            }
                        }
                        Err(Error::DomainError { .. } | Error::NonFinite(_) | Error::NoConvergence { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                step *= 0.5;
            }
            // Runaway iterates mean the target is at or beyond the edge of
            // the gradient's range; the caller retries with a shorter step.
            if !accepted || s.norm() > 100.0 * (1.0 + start.norm()) {
                break;
            }
        }
        Ok(None)
    }

    /// `Ψ_p*(x)` for `x2 > 0`, by continuation from `(0, x2)`.
    pub fn conjugate(&self, x: Vector2<f64>) -> Result<ConjugatePoint> {
        if !(x[1] > 0.0) || !x[0].is_finite() || !x[1].is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Legendre target ({}, {}) needs x2 > 0",
                x[0], x[1]
            )));
        }
        if x[0] < 0.0 {
            let mirrored = self.conjugate(Vector2::new(-x[0], x[1]))?;
            return Ok(mirror(mirrored));
        }
        let p = self.p().get();
        let x1 = x[0];
        let mut s = Vector2::new(0.0, (1.0 - 1.0 / x[1]) / p);
        let mut ev = self.psi(s)?;
        let mut sigma = 0.0;
        let mut dsigma = if x1 > 0.0 {
            (CONTINUATION_STEP / x1).min(1.0)
        } else {
            1.0
        };
        while sigma < 1.0 {
            let next = (sigma + dsigma).min(1.0);
            let target = Vector2::new(next * x1, x[1]);
            // Euler predictor along dλ/dσ = H⁻¹ (x1, 0).
            let mut guess = s;
            if let Some(hinv) = ev.hess.try_inverse() {
                let pred = s + hinv * Vector2::new((next - sigma) * x1, 0.0);
                if self.in_domain(&pred) {
                    guess = pred;
                }
            }
            match self.newton(target, guess)? {
                Some((ns, nev, _)) => {
                    s = ns;
                    ev = nev;
                    sigma = next;
                    dsigma = (dsigma * 1.5).min(CONTINUATION_STEP / x1.max(CONTINUATION_STEP));
                }
                None => {
                    dsigma *= 0.5;
                    if dsigma < MIN_CONTINUATION_STEP {
                        return Err(Error::DomainExceeded {
                            target: x1,
                            reached: sigma * x1,
                        });
                    }
                }
            }
        }
        let residual = (ev.grad - x).norm();
        Ok(ConjugatePoint {
            x,
            lambda: s,
            value: x.dot(&s) - ev.value,
            hessian: ev.hess,
            residual,
        })
    }

    /// `Ψ_p*(x)` by plain Newton from a nearby dual point, falling back to
    /// continuation.
    pub fn conjugate_from(&self, x: Vector2<f64>, start: Vector2<f64>) -> Result<ConjugatePoint> {
        if self.in_domain(&start) && x[1] > 0.0 {
            if let Some((s, ev, residual)) = self.newton(x, start)? {
                return Ok(ConjugatePoint {
                    x,
                    lambda: s,
                    value: x.dot(&s) - ev.value,
                    hessian: ev.hess,
                    residual,
                });
            }
        }
        self.conjugate(x)
    }

    /// Dual point and rate at threshold `a`.
    pub fn solve_dual(&self, a: f64) -> Result<DualPoint> {
        if !a.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold a = {a} is not finite")));
        }
        let cp = self.conjugate(Vector2::new(a, 1.0)).map_err(|e| match e {
            Error::DomainExceeded { reached, .. } => Error::DomainExceeded {
                target: a,
                reached: reached.copysign(a),
            },
            other => other,
        })?;
        Ok(DualPoint {
            a,
            p: self.p(),
            lambda: cp.lambda,
            rate: cp.value.max(0.0),
            hessian: cp.hessian,
            residual: cp.residual,
        })
    }

    /// `Ψ_p*(τa, τ^p)` for each `τ`.
    pub fn tau_scan(&self, a: f64, taus: &[f64]) -> Vec<Result<f64>> {
        let p = self.p().get();
        taus.iter()
            .map(|&tau| {
                if !(tau > 0.0) {
                    return Err(Error::InvalidArgument(format!("τ = {tau} must be positive")));
                }
                self.conjugate(Vector2::new(tau * a, tau.powf(p))).map(|cp| cp.value)
            })
            .collect()
    }
}

fn mirror(cp: ConjugatePoint) -> ConjugatePoint {
    let mut hessian = cp.hessian;
    hessian[(0, 1)] = -hessian[(0, 1)];
    hessian[(1, 0)] = -hessian[(1, 0)];
    ConjugatePoint {
        x: Vector2::new(-cp.x[0], cp.x[1]),
        lambda: Vector2::new(-cp.lambda[0], cp.lambda[1]),
        value: cp.value,
        hessian,
        residual: cp.residual,
    }
}

/// `Ψ_p` at `s` with the given rule order.
pub fn psi(s: Vector2<f64>, p: PExponent, quad_order: usize) -> Result<LambdaEval> {
    DualProblem::new(p, quad_order)?.psi(s)
}

/// Dual point at `(a, 1)` with the default rule.
pub fn solve_dual(a: f64, p: PExponent) -> Result<DualPoint> {
    DualProblem::with_default_rule(p)?.solve_dual(a)
}

/// `Ψ_p*(τa, τ^p)` over a grid of `τ`, with the default rule.
pub fn tau_scan(a: f64, p: PExponent, taus: &[f64]) -> Result<Vec<Result<f64>>> {
    Ok(DualProblem::with_default_rule(p)?.tau_scan(a, taus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(p: f64) -> DualProblem {
        DualProblem::with_default_rule(PExponent::new(p).unwrap()).unwrap()
    }

    #[test]
    fn psi_on_second_axis() {
        for p in [1.5, 2.0, 3.0] {
            let dp = problem(p);
            for s2 in [-2.0, -0.3, 0.0, 0.2] {
                let ev = dp.psi(Vector2::new(0.0, s2)).unwrap();
                let exact = -(1.0 - p * s2).ln() / p;
                assert!((ev.value - exact).abs() < 1e-14);
            }
            let ev = dp.psi(Vector2::zeros()).unwrap();
            assert_eq!(ev.grad[0], 0.0);
            assert!((ev.grad[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn psi_gaussian_closed_form() {
        let dp = problem(2.0);
        for &(s1, s2) in &[(0.4, 0.1), (1.5, -0.8), (-0.7, 0.3)] {
            let ev = dp.psi(Vector2::new(s1, s2)).unwrap();
            let w: f64 = 1.0 - 2.0 * s2;
            let exact = -0.5 * w.ln() + s1 * s1 / (2.0 * w);
            assert!((ev.value - exact).abs() < 1e-9 * exact.abs());
            assert!((ev.grad[0] - s1 / w).abs() < 1e-9 * (s1 / w).abs());
        }
    }

    #[test]
    fn psi_rejects_outside_domain() {
        let dp = problem(3.0);
        assert!(matches!(dp.psi(Vector2::new(0.1, 0.5)), Err(Error::DomainError { .. })));
    }

    #[test]
    fn quadrature_order_plateau() {
        let p = PExponent::new(3.0).unwrap();
        let d64 = DualProblem::new(p, 64).unwrap();
        let d128 = DualProblem::new(p, 128).unwrap();
        let pt = d64.solve_dual(0.7).unwrap();
        let v64 = d64.psi_value(pt.lambda).unwrap();
        let v128 = d128.psi_value(pt.lambda).unwrap();
        assert!((v64 - v128).abs() < 1e-10 * v64.abs(), "{v64} vs {v128}");
    }

    #[test]
    fn zero_threshold() {
        for p in [1.5, 2.0, 3.0] {
            let pt = problem(p).solve_dual(0.0).unwrap();
            assert_eq!(pt.rate, 0.0);
            assert!(pt.lambda.norm() < 1e-14);
        }
    }

    #[test]
    fn gaussian_rate_closed_form() {
        let dp = problem(2.0);
        for i in 1..=9 {
            let a = 0.1 * i as f64;
            let pt = dp.solve_dual(a).unwrap();
            let exact = -0.5 * (1.0 - a * a).ln();
            assert!((pt.rate - exact).abs() < 1e-8 * exact, "a={a}");
            let w = 1.0 / (1.0 - a * a);
            assert!((pt.lambda[0] - a * w).abs() < 1e-8 * a * w);
            assert!((pt.lambda[1] + 0.5 * a * a * w).abs() < 1e-8 * a * a * w);
        }
        let pt = dp.solve_dual(0.99).unwrap();
        assert!((pt.rate - 1.958_517_773_625_844).abs() < 1e-7);
    }

    #[test]
    fn gaussian_domain_wall() {
        let err = problem(2.0).solve_dual(1.2).unwrap_err();
        match err {
            Error::DomainExceeded { target, reached } => {
                assert_eq!(target, 1.2);
                assert!(reached < 1.0 && reached > 0.9, "reached {reached}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rate_is_even_and_increasing() {
        for p in [1.5, 3.0] {
            let dp = problem(p);
            let mut last = 0.0;
            for i in 1..=8 {
                let a = 0.1 * i as f64;
                let pos = dp.solve_dual(a).unwrap();
                let neg = dp.solve_dual(-a).unwrap();
                assert!(pos.rate > last);
                assert!((pos.rate - neg.rate).abs() < 1e-12);
                assert!((pos.lambda[0] + neg.lambda[0]).abs() < 1e-12);
                assert!(pos.residual < 1e-8 && pos.lambda[1] < 1.0 / p);
                last = pos.rate;
            }
        }
    }

    #[test]
    fn hessian_is_positive_definite() {
        for p in [1.5, 2.0, 3.0] {
            let pt = problem(p).solve_dual(0.5).unwrap();
            let h = pt.hessian;
            assert!(h[(0, 0)] > 0.0 && h.determinant() > 0.0);
            assert_eq!(h[(0, 1)], h[(1, 0)]);
        }
    }

    #[test]
    fn tau_one_matches_rate() {
        let dp = problem(3.0);
        let pt = dp.solve_dual(0.7).unwrap();
        let scan = dp.tau_scan(0.7, &[1.0]);
        assert!((scan[0].as_ref().unwrap() - pt.rate).abs() < 1e-12);
        assert!(dp.tau_scan(0.7, &[0.0])[0].is_err());
    }
}
