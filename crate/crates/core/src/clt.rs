//! Fluctuations of the direction-dependent terms.
//!
//! With `Θ = Z/‖Z‖` for a standard normal vector `Z`, the corrections `R`
//! and `c` are centered sums of the test functions
//!
//! ```text
//! ℓ(x)  = Λ_p(x·λ1, λ2)
//! ℓ1(x) = x·∂1Λ_p(x·λ1, λ2)
//! ℓ2(x) = ∂2Λ_p(x·λ1, λ2)
//! ```
//!
//! evaluated at `√n Θ_j`. Their joint limit is driven by a centered Gaussian
//! vector `(A, D, E, G)` with the covariance `Σ_a` of
//! `(ℓ(Z), Z², ℓ1(Z), ℓ2(Z))`:
//!
//! ```text
//! R  = A - E[ℓ'(Z)Z]·D/2        S  = E[ℓ''(Z)Z²]·D²/8
//! T1 = E - E[ℓ1'(Z)Z]·D/2       T2 = G - E[ℓ2'(Z)Z]·D/2
//! M  = exp(S + Tᵀ H_a⁻¹ T)
//! ```

use nalgebra::{Cholesky, Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dual::{DualPoint, DualProblem};
use crate::error::{Error, Result};
use crate::pgauss::PGauss;

/// `Σ_a` and the constants entering the limit.
#[derive(Debug, Clone, PartialEq)]
pub struct CltCovariance {
    /// Covariance of `(ℓ(Z), Z², ℓ1(Z), ℓ2(Z))`.
    pub sigma: Matrix4<f64>,
    /// `(E[ℓ(Z)], E[Z²], E[ℓ1(Z)], E[ℓ2(Z)])`
    pub means: Vector4<f64>,
    pub limit_consts: LimitConstants,
}

/// `E[ℓ'(Z)Z]`, `E[ℓ''(Z)Z²]`, `E[ℓ1'(Z)Z]`, `E[ℓ2'(Z)Z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConstants {
    pub l_prime_z: f64,
    pub l_second_z2: f64,
    pub l1_prime_z: f64,
    pub l2_prime_z: f64,
}

impl CltCovariance {
    /// Variance of `R = A - E[ℓ'(Z)Z]·D/2`.
    pub fn r_variance(&self) -> f64 {
        let k = self.limit_consts.l_prime_z;
        let s = &self.sigma;
        s[(0, 0)] - k * s[(0, 1)] + 0.25 * k * k * s[(1, 1)]
    }
}

/// Test functions and their first two derivatives at one point.
#[derive(Debug, Clone, Copy)]
struct Functionals {
    l: f64,
    l_d1: f64,
    l_d2: f64,
    l1: f64,
    l1_d1: f64,
    l2: f64,
    l2_d1: f64,
}

fn functionals(pg: &PGauss, lambda: Vector2<f64>, x: f64) -> Result<Functionals> {
    let (a, b) = (lambda[0], lambda[1]);
    let ev = pg.lambda(x * a, b)?;
    Ok(Functionals {
        l: ev.value,
        l_d1: a * ev.grad[0],
        l_d2: a * a * ev.hess[(0, 0)],
        l1: x * ev.grad[0],
        l1_d1: ev.grad[0] + x * a * ev.hess[(0, 0)],
        l2: ev.grad[1],
        l2_d1: a * ev.hess[(0, 1)],
    })
}

/// `Σ_a` and limit constants by Gauss-Hermite quadrature with the
/// problem's rule.
pub fn sigma_a(problem: &DualProblem, dp: &DualPoint) -> Result<CltCovariance> {
    let pg = problem.pgauss();
    let rule = problem.rule();
    let mut vals = Vec::with_capacity(rule.order());
    for &u in rule.nodes() {
        vals.push(functionals(pg, dp.lambda, u)?);
    }
    let f = |i: usize, k: usize| -> f64 {
        let v = &vals[i];
        let u = rule.nodes()[i];
        match k {
            0 => v.l,
            1 => u * u,
            2 => v.l1,
            _ => v.l2,
        }
    };
    let weights = rule.weights();
    let mut means = Vector4::zeros();
    for k in 0..4 {
        means[k] = (0..vals.len()).map(|i| weights[i] * f(i, k)).sum();
    }
    let mut sigma = Matrix4::zeros();
    for j in 0..4 {
        for k in j..4 {
            let c: f64 = (0..vals.len())
                .map(|i| weights[i] * (f(i, j) - means[j]) * (f(i, k) - means[k]))
                .sum();
            sigma[(j, k)] = c;
            sigma[(k, j)] = c;
        }
    }
    let node = |g: &dyn Fn(&Functionals, f64) -> f64| -> f64 {
        vals.iter().zip(rule.iter()).map(|(v, (u, w))| w * g(v, u)).sum()
    };
    let limit_consts = LimitConstants {
        l_prime_z: node(&|v, u| v.l_d1 * u),
        l_second_z2: node(&|v, u| v.l_d2 * u * u),
        l1_prime_z: node(&|v, u| v.l1_d1 * u),
        l2_prime_z: node(&|v, u| v.l2_d1 * u),
    };
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    Ok(CltCovariance {
        sigma,
        means,
        limit_consts,
    })
}

/// One draw of `(r_n, s_n, t_n1, t_n2)` and `M_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctSample {
    pub r: f64,
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub mn: f64,
}

/// One draw of the limit `(R, S, T1, T2)` and `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSample {
    pub r: f64,
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub m: f64,
}

/// Everything needed to simulate the fluctuation terms at one dual point.
#[derive(Debug, Clone)]
pub struct CltModel {
    pg: PGauss,
    lambda: Vector2<f64>,
    hinv: Matrix2<f64>,
    pub cov: CltCovariance,
    /// Lower-triangular factor `L` with `L Lᵀ = Σ_a`.
    root: Matrix4<f64>,
}

impl CltModel {
    pub fn new(problem: &DualProblem, dp: &DualPoint) -> Result<Self> {
        let cov = sigma_a(problem, dp)?;
        let hinv = dp
            .hessian
            .try_inverse()
            .ok_or_else(|| Error::NewtonFailure("singular Hessian at the dual point".into()))?;
        let root = psd_root(&cov.sigma);
        Ok(Self {
            pg: problem.pgauss().clone(),
            lambda: dp.lambda,
            hinv,
            cov,
            root,
        })
    }

    /// `(r_n, s_n, t_n1, t_n2, M_n)` for a given standard normal vector.
    pub fn fluct_from_normals(&self, z: &[f64]) -> Result<FluctSample> {
        let n = z.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "fluctuation terms need n >= 2 (got {n})"
            )));
        }
        let nf = n as f64;
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let factor = nf.sqrt() / norm - 1.0;
        let means = &self.cov.means;
        let (mut r, mut s, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0);
        for &zj in z {
            let delta = factor * zj;
            let f = functionals(&self.pg, self.lambda, zj)?;
            r += f.l - means[0] + f.l_d1 * delta;
            t1 += f.l1 - means[2] + f.l1_d1 * delta;
            t2 += f.l2 - means[3] + f.l2_d1 * delta;
            s += 0.5 * f.l_d2 * delta * delta;
        }
        let scale = nf.sqrt().recip();
        let (r, t1, t2) = (r * scale, t1 * scale, t2 * scale);
        let t = Vector2::new(t1, t2);
        Ok(FluctSample {
            r,
            s,
            t1,
            t2,
            mn: (s + t.dot(&(self.hinv * t))).exp(),
        })
    }

    pub fn fluct_sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<FluctSample> {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        self.fluct_from_normals(&z)
    }

    /// Limit functionals for a given draw `(A, D, E, G)`.
    pub fn limit_from_gaussian(&self, g: Vector4<f64>) -> LimitSample {
        let k = &self.cov.limit_consts;
        let (a, d, e, gg) = (g[0], g[1], g[2], g[3]);
        let r = a - 0.5 * k.l_prime_z * d;
        let s = k.l_second_z2 * d * d / 8.0;
        let t1 = e - 0.5 * k.l1_prime_z * d;
        let t2 = gg - 0.5 * k.l2_prime_z * d;
        let t = Vector2::new(t1, t2);
        LimitSample {
            r,
            s,
            t1,
            t2,
            m: (s + t.dot(&(self.hinv * t))).exp(),
        }
    }

    pub fn limit_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LimitSample {
        let w = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        self.limit_from_gaussian(self.root * w)
    }
}

/// `L` with `L Lᵀ = m` for a symmetric positive semidefinite `m`: Cholesky
/// when it succeeds, otherwise the symmetric square root with negative
/// eigenvalues clipped to zero.
pub fn psd_root(m: &Matrix4<f64>) -> Matrix4<f64> {
    if let Some(ch) = Cholesky::new(*m) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(*m);
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `(r_n, s_n, t_n1, t_n2, M_n)` at `n`.
pub fn fluct_sample<R: Rng + ?Sized>(model: &CltModel, n: usize, rng: &mut R) -> Result<FluctSample> {
    model.fluct_sample(n, rng)
}

/// `(R, S, T1, T2, M)` from the Gaussian limit.
pub fn limit_sampler<R: Rng + ?Sized>(model: &CltModel, rng: &mut R) -> LimitSample {
    model.limit_sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgauss::PExponent;
    use crate::sampling::stream_rng;

    fn setup(p: f64, a: f64) -> (DualProblem, DualPoint) {
        let problem = DualProblem::with_default_rule(PExponent::new(p).unwrap()).unwrap();
        let dp = problem.solve_dual(a).unwrap();
        (problem, dp)
    }

    #[test]
    fn fourth_moment_entry() {
        let (problem, dp) = setup(3.0, 0.7);
        let cov = sigma_a(&problem, &dp).unwrap();
        assert!((cov.sigma[(1, 1)] - 2.0).abs() < 1e-12);
        assert!((cov.means[1] - 1.0).abs() < 1e-13);
        let eig = SymmetricEigen::new(cov.sigma);
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-10));
    }

    #[test]
    fn stein_identity_links_constants_to_sigma() {
        // E[f(Z)(Z² - 1)] = E[f'(Z) Z] for smooth f.
        for (p, a) in [(1.5, 0.3), (3.0, 0.7)] {
            let (problem, dp) = setup(p, a);
            let cov = sigma_a(&problem, &dp).unwrap();
            let k = cov.limit_consts;
            for (col, c) in [(0, k.l_prime_z), (2, k.l1_prime_z), (3, k.l2_prime_z)] {
                assert!(
                    (cov.sigma[(col, 1)] - c).abs() < 1e-6 * c.abs().max(1.0),
                    "p={p} col={col}"
                );
            }
        }
    }

    #[test]
    fn constant_test_function_at_zero_tilt() {
        let (problem, dp) = setup(3.0, 0.0);
        let cov = sigma_a(&problem, &dp).unwrap();
        for k in 0..4 {
            assert!(cov.sigma[(0, k)].abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_closed_form_covariance() {
        let (problem, dp) = setup(2.0, 0.6);
        let cov = sigma_a(&problem, &dp).unwrap();
        let (l1, l2) = (dp.lambda[0], dp.lambda[1]);
        let w = 1.0 - 2.0 * l2;
        // Each test function is affine in x² with these slopes.
        let alpha = [l1 * l1 / (2.0 * w), 1.0, l1 / w, l1 * l1 / (w * w)];
        for j in 0..4 {
            for k in 0..4 {
                let exact = 2.0 * alpha[j] * alpha[k];
                assert!(
                    (cov.sigma[(j, k)] - exact).abs() < 1e-8 * exact.abs().max(1.0),
                    "({j},{k})"
                );
            }
        }
    }

    #[test]
    fn corrections_vanish_on_the_sphere_radius() {
        let (problem, dp) = setup(3.0, 0.7);
        let model = CltModel::new(&problem, &dp).unwrap();
        let z = [1.0, -1.0, 1.0, 1.0];
        let out = model.fluct_from_normals(&z).unwrap();
        let mut plain = 0.0;
        for &zj in &z {
            plain += problem.pgauss().lambda_value(zj * dp.lambda[0], dp.lambda[1]).unwrap() - model.cov.means[0];
        }
        assert!((out.r - plain / 2.0).abs() < 1e-14);
        assert_eq!(out.s, 0.0);
    }

    #[test]
    fn gaussian_second_order_term() {
        let (problem, dp) = setup(2.0, 0.5);
        let model = CltModel::new(&problem, &dp).unwrap();
        let mut rng = stream_rng(3, 0);
        let z: Vec<f64> = (0..50).map(|_| rng.sample(StandardNormal)).collect();
        let out = model.fluct_from_normals(&z).unwrap();
        let w = 1.0 - 2.0 * dp.lambda[1];
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f = (50f64).sqrt() / norm - 1.0;
        let direct: f64 = z.iter().map(|zj| (f * zj).powi(2)).sum::<f64>() * dp.lambda[0].powi(2) / (2.0 * w);
        assert!((out.s - direct).abs() < 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn zero_covariance_gives_deterministic_limit() {
        let (problem, dp) = setup(3.0, 0.7);
        let mut model = CltModel::new(&problem, &dp).unwrap();
        model.cov.sigma = Matrix4::zeros();
        model.root = psd_root(&model.cov.sigma);
        let mut rng = stream_rng(4, 0);
        for _ in 0..10 {
            let l = model.limit_sample(&mut rng);
            assert_eq!(l.s, 0.0);
            assert_eq!(l.m, 1.0);
        }
    }

    #[test]
    fn psd_root_reconstructs() {
        let (problem, dp) = setup(3.0, 0.7);
        let cov = sigma_a(&problem, &dp).unwrap();
        let l = psd_root(&cov.sigma);
        let back = l * l.transpose();
        assert!((back - cov.sigma).norm() < 1e-10 * cov.sigma.norm());
        // Rank-deficient input takes the eigen route.
        let v = Vector4::new(1.0, 2.0, 0.0, -1.0);
        let m = v * v.transpose();
        let l = psd_root(&m);
        assert!((l * l.transpose() - m).norm() < 1e-12);
    }

    #[test]
    fn limit_r_is_centered() {
        let (problem, dp) = setup(3.0, 0.7);
        let model = CltModel::new(&problem, &dp).unwrap();
        let mut rng = stream_rng(5, 0);
        let rs: Vec<f64> = (0..20_000).map(|_| model.limit_sample(&mut rng).r).collect();
        let m = rs.iter().sum::<f64>() / rs.len() as f64;
        let sd = model.cov.r_variance().sqrt();
        assert!(m.abs() < 4.0 * sd / (rs.len() as f64).sqrt());
    }
}
