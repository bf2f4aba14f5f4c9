//! One function per subcommand, each producing a [`Table`].
//!
//! Randomness for the row at dimension `n` is keyed by `row_seed(seed, n)`
//! for sampling noise and `row_seed(theta_seed, n)` for the direction, so a
//! row can be reproduced on its own.

use ldproj_core::clt::CltModel;
use ldproj_core::dual::{DualPoint, DualProblem};
use ldproj_core::estimators::{brute_tail, is_tail, mc_tail, relative_distance, CiKind, TailEstimate};
use ldproj_core::prefactor::{constants, direction_corrections, extremizer_diagnostic, sld_estimate};
use ldproj_core::sampling::{stream_rng, Direction};
use ldproj_core::{Error, PExponent, Result};
use rayon::prelude::*;

use crate::args::{
    CltSimArgs, Command, CompareArgs, Estimator, Figure2Args, NArgs, OracleArgs, ProblemArgs, SampleArgs, SldArgs,
};
use crate::stats::{ks_two_sample, mean_var, median};
use crate::table::{Cell, Row, Table};

/// Table plus the exit status implied by its worst row.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: Table,
    pub exit_code: i32,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidExponent(_)
        | Error::DomainError { .. }
        | Error::DomainExceeded { .. }
        | Error::InvalidArgument(_) => EXIT_DOMAIN,
        Error::NonFinite(_) | Error::NoConvergence { .. } | Error::NewtonFailure(_) | Error::DegenerateCurvature(_) => {
            EXIT_CONVERGENCE
        }
    }
}

pub fn status_label(e: &Error) -> &'static str {
    match e {
        Error::InvalidExponent(_) | Error::InvalidArgument(_) => "invalid_argument",
        Error::DomainError { .. } => "domain_error",
        Error::DomainExceeded { .. } => "domain_exceeded",
        Error::NonFinite(_) => "non_finite",
        Error::NoConvergence { .. } => "no_convergence",
        Error::NewtonFailure(_) => "newton_failure",
        Error::DegenerateCurvature(_) => "degenerate_curvature",
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for the row at dimension `n`.
pub fn row_seed(seed: u64, n: usize) -> u64 {
    splitmix64(seed ^ splitmix64(n as u64))
}

/// The direction used for dimension `n` under `theta_seed`.
pub fn row_direction(n: usize, theta_seed: u64) -> Result<Direction> {
    Direction::from_seed(n, row_seed(theta_seed, n))
}

const LIMIT_SALT: u64 = 0x6C69_6D69_7400_0000;

fn col(name: &str, v: impl Into<Cell>) -> (String, Cell) {
    (name.to_string(), v.into())
}

fn head(p: f64, a: f64, n: Option<usize>, seed: Option<u64>, theta_seed: Option<u64>) -> Row {
    vec![
        col("p", p),
        col("a", a),
        col("n", n),
        col("seed", seed),
        col("theta_seed", theta_seed),
    ]
}

struct Builder {
    table: Table,
    exit_code: i32,
}

impl Builder {
    fn new() -> Self {
        Self {
            table: Table::default(),
            exit_code: EXIT_OK,
        }
    }

    fn add(&mut self, mut row: Row, body: Result<Row>) {
        match body {
            Ok(cells) => {
                row.push(col("status", "ok"));
                row.extend(cells);
            }
            Err(e) => {
                row.push(col("status", status_label(&e)));
                if let Error::DomainExceeded { reached, .. } = e {
                    row.push(col("domain_reached", reached));
                }
                row.push(col("error", e.to_string()));
                if self.exit_code == EXIT_OK {
                    self.exit_code = exit_code(&e);
                }
            }
        }
        self.table.push(row);
    }

    fn finish(self) -> Report {
        Report {
            table: self.table,
            exit_code: self.exit_code,
        }
    }
}

fn problem(args: &ProblemArgs) -> Result<DualProblem> {
    DualProblem::new(PExponent::new(args.p)?, args.quad_order)
}

fn check_dims(dims: &NArgs) -> Result<()> {
    match dims.n.iter().find(|&&n| n == 0) {
        Some(_) => Err(Error::InvalidArgument("dimensions must be positive".into())),
        None => Ok(()),
    }
}

pub fn execute(command: &Command) -> Result<Report> {
    match command {
        Command::Rate(a) => rate(a),
        Command::Sld(a) => sld(a),
        Command::Is(a) => sample(a, Estimator::Is),
        Command::Mc(a) => sample(a, Estimator::Mc),
        Command::Oracle(a) => oracle(a),
        Command::Compare(a) => compare(a),
        Command::CltCov(a) => clt_cov(a),
        Command::CltSim(a) => clt_sim(a),
        Command::Figure2(a) => figure2(a),
        Command::Extremize(a) => extremize(a),
    }
}

pub fn rate(args: &ProblemArgs) -> Result<Report> {
    let problem = problem(args)?;
    let mut b = Builder::new();
    for &a in &args.a {
        let body = (|| {
            let dp = problem.solve_dual(a)?;
            let mut row = vec![
                col("rate", dp.rate),
                col("lambda1", dp.lambda[0]),
                col("lambda2", dp.lambda[1]),
                col("residual", dp.residual),
            ];
            // The curvature constants need a > 0.
            if a > 0.0 {
                let c = constants(&dp)?;
                row.extend([
                    col("xi", c.xi),
                    col("kappa", c.kappa),
                    col("kappa_sq", c.kappa_sq),
                    col("kappa_sq_alt", c.kappa_sq_alt),
                    col("l1", c.l1),
                    col("l2", c.l2),
                ]);
            }
            Ok(row)
        })();
        b.add(head(args.p, a, None, None, None), body);
    }
    Ok(b.finish())
}

fn sld_cells(problem: &DualProblem, dp: &DualPoint, n: usize, theta: &Direction) -> Result<Row> {
    let bundle = constants(dp)?;
    let dc = direction_corrections(problem, dp, &theta.theta)?;
    let est = sld_estimate(&bundle, &dc, n);
    Ok(vec![
        col("rate", dp.rate),
        col("ldp", (-(n as f64) * dp.rate).exp()),
        col("baseline", bundle.baseline(n)),
        col("r", dc.r),
        col("big_c", dc.big_c),
        col("sld", est.value),
        col("log10_sld", est.log_value / std::f64::consts::LN_10),
    ])
}

pub fn sld(args: &SldArgs) -> Result<Report> {
    check_dims(&args.dims)?;
    let pa = &args.dims.problem;
    let problem = problem(pa)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let dp = problem.solve_dual(a);
        for &n in &args.dims.n {
            let body = dp.clone().and_then(|dp| {
                let theta = row_direction(n, args.theta_seed)?;
                sld_cells(&problem, &dp, n, &theta)
            });
            b.add(head(pa.p, a, Some(n), None, Some(args.theta_seed)), body);
        }
    }
    Ok(b.finish())
}

fn estimate_cells(prefix: &str, est: &TailEstimate, hits: usize) -> Row {
    let (llo, lhi) = est.ci(CiKind::LogNormal);
    let name = |s: &str| format!("{prefix}_{s}");
    vec![
        (name("mean"), est.mean.into()),
        (name("log10_mean"), (est.log_mean / std::f64::consts::LN_10).into()),
        (name("std_err"), est.std_err.into()),
        (name("ci_low"), est.ci_low.into()),
        (name("ci_high"), est.ci_high.into()),
        (name("log_ci_low"), llo.into()),
        (name("log_ci_high"), lhi.into()),
        (name("reps"), est.reps.into()),
        (name("dropped"), est.dropped.into()),
        (name("hits"), hits.into()),
        (name("degenerate_ci"), est.degenerate_ci.into()),
    ]
}

fn run_estimator(
    which: Estimator,
    problem: &DualProblem,
    dp: &DualPoint,
    theta: &Direction,
    reps: usize,
    seed: u64,
) -> Result<Row> {
    match which {
        Estimator::Is => {
            let r = is_tail(problem, dp, theta, reps, seed)?;
            Ok(estimate_cells("is", &r.estimate, r.hits.iter().filter(|&&h| h).count()))
        }
        Estimator::Mc => {
            let r = mc_tail(problem.p(), dp.a, theta, reps, seed)?;
            Ok(estimate_cells("mc", &r.estimate, r.hits.iter().filter(|&&h| h).count()))
        }
        Estimator::Oracle => {
            let v = match theta.theta[..] {
                [t1, t2] => Some(brute_tail(problem.p(), dp.a, [t1, t2])?),
                _ => None,
            };
            Ok(vec![col("oracle", v)])
        }
        Estimator::Sld => sld_cells(problem, dp, theta.n, theta),
    }
}

pub fn sample(args: &SampleArgs, which: Estimator) -> Result<Report> {
    check_dims(&args.dims)?;
    let pa = &args.dims.problem;
    let problem = problem(pa)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let dp = problem.solve_dual(a);
        for &n in &args.dims.n {
            let body = dp.clone().and_then(|dp| {
                let theta = row_direction(n, args.theta_seed)?;
                run_estimator(which, &problem, &dp, &theta, args.reps, row_seed(args.seed, n))
            });
            b.add(head(pa.p, a, Some(n), Some(args.seed), Some(args.theta_seed)), body);
        }
    }
    Ok(b.finish())
}

pub fn oracle(args: &OracleArgs) -> Result<Report> {
    let pa = &args.problem;
    let p = PExponent::new(pa.p)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let body = (|| {
            let theta = row_direction(2, args.theta_seed)?;
            let v = brute_tail(p, a, [theta.theta[0], theta.theta[1]])?;
            Ok(vec![
                col("theta1", theta.theta[0]),
                col("theta2", theta.theta[1]),
                col("oracle", v),
            ])
        })();
        b.add(head(pa.p, a, Some(2), None, Some(args.theta_seed)), body);
    }
    Ok(b.finish())
}

pub fn compare(args: &CompareArgs) -> Result<Report> {
    let s = &args.sample;
    check_dims(&s.dims)?;
    let pa = &s.dims.problem;
    let problem = problem(pa)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let dp = problem.solve_dual(a);
        for &n in &s.dims.n {
            let body = dp.clone().and_then(|dp| {
                let theta = row_direction(n, s.theta_seed)?;
                let seed = row_seed(s.seed, n);
                let mut row = vec![col("rate", dp.rate), col("ldp", (-(n as f64) * dp.rate).exp())];
                let mut sld = None;
                let mut is = None;
                for &which in &args.estimators {
                    let cells = run_estimator(which, &problem, &dp, &theta, s.reps, seed)?;
                    for (name, cell) in cells {
                        match name.as_str() {
                            "rate" | "ldp" => continue,
                            "sld" => sld = cell.as_f64(),
                            "is_mean" => is = cell.as_f64(),
                            _ => {}
                        }
                        row.push((name, cell));
                    }
                }
                if let (Some(sld), Some(is)) = (sld, is) {
                    row.push(col("rel_dist_pct", relative_distance(sld, is)));
                }
                Ok(row)
            });
            b.add(head(pa.p, a, Some(n), Some(s.seed), Some(s.theta_seed)), body);
        }
    }
    Ok(b.finish())
}

const COV_LABELS: [&str; 4] = ["l", "z2", "l1", "l2"];

pub fn clt_cov(args: &ProblemArgs) -> Result<Report> {
    let problem = problem(args)?;
    let mut b = Builder::new();
    for &a in &args.a {
        let body = (|| {
            let dp = problem.solve_dual(a)?;
            let model = CltModel::new(&problem, &dp)?;
            let cov = &model.cov;
            let mut row = Row::new();
            for (i, li) in COV_LABELS.iter().enumerate() {
                for (j, lj) in COV_LABELS.iter().enumerate().skip(i) {
                    row.push(col(&format!("cov_{li}_{lj}"), cov.sigma[(i, j)]));
                }
            }
            let k = cov.limit_consts;
            row.extend([
                col("e_lprime_z", k.l_prime_z),
                col("e_lsecond_z2", k.l_second_z2),
                col("e_l1prime_z", k.l1_prime_z),
                col("e_l2prime_z", k.l2_prime_z),
                col("limit_var_r", cov.r_variance()),
            ]);
            Ok(row)
        })();
        b.add(head(args.p, a, None, None, None), body);
    }
    Ok(b.finish())
}

/// Raw draws behind one `clt-sim` row.
#[derive(Debug, Clone)]
pub struct CltDraws {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub mn: Vec<f64>,
    pub limit_r: Vec<f64>,
    pub limit_m: Vec<f64>,
    pub limit_var_r: f64,
}

/// Draw `reps` finite-`n` samples and `limit_draws` limit samples.
pub fn clt_draws(model: &CltModel, n: usize, reps: usize, limit_draws: usize, seed: u64) -> Result<CltDraws> {
    let fl = (0..reps as u64)
        .into_par_iter()
        .map(|r| model.fluct_sample(n, &mut stream_rng(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let lim: Vec<_> = (0..limit_draws as u64)
        .into_par_iter()
        .map(|r| model.limit_sample(&mut stream_rng(seed ^ LIMIT_SALT, r)))
        .collect();
    Ok(CltDraws {
        r: fl.iter().map(|f| f.r).collect(),
        s: fl.iter().map(|f| f.s).collect(),
        t1: fl.iter().map(|f| f.t1).collect(),
        t2: fl.iter().map(|f| f.t2).collect(),
        mn: fl.iter().map(|f| f.mn).collect(),
        limit_r: lim.iter().map(|l| l.r).collect(),
        limit_m: lim.iter().map(|l| l.m).collect(),
        limit_var_r: model.cov.r_variance(),
    })
}

pub fn clt_sim(args: &CltSimArgs) -> Result<Report> {
    check_dims(&args.dims)?;
    if args.reps < 2 {
        return Err(Error::InvalidArgument("clt-sim needs reps >= 2".into()));
    }
    let pa = &args.dims.problem;
    let problem = problem(pa)?;
    let limit_draws = args.limit_draws.unwrap_or(10 * args.reps);
    let mut b = Builder::new();
    for &a in &pa.a {
        let model = problem.solve_dual(a).and_then(|dp| CltModel::new(&problem, &dp));
        for &n in &args.dims.n {
            let body = model.clone().and_then(|model| {
                let d = clt_draws(&model, n, args.reps, limit_draws, row_seed(args.seed, n))?;
                let (mean_r, var_r) = mean_var(&d.r);
                let (_, limit_var_emp) = mean_var(&d.limit_r);
                Ok(vec![
                    col("draws", args.reps),
                    col("limit_draws", limit_draws),
                    col("mean_r", mean_r),
                    col("var_r", var_r),
                    col("limit_var_r", d.limit_var_r),
                    col("limit_var_r_empirical", limit_var_emp),
                    col("mean_s", mean_var(&d.s).0),
                    col("mean_t1", mean_var(&d.t1).0),
                    col("mean_t2", mean_var(&d.t2).0),
                    col("median_mn", median(&d.mn)),
                    col("median_m", median(&d.limit_m)),
                    col("ks_mn_m", ks_two_sample(&d.mn, &d.limit_m)),
                ])
            });
            b.add(head(pa.p, a, Some(n), Some(args.seed), None), body);
        }
    }
    Ok(b.finish())
}

pub fn figure2(args: &Figure2Args) -> Result<Report> {
    check_dims(&args.dims)?;
    let pa = &args.dims.problem;
    let problem = problem(pa)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let dp = problem.solve_dual(a);
        for &n in &args.dims.n {
            let body = dp.clone().and_then(|dp| {
                let bundle = constants(&dp)?;
                let mut row = vec![col("baseline", bundle.baseline(n))];
                for k in 0..args.directions {
                    let theta = row_direction(n, args.theta_seed.wrapping_add(k as u64))?;
                    let dc = direction_corrections(&problem, &dp, &theta.theta)?;
                    row.push(col(&format!("sld_{k}"), sld_estimate(&bundle, &dc, n).value));
                }
                Ok(row)
            });
            b.add(head(pa.p, a, Some(n), None, Some(args.theta_seed)), body);
        }
    }
    Ok(b.finish())
}

pub fn extremize(args: &NArgs) -> Result<Report> {
    check_dims(args)?;
    let pa = &args.problem;
    let problem = problem(pa)?;
    let mut b = Builder::new();
    for &a in &pa.a {
        let dp = problem.solve_dual(a);
        for &n in &args.n {
            let body = dp.clone().and_then(|dp| {
                let d = extremizer_diagnostic(&problem, &dp, n)?;
                Ok(vec![
                    col("psi_uniform", d.psi_uniform),
                    col("psi_basis", d.psi_basis),
                    col("difference", d.psi_uniform - d.psi_basis),
                    col("ordering", d.ordering.to_string()),
                ])
            });
            b.add(head(pa.p, a, Some(n), None, None), body);
        }
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_seeds_differ_across_dimensions() {
        assert_ne!(row_seed(1, 20), row_seed(1, 80));
        assert_ne!(row_seed(1, 20), row_seed(2, 20));
        assert_eq!(row_seed(7, 3), row_seed(7, 3));
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(
            exit_code(&Error::DomainExceeded {
                target: 1.2,
                reached: 1.0
            }),
            EXIT_DOMAIN
        );
        assert_eq!(exit_code(&Error::NewtonFailure("x".into())), EXIT_CONVERGENCE);
        assert_eq!(exit_code(&Error::InvalidExponent(0.5)), EXIT_DOMAIN);
    }
}
