//! Random sign sensing designs and the LASSO estimator.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::ScheduleError;
use crate::rng::{Purpose, SeedTree};
use crate::schedule::sparse_design_size;
use crate::vector::{dot, norm1, norm2};

/// `m × d` matrix with entries `±1/√d`, shared by every party through a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingDesign {
    rows: Vec<Vec<f64>>,
    d: usize,
    seed: u64,
}

impl SensingDesign {
    /// Draws `m` rows i.i.d. uniform over `{±1/√d}^d`.
    pub fn sample(d: usize, m: usize, seed: u64) -> Self {
        assert!(d >= 1 && m >= 1, "design needs at least one row and column");
        let mut rng = SeedTree::new(seed).stream(Purpose::Design, 0);
        let scale = 1.0 / (d as f64).sqrt();
        let rows = (0..m)
            .map(|_| (0..d).map(|_| if rng.random::<bool>() { scale } else { -scale }).collect())
            .collect();
        Self { rows, d, seed }
    }

    /// Square identity design, the sensing analogue of the standard basis.
    pub fn identity(d: usize) -> Self {
        let rows = (0..d)
            .map(|i| {
                let mut r = vec![0.0; d];
                r[i] = 1.0;
                r
            })
            .collect();
        Self { rows, d, seed: 0 }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `Xθ`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(r, theta)).collect()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Design of the formula size (capped at `d`) for sparsity `s`.
pub fn build_design(d: usize, s: usize, delta: f64, constant: f64, seed: u64) -> Result<SensingDesign, ScheduleError> {
    let size = sparse_design_size(d, s, delta, constant)?;
    Ok(SensingDesign::sample(d, size.m, seed))
}

/// Fraction of random `s`-sparse unit vectors `θ` with
/// `¾ ≤ √(d/m)‖Xθ‖ ≤ 5/4`.
pub fn re_condition_check<R: Rng + ?Sized>(design: &SensingDesign, s: usize, trials: usize, rng: &mut R) -> f64 {
    assert!(trials >= 1 && s >= 1 && s <= design.d());
    let scale = (design.d() as f64 / design.m() as f64).sqrt();
    let mut pass = 0;
    for _ in 0..trials {
        let mut theta = vec![0.0; design.d()];
        for j in sample(rng, design.d(), s) {
            theta[j] = rng.sample(StandardNormal);
        }
        let n = norm2(&theta);
        if n == 0.0 {
            continue;
        }
        theta.iter_mut().for_each(|x| *x /= n);
        let ratio = scale * norm2(&design.apply(&theta));
        if (0.75..=1.25).contains(&ratio) {
            pass += 1;
        }
    }
    pass as f64 / trials as f64
}

/// `argmin_θ (d/m)‖y − X(θ − offset)‖² + λ‖θ‖₁`.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    pub design: &'a SensingDesign,
    pub y: &'a [f64],
    pub offset: &'a [f64],
    pub lambda: f64,
}

impl LassoProblem<'_> {
    /// Response of the equivalent plain problem `(d/m)‖y′ − Xθ‖² + λ‖θ‖₁`.
    fn shifted_response(&self) -> Vec<f64> {
        self.design.apply(self.offset).iter().zip(self.y).map(|(a, b)| a + b).collect()
    }

    fn scale(&self) -> f64 {
        self.design.d() as f64 / self.design.m() as f64
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = theta.iter().zip(self.offset).map(|(t, o)| t - o).collect();
        let fitted = self.design.apply(&diff);
        let rss: f64 = self.y.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
        self.scale() * rss + self.lambda * norm1(theta)
    }

    /// Gradient of the smooth part, `−2(d/m)Xᵀ(y′ − Xθ)`.
    pub fn smooth_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let y = self.shifted_response();
        let fitted = self.design.apply(theta);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        (0..self.design.d()).map(|j| -2.0 * self.scale() * dot(&self.design.column(j), &resid)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub objective: f64,
    /// False if some sweep increased the objective beyond rounding.
    pub monotone: bool,
}

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

/// Cyclic coordinate descent with soft thresholding, started at `offset`.
///
/// Stops when no coordinate moves more than `tol` in a sweep. Hitting
/// `max_sweeps` returns the last iterate with `converged = false`.
pub fn lasso_solve(problem: &LassoProblem<'_>, tol: f64, max_sweeps: usize) -> LassoSolution {
    lasso_solve_from(problem, problem.offset, tol, max_sweeps)
}

/// Same descent as [`lasso_solve`], warm-started at `start`.
pub fn lasso_solve_from(problem: &LassoProblem<'_>, start: &[f64], tol: f64, max_sweeps: usize) -> LassoSolution {
    assert!(problem.lambda >= 0.0 && tol > 0.0);
    let design = problem.design;
    let (m, d) = (design.m(), design.d());
    assert_eq!(problem.y.len(), m);
    assert_eq!(problem.offset.len(), d);
    assert_eq!(start.len(), d);
    let a = problem.scale();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| design.column(j)).collect();
    let curvature: Vec<f64> = columns.iter().map(|c| 2.0 * a * dot(c, c)).collect();

    let mut theta = start.to_vec();
    let shifted = problem.shifted_response();
    let fitted = design.apply(&theta);
    let mut resid: Vec<f64> = shifted.iter().zip(&fitted).map(|(y, f)| y - f).collect();

    let objective = |resid: &[f64], theta: &[f64]| a * dot(resid, resid) + problem.lambda * norm1(theta);
    let mut current = objective(&resid, &theta);
    let mut monotone = true;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_step: f64 = 0.0;
        for j in 0..d {
            let col = &columns[j];
            let old = theta[j];
            let rho = 2.0 * a * dot(col, &resid) + curvature[j] * old;
            let new = soft_threshold(rho, problem.lambda) / curvature[j];
            let step = new - old;
            if step != 0.0 {
                for (r, c) in resid.iter_mut().zip(col) {
                    *r -= c * step;
                }
                theta[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        let next = objective(&resid, &theta);
        if next > current + 1e-12 * current.abs().max(1e-300) {
            monotone = false;
        }
        debug_assert!(monotone, "LASSO objective increased: {current} -> {next}");
        current = next;
        if max_step <= tol {
            converged = true;
            break;
        }
    }
    LassoSolution { objective: problem.objective(&theta), theta, sweeps, converged, monotone }
}

/// Smallest λ at which the zero vector is optimal.
pub fn lambda_max(problem: &LassoProblem<'_>) -> f64 {
    let zero = vec![0.0; problem.design.d()];
    problem.smooth_gradient(&zero).iter().fold(0.0, |a, g| a.max(g.abs()))
}

/// Pathwise descent: solves on `steps` geometrically spaced penalties from
/// [`lambda_max`] down to `problem.lambda`, each warm-started at the last.
///
/// Sweep counts and flags are aggregated over the path; `monotone` and
/// `converged` refer to every stage.
pub fn lasso_path(problem: &LassoProblem<'_>, steps: usize, tol: f64, max_sweeps: usize) -> LassoSolution {
    assert!(steps >= 1);
    let top = lambda_max(problem);
    let target = problem.lambda;
    let mut theta = vec![0.0; problem.design.d()];
    let (mut sweeps, mut converged, mut monotone) = (0, true, true);
    for i in 1..=steps {
        let lambda = if i == steps || target <= 0.0 || top <= target {
            target
        } else {
            top * (target / top).powf(i as f64 / steps as f64)
        };
        let stage = LassoProblem { lambda, ..problem.clone() };
        let sol = lasso_solve_from(&stage, &theta, tol, max_sweeps);
        sweeps += sol.sweeps;
        converged &= sol.converged;
        monotone &= sol.monotone;
        theta = sol.theta;
    }
    LassoSolution { objective: problem.objective(&theta), theta, sweeps, converged, monotone }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Largest violation of the subgradient optimality conditions, in gradient
/// units: `max(|g_j| − λ, 0)` on zero coordinates and `|g_j + λ sign θ_j|`
/// elsewhere.
pub fn kkt_violation(problem: &LassoProblem<'_>, theta: &[f64]) -> f64 {
    let g = problem.smooth_gradient(theta);
    let lam = problem.lambda;
    g.iter()
        .zip(theta)
        .map(|(gj, tj)| if *tj == 0.0 { (gj.abs() - lam).max(0.0) } else { (gj + lam * tj.signum()).abs() })
        .fold(0.0, f64::max)
}
