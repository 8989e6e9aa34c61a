//! Damped Newton iteration on the condensed system, with a linear presolve
//! and optional continuation in the exponent.

use log::{debug, info, warn};

use super::sparse::FacePattern;
use super::{newton_step, Discretization, FrozenProblem, HybridVector, Problem};
use crate::error::{Error, Result};
use crate::flux::DEFAULT_REGULARIZATION;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// Boundary data on the boundary faces, zero elsewhere.
    Zero,
    /// Solution of the `p = 2`, `delta = 0` problem with the same data.
    LinearPresolve,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when the Euclidean residual is below `tolerance * ||load||`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: u32,
    pub regularization: f64,
    pub initial_guess: InitialGuess,
    /// Retry with continuation in `p` (steps of 0.25) when the direct
    /// iteration fails and `p <= 1.5`.
    pub continuation: bool,
    pub linear_solver: LinearSolver,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 50,
            max_halvings: 12,
            regularization: DEFAULT_REGULARIZATION,
            initial_guess: InitialGuess::LinearPresolve,
            continuation: true,
            linear_solver: LinearSolver::Cholesky,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    /// Newton iterations on the target problem and on continuation stages;
    /// the linear presolve is not counted.
    pub iterations: usize,
    /// Euclidean residual norms, starting with the initial guess.
    pub residual_norms: Vec<f64>,
    /// Accepted step lengths.
    pub damping: Vec<f64>,
    pub converged: bool,
    /// Intermediate exponents used by continuation, if any.
    pub continuation: Vec<f64>,
    /// The absolute residual threshold.
    pub threshold: f64,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(f64::NAN)
    }
}

/// Solves the discrete problem. On failure the error carries the report.
pub fn newton_solve(
    disc: &Discretization,
    problem: &Problem,
    options: &NewtonOptions,
) -> Result<(HybridVector, NewtonReport)> {
    let frozen = disc.freeze_with(problem, options.regularization)?;
    let pattern = FacePattern::new(disc, &frozen.dirichlet.constrained)?;
    let mut start = frozen.dirichlet.clone();
    if !problem.is_linear() && options.initial_guess == InitialGuess::LinearPresolve {
        let linear = disc.freeze_with(&problem.linear_surrogate(), options.regularization)?;
        let mut report = NewtonReport::default();
        match iterate(disc, &linear, &pattern, start.clone(), options, &mut report) {
            Ok(u) => start = u,
            Err(e) => warn!("linear presolve failed ({e}); starting from the boundary data"),
        }
    }

    let mut report = NewtonReport::default();
    match iterate(disc, &frozen, &pattern, start.clone(), options, &mut report) {
        Ok(u) => {
            report.converged = true;
            return Ok((u, report));
        }
        Err(Error::NewtonDiverged { .. }) if options.continuation && problem.p() <= 1.5 => {
            info!("Newton stalled at p = {}; continuing from p = 2", problem.p());
        }
        Err(e) => return Err(e),
    }

    let mut u = start;
    let mut total = report.iterations;
    let mut exponents = Vec::new();
    let mut q = 2.0 - 0.25;
    while q > problem.p() + 1e-12 {
        exponents.push(q);
        q -= 0.25;
    }
    for &q in &exponents {
        let stage = disc.freeze_with(&problem.with_exponent(q), options.regularization)?;
        let mut r = NewtonReport::default();
        u = iterate(disc, &stage, &pattern, u, options, &mut r)?;
        total += r.iterations;
    }
    let mut report = NewtonReport {
        continuation: exponents,
        ..NewtonReport::default()
    };
    let result = iterate(disc, &frozen, &pattern, u, options, &mut report);
    report.iterations += total;
    match result {
        Ok(u) => {
            report.converged = true;
            Ok((u, report))
        }
        Err(Error::NewtonDiverged { .. }) => Err(Error::NewtonDiverged {
            report: Box::new(report),
        }),
        Err(e) => Err(e),
    }
}

fn iterate(
    disc: &Discretization,
    frozen: &FrozenProblem,
    pattern: &FacePattern,
    mut u: HybridVector,
    options: &NewtonOptions,
    report: &mut NewtonReport,
) -> Result<HybridVector> {
    let dual = frozen.p / (frozen.p - 1.0);
    let mut r = disc.residual(frozen, &u);
    let mut norm = r.free_norm();
    let load = frozen.load.free_norm();
    let scale = if load > 0.0 { load } else { norm };
    report.threshold = options.tolerance * scale;
    report.residual_norms.push(norm);
    let mut failed_searches = 0;
    loop {
        if norm <= report.threshold {
            return Ok(u);
        }
        if report.iterations >= options.max_iterations || failed_searches >= 2 || !norm.is_finite() {
            return Err(Error::NewtonDiverged {
                report: Box::new(report.clone()),
            });
        }
        let delta = newton_step(disc, frozen, pattern, &u, options.linear_solver)?;
        let merit = r.free_lq_norm(dual);
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut last = None;
        for _ in 0..=options.max_halvings {
            let trial = u.add_scaled(alpha, &delta);
            let rt = disc.residual(frozen, &trial);
            let m = rt.free_lq_norm(dual);
            if m.is_finite() && m <= (1.0 - 1e-4 * alpha) * merit {
                accepted = Some((trial, rt));
                break;
            }
            if m.is_finite() {
                last = Some((trial, rt));
            }
            alpha *= 0.5;
        }
        let (next, rn) = match accepted {
            Some(v) => {
                failed_searches = 0;
                v
            }
            None => {
                // no sufficient decrease: take the shortest step and let the
                // stall counter decide
                failed_searches += 1;
                alpha *= 2.0;
                match last {
                    Some(v) => v,
                    None => {
                        return Err(Error::NewtonDiverged {
                            report: Box::new(report.clone()),
                        })
                    }
                }
            }
        };
        u = next;
        r = rn;
        norm = r.free_norm();
        report.iterations += 1;
        report.damping.push(alpha);
        report.residual_norms.push(norm);
        debug!(
            "newton it {:>2}: |r| = {:.3e}, step {:.3e}",
            report.iterations, norm, alpha
        );
    }
}
