//! Globally convergent Gauss-Newton iteration for the smoothing objectives.
//!
//! Each iteration evaluates the objective, solves the block-tridiagonal
//! quadratic subproblem exactly (`d = −C⁻¹a`), measures the predicted
//! decrease `Δ = aᵀd + ½dᵀCd = −½aᵀC⁻¹a ≤ 0`, and either terminates (when
//! `Δ ≥ −ε`, i.e. the local model cannot improve) or takes an Armijo
//! backtracking step: the largest `t = γ^i` with
//! `K(x + t d) ≤ K(x) + β t Δ`.
//!
//! The predicted decrease doubles as the termination measure because the
//! curvature is positive definite: `Δ = 0` exactly when the gradient
//! vanishes, so `Δ ≥ −ε` is a first-order stationarity test on the scale of
//! a squared gradient norm.

use crate::block_tridiag::BlockVector;
use crate::error::{Error, Result};
use crate::models::{SequenceModel, StateTrajectory};
use crate::objectives::{self, ObjectiveKind};

/// Gauss-Newton iteration parameters.
///
/// `subproblem_tolerance` (the inexactness parameter of the underlying
/// algorithm statement) is retained for interface fidelity but has no effect:
/// the subproblem is always solved exactly, which attains the best possible
/// predicted decrease for any tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// ε ≥ 0: terminate once the predicted decrease satisfies `Δ ≥ −ε`.
    pub tolerance: f64,
    /// β ∈ (0,1): Armijo sufficient-decrease fraction.
    pub sufficient_decrease: f64,
    /// γ ∈ (0,1): backtracking factor for the step size.
    pub backtracking_factor: f64,
    /// η ∈ (0,1): subproblem inexactness parameter (inert; see above).
    pub subproblem_tolerance: f64,
    /// Iteration budget.
    pub max_iterations: usize,
    /// Largest backtracking exponent `i` tried in the line search.
    pub max_linesearch: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            sufficient_decrease: 1e-4,
            backtracking_factor: 0.5,
            subproblem_tolerance: 0.5,
            // 0.5^52 is within a factor of two of machine epsilon; a correct
            // gradient always accepts far earlier.
            max_iterations: 200,
            max_linesearch: 52,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    message: format!("must lie strictly inside (0, 1), got {v}"),
                })
            }
        };
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                message: format!("must be nonnegative, got {}", self.tolerance),
            });
        }
        in_unit("sufficient_decrease", self.sufficient_decrease)?;
        in_unit("backtracking_factor", self.backtracking_factor)?;
        in_unit("subproblem_tolerance", self.subproblem_tolerance)?;
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iterations",
                message: "must be positive".to_string(),
            });
        }
        Ok(())
    }
}

/// How a smoothing run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherStatus {
    /// Predicted decrease reached `Δ ≥ −ε`: first-order stationary.
    ConvergedDelta,
    /// Iteration budget exhausted with `Δ` still below `−ε`.
    MaxIterations,
    /// Armijo search found no acceptable step — only reachable through an
    /// inconsistent gradient/curvature pair, so it is surfaced as an error.
    LineSearchFailed,
}

impl std::fmt::Display for SmootherStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ConvergedDelta => "converged",
            Self::MaxIterations => "max_iterations",
            Self::LineSearchFailed => "line_search_failed",
        })
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// `K(x^ν)` before the step.
    pub objective: f64,
    /// `Δ_ν ≤ 0`, the predicted decrease of the local model.
    pub predicted_decrease: f64,
    /// Accepted step length `t_ν` (`0` on the terminating evaluation).
    pub step: f64,
    /// `‖d^ν‖`.
    pub direction_norm: f64,
    /// `‖a^ν‖`.
    pub gradient_norm: f64,
}

/// Result of a smoothing run: the estimate and the evidence that the descent
/// theory held along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherReport {
    pub estimate: StateTrajectory,
    pub status: SmootherStatus,
    /// Number of accepted steps.
    pub iterations: usize,
    /// One record per objective evaluation at an iterate, including the
    /// terminating one (whose `step` is `0`).
    pub trace: Vec<IterationRecord>,
}

/// Runs the Gauss-Newton smoother from `x0`.
///
/// Returns `Ok` with status [`SmootherStatus::ConvergedDelta`] or
/// [`SmootherStatus::MaxIterations`]; a failed line search is a hard error
/// carrying the partial report, never a silent zero step.
pub fn smooth(
    kind: ObjectiveKind,
    model: &SequenceModel,
    x0: StateTrajectory,
    cfg: &SolverConfig,
) -> Result<SmootherReport> {
    cfg.validate()?;
    let mut x = x0;
    let mut trace = Vec::new();
    for iteration in 0..cfg.max_iterations {
        let eval = objectives::evaluate(kind, model, &x)?;
        let neg_gradient =
            BlockVector::zeros(model.state_dim(), model.len()).add_scaled(-1.0, &eval.gradient);
        let direction = eval.curvature.factor()?.solve(&neg_gradient)?;
        let delta = objectives::predicted_decrease(&eval, &direction)?;
        let direction_norm = direction.norm();
        let gradient_norm = eval.gradient.norm();

        if delta >= -cfg.tolerance {
            trace.push(IterationRecord {
                objective: eval.value,
                predicted_decrease: delta,
                step: 0.0,
                direction_norm,
                gradient_norm,
            });
            return Ok(SmootherReport {
                estimate: x,
                status: SmootherStatus::ConvergedDelta,
                iterations: iteration,
                trace,
            });
        }

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..=cfg.max_linesearch {
            let candidate = StateTrajectory {
                states: x.states.add_scaled(step, &direction),
                times: x.times.clone(),
            };
            let value = objectives::objective_value(kind, model, &candidate)?;
            if value <= eval.value + cfg.sufficient_decrease * step * delta {
                accepted = Some((step, candidate));
                break;
            }
            step *= cfg.backtracking_factor;
        }

        match accepted {
            Some((step, next)) => {
                trace.push(IterationRecord {
                    objective: eval.value,
                    predicted_decrease: delta,
                    step,
                    direction_norm,
                    gradient_norm,
                });
                x = next;
            }
            None => {
                trace.push(IterationRecord {
                    objective: eval.value,
                    predicted_decrease: delta,
                    step: 0.0,
                    direction_norm,
                    gradient_norm,
                });
                return Err(Error::LineSearchFailed {
                    iteration,
                    attempts: cfg.max_linesearch + 1,
                    report: Box::new(SmootherReport {
                        estimate: x,
                        status: SmootherStatus::LineSearchFailed,
                        iterations: iteration,
                        trace,
                    }),
                });
            }
        }
    }
    Ok(SmootherReport {
        estimate: x,
        status: SmootherStatus::MaxIterations,
        iterations: cfg.max_iterations,
        trace,
    })
}

/// Checks the testable consequences of the convergence theory on a finished
/// report: every accepted step decreased the objective by at least
/// `β·t_ν·|Δ_ν|`, and a converged run's final predicted decrease is within
/// tolerance.
pub fn objective_trace_check(report: &SmootherReport, cfg: &SolverConfig) -> bool {
    for pair in report.trace.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        if before.step > 0.0 && before.predicted_decrease < 0.0 {
            let bound = before.objective
                + cfg.sufficient_decrease * before.step * before.predicted_decrease;
            if after.objective > bound {
                return false;
            }
        }
    }
    if report.status == SmootherStatus::ConvergedDelta {
        match report.trace.last() {
            Some(last) => last.predicted_decrease.abs() <= cfg.tolerance,
            None => false,
        }
    } else {
        true
    }
}
