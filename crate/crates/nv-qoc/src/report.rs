//! Result types shared by the optimizers.

use crate::propagate::PulseSet;

/// Why an optimization loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Cost dropped below the configured threshold.
    CostTolerance,
    /// Gradient infinity norm dropped below the configured threshold.
    GradientTolerance,
    /// Iteration cap reached.
    MaxIterations,
    /// Backtracking produced no acceptable step.
    LineSearchStalled,
    /// Evaluation budget used up.
    BudgetExhausted,
    /// Simplex collapsed in position or value spread.
    SimplexConverged,
}

impl StopReason {
    /// Stable lower-snake identifier used in persisted reports.
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::CostTolerance => "cost_tolerance",
            StopReason::GradientTolerance => "gradient_tolerance",
            StopReason::MaxIterations => "max_iterations",
            StopReason::LineSearchStalled => "line_search_stalled",
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::SimplexConverged => "simplex_converged",
        }
    }
}

/// Outcome of a pulse optimization.
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    /// Gradient methods: accepted cost per iteration, starting with the
    /// initial cost. Sampling methods: best cost seen after each objective
    /// evaluation.
    pub cost_trace: Vec<f64>,
    /// Physical (mapped) amplitudes of the best pulse found.
    pub final_pulses: PulseSet,
    pub final_cost: f64,
    pub stop_reason: StopReason,
    /// Accepted iterations (gradient methods) or superiterations (basis
    /// methods).
    pub iterations: usize,
    /// Objective evaluations, including line-search probes.
    pub evaluations: usize,
    /// Seed that determinizes any randomized ingredient; `None` for fully
    /// deterministic runs.
    pub seed: Option<u64>,
}
