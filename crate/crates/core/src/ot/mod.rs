//! Transport solvers used by the aligners.

mod assignment;
mod one_side;
pub mod oracle;
mod partial;
mod sinkhorn;

pub use assignment::{assignment_cost, solve_assignment};
pub use one_side::solve_one_side_constrained;
pub use partial::solve_partial;
pub use sinkhorn::{sinkhorn_balanced, sinkhorn_balanced_observed};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OtError {
    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),
    #[error("cost matrix is {rows}x{cols} but marginals have lengths {mu}/{nu}")]
    ShapeMismatch { rows: usize, cols: usize, mu: usize, nu: usize },
    #[error("cost matrix has non-finite entries")]
    NonFiniteCost,
    #[error("transported mass {mass} must lie strictly between 0 and {max}")]
    InfeasibleMass { mass: f64, max: f64 },
    #[error("scaling iterations underflowed; enable log-domain stabilization")]
    NumericalUnderflow,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub mu: Array1<f64>,
    pub nu: Array1<f64>,
}

impl Marginals {
    pub fn new(mu: Array1<f64>, nu: Array1<f64>) -> Self {
        Marginals { mu, nu }
    }

    /// `(1/m, ..., 1/m)` and `(1/n, ..., 1/n)`.
    pub fn uniform(m: usize, n: usize) -> Self {
        Marginals { mu: Array1::from_elem(m, 1.0 / m as f64), nu: Array1::from_elem(n, 1.0 / n as f64) }
    }

    fn check_entries(&self) -> Result<(), OtError> {
        for (name, v) in [("mu", &self.mu), ("nu", &self.nu)] {
            if v.is_empty() {
                return Err(OtError::InvalidMarginals(format!("{name} is empty")));
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(OtError::InvalidMarginals(format!("{name} has negative or non-finite entries")));
            }
            if v.sum() <= 0.0 {
                return Err(OtError::InvalidMarginals(format!("{name} has no mass")));
            }
        }
        Ok(())
    }

    pub(crate) fn check_balanced(&self) -> Result<(), OtError> {
        self.check_entries()?;
        let (a, b) = (self.mu.sum(), self.nu.sum());
        if (a - b).abs() > 1e-9 * a.max(b).max(1.0) {
            return Err(OtError::InvalidMarginals(format!("unbalanced masses {a} vs {b}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    Balanced,
    Partial,
    OneSideConstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub values: Array2<f64>,
    pub kind: PlanKind,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// L1 violation of the enforced marginals when the solver stopped.
    pub marginal_residual: f64,
}

impl TransportPlan {
    pub fn total_mass(&self) -> f64 {
        self.values.sum()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(0))
    }

    /// `sum C * P`.
    pub fn cost(&self, costs: &Array2<f64>) -> f64 {
        (&self.values * costs).sum()
    }

    /// Human-readable warning when the solver hit its iteration cap.
    pub fn warning(&self) -> Option<String> {
        (!self.converged).then(|| {
            format!(
                "{:?} solve did not converge after {} iterations (residual {:.3e})",
                self.kind, self.iterations, self.marginal_residual
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Log-domain updates. The plain scaling form underflows for small epsilon.
    pub stabilized: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { epsilon: 0.05, max_iterations: 2000, tolerance: 1e-8, stabilized: true }
    }
}

impl SolverConfig {
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        SolverConfig { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<(), OtError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(OtError::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(OtError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(OtError::InvalidConfig(format!("tolerance must be non-negative, got {}", self.tolerance)));
        }
        Ok(())
    }
}
