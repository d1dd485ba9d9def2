//! Transport with an exact marginal on one side and capped marginals plus a
//! null word on the other.
//!
//! For the reverse direction the cost matrix is `(m+1) x n`, the last row
//! belonging to the null source word. Target columns must each ship exactly
//! `1/n`; real source rows may receive at most `1/m` and the null row at most
//! `1`. The row inequalities are turned into equalities by a slack column of
//! zero cost whose marginal is the total spare capacity, `(m/m + 1) - 1 = 1`.
//! The forward direction is solved as the reverse problem on the transpose.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::{sinkhorn_balanced, Marginals, OtError, PlanKind, SolverConfig, TransportPlan};
use crate::geometry::{Direction, ExtendedCostMatrix};

pub fn solve_one_side_constrained(
    extended: &ExtendedCostMatrix,
    cfg: &SolverConfig,
) -> Result<TransportPlan, OtError> {
    match extended.direction {
        Direction::Reverse => solve_null_row(extended.values.view(), cfg),
        Direction::Forward => {
            let plan = solve_null_row(extended.values.t(), cfg)?;
            Ok(TransportPlan { values: plan.values.t().to_owned(), ..plan })
        }
    }
}

/// Solves the reverse-direction problem for `costs` whose last row is the null word.
fn solve_null_row(costs: ArrayView2<f64>, cfg: &SolverConfig) -> Result<TransportPlan, OtError> {
    let (rows, n) = costs.dim();
    if rows < 2 || n == 0 {
        return Err(OtError::ShapeMismatch { rows, cols: n, mu: rows, nu: n });
    }
    let m = rows - 1;

    let slack = Array2::<f64>::zeros((rows, 1));
    let augmented = concatenate![Axis(1), costs, slack];
    let mut mu = Array1::from_elem(rows, 1.0 / m as f64);
    mu[m] = 1.0;
    let mut nu = Array1::from_elem(n + 1, 1.0 / n as f64);
    nu[n] = mu.sum() - 1.0;

    let plan = sinkhorn_balanced(augmented.view(), &Marginals::new(mu, nu), cfg)?;
    Ok(TransportPlan {
        values: plan.values.slice(s![.., ..n]).to_owned(),
        kind: PlanKind::OneSideConstrained,
        ..plan
    })
}
