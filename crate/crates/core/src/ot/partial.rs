//! Partial optimal transport through a dummy-point reduction.
//!
//! A dummy row and column with zero cost absorb the mass that is not
//! transported; the dummy-to-dummy corner gets a prohibitive cost so that the
//! dummies cannot trade mass with each other instead.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};

use super::{sinkhorn_balanced, Marginals, OtError, PlanKind, SolverConfig, TransportPlan};

/// Plan with row sums `<= mu`, column sums `<= nu` and total mass `mass`.
pub fn solve_partial(
    costs: ArrayView2<f64>,
    marginals: &Marginals,
    mass: f64,
    cfg: &SolverConfig,
) -> Result<TransportPlan, OtError> {
    let (m, n) = costs.dim();
    if marginals.mu.len() != m || marginals.nu.len() != n {
        return Err(OtError::ShapeMismatch { rows: m, cols: n, mu: marginals.mu.len(), nu: marginals.nu.len() });
    }
    let (total_mu, total_nu) = (marginals.mu.sum(), marginals.nu.sum());
    let max = total_mu.min(total_nu);
    if !(mass > 0.0 && mass < max) {
        return Err(OtError::InfeasibleMass { mass, max });
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(OtError::NonFiniteCost);
    }

    let corner = 2.0 * costs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut augmented = Array2::<f64>::zeros((m + 1, n + 1));
    augmented.slice_mut(s![..m, ..n]).assign(&costs);
    augmented[[m, n]] = corner;

    let mu = concatenate![Axis(0), marginals.mu, Array1::from_elem(1, total_nu - mass)];
    let nu = concatenate![Axis(0), marginals.nu, Array1::from_elem(1, total_mu - mass)];
    let plan = sinkhorn_balanced(augmented.view(), &Marginals::new(mu, nu), cfg)?;

    Ok(TransportPlan {
        values: plan.values.slice(s![..m, ..n]).to_owned(),
        kind: PlanKind::Partial,
        ..plan
    })
}
