//! Entropic optimal transport by Sinkhorn scaling.
//!
//! The stabilized variant iterates on dual potentials `(f, g)` so that the
//! plan `P_ij = exp((f_i + g_j - C_ij) / eps)` is never formed from a kernel
//! that underflows. Each iteration refits `f` to the row marginal and then `g`
//! to the column marginal, so the column constraint holds to rounding after
//! every step and convergence is measured on the rows.

use ndarray::{Array1, Array2, ArrayView2};

use super::{Marginals, OtError, PlanKind, SolverConfig, TransportPlan};

pub fn sinkhorn_balanced(
    costs: ArrayView2<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
) -> Result<TransportPlan, OtError> {
    sinkhorn_balanced_observed(costs, marginals, cfg, |_, _| {})
}

/// Like [`sinkhorn_balanced`], calling `observe(iteration, residual)` after every iteration.
pub fn sinkhorn_balanced_observed<F>(
    costs: ArrayView2<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
    observe: F,
) -> Result<TransportPlan, OtError>
where
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    marginals.check_balanced()?;
    let (m, n) = costs.dim();
    if marginals.mu.len() != m || marginals.nu.len() != n {
        return Err(OtError::ShapeMismatch { rows: m, cols: n, mu: marginals.mu.len(), nu: marginals.nu.len() });
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(OtError::NonFiniteCost);
    }
    if cfg.stabilized {
        Ok(log_domain(costs, marginals, cfg, observe))
    } else {
        scaling(costs, marginals, cfg, observe)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_domain<F: FnMut(usize, f64)>(
    costs: ArrayView2<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
    mut observe: F,
) -> TransportPlan {
    let (m, n) = costs.dim();
    let eps = cfg.epsilon;
    let log_mu = marginals.mu.mapv(f64::ln);
    let log_nu = marginals.nu.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(m);
    let mut g = Array1::<f64>::zeros(n);
    let mut row_sums = Array1::<f64>::zeros(m);

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < cfg.max_iterations {
        iterations += 1;
        for i in 0..m {
            f[i] = if marginals.mu[i] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let row = costs.row(i);
                eps * (log_mu[i] - log_sum_exp((0..n).map(|j| (g[j] - row[j]) / eps)))
            };
        }
        for j in 0..n {
            g[j] = if marginals.nu[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let col = costs.column(j);
                eps * (log_nu[j] - log_sum_exp((0..m).map(|i| (f[i] - col[i]) / eps)))
            };
        }

        row_sums.fill(0.0);
        for i in 0..m {
            if f[i] == f64::NEG_INFINITY {
                continue;
            }
            let row = costs.row(i);
            row_sums[i] = (0..n).map(|j| plan_entry(f[i], g[j], row[j], eps)).sum();
        }
        residual = l1_gap(&row_sums, &marginals.mu);
        observe(iterations, residual);
        if residual <= cfg.tolerance {
            break;
        }
    }

    let mut values = Array2::<f64>::zeros((m, n));
    for ((i, j), p) in values.indexed_iter_mut() {
        *p = plan_entry(f[i], g[j], costs[[i, j]], eps);
    }
    let col_sums = values.sum_axis(ndarray::Axis(0));
    let marginal_residual = residual + l1_gap(&col_sums, &marginals.nu);
    TransportPlan {
        values,
        kind: PlanKind::Balanced,
        epsilon: eps,
        iterations,
        converged: residual <= cfg.tolerance,
        marginal_residual,
    }
}

#[inline]
fn plan_entry(f: f64, g: f64, c: f64, eps: f64) -> f64 {
    if f == f64::NEG_INFINITY || g == f64::NEG_INFINITY {
        0.0
    } else {
        ((f + g - c) / eps).exp()
    }
}

fn l1_gap(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn scaling<F: FnMut(usize, f64)>(
    costs: ArrayView2<f64>,
    marginals: &Marginals,
    cfg: &SolverConfig,
    mut observe: F,
) -> Result<TransportPlan, OtError> {
    let (m, n) = costs.dim();
    let kernel = costs.mapv(|c| (-c / cfg.epsilon).exp());
    let mut u = Array1::<f64>::ones(m);
    let mut v = Array1::<f64>::ones(n);

    let divide = |target: &Array1<f64>, denom: Array1<f64>| -> Result<Array1<f64>, OtError> {
        let mut out = Array1::zeros(target.len());
        for (k, (&t, &d)) in target.iter().zip(&denom).enumerate() {
            if t == 0.0 {
                continue;
            }
            let q = t / d;
            if !q.is_finite() || d == 0.0 {
                return Err(OtError::NumericalUnderflow);
            }
            out[k] = q;
        }
        Ok(out)
    };

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < cfg.max_iterations {
        iterations += 1;
        u = divide(&marginals.mu, kernel.dot(&v))?;
        v = divide(&marginals.nu, kernel.t().dot(&u))?;
        let rows = &u * &kernel.dot(&v);
        residual = l1_gap(&rows, &marginals.mu);
        observe(iterations, residual);
        if residual <= cfg.tolerance {
            break;
        }
    }

    let mut values = kernel;
    for ((i, j), p) in values.indexed_iter_mut() {
        *p *= u[i] * v[j];
    }
    let col_sums = values.sum_axis(ndarray::Axis(0));
    Ok(TransportPlan {
        marginal_residual: residual + l1_gap(&col_sums, &marginals.nu),
        values,
        kind: PlanKind::Balanced,
        epsilon: cfg.epsilon,
        iterations,
        converged: residual <= cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_cell() {
        let plan = sinkhorn_balanced(array![[0.7]].view(), &Marginals::uniform(1, 1), &SolverConfig::default()).unwrap();
        assert!((plan.values[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(plan.converged);
    }

    #[test]
    fn anti_diagonal_cost_concentrates_on_diagonal() {
        let cfg = SolverConfig::default().with_epsilon(0.01);
        let plan = sinkhorn_balanced(array![[0.0, 1.0], [1.0, 0.0]].view(), &Marginals::uniform(2, 2), &cfg).unwrap();
        let expected = array![[0.5, 0.0], [0.0, 0.5]];
        assert!((&plan.values - &expected).abs().iter().all(|&d| d < 1e-3));
    }

    #[test]
    fn marginals_hold_after_convergence() {
        let costs = array![[0.3, 0.9, 0.1], [0.5, 0.2, 0.8]];
        let plan = sinkhorn_balanced(costs.view(), &Marginals::uniform(2, 3), &SolverConfig::default()).unwrap();
        assert!(plan.converged);
        for r in plan.row_sums().iter() {
            assert!((r - 0.5).abs() < 1e-8);
        }
        for c in plan.col_sums().iter() {
            assert!((c - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_marginal_entries_give_empty_rows() {
        let marg = Marginals::new(array![0.0, 1.0], array![0.5, 0.5]);
        let plan = sinkhorn_balanced(array![[0.0, 0.0], [0.2, 0.4]].view(), &marg, &SolverConfig::default()).unwrap();
        assert_eq!(plan.values.row(0).sum(), 0.0);
        assert!((plan.values.row(1).sum() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unstabilized_underflows_for_tiny_epsilon() {
        let cfg = SolverConfig { epsilon: 1e-3, stabilized: false, ..Default::default() };
        let err = sinkhorn_balanced(array![[1.0, 2.0], [2.0, 1.0]].view(), &Marginals::uniform(2, 2), &cfg).unwrap_err();
        assert_eq!(err, OtError::NumericalUnderflow);
        let ok = sinkhorn_balanced(array![[1.0, 2.0], [2.0, 1.0]].view(), &Marginals::uniform(2, 2), &SolverConfig { stabilized: true, ..cfg });
        assert!(ok.is_ok());
    }

    #[test]
    fn stabilized_and_plain_agree_at_moderate_epsilon() {
        let costs = array![[0.3, 0.9, 0.1], [0.5, 0.2, 0.8], [1.0, 0.0, 0.4]];
        let marg = Marginals::uniform(3, 3);
        let cfg = SolverConfig { epsilon: 0.2, ..Default::default() };
        let a = sinkhorn_balanced(costs.view(), &marg, &cfg).unwrap();
        let b = sinkhorn_balanced(costs.view(), &marg, &SolverConfig { stabilized: false, ..cfg }).unwrap();
        assert!((&a.values - &b.values).abs().iter().all(|&d| d < 1e-9));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let cfg = SolverConfig { max_iterations: 1, epsilon: 0.01, ..Default::default() };
        let plan = sinkhorn_balanced(array![[0.3, 0.9], [0.5, 0.2], [0.1, 0.4]].view(), &Marginals::uniform(3, 2), &cfg).unwrap();
        assert!(!plan.converged);
        assert!(plan.warning().is_some());
        assert_eq!(plan.iterations, 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = SolverConfig::default();
        let unbalanced = Marginals::new(array![1.0], array![0.5]);
        assert!(matches!(sinkhorn_balanced(array![[0.0]].view(), &unbalanced, &cfg), Err(OtError::InvalidMarginals(_))));
        assert!(matches!(
            sinkhorn_balanced(array![[0.0, 1.0]].view(), &Marginals::uniform(1, 1), &cfg),
            Err(OtError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            sinkhorn_balanced(array![[0.0]].view(), &Marginals::uniform(1, 1), &cfg.with_epsilon(0.0)),
            Err(OtError::InvalidConfig(_))
        ));
        assert_eq!(
            sinkhorn_balanced(array![[f64::NAN]].view(), &Marginals::uniform(1, 1), &cfg),
            Err(OtError::NonFiniteCost)
        );
    }
}
