mod common;

use ndarray::{array, Array1, Array2};
use rand::Rng;

use otto_align::geometry::{cost_matrix, equidistant_vector, extend_cost, CostMatrix, Direction};
use otto_align::ot::oracle::{lp_oracle, OracleProblem};
use otto_align::ot::{
    sinkhorn_balanced, sinkhorn_balanced_observed, solve_one_side_constrained, solve_partial, Marginals, SolverConfig,
};

fn range(costs: &Array2<f64>) -> f64 {
    costs.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - costs.fold(f64::INFINITY, |a, &b| a.min(b))
}

#[test]
fn sinkhorn_gap_shrinks_with_epsilon() {
    let mut rng = common::rng(1);
    for _ in 0..40 {
        let src = common::gaussian(&mut rng, 4, 8);
        let tgt = common::gaussian(&mut rng, 4, 8);
        let costs = cost_matrix(src.view(), tgt.view()).values().clone();
        let marg = Marginals::uniform(4, 4);
        let lp = lp_oracle(costs.view(), &OracleProblem::Balanced(marg.clone())).unwrap().objective;
        // An unconverged plan misses its marginals by `marginal_residual`, which
        // can move its cost by at most max(C) = 2 times that.
        let (gaps, slack): (Vec<f64>, Vec<f64>) = [0.1, 0.05, 0.01]
            .iter()
            .map(|&eps| {
                let cfg = SolverConfig::default().with_epsilon(eps);
                let plan = sinkhorn_balanced(costs.view(), &marg, &cfg).unwrap();
                (plan.cost(&costs) - lp, 2.0 * plan.marginal_residual + 1e-9)
            })
            .unzip();
        assert!(gaps.iter().zip(&slack).all(|(g, s)| *g >= -s), "entropic cost below the LP optimum: {gaps:?}");
        assert!(gaps[0] + slack[0] >= gaps[1] && gaps[1] + slack[1] >= gaps[2], "{gaps:?}");
        assert!(gaps[2] <= 0.05 * range(&costs));
    }
}

#[test]
fn balanced_oracle_matches_birkhoff_on_square_uniform() {
    // With uniform square marginals the LP optimum is a permutation scaled by 1/n.
    let mut rng = common::rng(2);
    for n in 1..=4 {
        for _ in 0..10 {
            let costs = common::uniform_costs(&mut rng, n, n, 2.0);
            let lp = lp_oracle(costs.view(), &OracleProblem::Balanced(Marginals::uniform(n, n))).unwrap();
            let (best, _) = common::brute_force_assignment(costs.view());
            assert!((lp.objective - best / n as f64).abs() <= 1e-12);
        }
    }
}

#[test]
fn oracle_lower_bounds_feasible_plans() {
    let mut rng = common::rng(3);
    for _ in 0..30 {
        let (m, n) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let costs = common::uniform_costs(&mut rng, m, n, 2.0);
        let marg = Marginals::uniform(m, n);
        let lp = lp_oracle(costs.view(), &OracleProblem::Balanced(marg.clone())).unwrap();
        assert!((lp.plan.sum() - 1.0).abs() <= 1e-12);
        for _ in 0..5 {
            // Any plan with these marginals, e.g. one that is optimal for unrelated costs.
            let other = common::uniform_costs(&mut rng, m, n, 2.0);
            let plan = sinkhorn_balanced(other.view(), &marg, &SolverConfig::default().with_epsilon(0.5)).unwrap();
            assert!((&plan.values * &costs).sum() >= lp.objective - 1e-9);
        }
    }
}

#[test]
fn partial_and_one_side_approach_their_lps() {
    let mut rng = common::rng(4);
    let cfg = SolverConfig { epsilon: 0.01, max_iterations: 20_000, ..SolverConfig::default() };
    for _ in 0..30 {
        let (m, n) = (rng.gen_range(2..=4), rng.gen_range(2..=4));
        let costs = common::uniform_costs(&mut rng, m, n, 2.0);
        let marg = Marginals::uniform(m, n);
        let mass = rng.gen_range(0.2..0.9);
        let lp = lp_oracle(costs.view(), &OracleProblem::Partial { marginals: marg.clone(), mass }).unwrap();
        let plan = solve_partial(costs.view(), &marg, mass, &cfg).unwrap();
        assert!((plan.total_mass() - mass).abs() <= plan.marginal_residual + 1e-6);
        assert!((plan.cost(&costs) - lp.objective).abs() <= 0.05 * range(&costs));

        let d = rng.gen_range(0.0..2.0);
        let extended = extend_cost(&CostMatrix::from_values(costs.clone()), d, Direction::Reverse);
        let lp = lp_oracle(extended.values.view(), &OracleProblem::OneSide).unwrap();
        let plan = solve_one_side_constrained(&extended, &cfg).unwrap();
        assert!((plan.cost(&extended.values) - lp.objective).abs() <= 0.05 * range(&extended.values));
        assert!((lp.objective - common::one_side_by_assignment(extended.values.view())).abs() <= 1e-9);
    }
}

#[test]
fn forward_one_side_is_transposed_reverse() {
    let mut rng = common::rng(5);
    let costs = CostMatrix::from_values(common::uniform_costs(&mut rng, 3, 5, 2.0));
    let fwd = solve_one_side_constrained(&extend_cost(&costs, 0.7, Direction::Forward), &SolverConfig::default()).unwrap();
    let rev = solve_one_side_constrained(&extend_cost(&costs.transposed(), 0.7, Direction::Reverse), &SolverConfig::default())
        .unwrap();
    assert_eq!(fwd.values, rev.values.t());
}

#[test]
fn single_word_null_competition() {
    let cfg = SolverConfig::default();
    let near = extend_cost(&CostMatrix::from_values(array![[0.0]]), 1.5, Direction::Reverse);
    let plan = solve_one_side_constrained(&near, &cfg).unwrap();
    assert!(plan.values[[1, 0]] < 1e-6);

    let antipodal = extend_cost(&CostMatrix::from_values(array![[2.0]]), 0.1, Direction::Reverse);
    let plan = solve_one_side_constrained(&antipodal, &cfg).unwrap();
    assert!(plan.values[[1, 0]] >= 0.9);
}

#[test]
fn residual_decreases_every_ten_iterations() {
    let mut rng = common::rng(6);
    for _ in 0..20 {
        let (m, n) = (rng.gen_range(2..=12), rng.gen_range(2..=12));
        let costs = cost_matrix(common::gaussian(&mut rng, m, 16).view(), common::gaussian(&mut rng, n, 16).view());
        let cfg = SolverConfig { epsilon: 0.02, tolerance: 1e-14, max_iterations: 3000, ..SolverConfig::default() };
        let mut samples = Vec::new();
        sinkhorn_balanced_observed(costs.view(), &Marginals::uniform(m, n), &cfg, |it, r| {
            if it % 10 == 0 {
                samples.push(r);
            }
        })
        .unwrap();
        for w in samples.windows(2) {
            // Below ~1e-13 the residual is rounding noise.
            assert!(w[1] <= w[0] || w[0] < 1e-13, "{samples:?}");
        }
    }
}

#[test]
fn solvers_are_bit_deterministic() {
    let mut rng = common::rng(7);
    let costs = common::uniform_costs(&mut rng, 9, 7, 2.0);
    let marg = Marginals::uniform(9, 7);
    let cfg = SolverConfig::default();
    let a = sinkhorn_balanced(costs.view(), &marg, &cfg).unwrap();
    let b = sinkhorn_balanced(costs.view(), &marg, &cfg).unwrap();
    assert_eq!(a.values, b.values);
    let p = solve_partial(costs.view(), &marg, 0.4, &cfg).unwrap();
    let q = solve_partial(costs.view(), &marg, 0.4, &cfg).unwrap();
    assert_eq!(p.values, q.values);
}

#[test]
fn equidistant_matches_closed_form_in_16d() {
    let mut rng = common::rng(8);
    for _ in 0..50 {
        let vectors = common::gaussian(&mut rng, 5, 16);
        let eq = equidistant_vector(vectors.view()).unwrap();
        assert!((eq.d_min - common::closed_form_d_min(vectors.view())).abs() <= 1e-10);
        let (best, _) = common::minimality_search(&mut rng, vectors.view(), eq.vector.view(), 2000);
        assert!(best >= eq.d_min - 1e-9);
    }
}

#[test]
fn equidistant_textbook_cases() {
    let eq = equidistant_vector(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
    assert!((eq.d_min - (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() <= 1e-12);
    let basis: Array2<f64> = Array2::eye(3);
    let eq = equidistant_vector(basis.view()).unwrap();
    assert!((eq.d_min - (1.0 - 1.0 / 3f64.sqrt())).abs() <= 1e-12);
    let dir = &eq.vector / eq.vector.dot(&eq.vector).sqrt();
    assert!((&dir - &Array1::from_elem(3, 1.0 / 3f64.sqrt())).iter().all(|d| d.abs() <= 1e-12));
}
