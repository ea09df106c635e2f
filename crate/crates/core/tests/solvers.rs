//! Penalized solvers checked against the dual reference solver.

mod common;

use ccar3::admm::{rho_max, solve_graph_tv, solve_group_l21, solve_sparse_l21, Blocks, PenaltyShape, RowPenaltyProblem};
use ccar3::{AdmmConfig, GraphStructure, Mat, Partition};
use common::oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ORACLE_ITERS: usize = 100_000;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn tight() -> AdmmConfig {
    AdmmConfig {
        eps: 1e-10,
        max_iter: 500_000,
        ..AdmmConfig::default()
    }
}

fn rel_gap(ours: f64, reference: f64) -> f64 {
    (ours - reference).abs() / reference.abs().max(1e-12)
}

/// Row-sparse problem with half of the true rows switched off.
fn sparse_problem(n: usize, p: usize, q: usize, seed: u64) -> (Mat, Mat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(n, p, &mut rng);
    let mut b = gaussian(p, q, &mut rng);
    for i in (0..p).step_by(2) {
        b.row_mut(i).fill(0.0);
    }
    let y0 = &x * &b + gaussian(n, q, &mut rng);
    (x, y0)
}

/// Largest zero-row gradient norm and largest active-row stationarity residual.
fn sparse_kkt(x: &Mat, y0: &Mat, coef: &Mat, rho: f64) -> (f64, f64) {
    let grad = x.transpose() * (x * coef - y0) * (2.0 / x.nrows() as f64);
    let (mut inactive, mut active) = (0.0f64, 0.0f64);
    for j in 0..coef.nrows() {
        let row = coef.row(j);
        let norm = row.norm();
        if norm == 0.0 {
            inactive = inactive.max(grad.row(j).norm());
        } else {
            active = active.max((grad.row(j) + row * (rho / norm)).norm());
        }
    }
    (inactive, active)
}

#[test]
fn sparse_objective_matches_oracle() {
    for seed in 0..5 {
        let (x, y0) = sparse_problem(40, 6, 2, seed);
        let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
        let rho = 0.3 * prob.rho_max(Blocks::Rows);
        let sol = solve_sparse_l21(&x, &y0, &tight().with_rho(rho), None).unwrap();
        assert!(sol.trace.converged);
        let d = Mat::identity(6, 6);
        let blocks = oracle::row_blocks(6);
        let reference = oracle::solve(&x, &y0, &d, &blocks, rho, ORACLE_ITERS);
        let ours = oracle::objective(&x, &y0, &d, &blocks, rho, &sol.coef);
        assert!(rel_gap(ours, reference.primal) <= 1e-4, "seed {seed}: {ours} vs {}", reference.primal);
        assert!(ours >= reference.dual - 1e-10);
    }
}

#[test]
fn group_objective_matches_oracle() {
    for seed in 0..5 {
        let (x, y0) = sparse_problem(40, 9, 3, 100 + seed);
        let part = Partition::new(9, vec![vec![0, 1], vec![2, 3, 4], vec![5], vec![6, 7, 8]]).unwrap();
        let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
        let rho = 0.4 * prob.rho_max(Blocks::Groups(&part));
        let sol = solve_group_l21(&x, &y0, &part, &tight().with_rho(rho), None).unwrap();
        let d = Mat::identity(9, 9);
        let blocks = oracle::group_blocks(part.groups());
        let reference = oracle::solve(&x, &y0, &d, &blocks, rho, ORACLE_ITERS);
        let ours = oracle::objective(&x, &y0, &d, &blocks, rho, &sol.coef);
        assert!(rel_gap(ours, reference.primal) <= 1e-4, "seed {seed}");
    }
}

#[test]
fn single_edge_graph_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = gaussian(50, 2, &mut rng);
    let y0 = &x * Mat::from_row_slice(2, 1, &[1.0, 0.8]) + gaussian(50, 1, &mut rng);
    let g = GraphStructure::new(2, &[(0, 1)]).unwrap();
    for rho in [0.01, 0.1, 0.5] {
        let sol = solve_graph_tv(&x, &y0, &g, &tight().with_rho(rho), None).unwrap();
        let blocks = oracle::row_blocks(1);
        let reference = oracle::solve(&x, &y0, g.incidence(), &blocks, rho, ORACLE_ITERS);
        let ours = oracle::objective(&x, &y0, g.incidence(), &blocks, rho, &sol.coef);
        assert!(rel_gap(ours, reference.primal) <= 1e-4, "rho {rho}");
    }
}

#[test]
fn cyclic_graph_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 2), (5, 6)];
    let g = GraphStructure::new(7, &edges).unwrap();
    let x = gaussian(80, 7, &mut rng);
    let y0 = gaussian(80, 2, &mut rng) + &x * gaussian(7, 2, &mut rng);
    let rho = 0.2;
    let sol = solve_graph_tv(&x, &y0, &g, &tight().with_rho(rho), None).unwrap();
    let blocks = oracle::row_blocks(g.n_edges());
    let reference = oracle::solve(&x, &y0, g.incidence(), &blocks, rho, ORACLE_ITERS);
    let ours = oracle::objective(&x, &y0, g.incidence(), &blocks, rho, &sol.coef);
    assert!(rel_gap(ours, reference.primal) <= 1e-4);
}

#[test]
fn sparse_kkt_holds_with_full_penalty_bound() {
    let eps = 1e-6;
    for seed in 0..5 {
        let (x, y0) = sparse_problem(60, 10, 3, 200 + seed);
        let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
        let rho = 0.3 * prob.rho_max(Blocks::Rows);
        let sol = solve_sparse_l21(&x, &y0, &tight().with_rho(rho), None).unwrap();
        let (inactive, active) = sparse_kkt(&x, &y0, &sol.coef, rho);
        assert!(active <= 10.0 * eps, "seed {seed}: active residual {active}");
        assert!(inactive <= rho + 10.0 * eps, "seed {seed}: inactive gradient {inactive}");
    }
}

/// The subdifferential of `rho ||b||` at zero is the ball of radius `rho`,
/// so zero rows may carry gradients up to `rho`, not `rho / 2`.
#[test]
#[ignore = "zero-row bound rho/2 is stricter than the optimality conditions allow; see the decisions ledger"]
fn sparse_kkt_holds_with_half_penalty_bound() {
    let eps = 1e-6;
    for seed in 0..5 {
        let (x, y0) = sparse_problem(60, 10, 3, 200 + seed);
        let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
        let rho = 0.3 * prob.rho_max(Blocks::Rows);
        let sol = solve_sparse_l21(&x, &y0, &tight().with_rho(rho), None).unwrap();
        let (inactive, _) = sparse_kkt(&x, &y0, &sol.coef, rho);
        assert!(inactive <= rho / 2.0 + 10.0 * eps, "seed {seed}: inactive gradient {inactive}");
    }
}

#[test]
fn objective_is_monotone_after_burn_in() {
    for seed in 0..5 {
        let (x, y0) = sparse_problem(100, 8, 2, 300 + seed);
        let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
        let cfg = AdmmConfig {
            track_objective: true,
            ..tight().with_rho(0.2 * prob.rho_max(Blocks::Rows))
        };
        let sol = solve_sparse_l21(&x, &y0, &cfg, None).unwrap();
        let hist = &sol.trace.objective_history;
        assert!(hist.len() > 6);
        for w in hist[5..].windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn rho_max_zeroes_orthonormal_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 50;
    let q_mat = gaussian(n, 6, &mut rng).qr().q() * (n as f64).sqrt();
    let y0 = gaussian(n, 3, &mut rng);
    let top = rho_max(&q_mat, &y0, PenaltyShape::Sparse).unwrap();
    let sol = solve_sparse_l21(&q_mat, &y0, &tight().with_rho(top), None).unwrap();
    assert_eq!(sol.coef.amax(), 0.0);
    let part = Partition::singletons(6);
    assert_eq!(rho_max(&q_mat, &y0, PenaltyShape::Group(&part)).unwrap(), top);
}

#[test]
fn warm_start_reaches_the_same_solution() {
    let (x, y0) = sparse_problem(60, 12, 2, 9);
    let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
    let top = prob.rho_max(Blocks::Rows);
    let cold = prob.solve(Blocks::Rows, &tight().with_rho(0.2 * top), None).unwrap();
    let first = prob.solve(Blocks::Rows, &tight().with_rho(0.5 * top), None).unwrap();
    let warm = prob
        .solve(Blocks::Rows, &tight().with_rho(0.2 * top), Some(&first.state))
        .unwrap();
    assert!((cold.coef - warm.coef).amax() <= 1e-7);
}

#[test]
fn wide_design_uses_the_same_objective() {
    // p > n takes the Woodbury path; check optimality directly.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = gaussian(20, 40, &mut rng);
    let y0 = gaussian(20, 2, &mut rng);
    let prob = RowPenaltyProblem::new(&x, &y0, 1.0).unwrap();
    let rho = 0.5 * prob.rho_max(Blocks::Rows);
    let sol = solve_sparse_l21(&x, &y0, &tight().with_rho(rho), None).unwrap();
    assert!(sol.trace.converged);
    let (inactive, active) = sparse_kkt(&x, &y0, &sol.coef, rho);
    assert!(active <= 1e-5 && inactive <= rho + 1e-5);
}
