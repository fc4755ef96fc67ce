use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vkchain_core::ot::{cost_matrix, emd, exact_emd_oracle, sinkhorn, OtParams};
use vkchain_core::PointSet;

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
    PointSet::new((0..n).map(|_| [rng.random(), rng.random()]).collect())
}

/// Independent brute force: recursive scan over all assignments.
fn brute_assignment(c: &dyn Fn(usize, usize) -> f64, n: usize) -> f64 {
    fn go(c: &dyn Fn(usize, usize) -> f64, n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                go(c, n, row + 1, used, acc + c(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, n, 0, &mut vec![false; n], 0.0, &mut best);
    best / n as f64
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[test]
fn cost_matrix_is_antisymmetric_in_argument_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p = random_set(&mut rng, 4);
        let q = random_set(&mut rng, 6);
        let pq = cost_matrix(&p, &q);
        let qp = cost_matrix(&q, &p);
        for i in 0..4 {
            for j in 0..6 {
                let direct = dist(p.points[i], q.points[j]);
                assert!((pq.get(i, j) - direct).abs() < 1e-12);
                assert!((qp.get(j, i) - direct).abs() < 1e-12);
            }
        }
        assert_eq!(pq, qp.transpose());
    }
}

#[test]
fn sinkhorn_3x3_near_assignment_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let c = vkchain_core::CostMatrix::from_rows(&rows);
        let plan = sinkhorn(&c, &OtParams { eps: 5e-3, max_iters: 5000, tol: 1e-9 }).unwrap();
        let exact = brute_assignment(&|i, j| rows[i][j], 3);
        let got = plan.cost(&c);
        assert!((got - exact).abs() <= 0.02 * exact.max(1e-9) + 1e-6, "{got} vs {exact}");
    }
}

#[test]
fn oracle_matches_independent_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let p = random_set(&mut rng, 5);
        let q = random_set(&mut rng, 5);
        let scan = brute_assignment(&|i, j| dist(p.points[i], q.points[j]), 5);
        assert!((exact_emd_oracle(&p, &q).unwrap() - scan).abs() < 1e-12);
    }
}

fn entropic_fd(p: &PointSet, q: &PointSet, params: &OtParams, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for j in 0..q.len() {
        for d in 0..2 {
            let mut plus = q.clone();
            plus.points[j][d] += h;
            let mut minus = q.clone();
            minus.points[j][d] -= h;
            let vp = emd(p, &plus, params).unwrap().entropic_value;
            let vm = emd(p, &minus, params).unwrap().entropic_value;
            out.push((vp - vm) / (2.0 * h));
        }
    }
    out
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = numeric.iter().chain(analytic).map(|v| v.abs()).fold(1e-12, f64::max);
    diff / scale
}

#[test]
fn emd_4x4_against_oracle_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let value_params = OtParams { eps: 2e-3, max_iters: 20_000, tol: 1e-10 };
    let grad_params = OtParams { eps: 1e-2, max_iters: 20_000, tol: 1e-13 };
    for _ in 0..10 {
        let p = random_set(&mut rng, 4);
        let q = random_set(&mut rng, 4);
        let exact = exact_emd_oracle(&p, &q).unwrap();
        let r = emd(&p, &q, &value_params).unwrap();
        assert!((r.value - exact).abs() <= 0.02 * exact, "{} vs {exact}", r.value);

        let r = emd(&p, &q, &grad_params).unwrap();
        let analytic: Vec<f64> = r.grad_q.iter().flatten().copied().collect();
        let numeric = entropic_fd(&p, &q, &grad_params, 1e-4);
        assert!(rel_err(&analytic, &numeric) <= 1e-3);
    }
}

#[test]
fn gradient_check_twenty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = OtParams { eps: 1e-2, max_iters: 50_000, tol: 1e-11 };
    for _ in 0..20 {
        let (m, n) = (6, 5);
        let p = random_set(&mut rng, m);
        let q = random_set(&mut rng, n);
        let r = emd(&p, &q, &params).unwrap();
        assert!(r.plan.converged, "{m}x{n} err {:e} after {}", r.plan.marginal_error(), r.plan.iterations);
        let analytic: Vec<f64> = r.grad_q.iter().flatten().copied().collect();
        let numeric = entropic_fd(&p, &q, &params, 1e-4);
        let e = rel_err(&analytic, &numeric);
        assert!(e <= 1e-3, "relative error {e}");
    }
}

#[test]
fn regularized_cost_is_monotone_in_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..20 {
        let p = random_set(&mut rng, 5);
        let q = random_set(&mut rng, 4);
        let c = cost_matrix(&p, &q);
        let mut prev = f64::NEG_INFINITY;
        for eps in [2e-3, 5e-3, 1e-2, 5e-2, 0.1] {
            let plan = sinkhorn(&c, &OtParams { eps, max_iters: 50_000, tol: 1e-12 }).unwrap();
            let cost = plan.cost(&c);
            assert!(prev <= cost + 1e-9, "cost at smaller eps {prev} exceeds {cost}");
            prev = cost;
        }
    }
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [0.0..1.0f64, 0.0..1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn converged_plans_satisfy_marginals(
        p in prop::collection::vec(point(), 1..9),
        q in prop::collection::vec(point(), 1..9),
        eps in 0.005..0.2f64,
    ) {
        let tol = 1e-7;
        let c = cost_matrix(&PointSet::new(p.clone()), &PointSet::new(q.clone()));
        let plan = sinkhorn(&c, &OtParams { eps, max_iters: 20_000, tol }).unwrap();
        prop_assert!(plan.gamma.iter().all(|&g| g >= 0.0));
        if plan.converged {
            let a = 1.0 / p.len() as f64;
            let b = 1.0 / q.len() as f64;
            for s in plan.row_sums() { prop_assert!((s - a).abs() < tol); }
            for s in plan.col_sums() { prop_assert!((s - b).abs() < tol); }
            prop_assert!((plan.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_equivariance(
        p in prop::collection::vec(point(), 1..7),
        q in prop::collection::vec(point(), 1..7),
        v in [-3.0..3.0f64, -3.0..3.0f64],
    ) {
        let params = OtParams::default();
        let (p, q) = (PointSet::new(p), PointSet::new(q));
        let base = emd(&p, &q, &params).unwrap().value;
        let moved = emd(&p.translated(v), &q.translated(v), &params).unwrap().value;
        prop_assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn symmetric_for_equal_sizes(
        pts in prop::collection::vec((point(), point()), 1..7),
    ) {
        // near-permutation instances can stall Sinkhorn; only converged pairs are compared
        let params = OtParams { eps: 0.01, max_iters: 5000, tol: 1e-10 };
        let p = PointSet::new(pts.iter().map(|x| x.0).collect());
        let q = PointSet::new(pts.iter().map(|x| x.1).collect());
        let pq = emd(&p, &q, &params).unwrap();
        let qp = emd(&q, &p, &params).unwrap();
        prop_assume!(pq.plan.converged && qp.plan.converged);
        prop_assert!((pq.value - qp.value).abs() < 1e-6);
    }

    #[test]
    fn emd_is_non_negative(
        p in prop::collection::vec(point(), 1..7),
        q in prop::collection::vec(point(), 1..7),
    ) {
        let r = emd(&PointSet::new(p), &PointSet::new(q), &OtParams::default()).unwrap();
        prop_assert!(r.value >= 0.0);
    }
}
