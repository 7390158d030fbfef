use gauss_gp::mechanics::{constraint_gram_nonsingular, gauss_functional, projection_ops, uke_from_parts};
use gauss_gp::numerics::{chol_solve, pseudo_inverse, JitterPolicy};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn entries(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

/// `rows × cols` matrix of the given rank (product of thin random factors).
fn low_rank() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..7)
        .prop_flat_map(|(r, c)| (Just(r), Just(c), 1..=r.min(c)))
        .prop_flat_map(|(r, c, k)| (Just((r, c, k)), entries(r * k), entries(k * c)))
        .prop_map(|((r, c, k), u, v)| DMatrix::from_vec(r, k, u) * DMatrix::from_vec(k, c, v))
}

fn spd(n: usize, v: Vec<f64>) -> DMatrix<f64> {
    let b = DMatrix::from_vec(n, n, v);
    &b * b.transpose() + DMatrix::identity(n, n) * 0.2
}

/// Random `(M, A, b, ā)` with `n ≤ 8`, `m < n`, optionally rank-deficient `A`.
fn constrained_problem() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    (2usize..9)
        .prop_flat_map(|n| (Just(n), 1..n, any::<bool>()))
        .prop_flat_map(|(n, m, deficient)| {
            (Just((n, m, deficient)), entries(n * n), entries(m * n), entries(m), entries(n))
        })
        .prop_map(|((n, m, deficient), mv, av, bv, abar)| {
            let mut a = DMatrix::from_vec(m, n, av);
            if deficient && m > 1 {
                let r = a.row(0) * 0.5;
                a.set_row(m - 1, &r);
            }
            (spd(n, mv), a, DVector::from_vec(bv), DVector::from_vec(abar))
        })
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn penrose_conditions(a in low_rank()) {
        let p = pseudo_inverse(&a).unwrap();
        let scale = 1.0 + a.amax() * p.amax();
        let tol = 1e-8 * scale;
        prop_assert!((&a * &p * &a - &a).amax() <= tol * a.amax().max(1.0));
        prop_assert!((&p * &a * &p - &p).amax() <= tol * p.amax().max(1.0));
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap - ap.transpose()).amax() <= tol);
        prop_assert!((&pa - pa.transpose()).amax() <= tol);
    }

    #[test]
    fn chol_solve_recovers_solution_up_to_condition_1e8(
        n in 1usize..10,
        seed_q in entries(81),
        logs in prop::collection::vec(0.0..8.0f64, 9),
        x in entries(18),
    ) {
        // eigenvalues in (1e-8, 1], so the condition number stays below 1e8
        let q = DMatrix::from_column_slice(n, n, &seed_q[..n * n]).qr().q();
        let mut d = DVector::from_iterator(n, logs.iter().take(n).map(|l| 10f64.powf(-l)));
        d[0] = 1.0;
        let a = &q * DMatrix::from_diagonal(&d) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let x = DMatrix::from_column_slice(n, 2, &x[..2 * n]);
        let got = chol_solve(&a, &(&a * &x), JitterPolicy::none()).unwrap();
        let cond = d.max() / d.min();
        let rel = (&got - &x).norm() / x.norm().max(1e-300);
        prop_assert!(rel <= 1e-8, "relative error {rel:e} at condition {cond:e}");
    }

    #[test]
    fn projection_identities((m, a, b, _abar) in constrained_problem()) {
        let p = projection_ops(&m, &a).unwrap();
        let n = m.nrows();
        prop_assert!(inf_norm(&(&p.t * &p.t - &p.t)) <= 1e-10);
        let mt = &m * &p.t;
        prop_assert!(inf_norm(&(&mt - mt.transpose())) <= 1e-10);
        prop_assert_eq!(p.t.shape(), (n, n));
        if constraint_gram_nonsingular(&m, &a).unwrap() {
            prop_assert!(inf_norm(&(&a * &p.t)) <= 1e-10);
            let alb = &a * &p.l * &b;
            prop_assert!((alb - &b).amax() <= 1e-10 * (1.0 + b.amax()));
        }
    }

    /// Compares with the KKT system `[M Aᵀ; A 0][q̈; λ] = [M ā; b]` and
    /// checks that feasible perturbations never lower Gauss' functional.
    #[test]
    fn uke_is_the_constrained_least_squares_minimizer((m, a, b, abar) in constrained_problem(), w in entries(8)) {
        prop_assume!(constraint_gram_nonsingular(&m, &a).unwrap());
        let (n, k) = (m.nrows(), a.nrows());
        let q = uke_from_parts(&m, &a, &b, &abar).unwrap();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m);
        kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&a);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(&m * &abar));
        rhs.rows_mut(n, k).copy_from(&b);
        let sol = kkt.full_piv_lu().solve(&rhs).unwrap();
        prop_assert!((sol.rows(0, n) - &q).amax() <= 1e-8 * (1.0 + q.amax()));

        let null = DMatrix::identity(n, n) - pseudo_inverse(&a).unwrap() * &a;
        let delta = null * DVector::from_iterator(n, w.iter().copied().take(n));
        let g0 = gauss_functional(&m, &q, &abar).unwrap();
        let g1 = gauss_functional(&m, &(&q + &delta), &abar).unwrap();
        prop_assert!(g1 >= g0 - 1e-9 * (1.0 + g0));
    }
}
