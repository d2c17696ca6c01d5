use koethe_core::operators::{
    self, log_opnorm_bound, log_opnorm_exact, log_opnorm_oracle, rank_one_probe, OperatorRep,
    QdEntry, QuasiDiagonal,
};
use koethe_core::seqnorm::{self, check_monotone, dual_coord_norm, monotonize, norm_eval};
use koethe_core::{CustomNorm, GradedVector, KoetheMatrix, KoetheMatrixSpec, NormSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn builtin(i: usize) -> NormSpec {
    match i {
        0 => NormSpec::lp(1.0).unwrap(),
        1 => NormSpec::lp(2.0).unwrap(),
        2 => NormSpec::lp(3.5).unwrap(),
        _ => NormSpec::C0,
    }
}

fn vecs(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1e3f64..1e3, dim),
        prop::collection::vec(-1e3f64..1e3, dim),
    )
}

fn random_matrix(levels: usize, dims: usize, rng: &mut ChaCha8Rng) -> KoetheMatrix {
    let mut log = Vec::with_capacity(levels * dims);
    let first: Vec<f64> = (0..dims).map(|_| rng.random_range(-3.0..3.0)).collect();
    log.extend_from_slice(&first);
    for k in 1..levels {
        let prev = log[(k - 1) * dims..k * dims].to_vec();
        log.extend(prev.iter().map(|x| x + rng.random_range(0.0..1.0)));
    }
    KoetheMatrix::from_log_grid(levels, dims, log).unwrap()
}

proptest! {
    #[test]
    fn builtin_norm_axioms(i in 0usize..4, (x, y) in vecs(6), c in -50.0f64..50.0) {
        let n = builtin(i);
        let nx = norm_eval(&n, &x).unwrap();
        let ny = norm_eval(&n, &y).unwrap();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = x.iter().map(|a| c * a).collect();
        prop_assert!(norm_eval(&n, &sum).unwrap() <= (nx + ny) * (1.0 + 1e-12));
        prop_assert!((norm_eval(&n, &scaled).unwrap() - c.abs() * nx).abs() <= 1e-9 * (1.0 + nx * c.abs()));
    }

    #[test]
    fn log_evaluation_agrees(i in 0usize..4, (x, _) in vecs(7)) {
        let n = builtin(i);
        let logs: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
        let direct = norm_eval(&n, &x).unwrap();
        let via_log = seqnorm::norm_eval_log(&n, &logs).unwrap().exp();
        prop_assert!((direct - via_log).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn dual_of_coordinate_is_attained(i in 0usize..4, w in prop::collection::vec(0.01f64..100.0, 1..8), pick in 0usize..8) {
        let n = builtin(i);
        let idx = pick % w.len() + 1;
        let d = dual_coord_norm(&n, &w, idx).unwrap();
        // sup |x_i| / ‖(x_n w_n)‖ is reached at x = e_i
        let mut e = vec![0.0; w.len()];
        e[idx - 1] = w[idx - 1];
        prop_assert!((1.0 / norm_eval(&n, &e).unwrap() - d).abs() <= 1e-12 * d);
        let mut rng = ChaCha8Rng::seed_from_u64(pick as u64);
        for _ in 0..20 {
            let x: Vec<f64> = (0..w.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
            prop_assert!(x[idx - 1].abs() <= d * norm_eval(&n, &xw).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn seminorms_match_linear_evaluation(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(3, 9, &mut rng);
        let x: Vec<f64> = (0..9).map(|_| rng.random_range(-5.0..5.0)).collect();
        let gx = GradedVector::new(x.clone()).unwrap();
        for i in 0..4 {
            let n = builtin(i);
            let w: Vec<f64> = x.iter().zip(a.log_row(k)).map(|(v, l)| v * l.exp()).collect();
            let want = norm_eval(&n, &w).unwrap();
            let got = a.seminorm(&n, &gx, k).unwrap();
            prop_assert!((got / want - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn monotone_suite_for_builtins() {
    for i in 0..4 {
        let r = check_monotone(&builtin(i), 500, 8, 7).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}

#[test]
fn monotonization_of_skewed_norm() {
    let skew = CustomNorm::new("skew", 8, |x: &[f64]| {
        let head = x[0] + x.get(1).copied().unwrap_or(0.0);
        x.iter().fold(head.abs(), |m, v| m.max(v.abs()))
    })
    .unwrap();
    // not monotone: |(1, -1)| = |(1, 1)| coordinatewise but the values differ
    assert_eq!(skew.eval(&[1.0, -1.0]).unwrap(), 1.0);
    assert_eq!(skew.eval(&[1.0, 1.0]).unwrap(), 2.0);
    assert_eq!(monotonize(&skew, &[1.0, -1.0]).unwrap(), 2.0);
    let mono = NormSpec::Monotonized(skew.clone());
    assert!(check_monotone(&mono, 500, 6, 3).unwrap().passed());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..3.0)).collect();
        assert!(monotonize(&skew, &x).unwrap() >= skew.eval(&x).unwrap() - 1e-12);
    }
}

#[test]
fn rank_one_probe_norm_identity() {
    let a = KoetheMatrix::build(&KoetheMatrixSpec::polynomial(), 4, 12).unwrap();
    let b = KoetheMatrix::build(
        &KoetheMatrixSpec::Expr {
            formula: koethe_core::expr::Formula::parse("k*sqrt(n)").unwrap(),
        },
        4,
        12,
    )
    .unwrap();
    for (i, v) in [(1, 1), (2, 3), (12, 5)] {
        let t = rank_one_probe(i, v);
        for (r, n) in [(1, 1), (3, 2), (4, 4)] {
            let got = log_opnorm_exact(&t, &a, &b, &NormSpec::C0, r, n)
                .unwrap()
                .unwrap();
            assert_eq!(got, b.log_entry(r, v).unwrap() - a.log_entry(n, i).unwrap());
        }
    }
    let t = rank_one_probe(2, 3);
    let y = t.apply(&GradedVector::unit(2, 4), 4).unwrap();
    assert_eq!(y.coeffs(), &[0.0, 0.0, 1.0, 0.0]);
    let p = rank_one_probe(1, 1)
        .apply(&GradedVector::new(vec![2.0, 5.0]).unwrap(), 2)
        .unwrap();
    assert_eq!(p.coeffs(), &[2.0, 0.0]);
}

#[test]
fn oracle_never_exceeds_certified_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let dims = rng.random_range(2..=6);
        let a = random_matrix(3, dims, &mut rng);
        let b = random_matrix(3, dims, &mut rng);
        let theta: Vec<f64> = (0..dims * dims)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let t = OperatorRep::dense(dims, dims, theta).unwrap();
        for i in 0..4 {
            let n = builtin(i);
            let lo = log_opnorm_oracle(&t, &a, &b, &n, 2, 2, 50, trial).unwrap();
            let hi = log_opnorm_bound(&t, &a, &b, &n, 2, 2).unwrap();
            assert!(lo <= hi.log_value + 1e-9, "{n}: {lo} > {}", hi.log_value);
            if hi.exact {
                assert!(lo >= hi.log_value + 0.99f64.ln() - 1e-12);
            }
        }
    }
}

#[test]
fn non_injective_quasi_diagonal_has_no_closed_form() {
    let a = KoetheMatrix::build(&KoetheMatrixSpec::polynomial(), 2, 4).unwrap();
    let map = QuasiDiagonal::new(vec![
        QdEntry {
            n: 1,
            target: 2,
            m: 1.0,
        },
        QdEntry {
            n: 3,
            target: 2,
            m: -1.0,
        },
    ])
    .unwrap();
    assert!(!map.is_injective());
    let t = OperatorRep::quasi_diagonal(map);
    let n = NormSpec::lp(2.0).unwrap();
    assert_eq!(log_opnorm_exact(&t, &a, &a, &n, 1, 1).unwrap(), None);
    let lo = operators::opnorm_oracle(&t, &a, &a, &n, 1, 1, 100, 1).unwrap();
    let hi = log_opnorm_bound(&t, &a, &a, &n, 1, 1)
        .unwrap()
        .log_value
        .exp();
    assert!(lo <= hi + 1e-9);
    // sup 2|x_1 - x_3| / sqrt(x_1^2 + 9 x_3^2) = 2 sqrt(10/9) by Cauchy-Schwarz
    let exact = 2.0 * (10.0f64 / 9.0).sqrt();
    assert!(lo <= exact + 1e-9 && lo >= 0.99 * exact, "{lo}");
}
