use koethe_core::extractor::{
    cbs_search, extract_quasidiagonal, regrade_wlog, verify_extraction, CbsOptions, CbsOutcome,
    ExtractError, LevelSchedule,
};
use koethe_core::logmath::LN_2;
use koethe_core::operators::{
    self, continuity_certificate, ContinuityCertificate, ContinuityOptions, OperatorRep,
    QuasiDiagonal,
};
use koethe_core::{CustomNorm, KoetheMatrix, KoetheMatrixSpec, Ladder, NormSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn poly(levels: usize, dims: usize) -> KoetheMatrix {
    KoetheMatrix::build(&KoetheMatrixSpec::polynomial(), levels, dims).unwrap()
}

fn norms() -> Vec<NormSpec> {
    let skew = CustomNorm::new("skew", 16, |x: &[f64]| {
        let head = x.first().copied().unwrap_or(0.0) + x.get(1).copied().unwrap_or(0.0);
        x.iter().fold(head.abs(), |m, v| m.max(v.abs()))
    });
    vec![
        NormSpec::lp(1.0).unwrap(),
        NormSpec::lp(2.0).unwrap(),
        NormSpec::C0,
        NormSpec::Monotonized(skew.unwrap()),
    ]
}

/// A dense matrix with one growing entry per row, adjacent targets swapped
/// at random.
fn dense_growing(dims: usize, rng: &mut ChaCha8Rng) -> OperatorRep {
    let mut sigma: Vec<usize> = (0..dims).collect();
    for n in (0..dims - 1).step_by(2) {
        if rng.random_bool(0.5) {
            sigma.swap(n, n + 1);
        }
    }
    let mut theta = vec![0.0; dims * dims];
    for n in 0..dims {
        theta[n * dims + sigma[n]] = (n + 1) as f64 * rng.random_range(1.0..2.0);
    }
    OperatorRep::dense(dims, dims, theta).unwrap()
}

#[test]
fn pipeline_on_dense_operators() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut extracted = [0; 4];
    for trial in 0..8 {
        for (idx, norm) in norms().into_iter().enumerate() {
            // sign enumeration keeps the monotonized norm to small dimensions
            let (dims, count) = match norm {
                NormSpec::Monotonized(_) => (10, 1),
                _ => (40, 2),
            };
            let a = poly(6, dims);
            let b = poly(6, dims);
            let t = dense_growing(dims, &mut rng);
            let opts = ContinuityOptions {
                ladder: Some(Ladder::new(vec![dims / 4, dims / 2, dims]).unwrap()),
                ..ContinuityOptions::default()
            };
            let cert = continuity_certificate(&t, &a, &b, &norm, 4, &opts).unwrap();
            let regraded = regrade_wlog(&a, &t, &b, &norm, &cert).unwrap();
            let at = &regraded.matrix;
            let once = extract_quasidiagonal(&t, at, &b, &norm, &LevelSchedule::Cycle(2), count);
            let twice = extract_quasidiagonal(&t, at, &b, &norm, &LevelSchedule::Cycle(2), count);
            assert_eq!(once, twice);
            let Ok(ex) = once else { continue };
            extracted[idx] += 1;
            for s in &ex.selections {
                let lt = (1..=ex.levels)
                    .map(|k| b.log_row(k)[s.v_j - 1] - at.log_row(k)[s.n_j - 1])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(lt, s.log_t_j);
                let rhs = -(s.j as f64) * LN_2 + b.log_row(s.k_j + 1)[s.v_j - 1]
                    - at.log_row(s.k_j)[s.n_j - 1];
                assert!(s.log_t_j <= rhs + 1e-12);
            }
            let report = verify_extraction(&ex, at, &b, &norm, 25, trial);
            assert!(report.coordinate.passed());
            assert!(report.sampled.passed(), "{norm}: {:?}", report.sampled);
            assert!(report.ratios.passed());
        }
    }
    // the monotonized norm only has column-sum bounds, too loose to extract at this size
    assert!(extracted[..3].iter().all(|&e| e > 0), "{extracted:?}");
}

#[test]
fn dense_identity_matches_quasi_diagonal_identity() {
    let dims = 80;
    let a = poly(3, dims);
    let mut theta = vec![0.0; dims * dims];
    for n in 0..dims {
        theta[n * dims + n] = 1.0;
    }
    let dense = OperatorRep::dense(dims, dims, theta).unwrap();
    let qd = OperatorRep::quasi_diagonal(QuasiDiagonal::scaled_identity(dims, 1.0));
    let cert = ContinuityCertificate::from_parts(&[1, 2, 3], &[0.0; 3]).unwrap();
    let norm = NormSpec::lp(2.0).unwrap();
    let at = regrade_wlog(&a, &dense, &a, &norm, &cert).unwrap().matrix;
    let x = extract_quasidiagonal(&dense, &at, &a, &norm, &LevelSchedule::Cycle(2), 5).unwrap();
    let y = extract_quasidiagonal(&qd, &at, &a, &norm, &LevelSchedule::Cycle(2), 5).unwrap();
    assert_eq!(x, y);
    let ns: Vec<usize> = x.selections.iter().map(|s| s.n_j).collect();
    assert_eq!(ns, vec![4, 16, 17, 64, 65]);
}

#[test]
fn list_schedule_and_bad_levels() {
    let a = poly(3, 100);
    let id = OperatorRep::quasi_diagonal(QuasiDiagonal::scaled_identity(100, 1.0));
    let cert = ContinuityCertificate::from_parts(&[1, 2, 3], &[0.0; 3]).unwrap();
    let at = regrade_wlog(&a, &id, &a, &NormSpec::C0, &cert)
        .unwrap()
        .matrix;
    let ex = extract_quasidiagonal(
        &id,
        &at,
        &a,
        &NormSpec::C0,
        &LevelSchedule::List(vec![2, 2, 1]),
        3,
    )
    .unwrap();
    // n >= 2^(j + k_j): 8, 16, 17
    let ns: Vec<usize> = ex.selections.iter().map(|s| s.n_j).collect();
    assert_eq!(ns, vec![8, 16, 17]);
    assert!(matches!(
        extract_quasidiagonal(&id, &at, &a, &NormSpec::C0, &LevelSchedule::Cycle(3), 3),
        Err(ExtractError::Invalid(_))
    ));
    assert!(matches!(
        extract_quasidiagonal(
            &id,
            &at,
            &a,
            &NormSpec::C0,
            &LevelSchedule::List(vec![1]),
            2
        ),
        Err(ExtractError::Invalid(_))
    ));
}

#[test]
fn v_not_found_when_targets_are_too_small() {
    // With constant ã and b every t_j equals 1, which is never below 2^{-j}.
    let dims = 64;
    let b = KoetheMatrix::build(&KoetheMatrixSpec::constant(), 3, dims).unwrap();
    let mut theta = vec![0.0; dims * dims];
    for n in 0..dims {
        theta[n * dims] = 1e3;
    }
    let t = OperatorRep::dense(dims, dims, theta).unwrap();
    let at = KoetheMatrix::build(&KoetheMatrixSpec::constant(), 3, dims).unwrap();
    let err = extract_quasidiagonal(&t, &at, &b, &NormSpec::C0, &LevelSchedule::Cycle(1), 3);
    assert_eq!(err, Err(ExtractError::VjNotFound(1)));
}

#[test]
fn continuity_for_extracted_operator() {
    let (at, b, id) = {
        let a = poly(3, 300);
        let id = OperatorRep::quasi_diagonal(QuasiDiagonal::scaled_identity(300, 1.0));
        let cert = ContinuityCertificate::from_parts(&[1, 2, 3], &[0.0; 3]).unwrap();
        let at = regrade_wlog(&a, &id, &a, &NormSpec::C0, &cert)
            .unwrap()
            .matrix;
        (at, a, id)
    };
    let ex =
        extract_quasidiagonal(&id, &at, &b, &NormSpec::C0, &LevelSchedule::Cycle(2), 6).unwrap();
    let d = OperatorRep::quasi_diagonal(ex.operator.clone());
    for norm in norms().into_iter().take(3) {
        for k in 1..=3 {
            let v = operators::log_opnorm_exact(&d, &at, &b, &norm, k, k)
                .unwrap()
                .unwrap();
            assert!(v <= 1e-12);
        }
    }
}

#[test]
fn cbs_on_extracted_identity() {
    let a = poly(3, 300);
    let id = OperatorRep::quasi_diagonal(QuasiDiagonal::scaled_identity(300, 1.0));
    let cert = ContinuityCertificate::from_parts(&[1, 2, 3], &[0.0; 3]).unwrap();
    let at = regrade_wlog(&a, &id, &a, &NormSpec::C0, &cert)
        .unwrap()
        .matrix;
    let ex =
        extract_quasidiagonal(&id, &at, &a, &NormSpec::C0, &LevelSchedule::Cycle(2), 7).unwrap();
    let out = cbs_search(&ex.operator, &at, &a, 3, 4, &CbsOptions::default()).unwrap();
    let CbsOutcome::Found { support, table } = out else {
        panic!("{out:?}");
    };
    assert_eq!(support.len(), 7);
    for row in table {
        assert_eq!(row.k_prime, row.k);
        // upper: ln 2 + k ln n - k ln 2 - k ln n; lower: its negative
        let gap = (1.0 - row.k as f64) * LN_2;
        let want = match row.direction {
            koethe_core::extractor::Direction::Upper => gap,
            koethe_core::extractor::Direction::Lower => -gap,
        };
        assert!((row.log_c - want).abs() < 1e-9, "{row:?}");
    }
}
