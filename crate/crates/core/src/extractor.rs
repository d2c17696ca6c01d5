//! Extraction of a continuous unbounded quasi-diagonal operator from a
//! continuous unbounded operator, with checkable certificates.
//!
//! The pipeline is: regrade the domain so that `‖Tx‖_k ≤ 2^{-k} ‖x‖_k`
//! ([`regrade_wlog`]); pick indices `n_j` where `T` is large relative to
//! the next level and a target `v_j` for each ([`extract_quasidiagonal`]);
//! recheck everything independently ([`verify_extraction`]). A greedy
//! search for a subspace on which a quasi-diagonal map is two-sided
//! bounded lives in [`cbs_search`].

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koethe::{GradedVector, KoetheError, KoetheMatrix};
use crate::ladder::{self, Growth};
use crate::logmath::{self, LN_2, LOG_TOL};
use crate::operators::{self, ContinuityCertificate, OpError, OperatorRep, QdEntry, QuasiDiagonal};
use crate::seqnorm::{self, NormError, NormSpec};

/// Relative slack for the sampled continuity clause.
pub const SAMPLED_REL_TOL: f64 = 1e-9;

/// Relative slack when rechecking a continuity certificate.
pub const CERT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("certificate fails at level k={k}: bound exp({log_bound}) exceeds M_k = exp({log_m})")]
    InvalidCertificate {
        k: usize,
        log_bound: f64,
        log_m: f64,
    },
    #[error("no index n_{0} found within the truncation")]
    NjNotFound(usize),
    #[error("no target v_{0} found within the truncation")]
    VjNotFound(usize),
    #[error("invalid extraction request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Koethe(#[from] KoetheError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// The regraded domain matrix and the certificate that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RegradeResult {
    /// `ln ã_n^k = k ln 2 + ln M_k + ln a_n^{N(k)}`, then made nondecreasing
    /// in `k` by a running maximum.
    pub matrix: KoetheMatrix,
    pub certificate: ContinuityCertificate,
    /// `ln M_k` as used, with `M_k = 0` replaced by `1`.
    pub log_m_used: Vec<f64>,
}

/// Regrades the domain so that `‖Tx‖_k ≤ 2^{-k} ‖x‖_{k,Ã}` for `k ≤ K`.
///
/// Each `M_k` is rechecked against the certified bound on `‖T‖_{k,N(k)}`;
/// a bound above `M_k (1 + 1e-12)` rejects the certificate.
pub fn regrade_wlog(
    a: &KoetheMatrix,
    t: &OperatorRep,
    b: &KoetheMatrix,
    norm: &NormSpec,
    cert: &ContinuityCertificate,
) -> Result<RegradeResult, ExtractError> {
    let levels = cert.levels();
    if levels == 0 {
        return Err(ExtractError::Invalid("empty continuity certificate".into()));
    }
    let slack = logmath::ln(1.0 + CERT_REL_TOL);
    let mut log_m_used = Vec::with_capacity(levels);
    for row in &cert.rows {
        let bound = operators::log_opnorm_bound(t, a, b, norm, row.k, row.n_k)?;
        if bound.log_value > row.log_m + slack {
            return Err(ExtractError::InvalidCertificate {
                k: row.k,
                log_bound: bound.log_value,
                log_m: row.log_m,
            });
        }
        log_m_used.push(if row.log_m == f64::NEG_INFINITY {
            0.0
        } else {
            row.log_m
        });
    }
    let dims = a.dims();
    let mut log = Vec::with_capacity(levels * dims);
    for (i, row) in cert.rows.iter().enumerate() {
        let shift = row.k as f64 * LN_2 + log_m_used[i];
        let src = a.log_row(row.n_k);
        for n in 0..dims {
            let mut v = shift + src[n];
            if i > 0 {
                v = v.max(log[(i - 1) * dims + n]);
            }
            log.push(v);
        }
    }
    Ok(RegradeResult {
        matrix: KoetheMatrix::from_log_grid(levels, dims, log)?,
        certificate: cert.clone(),
        log_m_used,
    })
}

/// The level sequence `(k_j)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSchedule {
    /// `k_j = ((j - 1) mod K) + 1`.
    Cycle(usize),
    List(Vec<usize>),
}

impl LevelSchedule {
    pub fn level(&self, j: usize) -> Option<usize> {
        match self {
            LevelSchedule::Cycle(c) if *c > 0 => Some((j - 1) % c + 1),
            LevelSchedule::Cycle(_) => None,
            LevelSchedule::List(v) => v.get(j - 1).copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub j: usize,
    pub k_j: usize,
    pub n_j: usize,
    pub v_j: usize,
    #[serde(with = "crate::logmath::serde_log")]
    pub log_t_j: f64,
    /// `ln(‖D e_{n_j}‖_{k_j+1} / ‖e_{n_j}‖_{k_j})`.
    #[serde(with = "crate::logmath::serde_log")]
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionCertificate {
    /// Levels over which `t_j` takes its supremum.
    pub levels: usize,
    pub schedule: LevelSchedule,
    pub selections: Vec<Selection>,
    /// `D e_{n_j} = t_j^{-1} ẽ_{v_j}`.
    pub operator: QuasiDiagonal,
}

fn log_basis_ratio(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    n: usize,
    k: usize,
    weighted: &mut [f64],
) -> Result<Option<f64>, ExtractError> {
    let image = t.basis_image(n);
    if image.is_empty() {
        return Ok(None);
    }
    let b_row = b.log_row(k + 1);
    weighted.fill(f64::NEG_INFINITY);
    for &(v, th) in &image {
        if v > b.dims() {
            return Err(OpError::Index {
                what: "range index",
                value: v,
                max: b.dims(),
            }
            .into());
        }
        weighted[v - 1] = logmath::log_abs(th) + b_row[v - 1];
    }
    let log_te = seqnorm::norm_eval_log(norm, weighted)?;
    Ok(Some(log_te - a.log_row(k)[n - 1]))
}

fn log_t(a: &KoetheMatrix, b: &KoetheMatrix, levels: usize, n: usize, v: usize) -> f64 {
    (1..=levels)
        .map(|k| b.log_row(k)[v - 1] - a.log_row(k)[n - 1])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Selects `(k_j, n_j, v_j, t_j)` for `j = 1..=count` and builds `D`.
///
/// `a` is the regraded domain matrix. `n_j` is the least index after
/// `n_{j-1}` with `‖T e_n‖_{k_j+1} / ‖e_n‖_{k_j} ≥ 2^j`; `v_j` is the least
/// unused index in the support of `T e_{n_j}` with
/// `t_j ≤ 2^{-j} b_{v_j}^{k_j+1} / ã_{n_j}^{k_j}`, where
/// `t_j = max_{k ≤ K} b_{v_j}^k / ã_{n_j}^k` and `K` is the number of levels
/// shared by both matrices. Comparisons allow `1e-12` in log-domain.
pub fn extract_quasidiagonal(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    schedule: &LevelSchedule,
    count: usize,
) -> Result<ExtractionCertificate, ExtractError> {
    let levels = a.levels().min(b.levels());
    if count == 0 {
        return Err(ExtractError::Invalid(
            "at least one selection is required".into(),
        ));
    }
    for j in 1..=count {
        match schedule.level(j) {
            Some(k) if k >= 1 && k < levels => {}
            Some(k) => {
                return Err(ExtractError::Invalid(alloc::format!(
                    "k_{j} = {k} must lie in 1..{levels} so that level k_j+1 exists"
                )))
            }
            None => {
                return Err(ExtractError::Invalid(alloc::format!(
                    "level schedule does not define k_{j}"
                )))
            }
        }
    }
    let domain = t.domain_extent().min(a.dims());
    let mut weighted = vec![f64::NEG_INFINITY; b.dims()];
    let mut used = vec![false; b.dims() + 1];
    let mut selections = Vec::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    let mut next_n = 1;
    for j in 1..=count {
        let k = schedule.level(j).expect("checked above");
        let target = j as f64 * LN_2;
        let mut found = None;
        for n in next_n..=domain {
            if let Some(r) = log_basis_ratio(t, a, b, norm, n, k, &mut weighted)? {
                if r >= target - LOG_TOL {
                    found = Some(n);
                    break;
                }
            }
        }
        let n = found.ok_or(ExtractError::NjNotFound(j))?;
        next_n = n + 1;

        let mut support: Vec<usize> = t
            .basis_image(n)
            .into_iter()
            .filter(|&(_, th)| th != 0.0)
            .map(|(v, _)| v)
            .collect();
        support.sort_unstable();
        let mut pick = None;
        for v in support {
            if used[v] {
                continue;
            }
            let lt = log_t(a, b, levels, n, v);
            let rhs = -target + b.log_row(k + 1)[v - 1] - a.log_row(k)[n - 1];
            if lt <= rhs + LOG_TOL {
                pick = Some((v, lt));
                break;
            }
        }
        let (v, lt) = pick.ok_or(ExtractError::VjNotFound(j))?;
        used[v] = true;
        let log_ratio = -lt + b.log_row(k + 1)[v - 1] - a.log_row(k)[n - 1];
        selections.push(Selection {
            j,
            k_j: k,
            n_j: n,
            v_j: v,
            log_t_j: lt,
            log_ratio,
        });
        entries.push(QdEntry {
            n,
            target: v,
            m: logmath::exp(-lt),
        });
    }
    Ok(ExtractionCertificate {
        levels,
        schedule: schedule.clone(),
        selections,
        operator: QuasiDiagonal::new(entries)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClauseStatus {
    Pass,
    Fail,
}

/// One failed check: `lhs ≤ rhs` (logs) did not hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseFailure {
    pub j: usize,
    pub k: Option<usize>,
    #[serde(with = "crate::logmath::serde_log")]
    pub lhs: f64,
    #[serde(with = "crate::logmath::serde_log")]
    pub rhs: f64,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub status: ClauseStatus,
    pub checks: usize,
    pub failures: Vec<ClauseFailure>,
}

impl ClauseReport {
    fn from_failures(checks: usize, failures: Vec<ClauseFailure>) -> Self {
        ClauseReport {
            status: if failures.is_empty() {
                ClauseStatus::Pass
            } else {
                ClauseStatus::Fail
            },
            checks,
            failures,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == ClauseStatus::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `t_j^{-1} b_{v_j}^k ≤ ã_{n_j}^k` for all `j` and `k ≤ K`.
    pub coordinate: ClauseReport,
    /// `‖Dx‖_k ≤ ‖x‖_k (1 + 1e-9)` on random `x`.
    pub sampled: ClauseReport,
    /// Recomputed ratios `‖D e_{n_j}‖_{k_j+1} / ‖e_{n_j}‖_{k_j} ≥ 2^j`.
    pub ratios: ClauseReport,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.coordinate.passed() && self.sampled.passed() && self.ratios.passed()
    }
}

/// Rechecks a certificate against `Ã` and `B` from scratch.
///
/// Never errors: malformed certificates show up as clause failures.
pub fn verify_extraction(
    cert: &ExtractionCertificate,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    samples: usize,
    seed: u64,
) -> VerificationReport {
    let levels = cert.levels.min(a.levels()).min(b.levels());
    let in_range =
        |s: &Selection| s.n_j >= 1 && s.n_j <= a.dims() && s.v_j >= 1 && s.v_j <= b.dims();

    let mut failures = Vec::new();
    let mut checks = 0;
    if levels < cert.levels {
        failures.push(ClauseFailure {
            j: 0,
            k: None,
            lhs: cert.levels as f64,
            rhs: levels as f64,
            what: "certificate levels exceed the matrices".into(),
        });
    }
    for s in &cert.selections {
        checks += 1;
        let Some(e) = cert.operator.entry(s.n_j).filter(|e| e.target == s.v_j) else {
            failures.push(ClauseFailure {
                j: s.j,
                k: None,
                lhs: f64::NAN,
                rhs: f64::NAN,
                what: "operator does not map e_{n_j} to the line of e_{v_j}".into(),
            });
            continue;
        };
        if !in_range(s) {
            failures.push(ClauseFailure {
                j: s.j,
                k: None,
                lhs: s.n_j as f64,
                rhs: a.dims() as f64,
                what: "index outside the truncation".into(),
            });
            continue;
        }
        let log_m = logmath::log_abs(e.m);
        if (log_m + s.log_t_j).abs() > LOG_TOL {
            failures.push(ClauseFailure {
                j: s.j,
                k: None,
                lhs: log_m,
                rhs: -s.log_t_j,
                what: "operator coefficient differs from 1/t_j".into(),
            });
        }
        for k in 1..=levels {
            checks += 1;
            let lhs = b.log_row(k)[s.v_j - 1] - a.log_row(k)[s.n_j - 1];
            if lhs > s.log_t_j {
                failures.push(ClauseFailure {
                    j: s.j,
                    k: Some(k),
                    lhs,
                    rhs: s.log_t_j,
                    what: "b_v^k / a_n^k exceeds t_j".into(),
                });
            }
        }
    }
    let coordinate = ClauseReport::from_failures(checks, failures);

    let d = OperatorRep::QuasiDiagonal {
        map: cert.operator.clone(),
    };
    let support: Vec<usize> = cert
        .operator
        .entries()
        .iter()
        .map(|e| e.n)
        .filter(|&n| n <= a.dims())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut checks = 0;
    let slack = logmath::ln(1.0 + SAMPLED_REL_TOL);
    for trial in 0..samples {
        let mut x = GradedVector::zeros(a.dims());
        for &n in &support {
            x.coeffs_mut()[n - 1] = rng.random_range(-1.0..=1.0);
        }
        let Ok(dx) = d.apply(&x, b.dims()) else {
            failures.push(ClauseFailure {
                j: trial + 1,
                k: None,
                lhs: f64::NAN,
                rhs: f64::NAN,
                what: "operator does not fit the truncation".into(),
            });
            break;
        };
        for k in 1..=levels {
            checks += 1;
            let lhs = b.log_seminorm(norm, &dx, k);
            let rhs = a.log_seminorm(norm, &x, k);
            match (lhs, rhs) {
                (Ok(l), Ok(r)) if l <= r + slack => {}
                (Ok(l), Ok(r)) => failures.push(ClauseFailure {
                    j: trial + 1,
                    k: Some(k),
                    lhs: l,
                    rhs: r,
                    what: "sampled ‖Dx‖_k exceeds ‖x‖_k".into(),
                }),
                _ => failures.push(ClauseFailure {
                    j: trial + 1,
                    k: Some(k),
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    what: "seminorm evaluation failed".into(),
                }),
            }
        }
    }
    let sampled = ClauseReport::from_failures(checks, failures);

    let mut failures = Vec::new();
    let mut checks = 0;
    let mut weighted = vec![f64::NEG_INFINITY; b.dims()];
    for s in &cert.selections {
        checks += 1;
        let k = s.k_j;
        let rhs = s.j as f64 * LN_2;
        let recomputed =
            if in_range(s) && k >= 1 && k < levels && cert.schedule.level(s.j) == Some(k) {
                log_basis_ratio(&d, a, b, norm, s.n_j, k, &mut weighted)
                    .ok()
                    .flatten()
            } else {
                None
            };
        match recomputed {
            Some(r) if r >= rhs - LOG_TOL && (r - s.log_ratio).abs() <= LOG_TOL => {}
            Some(r) => failures.push(ClauseFailure {
                j: s.j,
                k: Some(k),
                lhs: r,
                rhs,
                what: alloc::format!("ratio below 2^j or differs from reported {}", s.log_ratio),
            }),
            None => failures.push(ClauseFailure {
                j: s.j,
                k: Some(k),
                lhs: f64::NAN,
                rhs,
                what: "ratio could not be recomputed".into(),
            }),
        }
    }
    let ratios = ClauseReport::from_failures(checks, failures);

    VerificationReport {
        coordinate,
        sampled,
        ratios,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `|m_n| b_{σ(n)}^k ≤ C a_n^{k'}`.
    Upper,
    /// `a_n^k ≤ C |m_n| b_{σ(n)}^{k'}`.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbsRow {
    pub k: usize,
    pub direction: Direction,
    pub k_prime: usize,
    #[serde(with = "crate::logmath::serde_log")]
    pub log_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum CbsOutcome {
    Found {
        support: Vec<usize>,
        table: Vec<CbsRow>,
    },
    Inconclusive {
        support: Vec<usize>,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbsOptions {
    /// Largest per-index constant accepted during the greedy pass.
    pub log_c_cap: f64,
    pub divergence_ratio: f64,
}

impl Default for CbsOptions {
    fn default() -> Self {
        CbsOptions {
            log_c_cap: logmath::ln(1e6),
            divergence_ratio: ladder::DEFAULT_DIVERGENCE_RATIO,
        }
    }
}

fn cbs_log_c(
    dir: Direction,
    e: &QdEntry,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    k: usize,
    kp: usize,
) -> f64 {
    let lm = logmath::log_abs(e.m);
    match dir {
        Direction::Upper => lm + b.log_row(k)[e.target - 1] - a.log_row(kp)[e.n - 1],
        Direction::Lower => a.log_row(k)[e.n - 1] - lm - b.log_row(kp)[e.target - 1],
    }
}

/// Greedy search for an index set `J` on which `D` is two-sided bounded at
/// every level `k ≤ levels`.
///
/// Indices of the support are scanned in increasing order and kept when, for
/// each `k` and direction, some `k'` gives a per-index constant within
/// `opts.log_c_cap`. For the kept set, each `(k, direction)` gets the least
/// `k'` whose running-maximum constant over prefixes of `J` (sizes `|J|/4`,
/// `|J|/2`, `|J|`) is stable and within the cap.
pub fn cbs_search(
    d: &QuasiDiagonal,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    levels: usize,
    min_size: usize,
    opts: &CbsOptions,
) -> Result<CbsOutcome, ExtractError> {
    if levels == 0 || levels > a.levels() || levels > b.levels() {
        return Err(ExtractError::Invalid(alloc::format!(
            "levels {levels} must lie in 1..={}",
            a.levels().min(b.levels())
        )));
    }
    if !d.is_injective() {
        return Err(ExtractError::Invalid(
            "operator is not injective on its support".into(),
        ));
    }
    let dirs = [Direction::Upper, Direction::Lower];
    let mut chosen: Vec<&QdEntry> = Vec::new();
    for e in d.entries() {
        if e.m == 0.0 || e.n > a.dims() || e.target > b.dims() {
            continue;
        }
        let ok = (1..=levels).all(|k| {
            dirs.iter()
                .all(|&dir| (1..=levels).any(|kp| cbs_log_c(dir, e, a, b, k, kp) <= opts.log_c_cap))
        });
        if ok {
            chosen.push(e);
        }
    }
    let support: Vec<usize> = chosen.iter().map(|e| e.n).collect();
    if chosen.len() < min_size.max(1) {
        return Ok(CbsOutcome::Inconclusive {
            support,
            reason: alloc::format!(
                "only {} indices admit two-sided constants within the cap",
                chosen.len()
            ),
        });
    }
    let len = chosen.len();
    let prefixes = [len.div_ceil(4), len.div_ceil(2), len];
    let mut table = Vec::new();
    for k in 1..=levels {
        for &dir in &dirs {
            let mut row = None;
            for kp in 1..=levels {
                let mut running = f64::NEG_INFINITY;
                let per: Vec<f64> = chosen
                    .iter()
                    .map(|e| {
                        running = running.max(cbs_log_c(dir, e, a, b, k, kp));
                        running
                    })
                    .collect();
                let ladder_values: Vec<f64> = prefixes.iter().map(|&p| per[p - 1]).collect();
                let log_c = per[len - 1];
                if log_c <= opts.log_c_cap
                    && ladder::classify(&ladder_values, opts.divergence_ratio) == Growth::Stable
                {
                    row = Some(CbsRow {
                        k,
                        direction: dir,
                        k_prime: kp,
                        log_c,
                    });
                    break;
                }
            }
            match row {
                Some(r) => table.push(r),
                None => {
                    return Ok(CbsOutcome::Inconclusive {
                        support,
                        reason: alloc::format!(
                            "no level k' gives a stable {dir:?} constant at k={k}"
                        ),
                    })
                }
            }
        }
    }
    Ok(CbsOutcome::Found { support, table })
}
