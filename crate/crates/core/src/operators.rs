//! Operators between truncated ℓ-Köthe spaces and their seminorms
//! `‖T‖_{p,q} = sup{‖Tx‖_p : ‖x‖_q ≤ 1}`.
//!
//! Exact values are available for rank-one operators and for quasi-diagonal
//! operators with injective index map under a symmetric norm. Everything
//! else goes through [`opnorm_oracle`], which only ever returns a value
//! attained at some feasible point, hence a lower bound.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koethe::{GradedVector, KoetheError, KoetheMatrix};
use crate::ladder::{self, Growth, Ladder};
use crate::logmath;
use crate::seqnorm::{self, NormError, NormSpec};

/// Largest domain/range dimension the oracle searches.
pub const ORACLE_DIM_CAP: usize = 10;

/// Default number of random restarts for the oracle.
pub const DEFAULT_ORACLE_BUDGET: usize = 200;

/// `ln 1e300`: continuity constants above this count as blow-up.
pub const LOG_BLOWUP_GUARD: f64 = 690.775_527_898_213_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("{what} {value} out of range 1..={max}")]
    Index {
        what: &'static str,
        value: usize,
        max: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("oracle dimension {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error("no N(k) within the search cap keeps the operator seminorm finite at level k={k}")]
    ContinuityFailure { k: usize },
    #[error(transparent)]
    Koethe(#[from] KoetheError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

fn check_level(what: &'static str, value: usize, max: usize) -> Result<(), OpError> {
    if value == 0 || value > max {
        return Err(OpError::Index { what, value, max });
    }
    Ok(())
}

/// One coordinate of a quasi-diagonal map: `T e_n = m ẽ_target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QdEntry {
    pub n: usize,
    pub target: usize,
    pub m: f64,
}

/// `T e_n = m_n ẽ_{σ(n)}` on the listed `n`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<QdEntry>", into = "Vec<QdEntry>")]
pub struct QuasiDiagonal {
    entries: Vec<QdEntry>,
    injective: bool,
}

impl QuasiDiagonal {
    pub fn new(mut entries: Vec<QdEntry>) -> Result<Self, OpError> {
        for e in &entries {
            if e.n == 0 || e.target == 0 {
                return Err(OpError::Invalid(alloc::format!(
                    "indices are 1-based, got ({}, {})",
                    e.n,
                    e.target
                )));
            }
            if !e.m.is_finite() {
                return Err(OpError::Invalid(alloc::format!(
                    "multiplier at n={} is not finite",
                    e.n
                )));
            }
        }
        entries.sort_by_key(|e| e.n);
        if let Some(w) = entries.windows(2).find(|w| w[0].n == w[1].n) {
            return Err(OpError::Invalid(alloc::format!(
                "index n={} is mapped twice",
                w[0].n
            )));
        }
        let mut targets: Vec<usize> = entries.iter().map(|e| e.target).collect();
        targets.sort_unstable();
        let injective = targets.windows(2).all(|w| w[0] != w[1]);
        Ok(QuasiDiagonal { entries, injective })
    }

    /// `σ = id`, `m_n = m` for `n ≤ dims`.
    pub fn scaled_identity(dims: usize, m: f64) -> Self {
        let entries = (1..=dims).map(|n| QdEntry { n, target: n, m }).collect();
        QuasiDiagonal::new(entries).expect("identity entries are valid")
    }

    /// Entries sorted by `n`.
    pub fn entries(&self) -> &[QdEntry] {
        &self.entries
    }

    pub fn is_injective(&self) -> bool {
        self.injective
    }

    pub fn entry(&self, n: usize) -> Option<&QdEntry> {
        self.entries
            .binary_search_by_key(&n, |e| e.n)
            .ok()
            .map(|i| &self.entries[i])
    }
}

impl TryFrom<Vec<QdEntry>> for QuasiDiagonal {
    type Error = OpError;

    fn try_from(v: Vec<QdEntry>) -> Result<Self, Self::Error> {
        QuasiDiagonal::new(v)
    }
}

impl From<QuasiDiagonal> for Vec<QdEntry> {
    fn from(q: QuasiDiagonal) -> Self {
        q.entries
    }
}

/// A continuous linear operator between truncated spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OperatorRep {
    /// `T e_n = Σ_v θ_{nv} ẽ_v`; `theta` is row-major with one row per
    /// domain index `n`, each of length `range_dims`.
    Dense {
        domain_dims: usize,
        range_dims: usize,
        theta: Vec<f64>,
    },
    /// `T = scale · e_i' ⊗ ẽ_v`.
    RankOne {
        i: usize,
        v: usize,
        scale: f64,
    },
    QuasiDiagonal {
        map: QuasiDiagonal,
    },
}

impl OperatorRep {
    pub fn dense(domain_dims: usize, range_dims: usize, theta: Vec<f64>) -> Result<Self, OpError> {
        if theta.len() != domain_dims * range_dims {
            return Err(OpError::DimMismatch(alloc::format!(
                "theta has {} entries, expected {domain_dims}x{range_dims}",
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(OpError::Invalid(alloc::format!(
                "theta entry ({}, {}) is not finite",
                i / range_dims + 1,
                i % range_dims + 1
            )));
        }
        Ok(OperatorRep::Dense {
            domain_dims,
            range_dims,
            theta,
        })
    }

    pub fn rank_one(i: usize, v: usize, scale: f64) -> Result<Self, OpError> {
        if i == 0 || v == 0 {
            return Err(OpError::Invalid("rank-one indices are 1-based".into()));
        }
        if !scale.is_finite() {
            return Err(OpError::Invalid("rank-one scale is not finite".into()));
        }
        Ok(OperatorRep::RankOne { i, v, scale })
    }

    pub fn quasi_diagonal(map: QuasiDiagonal) -> Self {
        OperatorRep::QuasiDiagonal { map }
    }

    /// Largest domain index the operator can act on nontrivially.
    pub fn domain_extent(&self) -> usize {
        match self {
            OperatorRep::Dense { domain_dims, .. } => *domain_dims,
            OperatorRep::RankOne { i, .. } => *i,
            OperatorRep::QuasiDiagonal { map } => map.entries.last().map_or(0, |e| e.n),
        }
    }

    /// Largest range index the operator can hit.
    pub fn range_extent(&self) -> usize {
        match self {
            OperatorRep::Dense { range_dims, .. } => *range_dims,
            OperatorRep::RankOne { v, .. } => *v,
            OperatorRep::QuasiDiagonal { map } => {
                map.entries.iter().map(|e| e.target).max().unwrap_or(0)
            }
        }
    }

    /// Nonzero coefficients `(v, θ_{nv})` of `T e_n`, increasing in `v`.
    pub fn basis_image(&self, n: usize) -> Vec<(usize, f64)> {
        match self {
            OperatorRep::Dense {
                domain_dims,
                range_dims,
                theta,
            } => {
                if n == 0 || n > *domain_dims {
                    return Vec::new();
                }
                let row = &theta[(n - 1) * range_dims..n * range_dims];
                row.iter()
                    .enumerate()
                    .filter(|(_, t)| **t != 0.0)
                    .map(|(v, t)| (v + 1, *t))
                    .collect()
            }
            OperatorRep::RankOne { i, v, scale } => {
                if n == *i && *scale != 0.0 {
                    vec![(*v, *scale)]
                } else {
                    Vec::new()
                }
            }
            OperatorRep::QuasiDiagonal { map } => match map.entry(n) {
                Some(e) if e.m != 0.0 => vec![(e.target, e.m)],
                _ => Vec::new(),
            },
        }
    }

    /// Applies `T`; coordinates of `x` beyond its length are zero.
    pub fn apply(&self, x: &GradedVector, range_dims: usize) -> Result<GradedVector, OpError> {
        if self.range_extent() > range_dims {
            return Err(OpError::DimMismatch(alloc::format!(
                "operator reaches range index {} but output has {range_dims}",
                self.range_extent()
            )));
        }
        let mut y = vec![0.0; range_dims];
        let xs = x.coeffs();
        match self {
            OperatorRep::Dense {
                domain_dims,
                range_dims: rd,
                theta,
            } => {
                if xs.len() > *domain_dims {
                    return Err(OpError::DimMismatch(alloc::format!(
                        "input has {} coordinates, operator domain has {domain_dims}",
                        xs.len()
                    )));
                }
                for (n, &xn) in xs.iter().enumerate() {
                    if xn == 0.0 {
                        continue;
                    }
                    let row = &theta[n * rd..(n + 1) * rd];
                    for (yv, &t) in y.iter_mut().zip(row) {
                        *yv += t * xn;
                    }
                }
            }
            OperatorRep::RankOne { i, v, scale } => {
                if let Some(&xi) = xs.get(i - 1) {
                    y[v - 1] = scale * xi;
                }
            }
            OperatorRep::QuasiDiagonal { map } => {
                for e in &map.entries {
                    if let Some(&xn) = xs.get(e.n - 1) {
                        y[e.target - 1] += e.m * xn;
                    }
                }
            }
        }
        Ok(GradedVector::new(y)?)
    }

    /// Drops every coefficient outside `domain_dims × range_dims`.
    pub fn restrict(&self, domain_dims: usize, range_dims: usize) -> OperatorRep {
        match self {
            OperatorRep::Dense {
                domain_dims: d,
                range_dims: r,
                theta,
            } => {
                let (dd, rr) = ((*d).min(domain_dims), (*r).min(range_dims));
                let mut out = Vec::with_capacity(dd * rr);
                for n in 0..dd {
                    out.extend_from_slice(&theta[n * r..n * r + rr]);
                }
                OperatorRep::Dense {
                    domain_dims: dd,
                    range_dims: rr,
                    theta: out,
                }
            }
            OperatorRep::RankOne { i, v, .. } => {
                if *i <= domain_dims && *v <= range_dims {
                    self.clone()
                } else {
                    OperatorRep::QuasiDiagonal {
                        map: QuasiDiagonal::new(Vec::new()).expect("empty map is valid"),
                    }
                }
            }
            OperatorRep::QuasiDiagonal { map } => {
                let entries = map
                    .entries
                    .iter()
                    .filter(|e| e.n <= domain_dims && e.target <= range_dims)
                    .copied()
                    .collect();
                OperatorRep::QuasiDiagonal {
                    map: QuasiDiagonal::new(entries).expect("subset of a valid map"),
                }
            }
        }
    }

    /// The quasi-diagonal form of `T`, if every `T e_n` hits at most one
    /// basis vector.
    pub fn as_quasi_diagonal(&self) -> Option<QuasiDiagonal> {
        match self {
            OperatorRep::QuasiDiagonal { map } => Some(map.clone()),
            OperatorRep::RankOne { i, v, scale } => Some(
                QuasiDiagonal::new(vec![QdEntry {
                    n: *i,
                    target: *v,
                    m: *scale,
                }])
                .expect("rank-one entry is valid"),
            ),
            OperatorRep::Dense { domain_dims, .. } => {
                let mut entries = Vec::new();
                for n in 1..=*domain_dims {
                    match self.basis_image(n).as_slice() {
                        [] => {}
                        [(v, t)] => entries.push(QdEntry {
                            n,
                            target: *v,
                            m: *t,
                        }),
                        _ => return None,
                    }
                }
                QuasiDiagonal::new(entries).ok()
            }
        }
    }
}

/// The rank-one operator `e_i' ⊗ ẽ_v`.
pub fn rank_one_probe(i: usize, v: usize) -> OperatorRep {
    assert!(i >= 1 && v >= 1, "probe indices are 1-based");
    OperatorRep::RankOne { i, v, scale: 1.0 }
}

fn check_fits(t: &OperatorRep, a: &KoetheMatrix, b: &KoetheMatrix) -> Result<(), OpError> {
    if t.domain_extent() > a.dims() {
        return Err(OpError::Index {
            what: "domain index",
            value: t.domain_extent(),
            max: a.dims(),
        });
    }
    if t.range_extent() > b.dims() {
        return Err(OpError::Index {
            what: "range index",
            value: t.range_extent(),
            max: b.dims(),
        });
    }
    Ok(())
}

fn qd_log_norm(map: &QuasiDiagonal, a_row: &[f64], b_row: &[f64]) -> f64 {
    map.entries
        .iter()
        .map(|e| logmath::log_abs(e.m) + b_row[e.target - 1] - a_row[e.n - 1])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `ln ‖T‖_{p,q}` from a closed form, or `None` when no closed form applies.
///
/// * rank one: `|scale| b_v^p / a_i^q`;
/// * quasi-diagonal, injective `σ`, norm `l_p` or `c_0`:
///   `sup_n |m_n| b_{σ(n)}^p / a_n^q`.
pub fn log_opnorm_exact(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
) -> Result<Option<f64>, OpError> {
    check_level("range level p", p, b.levels())?;
    check_level("domain level q", q, a.levels())?;
    check_fits(t, a, b)?;
    let (a_row, b_row) = (a.log_row(q), b.log_row(p));
    Ok(match t {
        OperatorRep::RankOne { i, v, scale } => {
            Some(logmath::log_abs(*scale) + b_row[v - 1] - a_row[i - 1])
        }
        OperatorRep::QuasiDiagonal { map } if map.injective && norm.is_symmetric() => {
            Some(qd_log_norm(map, a_row, b_row))
        }
        _ => None,
    })
}

/// `‖T‖_{p,q}` from a closed form; see [`log_opnorm_exact`].
pub fn opnorm_exact(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
) -> Result<Option<f64>, OpError> {
    Ok(log_opnorm_exact(t, a, b, norm, p, q)?.map(logmath::exp))
}

/// A value known to be at least `‖T‖_{p,q}`, and whether it is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormBound {
    #[serde(with = "crate::logmath::serde_log")]
    pub log_value: f64,
    pub exact: bool,
}

/// Certified upper bound on `ln ‖T‖_{p,q}`.
///
/// Uses, in order: the closed forms of [`log_opnorm_exact`] (also for dense
/// matrices that are quasi-diagonal in disguise); the basis maximum
/// `max_n ‖T e_n‖_p / a_n^q`, exact for `l_1` because the weighted `l_1`
/// ball is the hull of the scaled basis; and otherwise the column sum
/// `Σ_n ‖T e_n‖_p / a_n^q`, valid for every monotone norm normalized on the
/// basis since then `|x_n| a_n^q ≤ ‖x‖_q`.
pub fn log_opnorm_bound(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
) -> Result<OpNormBound, OpError> {
    if let Some(v) = log_opnorm_exact(t, a, b, norm, p, q)? {
        return Ok(OpNormBound {
            log_value: v,
            exact: true,
        });
    }
    if let Some(map) = t.as_quasi_diagonal() {
        if map.injective && norm.is_symmetric() {
            return Ok(OpNormBound {
                log_value: qd_log_norm(&map, a.log_row(q), b.log_row(p)),
                exact: true,
            });
        }
    }
    let (a_row, b_row) = (a.log_row(q), b.log_row(p));
    let mut per_basis = Vec::with_capacity(a.dims());
    for n in 1..=t.domain_extent() {
        let image = t.basis_image(n);
        if image.is_empty() {
            continue;
        }
        let mut weighted = vec![f64::NEG_INFINITY; b.dims()];
        for (v, th) in image {
            weighted[v - 1] = logmath::log_abs(th) + b_row[v - 1];
        }
        per_basis.push(seqnorm::norm_eval_log(norm, &weighted)? - a_row[n - 1]);
    }
    Ok(match norm {
        NormSpec::Lp(p1) if *p1 == 1.0 => OpNormBound {
            log_value: logmath::max_of(&per_basis),
            exact: true,
        },
        _ => OpNormBound {
            log_value: logmath::log_lp(&per_basis, 1.0),
            exact: false,
        },
    })
}

/// `G_{vn} = θ_{nv} b_v^p / a_n^q` rescaled by `exp(-shift)`, so that
/// `‖Tx‖_p / ‖x‖_q = e^shift ‖G y‖ / ‖y‖` with `y_n = x_n a_n^q`.
struct WeightedMatrix {
    rows: usize,
    cols: usize,
    g: Vec<f64>,
    shift: f64,
}

impl WeightedMatrix {
    fn new(t: &OperatorRep, a_row: &[f64], b_row: &[f64]) -> Self {
        let (rows, cols) = (b_row.len(), a_row.len());
        let mut logs = vec![f64::NEG_INFINITY; rows * cols];
        let mut signs = vec![0.0; rows * cols];
        for n in 1..=cols {
            for (v, th) in t.basis_image(n) {
                let idx = (v - 1) * cols + (n - 1);
                logs[idx] = logmath::log_abs(th) + b_row[v - 1] - a_row[n - 1];
                signs[idx] = th.signum();
            }
        }
        let shift = logmath::max_of(&logs);
        let g = logs
            .iter()
            .zip(&signs)
            .map(|(&l, &s)| {
                if s == 0.0 {
                    0.0
                } else {
                    s * logmath::exp(l - shift)
                }
            })
            .collect();
        WeightedMatrix {
            rows,
            cols,
            g,
            shift,
        }
    }

    fn ratio(&self, norm: &NormSpec, y: &[f64], buf: &mut [f64]) -> f64 {
        let ny = seqnorm::norm_eval(norm, y).unwrap_or(0.0);
        if ny <= 0.0 {
            return 0.0;
        }
        for (v, out) in buf.iter_mut().enumerate() {
            let row = &self.g[v * self.cols..(v + 1) * self.cols];
            *out = row.iter().zip(y).map(|(g, y)| g * y).sum();
        }
        seqnorm::norm_eval(norm, buf).unwrap_or(0.0) / ny
    }
}

/// Lower bound on `ln ‖T‖_{p,q}` by direct search over the unit ball.
///
/// Tries every basis direction, every `±1` pattern on supports of size two
/// (in weighted coordinates), then `budget` random starts refined by
/// coordinatewise ascent. Deterministic in `seed`.
#[allow(clippy::too_many_arguments)]
pub fn log_opnorm_oracle(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
    budget: usize,
    seed: u64,
) -> Result<f64, OpError> {
    check_level("range level p", p, b.levels())?;
    check_level("domain level q", q, a.levels())?;
    check_fits(t, a, b)?;
    let dim = a.dims().max(b.dims());
    if dim > ORACLE_DIM_CAP {
        return Err(OpError::CapExceeded {
            dim,
            cap: ORACLE_DIM_CAP,
        });
    }
    let w = WeightedMatrix::new(t, a.log_row(q), b.log_row(p));
    if w.shift == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let d = w.cols;
    let mut buf = vec![0.0; w.rows];
    let mut y = vec![0.0; d];
    let mut best = 0.0f64;

    for n in 0..d {
        y.fill(0.0);
        y[n] = 1.0;
        best = best.max(w.ratio(norm, &y, &mut buf));
    }
    for i in 0..d {
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                y.fill(0.0);
                y[i] = 1.0;
                y[j] = s;
                best = best.max(w.ratio(norm, &y, &mut buf));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        for yi in y.iter_mut() {
            *yi = rng.random_range(-1.0..1.0);
        }
        let mut current = w.ratio(norm, &y, &mut buf);
        let mut step = 0.5;
        for _ in 0..10 {
            for i in 0..d {
                let keep = y[i];
                let mut best_local = (current, keep);
                for cand in [keep + step, keep - step, 0.0, -keep] {
                    y[i] = cand;
                    let r = w.ratio(norm, &y, &mut buf);
                    if r > best_local.0 {
                        best_local = (r, cand);
                    }
                }
                y[i] = best_local.1;
                current = best_local.0;
            }
            step *= 0.5;
        }
        best = best.max(current);
    }
    Ok(w.shift + logmath::ln(best))
}

/// Lower bound on `‖T‖_{p,q}`; see [`log_opnorm_oracle`].
#[allow(clippy::too_many_arguments)]
pub fn opnorm_oracle(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
    budget: usize,
    seed: u64,
) -> Result<f64, OpError> {
    log_opnorm_oracle(t, a, b, norm, p, q, budget, seed).map(logmath::exp)
}

/// One row of a continuity certificate: `‖T‖_{k,N(k)} ≤ M_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub k: usize,
    pub n_k: usize,
    #[serde(with = "crate::logmath::serde_log")]
    pub log_m: f64,
    /// Whether `log_m` is the exact seminorm rather than an upper bound.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCertificate {
    pub rows: Vec<ContinuityRow>,
}

impl ContinuityCertificate {
    /// Certificate from a given schedule and constants, rows `k = 1, 2, …`.
    pub fn from_parts(schedule: &[usize], log_m: &[f64]) -> Result<Self, OpError> {
        if schedule.len() != log_m.len() || schedule.is_empty() {
            return Err(OpError::Invalid(
                "schedule and constants must be non-empty and of equal length".into(),
            ));
        }
        if schedule.contains(&0) || schedule.windows(2).any(|w| w[0] > w[1]) {
            return Err(OpError::Invalid(
                "N(k) must be positive and nondecreasing".into(),
            ));
        }
        Ok(ContinuityCertificate {
            rows: schedule
                .iter()
                .zip(log_m)
                .enumerate()
                .map(|(i, (&n_k, &log_m))| ContinuityRow {
                    k: i + 1,
                    n_k,
                    log_m,
                    exact: false,
                })
                .collect(),
        })
    }

    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    pub fn schedule(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n_k).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityOptions {
    /// Largest `N(k)` tried.
    pub n_cap: usize,
    /// When set, `N` is rejected if `‖T‖_{k,N}` diverges along the ladder.
    pub ladder: Option<Ladder>,
    pub divergence_ratio: f64,
}

impl Default for ContinuityOptions {
    fn default() -> Self {
        ContinuityOptions {
            n_cap: usize::MAX,
            ladder: None,
            divergence_ratio: ladder::DEFAULT_DIVERGENCE_RATIO,
        }
    }
}

fn bound_ladder(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    p: usize,
    q: usize,
    rungs: &Ladder,
) -> Result<Vec<f64>, OpError> {
    let mut out = Vec::with_capacity(rungs.len());
    for &s in rungs.rungs() {
        let (ra, rb) = (s.min(a.dims()), s.min(b.dims()));
        let at = a.truncate(a.levels(), ra)?;
        let bt = b.truncate(b.levels(), rb)?;
        let tt = t.restrict(ra, rb);
        out.push(log_opnorm_bound(&tt, &at, &bt, norm, p, q)?.log_value);
    }
    Ok(out)
}

/// For each `k ≤ levels`, the least `N(k)` with `‖T‖_{k,N(k)}` below the
/// blow-up guard (and not diverging along `opts.ladder`, if given).
///
/// `N(k)` is made nondecreasing by a running maximum, and `M_k` is the
/// certified bound of [`log_opnorm_bound`] at the final `N(k)`.
pub fn continuity_certificate(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    levels: usize,
    opts: &ContinuityOptions,
) -> Result<ContinuityCertificate, OpError> {
    check_level("levels", levels, b.levels())?;
    check_fits(t, a, b)?;
    let n_max = opts.n_cap.min(a.levels());
    let mut rows = Vec::with_capacity(levels);
    let mut floor = 1;
    for k in 1..=levels {
        let mut found = None;
        for n in 1..=n_max {
            let bound = log_opnorm_bound(t, a, b, norm, k, n)?;
            if bound.log_value >= LOG_BLOWUP_GUARD {
                continue;
            }
            if let Some(l) = &opts.ladder {
                let values = bound_ladder(t, a, b, norm, k, n, l)?;
                if ladder::classify(&values, opts.divergence_ratio) == Growth::Divergent {
                    continue;
                }
            }
            found = Some(n);
            break;
        }
        let n = found.ok_or(OpError::ContinuityFailure { k })?.max(floor);
        floor = n;
        let bound = log_opnorm_bound(t, a, b, norm, k, n)?;
        rows.push(ContinuityRow {
            k,
            n_k: n,
            log_m: bound.log_value,
            exact: bound.exact,
        });
    }
    Ok(ContinuityCertificate { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessRow {
    pub r: usize,
    /// `ln ‖T‖_{r,N}` per rung.
    #[serde(with = "crate::logmath::serde_log::vec")]
    pub log_values: Vec<f64>,
    /// Closed form at every rung (otherwise oracle lower bounds).
    pub exact: bool,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessDiagnostic {
    pub n: usize,
    pub ladder: Ladder,
    pub rows: Vec<BoundednessRow>,
}

impl BoundednessDiagnostic {
    pub fn any_divergent(&self) -> bool {
        self.rows.iter().any(|r| r.divergent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticOptions {
    pub divergence_ratio: f64,
    pub oracle_budget: usize,
    pub seed: u64,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            divergence_ratio: ladder::DEFAULT_DIVERGENCE_RATIO,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            seed: 0,
        }
    }
}

/// `‖T‖_{r,N}` for `r ≤ r_max` across the truncation ladder, with a
/// divergence flag per `r`.
#[allow(clippy::too_many_arguments)]
pub fn boundedness_diagnostic(
    t: &OperatorRep,
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    norm: &NormSpec,
    n: usize,
    r_max: usize,
    rungs: &Ladder,
    opts: &DiagnosticOptions,
) -> Result<BoundednessDiagnostic, OpError> {
    check_level("domain level N", n, a.levels())?;
    check_level("r_max", r_max, b.levels())?;
    let mut rows = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let mut log_values = Vec::with_capacity(rungs.len());
        let mut exact = true;
        for &s in rungs.rungs() {
            let (ra, rb) = (s.min(a.dims()), s.min(b.dims()));
            let at = a.truncate(a.levels(), ra)?;
            let bt = b.truncate(b.levels(), rb)?;
            let tt = t.restrict(ra, rb);
            let value = match log_opnorm_exact(&tt, &at, &bt, norm, r, n)? {
                Some(v) => v,
                None => {
                    exact = false;
                    log_opnorm_oracle(&tt, &at, &bt, norm, r, n, opts.oracle_budget, opts.seed)?
                }
            };
            log_values.push(value);
        }
        let divergent = ladder::classify(&log_values, opts.divergence_ratio) == Growth::Divergent;
        rows.push(BoundednessRow {
            r,
            log_values,
            exact,
            divergent,
        });
    }
    Ok(BoundednessDiagnostic {
        n,
        ladder: rungs.clone(),
        rows,
    })
}
