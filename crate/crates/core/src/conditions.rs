//! Budgeted quantifier search for two matrix conditions:
//!
//! * the bounded-pair characterization: for every schedule `N(k)` there is
//!   `N` such that for each `r` some `k₀` and `C` give
//!   `b_v^r / a_i^N ≤ C max_{k≤k₀} b_v^k / a_i^{N(k)}` for all `v, i`;
//! * condition S for `(λ(B), λ(A))`:
//!   `∀p ∃q,k ∀s,l ∃r,C: b_m^s / a_n^k ≤ C max{b_m^q / a_n^p, b_m^r / a_n^l}`.
//!
//! On a finite grid the least `C` always exists, so each existential choice
//! is judged by how its minimal `C` behaves along a truncation ladder:
//! stable means the choice works, divergent means it does not, anything
//! else stays inconclusive. Universal quantifiers range over the budget
//! and, for schedules, over a finite adversary family.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koethe::KoetheMatrix;
use crate::ladder::{self, Growth, Ladder};
use crate::logmath;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error("budget exceeds the available truncation: {0}")]
    BudgetTooLargeForTruncation(String),
    #[error("{what} {value} out of range 1..={max}")]
    Index {
        what: &'static str,
        value: usize,
        max: usize,
    },
    #[error("invalid schedule `{0}`")]
    InvalidSchedule(String),
    #[error("schedule `{name}` is undefined at k={k}")]
    ScheduleExhausted { name: String, k: usize },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

fn check_index(what: &'static str, value: usize, max: usize) -> Result<(), ConditionError> {
    if value == 0 || value > max {
        return Err(ConditionError::Index { what, value, max });
    }
    Ok(())
}

/// A strictly increasing level map `k ↦ N(k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    /// `k + c`.
    Shift(usize),
    /// `c·k`, `c ≥ 1`.
    Scale(usize),
    /// `k²`.
    Square,
    /// Explicit values `N(1), N(2), …`.
    List(Vec<usize>),
}

impl Schedule {
    /// Parses `k`, `k+c`, `ck`, `c*k`, `k^2` or a slash-separated list such
    /// as `1/3/7`.
    pub fn parse(text: &str) -> Result<Self, ConditionError> {
        let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || ConditionError::InvalidSchedule(text.to_string());
        let sched = if s == "k" {
            Schedule::Shift(0)
        } else if s == "k^2" || s == "k*k" {
            Schedule::Square
        } else if let Some(c) = s.strip_prefix("k+") {
            Schedule::Shift(c.parse().map_err(|_| bad())?)
        } else if let Some(c) = s.strip_suffix("*k").or_else(|| s.strip_suffix('k')) {
            let c: usize = c.parse().map_err(|_| bad())?;
            if c == 0 {
                return Err(bad());
            }
            Schedule::Scale(c)
        } else if s.chars().all(|c| c.is_ascii_digit() || c == '/') && !s.is_empty() {
            let values = s
                .split('/')
                .map(|v| v.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            if values.first() == Some(&0) || values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(bad());
            }
            Schedule::List(values)
        } else {
            return Err(bad());
        };
        Ok(sched)
    }

    /// The built-in adversaries `k+1`, `2k`, `k²`.
    pub fn builtins() -> Vec<Schedule> {
        vec![Schedule::Shift(1), Schedule::Scale(2), Schedule::Square]
    }

    pub fn at(&self, k: usize) -> Result<usize, ConditionError> {
        assert!(k >= 1, "schedule levels are 1-based");
        match self {
            Schedule::Shift(c) => Ok(k + c),
            Schedule::Scale(c) => Ok(c * k),
            Schedule::Square => Ok(k * k),
            Schedule::List(v) => v
                .get(k - 1)
                .copied()
                .ok_or(ConditionError::ScheduleExhausted {
                    name: self.to_string(),
                    k,
                }),
        }
    }

    /// `N(1), …, N(kmax)`, checked to be positive and strictly increasing.
    pub fn values(&self, kmax: usize) -> Result<Vec<usize>, ConditionError> {
        let v = (1..=kmax)
            .map(|k| self.at(k))
            .collect::<Result<Vec<_>, _>>()?;
        if v.first() == Some(&0) || v.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConditionError::InvalidSchedule(self.to_string()));
        }
        Ok(v)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Shift(0) => f.write_str("k"),
            Schedule::Shift(c) => write!(f, "k+{c}"),
            Schedule::Scale(c) => write!(f, "{c}k"),
            Schedule::Square => f.write_str("k^2"),
            Schedule::List(v) => {
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("/")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

impl TryFrom<String> for Schedule {
    type Error = ConditionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Schedule::parse(&s)
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> Self {
        s.to_string()
    }
}

/// Finite ranges for every quantifier plus the truncation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_n: usize,
    pub max_r: usize,
    pub max_k0: usize,
    pub max_p: usize,
    pub max_q: usize,
    pub max_k: usize,
    pub max_s: usize,
    pub max_l: usize,
    pub max_r2: usize,
    pub ladder: Ladder,
    pub divergence_ratio: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_n: 3,
            max_r: 3,
            max_k0: 3,
            max_p: 3,
            max_q: 3,
            max_k: 3,
            max_s: 3,
            max_l: 3,
            max_r2: 3,
            ladder: Ladder::new(vec![16, 64, 256]).expect("static ladder"),
            divergence_ratio: ladder::DEFAULT_DIVERGENCE_RATIO,
        }
    }
}

impl Budget {
    fn validate(&self) -> Result<(), ConditionError> {
        let all = [
            self.max_n,
            self.max_r,
            self.max_k0,
            self.max_p,
            self.max_q,
            self.max_k,
            self.max_s,
            self.max_l,
            self.max_r2,
        ];
        if all.contains(&0) {
            return Err(ConditionError::InvalidBudget(
                "all bounds must be positive".into(),
            ));
        }
        if self.divergence_ratio.is_nan() || self.divergence_ratio <= 1.0 {
            return Err(ConditionError::InvalidBudget(
                "divergence ratio must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

fn too_large(msg: String) -> ConditionError {
    ConditionError::BudgetTooLargeForTruncation(msg)
}

fn require_dims(m: &KoetheMatrix, which: &str, ladder: &Ladder) -> Result<(), ConditionError> {
    if ladder.largest() > m.dims() {
        return Err(too_large(alloc::format!(
            "largest rung {} exceeds the {} indices of {which}",
            ladder.largest(),
            m.dims()
        )));
    }
    Ok(())
}

fn require_levels(m: &KoetheMatrix, which: &str, needed: usize) -> Result<(), ConditionError> {
    if needed > m.levels() {
        return Err(too_large(alloc::format!(
            "{which} needs {needed} levels but has {}",
            m.levels()
        )));
    }
    Ok(())
}

/// `ln C(k₀)` for `k₀ = 1..=k0_max` in one pass over the `(v, i)` grid.
fn thm2_log_c_by_k0(
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    n_of_k: &[usize],
    n: usize,
    r: usize,
    truncation: usize,
) -> Vec<f64> {
    let k0_max = n_of_k.len();
    let lb_r = &b.log_row(r)[..truncation];
    let la_n = &a.log_row(n)[..truncation];
    let lb: Vec<&[f64]> = (1..=k0_max).map(|k| &b.log_row(k)[..truncation]).collect();
    let la: Vec<&[f64]> = n_of_k
        .iter()
        .map(|&nk| &a.log_row(nk)[..truncation])
        .collect();
    let mut out = vec![f64::NEG_INFINITY; k0_max];
    for v in 0..truncation {
        for i in 0..truncation {
            let lhs = lb_r[v] - la_n[i];
            let mut rhs = f64::NEG_INFINITY;
            for k in 0..k0_max {
                rhs = rhs.max(lb[k][v] - la[k][i]);
                let c = lhs - rhs;
                if c > out[k] {
                    out[k] = c;
                }
            }
        }
    }
    out
}

/// `ln` of the least `C` with `b_v^r / a_i^N ≤ C max_{k≤k₀} b_v^k / a_i^{N(k)}`
/// for all `v, i ≤ truncation`.
pub fn log_minimal_c_thm2(
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    schedule: &Schedule,
    n: usize,
    r: usize,
    k0: usize,
    truncation: usize,
) -> Result<f64, ConditionError> {
    check_index("k0", k0, b.levels())?;
    let n_of_k = schedule.values(k0)?;
    check_index("N(k0)", n_of_k[k0 - 1], a.levels())?;
    check_index("N", n, a.levels())?;
    check_index("r", r, b.levels())?;
    check_index("truncation", truncation, a.dims().min(b.dims()))?;
    Ok(thm2_log_c_by_k0(a, b, &n_of_k, n, r, truncation)[k0 - 1])
}

/// Least `C` for the bounded-pair inequality; see [`log_minimal_c_thm2`].
pub fn minimal_c_thm2(
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    schedule: &Schedule,
    n: usize,
    r: usize,
    k0: usize,
    truncation: usize,
) -> Result<f64, ConditionError> {
    log_minimal_c_thm2(a, b, schedule, n, r, k0, truncation).map(logmath::exp)
}

/// `ln` of the least `C` with
/// `b_m^s / a_n^k ≤ C max{b_m^q / a_n^p, b_m^r / a_n^l}` for all
/// `m, n ≤ truncation`.
#[allow(clippy::too_many_arguments)]
pub fn log_minimal_c_conds(
    b: &KoetheMatrix,
    a: &KoetheMatrix,
    p: usize,
    q: usize,
    k: usize,
    s: usize,
    l: usize,
    r: usize,
    truncation: usize,
) -> Result<f64, ConditionError> {
    for (what, v) in [("p", p), ("k", k), ("l", l)] {
        check_index(what, v, a.levels())?;
    }
    for (what, v) in [("q", q), ("s", s), ("r", r)] {
        check_index(what, v, b.levels())?;
    }
    check_index("truncation", truncation, a.dims().min(b.dims()))?;
    Ok(conds_log_c(b, a, [p, q, k, s, l, r], truncation))
}

fn conds_log_c(b: &KoetheMatrix, a: &KoetheMatrix, levels: [usize; 6], t: usize) -> f64 {
    let [p, q, k, s, l, r] = levels;
    let (bs, bq, br) = (&b.log_row(s)[..t], &b.log_row(q)[..t], &b.log_row(r)[..t]);
    let (ak, ap, al) = (&a.log_row(k)[..t], &a.log_row(p)[..t], &a.log_row(l)[..t]);
    let mut best = f64::NEG_INFINITY;
    for m in 0..t {
        for n in 0..t {
            let lhs = bs[m] - ak[n];
            let rhs = (bq[m] - ap[n]).max(br[m] - al[n]);
            let c = lhs - rhs;
            if c > best {
                best = c;
            }
        }
    }
    best
}

/// Least `C` for condition S; see [`log_minimal_c_conds`].
#[allow(clippy::too_many_arguments)]
pub fn minimal_c_conds(
    b: &KoetheMatrix,
    a: &KoetheMatrix,
    p: usize,
    q: usize,
    k: usize,
    s: usize,
    l: usize,
    r: usize,
    truncation: usize,
) -> Result<f64, ConditionError> {
    log_minimal_c_conds(b, a, p, q, k, s, l, r, truncation).map(logmath::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[serde(rename = "thm2_B")]
    Thm2B,
    #[serde(rename = "condition_S")]
    ConditionS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    HoldsStableC,
    DivergentC,
    Inconclusive,
}

/// A full quantifier assignment whose minimal `C` was tracked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "condition")]
pub enum Assignment {
    #[serde(rename = "thm2_B")]
    Thm2B {
        schedule: Schedule,
        n: usize,
        r: usize,
        k0: usize,
    },
    #[serde(rename = "condition_S")]
    ConditionS {
        p: usize,
        q: usize,
        k: usize,
        s: usize,
        l: usize,
        r: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub assignment: Assignment,
    /// `ln C` per ladder rung.
    #[serde(rename = "log_C", with = "crate::logmath::serde_log::vec")]
    pub log_c: Vec<f64>,
    pub growth: Growth,
    pub divergent: bool,
}

/// Stable choice of `k₀` for one `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RWitness {
    pub r: usize,
    pub k0: usize,
    #[serde(rename = "log_C", with = "crate::logmath::serde_log::vec")]
    pub log_c: Vec<f64>,
}

/// Stable choice of `r` for one `(s, l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlWitness {
    pub s: usize,
    pub l: usize,
    pub r: usize,
    #[serde(rename = "log_C", with = "crate::logmath::serde_log::vec")]
    pub log_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "condition")]
pub enum Witness {
    #[serde(rename = "thm2_B")]
    Thm2B {
        schedule: Schedule,
        n: usize,
        per_r: Vec<RWitness>,
    },
    #[serde(rename = "condition_S")]
    ConditionS {
        p: usize,
        q: usize,
        k: usize,
        per_sl: Vec<SlWitness>,
    },
}

/// The universal choice that defeats one existential choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refutation {
    /// The existential choice: `[N]` or `[q, k]`.
    pub choice: Vec<usize>,
    /// The universal branch diverging for all inner choices: `[r]` or `[s, l]`.
    pub branch: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "condition")]
pub enum Counterexample {
    #[serde(rename = "thm2_B")]
    Thm2B {
        schedule: Schedule,
        refutations: Vec<Refutation>,
    },
    #[serde(rename = "condition_S")]
    ConditionS {
        p: usize,
        refutations: Vec<Refutation>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub condition: Condition,
    pub status: Status,
    pub witnesses: Vec<Witness>,
    pub counterexample: Option<Counterexample>,
    pub branches: Vec<Branch>,
}

/// Outcome for one universally quantified branch after trying every inner
/// existential choice.
enum Inner {
    Stable(usize, Vec<f64>),
    AllDivergent,
    Unclear,
}

/// Growth of a C-ladder. Constants are clamped at `C = 1` first: when
/// `C = 1` works on every rung, movement below it is not growth.
fn classify_c(log_c: &[f64], ratio: f64) -> Growth {
    let clamped: Vec<f64> = log_c
        .iter()
        .map(|&c| if c < 0.0 { 0.0 } else { c })
        .collect();
    ladder::classify(&clamped, ratio)
}

/// Scans inner choices in order; the first stable one wins.
fn first_stable(
    ladders: Vec<(usize, Vec<f64>)>,
    ratio: f64,
    mut record: impl FnMut(usize, &[f64], Growth),
) -> Inner {
    let mut all_div = !ladders.is_empty();
    for (choice, values) in ladders {
        let g = classify_c(&values, ratio);
        record(choice, &values, g);
        match g {
            Growth::Stable => return Inner::Stable(choice, values),
            Growth::Divergent => {}
            Growth::Unclear => all_div = false,
        }
    }
    if all_div {
        Inner::AllDivergent
    } else {
        Inner::Unclear
    }
}

/// Ladder-based check of the bounded-pair characterization for
/// `(λ(A), λ(B))` against each schedule in `schedules`.
///
/// Witnesses are per schedule (least `N`, then least `k₀` per `r`).
/// `DIVERGENT_C` is reported when for some schedule every `N ≤ max_n` has an
/// `r` whose minimal `C` diverges for every `k₀ ≤ max_k0`.
pub fn check_bounded_pair(
    a: &KoetheMatrix,
    b: &KoetheMatrix,
    schedules: &[Schedule],
    budget: &Budget,
) -> Result<Verdict, ConditionError> {
    budget.validate()?;
    if schedules.is_empty() {
        return Err(ConditionError::InvalidBudget("no schedules given".into()));
    }
    require_dims(a, "A", &budget.ladder)?;
    require_dims(b, "B", &budget.ladder)?;
    require_levels(a, "A", budget.max_n)?;
    require_levels(b, "B", budget.max_r.max(budget.max_k0))?;
    let mut tables = Vec::with_capacity(schedules.len());
    for s in schedules {
        let n_of_k = s.values(budget.max_k0)?;
        require_levels(a, "A", n_of_k[budget.max_k0 - 1])?;
        tables.push(n_of_k);
    }

    let ratio = budget.divergence_ratio;
    let mut branches = Vec::new();
    let mut witnesses = Vec::new();
    let mut counterexample = None;
    let mut all_hold = true;

    for (schedule, n_of_k) in schedules.iter().zip(&tables) {
        let mut refutations = Vec::new();
        let mut witness = None;
        for n in 1..=budget.max_n {
            let mut per_r = Vec::new();
            let mut refuted_by = None;
            let mut all_stable = true;
            for r in 1..=budget.max_r {
                let by_rung: Vec<Vec<f64>> = budget
                    .ladder
                    .rungs()
                    .iter()
                    .map(|&t| thm2_log_c_by_k0(a, b, n_of_k, n, r, t))
                    .collect();
                let ladders = (1..=budget.max_k0)
                    .map(|k0| (k0, by_rung.iter().map(|row| row[k0 - 1]).collect()))
                    .collect();
                let outcome = first_stable(ladders, ratio, |k0, values, g| {
                    branches.push(Branch {
                        assignment: Assignment::Thm2B {
                            schedule: schedule.clone(),
                            n,
                            r,
                            k0,
                        },
                        log_c: values.to_vec(),
                        growth: g,
                        divergent: g == Growth::Divergent,
                    });
                });
                match outcome {
                    Inner::Stable(k0, log_c) => per_r.push(RWitness { r, k0, log_c }),
                    Inner::AllDivergent => {
                        all_stable = false;
                        refuted_by.get_or_insert(r);
                    }
                    Inner::Unclear => all_stable = false,
                }
            }
            if all_stable {
                witness = Some(Witness::Thm2B {
                    schedule: schedule.clone(),
                    n,
                    per_r,
                });
                break;
            }
            if let Some(r) = refuted_by {
                refutations.push(Refutation {
                    choice: vec![n],
                    branch: vec![r],
                });
            }
        }
        match witness {
            Some(w) => witnesses.push(w),
            None => {
                all_hold = false;
                if refutations.len() == budget.max_n && counterexample.is_none() {
                    counterexample = Some(Counterexample::Thm2B {
                        schedule: schedule.clone(),
                        refutations,
                    });
                }
            }
        }
    }

    let status = if counterexample.is_some() {
        Status::DivergentC
    } else if all_hold {
        Status::HoldsStableC
    } else {
        Status::Inconclusive
    };
    if status != Status::HoldsStableC {
        witnesses.clear();
    }
    Ok(Verdict {
        condition: Condition::Thm2B,
        status,
        witnesses,
        counterexample,
        branches,
    })
}

/// Ladder-based check of condition S for the pair `(λ(B), λ(A))`.
///
/// Existential choices are tried in order: `(q, k)` lexicographically, then
/// `r`. `DIVERGENT_C` is reported when some `p` defeats every `(q, k)` with
/// an `(s, l)` whose minimal `C` diverges for every `r`.
pub fn check_condition_s(
    b: &KoetheMatrix,
    a: &KoetheMatrix,
    budget: &Budget,
) -> Result<Verdict, ConditionError> {
    budget.validate()?;
    require_dims(a, "A", &budget.ladder)?;
    require_dims(b, "B", &budget.ladder)?;
    require_levels(a, "A", budget.max_p.max(budget.max_k).max(budget.max_l))?;
    require_levels(b, "B", budget.max_q.max(budget.max_s).max(budget.max_r2))?;

    let ratio = budget.divergence_ratio;
    let mut branches = Vec::new();
    let mut witnesses = Vec::new();
    let mut counterexample = None;
    let mut all_hold = true;

    for p in 1..=budget.max_p {
        let mut witness = None;
        let mut refutations = Vec::new();
        'qk: for q in 1..=budget.max_q {
            for k in 1..=budget.max_k {
                let mut per_sl = Vec::new();
                let mut all_stable = true;
                let mut refuted_by = None;
                for s in 1..=budget.max_s {
                    for l in 1..=budget.max_l {
                        let ladders = (1..=budget.max_r2)
                            .map(|r| {
                                let values = budget
                                    .ladder
                                    .rungs()
                                    .iter()
                                    .map(|&t| conds_log_c(b, a, [p, q, k, s, l, r], t))
                                    .collect();
                                (r, values)
                            })
                            .collect();
                        let outcome = first_stable(ladders, ratio, |r, values, g| {
                            branches.push(Branch {
                                assignment: Assignment::ConditionS { p, q, k, s, l, r },
                                log_c: values.to_vec(),
                                growth: g,
                                divergent: g == Growth::Divergent,
                            });
                        });
                        match outcome {
                            Inner::Stable(r, log_c) => per_sl.push(SlWitness { s, l, r, log_c }),
                            Inner::AllDivergent => {
                                all_stable = false;
                                refuted_by.get_or_insert((s, l));
                            }
                            Inner::Unclear => all_stable = false,
                        }
                    }
                }
                if all_stable {
                    witness = Some(Witness::ConditionS { p, q, k, per_sl });
                    break 'qk;
                }
                if let Some((s, l)) = refuted_by {
                    refutations.push(Refutation {
                        choice: vec![q, k],
                        branch: vec![s, l],
                    });
                }
            }
        }
        match witness {
            Some(w) => witnesses.push(w),
            None => {
                all_hold = false;
                if refutations.len() == budget.max_q * budget.max_k && counterexample.is_none() {
                    counterexample = Some(Counterexample::ConditionS { p, refutations });
                }
            }
        }
    }

    let status = if counterexample.is_some() {
        Status::DivergentC
    } else if all_hold {
        Status::HoldsStableC
    } else {
        Status::Inconclusive
    };
    if status != Status::HoldsStableC {
        witnesses.clear();
    }
    Ok(Verdict {
        condition: Condition::ConditionS,
        status,
        witnesses,
        counterexample,
        branches,
    })
}
