//! Köthe matrices and truncated ℓ-Köthe spaces.
//!
//! A Köthe matrix `A = (a_n^k)` is stored as `ln a_n^k` on a `K × N` grid,
//! levels `k` and indices `n` both 1-based. Entries must be positive and
//! nondecreasing in `k`; [`KoetheMatrix::build`] rejects anything else.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Formula;
use crate::logmath;
use crate::seqnorm::{self, NormError, NormSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `ln a_n^k` is not finite, i.e. the entry is not a positive real.
    NotPositive,
    /// `a_n^k > a_n^{k+1}`.
    DecreasingInLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub n: usize,
    pub k: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::NotPositive => write!(f, "(n={}, k={}) not positive", self.n, self.k),
            ViolationKind::DecreasingInLevel => {
                write!(f, "(n={}, k={}→{}) decreasing", self.n, self.k, self.k + 1)
            }
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    let mut out = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&alloc::format!("{x}"));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoetheError {
    #[error("{what} {value} out of range 1..={max}")]
    Index {
        what: &'static str,
        value: usize,
        max: usize,
    },
    #[error("matrix validation failed: {}", join_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("malformed matrix spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Norm(#[from] NormError),
}

fn index_check(what: &'static str, value: usize, max: usize) -> Result<(), KoetheError> {
    if value == 0 || value > max {
        return Err(KoetheError::Index { what, value, max });
    }
    Ok(())
}

/// The exponent sequence `α_n` of a power-series matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSpec {
    List(Vec<f64>),
    Rule(Formula),
}

impl AlphaSpec {
    fn values(&self, dims: usize) -> Result<Vec<f64>, KoetheError> {
        match self {
            AlphaSpec::List(list) => {
                if list.len() < dims {
                    return Err(KoetheError::Spec(alloc::format!(
                        "alpha list has {} entries, {dims} needed",
                        list.len()
                    )));
                }
                Ok(list[..dims].to_vec())
            }
            AlphaSpec::Rule(f) => Ok((1..=dims).map(|n| f.eval(0.0, n as f64)).collect()),
        }
    }
}

/// How a Köthe matrix is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KoetheMatrixSpec {
    /// Row-major `ln a_n^k`, `levels × dims`.
    Explicit {
        levels: usize,
        dims: usize,
        log_entries: Vec<f64>,
    },
    /// `ln a_n^k = k α_n`.
    PowerSeriesInfinite { alpha: AlphaSpec },
    /// `ln a_n^k = -α_n / k`.
    PowerSeriesFinite { alpha: AlphaSpec },
    /// `ln a_n^k` given directly as a formula in `k` and `n`.
    Expr { formula: Formula },
}

impl KoetheMatrixSpec {
    /// `ln a_n^k = k ln n`, i.e. `a_n^k = n^k`.
    pub fn polynomial() -> Self {
        KoetheMatrixSpec::Expr {
            formula: Formula::parse("k*ln(n)").expect("static formula"),
        }
    }

    /// All entries equal to one.
    pub fn constant() -> Self {
        KoetheMatrixSpec::Expr {
            formula: Formula::parse("0").expect("static formula"),
        }
    }

    fn log_grid(&self, levels: usize, dims: usize) -> Result<Vec<f64>, KoetheError> {
        let mut out = Vec::with_capacity(levels * dims);
        match self {
            KoetheMatrixSpec::Explicit {
                levels: l,
                dims: d,
                log_entries,
            } => {
                if log_entries.len() != l * d {
                    return Err(KoetheError::Spec(alloc::format!(
                        "explicit grid declares {l}x{d} but lists {} entries",
                        log_entries.len()
                    )));
                }
                if levels > *l || dims > *d {
                    return Err(KoetheError::Spec(alloc::format!(
                        "requested {levels}x{dims} from an explicit {l}x{d} grid"
                    )));
                }
                for k in 0..levels {
                    out.extend_from_slice(&log_entries[k * d..k * d + dims]);
                }
            }
            KoetheMatrixSpec::PowerSeriesInfinite { alpha } => {
                let a = alpha.values(dims)?;
                for k in 1..=levels {
                    out.extend(a.iter().map(|&x| k as f64 * x));
                }
            }
            KoetheMatrixSpec::PowerSeriesFinite { alpha } => {
                let a = alpha.values(dims)?;
                for k in 1..=levels {
                    out.extend(a.iter().map(|&x| -x / k as f64));
                }
            }
            KoetheMatrixSpec::Expr { formula } => {
                for k in 1..=levels {
                    out.extend((1..=dims).map(|n| formula.eval(k as f64, n as f64)));
                }
            }
        }
        Ok(out)
    }
}

/// A fully materialized `K × N` Köthe matrix in log-domain.
#[derive(Debug, Clone, PartialEq)]
pub struct KoetheMatrix {
    levels: usize,
    dims: usize,
    log: Vec<f64>,
    provenance: Option<KoetheMatrixSpec>,
}

impl KoetheMatrix {
    pub fn build(spec: &KoetheMatrixSpec, levels: usize, dims: usize) -> Result<Self, KoetheError> {
        if levels == 0 || dims == 0 {
            return Err(KoetheError::Spec(
                "levels and dims must be at least 1".into(),
            ));
        }
        let log = spec.log_grid(levels, dims)?;
        let m = KoetheMatrix {
            levels,
            dims,
            log,
            provenance: Some(spec.clone()),
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds from a row-major log grid with no generating spec attached.
    pub fn from_log_grid(levels: usize, dims: usize, log: Vec<f64>) -> Result<Self, KoetheError> {
        if levels == 0 || dims == 0 || log.len() != levels * dims {
            return Err(KoetheError::Spec(alloc::format!(
                "grid of {} entries does not match {levels}x{dims}",
                log.len()
            )));
        }
        let m = KoetheMatrix {
            levels,
            dims,
            log,
            provenance: None,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), KoetheError> {
        let mut bad = Vec::new();
        for k in 1..=self.levels {
            for n in 1..=self.dims {
                if !self.get(k, n).is_finite() {
                    bad.push(Violation {
                        n,
                        k,
                        kind: ViolationKind::NotPositive,
                    });
                }
            }
        }
        for k in 1..self.levels {
            for n in 1..=self.dims {
                let (lo, hi) = (self.get(k, n), self.get(k + 1, n));
                if lo.is_finite() && hi.is_finite() && lo > hi {
                    bad.push(Violation {
                        n,
                        k,
                        kind: ViolationKind::DecreasingInLevel,
                    });
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(KoetheError::ValidationFailed(bad))
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn provenance(&self) -> Option<&KoetheMatrixSpec> {
        self.provenance.as_ref()
    }

    /// Row-major `ln a_n^k`.
    pub fn log_grid(&self) -> &[f64] {
        &self.log
    }

    #[inline]
    fn get(&self, k: usize, n: usize) -> f64 {
        self.log[(k - 1) * self.dims + (n - 1)]
    }

    /// `ln a_n^k` exactly as stored.
    pub fn log_entry(&self, k: usize, n: usize) -> Result<f64, KoetheError> {
        index_check("level", k, self.levels)?;
        index_check("index", n, self.dims)?;
        Ok(self.get(k, n))
    }

    /// `(ln a_1^k, …, ln a_N^k)`.
    ///
    /// # Panics
    /// If `k` is not in `1..=levels`.
    pub fn log_row(&self, k: usize) -> &[f64] {
        assert!(k >= 1 && k <= self.levels, "level {k} out of range");
        &self.log[(k - 1) * self.dims..k * self.dims]
    }

    pub fn truncate(&self, levels: usize, dims: usize) -> Result<Self, KoetheError> {
        index_check("levels", levels, self.levels)?;
        index_check("dims", dims, self.dims)?;
        let mut log = Vec::with_capacity(levels * dims);
        for k in 1..=levels {
            log.extend_from_slice(&self.log_row(k)[..dims]);
        }
        Ok(KoetheMatrix {
            levels,
            dims,
            log,
            provenance: self.provenance.clone(),
        })
    }

    /// `ln ‖x‖_k = ln ‖(x_n a_n^k)‖`.
    pub fn log_seminorm(
        &self,
        norm: &NormSpec,
        x: &GradedVector,
        k: usize,
    ) -> Result<f64, KoetheError> {
        index_check("level", k, self.levels)?;
        if x.len() > self.dims {
            return Err(KoetheError::Index {
                what: "vector length",
                value: x.len(),
                max: self.dims,
            });
        }
        let row = self.log_row(k);
        let weighted: Vec<f64> = x
            .coeffs()
            .iter()
            .zip(row)
            .map(|(&c, &l)| logmath::log_abs(c) + l)
            .collect();
        Ok(seqnorm::norm_eval_log(norm, &weighted)?)
    }

    /// `‖x‖_k`, rescaled by the largest log-magnitude before exponentiating.
    pub fn seminorm(
        &self,
        norm: &NormSpec,
        x: &GradedVector,
        k: usize,
    ) -> Result<f64, KoetheError> {
        self.log_seminorm(norm, x, k).map(logmath::exp)
    }
}

/// A finitely supported sequence `(x_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradedVector(Vec<f64>);

impl GradedVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, KoetheError> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(KoetheError::Spec(alloc::format!(
                "coefficient {} is not finite",
                i + 1
            )));
        }
        Ok(GradedVector(coeffs))
    }

    pub fn zeros(len: usize) -> Self {
        GradedVector(vec![0.0; len])
    }

    /// The basis vector `e_n` (1-based) of length `len`.
    pub fn unit(n: usize, len: usize) -> Self {
        assert!(n >= 1 && n <= len, "basis index {n} outside 1..={len}");
        let mut v = vec![0.0; len];
        v[n - 1] = 1.0;
        GradedVector(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}
