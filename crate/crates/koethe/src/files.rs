//! TOML spec files for matrices and operators.
//!
//! A matrix file:
//!
//! ```toml
//! kind = "power_series_infinite"
//! levels = 4
//! dims = 256
//!
//! [alpha]
//! expr = "ln(n)"
//! ```
//!
//! `kind` is one of `explicit` (with `entries`, row-major `ln a_n^k`),
//! `power_series_infinite` / `power_series_finite` (with `alpha.expr` or
//! `alpha.list`), or `expr` (with `expr`, a formula in `k` and `n` giving
//! `ln a_n^k`).
//!
//! An operator file has `kind = "dense"` (`domain_dims`, `range_dims`,
//! `theta` as one row per domain index), `"rank_one"` (`i`, `v`, `scale`),
//! or `"quasi_diagonal"` (`pairs` of `[n, σ(n), m_n]`).

use std::fmt;
use std::path::{Path, PathBuf};

use koethe_core::expr::{ExprError, Formula};
use koethe_core::koethe::AlphaSpec;
use koethe_core::operators::{OpError, OperatorRep, QdEntry, QuasiDiagonal};
use koethe_core::{KoetheError, KoetheMatrix, KoetheMatrixSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(ParseError),
    #[error(transparent)]
    Koethe(#[from] KoetheError),
    #[error(transparent)]
    Operator(#[from] OpError),
}

/// A problem in a spec file, located by line and field where known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("parse error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, " in `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl From<ParseError> for SpecError {
    fn from(e: ParseError) -> Self {
        SpecError::Parse(e)
    }
}

fn field_error(field: &str, message: impl Into<String>) -> SpecError {
    SpecError::Parse(ParseError {
        line: None,
        field: Some(field.to_string()),
        message: message.into(),
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> SpecError {
    SpecError::Parse(ParseError {
        line: e.span().map(|s| line_of(text, s.start)),
        field: None,
        message: e.message().trim().to_string(),
    })
}

fn expr_error(field: &str, e: ExprError) -> SpecError {
    field_error(field, e.to_string())
}

fn read(path: &Path) -> Result<String, SpecError> {
    std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Explicit,
    PowerSeriesInfinite,
    PowerSeriesFinite,
    Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub kind: MatrixKind,
    pub levels: usize,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaFile>,
}

impl MatrixFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let file: MatrixFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
        file.spec()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, SpecError> {
        Self::parse(&read(path)?)
    }

    /// Canonical TOML text; parsing it gives back an equal value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("matrix files always serialize")
    }

    /// Digest of the canonical text, independent of formatting.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    /// The generating spec, with every field checked against `kind`.
    pub fn spec(&self) -> Result<KoetheMatrixSpec, SpecError> {
        if self.levels == 0 || self.dims == 0 {
            return Err(field_error("levels", "levels and dims must be at least 1"));
        }
        let unexpected = |name: &str, present: bool| {
            if present {
                Err(field_error(
                    name,
                    format!("not used by kind {:?}", self.kind),
                ))
            } else {
                Ok(())
            }
        };
        match self.kind {
            MatrixKind::Explicit => {
                unexpected("expr", self.expr.is_some())?;
                unexpected("alpha", self.alpha.is_some())?;
                let entries = self
                    .entries
                    .as_ref()
                    .ok_or_else(|| field_error("entries", "required for explicit matrices"))?;
                if entries.len() != self.levels * self.dims {
                    return Err(field_error(
                        "entries",
                        format!(
                            "{} entries listed, {} x {} = {} expected",
                            entries.len(),
                            self.levels,
                            self.dims,
                            self.levels * self.dims
                        ),
                    ));
                }
                Ok(KoetheMatrixSpec::Explicit {
                    levels: self.levels,
                    dims: self.dims,
                    log_entries: entries.clone(),
                })
            }
            MatrixKind::PowerSeriesInfinite | MatrixKind::PowerSeriesFinite => {
                unexpected("expr", self.expr.is_some())?;
                unexpected("entries", self.entries.is_some())?;
                let alpha = self
                    .alpha
                    .as_ref()
                    .ok_or_else(|| field_error("alpha", "alpha.expr or alpha.list is required"))?;
                let alpha = match (&alpha.expr, &alpha.list) {
                    (Some(e), None) => AlphaSpec::Rule(
                        Formula::parse_in_n(e).map_err(|e| expr_error("alpha.expr", e))?,
                    ),
                    (None, Some(list)) => {
                        if list.len() < self.dims {
                            return Err(field_error(
                                "alpha.list",
                                format!("{} values listed, {} needed", list.len(), self.dims),
                            ));
                        }
                        AlphaSpec::List(list.clone())
                    }
                    _ => {
                        return Err(field_error(
                            "alpha",
                            "give exactly one of alpha.expr and alpha.list",
                        ))
                    }
                };
                Ok(if self.kind == MatrixKind::PowerSeriesInfinite {
                    KoetheMatrixSpec::PowerSeriesInfinite { alpha }
                } else {
                    KoetheMatrixSpec::PowerSeriesFinite { alpha }
                })
            }
            MatrixKind::Expr => {
                unexpected("entries", self.entries.is_some())?;
                unexpected("alpha", self.alpha.is_some())?;
                let e = self
                    .expr
                    .as_ref()
                    .ok_or_else(|| field_error("expr", "required for expr matrices"))?;
                Ok(KoetheMatrixSpec::Expr {
                    formula: Formula::parse(e).map_err(|e| expr_error("expr", e))?,
                })
            }
        }
    }

    /// Materializes the matrix at the declared size.
    pub fn build(&self) -> Result<KoetheMatrix, SpecError> {
        Ok(KoetheMatrix::build(&self.spec()?, self.levels, self.dims)?)
    }

    /// The file describing `spec` at the given size.
    pub fn from_spec(spec: &KoetheMatrixSpec, levels: usize, dims: usize) -> Self {
        let mut file = MatrixFile {
            kind: MatrixKind::Expr,
            levels,
            dims,
            expr: None,
            entries: None,
            alpha: None,
        };
        let alpha_file = |a: &AlphaSpec| match a {
            AlphaSpec::List(l) => AlphaFile {
                expr: None,
                list: Some(l.clone()),
            },
            AlphaSpec::Rule(f) => AlphaFile {
                expr: Some(f.source().to_string()),
                list: None,
            },
        };
        match spec {
            KoetheMatrixSpec::Explicit { log_entries, .. } => {
                file.kind = MatrixKind::Explicit;
                file.entries = Some(log_entries.clone());
            }
            KoetheMatrixSpec::PowerSeriesInfinite { alpha } => {
                file.kind = MatrixKind::PowerSeriesInfinite;
                file.alpha = Some(alpha_file(alpha));
            }
            KoetheMatrixSpec::PowerSeriesFinite { alpha } => {
                file.kind = MatrixKind::PowerSeriesFinite;
                file.alpha = Some(alpha_file(alpha));
            }
            KoetheMatrixSpec::Expr { formula } => {
                file.expr = Some(formula.source().to_string());
            }
        }
        file
    }
}

/// Operator spec file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorFile {
    Dense {
        domain_dims: usize,
        range_dims: usize,
        theta: Vec<Vec<f64>>,
    },
    RankOne {
        i: usize,
        v: usize,
        scale: f64,
    },
    QuasiDiagonal {
        pairs: Vec<(usize, usize, f64)>,
    },
}

#[derive(Deserialize)]
struct KindOnly {
    kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseRaw {
    #[allow(dead_code)]
    kind: String,
    domain_dims: usize,
    range_dims: usize,
    theta: Vec<toml::Spanned<Vec<f64>>>,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankOneRaw {
    #[allow(dead_code)]
    kind: String,
    i: usize,
    v: usize,
    #[serde(default = "default_scale")]
    scale: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuasiDiagonalRaw {
    #[allow(dead_code)]
    kind: String,
    pairs: Vec<toml::Spanned<(usize, usize, f64)>>,
}

impl OperatorFile {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let head: KindOnly = toml::from_str::<toml::Table>(text)
            .map_err(|e| toml_error(text, e))
            .and_then(|t| {
                toml::Value::Table(t).try_into().map_err(|_| {
                    field_error(
                        "kind",
                        "missing; expected dense, rank_one or quasi_diagonal",
                    )
                })
            })?;
        let file = match head.kind.as_str() {
            "dense" => {
                let raw: DenseRaw = toml::from_str(text).map_err(|e| toml_error(text, e))?;
                if raw.theta.len() != raw.domain_dims {
                    return Err(field_error(
                        "theta",
                        format!(
                            "{} rows given, domain_dims = {}",
                            raw.theta.len(),
                            raw.domain_dims
                        ),
                    ));
                }
                for (i, row) in raw.theta.iter().enumerate() {
                    if row.get_ref().len() != raw.range_dims {
                        return Err(SpecError::Parse(ParseError {
                            line: Some(line_of(text, row.span().start)),
                            field: Some(format!("theta row {}", i + 1)),
                            message: format!(
                                "row has {} entries, range_dims = {}",
                                row.get_ref().len(),
                                raw.range_dims
                            ),
                        }));
                    }
                }
                OperatorFile::Dense {
                    domain_dims: raw.domain_dims,
                    range_dims: raw.range_dims,
                    theta: raw.theta.into_iter().map(|r| r.into_inner()).collect(),
                }
            }
            "rank_one" => {
                let raw: RankOneRaw = toml::from_str(text).map_err(|e| toml_error(text, e))?;
                OperatorFile::RankOne {
                    i: raw.i,
                    v: raw.v,
                    scale: raw.scale,
                }
            }
            "quasi_diagonal" => {
                let raw: QuasiDiagonalRaw =
                    toml::from_str(text).map_err(|e| toml_error(text, e))?;
                for (i, p) in raw.pairs.iter().enumerate() {
                    let (n, s, _) = *p.get_ref();
                    if n == 0 || s == 0 {
                        return Err(SpecError::Parse(ParseError {
                            line: Some(line_of(text, p.span().start)),
                            field: Some(format!("pairs entry {}", i + 1)),
                            message: "indices are 1-based".into(),
                        }));
                    }
                }
                OperatorFile::QuasiDiagonal {
                    pairs: raw.pairs.into_iter().map(|p| p.into_inner()).collect(),
                }
            }
            other => {
                return Err(field_error(
                    "kind",
                    format!("unknown operator kind `{other}`"),
                ))
            }
        };
        file.operator()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self, SpecError> {
        Self::parse(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("operator files always serialize")
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn operator(&self) -> Result<OperatorRep, SpecError> {
        Ok(match self {
            OperatorFile::Dense {
                domain_dims,
                range_dims,
                theta,
            } => OperatorRep::dense(*domain_dims, *range_dims, theta.concat())?,
            OperatorFile::RankOne { i, v, scale } => OperatorRep::rank_one(*i, *v, *scale)?,
            OperatorFile::QuasiDiagonal { pairs } => {
                let entries = pairs
                    .iter()
                    .map(|&(n, target, m)| QdEntry { n, target, m })
                    .collect();
                OperatorRep::quasi_diagonal(QuasiDiagonal::new(entries)?)
            }
        })
    }

    pub fn from_operator(t: &OperatorRep) -> Self {
        match t {
            OperatorRep::Dense {
                domain_dims,
                range_dims,
                theta,
            } => OperatorFile::Dense {
                domain_dims: *domain_dims,
                range_dims: *range_dims,
                theta: theta
                    .chunks(*range_dims.max(&1))
                    .map(<[f64]>::to_vec)
                    .collect(),
            },
            OperatorRep::RankOne { i, v, scale } => OperatorFile::RankOne {
                i: *i,
                v: *v,
                scale: *scale,
            },
            OperatorRep::QuasiDiagonal { map } => OperatorFile::QuasiDiagonal {
                pairs: map.entries().iter().map(|e| (e.n, e.target, e.m)).collect(),
            },
        }
    }
}
