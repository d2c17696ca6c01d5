//! Truncation ladders and growth classification.
//!
//! A finite grid always admits a finite constant, so boundedness questions
//! are answered by watching how a required constant evolves over increasing
//! truncations. Values are logs throughout.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logmath;

/// Default growth factor per rung that counts as divergence.
pub const DEFAULT_DIVERGENCE_RATIO: f64 = 1.5;

/// Rungs needed before a ladder may be called stable or divergent.
pub const MIN_RUNGS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LadderError {
    #[error("truncation ladder must be non-empty")]
    Empty,
    #[error("truncation ladder must be strictly increasing and positive, got {0:?}")]
    NotIncreasing(Vec<usize>),
}

/// Strictly increasing index truncations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ladder(Vec<usize>);

impl Ladder {
    pub fn new(rungs: Vec<usize>) -> Result<Self, LadderError> {
        if rungs.is_empty() {
            return Err(LadderError::Empty);
        }
        if rungs[0] == 0 || rungs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LadderError::NotIncreasing(rungs));
        }
        Ok(Ladder(rungs))
    }

    pub fn rungs(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn largest(&self) -> usize {
        *self.0.last().expect("ladder is non-empty")
    }
}

impl TryFrom<Vec<usize>> for Ladder {
    type Error = LadderError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Ladder::new(v)
    }
}

impl From<Ladder> for Vec<usize> {
    fn from(l: Ladder) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Last three rungs within the ratio of each other.
    Stable,
    /// Each of the last two steps grows by at least the ratio.
    Divergent,
    /// Neither, or fewer than three rungs.
    Unclear,
}

/// Classifies a sequence of log-values taken over increasing truncations.
///
/// `ratio` is a linear factor (`1.5` means 50% growth per step).
pub fn classify(log_values: &[f64], ratio: f64) -> Growth {
    if log_values.len() < MIN_RUNGS || log_values.iter().any(|v| v.is_nan()) {
        return Growth::Unclear;
    }
    let tail = &log_values[log_values.len() - MIN_RUNGS..];
    let log_ratio = logmath::ln(ratio);
    if tail.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Growth::Stable;
    }
    if tail.iter().any(|&v| !logmath::is_finite_log(v)) {
        // A blow-up past the finite limit on a later rung is divergence.
        let last = tail[MIN_RUNGS - 1];
        return if !logmath::is_finite_log(last) && last > 0.0 {
            Growth::Divergent
        } else {
            Growth::Unclear
        };
    }
    let steps_grow = tail
        .windows(2)
        .all(|w| w[1] - w[0] >= log_ratio - logmath::LOG_TOL);
    if steps_grow {
        return Growth::Divergent;
    }
    let hi = logmath::max_of(tail);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo < log_ratio {
        Growth::Stable
    } else {
        Growth::Unclear
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn logs(v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| logmath::ln(x)).collect()
    }

    #[test]
    fn ladder_validation() {
        assert!(Ladder::new(vec![16, 64, 256]).is_ok());
        assert_eq!(Ladder::new(vec![]), Err(LadderError::Empty));
        assert!(Ladder::new(vec![4, 4]).is_err());
        assert!(Ladder::new(vec![0, 4]).is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&logs(&[8.0, 64.0, 512.0]), 1.5), Growth::Divergent);
        assert_eq!(classify(&logs(&[1.0, 1.0, 1.0]), 1.5), Growth::Stable);
        assert_eq!(classify(&logs(&[1.0, 1.2, 1.3]), 1.5), Growth::Stable);
        assert_eq!(classify(&logs(&[1.0, 1.4, 2.0]), 1.5), Growth::Unclear);
        assert_eq!(classify(&logs(&[1.0, 2.0]), 1.5), Growth::Unclear);
        assert_eq!(
            classify(&logs(&[1.0, 1.0, 10.0, 100.0]), 1.5),
            Growth::Divergent
        );
        assert_eq!(classify(&[f64::NEG_INFINITY; 3], 1.5), Growth::Stable);
        assert_eq!(classify(&[1.0, 2.0, 800.0], 1.5), Growth::Divergent);
    }

    #[test]
    fn exact_ratio_counts_as_growth() {
        assert_eq!(classify(&logs(&[2.0, 3.0, 4.5]), 1.5), Growth::Divergent);
    }
}
