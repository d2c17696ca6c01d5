//! Monotone Banach sequence norms on finite truncations.
//!
//! Every norm here is normalized on the canonical basis (`‖e_n‖ = 1`) and
//! monotone: `|x_n| ≤ |y_n|` for all `n` implies `‖x‖ ≤ ‖y‖`. Non-monotone
//! norms enter only through [`NormSpec::Monotonized`], which replaces the
//! base norm by the supremum over sign flips of its coordinates.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::logmath;

/// Largest dimension for which sign patterns are enumerated exhaustively.
pub const SIGN_ENUMERATION_CAP: usize = 16;

const AXIOM_TOL: f64 = 1e-10;
const MONOTONE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("dimension {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("custom norm `{name}` rejected: {reason}")]
    InvalidNorm { name: String, reason: String },
}

type Evaluator = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A user-supplied norm on `R^d`, `d ≤ dim_cap`.
///
/// Construction samples the norm axioms and rejects evaluators that are not
/// normalized on the canonical basis.
#[derive(Clone)]
pub struct CustomNorm {
    name: String,
    dim_cap: usize,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for CustomNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNorm")
            .field("name", &self.name)
            .field("dim_cap", &self.dim_cap)
            .finish_non_exhaustive()
    }
}

impl CustomNorm {
    pub fn new<F>(name: impl Into<String>, dim_cap: usize, eval: F) -> Result<Self, NormError>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let norm = CustomNorm {
            name: name.into(),
            dim_cap,
            eval: Arc::new(eval),
        };
        norm.validate()?;
        Ok(norm)
    }

    /// Wraps a built-in norm, e.g. to feed `l_p` through [`monotonize`].
    pub fn from_spec(spec: NormSpec, dim_cap: usize) -> Self {
        let name = alloc::format!("{spec}");
        CustomNorm {
            name,
            dim_cap,
            eval: Arc::new(move |x: &[f64]| norm_eval(&spec, x).unwrap_or(f64::NAN)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_cap(&self) -> usize {
        self.dim_cap
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, NormError> {
        if x.len() > self.dim_cap {
            return Err(NormError::CapExceeded {
                dim: x.len(),
                cap: self.dim_cap,
            });
        }
        check_finite(x)?;
        Ok((self.eval)(x))
    }

    fn reject(&self, reason: impl Into<String>) -> NormError {
        NormError::InvalidNorm {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    fn validate(&self) -> Result<(), NormError> {
        if self.dim_cap == 0 {
            return Err(self.reject("dimension cap must be positive"));
        }
        let dim = self.dim_cap.min(8);
        let zero = vec![0.0; dim];
        if (self.eval)(&zero) != 0.0 {
            return Err(self.reject("nonzero value at the zero vector"));
        }
        for n in 0..self.dim_cap.min(SIGN_ENUMERATION_CAP) {
            let mut e = vec![0.0; n + 1];
            e[n] = 1.0;
            let v = (self.eval)(&e);
            if (v - 1.0).abs() > MONOTONE_TOL {
                return Err(self.reject(alloc::format!(
                    "not normalized on the canonical basis: |e_{}| = {v}",
                    n + 1
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x6b6f_7468);
        for _ in 0..64 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c: f64 = rng.random_range(-3.0..3.0);
            let nx = (self.eval)(&x);
            let ny = (self.eval)(&y);
            if !(nx > 0.0 && nx.is_finite()) {
                return Err(self.reject("non-positive or non-finite value at a nonzero vector"));
            }
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let ncx = (self.eval)(&cx);
            if (ncx - c.abs() * nx).abs() > AXIOM_TOL * (1.0 + c.abs() * nx) {
                return Err(self.reject("homogeneity fails on a sampled vector"));
            }
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            if (self.eval)(&sum) > nx + ny + AXIOM_TOL * (1.0 + nx + ny) {
                return Err(self.reject("triangle inequality fails on a sampled pair"));
            }
        }
        Ok(())
    }
}

/// Which monotone norm is in force.
#[derive(Debug, Clone)]
pub enum NormSpec {
    /// `l_p`, `1 ≤ p < ∞`.
    Lp(f64),
    /// `c_0`, i.e. the sup norm on truncations.
    C0,
    /// Sign-flip monotonization of a custom norm.
    Monotonized(CustomNorm),
}

impl NormSpec {
    pub fn lp(p: f64) -> Result<Self, NormError> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(NormError::InvalidInput(alloc::format!(
                "l_p requires 1 <= p < inf, got {p}"
            )));
        }
        Ok(NormSpec::Lp(p))
    }

    /// Largest dimension this norm evaluates.
    pub fn dim_cap(&self) -> usize {
        match self {
            NormSpec::Lp(_) | NormSpec::C0 => usize::MAX,
            NormSpec::Monotonized(base) => base.dim_cap.min(SIGN_ENUMERATION_CAP),
        }
    }

    /// `l_p` and `c_0` are invariant under coordinate permutations.
    pub fn is_symmetric(&self) -> bool {
        matches!(self, NormSpec::Lp(_) | NormSpec::C0)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Lp(p) => write!(f, "l{p}"),
            NormSpec::C0 => f.write_str("c0"),
            NormSpec::Monotonized(base) => write!(f, "mono({})", base.name),
        }
    }
}

fn check_finite(x: &[f64]) -> Result<(), NormError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(NormError::InvalidInput(alloc::format!(
            "non-finite entry at position {}",
            i + 1
        ))),
        None => Ok(()),
    }
}

fn check_cap(norm: &NormSpec, dim: usize) -> Result<(), NormError> {
    let cap = norm.dim_cap();
    if dim > cap {
        return Err(NormError::CapExceeded { dim, cap });
    }
    Ok(())
}

/// `‖x‖` under `norm`.
pub fn norm_eval(norm: &NormSpec, x: &[f64]) -> Result<f64, NormError> {
    check_cap(norm, x.len())?;
    check_finite(x)?;
    Ok(match norm {
        NormSpec::Lp(p) => lp_linear(x, *p),
        NormSpec::C0 => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormSpec::Monotonized(base) => sign_sup(base, x),
    })
}

fn lp_linear(x: &[f64], p: f64) -> f64 {
    let direct = if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        libm::sqrt(x.iter().map(|v| v * v).sum())
    } else {
        libm::pow(x.iter().map(|v| libm::pow(v.abs(), p)).sum(), 1.0 / p)
    };
    let any_nonzero = x.iter().any(|&v| v != 0.0);
    if direct.is_finite() && (direct > 0.0 || !any_nonzero) {
        direct
    } else {
        let logs: Vec<f64> = x.iter().map(|&v| logmath::log_abs(v)).collect();
        logmath::exp(logmath::log_lp(&logs, p))
    }
}

/// `ln ‖x‖` for a vector given by the log-magnitudes of its entries
/// (`-inf` marks a zero coordinate).
///
/// All norms handled here are monotone, hence depend only on `|x_n|`, which
/// is what makes a sign-free log representation sufficient.
pub fn norm_eval_log(norm: &NormSpec, log_abs: &[f64]) -> Result<f64, NormError> {
    check_cap(norm, log_abs.len())?;
    if let Some(i) = log_abs
        .iter()
        .position(|v| v.is_nan() || *v == f64::INFINITY)
    {
        return Err(NormError::InvalidInput(alloc::format!(
            "invalid log-magnitude at position {}",
            i + 1
        )));
    }
    Ok(match norm {
        NormSpec::Lp(p) => logmath::log_lp(log_abs, *p),
        NormSpec::C0 => logmath::max_of(log_abs),
        NormSpec::Monotonized(base) => {
            let top = logmath::max_of(log_abs);
            if top == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            let scaled: Vec<f64> = log_abs.iter().map(|&l| logmath::exp(l - top)).collect();
            top + logmath::ln(sign_sup(base, &scaled))
        }
    })
}

fn sign_sup(base: &CustomNorm, x: &[f64]) -> f64 {
    let d = x.len();
    let mut flipped = x.to_vec();
    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << d) {
        for (i, (f, v)) in flipped.iter_mut().zip(x).enumerate() {
            *f = if mask & (1 << i) != 0 { -*v } else { *v };
        }
        let value = (base.eval)(&flipped);
        if value > best {
            best = value;
        }
    }
    best
}

/// `sup_{β ∈ {±1}^d} base(β ⊙ x)`, the monotonization of `base` at `x`.
///
/// For real scalars the supremum over `|β_n| ≤ 1` is attained at a vertex of
/// the cube because a norm is convex, so enumerating sign patterns is exact.
pub fn monotonize(base: &CustomNorm, x: &[f64]) -> Result<f64, NormError> {
    let cap = base.dim_cap.min(SIGN_ENUMERATION_CAP);
    if x.len() > cap {
        return Err(NormError::CapExceeded { dim: x.len(), cap });
    }
    check_finite(x)?;
    Ok(sign_sup(base, x))
}

/// Dual norm of the `i`-th coordinate functional (1-based) on the weighted
/// space `{x : ‖(x_n w_n)‖ < ∞}`, which is `1 / w_i` for every monotone norm
/// normalized on the basis.
pub fn dual_coord_norm(norm: &NormSpec, weights: &[f64], i: usize) -> Result<f64, NormError> {
    if i == 0 || i > weights.len() {
        return Err(NormError::InvalidInput(alloc::format!(
            "coordinate {i} outside 1..={}",
            weights.len()
        )));
    }
    check_cap(norm, weights.len())?;
    if let Some(j) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(NormError::InvalidInput(alloc::format!(
            "weight at position {} is not positive",
            j + 1
        )));
    }
    Ok(1.0 / weights[i - 1])
}

/// First dominated pair `|x_n| ≤ |y_n|` with `‖x‖ > ‖y‖ + 1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneViolation {
    pub trial: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub norm_x: f64,
    pub norm_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonotoneCheck {
    Pass { trials: usize },
    Violated(MonotoneViolation),
}

impl MonotoneCheck {
    pub fn passed(&self) -> bool {
        matches!(self, MonotoneCheck::Pass { .. })
    }
}

/// Samples `trials` coordinatewise-dominated pairs and reports the first
/// violation of monotonicity. Deterministic in `seed`.
pub fn check_monotone(
    norm: &NormSpec,
    trials: usize,
    dim: usize,
    seed: u64,
) -> Result<MonotoneCheck, NormError> {
    check_cap(norm, dim)?;
    sample_dominated_pairs(|x| norm_eval(norm, x), trials, dim, seed)
}

pub(crate) fn sample_dominated_pairs<F>(
    mut eval: F,
    trials: usize,
    dim: usize,
    seed: u64,
) -> Result<MonotoneCheck, NormError>
where
    F: FnMut(&[f64]) -> Result<f64, NormError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    for trial in 0..trials {
        let scale = logmath::exp(rng.random_range(-3.0..3.0));
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            *yi = scale * rng.random_range(-1.0..1.0);
            // Shrink, keep, or zero the dominated coordinate; flip its sign at random.
            let shrink: f64 = match rng.random_range(0..4u8) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            };
            let sign = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
            *xi = sign * shrink * *yi;
        }
        let norm_x = eval(&x)?;
        let norm_y = eval(&y)?;
        if norm_x > norm_y + MONOTONE_TOL {
            return Ok(MonotoneCheck::Violated(MonotoneViolation {
                trial,
                x: x.clone(),
                y: y.clone(),
                norm_x,
                norm_y,
            }));
        }
    }
    Ok(MonotoneCheck::Pass { trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew() -> CustomNorm {
        CustomNorm::new("skew", 2, |x: &[f64]| {
            let a = x.first().copied().unwrap_or(0.0);
            let b = x.get(1).copied().unwrap_or(0.0);
            (a + b).abs().max(a.abs())
        })
        .unwrap()
    }

    #[test]
    fn builtin_values() {
        assert_eq!(norm_eval(&NormSpec::Lp(2.0), &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(
            norm_eval(&NormSpec::Lp(1.0), &[1.0, -2.0, 3.0]).unwrap(),
            6.0
        );
        assert_eq!(norm_eval(&NormSpec::C0, &[1.0, -2.0, 3.0]).unwrap(), 3.0);
    }

    #[test]
    fn lp_survives_extreme_magnitudes() {
        let v = norm_eval(&NormSpec::Lp(2.0), &[1e200, 1e200]).unwrap();
        assert!((v / (1e200 * core::f64::consts::SQRT_2) - 1.0).abs() < 1e-12);
        let w = norm_eval(&NormSpec::Lp(3.0), &[1e-200, 0.0]).unwrap();
        assert!((w / 1e-200 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            norm_eval(&NormSpec::C0, &[1.0, f64::NAN]),
            Err(NormError::InvalidInput(_))
        ));
        assert!(NormSpec::lp(0.5).is_err());
        let mono = NormSpec::Monotonized(skew());
        assert_eq!(
            norm_eval(&mono, &[1.0, 2.0, 3.0]),
            Err(NormError::CapExceeded { dim: 3, cap: 2 })
        );
    }

    #[test]
    fn monotonize_examples() {
        let l1 = CustomNorm::from_spec(NormSpec::Lp(1.0), 8);
        assert_eq!(monotonize(&l1, &[1.0, -2.0, 3.0]).unwrap(), 6.0);
        // All four sign patterns of (1, -1): max(|β1 - β2|, 1) peaks at 2.
        assert_eq!(monotonize(&skew(), &[1.0, -1.0]).unwrap(), 2.0);
        assert_eq!(monotonize(&skew(), &[0.0, 0.0]).unwrap(), 0.0);
        let wide = CustomNorm::from_spec(NormSpec::C0, 40);
        assert_eq!(
            monotonize(&wide, &[0.0; 17]),
            Err(NormError::CapExceeded { dim: 17, cap: 16 })
        );
    }

    #[test]
    fn skew_norm_is_not_monotone_but_its_monotonization_is() {
        let raw = skew();
        // (1, 1) is dominated in modulus by (1, -1) yet has the larger raw norm.
        assert_eq!(raw.eval(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(raw.eval(&[1.0, -1.0]).unwrap(), 1.0);
        let violation = sample_dominated_pairs(|x| raw.eval(x), 1000, 2, 1).unwrap();
        assert!(!violation.passed());
        let check = check_monotone(&NormSpec::Monotonized(raw), 1000, 2, 1).unwrap();
        assert!(check.passed());
    }

    #[test]
    fn check_monotone_builtins() {
        assert!(check_monotone(&NormSpec::Lp(1.0), 1000, 8, 1)
            .unwrap()
            .passed());
        assert!(check_monotone(&NormSpec::C0, 1000, 8, 1).unwrap().passed());
        assert!(check_monotone(&NormSpec::Lp(2.0), 1000, 8, 1)
            .unwrap()
            .passed());
    }

    #[test]
    fn custom_norm_registration_checks() {
        let unnormalized = CustomNorm::new("twice-l1", 4, |x: &[f64]| {
            2.0 * x.iter().map(|v| v.abs()).sum::<f64>()
        });
        assert!(matches!(unnormalized, Err(NormError::InvalidNorm { .. })));
        let not_homogeneous =
            CustomNorm::new("sq", 4, |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>());
        assert!(matches!(
            not_homogeneous,
            Err(NormError::InvalidNorm { .. })
        ));
    }

    #[test]
    fn dual_coordinate_norm() {
        let w = [1.0, 3.0, 4.0];
        assert_eq!(dual_coord_norm(&NormSpec::Lp(1.0), &w, 3).unwrap(), 0.25);
        assert_eq!(
            dual_coord_norm(&NormSpec::Lp(2.0), &[1.0; 4], 2).unwrap(),
            1.0
        );
        assert_eq!(dual_coord_norm(&NormSpec::C0, &[5.0, 2.0], 2).unwrap(), 0.5);
        assert!(dual_coord_norm(&NormSpec::C0, &[1.0, 0.0], 1).is_err());
        assert!(dual_coord_norm(&NormSpec::C0, &[1.0, 1.0], 0).is_err());
    }

    #[test]
    fn log_eval_agrees_with_linear() {
        let x = [0.5, -2.0, 0.0, 7.0];
        let logs: Vec<f64> = x.iter().map(|&v| logmath::log_abs(v)).collect();
        for norm in [
            NormSpec::Lp(1.0),
            NormSpec::Lp(2.5),
            NormSpec::C0,
            NormSpec::Monotonized(CustomNorm::from_spec(NormSpec::Lp(3.0), 4)),
        ] {
            let lin = norm_eval(&norm, &x).unwrap();
            let log = norm_eval_log(&norm, &logs).unwrap();
            assert!((logmath::exp(log) / lin - 1.0).abs() < 1e-12, "{norm}");
        }
    }
}
