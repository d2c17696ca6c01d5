//! Log-domain helpers.
//!
//! Köthe matrix entries overflow `f64` at modest levels (`e^{k n}` for a
//! power series of infinite type), so everything downstream works with
//! natural logarithms and only exponentiates after rescaling by the maximum.

/// Absolute slack used when comparing log-domain quantities that are equal
/// in exact arithmetic.
pub const LOG_TOL: f64 = 1e-12;

/// Logs at or above this are treated as infinite (`ln(f64::MAX) ≈ 709.78`).
pub const LOG_FINITE_LIMIT: f64 = 690.0;

/// `ln 2`.
pub const LN_2: f64 = core::f64::consts::LN_2;

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// `true` when a log-value represents a finite, representable magnitude.
#[inline]
pub fn is_finite_log(v: f64) -> bool {
    v < LOG_FINITE_LIMIT && !v.is_nan()
}

/// Maximum of a slice, `-inf` when empty. NaN entries are ignored.
pub fn max_of(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, |acc, v| if v > acc { v } else { acc })
}

/// `(1/p) * ln Σ exp(p * l_i)`, the log of an `l_p` norm whose entries have
/// log-magnitudes `l_i`.
///
/// Computed as `L + ln(Σ exp(p (l_i - L))) / p` with `L = max l_i`, so a
/// single finite entry returns `L` bit-exactly.
pub fn log_lp(log_abs: &[f64], p: f64) -> f64 {
    let top = max_of(log_abs);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if top == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for &l in log_abs {
        if l == f64::NEG_INFINITY {
            continue;
        }
        sum += exp(p * (l - top));
    }
    top + ln(sum) / p
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + libm::log1p(exp(lo - hi))
}

/// Log-magnitude of a real coefficient (`-inf` for zero).
#[inline]
pub fn log_abs(x: f64) -> f64 {
    ln(x.abs())
}

/// Serde adapters for log-values that may be `±inf` or NaN.
///
/// Finite values go through as numbers; the rest as the strings `"inf"`,
/// `"-inf"` and `"nan"`, so that formats without non-finite floats (JSON)
/// still round-trip exactly. Use with `#[serde(with = "...")]`.
pub mod serde_log {
    use alloc::vec::Vec;
    use core::fmt;

    use serde::de::{self, Deserializer, SeqAccess, Visitor};
    use serde::ser::{SerializeSeq, Serializer};
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct LogVisitor;

    impl Visitor<'_> for LogVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(LogVisitor)
    }

    struct Wrapped(f64);

    impl Serialize for Wrapped {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            serialize(&self.0, s)
        }
    }

    impl<'de> Deserialize<'de> for Wrapped {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            deserialize(d).map(Wrapped)
        }
    }

    /// The same encoding for `Vec<f64>`.
    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&Wrapped(*x))?;
            }
            seq.end()
        }

        struct VecVisitor;

        impl<'de> Visitor<'de> for VecVisitor {
            type Value = Vec<f64>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a list of log-values")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(Wrapped(x)) = seq.next_element()? {
                    out.push(x);
                }
                Ok(out)
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            d.deserialize_seq(VecVisitor)
        }
    }
}
