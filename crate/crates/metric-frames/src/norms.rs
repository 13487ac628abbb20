//! Sequence-space norms on finite coefficient vectors, with certified
//! truncation tails for the closed-form families.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Norm exponent: a finite `p > 0` or the sup norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

/// The sequence norm `(sum |v_n|^p)^(1/p)` (or `max |v_n|` at
/// `p = infinity`) applied to analysis vectors.
///
/// `p < 1` gives a quasi-norm: admitted for bound computation, refused by
/// every operation that needs the triangle inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceNormSpec {
    p: Exponent,
    quasi_flag: bool,
}

impl SequenceNormSpec {
    /// Finite exponent; errors unless `0 < p < infinity`.
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::Domain(format!(
                "norm exponent {p} must be positive and finite (use infinity() for the sup norm)"
            )));
        }
        Ok(Self {
            p: Exponent::Finite(p),
            quasi_flag: p < 1.0,
        })
    }

    /// The sup norm.
    pub fn infinity() -> Self {
        Self {
            p: Exponent::Infinity,
            quasi_flag: false,
        }
    }

    pub fn p(&self) -> Exponent {
        self.p
    }

    /// True iff `p < 1`, where the triangle inequality fails.
    pub fn is_quasi(&self) -> bool {
        self.quasi_flag
    }

    /// Errors with [`Error::QuasiNorm`] when `p < 1`, for operations that
    /// rest on Minkowski's inequality.
    pub fn require_triangle(&self) -> Result<()> {
        match self.p {
            Exponent::Finite(p) if self.quasi_flag => Err(Error::QuasiNorm(p)),
            _ => Ok(()),
        }
    }

    /// Conjugate exponent `q = p / (p - 1)`; errors unless `1 < p < infinity`.
    pub fn conjugate(&self) -> Result<f64> {
        match self.p {
            Exponent::Finite(p) if p > 1.0 => Ok(p / (p - 1.0)),
            Exponent::Finite(p) => Err(Error::Domain(format!(
                "conjugate exponent needs p > 1, got {p}"
            ))),
            Exponent::Infinity => Err(Error::Domain(
                "conjugate exponent needs finite p > 1, got infinity".into(),
            )),
        }
    }
}

impl Serialize for SequenceNormSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("SequenceNormSpec", 1)?;
        match self.p {
            Exponent::Finite(p) => s.serialize_field("p", &p)?,
            Exponent::Infinity => s.serialize_field("p", "inf")?,
        }
        s.end()
    }
}

impl<'de> Deserialize<'de> for SequenceNormSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            p: serde_json::Value,
        }
        let raw = Raw::deserialize(deserializer)?;
        match raw.p {
            serde_json::Value::Number(n) => {
                let p = n
                    .as_f64()
                    .ok_or_else(|| D::Error::custom("norm exponent is not representable"))?;
                SequenceNormSpec::new(p).map_err(D::Error::custom)
            }
            serde_json::Value::String(s) if s == "inf" => Ok(SequenceNormSpec::infinity()),
            other => Err(D::Error::custom(format!(
                "norm exponent must be a positive number or \"inf\", got {other}"
            ))),
        }
    }
}

/// Evaluates the sequence norm of `v` under `spec`. Empty vectors have
/// norm 0.
///
/// Finite-p sums are scaled by the largest magnitude and accumulated in
/// descending order, so extreme exponents neither overflow nor lose the
/// dominant term.
pub fn seq_norm(v: &[f64], spec: &SequenceNormSpec) -> f64 {
    match spec.p {
        Exponent::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        Exponent::Finite(p) => {
            let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let mut scaled: Vec<f64> = v
                .iter()
                .map(|x| x.abs() / m)
                .filter(|&x| x > 0.0)
                .collect();
            scaled.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            let sum: f64 = if p == 1.0 {
                scaled.iter().sum()
            } else if p == 2.0 {
                scaled.iter().map(|x| x * x).sum()
            } else {
                scaled.iter().map(|x| x.powf(p)).sum()
            };
            if p == 1.0 {
                m * sum
            } else {
                m * sum.powf(1.0 / p)
            }
        }
    }
}

/// Closed-form family whose truncation tail is certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Log,
    Geometric,
}

/// Upper bound on the mass the truncation at `N` throws away:
/// `sum_{n > N} sup_{x,y in [c,d]} |f_n(x) - f_n(y)| <= eps`.
///
/// For the log family each dropped sup is at most `(log d)^n / n!` and the
/// remainder is summed term by term ascending from `n = N + 1` (computing
/// it as `d` minus a partial sum would cancel to zero for deep
/// truncations). For the geometric family the remainder is
/// `r^(N+1) / (1 - r)` with `r = 1 - 1/d`.
pub fn tail_bound(family: FamilyKind, interval: (f64, f64), truncation: usize) -> Result<f64> {
    let (c, d) = interval;
    if !(c.is_finite() && d.is_finite()) || c > d {
        return Err(Error::Domain(format!(
            "interval [{c}, {d}] is not a finite interval"
        )));
    }
    match family {
        FamilyKind::Log => {
            if c <= 1.0 {
                return Err(Error::Domain(format!(
                    "log family needs [c, d] within (1, inf), got c = {c}"
                )));
            }
            Ok(exp_series_remainder(d.ln(), truncation))
        }
        FamilyKind::Geometric => {
            if c < 1.0 {
                return Err(Error::Domain(format!(
                    "geometric family needs [c, d] within [1, inf), got c = {c}"
                )));
            }
            let r = 1.0 - 1.0 / d;
            Ok(r.powf(truncation as f64 + 1.0) / (1.0 - r))
        }
    }
}

/// `sum_{n > truncation} x^n / n!`, summed ascending until terms vanish.
fn exp_series_remainder(x: f64, truncation: usize) -> f64 {
    let mut term = 1.0;
    for n in 1..=truncation + 1 {
        term *= x / n as f64;
    }
    let mut sum = 0.0;
    let mut n = truncation + 1;
    while term > 0.0 && (sum == 0.0 || term > sum * 1e-20) {
        sum += term;
        n += 1;
        term *= x / n as f64;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{geometric_term, log_term};
    use proptest::prelude::*;

    const EXACT: f64 = 1e-12;

    #[test]
    fn euclidean_three_four() {
        assert_eq!(seq_norm(&[3.0, 4.0], &SequenceNormSpec::new(2.0).unwrap()), 5.0);
    }

    #[test]
    fn sup_norm_takes_magnitudes() {
        assert_eq!(seq_norm(&[1.0, -2.0, 3.0], &SequenceNormSpec::infinity()), 3.0);
    }

    #[test]
    fn quasi_norm_half() {
        let spec = SequenceNormSpec::new(0.5).unwrap();
        assert!(spec.is_quasi());
        assert!((seq_norm(&[1.0, 1.0, 1.0, 1.0], &spec) - 16.0).abs() < EXACT);
    }

    #[test]
    fn empty_vector_has_zero_norm() {
        assert_eq!(seq_norm(&[], &SequenceNormSpec::new(1.0).unwrap()), 0.0);
        assert_eq!(seq_norm(&[], &SequenceNormSpec::infinity()), 0.0);
    }

    #[test]
    fn bad_exponents_rejected() {
        assert!(SequenceNormSpec::new(0.0).is_err());
        assert!(SequenceNormSpec::new(-2.0).is_err());
        assert!(SequenceNormSpec::new(f64::INFINITY).is_err());
    }

    #[test]
    fn conjugate_exponents() {
        assert_eq!(SequenceNormSpec::new(2.0).unwrap().conjugate().unwrap(), 2.0);
        assert!((SequenceNormSpec::new(1.5).unwrap().conjugate().unwrap() - 3.0).abs() < EXACT);
        assert!(SequenceNormSpec::new(1.0).unwrap().conjugate().is_err());
        assert!(SequenceNormSpec::infinity().conjugate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = SequenceNormSpec::new(1.5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"p":1.5}"#);
        let back: SequenceNormSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);

        let inf = SequenceNormSpec::infinity();
        let json = serde_json::to_string(&inf).unwrap();
        assert_eq!(json, r#"{"p":"inf"}"#);
        let back: SequenceNormSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, inf);

        assert!(serde_json::from_str::<SequenceNormSpec>(r#"{"p":-1.0}"#).is_err());
        assert!(serde_json::from_str::<SequenceNormSpec>(r#"{"p":"sup"}"#).is_err());
    }

    #[test]
    fn log_tail_values() {
        // Dropping every nonconstant term of the log family on [2,3] leaves
        // e^{log 3} - 1; keeping one more term subtracts log 3.
        let e0 = tail_bound(FamilyKind::Log, (2.0, 3.0), 0).unwrap();
        assert!((e0 - 2.0).abs() < EXACT);
        let e1 = tail_bound(FamilyKind::Log, (2.0, 3.0), 1).unwrap();
        assert!((e1 - (2.0 - 3.0_f64.ln())).abs() < EXACT);
    }

    #[test]
    fn log_tail_reaches_1e12() {
        // (log e)^{N+1}/(N+1)! * e < 1e-12 at N = 14: remainder must be below.
        let eps = tail_bound(FamilyKind::Log, (2.0, std::f64::consts::E), 14).unwrap();
        assert!(eps <= 1e-12, "eps = {eps}");
        assert!(eps > 0.0);
    }

    #[test]
    fn geometric_tail_at_d_one_vanishes() {
        for n in [0, 1, 7] {
            assert_eq!(tail_bound(FamilyKind::Geometric, (1.0, 1.0), n).unwrap(), 0.0);
        }
    }

    #[test]
    fn geometric_tail_formula() {
        // r = 1 - 1/5 = 0.8: eps(N) = 0.8^{N+1} * 5
        let eps = tail_bound(FamilyKind::Geometric, (1.0, 5.0), 3).unwrap();
        assert!((eps - 0.8_f64.powi(4) * 5.0).abs() < EXACT);
    }

    #[test]
    fn domain_errors() {
        assert!(tail_bound(FamilyKind::Log, (1.0, 3.0), 0).is_err());
        assert!(tail_bound(FamilyKind::Log, (0.5, 0.9), 0).is_err());
        assert!(tail_bound(FamilyKind::Geometric, (0.5, 3.0), 0).is_err());
        assert!(tail_bound(FamilyKind::Log, (2.0, f64::INFINITY), 0).is_err());
        assert!(tail_bound(FamilyKind::Log, (3.0, 2.0), 0).is_err());
    }

    #[test]
    fn tail_dominates_deeper_partial_sums() {
        // Sum the dropped terms explicitly far past N and sample pairs from
        // the interval; the certified eps must dominate every dropped sum.
        let (c, d) = (2.0, 7.5);
        for trunc in [0usize, 2, 5, 11] {
            let eps_log = tail_bound(FamilyKind::Log, (c, d), trunc).unwrap();
            let eps_geo = tail_bound(FamilyKind::Geometric, (c, d), trunc).unwrap();
            for step in 0..=10 {
                let x = c + (d - c) * step as f64 / 10.0;
                for step2 in 0..=10 {
                    let y = c + (d - c) * step2 as f64 / 10.0;
                    let mut dropped_log = 0.0;
                    let mut dropped_geo = 0.0;
                    for n in trunc + 1..trunc + 400 {
                        dropped_log += (log_term(n, x) - log_term(n, y)).abs();
                        dropped_geo += (geometric_term(n, x) - geometric_term(n, y)).abs();
                    }
                    assert!(dropped_log <= eps_log);
                    assert!(dropped_geo <= eps_geo);
                }
            }
        }
    }

    fn dominant_vector() -> impl Strategy<Value = Vec<f64>> {
        // One entry at magnitude 2 dominates the rest, so the finite-p norm
        // closes on the sup norm quickly.
        prop::collection::vec(-1.0..1.0f64, 1..10).prop_map(|mut v| {
            v.push(2.0);
            v
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn monotone_under_entrywise_increase(
            v in prop::collection::vec(-10.0..10.0f64, 0..12),
            factors in prop::collection::vec(1.0..3.0f64, 12),
        ) {
            for p in [0.5, 1.0, 2.0, 3.5] {
                let spec = SequenceNormSpec::new(p).unwrap();
                let grown: Vec<f64> = v.iter().zip(&factors).map(|(x, f)| x * f).collect();
                prop_assert!(seq_norm(&grown, &spec) >= seq_norm(&v, &spec));
            }
            let inf = SequenceNormSpec::infinity();
            let grown: Vec<f64> = v.iter().zip(&factors).map(|(x, f)| x * f).collect();
            prop_assert!(seq_norm(&grown, &inf) >= seq_norm(&v, &inf));
        }

        #[test]
        fn large_p_approaches_sup(v in dominant_vector()) {
            let sup = seq_norm(&v, &SequenceNormSpec::infinity());
            for p in [8.0, 16.0, 64.0] {
                let np = seq_norm(&v, &SequenceNormSpec::new(p).unwrap());
                prop_assert!(np >= sup);
                prop_assert!(np <= sup * 1.05, "p = {p}: {np} vs sup {sup}");
            }
        }

        #[test]
        fn triangle_inequality_for_p_at_least_one(
            u in prop::collection::vec(-10.0..10.0f64, 6),
            v in prop::collection::vec(-10.0..10.0f64, 6),
        ) {
            for p in [1.0, 1.5, 2.0, 4.0] {
                let spec = SequenceNormSpec::new(p).unwrap();
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                prop_assert!(
                    seq_norm(&sum, &spec) <= seq_norm(&u, &spec) + seq_norm(&v, &spec) + 1e-12
                );
            }
        }

        #[test]
        fn quasi_triangle_inequality_below_one(
            u in prop::collection::vec(-10.0..10.0f64, 6),
            v in prop::collection::vec(-10.0..10.0f64, 6),
        ) {
            for p in [0.25, 0.5, 0.75] {
                let spec = SequenceNormSpec::new(p).unwrap();
                let constant = 2.0_f64.powf(1.0 / p - 1.0);
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                prop_assert!(
                    seq_norm(&sum, &spec)
                        <= constant * (seq_norm(&u, &spec) + seq_norm(&v, &spec)) + 1e-12
                );
            }
        }
    }
}
