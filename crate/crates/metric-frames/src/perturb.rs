//! Perturbation theory for frame systems: the prefix-inequality theorem
//! with its closed-form bound predictions, the quadratic-closeness and
//! Bessel corollaries, and certification that predicted intervals contain
//! the perturbed family's actual bounds.

use serde::Serialize;

use crate::frame::{frame_bounds, FrameBounds, FrameSystem};
use crate::norms::Exponent;
use crate::{Error, Result};

/// The three perturbation constants. `beta < 1` always; the frame theorem
/// additionally needs `alpha < 1` and `gamma < (1 - alpha) a`, checked
/// against a concrete lower bound at prediction time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl PerturbationParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "{name} = {v} must be a nonnegative real"
                )));
            }
        }
        if beta >= 1.0 {
            return Err(Error::Hypothesis(format!("beta = {beta} must satisfy beta < 1")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub const ZERO: Self = Self {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    /// The extra conditions for the two-sided frame conclusion.
    fn check_frame_case(&self, a: f64) -> Result<()> {
        if self.alpha >= 1.0 {
            return Err(Error::Hypothesis(format!(
                "alpha = {} must satisfy alpha < 1 for the frame conclusion",
                self.alpha
            )));
        }
        if self.gamma >= (1.0 - self.alpha) * a {
            return Err(Error::Hypothesis(format!(
                "gamma = {} must stay below (1 - alpha) a = {}",
                self.gamma,
                (1.0 - self.alpha) * a
            )));
        }
        Ok(())
    }
}

/// Closed-form predicted bounds for a perturbed family:
/// `a' = ((1 - alpha) a - gamma) / (1 + beta)` and
/// `b' = ((1 + alpha) b + gamma) / (1 - beta)`. With zero parameters this
/// reproduces `(a, b)` without rounding.
pub fn predict_bounds_perturb(
    a: f64,
    b: f64,
    params: &PerturbationParams,
) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || a > b {
        return Err(Error::Domain(format!(
            "bounds ({a}, {b}) must be finite with 0 <= a <= b"
        )));
    }
    params.check_frame_case(a)?;
    let lower = ((1.0 - params.alpha) * a - params.gamma) / (1.0 + params.beta);
    let upper = ((1.0 + params.alpha) * b + params.gamma) / (1.0 - params.beta);
    Ok((lower, upper))
}

/// Outcome of scanning the prefix inequality over every pair and every
/// prefix length.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub holds: bool,
    /// Largest `lhs - rhs` seen anywhere (negative when the inequality has
    /// slack everywhere).
    pub worst_margin: f64,
    /// `(x, y, m)` attaining the largest violation, present when it fails.
    pub witness: Option<(usize, usize, usize)>,
    pub pairs_checked: usize,
}

fn prefix_norm(acc: f64, p: &Exponent) -> f64 {
    match p {
        Exponent::Infinity => acc,
        Exponent::Finite(p) if *p == 1.0 => acc,
        Exponent::Finite(p) if *p == 2.0 => acc.sqrt(),
        Exponent::Finite(p) => acc.powf(1.0 / p),
    }
}

fn prefix_update(acc: f64, delta: f64, p: &Exponent) -> f64 {
    match p {
        Exponent::Infinity => acc.max(delta.abs()),
        Exponent::Finite(p) if *p == 1.0 => acc + delta.abs(),
        Exponent::Finite(p) if *p == 2.0 => acc + delta * delta,
        Exponent::Finite(p) => acc + delta.abs().powf(*p),
    }
}

/// Checks, for every pair `x != y` and every prefix length `m`, that
///
/// ```text
/// || {(f_n - g_n)(x) - (f_n - g_n)(y)}_{n<=m} ||_p
///     <= alpha || {f_n(x) - f_n(y)}_{n<=m} ||_p
///      + beta  || {g_n(x) - g_n(y)}_{n<=m} ||_p
///      + gamma d(x, y)
/// ```
///
/// Partial sums are not monotone in the useful direction on both sides, so
/// every prefix is checked, not just the full length. Comparisons allow a
/// `1e-12` relative rounding slack.
pub fn verify_perturbation_hypothesis(
    f: &FrameSystem,
    g: &FrameSystem,
    params: &PerturbationParams,
) -> Result<HypothesisReport> {
    f.norm().require_triangle()?;
    if f.space() != g.space() {
        return Err(Error::Structural("families live on different spaces".into()));
    }
    if f.norm() != g.norm() {
        return Err(Error::Structural("families use different norms".into()));
    }
    if f.len() != g.len() {
        return Err(Error::Structural(format!(
            "family lengths differ: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    let p = f.norm().p();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut holds = true;
    let mut pairs_checked = 0;
    for (x, y) in f.space().pairs() {
        pairs_checked += 1;
        let d = f.space().d(x, y);
        let (mut sd, mut sf, mut sg) = (0.0, 0.0, 0.0);
        for m in 1..=f.len() {
            let df = f.family().value(m - 1, x) - f.family().value(m - 1, y);
            let dg = g.family().value(m - 1, x) - g.family().value(m - 1, y);
            sd = prefix_update(sd, df - dg, &p);
            sf = prefix_update(sf, df, &p);
            sg = prefix_update(sg, dg, &p);
            let lhs = prefix_norm(sd, &p);
            let rhs = params.alpha * prefix_norm(sf, &p)
                + params.beta * prefix_norm(sg, &p)
                + params.gamma * d;
            let margin = lhs - rhs;
            if margin > worst {
                worst = margin;
                witness = Some((x, y, m));
            }
            if margin > 1e-12 * (1.0 + rhs.abs()) {
                holds = false;
            }
        }
    }
    Ok(HypothesisReport {
        holds,
        worst_margin: worst,
        witness: if holds { None } else { witness },
        pairs_checked,
    })
}

/// Certificate that a perturbed family's exact bounds land inside the
/// theorem's predicted interval.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbCertificate {
    pub params: PerturbationParams,
    pub reference_bounds: FrameBounds,
    pub predicted: (f64, f64),
    pub actual: FrameBounds,
    pub hypothesis: HypothesisReport,
    pub tolerance: f64,
    pub tail_adjustment: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub verdict: bool,
}

/// Verifies the prefix hypothesis, predicts bounds from the reference
/// family's computed `(a, b)`, and checks the perturbed family's exact
/// bounds against the prediction. Refuses when the hypothesis fails; the
/// prediction would not be applicable.
pub fn perturb_and_certify(
    f: &FrameSystem,
    g: &FrameSystem,
    params: &PerturbationParams,
    tol: f64,
) -> Result<PerturbCertificate> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::Domain(format!("tolerance {tol} must be nonnegative")));
    }
    let hypothesis = verify_perturbation_hypothesis(f, g, params)?;
    if !hypothesis.holds {
        let (x, y, m) = hypothesis.witness.expect("failed hypothesis has a witness");
        return Err(Error::Hypothesis(format!(
            "prefix inequality fails at pair ({x}, {y}), prefix {m}, by {:.3e}; the prediction does not apply",
            hypothesis.worst_margin
        )));
    }
    let reference = frame_bounds(f);
    let predicted = predict_bounds_perturb(reference.a, reference.b, params)?;
    let actual = frame_bounds(g);
    let tail_adjustment = if actual.tail == 0.0 {
        0.0
    } else {
        actual.tail / g.space().min_distance()?
    };
    let lower_ok = actual.a >= predicted.0 - tol;
    let upper_ok = actual.b + tail_adjustment <= predicted.1 + tol;
    Ok(PerturbCertificate {
        params: *params,
        reference_bounds: reference,
        predicted,
        actual,
        hypothesis,
        tolerance: tol,
        tail_adjustment,
        lower_ok,
        upper_ok,
        verdict: lower_ok && upper_ok,
    })
}

/// The quadratic-closeness measurement `r` and, when `r < a`, the bound
/// prediction `(a - r, b + r)` with the parameters `(0, 0, r)` that feed
/// the main theorem.
#[derive(Debug, Clone, Serialize)]
pub struct QuadraticCloseness {
    pub r: f64,
    pub lip_numbers: Vec<f64>,
    pub reference_bounds: FrameBounds,
    pub available: bool,
    pub predicted: Option<(f64, f64)>,
    pub derived_params: Option<PerturbationParams>,
}

/// Measures `r = || {Lip(f_n - g_n)}_n ||_p` from exact per-map Lipschitz
/// numbers. When `r < a` the perturbed family is a frame with bounds
/// `(a - r, b + r)`; otherwise the prediction is reported unavailable.
pub fn quadratic_closeness(
    f: &FrameSystem,
    g: &FrameSystem,
    norm: &crate::norms::SequenceNormSpec,
) -> Result<QuadraticCloseness> {
    norm.require_triangle()?;
    if f.space() != g.space() {
        return Err(Error::Structural("families live on different spaces".into()));
    }
    if f.len() != g.len() {
        return Err(Error::Structural(format!(
            "family lengths differ: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    let space = f.space();
    let mut lip_numbers = Vec::with_capacity(f.len());
    for n in 0..f.len() {
        let diff: Vec<f64> = (0..space.n())
            .map(|x| f.family().value(n, x) - g.family().value(n, x))
            .collect();
        let map = crate::lipschitz::TabulatedMap::new(diff)?;
        lip_numbers.push(crate::lipschitz::lip_number(&map, space)?.value);
    }
    let r = crate::norms::seq_norm(&lip_numbers, norm);
    let reference = frame_bounds(f);
    let available = r < reference.a;
    let (predicted, derived_params) = if available {
        (
            Some((reference.a - r, reference.b + r)),
            Some(PerturbationParams {
                alpha: 0.0,
                beta: 0.0,
                gamma: r,
            }),
        )
    } else {
        (None, None)
    };
    Ok(QuadraticCloseness {
        r,
        lip_numbers,
        reference_bounds: reference,
        available,
        predicted,
        derived_params,
    })
}

/// Upper-side-only perturbation: the Bessel corollary.
#[derive(Debug, Clone, Serialize)]
pub struct BesselPerturbReport {
    pub params: PerturbationParams,
    pub reference_b: f64,
    pub predicted_b: f64,
    pub actual_b: f64,
    pub hypothesis: HypothesisReport,
    pub tail_adjustment: f64,
    pub ok: bool,
}

/// Predicts the perturbed Bessel bound `((1 + alpha) b + gamma)/(1 - beta)`
/// and checks the perturbed family against it. Only `beta < 1` is needed;
/// there is no lower-bound hypothesis.
pub fn bessel_perturb(
    f: &FrameSystem,
    g: &FrameSystem,
    params: &PerturbationParams,
    tol: f64,
) -> Result<BesselPerturbReport> {
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::Domain(format!("tolerance {tol} must be nonnegative")));
    }
    let hypothesis = verify_perturbation_hypothesis(f, g, params)?;
    if !hypothesis.holds {
        let (x, y, m) = hypothesis.witness.expect("failed hypothesis has a witness");
        return Err(Error::Hypothesis(format!(
            "prefix inequality fails at pair ({x}, {y}), prefix {m}, by {:.3e}",
            hypothesis.worst_margin
        )));
    }
    let reference_b = frame_bounds(f).b;
    let predicted_b = ((1.0 + params.alpha) * reference_b + params.gamma) / (1.0 - params.beta);
    let actual = frame_bounds(g);
    let tail_adjustment = if actual.tail == 0.0 {
        0.0
    } else {
        actual.tail / g.space().min_distance()?
    };
    Ok(BesselPerturbReport {
        params: *params,
        reference_b,
        predicted_b,
        actual_b: actual.b,
        hypothesis,
        tail_adjustment,
        ok: actual.b + tail_adjustment <= predicted_b + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::kuratowski_frame;
    use crate::lipschitz::{LipschitzFamily, TabulatedMap};
    use crate::norms::SequenceNormSpec;
    use crate::space::FiniteMetricSpace;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line_identity(p: f64) -> FrameSystem {
        let m = Arc::new(FiniteMetricSpace::from_line(&[0.0, 1.0, 3.0], 0).unwrap());
        let maps = vec![TabulatedMap::new(vec![0.0, 1.0, 3.0]).unwrap()];
        FrameSystem::new(
            LipschitzFamily::new(m, maps).unwrap(),
            SequenceNormSpec::new(p).unwrap(),
        )
    }

    fn shifted(f: &FrameSystem, map_index: usize, shift: &[f64]) -> FrameSystem {
        let maps: Vec<TabulatedMap> = f
            .family()
            .maps()
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let values = if n == map_index {
                    m.values.iter().zip(shift).map(|(v, s)| v + s).collect()
                } else {
                    m.values.clone()
                };
                TabulatedMap::new(values).unwrap()
            })
            .collect();
        FrameSystem::new(
            LipschitzFamily::new(f.space().clone(), maps).unwrap(),
            *f.norm(),
        )
    }

    #[test]
    fn zero_params_reproduce_bounds_exactly() {
        let (a, b) = predict_bounds_perturb(1.0, 2.0, &PerturbationParams::ZERO).unwrap();
        assert_eq!((a, b), (1.0, 2.0));
        let (a, b) = predict_bounds_perturb(0.37, 5.11, &PerturbationParams::ZERO).unwrap();
        assert_eq!((a, b), (0.37, 5.11));
    }

    #[test]
    fn prediction_matches_closed_form() {
        let params = PerturbationParams::new(0.1, 0.1, 0.2).unwrap();
        let (a, b) = predict_bounds_perturb(1.0, 2.0, &params).unwrap();
        assert!((a - 0.7 / 1.1).abs() <= 1e-15);
        assert!((b - 2.4 / 0.9).abs() <= 1e-15);
    }

    #[test]
    fn boundary_gamma_is_rejected() {
        let params = PerturbationParams::new(0.5, 0.0, 0.5).unwrap();
        assert!(matches!(
            predict_bounds_perturb(1.0, 2.0, &params),
            Err(Error::Hypothesis(_))
        ));
        assert!(PerturbationParams::new(0.0, 1.0, 0.0).is_err());
        assert!(PerturbationParams::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn hypothesis_trivial_and_scaled() {
        let f = line_identity(2.0);
        let report = verify_perturbation_hypothesis(&f, &f, &PerturbationParams::ZERO).unwrap();
        assert!(report.holds);
        assert!(report.worst_margin <= 0.0);
        assert_eq!(report.pairs_checked, 3);

        // G = (1 + eps) F satisfies the inequality with alpha = eps
        let eps = 0.125;
        let g = {
            let maps: Vec<TabulatedMap> = f
                .family()
                .maps()
                .iter()
                .map(|m| {
                    TabulatedMap::new(m.values.iter().map(|v| (1.0 + eps) * v).collect())
                        .unwrap()
                })
                .collect();
            FrameSystem::new(
                LipschitzFamily::new(f.space().clone(), maps).unwrap(),
                *f.norm(),
            )
        };
        let params = PerturbationParams::new(eps, 0.0, 0.0).unwrap();
        let report = verify_perturbation_hypothesis(&f, &g, &params).unwrap();
        assert!(report.holds, "margin {}", report.worst_margin);
    }

    #[test]
    fn hypothesis_negative_control_has_witness() {
        let f = line_identity(1.0);
        let g = shifted(&f, 0, &[0.0, 5.0, 15.0]);
        let report = verify_perturbation_hypothesis(&f, &g, &PerturbationParams::ZERO).unwrap();
        assert!(!report.holds);
        let (x, y, m) = report.witness.unwrap();
        assert_eq!(m, 1);
        assert!(x < y);
        assert!(report.worst_margin > 1.0);
    }

    #[test]
    fn certify_self_perturbation_is_exact() {
        let f = line_identity(1.0);
        let cert = perturb_and_certify(&f, &f, &PerturbationParams::ZERO, 0.0).unwrap();
        assert!(cert.verdict);
        assert_eq!(cert.predicted.0, cert.actual.a);
        assert_eq!(cert.predicted.1, cert.actual.b);
    }

    #[test]
    fn certify_refuses_when_hypothesis_fails() {
        let f = line_identity(1.0);
        let g = shifted(&f, 0, &[0.0, 5.0, 15.0]);
        assert!(matches!(
            perturb_and_certify(&f, &g, &PerturbationParams::ZERO, 1e-9),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn quadratic_closeness_identity_and_shift() {
        let f = line_identity(1.0);
        let qc = quadratic_closeness(&f, &f, f.norm()).unwrap();
        assert_eq!(qc.r, 0.0);
        assert_eq!(qc.predicted, Some((1.0, 1.0)));

        // shift the single map by 0.1 x: r = 0.1, prediction (0.9, 1.1)
        let g = shifted(&f, 0, &[0.0, 0.1, 0.3]);
        let qc = quadratic_closeness(&f, &g, f.norm()).unwrap();
        assert!((qc.r - 0.1).abs() <= 1e-12);
        let (lo, hi) = qc.predicted.unwrap();
        assert!((lo - 0.9).abs() <= 1e-12);
        assert!((hi - 1.1).abs() <= 1e-12);
        let actual = frame_bounds(&g);
        assert!(actual.a >= lo - 1e-12 && actual.b <= hi + 1e-12);

        let params = qc.derived_params.unwrap();
        let (pa, pb) = predict_bounds_perturb(
            qc.reference_bounds.a,
            qc.reference_bounds.b,
            &params,
        )
        .unwrap();
        assert_eq!(pa, lo);
        assert_eq!(pb, hi);
    }

    #[test]
    fn quadratic_closeness_on_two_point_kuratowski() {
        let m = Arc::new(FiniteMetricSpace::from_line(&[0.0, 4.0], 0).unwrap());
        let (f, _, _) = kuratowski_frame(&m).unwrap();
        let dist_to_base = vec![0.0, 0.4];
        let g = shifted(&f, 0, &dist_to_base);
        let qc = quadratic_closeness(&f, &g, &SequenceNormSpec::new(1.0).unwrap()).unwrap();
        assert!((qc.r - 0.1).abs() <= 1e-12);
        let (lo, hi) = qc.predicted.unwrap();
        assert!((lo - 0.9).abs() <= 1e-12 && (hi - 1.1).abs() <= 1e-12);
        let actual = frame_bounds(&g);
        assert!(actual.a >= lo - 1e-12 && actual.b <= hi + 1e-12);
    }

    #[test]
    fn quadratic_closeness_unavailable_when_r_exceeds_a() {
        let f = line_identity(1.0);
        let g = shifted(&f, 0, &[0.0, 2.0, 6.0]);
        let qc = quadratic_closeness(&f, &g, f.norm()).unwrap();
        assert_eq!(qc.r, 2.0);
        assert!(!qc.available);
        assert!(qc.predicted.is_none());
    }

    #[test]
    fn bessel_perturb_examples() {
        let f = line_identity(1.0);
        let report = bessel_perturb(&f, &f, &PerturbationParams::ZERO, 0.0).unwrap();
        assert!(report.ok);
        assert_eq!(report.predicted_b, report.reference_b);

        // G = 2F satisfies the hypothesis with alpha = 1 and doubles b
        let g = {
            let maps: Vec<TabulatedMap> = f
                .family()
                .maps()
                .iter()
                .map(|m| TabulatedMap::new(m.values.iter().map(|v| 2.0 * v).collect()).unwrap())
                .collect();
            FrameSystem::new(
                LipschitzFamily::new(f.space().clone(), maps).unwrap(),
                *f.norm(),
            )
        };
        let params = PerturbationParams::new(1.0, 0.0, 0.0).unwrap();
        let report = bessel_perturb(&f, &g, &params, 0.0).unwrap();
        assert!(report.ok);
        assert_eq!(report.predicted_b, 2.0 * report.reference_b);
        assert_eq!(report.actual_b, 2.0 * report.reference_b);
    }

    #[test]
    fn kuratowski_perturbations_certify() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20u64 {
            let m = Arc::new(FiniteMetricSpace::random_euclidean(8, 2, seed).unwrap());
            let (k, _, _) = kuratowski_frame(&m).unwrap();
            let f = FrameSystem::new(k.family().clone(), SequenceNormSpec::new(2.0).unwrap());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            // perturb every map by a small multiple of the distance-to-base
            // map, whose Lipschitz number is 1
            let maps: Vec<TabulatedMap> = f
                .family()
                .maps()
                .iter()
                .map(|map| {
                    let c: f64 = rng.gen_range(-0.02..0.02);
                    TabulatedMap::new(
                        map.values
                            .iter()
                            .enumerate()
                            .map(|(x, v)| v + c * m.d(x, m.base()))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            let g = FrameSystem::new(
                LipschitzFamily::new(m.clone(), maps).unwrap(),
                *f.norm(),
            );
            let qc = quadratic_closeness(&f, &g, f.norm()).unwrap();
            assert!(qc.available, "seed {seed}: r = {}", qc.r);
            let cert =
                perturb_and_certify(&f, &g, &qc.derived_params.unwrap(), 1e-9).unwrap();
            assert!(cert.verdict, "seed {seed}: {cert:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sound_predictions_contain_actual_bounds(
            seed in any::<u64>(),
            n in 3..9usize,
            scale in 0.001f64..0.2,
        ) {
            use rand::{Rng, SeedableRng};
            let m = Arc::new(FiniteMetricSpace::random_euclidean(n, 2, seed).unwrap());
            let (k, _, _) = kuratowski_frame(&m).unwrap();
            let f = FrameSystem::new(k.family().clone(), SequenceNormSpec::new(2.0).unwrap());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let maps: Vec<TabulatedMap> = f
                .family()
                .maps()
                .iter()
                .map(|map| {
                    let c: f64 = scale * rng.gen_range(-1.0..1.0) / n as f64;
                    TabulatedMap::new(
                        map.values
                            .iter()
                            .enumerate()
                            .map(|(x, v)| v + c * m.d(x, m.base()))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            let g = FrameSystem::new(
                LipschitzFamily::new(m.clone(), maps).unwrap(),
                *f.norm(),
            );
            let qc = quadratic_closeness(&f, &g, f.norm()).unwrap();
            prop_assume!(qc.available);
            let cert = perturb_and_certify(&f, &g, &qc.derived_params.unwrap(), 1e-9).unwrap();
            prop_assert!(cert.verdict, "{:?}", cert);
            let bp = bessel_perturb(&f, &g, &qc.derived_params.unwrap(), 1e-9).unwrap();
            prop_assert!(bp.ok);
        }

        #[test]
        fn zero_params_collapse_every_prediction(a in 0.01f64..5.0, spread in 0.0f64..5.0) {
            let b = a + spread;
            let (pa, pb) = predict_bounds_perturb(a, b, &PerturbationParams::ZERO).unwrap();
            prop_assert_eq!(pa, a);
            prop_assert_eq!(pb, b);
        }
    }
}
