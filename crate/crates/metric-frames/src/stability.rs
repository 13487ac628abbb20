//! Operator-level stability: scalar fields evaluable on all of `R^k`,
//! Neumann-series inversion of near-identity Lipschitz maps, and the
//! reconstruction-transfer theorem for perturbed families.
//!
//! Operator norms (`||S||`, `||theta_f||` in the Lip_0 sense) are exact
//! Lipschitz numbers over the given finite sample; every certificate is
//! scoped to that sample. The ambient space is `R^k` with the Euclidean
//! norm; coefficient space carries the system's sequence norm.

use serde::{Deserialize, Serialize};

use crate::lipschitz::ExtensionMode;
use crate::norms::{seq_norm, SequenceNormSpec};
use crate::{Error, Result};

/// A scalar function defined on all of `R^k`, so fixed-point iterates can
/// leave the sample without leaving the domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ScalarField {
    /// `x -> sum_i coeffs[i] x[i]`.
    Linear { coeffs: Vec<f64> },
    /// McShane extension of finitely many anchored values, with the given
    /// Lipschitz constant, under the Euclidean distance.
    McShane {
        anchors: Vec<(Vec<f64>, f64)>,
        lip: f64,
        mode: ExtensionMode,
    },
    /// Pointwise sum.
    Sum { fields: Vec<ScalarField> },
    /// `factor * inner`.
    Scale { factor: f64, inner: Box<ScalarField> },
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

impl ScalarField {
    /// Validates dimensions, finiteness, and (for McShane) feasibility of
    /// the anchored values against the claimed Lipschitz constant.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ScalarField::Linear { coeffs } => {
                if coeffs.len() != dim {
                    return Err(Error::Structural(format!(
                        "linear field has {} coefficients in dimension {dim}",
                        coeffs.len()
                    )));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Structural("linear coefficient is not finite".into()));
                }
                Ok(())
            }
            ScalarField::McShane { anchors, lip, mode: _ } => {
                if anchors.is_empty() {
                    return Err(Error::Structural("McShane field has no anchors".into()));
                }
                if !lip.is_finite() || *lip < 0.0 {
                    return Err(Error::Domain(format!(
                        "Lipschitz constant {lip} must be a nonnegative real"
                    )));
                }
                for (i, (a, v)) in anchors.iter().enumerate() {
                    if a.len() != dim {
                        return Err(Error::Structural(format!(
                            "anchor {i} has dimension {}, expected {dim}",
                            a.len()
                        )));
                    }
                    if a.iter().any(|c| !c.is_finite()) || !v.is_finite() {
                        return Err(Error::Structural(format!("anchor {i} is not finite")));
                    }
                }
                for i in 0..anchors.len() {
                    for j in (i + 1)..anchors.len() {
                        let gap = (anchors[i].1 - anchors[j].1).abs();
                        let allowed = lip * euclid(&anchors[i].0, &anchors[j].0);
                        if gap > allowed * (1.0 + 1e-12) {
                            return Err(Error::InfeasibleExtension {
                                claimed: *lip,
                                actual: if allowed > 0.0 { gap / (allowed / lip) } else { f64::INFINITY },
                                i,
                                j,
                            });
                        }
                    }
                }
                Ok(())
            }
            ScalarField::Sum { fields } => {
                if fields.is_empty() {
                    return Err(Error::Structural("empty field sum".into()));
                }
                fields.iter().try_for_each(|f| f.validate(dim))
            }
            ScalarField::Scale { factor, inner } => {
                if !factor.is_finite() {
                    return Err(Error::Domain(format!("scale factor {factor} must be finite")));
                }
                inner.validate(dim)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Linear { coeffs } => {
                coeffs.iter().zip(x).map(|(c, v)| c * v).sum()
            }
            ScalarField::McShane { anchors, lip, mode } => match mode {
                ExtensionMode::Inf => anchors
                    .iter()
                    .map(|(a, v)| v + lip * euclid(a, x))
                    .fold(f64::INFINITY, f64::min),
                ExtensionMode::Sup => anchors
                    .iter()
                    .map(|(a, v)| v - lip * euclid(a, x))
                    .fold(f64::NEG_INFINITY, f64::max),
            },
            ScalarField::Sum { fields } => fields.iter().map(|f| f.eval(x)).sum(),
            ScalarField::Scale { factor, inner } => factor * inner.eval(x),
        }
    }
}

/// A family of scalar fields: the analysis map `theta(x) = (h_n(x))_n`
/// on `R^k`.
#[derive(Debug, Clone)]
pub struct FieldFamily {
    dim: usize,
    fields: Vec<ScalarField>,
}

impl FieldFamily {
    pub fn new(dim: usize, fields: Vec<ScalarField>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("ambient dimension must be positive".into()));
        }
        if fields.is_empty() {
            return Err(Error::Structural("family has no fields".into()));
        }
        fields.iter().try_for_each(|f| f.validate(dim))?;
        Ok(Self { dim, fields })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self, x: &[f64]) -> Vec<f64> {
        self.fields.iter().map(|f| f.eval(x)).collect()
    }
}

/// A linear reconstruction operator `R^N -> R^k`, row-major.
#[derive(Debug, Clone)]
pub struct LinearDecoder {
    rows: Vec<Vec<f64>>,
}

impl LinearDecoder {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Structural("decoder matrix is empty".into()));
        }
        let cols = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Structural(format!(
                    "decoder row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Structural(format!("decoder row {i} is not finite")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn in_dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Result of a Neumann-style fixed-point inversion.
#[derive(Debug, Clone, Serialize)]
pub struct InversionResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Euclidean step sizes, one per iteration; consecutive ratios stay
    /// below the contraction `q`.
    pub residuals: Vec<f64>,
}

const INVERT_CAP: usize = 10_000;

/// Solves `U(x) = y` for a map with `||U - I||_Lip = q < 1` by iterating
/// `x <- x - U(x) + y` from `x = y`. The iteration map contracts with
/// ratio `q`, so stopping when a step falls to `tol * (1 - q)` leaves the
/// true error below `tol`.
pub fn invert_lip(
    u: impl Fn(&[f64]) -> Vec<f64>,
    q: f64,
    y: &[f64],
    tol: f64,
) -> Result<InversionResult> {
    if !q.is_finite() || q < 0.0 {
        return Err(Error::Domain(format!("contraction ratio {q} must be a nonnegative real")));
    }
    if q >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "||U - I|| = {q} must be strictly below 1; the boundary case is unverifiable"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let mut x = y.to_vec();
    let mut residuals = Vec::new();
    let threshold = tol * (1.0 - q);
    for _ in 0..INVERT_CAP {
        let ux = u(&x);
        if ux.len() != x.len() {
            return Err(Error::Structural(format!(
                "map produced {} coordinates, expected {}",
                ux.len(),
                x.len()
            )));
        }
        let next: Vec<f64> = x
            .iter()
            .zip(&ux)
            .zip(y)
            .map(|((xi, ui), yi)| xi - ui + yi)
            .collect();
        let step = euclid(&next, &x);
        residuals.push(step);
        x = next;
        if step <= threshold {
            return Ok(InversionResult {
                x,
                iterations: residuals.len(),
                residuals,
            });
        }
        if !step.is_finite() || step > 1e100 {
            return Err(Error::NoConvergence {
                iterations: residuals.len(),
                last_step: step,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: INVERT_CAP,
        last_step: *residuals.last().expect("cap is positive"),
    })
}

/// Certificate for the stability-reconstruction theorem on one sample.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub alpha: f64,
    pub gamma: f64,
    /// Exact Lipschitz numbers over the sample.
    pub s_lip: f64,
    pub theta_f_lip: f64,
    pub theta_g_lip: f64,
    /// Contraction `||S|| (alpha ||theta_f|| + gamma)`; strictly below 1.
    pub q: f64,
    /// Largest `||T(theta_g(x)) - x||` over the sample.
    pub reconstruction_worst: f64,
    pub identity_ok: bool,
    /// Lower frame constant from the proof, `1/||S|| - (alpha ||theta_f|| + gamma)`.
    pub lower_bound_proof: f64,
    /// Lower constant as printed in the statement, `1 - q`. Reported next
    /// to the proof form without asserting their equality.
    pub lower_bound_printed: f64,
    /// Upper constant `(1 + alpha) ||theta_f|| + gamma`.
    pub upper_bound: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub max_residual_ratio: f64,
    pub ratios_ok: bool,
    pub iterations_max: usize,
    pub tolerance: f64,
    pub verdict: bool,
}

/// Verifies the stability theorem on a finite sample: checks the
/// perturbation inequality pairwise, measures the operator norms, forms
/// the contraction `q`, builds the reconstruction `T = (S theta_g)^{-1} S`
/// by fixed-point inversion, and certifies the identity `T theta_g = id`
/// together with the predicted two-sided bounds for `theta_g`.
///
/// The sample must contain the origin, and every field must vanish there.
#[allow(clippy::too_many_arguments)]
pub fn stability_reconstruct(
    sample: &[Vec<f64>],
    f: &FieldFamily,
    s: &LinearDecoder,
    g: &FieldFamily,
    alpha: f64,
    gamma: f64,
    norm: &SequenceNormSpec,
    tol: f64,
) -> Result<StabilityReport> {
    norm.require_triangle()?;
    if !(alpha.is_finite() && alpha >= 0.0 && gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} and gamma = {gamma} must be nonnegative reals"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let dim = f.dim();
    if g.dim() != dim {
        return Err(Error::Structural("families live in different dimensions".into()));
    }
    if f.len() != g.len() {
        return Err(Error::Structural(format!(
            "family lengths differ: {} vs {}",
            f.len(),
            g.len()
        )));
    }
    if s.in_dim() != f.len() || s.out_dim() != dim {
        return Err(Error::Structural(format!(
            "decoder is {}x{}, needs {}x{}",
            s.out_dim(),
            s.in_dim(),
            dim,
            f.len()
        )));
    }
    if sample.len() < 2 {
        return Err(Error::Structural("sample needs at least two points".into()));
    }
    for (i, x) in sample.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::Structural(format!(
                "sample point {i} has dimension {}, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural(format!("sample point {i} is not finite")));
        }
    }
    if !sample.iter().any(|x| x.iter().all(|&v| v == 0.0)) {
        return Err(Error::Domain("sample must contain the origin (the base point)".into()));
    }
    let zero = vec![0.0; dim];
    for (name, family) in [("reference", f), ("perturbed", g)] {
        let at_zero = family.theta(&zero);
        if let Some(n) = at_zero.iter().position(|v| v.abs() > 1e-12) {
            return Err(Error::Hypothesis(format!(
                "field {n} of the {name} family takes value {:.3e} at the origin; Lip_0 requires 0",
                at_zero[n]
            )));
        }
    }

    let theta_f: Vec<Vec<f64>> = sample.iter().map(|x| f.theta(x)).collect();
    let theta_g: Vec<Vec<f64>> = sample.iter().map(|x| g.theta(x)).collect();

    // S must reconstruct F on the sample before any transfer makes sense
    for (i, (x, c)) in sample.iter().zip(&theta_f).enumerate() {
        let err = euclid(&s.apply(c), x);
        if err > tol {
            return Err(Error::Hypothesis(format!(
                "S is not a reconstruction for the reference family: point {i} misses by {err:.3e}"
            )));
        }
    }

    // perturbation inequality on every sampled pair
    for i in 0..sample.len() {
        for j in (i + 1)..sample.len() {
            let diff: Vec<f64> = (0..f.len())
                .map(|n| (theta_f[i][n] - theta_g[i][n]) - (theta_f[j][n] - theta_g[j][n]))
                .collect();
            let lhs = seq_norm(&diff, norm);
            let df: Vec<f64> = (0..f.len()).map(|n| theta_f[i][n] - theta_f[j][n]).collect();
            let rhs = alpha * seq_norm(&df, norm) + gamma * euclid(&sample[i], &sample[j]);
            if lhs > rhs + 1e-12 * (1.0 + rhs) {
                return Err(Error::Hypothesis(format!(
                    "perturbation inequality fails on sample pair ({i}, {j}): {lhs:.6e} > {rhs:.6e}"
                )));
            }
        }
    }

    let lip_over = |images: &[Vec<f64>], dist: &dyn Fn(usize, usize) -> f64, out_norm: &dyn Fn(&[f64], &[f64]) -> f64| {
        let mut lip = 0.0f64;
        for i in 0..images.len() {
            for j in (i + 1)..images.len() {
                let d = dist(i, j);
                if d == 0.0 {
                    continue;
                }
                lip = lip.max(out_norm(&images[i], &images[j]) / d);
            }
        }
        lip
    };
    let sample_dist = |i: usize, j: usize| euclid(&sample[i], &sample[j]);
    let coef_norm =
        |a: &[f64], b: &[f64]| seq_norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>(), norm);
    let theta_f_lip = lip_over(&theta_f, &sample_dist, &coef_norm);
    let theta_g_lip = lip_over(&theta_g, &sample_dist, &coef_norm);

    // ||S|| over the coefficient vectors this certificate actually visits
    let mut coef_sample: Vec<Vec<f64>> = theta_f.clone();
    coef_sample.extend(theta_g.iter().cloned());
    let s_images: Vec<Vec<f64>> = coef_sample.iter().map(|c| s.apply(c)).collect();
    let mut s_lip = 0.0f64;
    for i in 0..coef_sample.len() {
        for j in (i + 1)..coef_sample.len() {
            let d = coef_norm(&coef_sample[i], &coef_sample[j]);
            if d == 0.0 {
                continue;
            }
            s_lip = s_lip.max(euclid(&s_images[i], &s_images[j]) / d);
        }
    }

    let q = s_lip * (alpha * theta_f_lip + gamma);
    if q >= 1.0 {
        return Err(Error::Hypothesis(format!(
            "q = ||S|| (alpha ||theta_f|| + gamma) = {q:.6} must be strictly below 1"
        )));
    }

    // T(c) = (S theta_g)^{-1} (S c): invert the near-identity composition
    let u = |x: &[f64]| s.apply(&g.theta(x));
    let mut reconstruction_worst = 0.0f64;
    let mut max_residual_ratio = 0.0f64;
    let mut ratios_ok = true;
    let mut iterations_max = 0usize;
    for (i, x) in sample.iter().enumerate() {
        let target = s.apply(&theta_g[i]);
        let result = invert_lip(u, q, &target, tol)?;
        reconstruction_worst = reconstruction_worst.max(euclid(&result.x, x));
        iterations_max = iterations_max.max(result.iterations);
        // geometric decay up to rounding noise, which is absolute in the
        // iterate scale rather than relative in the shrinking step
        let noise = 64.0 * f64::EPSILON * (1.0 + euclid(&target, &zero));
        for w in result.residuals.windows(2) {
            if w[1] > q * w[0] + noise {
                ratios_ok = false;
            }
            if w[0] > 1e6 * noise {
                max_residual_ratio = max_residual_ratio.max(w[1] / w[0]);
            }
        }
    }
    let identity_ok = reconstruction_worst <= tol;

    let lower_bound_proof = 1.0 / s_lip - (alpha * theta_f_lip + gamma);
    let lower_bound_printed = 1.0 - q;
    let upper_bound = (1.0 + alpha) * theta_f_lip + gamma;
    let mut lower_ok = true;
    let mut upper_ok = true;
    for i in 0..sample.len() {
        for j in (i + 1)..sample.len() {
            let d = sample_dist(i, j);
            if d == 0.0 {
                continue;
            }
            let dg = coef_norm(&theta_g[i], &theta_g[j]);
            if dg < lower_bound_proof * d * (1.0 - 1e-12) {
                lower_ok = false;
            }
            if dg > upper_bound * d * (1.0 + 1e-12) {
                upper_ok = false;
            }
        }
    }

    Ok(StabilityReport {
        alpha,
        gamma,
        s_lip,
        theta_f_lip,
        theta_g_lip,
        q,
        reconstruction_worst,
        identity_ok,
        lower_bound_proof,
        lower_bound_printed,
        upper_bound,
        lower_ok,
        upper_ok,
        max_residual_ratio,
        ratios_ok,
        iterations_max,
        tolerance: tol,
        verdict: identity_ok && lower_ok && upper_ok && ratios_ok,
    })
}
