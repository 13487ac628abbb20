//! Scalar Lipschitz maps on a finite space: exact Lipschitz numbers,
//! McShane extensions, and Kuratowski-type functionals.
//!
//! Scalars are real throughout; the McShane construction has no complex
//! analogue.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::norms::FamilyKind;
use crate::space::FiniteMetricSpace;
use crate::{Error, Result};

/// A scalar map given by its values at the space's points, in point order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedMap {
    pub values: Vec<f64>,
}

impl TabulatedMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Structural(format!("map value {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// What generated a family, when it came from a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Log,
    Geometric,
    Kuratowski,
    SumDecomposition,
    Embedding,
}

/// Descriptor of the closed form behind a family.
///
/// `positions` carries 1-d coordinates when the space samples a real
/// interval; value-returning decoders verify against them, and the
/// log/geometric kinds can be re-evaluated at off-grid reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMeta {
    pub kind: GeneratorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
}

impl FamilyMeta {
    /// The tail-certified closed form, when this meta describes one.
    pub fn tail_family(&self) -> Option<FamilyKind> {
        match self.kind {
            GeneratorKind::Log => Some(FamilyKind::Log),
            GeneratorKind::Geometric => Some(FamilyKind::Geometric),
            _ => None,
        }
    }
}

/// An ordered family of tabulated maps over one space, together with the
/// certified mass of any truncated-away terms.
#[derive(Debug, Clone)]
pub struct LipschitzFamily {
    space: Arc<FiniteMetricSpace>,
    maps: Vec<TabulatedMap>,
    tail_bound: f64,
    family_meta: Option<FamilyMeta>,
}

impl LipschitzFamily {
    /// An intrinsically finite family: tail 0, no generating form.
    pub fn new(space: Arc<FiniteMetricSpace>, maps: Vec<TabulatedMap>) -> Result<Self> {
        Self::with_tail(space, maps, 0.0, None)
    }

    pub fn with_tail(
        space: Arc<FiniteMetricSpace>,
        maps: Vec<TabulatedMap>,
        tail_bound: f64,
        family_meta: Option<FamilyMeta>,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Structural("family has no maps".into()));
        }
        for (n, f) in maps.iter().enumerate() {
            if f.len() != space.n() {
                return Err(Error::Structural(format!(
                    "map {n} has {} values for {} points",
                    f.len(),
                    space.n()
                )));
            }
        }
        if !tail_bound.is_finite() || tail_bound < 0.0 {
            return Err(Error::Structural(format!(
                "tail bound {tail_bound} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            space,
            maps,
            tail_bound,
            family_meta,
        })
    }

    pub fn space(&self) -> &Arc<FiniteMetricSpace> {
        &self.space
    }

    pub fn maps(&self) -> &[TabulatedMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn family_meta(&self) -> Option<&FamilyMeta> {
        self.family_meta.as_ref()
    }

    /// Value of map `n` at point `x`.
    #[inline]
    pub fn value(&self, n: usize, x: usize) -> f64 {
        self.maps[n].values[x]
    }
}

/// An exact Lipschitz number with the pair attaining it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipNumber {
    pub value: f64,
    pub witness: (usize, usize),
}

/// Exact Lipschitz number `max_{i != j} |f(i) - f(j)| / d(i,j)` by
/// exhaustive pair scan. Ties break toward the lexicographically smallest
/// pair, so reports are deterministic.
pub fn lip_number(f: &TabulatedMap, m: &FiniteMetricSpace) -> Result<LipNumber> {
    if f.len() != m.n() {
        return Err(Error::Structural(format!(
            "map has {} values for {} points",
            f.len(),
            m.n()
        )));
    }
    let mut best = LipNumber {
        value: 0.0,
        witness: (0, 1),
    };
    let mut first = true;
    for (i, j) in m.pairs() {
        let ratio = (f.values[i] - f.values[j]).abs() / m.d(i, j);
        if first || ratio > best.value {
            best = LipNumber {
                value: ratio,
                witness: (i, j),
            };
            first = false;
        }
    }
    Ok(best)
}

/// Lip_0 norm: the Lipschitz number of a map vanishing at the base point.
///
/// Errors when `|f(base)| > 1e-12`; the norm equals [`lip_number`]
/// otherwise.
pub fn lip0_norm(f: &TabulatedMap, m: &FiniteMetricSpace) -> Result<LipNumber> {
    if f.len() != m.n() {
        return Err(Error::Structural(format!(
            "map has {} values for {} points",
            f.len(),
            m.n()
        )));
    }
    let at_base = f.values[m.base()];
    if at_base.abs() > 1e-12 {
        return Err(Error::NotNormalized(at_base.abs()));
    }
    lip_number(f, m)
}

/// Which McShane formula to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtensionMode {
    Inf,
    Sup,
}

/// Extends data `f0` on the subset `m0` to the whole space with Lipschitz
/// constant `l`.
///
/// Inf mode returns `f(x) = min_{y in m0} (f0(y) + l * d(x, y))`, sup mode
/// `f(x) = max_{y in m0} (f0(y) - l * d(x, y))`. Points of `m0` get their
/// data back verbatim rather than through the formula, which can round one
/// ulp low at a pair attaining `l` exactly.
pub fn mcshane_extend(
    m: &FiniteMetricSpace,
    m0: &[usize],
    f0: &[f64],
    l: f64,
    mode: ExtensionMode,
) -> Result<TabulatedMap> {
    if m0.is_empty() {
        return Err(Error::Structural("extension subset is empty".into()));
    }
    if m0.len() != f0.len() {
        return Err(Error::Structural(format!(
            "{} data values for {} subset points",
            f0.len(),
            m0.len()
        )));
    }
    if !l.is_finite() || l < 0.0 {
        return Err(Error::Domain(format!(
            "Lipschitz constant {l} must be finite and nonnegative"
        )));
    }
    let mut slot = vec![None::<f64>; m.n()];
    for (&y, &v) in m0.iter().zip(f0) {
        if y >= m.n() {
            return Err(Error::Structural(format!(
                "subset index {y} out of range for {} points",
                m.n()
            )));
        }
        if !v.is_finite() {
            return Err(Error::Structural(format!("data value at {y} is not finite")));
        }
        if slot[y].is_some() {
            return Err(Error::Structural(format!("subset index {y} repeated")));
        }
        slot[y] = Some(v);
    }
    for (a, (&ya, &va)) in m0.iter().zip(f0).enumerate() {
        for (&yb, &vb) in m0.iter().zip(f0).skip(a + 1) {
            let need = (va - vb).abs() / m.d(ya, yb);
            if need > l {
                return Err(Error::InfeasibleExtension {
                    claimed: l,
                    actual: need,
                    i: ya,
                    j: yb,
                });
            }
        }
    }

    let values = (0..m.n())
        .map(|x| {
            if let Some(v) = slot[x] {
                return v;
            }
            match mode {
                ExtensionMode::Inf => m0
                    .iter()
                    .zip(f0)
                    .map(|(&y, &v)| v + l * m.d(x, y))
                    .fold(f64::INFINITY, f64::min),
                ExtensionMode::Sup => m0
                    .iter()
                    .zip(f0)
                    .map(|(&y, &v)| v - l * m.d(x, y))
                    .fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    TabulatedMap::new(values)
}

/// The functional `f(y) = d(target, base) - d(target, y)`: the sup-mode
/// McShane extension of `f0(base) = 0`, `f0(target) = d(target, base)` at
/// constant 1. It vanishes at the base, attains `d(target, base)` at the
/// target, and has Lipschitz number at most 1.
pub fn kuratowski_functional(m: &FiniteMetricSpace, target: usize) -> Result<TabulatedMap> {
    if target >= m.n() {
        return Err(Error::Structural(format!(
            "target {target} out of range for {} points",
            m.n()
        )));
    }
    if target == m.base() {
        return Err(Error::Domain(
            "Kuratowski target must differ from the base point; pick any other point".into(),
        ));
    }
    let dt0 = m.d(target, m.base());
    let values = (0..m.n()).map(|y| dt0 - m.d(target, y)).collect();
    TabulatedMap::new(values)
}
