//! Concrete frame builders: the two closed-form families on intervals with
//! their reconstruction operators, the Kuratowski existence construction,
//! embedding frames, sum decompositions of the identity on a sampled line,
//! and conversions between the equivalent frame characterizations.

use std::sync::Arc;

use crate::frame::{
    frame_bounds, measure_decoder_lip, verify_reconstruction, CoefProjection, DecoderStrategy,
    FrameSystem, ReconstructionMap,
};
use crate::lipschitz::{lip_number, FamilyMeta, GeneratorKind, LipschitzFamily, TabulatedMap};
use crate::norms::{seq_norm, tail_bound, FamilyKind, SequenceNormSpec};
use crate::space::FiniteMetricSpace;
use crate::{Error, Result};

/// `(log x)^n / n!`, evaluated stably as a running product.
pub fn log_term(n: usize, x: f64) -> f64 {
    let l = x.ln();
    let mut term = 1.0;
    for k in 1..=n {
        term *= l / k as f64;
    }
    term
}

/// `(1 - 1/x)^n`.
pub fn geometric_term(n: usize, x: f64) -> f64 {
    (1.0 - 1.0 / x).powi(n as i32)
}

/// Uniform `size`-point grid on `[c, d]`, endpoints included.
fn uniform_grid(c: f64, d: f64, size: usize) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::Structural(format!("grid needs at least 2 points, got {size}")));
    }
    if !(c.is_finite() && d.is_finite()) || c >= d {
        return Err(Error::Domain(format!("grid interval [{c}, {d}] must be finite with c < d")));
    }
    let step = (d - c) / (size - 1) as f64;
    let mut grid: Vec<f64> = (0..size).map(|k| c + step * k as f64).collect();
    grid[size - 1] = d;
    Ok(grid)
}

/// The log family `f_0 = 1`, `f_n = (log x)^n / n!` for `n = 1..=truncation`
/// on a uniform grid of `[c, d] ⊂ (1, ∞)`. Differences telescope to
/// `|x - y|` up to the certified tail, so the sampled system is a 1-frame.
/// The decoder is the closed form `S(c) = 1 + |sum_{n >= 1} c_n|`.
pub fn log_frame(
    c: f64,
    d: f64,
    grid_size: usize,
    truncation: usize,
    norm: SequenceNormSpec,
) -> Result<(FrameSystem, ReconstructionMap)> {
    if !(c > 1.0) {
        return Err(Error::Domain(format!(
            "log family needs an interval inside (1, inf); left endpoint {c} touches 1"
        )));
    }
    if truncation < 1 {
        return Err(Error::Domain("truncation must keep at least f_0 and f_1".into()));
    }
    let grid = uniform_grid(c, d, grid_size)?;
    let space = Arc::new(FiniteMetricSpace::from_line(&grid, 0)?);
    let maps: Vec<TabulatedMap> = (0..=truncation)
        .map(|n| TabulatedMap::new(grid.iter().map(|&x| log_term(n, x)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let tail = tail_bound(FamilyKind::Log, (c, d), truncation)?;
    let meta = FamilyMeta {
        kind: GeneratorKind::Log,
        interval: Some((c, d)),
        truncation: Some(truncation),
        positions: Some(grid),
    };
    let family = LipschitzFamily::with_tail(space, maps, tail, Some(meta))?;
    let system = FrameSystem::new(family, norm);
    let mut decoder = ReconstructionMap::new(DecoderStrategy::LogSum);
    decoder.lip_estimate = Some(measure_decoder_lip(&system, &decoder, 16, 0)?);
    Ok((system, decoder))
}

/// The geometric family `f_n = (1 - 1/x)^n` for `n = 0..=truncation` on a
/// uniform grid of `[c, d] ⊂ [1, ∞)`. Every term is nonnegative and
/// nondecreasing in `x`, so differences telescope to `|x - y|` up to the
/// certified tail.
pub fn geometric_frame(
    c: f64,
    d: f64,
    grid_size: usize,
    truncation: usize,
    norm: SequenceNormSpec,
) -> Result<FrameSystem> {
    if !(c >= 1.0) {
        return Err(Error::Domain(format!(
            "geometric family needs an interval inside [1, inf); left endpoint {c} is below 1"
        )));
    }
    let grid = uniform_grid(c, d, grid_size)?;
    let space = Arc::new(FiniteMetricSpace::from_line(&grid, 0)?);
    let maps: Vec<TabulatedMap> = (0..=truncation)
        .map(|n| TabulatedMap::new(grid.iter().map(|&x| geometric_term(n, x)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let tail = tail_bound(FamilyKind::Geometric, (c, d), truncation)?;
    let meta = FamilyMeta {
        kind: GeneratorKind::Geometric,
        interval: Some((c, d)),
        truncation: Some(truncation),
        positions: Some(grid),
    };
    let family = LipschitzFamily::with_tail(space, maps, tail, Some(meta))?;
    Ok(FrameSystem::new(family, norm))
}

/// Verification outcomes for the Kuratowski construction. All three hold
/// on every validated space; they are reported rather than assumed.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KuratowskiChecks {
    /// `max_n |f_n(x)| = d(x, base)` for every point, compared bitwise.
    pub equality_exact: bool,
    pub equality_worst: f64,
    pub equality_witness: Option<usize>,
    /// `max_n |f_n(x) - f_n(y)| <= d(x, y) + 1e-12` on every pair.
    pub bessel_ok: bool,
    pub bessel_excess: f64,
    pub bessel_witness: Option<(usize, usize)>,
    /// `d(S u, S v) <= ||u|| + ||v||` on analysis images.
    pub two_norm_ok: bool,
    pub two_norm_witness: Option<(usize, usize)>,
}

impl KuratowskiChecks {
    pub fn all_ok(&self) -> bool {
        self.equality_exact && self.bessel_ok && self.two_norm_ok
    }
}

/// The existence construction: one Kuratowski functional per non-base
/// point, in point order, under the sup norm. A finite space is its own
/// dense sequence, so the construction is exact: the family is isometric
/// and the nearest-preimage decoder inverts it.
pub fn kuratowski_frame(
    space: &Arc<FiniteMetricSpace>,
) -> Result<(FrameSystem, ReconstructionMap, KuratowskiChecks)> {
    let base = space.base();
    let maps: Vec<TabulatedMap> = (0..space.n())
        .filter(|&t| t != base)
        .map(|t| crate::lipschitz::kuratowski_functional(space, t))
        .collect::<Result<Vec<_>>>()?;
    let meta = FamilyMeta {
        kind: GeneratorKind::Kuratowski,
        interval: None,
        truncation: None,
        positions: None,
    };
    let family = LipschitzFamily::with_tail(space.clone(), maps, 0.0, Some(meta))?;
    let system = FrameSystem::new(family, SequenceNormSpec::infinity());

    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut checks = KuratowskiChecks {
        equality_exact: true,
        equality_worst: 0.0,
        equality_witness: None,
        bessel_ok: true,
        bessel_excess: 0.0,
        bessel_witness: None,
        two_norm_ok: true,
        two_norm_witness: None,
    };
    for x in 0..space.n() {
        let norm = sup(&system.analysis(x));
        let err = (norm - space.d(x, base)).abs();
        if err > checks.equality_worst {
            checks.equality_worst = err;
            checks.equality_witness = Some(x);
        }
        if err != 0.0 {
            checks.equality_exact = false;
        }
    }
    for (x, y) in space.pairs() {
        let excess = sup(&system.diff_vector(x, y)) - space.d(x, y);
        if excess > checks.bessel_excess {
            checks.bessel_excess = excess;
            checks.bessel_witness = Some((x, y));
        }
        if excess > 1e-12 {
            checks.bessel_ok = false;
        }
        // the decoder inverts images exactly, so the two-norm inequality
        // on image vectors is the triangle inequality through the base
        if space.d(x, y) > sup(&system.analysis(x)) + sup(&system.analysis(y)) {
            checks.two_norm_ok = false;
            checks.two_norm_witness = Some((x, y));
        }
    }

    let decoder = crate::frame::decoder_nearest(&system)?;
    Ok((system, decoder, checks))
}

/// A frame from an injective embedding: `g_n` is the `n`-th coordinate of
/// `A`, and the decoder projects (if a projection is supplied) and then
/// takes the exact preimage. The bounds of the resulting system are `A`'s
/// bi-Lipschitz constants with respect to the chosen norm.
pub fn embedding_frame(
    space: &Arc<FiniteMetricSpace>,
    coordinates: Vec<TabulatedMap>,
    norm: SequenceNormSpec,
    projection: Option<CoefProjection>,
) -> Result<(FrameSystem, ReconstructionMap)> {
    for m in &coordinates {
        if m.len() != space.n() {
            return Err(Error::Structural(format!(
                "coordinate map has {} values for {} points",
                m.len(),
                space.n()
            )));
        }
    }
    let family = LipschitzFamily::with_tail(
        space.clone(),
        coordinates,
        0.0,
        Some(FamilyMeta {
            kind: GeneratorKind::Embedding,
            interval: None,
            truncation: None,
            positions: None,
        }),
    )?;
    let system = FrameSystem::new(family, norm);
    for (i, j) in space.pairs() {
        if system.analysis(i) == system.analysis(j) {
            return Err(Error::Hypothesis(format!(
                "embedding collapses points {i} and {j}"
            )));
        }
    }
    if let Some(p) = &projection {
        for x in 0..space.n() {
            let image = system.analysis(x);
            let fixed = p.apply(&system, &image)?;
            let diff: Vec<f64> = fixed.iter().zip(&image).map(|(a, b)| a - b).collect();
            let defect = seq_norm(&diff, system.norm());
            if defect > 1e-12 * (1.0 + seq_norm(&image, system.norm())) {
                return Err(Error::Hypothesis(format!(
                    "projection moves the image of point {x} by {defect:.3e}"
                )));
            }
        }
    }
    let strategy = DecoderStrategy::ProjectThenNearest(
        projection.unwrap_or(CoefProjection::NearestImage),
    );
    let mut decoder = ReconstructionMap::new(strategy);
    decoder.lip_estimate = Some(measure_decoder_lip(&system, &decoder, 16, 0)?);
    Ok((system, decoder))
}

/// Splits the identity on a sampled interval into `parts` maps summing
/// to `x` exactly at every grid point: `f_1 = x/m + phi`, `f_2 = x/m - phi`,
/// middle maps `x/m`, and a float-exact residual last map. The linear
/// coordinate-sum decoder inverts the analysis map exactly.
pub fn sum_decomposition_frame(
    positions: &[f64],
    parts: usize,
    phi: &[f64],
) -> Result<(FrameSystem, ReconstructionMap)> {
    if parts < 2 {
        return Err(Error::Structural(format!("need at least 2 parts, got {parts}")));
    }
    if phi.len() != positions.len() {
        return Err(Error::Structural(format!(
            "phi has {} values for {} grid points",
            phi.len(),
            positions.len()
        )));
    }
    let space = Arc::new(FiniteMetricSpace::from_line(positions, 0)?);
    let phi_map = TabulatedMap::new(phi.to_vec())?;
    let phi_lip = lip_number(&phi_map, &space)?;
    let m = parts as f64;
    if phi_lip.value >= 1.0 / m {
        return Err(Error::Hypothesis(format!(
            "phi has Lipschitz number {:.6} at pair {:?}; splitting into {parts} parts needs < {:.6} to keep each map bi-Lipschitz",
            phi_lip.value, phi_lip.witness, 1.0 / m
        )));
    }
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(parts);
    values.push(positions.iter().zip(phi).map(|(&x, &p)| x / m + p).collect());
    if parts > 2 {
        values.push(positions.iter().zip(phi).map(|(&x, &p)| x / m - p).collect());
        for _ in 2..parts - 1 {
            values.push(positions.iter().map(|&x| x / m).collect());
        }
    }
    // residual last map: whatever is missing from the running sum, so the
    // tabulated family sums back to x without rounding residue
    let mut residual: Vec<f64> = Vec::with_capacity(positions.len());
    for (idx, &x) in positions.iter().enumerate() {
        let partial: f64 = values.iter().map(|v| v[idx]).sum();
        residual.push(x - partial);
    }
    values.push(residual);
    for (idx, &x) in positions.iter().enumerate() {
        let total: f64 = values.iter().map(|v| v[idx]).sum();
        if total != x {
            return Err(Error::Degenerate(format!(
                "grid point {x} cannot be decomposed exactly in floating point (sum {total})"
            )));
        }
    }
    let maps = values
        .into_iter()
        .map(TabulatedMap::new)
        .collect::<Result<Vec<_>>>()?;
    let meta = FamilyMeta {
        kind: GeneratorKind::SumDecomposition,
        interval: None,
        truncation: None,
        positions: Some(positions.to_vec()),
    };
    let family = LipschitzFamily::with_tail(space, maps, 0.0, Some(meta))?;
    let system = FrameSystem::new(family, SequenceNormSpec::new(1.0)?);
    let mut decoder = ReconstructionMap::new(DecoderStrategy::CoordinateSum);
    decoder.lip_estimate = Some(measure_decoder_lip(&system, &decoder, 16, 0)?);
    Ok((system, decoder))
}

/// One of the three equivalent ways to present a frame's reconstruction
/// structure: a decoder `S`, an idempotent coefficient projection `P`, or
/// an extension `V` of the inverse analysis map.
#[derive(Debug, Clone)]
pub enum Characterization {
    Reconstruction(ReconstructionMap),
    Projection(CoefProjection),
    Extension(ReconstructionMap),
}

/// All three presentations, produced from any one of them.
#[derive(Debug, Clone)]
pub struct CharacterizationTriple {
    pub s: ReconstructionMap,
    pub p: CoefProjection,
    pub v: ReconstructionMap,
}

/// Converts between the equivalent characterizations: from `S` take
/// `P = theta ∘ S` and `V = S`; from `P` take `V = theta^{-1} ∘ P` and
/// `S = V`; from `V` take `S = V` and `P = theta ∘ V`. Each output is
/// checked: `S` must invert the analysis map, `P` must be idempotent, and
/// `V` must restrict to `theta^{-1}` on the images (all within `tol`).
pub fn char_conversions(
    f: &FrameSystem,
    given: Characterization,
    tol: f64,
) -> Result<CharacterizationTriple> {
    let bounds = frame_bounds(f);
    if bounds.a <= 0.0 {
        return Err(Error::Degenerate(format!(
            "lower frame bound vanishes at pair {:?}: the analysis map has no inverse",
            bounds.witness_low
        )));
    }
    let triple = match given {
        Characterization::Reconstruction(s) => {
            let p = CoefProjection::ThroughDecoder(Box::new(s.clone()));
            CharacterizationTriple { v: s.clone(), s, p }
        }
        Characterization::Projection(p) => {
            let mut v = ReconstructionMap::new(DecoderStrategy::ProjectThenNearest(p.clone()));
            v.lip_estimate = Some(measure_decoder_lip(f, &v, 16, 0)?);
            CharacterizationTriple { s: v.clone(), p, v }
        }
        Characterization::Extension(v) => {
            let p = CoefProjection::ThroughDecoder(Box::new(v.clone()));
            CharacterizationTriple { s: v.clone(), p, v }
        }
    };
    let rec = verify_reconstruction(f, &triple.s, tol, 8, 0)?;
    if !rec.passed {
        return Err(Error::Hypothesis(format!(
            "decoder fails to invert the analysis map at point {} (error {:.3e})",
            rec.failures[0].point, rec.failures[0].error
        )));
    }
    let defect = idempotence_defect(f, &triple.p, 16, 0)?;
    if defect > tol {
        return Err(Error::Hypothesis(format!(
            "projection is not idempotent within {tol:.3e} (defect {defect:.3e})"
        )));
    }
    Ok(triple)
}

/// Largest `||P(P(c)) - P(c)||` over analysis images plus jittered samples.
fn idempotence_defect(
    f: &FrameSystem,
    p: &CoefProjection,
    extra: usize,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = f.space().n();
    let sep = f.min_image_separation();
    let mut samples: Vec<Vec<f64>> = (0..n).map(|x| f.analysis(x)).collect();
    for _ in 0..extra {
        let x = rng.gen_range(0..n);
        let mut c = f.analysis(x);
        for ci in c.iter_mut() {
            *ci += rng.gen_range(-0.45..0.45) * sep;
        }
        samples.push(c);
    }
    let mut worst = 0.0f64;
    for c in &samples {
        let pc = p.apply(f, c)?;
        let ppc = p.apply(f, &pc)?;
        let diff: Vec<f64> = ppc.iter().zip(&pc).map(|(a, b)| a - b).collect();
        worst = worst.max(seq_norm(&diff, f.norm()));
    }
    Ok(worst)
}
