//! The Lipschitz-free space over a finite pointed metric space: molecules,
//! the free norm by linear programming against the Lip_0 unit ball, an
//! independent vertex-enumeration oracle for small supports, linearization
//! of Lipschitz maps, and the frame-correspondence check.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::Serialize;

use crate::frame::{frame_bounds, FrameBounds, FrameSystem};
use crate::lipschitz::{LipNumber, LipschitzFamily, TabulatedMap};
use crate::space::FiniteMetricSpace;
use crate::{Error, Result};

/// A finitely supported signed combination of point evaluations,
/// indexed by the points of a space. The coefficient on the base point is
/// permitted and never affects the norm, since test functions vanish there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Molecule {
    pub coefficients: Vec<f64>,
}

impl Molecule {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Structural("molecule has no coefficients".into()));
        }
        if let Some(i) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::Structural(format!("coefficient {i} is not finite")));
        }
        Ok(Self { coefficients })
    }

    pub fn zero(len: usize) -> Self {
        Self {
            coefficients: vec![0.0; len],
        }
    }

    /// The point evaluation `delta_x`.
    pub fn delta(len: usize, x: usize) -> Result<Self> {
        if x >= len {
            return Err(Error::Structural(format!(
                "point index {x} out of range for {len} points"
            )));
        }
        let mut coefficients = vec![0.0; len];
        coefficients[x] = 1.0;
        Ok(Self { coefficients })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Indices with nonzero coefficient.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

impl Add for Molecule {
    type Output = Molecule;

    fn add(self, rhs: Molecule) -> Molecule {
        assert_eq!(self.len(), rhs.len(), "molecule lengths differ");
        Molecule {
            coefficients: self
                .coefficients
                .iter()
                .zip(&rhs.coefficients)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for Molecule {
    type Output = Molecule;

    fn sub(self, rhs: Molecule) -> Molecule {
        assert_eq!(self.len(), rhs.len(), "molecule lengths differ");
        Molecule {
            coefficients: self
                .coefficients
                .iter()
                .zip(&rhs.coefficients)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for Molecule {
    type Output = Molecule;

    fn neg(self) -> Molecule {
        Molecule {
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul<f64> for Molecule {
    type Output = Molecule;

    fn mul(self, rhs: f64) -> Molecule {
        Molecule {
            coefficients: self.coefficients.iter().map(|c| c * rhs).collect(),
        }
    }
}

/// The point evaluation `delta_x` as a molecule over `m`.
pub fn embed(m: &FiniteMetricSpace, x: usize) -> Result<Molecule> {
    Molecule::delta(m.n(), x)
}

/// A free-norm value together with the function that attains it, so the
/// result can be re-checked without re-solving.
#[derive(Debug, Clone, Serialize)]
pub struct FreeNormCertificate {
    pub value: f64,
    /// The maximizing Lip_0 function, feasible for the unit ball.
    pub optimal_f: Vec<f64>,
    /// Distance between the solver's claimed optimum and the value the
    /// certified feasible function actually attains.
    pub duality_gap: f64,
}

/// Computes the free norm of a molecule: the maximum of `sum_i m_i f(i)`
/// over functions with `f(base) = 0` and `|f(i) - f(j)| <= d(i, j)`.
///
/// The solver's answer is re-certified: the returned function is rescaled
/// into the feasible set if it sticks out, and the reported value is what
/// that function attains. A gap above `tol` is an error carrying both
/// bounds.
pub fn free_norm(m: &FiniteMetricSpace, molecule: &Molecule, tol: f64) -> Result<FreeNormCertificate> {
    if molecule.len() != m.n() {
        return Err(Error::Structural(format!(
            "molecule has {} coefficients for {} points",
            molecule.len(),
            m.n()
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let n = m.n();
    let base = m.base();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut vars = vec![None; n];
    for i in 0..n {
        if i == base {
            continue;
        }
        let reach = m.d(i, base);
        vars[i] = Some(problem.add_var(molecule.coefficients[i], (-reach, reach)));
    }
    for (i, j) in m.pairs() {
        match (vars[i], vars[j]) {
            (Some(vi), Some(vj)) => {
                let d = m.d(i, j);
                problem.add_constraint(&[(vi, 1.0), (vj, -1.0)], ComparisonOp::Le, d);
                problem.add_constraint(&[(vi, -1.0), (vj, 1.0)], ComparisonOp::Le, d);
            }
            (Some(v), None) | (None, Some(v)) => {
                let d = m.d(i, j);
                problem.add_constraint(&[(v, 1.0)], ComparisonOp::Le, d);
                problem.add_constraint(&[(v, -1.0)], ComparisonOp::Le, d);
            }
            (None, None) => {}
        }
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::Solver(format!("free-norm linear program failed: {e:?}")))?;
    let claimed = solution.objective();
    let mut f: Vec<f64> = (0..n)
        .map(|i| vars[i].map_or(0.0, |v| *solution.var_value(v)))
        .collect();
    let mut worst_ratio = 0.0f64;
    for (i, j) in m.pairs() {
        worst_ratio = worst_ratio.max((f[i] - f[j]).abs() / m.d(i, j));
    }
    if worst_ratio > 1.0 {
        for v in &mut f {
            *v /= worst_ratio;
        }
    }
    let mut value: f64 = molecule
        .coefficients
        .iter()
        .zip(&f)
        .enumerate()
        .map(|(i, (c, fi))| if i == base { 0.0 } else { c * fi })
        .sum();
    if value < 0.0 {
        f = vec![0.0; n];
        value = 0.0;
    }
    let duality_gap = (claimed - value).abs();
    if duality_gap > tol {
        return Err(Error::Solver(format!(
            "duality gap {duality_gap:.3e} exceeds tolerance {tol:.3e}: certified value {value:.12}, solver claim {claimed:.12}"
        )));
    }
    Ok(FreeNormCertificate {
        value,
        optimal_f: f,
        duality_gap,
    })
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .expect("finite entries")
        })?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..k {
            let factor = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in (row + 1)..k {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Independent check of [`free_norm`] for molecules supported on at most
/// four non-base points: enumerates the vertices of the constraint
/// polytope restricted to the support plus the base, solving every full
/// rank active set directly. Restriction loses nothing because a feasible
/// function on the subset extends to the whole space without increasing
/// its Lipschitz constant, and the objective only sees the support.
pub fn free_norm_oracle(m: &FiniteMetricSpace, molecule: &Molecule) -> Result<f64> {
    if molecule.len() != m.n() {
        return Err(Error::Structural(format!(
            "molecule has {} coefficients for {} points",
            molecule.len(),
            m.n()
        )));
    }
    let base = m.base();
    let support: Vec<usize> = molecule
        .support()
        .into_iter()
        .filter(|&i| i != base)
        .collect();
    let k = support.len();
    if k > 4 {
        return Err(Error::Domain(format!(
            "oracle handles support of at most 4 non-base points, got {k}"
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    // each constraint is row . f <= rhs over the support variables
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for a in 0..k {
        let d = m.d(support[a], base);
        let mut row = vec![0.0; k];
        row[a] = 1.0;
        rows.push((row.clone(), d));
        row[a] = -1.0;
        rows.push((row, d));
    }
    for a in 0..k {
        for b in (a + 1)..k {
            let d = m.d(support[a], support[b]);
            let mut row = vec![0.0; k];
            row[a] = 1.0;
            row[b] = -1.0;
            rows.push((row.clone(), d));
            row[a] = -1.0;
            row[b] = 1.0;
            rows.push((row, d));
        }
    }
    let mut best = 0.0f64;
    for active in combinations(rows.len(), k) {
        let a: Vec<Vec<f64>> = active.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<f64> = active.iter().map(|&r| rows[r].1).collect();
        let Some(f) = solve_square(a, b) else {
            continue;
        };
        let feasible = rows.iter().all(|(row, rhs)| {
            let lhs: f64 = row.iter().zip(&f).map(|(r, v)| r * v).sum();
            lhs <= rhs + 1e-9 * (1.0 + rhs)
        });
        if !feasible {
            continue;
        }
        let objective: f64 = support
            .iter()
            .zip(&f)
            .map(|(&i, v)| molecule.coefficients[i] * v)
            .sum();
        best = best.max(objective);
    }
    Ok(best)
}

/// The linear operator induced by a Lip_0 map: `T_f(m) = sum_i m_i f(i)`.
#[derive(Debug, Clone, Serialize)]
pub struct Linearization {
    pub values: Vec<f64>,
}

/// Linearizes a map vanishing at the base point.
pub fn linearize(m: &FiniteMetricSpace, f: &TabulatedMap) -> Result<Linearization> {
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
    Ok(Linearization {
        values: f.values.clone(),
    })
}

impl Linearization {
    pub fn apply(&self, molecule: &Molecule) -> Result<f64> {
        if molecule.len() != self.values.len() {
            return Err(Error::Structural(format!(
                "molecule has {} coefficients for {} points",
                molecule.len(),
                self.values.len()
            )));
        }
        Ok(molecule
            .coefficients
            .iter()
            .zip(&self.values)
            .map(|(c, v)| c * v)
            .sum())
    }

    /// Operator norm restricted to two-point molecules:
    /// `sup |T(delta_i - delta_j)| / d(i, j)`, routed through the molecule
    /// arithmetic. The dipole's free norm is `d(i, j)` by isometry, so no
    /// solve is needed for the denominator.
    pub fn two_point_norm(&self, m: &FiniteMetricSpace) -> Result<LipNumber> {
        if self.values.len() != m.n() {
            return Err(Error::Structural(format!(
                "operator has {} values for {} points",
                self.values.len(),
                m.n()
            )));
        }
        let mut best = LipNumber {
            value: 0.0,
            witness: (0, 1),
        };
        let mut first = true;
        for (i, j) in m.pairs() {
            let dipole = Molecule::delta(m.n(), i)? - Molecule::delta(m.n(), j)?;
            let ratio = self.apply(&dipole)?.abs() / m.d(i, j);
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
}

/// Outcome of transplanting a frame system onto its image in the free
/// space and re-measuring the bounds there.
#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceReport {
    pub original: FrameBounds,
    pub embedded: FrameBounds,
    /// Largest deviation of an embedded distance from the original one.
    pub max_distance_defect: f64,
    pub lower_gap: f64,
    pub upper_gap: f64,
    pub tolerance: f64,
    pub agree: bool,
}

/// Builds the embedded point set `{delta_x}` with the free-norm metric
/// (one solve per pair), transplants `{T_{f_n}}` onto it, and compares the
/// frame bounds on both sides. All maps must vanish at the base point.
pub fn correspondence_check(f: &FrameSystem, tol: f64) -> Result<CorrespondenceReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let space = f.space();
    for map in f.family().maps() {
        let at_base = map.values[space.base()];
        if at_base.abs() > 1e-12 {
            return Err(Error::NotNormalized(at_base.abs()));
        }
    }
    let original = frame_bounds(f);

    let pair_list: Vec<(usize, usize)> = space.pairs().collect();
    let solved: Vec<((usize, usize), f64)> = pair_list
        .par_iter()
        .map(|&(i, j)| {
            let dipole = Molecule::delta(space.n(), i)? - Molecule::delta(space.n(), j)?;
            let cert = free_norm(space, &dipole, tol)?;
            Ok(((i, j), cert.value))
        })
        .collect::<Result<_>>()?;
    let n = space.n();
    let mut rows = vec![vec![0.0; n]; n];
    let mut max_distance_defect = 0.0f64;
    for ((i, j), value) in solved {
        rows[i][j] = value;
        rows[j][i] = value;
        max_distance_defect = max_distance_defect.max((value - space.d(i, j)).abs());
    }
    let ids = space
        .point_ids()
        .iter()
        .map(|id| format!("e({id})"))
        .collect();
    let slack = 1e-8 * (1.0 + space.diameter());
    let embedded_space = FiniteMetricSpace::with_tolerance(ids, space.base(), rows, slack)?;
    let family = LipschitzFamily::with_tail(
        Arc::new(embedded_space),
        f.family().maps().to_vec(),
        f.family().tail_bound(),
        None,
    )?;
    let embedded_system = FrameSystem::new(family, *f.norm());
    let embedded = frame_bounds(&embedded_system);

    let lower_gap = (original.a - embedded.a).abs();
    let upper_gap = (original.b - embedded.b).abs();
    Ok(CorrespondenceReport {
        agree: lower_gap <= tol && upper_gap <= tol,
        original,
        embedded,
        max_distance_defect,
        lower_gap,
        upper_gap,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::kuratowski_frame;
    use crate::lipschitz::{kuratowski_functional, lip_number};
    use crate::norms::SequenceNormSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_013() -> FiniteMetricSpace {
        FiniteMetricSpace::from_line(&[0.0, 1.0, 3.0], 0).unwrap()
    }

    fn check_certificate(m: &FiniteMetricSpace, mol: &Molecule, cert: &FreeNormCertificate) {
        assert_eq!(cert.optimal_f[m.base()], 0.0);
        for (i, j) in m.pairs() {
            let ratio = (cert.optimal_f[i] - cert.optimal_f[j]).abs() / m.d(i, j);
            assert!(ratio <= 1.0 + 1e-9, "infeasible certificate: ratio {ratio}");
        }
        let attained: f64 = mol
            .coefficients
            .iter()
            .zip(&cert.optimal_f)
            .enumerate()
            .map(|(i, (c, f))| if i == m.base() { 0.0 } else { c * f })
            .sum();
        assert!(
            (attained - cert.value).abs() <= cert.duality_gap + 1e-12,
            "certificate does not attain its value"
        );
    }

    #[test]
    fn dipoles_recover_distances_on_a_line() {
        let m = line_013();
        for (i, j) in m.pairs() {
            let dipole = embed(&m, i).unwrap() - embed(&m, j).unwrap();
            let cert = free_norm(&m, &dipole, 1e-9).unwrap();
            assert!(
                (cert.value - m.d(i, j)).abs() <= 1e-9,
                "pair ({i}, {j}): {} vs {}",
                cert.value,
                m.d(i, j)
            );
            check_certificate(&m, &dipole, &cert);
        }
    }

    #[test]
    fn single_delta_reaches_the_base_distance() {
        let m = line_013();
        let cert = free_norm(&m, &embed(&m, 1).unwrap(), 1e-9).unwrap();
        assert!((cert.value - 1.0).abs() <= 1e-9);
        let doubled = embed(&m, 1).unwrap() * 2.0;
        let cert2 = free_norm(&m, &doubled, 1e-9).unwrap();
        assert!((cert2.value - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn same_sign_sum_is_attained_by_the_distance_function() {
        let m = line_013();
        let sum = embed(&m, 1).unwrap() + embed(&m, 2).unwrap();
        let cert = free_norm(&m, &sum, 1e-9).unwrap();
        assert!((cert.value - 4.0).abs() <= 1e-9);
        assert!((cert.optimal_f[1] - 1.0).abs() <= 1e-9);
        assert!((cert.optimal_f[2] - 3.0).abs() <= 1e-9);
        check_certificate(&m, &sum, &cert);
    }

    #[test]
    fn base_coefficient_never_matters() {
        let m = line_013();
        let mut with_base = embed(&m, 1).unwrap() - embed(&m, 2).unwrap();
        let plain = free_norm(&m, &with_base, 1e-9).unwrap();
        with_base.coefficients[0] = 7.0;
        let loaded = free_norm(&m, &with_base, 1e-9).unwrap();
        assert_eq!(plain.value, loaded.value);
    }

    #[test]
    fn zero_molecule_has_norm_zero() {
        let m = line_013();
        let cert = free_norm(&m, &Molecule::zero(3), 1e-9).unwrap();
        assert_eq!(cert.value, 0.0);
    }

    #[test]
    fn oracle_matches_pinned_examples() {
        let two = FiniteMetricSpace::from_line(&[0.0, 3.0], 0).unwrap();
        let value = free_norm_oracle(&two, &embed(&two, 1).unwrap()).unwrap();
        assert!((value - 3.0).abs() <= 1e-12);

        let m = line_013();
        let dipole = embed(&m, 1).unwrap() - embed(&m, 2).unwrap();
        assert!((free_norm_oracle(&m, &dipole).unwrap() - 2.0).abs() <= 1e-12);
        let sum = embed(&m, 1).unwrap() + embed(&m, 2).unwrap();
        assert!((free_norm_oracle(&m, &sum).unwrap() - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn oracle_refuses_large_supports() {
        let m = FiniteMetricSpace::random_euclidean(8, 3, 11).unwrap();
        let mol = Molecule::new(vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            free_norm_oracle(&m, &mol),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn solver_and_oracle_agree_on_random_molecules() {
        let m = FiniteMetricSpace::random_euclidean(10, 3, 29).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut mol = Molecule::zero(10);
            for _ in 0..rng.gen_range(1..=4) {
                let i = rng.gen_range(1..10);
                mol.coefficients[i] = rng.gen_range(-2.0..2.0);
            }
            let lp = free_norm(&m, &mol, 1e-8).unwrap();
            let oracle = free_norm_oracle(&m, &mol).unwrap();
            assert!(
                (lp.value - oracle).abs() <= 1e-8,
                "solver {} vs oracle {} on {:?}",
                lp.value,
                oracle,
                mol.coefficients
            );
        }
    }

    #[test]
    fn embedding_is_isometric_on_a_random_space() {
        let m = FiniteMetricSpace::random_euclidean(8, 2, 5).unwrap();
        let base = embed(&m, m.base()).unwrap();
        assert!(free_norm(&m, &base.clone(), 1e-9).unwrap().value <= 1e-12);
        assert_eq!(
            free_norm(&m, &(base.clone() - base), 1e-9).unwrap().value,
            0.0
        );
        for (i, j) in m.pairs() {
            let dipole = embed(&m, i).unwrap() - embed(&m, j).unwrap();
            let cert = free_norm(&m, &dipole, 1e-8).unwrap();
            assert!((cert.value - m.d(i, j)).abs() <= 1e-8);
        }
    }

    #[test]
    fn linearization_evaluates_deltas_exactly() {
        let m = FiniteMetricSpace::random_euclidean(9, 3, 41).unwrap();
        let f = kuratowski_functional(&m, 4).unwrap();
        let t = linearize(&m, &f).unwrap();
        let at_target = t.apply(&embed(&m, 4).unwrap()).unwrap();
        assert_eq!(at_target, f.values[4]);
        assert_eq!(at_target, m.d(4, m.base()));
        assert_eq!(t.apply(&Molecule::zero(9)).unwrap(), 0.0);
    }

    #[test]
    fn linearization_requires_a_vanishing_base_value() {
        let m = line_013();
        let f = TabulatedMap::new(vec![0.5, 1.0, 3.0]).unwrap();
        assert!(matches!(
            linearize(&m, &f),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn two_point_norm_is_the_lipschitz_number() {
        let m = FiniteMetricSpace::random_euclidean(9, 3, 41).unwrap();
        let f = kuratowski_functional(&m, 4).unwrap();
        let t = linearize(&m, &f).unwrap();
        let by_molecules = t.two_point_norm(&m).unwrap();
        let direct = lip_number(&f, &m).unwrap();
        assert_eq!(by_molecules.value, direct.value);
        assert_eq!(by_molecules.witness, direct.witness);
    }

    #[test]
    fn sampled_molecules_respect_the_operator_bound() {
        let m = FiniteMetricSpace::random_euclidean(10, 3, 7).unwrap();
        let f = kuratowski_functional(&m, 3).unwrap();
        let t = linearize(&m, &f).unwrap();
        let lip = lip_number(&f, &m).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let mut mol = Molecule::zero(10);
            for c in mol.coefficients.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let norm = free_norm(&m, &mol, 1e-8).unwrap().value;
            let image = t.apply(&mol).unwrap().abs();
            assert!(
                image <= (lip + 1e-8) * norm + 1e-12,
                "operator bound violated: |T m| = {image}, bound {}",
                (lip + 1e-8) * norm
            );
        }
    }

    #[test]
    fn kuratowski_frame_bounds_survive_embedding() {
        let m = Arc::new(FiniteMetricSpace::random_euclidean(8, 2, 19).unwrap());
        let (system, _, _) = kuratowski_frame(&m).unwrap();
        let report = correspondence_check(&system, 1e-8).unwrap();
        assert!(report.agree, "{report:?}");
        assert!(report.max_distance_defect <= 1e-8);
        assert!((report.embedded.a - 1.0).abs() <= 1e-8);
        assert!((report.embedded.b - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn two_point_correspondence_is_a_single_ratio() {
        let m = Arc::new(FiniteMetricSpace::from_line(&[0.0, 2.0], 0).unwrap());
        let map = TabulatedMap::new(vec![0.0, 1.5]).unwrap();
        let family = LipschitzFamily::new(Arc::clone(&m), vec![map]).unwrap();
        let system = FrameSystem::new(family, SequenceNormSpec::new(1.0).unwrap());
        let report = correspondence_check(&system, 1e-8).unwrap();
        let ratio = 1.5 / 2.0;
        assert!((report.original.a - ratio).abs() <= 1e-12);
        assert!((report.embedded.a - ratio).abs() <= 1e-8);
        assert!(report.agree);
    }

    #[test]
    fn raw_coefficient_metric_is_not_the_free_metric() {
        // skipping the solve and measuring dipoles with the Euclidean
        // coefficient norm makes every pair equidistant, which destroys
        // the bounds of any non-uniform frame
        let m = Arc::new(line_013());
        let (system, _, _) = kuratowski_frame(&m).unwrap();
        let original = frame_bounds(&system);
        let sqrt2 = 2f64.sqrt();
        let rows = vec![
            vec![0.0, sqrt2, sqrt2],
            vec![sqrt2, 0.0, sqrt2],
            vec![sqrt2, sqrt2, 0.0],
        ];
        let fake = FiniteMetricSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            0,
            rows,
        )
        .unwrap();
        let family = LipschitzFamily::new(
            Arc::new(fake),
            system.family().maps().to_vec(),
        )
        .unwrap();
        let fake_system = FrameSystem::new(family, *system.norm());
        let fake_bounds = frame_bounds(&fake_system);
        assert!(
            (original.a - fake_bounds.a).abs() > 1e-3,
            "negative control failed to fail: {} vs {}",
            original.a,
            fake_bounds.a
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn dipoles_are_isometric_everywhere(seed in 0u64..500, n in 5usize..9) {
            let m = FiniteMetricSpace::random_euclidean(n, 3, seed).unwrap();
            for (i, j) in m.pairs() {
                let dipole = embed(&m, i).unwrap() - embed(&m, j).unwrap();
                let cert = free_norm(&m, &dipole, 1e-8).unwrap();
                prop_assert!((cert.value - m.d(i, j)).abs() <= 1e-8);
            }
        }

        #[test]
        fn norm_axioms_hold_on_random_molecules(
            seed in 0u64..500,
            lambda in -3.0f64..3.0,
        ) {
            let m = FiniteMetricSpace::random_euclidean(7, 3, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let mut a = Molecule::zero(7);
            let mut b = Molecule::zero(7);
            for i in 0..7 {
                a.coefficients[i] = rng.gen_range(-1.0..1.0);
                b.coefficients[i] = rng.gen_range(-1.0..1.0);
            }
            let na = free_norm(&m, &a, 1e-8).unwrap().value;
            let nb = free_norm(&m, &b, 1e-8).unwrap().value;
            let scaled = free_norm(&m, &(a.clone() * lambda), 1e-8).unwrap().value;
            prop_assert!(
                (scaled - lambda.abs() * na).abs() <= 1e-8 * (1.0 + na),
                "homogeneity: {scaled} vs {}", lambda.abs() * na
            );
            let together = free_norm(&m, &(a + b), 1e-8).unwrap().value;
            prop_assert!(together <= na + nb + 2e-8, "triangle: {together} > {na} + {nb}");
        }

        #[test]
        fn certificates_attain_their_values(seed in 0u64..500) {
            let m = FiniteMetricSpace::random_euclidean(6, 2, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mol = Molecule::zero(6);
            for i in 0..6 {
                mol.coefficients[i] = rng.gen_range(-2.0..2.0);
            }
            let cert = free_norm(&m, &mol, 1e-8).unwrap();
            check_certificate(&m, &mol, &cert);
        }

        #[test]
        fn oracle_agreement_on_small_supports(seed in 0u64..500) {
            let m = FiniteMetricSpace::random_euclidean(9, 3, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7).wrapping_add(13));
            let mut mol = Molecule::zero(9);
            for _ in 0..rng.gen_range(1..=4) {
                let i = rng.gen_range(1..9);
                mol.coefficients[i] = rng.gen_range(-2.0..2.0);
            }
            let lp = free_norm(&m, &mol, 1e-8).unwrap().value;
            let oracle = free_norm_oracle(&m, &mol).unwrap();
            prop_assert!((lp - oracle).abs() <= 1e-8, "solver {lp} vs oracle {oracle}");
        }
    }
}
