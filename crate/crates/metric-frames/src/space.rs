//! Finite pointed metric spaces: validation, coordinate construction, products.

use serde::Serialize;

use crate::{Error, Result};

/// Which metric axiom a matrix entry or triple breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Asymmetry,
    Negative,
    NonzeroDiagonal,
    ZeroOffdiagonal,
    Triangle,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Asymmetry => "asymmetry",
            ViolationKind::Negative => "negative",
            ViolationKind::NonzeroDiagonal => "nonzero-diagonal",
            ViolationKind::ZeroOffdiagonal => "zero-offdiagonal",
            ViolationKind::Triangle => "triangle",
        }
    }
}

/// One axiom violation with its witness indices.
///
/// For `Triangle` the triple `(i, j, k)` means `d(i,k) > d(i,j) + d(j,k)`
/// (endpoints `i, k` via `j`) and the magnitude is the excess. For the
/// pairwise kinds only `i, j` matter and `k` repeats `j`.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub triple: (usize, usize, usize),
    pub magnitude: f64,
}

/// Result of checking a distance matrix against the metric axioms.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// A finite metric space with a distinguished base point.
///
/// Distances are stored row-major and validated at construction, so every
/// downstream scan may divide by `d(i, j)` for `i != j` without checking.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    point_ids: Vec<String>,
    base_index: usize,
    dist: Vec<f64>,
    n: usize,
}

/// Checks a square matrix against the metric axioms exactly.
pub fn validate_metric(rows: &[Vec<f64>]) -> Result<ValidationReport> {
    validate_metric_with_tolerance(rows, 0.0)
}

/// Checks a square matrix against the metric axioms, allowing triangle
/// slack of `tol`.
///
/// Symmetry, sign, and diagonal checks stay exact; only the triangle
/// comparison is relaxed to `d(i,k) <= d(i,j) + d(j,k) + tol`. Non-square
/// matrices and non-finite entries are structural errors, not violations.
pub fn validate_metric_with_tolerance(rows: &[Vec<f64>], tol: f64) -> Result<ValidationReport> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Structural("empty distance matrix".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Structural(format!(
                "row {i} has length {}, expected {n}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Structural(format!(
                "entry ({i}, {j}) is not finite"
            )));
        }
    }
    if !tol.is_finite() || tol < 0.0 {
        return Err(Error::Structural(format!("tolerance {tol} must be finite and nonnegative")));
    }

    let mut violations = Vec::new();
    for i in 0..n {
        if rows[i][i] != 0.0 {
            let kind = if rows[i][i] < 0.0 {
                ViolationKind::Negative
            } else {
                ViolationKind::NonzeroDiagonal
            };
            violations.push(Violation {
                kind,
                triple: (i, i, i),
                magnitude: rows[i][i],
            });
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            if rows[i][j] < 0.0 {
                violations.push(Violation {
                    kind: ViolationKind::Negative,
                    triple: (i, j, j),
                    magnitude: rows[i][j],
                });
            } else if rows[i][j] == 0.0 {
                violations.push(Violation {
                    kind: ViolationKind::ZeroOffdiagonal,
                    triple: (i, j, j),
                    magnitude: 0.0,
                });
            }
            if i < j && rows[i][j] != rows[j][i] {
                violations.push(Violation {
                    kind: ViolationKind::Asymmetry,
                    triple: (i, j, j),
                    magnitude: (rows[i][j] - rows[j][i]).abs(),
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let excess = rows[i][k] - rows[i][j] - rows[j][k];
                if excess > tol {
                    violations.push(Violation {
                        kind: ViolationKind::Triangle,
                        triple: (i, j, k),
                        magnitude: excess,
                    });
                }
            }
        }
    }

    Ok(ValidationReport {
        valid: violations.is_empty(),
        violations,
    })
}

impl FiniteMetricSpace {
    /// Builds a space from labels, a base index, and a distance matrix,
    /// validating the metric axioms exactly.
    pub fn new(point_ids: Vec<String>, base_index: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(point_ids, base_index, rows, 0.0)
    }

    /// Like [`FiniteMetricSpace::new`] but allows triangle slack of `tol`,
    /// for matrices whose entries come out of a solver rather than a ruler.
    pub fn with_tolerance(
        point_ids: Vec<String>,
        base_index: usize,
        rows: Vec<Vec<f64>>,
        tol: f64,
    ) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Structural(format!(
                "{} point(s) given, need at least 2",
                rows.len()
            )));
        }
        let report = validate_metric_with_tolerance(&rows, tol)?;
        if !report.valid {
            let v = &report.violations[0];
            return Err(Error::InvalidMetric {
                kind: v.kind.as_str().into(),
                i: v.triple.0,
                j: v.triple.1,
                k: v.triple.2,
                magnitude: v.magnitude,
            });
        }
        let n = rows.len();
        if point_ids.len() != n {
            return Err(Error::Structural(format!(
                "{} labels for {n} points",
                point_ids.len()
            )));
        }
        if base_index >= n {
            return Err(Error::Structural(format!(
                "base index {base_index} out of range for {n} points"
            )));
        }
        let mut dist = Vec::with_capacity(n * n);
        for row in &rows {
            dist.extend_from_slice(row);
        }
        Ok(Self {
            point_ids,
            base_index,
            dist,
            n,
        })
    }

    /// Builds a space of pairwise-distinct coordinate vectors under the
    /// Euclidean distance. Labels are `p0, p1, ...` in input order.
    /// Individually rounded distances can miss the triangle inequality by
    /// an ulp (collinear points make this systematic), so the check gets
    /// the same ulp-scale allowance as [`Self::from_line`].
    pub fn from_points(coords: &[Vec<f64>], base_index: usize) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Structural(format!(
                "{} point(s) given, need at least 2",
                coords.len()
            )));
        }
        let dim = coords[0].len();
        for (i, c) in coords.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Structural(format!(
                    "point {i} has dimension {}, expected {dim}",
                    c.len()
                )));
            }
            if let Some(j) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Structural(format!(
                    "coordinate ({i}, {j}) is not finite"
                )));
            }
        }
        let n = coords.len();
        let mut rows = vec![vec![0.0; n]; n];
        let mut diameter = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = euclidean(&coords[i], &coords[j]);
                if d == 0.0 {
                    return Err(Error::InvalidMetric {
                        kind: "zero-offdiagonal".into(),
                        i,
                        j,
                        k: j,
                        magnitude: 0.0,
                    });
                }
                rows[i][j] = d;
                rows[j][i] = d;
                diameter = diameter.max(d);
            }
        }
        let point_ids = (0..n).map(|i| format!("p{i}")).collect();
        let tol = 16.0 * f64::EPSILON * diameter.max(1.0);
        Self::with_tolerance(point_ids, base_index, rows, tol)
    }

    /// Builds a 1-d space from positions on the real line, labeling each
    /// point with its printed position. Distances are single subtractions;
    /// the triangle check gets an ulp-scale allowance, since positions on
    /// a line cannot genuinely violate it.
    pub fn from_line(positions: &[f64], base_index: usize) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Structural(format!(
                "{} position(s) given, need at least 2",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::Structural(format!("position {i} is not finite")));
        }
        let n = positions.len();
        let mut rows = vec![vec![0.0; n]; n];
        let mut diameter = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = (positions[i] - positions[j]).abs();
                rows[i][j] = d;
                rows[j][i] = d;
                diameter = diameter.max(d);
            }
        }
        let point_ids = positions.iter().map(|x| format!("{x}")).collect();
        let tol = 16.0 * f64::EPSILON * diameter.max(1.0);
        Self::with_tolerance(point_ids, base_index, rows, tol)
    }

    /// Deterministic sample space: `n` points drawn uniformly from
    /// `[0, 10]^dim` with the given seed, based at index 0. Useful for
    /// seeded verification sweeps.
    pub fn random_euclidean(n: usize, dim: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..16 {
            let coords: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect())
                .collect();
            match Self::from_points(&coords, 0) {
                Ok(space) => return Ok(space),
                Err(Error::InvalidMetric { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Degenerate(format!(
            "could not draw {n} distinct points in {dim} dimensions"
        )))
    }

    /// Product space under the sum metric
    /// `d((x,y),(u,v)) = d(x,u) + d(y,v)`, based at `(base, base)`.
    pub fn product(&self, other: &FiniteMetricSpace) -> FiniteMetricSpace {
        let n = self.n * other.n;
        let mut dist = vec![0.0; n * n];
        let idx = |x: usize, y: usize| x * other.n + y;
        for x in 0..self.n {
            for y in 0..other.n {
                for u in 0..self.n {
                    for v in 0..other.n {
                        dist[idx(x, y) * n + idx(u, v)] = self.d(x, u) + other.d(y, v);
                    }
                }
            }
        }
        let mut point_ids = Vec::with_capacity(n);
        for x in 0..self.n {
            for y in 0..other.n {
                point_ids.push(format!("({},{})", self.point_ids[x], other.point_ids[y]));
            }
        }
        FiniteMetricSpace {
            point_ids,
            base_index: idx(self.base_index, other.base_index),
            dist,
            n,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> usize {
        self.base_index
    }

    pub fn point_ids(&self) -> &[String] {
        &self.point_ids
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// All unordered pairs `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
    }

    /// Smallest off-diagonal distance. Errors when there are no pairs.
    pub fn min_distance(&self) -> Result<f64> {
        let m = self
            .pairs()
            .map(|(i, j)| self.d(i, j))
            .fold(f64::INFINITY, f64::min);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::Degenerate(
                "space has a single point, no pairs to scan".into(),
            ))
        }
    }

    /// Largest distance; 0 for a single point.
    pub fn diameter(&self) -> f64 {
        self.pairs()
            .map(|(i, j)| self.d(i, j))
            .fold(0.0, f64::max)
    }

    pub fn distance_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.dist[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
