//! Designs, design spaces and candidate grids.
//!
//! A design is an `n x k` matrix: one row per experimental run, one column
//! per controllable variable. The design space puts elementwise bounds on
//! every coordinate and may carry a constraint generator that shapes the
//! candidate grid for a coordinate given the rest of the design (for
//! example, a minimum spacing between sampling times).

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Number of grid points used for unconstrained candidate grids. Predictive
/// mean evaluation over the grid is cheap, so the grid errs large; the
/// endpoints are always included so boundary optima are reachable exactly.
pub const DEFAULT_GRID_SIZE: usize = 20_000;

/// An `n x k` matrix of runs by controllable-variable coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    runs: DMatrix<f64>,
    column_names: Vec<String>,
}

impl Design {
    /// Wraps a run matrix. Column names default to `x1..xk` when not given.
    pub fn new(runs: DMatrix<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if runs.nrows() == 0 || runs.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "design must have at least one run and one column".into(),
            ));
        }
        if runs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "design entries must be finite".into(),
            ));
        }
        let names = match column_names {
            Some(names) => {
                if names.len() != runs.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} column names for {} columns",
                        names.len(),
                        runs.ncols()
                    )));
                }
                names
            }
            None => (1..=runs.ncols()).map(|j| format!("x{j}")).collect(),
        };
        Ok(Self {
            runs,
            column_names: names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("no rows".into()));
        }
        let k = rows[0].len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let m = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        Self::new(m, None)
    }

    pub fn n_runs(&self) -> usize {
        self.runs.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.runs.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.runs
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn coordinate(&self, i: usize, j: usize) -> f64 {
        self.runs[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.runs.row(i).iter().copied().collect()
    }

    /// Returns a copy with only entry `(i, j)` replaced by `x`.
    ///
    /// Panics if `i` or `j` is out of bounds, like matrix indexing.
    pub fn with_coordinate(&self, i: usize, j: usize, x: f64) -> Design {
        assert!(i < self.n_runs() && j < self.n_vars(), "index out of bounds");
        let mut out = self.clone();
        out.runs[(i, j)] = x;
        out
    }

    /// Returns a copy with a repeat of run `i` appended as the last row.
    pub fn with_repeated_run(&self, i: usize) -> Design {
        assert!(i < self.n_runs(), "index out of bounds");
        let mut m = DMatrix::zeros(self.n_runs() + 1, self.n_vars());
        m.rows_mut(0, self.n_runs()).copy_from(&self.runs);
        for j in 0..self.n_vars() {
            m[(self.n_runs(), j)] = self.runs[(i, j)];
        }
        Design {
            runs: m,
            column_names: self.column_names.clone(),
        }
    }

    /// Returns a copy with run `h` removed.
    pub fn without_run(&self, h: usize) -> Design {
        assert!(h < self.n_runs(), "index out of bounds");
        assert!(self.n_runs() > 1, "cannot remove the only run");
        let mut m = DMatrix::zeros(self.n_runs() - 1, self.n_vars());
        let mut r = 0;
        for i in 0..self.n_runs() {
            if i == h {
                continue;
            }
            for j in 0..self.n_vars() {
                m[(r, j)] = self.runs[(i, j)];
            }
            r += 1;
        }
        Design {
            runs: m,
            column_names: self.column_names.clone(),
        }
    }

    /// Number of equivalence classes of rows under max-norm distance <= tol,
    /// closed transitively (single linkage). `tol = 0` counts exact
    /// duplicates as one.
    pub fn unique_run_count(&self, tol: f64) -> usize {
        assert!(tol >= 0.0, "tolerance must be nonnegative");
        let n = self.n_runs();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let dist = (0..self.n_vars())
                    .map(|j| (self.runs[(a, j)] - self.runs[(b, j)]).abs())
                    .fold(0.0f64, f64::max);
                if dist <= tol {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra] = rb;
                    }
                }
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Default reporting tolerance for [`unique_run_count`]:
    /// `1e-8` times the largest coordinate range of the design.
    pub fn default_unique_tol(&self) -> f64 {
        let mut range = 0.0f64;
        for j in 0..self.n_vars() {
            let col = self.runs.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            range = range.max(hi - lo);
        }
        1e-8 * range
    }

    /// CSV form: header row of column names, one run per line, every value
    /// printed with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.column_names.join(","));
        out.push('\n');
        for i in 0..self.n_runs() {
            let row: Vec<String> = (0..self.n_vars())
                .map(|j| format_sig17(self.runs[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty design CSV".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let vals: Result<Vec<f64>> = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "bad numeric field on design CSV line {}",
                            lineno + 2
                        ))
                    })
                })
                .collect();
            rows.push(vals?);
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("design CSV has no runs".into()));
        }
        let k = names.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch(
                "design CSV rows do not match header".into(),
            ));
        }
        let m = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        Self::new(m, Some(names))
    }
}

/// 17 significant digits, enough to round-trip any f64 exactly.
pub fn format_sig17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Generates the admissible values for coordinate `(i, j)` of a design,
/// given the current values of every other coordinate.
pub trait CandidateGridGenerator: Send + Sync {
    fn candidates(&self, d: &Design, i: usize, j: usize) -> Vec<f64>;
}

/// Minimum-spacing constraint for one-column designs of ordered points
/// (for example sampling times): a grid over `[lower, upper]` with every
/// point within `c` of another run's coordinate removed. Removal is
/// inclusive, so admissible points differ from every other run by
/// strictly more than `c`.
pub struct MinSpacingConstraint {
    pub lower: f64,
    pub upper: f64,
    pub spacing: f64,
    pub grid_size: usize,
}

impl CandidateGridGenerator for MinSpacingConstraint {
    fn candidates(&self, d: &Design, i: usize, _j: usize) -> Vec<f64> {
        let m = self.grid_size;
        let mut grid: Vec<f64> = (0..m)
            .map(|g| self.lower + (self.upper - self.lower) * g as f64 / (m - 1) as f64)
            .collect();
        for r in 0..d.n_runs() {
            if r == i {
                continue;
            }
            let s = d.coordinate(r, 0);
            grid.retain(|&x| x < s - self.spacing || x > s + self.spacing);
        }
        grid
    }
}

/// Elementwise bounds plus an optional constraint generator.
#[derive(Clone)]
pub struct DesignSpace {
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
    constraint: Option<Arc<dyn CandidateGridGenerator>>,
}

impl std::fmt::Debug for DesignSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignSpace")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("constrained", &self.constraint.is_some())
            .finish()
    }
}

impl DesignSpace {
    pub fn new(lower: DMatrix<f64>, upper: DMatrix<f64>) -> Result<Self> {
        if lower.shape() != upper.shape() {
            return Err(Error::DimensionMismatch(
                "lower and upper limit matrices differ in shape".into(),
            ));
        }
        if lower
            .iter()
            .zip(upper.iter())
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidArgument(
                "every lower limit must be strictly below its upper limit".into(),
            ));
        }
        Ok(Self {
            lower,
            upper,
            constraint: None,
        })
    }

    /// Scalar limits broadcast to a full `n x k` matrix.
    pub fn from_scalar(n: usize, k: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(n, k, lower),
            DMatrix::from_element(n, k, upper),
        )
    }

    /// Per-column limits broadcast down the rows.
    pub fn from_columns(n: usize, lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(
                "per-column lower/upper lengths differ".into(),
            ));
        }
        let k = lower.len();
        Self::new(
            DMatrix::from_fn(n, k, |_, j| lower[j]),
            DMatrix::from_fn(n, k, |_, j| upper[j]),
        )
    }

    pub fn with_constraint(mut self, c: Arc<dyn CandidateGridGenerator>) -> Self {
        self.constraint = Some(c);
        self
    }

    pub fn n_runs(&self) -> usize {
        self.lower.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.lower.ncols()
    }

    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[(i, j)]
    }

    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.upper[(i, j)]
    }

    pub fn is_constrained(&self) -> bool {
        self.constraint.is_some()
    }

    pub fn contains(&self, d: &Design) -> bool {
        d.n_runs() == self.n_runs()
            && d.n_vars() == self.n_vars()
            && (0..d.n_runs()).all(|i| {
                (0..d.n_vars()).all(|j| {
                    let x = d.coordinate(i, j);
                    self.lower[(i, j)] <= x && x <= self.upper[(i, j)]
                })
            })
    }

    /// Candidate grid for coordinate `(i, j)`: `size` equally spaced points
    /// spanning the bounds inclusive, or whatever the constraint generator
    /// returns when one is set.
    pub fn candidate_grid(&self, d: &Design, i: usize, j: usize, size: usize) -> Result<Vec<f64>> {
        assert!(i < self.n_runs() && j < self.n_vars(), "index out of bounds");
        if let Some(c) = &self.constraint {
            let grid = c.candidates(d, i, j);
            if grid.is_empty() {
                return Err(Error::ConstraintExhausted { row: i, col: j });
            }
            return Ok(grid);
        }
        let (lo, hi) = (self.lower[(i, j)], self.upper[(i, j)]);
        let size = size.max(2);
        Ok((0..size)
            .map(|g| lo + (hi - lo) * g as f64 / (size - 1) as f64)
            .collect())
    }
}

/// Latin hypercube start design: per column, one point uniform in each of
/// the `n` equal-width strata of that coordinate's range, independently
/// permuted across rows. With elementwise bounds the unit-cube sample is
/// mapped through each entry's own limits.
pub fn latin_hypercube_start<R: Rng>(
    n: usize,
    k: usize,
    space: &DesignSpace,
    rng: &mut R,
) -> Result<Design> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("n and k must be at least 1".into()));
    }
    if space.n_runs() != n || space.n_vars() != k {
        return Err(Error::DimensionMismatch(
            "design space shape does not match requested design".into(),
        ));
    }
    let mut m = DMatrix::zeros(n, k);
    for j in 0..k {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for i in 0..n {
            let u: f64 = rng.random();
            let unit = (strata[i] as f64 + u) / n as f64;
            m[(i, j)] = space.lower(i, j) + unit * (space.upper(i, j) - space.lower(i, j));
        }
    }
    Design::new(m, None)
}

/// One-dimensional Latin hypercube over `[lo, hi]`: one uniform point per
/// stratum, in shuffled order. Used for emulator training abscissae.
pub fn latin_hypercube_1d<R: Rng>(q: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    let mut strata: Vec<usize> = (0..q).collect();
    strata.shuffle(rng);
    strata
        .into_iter()
        .map(|s| {
            let u: f64 = rng.random();
            lo + (hi - lo) * (s as f64 + u) / q as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;

    #[test]
    fn lhs_one_point_per_stratum() {
        let space = DesignSpace::from_scalar(4, 1, 0.0, 1.0).unwrap();
        let d = latin_hypercube_start(4, 1, &space, &mut root_rng(3)).unwrap();
        let mut counts = [0usize; 4];
        for i in 0..4 {
            let x = d.coordinate(i, 0);
            let s = ((x * 4.0).floor() as usize).min(3);
            counts[s] += 1;
        }
        assert_eq!(counts, [1, 1, 1, 1]);
    }

    #[test]
    fn lhs_all_distinct_18_points() {
        let space = DesignSpace::from_scalar(18, 1, 0.0, 24.0).unwrap();
        let d = latin_hypercube_start(18, 1, &space, &mut root_rng(1)).unwrap();
        for a in 0..18 {
            for b in (a + 1)..18 {
                assert_ne!(d.coordinate(a, 0), d.coordinate(b, 0));
            }
        }
    }

    #[test]
    fn lhs_stratification_multicolumn() {
        let n = 6;
        let space = DesignSpace::from_scalar(n, 4, -1.0, 1.0).unwrap();
        let d = latin_hypercube_start(n, 4, &space, &mut root_rng(9)).unwrap();
        for j in 0..4 {
            let mut counts = vec![0usize; n];
            for i in 0..n {
                let x = d.coordinate(i, j);
                assert!((-1.0..=1.0).contains(&x));
                let unit = (x + 1.0) / 2.0;
                let s = ((unit * n as f64).floor() as usize).min(n - 1);
                counts[s] += 1;
            }
            assert!(counts.iter().all(|&c| c == 1), "column {j}: {counts:?}");
        }
    }

    #[test]
    fn lhs_same_seed_identical() {
        let space = DesignSpace::from_scalar(5, 2, 0.0, 1.0).unwrap();
        let a = latin_hypercube_start(5, 2, &space, &mut root_rng(11)).unwrap();
        let b = latin_hypercube_start(5, 2, &space, &mut root_rng(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_grid_equal_spacing() {
        let space = DesignSpace::from_scalar(1, 1, 0.0, 24.0).unwrap();
        let d = Design::from_rows(&[vec![0.0]]).unwrap();
        let g = space.candidate_grid(&d, 0, 0, 5).unwrap();
        assert_eq!(g, vec![0.0, 6.0, 12.0, 18.0, 24.0]);
    }

    #[test]
    fn spacing_constraint_excludes_neighborhood() {
        let c = MinSpacingConstraint {
            lower: 0.0,
            upper: 24.0,
            spacing: 0.25,
            grid_size: 10_000,
        };
        let space = DesignSpace::from_scalar(2, 1, 0.0, 24.0)
            .unwrap()
            .with_constraint(Arc::new(c));
        let d = Design::from_rows(&[vec![5.0], vec![12.0]]).unwrap();
        let g = space.candidate_grid(&d, 0, 0, DEFAULT_GRID_SIZE).unwrap();
        assert!(!g.is_empty());
        assert!(g.iter().all(|&x| x < 11.75 || x > 12.25));
        // Points within spacing of the run's own current value stay admissible.
        assert!(g.iter().any(|&x| (x - 5.0).abs() <= 0.25));
    }

    #[test]
    fn spacing_constraint_degenerate_single_run() {
        let c = MinSpacingConstraint {
            lower: 0.0,
            upper: 24.0,
            spacing: 0.25,
            grid_size: 100,
        };
        let space = DesignSpace::from_scalar(1, 1, 0.0, 24.0)
            .unwrap()
            .with_constraint(Arc::new(c));
        let d = Design::from_rows(&[vec![12.0]]).unwrap();
        let g = space.candidate_grid(&d, 0, 0, DEFAULT_GRID_SIZE).unwrap();
        assert_eq!(g.len(), 100);
    }

    #[test]
    fn replace_coordinate_changes_one_entry() {
        let d = Design::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let d2 = d.with_coordinate(0, 0, 1.0);
        assert_eq!(d2.coordinate(0, 0), 1.0);
        let diffs = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .filter(|&(i, j)| d.coordinate(i, j) != d2.coordinate(i, j))
            .count();
        assert_eq!(diffs, 1);
        // Round trip restores the original bit for bit.
        let d3 = d2.with_coordinate(0, 0, 0.0);
        assert_eq!(d, d3);
        // Identity replacement leaves the design unchanged.
        assert_eq!(d, d.with_coordinate(1, 1, 0.0));
    }

    #[test]
    fn unique_run_count_cases() {
        let d = Design::from_rows(&[vec![0.0], vec![1e-9], vec![0.5]]).unwrap();
        assert_eq!(d.unique_run_count(1e-6), 2);
        assert_eq!(d.unique_run_count(0.0), 3);
        let same = Design::from_rows(&vec![vec![2.0, 3.0]; 5]).unwrap();
        assert_eq!(same.unique_run_count(0.0), 1);
    }

    #[test]
    fn unique_run_count_transitive_chain() {
        // 0 ~ 0.9 and 0.9 ~ 1.8 chain into one class under tol 1.0.
        let d = Design::from_rows(&[vec![0.0], vec![0.9], vec![1.8]]).unwrap();
        assert_eq!(d.unique_run_count(1.0), 1);
    }

    #[test]
    fn csv_round_trip() {
        let d = Design::from_rows(&[vec![0.1, -1.0 / 3.0], vec![24.0, 1e-17]]).unwrap();
        let text = d.to_csv();
        let back = Design::from_csv(&text).unwrap();
        assert_eq!(d, back);
        assert!(text.starts_with("x1,x2\n"));
    }
}
