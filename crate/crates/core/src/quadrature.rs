//! Deterministic approximation of prior expectations by a radial-spherical
//! rule.
//!
//! The integral of `f` against the standard p-variate normal splits into a
//! radial part (the chi-distributed radius) and a spherical part (the
//! uniform direction). The radius is handled by generalized Gauss-Laguerre
//! quadrature in `t = r^2/2` with exponent `p/2 - 1`, exact for
//! polynomials in `r^2` up to degree `2 n_radial - 1`. The sphere is
//! handled by an antipodally extended regular simplex: the `p + 1`
//! vertices plus the projected edge midpoints, each with its mirror image,
//! weighted so that all spherical polynomials up to degree 5 integrate
//! exactly. Averaging the spherical set over a few seeded random rotations
//! reduces the error on higher-degree integrands without affecting
//! polynomial exactness.
//!
//! Rules are built for the standard normal and then pushed through a prior
//! transform: an affine map for multivariate normal priors, and the
//! probability integral transform `theta = a + (b - a) * Phi(z)` per
//! component for independent uniform priors. Point-mass components are
//! excluded from the rule dimension and re-inserted as constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::models::{a_criterion, d_criterion, StatModel};
use crate::rng::root_rng;

/// Default number of radial abscissae.
pub const DEFAULT_N_RADIAL: usize = 3;
/// Default number of random rotations of the spherical point set.
pub const DEFAULT_N_ROTATIONS: usize = 2;

/// Paired abscissae and positive weights realizing a weighted-sum
/// approximation of an expectation. Weights always sum to one.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// `B x p` matrix; row `b` is the abscissa `gamma_b`.
    pub nodes: DMatrix<f64>,
    /// Length-`B` vector of weights `w_b > 0`.
    pub weights: DVector<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.nodes.ncols()
    }

    /// Weighted sum of `f` over the abscissae.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        let mut buf = vec![0.0; self.dim()];
        for b in 0..self.len() {
            for j in 0..self.dim() {
                buf[j] = self.nodes[(b, j)];
            }
            acc += self.weights[b] * f(&buf);
        }
        acc
    }
}

/// Multivariate normal prior with SPD covariance.
#[derive(Debug, Clone)]
pub struct NormalPrior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl NormalPrior {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(
                "covariance shape does not match mean".into(),
            ));
        }
        if (covariance.clone() - covariance.transpose()).norm() > 1e-10 * covariance.norm() {
            return Err(Error::InvalidArgument("covariance must be symmetric".into()));
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Independent uniform prior; components with equal limits are point
/// masses fixed at that value.
#[derive(Debug, Clone)]
pub struct IndependentUniformPrior {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IndependentUniformPrior {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(
                "support rows differ in length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument(
                "lower support limit above upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Number of non-degenerate components.
    pub fn effective_dim(&self) -> usize {
        self.lower
            .iter()
            .zip(&self.upper)
            .filter(|(l, u)| l < u)
            .count()
    }
}

/// Prior families supported by the deterministic approximation.
#[derive(Debug, Clone)]
pub enum QuadraturePrior {
    Normal(NormalPrior),
    Uniform(IndependentUniformPrior),
}

impl QuadraturePrior {
    pub fn dim(&self) -> usize {
        match self {
            QuadraturePrior::Normal(p) => p.dim(),
            QuadraturePrior::Uniform(p) => p.dim(),
        }
    }

    pub fn effective_dim(&self) -> usize {
        match self {
            QuadraturePrior::Normal(p) => p.dim(),
            QuadraturePrior::Uniform(p) => p.effective_dim(),
        }
    }
}

/// Generalized Gauss-Laguerre rule for weight `t^alpha e^-t` by the
/// Golub-Welsch eigendecomposition of the Jacobi matrix. Returned weights
/// are normalized to sum to one.
fn gauss_laguerre(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && alpha > -1.0);
    let mut jacobi = DMatrix::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = 2.0 * i as f64 + alpha + 1.0;
        if i > 0 {
            let off = (i as f64 * (i as f64 + alpha)).sqrt();
            jacobi[(i, i - 1)] = off;
            jacobi[(i - 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|m| (eig.eigenvalues[m], eig.eigenvectors[(0, m)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    (
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1 / total).collect(),
    )
}

/// Unit vertices of a regular simplex in `R^p` (pairwise inner product
/// `-1/p`), built from an orthonormal basis of the hyperplane orthogonal
/// to the all-ones vector in `R^(p+1)`.
fn simplex_vertices(p: usize) -> Vec<DVector<f64>> {
    let m = p + 1;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, 0)] = 1.0;
    }
    for j in 1..m {
        a[(j - 1, j)] = 1.0;
    }
    let qr = a.qr();
    let q = qr.q();
    (0..m)
        .map(|i| {
            // e_i minus the centroid, expressed in the orthogonal basis.
            let mut v = DVector::zeros(p);
            for c in 0..p {
                let mut dot = 0.0;
                for r in 0..m {
                    let ei = if r == i { 1.0 } else { 0.0 };
                    dot += q[(r, c + 1)] * (ei - 1.0 / m as f64);
                }
                v[c] = dot;
            }
            v.normalize()
        })
        .collect()
}

/// Degree-5 spherical rule: antipodally extended simplex vertices and
/// projected edge midpoints, with weights solved so every quartic in the
/// direction integrates to its uniform-sphere moment.
fn sphere_rule(p: usize) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
    if p == 1 {
        return Ok((
            vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])],
            vec![0.5, 0.5],
        ));
    }
    let verts = simplex_vertices(p);
    let mut mids = Vec::new();
    for i in 0..verts.len() {
        for j in (i + 1)..verts.len() {
            mids.push((&verts[i] + &verts[j]).normalize());
        }
    }

    // Exactness equations: total weight one, and for a spread of probe
    // directions the quartic moment must equal 3 / (p (p + 2)).
    let quartic = 3.0 / (p as f64 * (p as f64 + 2.0));
    let mut probes: Vec<DVector<f64>> = (0..p)
        .map(|j| DVector::from_fn(p, |r, _| f64::from(u8::from(r == j))))
        .collect();
    let mut rng = root_rng(0x5f3759df);
    for _ in 0..4 {
        let v = DVector::from_fn(p, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        probes.push(v.normalize());
    }
    let rows = probes.len() + 1;
    let mut sys = DMatrix::zeros(rows, 2);
    let mut rhs = DVector::zeros(rows);
    sys[(0, 0)] = 2.0 * verts.len() as f64;
    sys[(0, 1)] = 2.0 * mids.len() as f64;
    rhs[0] = 1.0;
    for (r, a) in probes.iter().enumerate() {
        sys[(r + 1, 0)] = 2.0 * verts.iter().map(|v| a.dot(v).powi(4)).sum::<f64>();
        sys[(r + 1, 1)] = 2.0 * mids.iter().map(|v| a.dot(v).powi(4)).sum::<f64>();
        rhs[r + 1] = quartic;
    }
    let svd = sys.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::NumericalFailure(format!("spherical weight solve: {e}")))?;
    let (wa, wb) = (sol[0], sol[1]);
    if !(wa > 0.0 && wb > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "no positive-weight degree-5 spherical rule in dimension {p}"
        )));
    }

    let mut dirs = Vec::with_capacity(2 * (verts.len() + mids.len()));
    let mut weights = Vec::with_capacity(dirs.capacity());
    for v in verts {
        dirs.push(v.clone());
        dirs.push(-v);
        weights.push(wa);
        weights.push(wa);
    }
    for m in mids {
        dirs.push(m.clone());
        dirs.push(-m);
        weights.push(wb);
        weights.push(wb);
    }
    Ok((dirs, weights))
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign convention fixed by the R diagonal).
fn random_rotation<R: Rng>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng)
    });
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q;
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..p {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    out
}

/// Builds the rule for the standard normal in `p_eff` dimensions.
///
/// The rotations are seeded and frozen at construction so that the same
/// rule serves every design comparison within a run. In one dimension the
/// sphere is the antipodal pair and rotations are skipped.
pub fn build_radial_spherical(
    p_eff: usize,
    n_radial: usize,
    n_rotations: usize,
    seed: u64,
) -> Result<QuadratureRule> {
    if p_eff == 0 {
        return Err(Error::InvalidArgument(
            "effective dimension must be at least 1".into(),
        ));
    }
    if n_radial == 0 || n_rotations == 0 {
        return Err(Error::InvalidArgument(
            "radial points and rotations must be at least 1".into(),
        ));
    }
    let alpha = p_eff as f64 / 2.0 - 1.0;
    let (t_nodes, t_weights) = gauss_laguerre(n_radial, alpha);
    let radii: Vec<f64> = t_nodes.iter().map(|&t| (2.0 * t).sqrt()).collect();
    let (dirs, dir_weights) = sphere_rule(p_eff)?;

    let mut rng = root_rng(seed);
    let rotations: Vec<DMatrix<f64>> = if p_eff == 1 {
        vec![DMatrix::identity(1, 1)]
    } else {
        (0..n_rotations)
            .map(|_| random_rotation(p_eff, &mut rng))
            .collect()
    };

    let b = radii.len() * dirs.len() * rotations.len();
    let mut nodes = DMatrix::zeros(b, p_eff);
    let mut weights = DVector::zeros(b);
    let rot_w = 1.0 / rotations.len() as f64;
    let mut row = 0;
    for rot in &rotations {
        let rotated: Vec<DVector<f64>> = dirs.iter().map(|u| rot * u).collect();
        for (m, &r) in radii.iter().enumerate() {
            for (s, u) in rotated.iter().enumerate() {
                for j in 0..p_eff {
                    nodes[(row, j)] = r * u[j];
                }
                weights[row] = t_weights[m] * dir_weights[s] * rot_w;
                row += 1;
            }
        }
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Symmetric square root of an SPD matrix via its eigendecomposition.
fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidArgument(
            "covariance is not positive definite".into(),
        ));
    }
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose())
}

/// Maps a standard-normal rule onto a prior. Weights are unchanged; only
/// the abscissae move. The rule must have been built for the prior's
/// effective dimension.
pub fn transform_to_prior(rule: &QuadratureRule, prior: &QuadraturePrior) -> Result<QuadratureRule> {
    if rule.dim() != prior.effective_dim() {
        return Err(Error::DimensionMismatch(format!(
            "rule dimension {} does not match prior effective dimension {}",
            rule.dim(),
            prior.effective_dim()
        )));
    }
    let b = rule.len();
    match prior {
        QuadraturePrior::Normal(np) => {
            let l = symmetric_sqrt(&np.covariance)?;
            // theta_b = mean + L z_b, i.e. nodes_out = nodes * L^T + mean.
            let mut nodes = &rule.nodes * l.transpose();
            for r in 0..b {
                for j in 0..np.dim() {
                    nodes[(r, j)] += np.mean[j];
                }
            }
            Ok(QuadratureRule {
                nodes,
                weights: rule.weights.clone(),
            })
        }
        QuadraturePrior::Uniform(up) => {
            let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
            let p = up.dim();
            let mut nodes = DMatrix::zeros(b, p);
            for r in 0..b {
                let mut z_col = 0;
                for j in 0..p {
                    if up.lower[j] < up.upper[j] {
                        let u = std_normal.cdf(rule.nodes[(r, z_col)]);
                        nodes[(r, j)] = up.lower[j] + (up.upper[j] - up.lower[j]) * u;
                        z_col += 1;
                    } else {
                        nodes[(r, j)] = up.lower[j];
                    }
                }
            }
            Ok(QuadratureRule {
                nodes,
                weights: rule.weights.clone(),
            })
        }
    }
}

/// Pseudo-Bayesian criteria on the expected Fisher information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformationCriterion {
    /// Log determinant (D-optimality).
    D,
    /// Negative trace of the inverse (A-optimality).
    A,
}

/// Prior expectation of the chosen criterion: `sum_b w_b crit(I(gamma_b; d))`.
///
/// With the D-criterion, singular information contributes the large
/// negative sentinel; with the A-criterion a singular node aborts the
/// evaluation and the caller treats the design as unusable.
pub fn expected_criterion(
    rule: &QuadratureRule,
    model: &dyn StatModel,
    d: &Design,
    criterion: InformationCriterion,
) -> Result<f64> {
    if rule.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "rule dimension {} does not match parameter dimension {}",
            rule.dim(),
            model.param_dim()
        )));
    }
    let mut acc = 0.0;
    let mut theta = DVector::zeros(rule.dim());
    for bidx in 0..rule.len() {
        for j in 0..rule.dim() {
            theta[j] = rule.nodes[(bidx, j)];
        }
        let info = model.fisher_information(&theta, d);
        let value = match criterion {
            InformationCriterion::D => d_criterion(&info),
            InformationCriterion::A => a_criterion(&info)?,
        };
        acc += rule.weights[bidx] * value;
    }
    Ok(acc)
}
