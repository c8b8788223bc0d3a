//! Statistical model layer.
//!
//! Two model families drive the utility machinery: generalised linear
//! models with canonical links (Bernoulli-logit, Poisson-log) and
//! nonlinear models with Gaussian errors and a caller-supplied mean
//! function. Both expose simulation, log likelihood, the likelihood score
//! and the expected Fisher information, which is all the optimizer and the
//! utility approximations need.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::design::Design;
use crate::error::{Error, Result};

/// Sentinel for the log determinant of a singular information matrix.
/// Finite on purpose: emulator training values must stay finite.
pub const SINGULAR_LOGDET: f64 = -1e10;

/// Linear predictors are clamped to this magnitude before exponentiation.
pub const ETA_CLAMP: f64 = 700.0;

/// Common interface over the supported response models.
pub trait StatModel: Send + Sync {
    fn param_dim(&self) -> usize;

    /// Log density of `y` given parameters and design, including constants.
    fn log_likelihood(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> f64;

    /// Gradient of the log likelihood in the parameters.
    fn score(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> DVector<f64>;

    /// Expected Fisher information at `theta` for the given design.
    fn fisher_information(&self, theta: &DVector<f64>, d: &Design) -> DMatrix<f64>;

    /// Draws one response vector from the model.
    fn simulate(&self, theta: &DVector<f64>, d: &Design, rng: &mut dyn RngCore) -> DVector<f64>;
}

/// Canonical-link GLM families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmFamily {
    BernoulliLogit,
    PoissonLog,
}

/// A main-effects GLM: the linear predictor is an optional intercept plus
/// one coefficient per listed design column.
#[derive(Debug, Clone)]
pub struct GlmModel {
    pub family: GlmFamily,
    pub intercept: bool,
    pub term_columns: Vec<usize>,
}

impl GlmModel {
    pub fn new(family: GlmFamily, intercept: bool, term_columns: Vec<usize>) -> Self {
        Self {
            family,
            intercept,
            term_columns,
        }
    }

    /// All design columns as main effects, plus an intercept.
    pub fn main_effects(family: GlmFamily, intercept: bool, k: usize) -> Self {
        Self::new(family, intercept, (0..k).collect())
    }

    /// Model matrix: intercept column (if any) followed by the term columns.
    pub fn model_matrix(&self, d: &Design) -> DMatrix<f64> {
        let n = d.n_runs();
        let p = self.param_dim();
        let mut x = DMatrix::zeros(n, p);
        for i in 0..n {
            let mut c = 0;
            if self.intercept {
                x[(i, c)] = 1.0;
                c += 1;
            }
            for &col in &self.term_columns {
                x[(i, c)] = d.coordinate(i, col);
                c += 1;
            }
        }
        x
    }

    pub fn linear_predictor(&self, theta: &DVector<f64>, d: &Design) -> DVector<f64> {
        let eta = self.model_matrix(d) * theta;
        eta.map(|e| e.clamp(-ETA_CLAMP, ETA_CLAMP))
    }
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// log(1 + e^eta), stable for large |eta|.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

impl StatModel for GlmModel {
    fn param_dim(&self) -> usize {
        self.term_columns.len() + usize::from(self.intercept)
    }

    fn log_likelihood(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> f64 {
        let eta = self.linear_predictor(theta, d);
        match self.family {
            GlmFamily::BernoulliLogit => eta
                .iter()
                .zip(y.iter())
                .map(|(&e, &yi)| yi * e - log1p_exp(e))
                .sum(),
            GlmFamily::PoissonLog => eta
                .iter()
                .zip(y.iter())
                .map(|(&e, &yi)| yi * e - e.exp() - ln_gamma(yi + 1.0))
                .sum(),
        }
    }

    fn score(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> DVector<f64> {
        let x = self.model_matrix(d);
        let eta = self.linear_predictor(theta, d);
        let mu = match self.family {
            GlmFamily::BernoulliLogit => eta.map(logistic),
            GlmFamily::PoissonLog => eta.map(f64::exp),
        };
        x.transpose() * (y - mu)
    }

    fn fisher_information(&self, theta: &DVector<f64>, d: &Design) -> DMatrix<f64> {
        let x = self.model_matrix(d);
        let eta = self.linear_predictor(theta, d);
        let w = match self.family {
            GlmFamily::BernoulliLogit => eta.map(|e| {
                let r = logistic(e);
                r * (1.0 - r)
            }),
            GlmFamily::PoissonLog => eta.map(f64::exp),
        };
        let p = self.param_dim();
        let mut info = DMatrix::zeros(p, p);
        for i in 0..d.n_runs() {
            let xi = x.row(i);
            for a in 0..p {
                for b in a..p {
                    info[(a, b)] += w[i] * xi[a] * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        info
    }

    fn simulate(&self, theta: &DVector<f64>, d: &Design, rng: &mut dyn RngCore) -> DVector<f64> {
        let eta = self.linear_predictor(theta, d);
        let mut y = DVector::zeros(d.n_runs());
        for i in 0..d.n_runs() {
            y[i] = match self.family {
                GlmFamily::BernoulliLogit => {
                    let u: f64 = rand::Rng::random(&mut &mut *rng);
                    f64::from(u < logistic(eta[i]))
                }
                GlmFamily::PoissonLog => {
                    let lambda = eta[i].exp();
                    if lambda < 1e-300 {
                        0.0
                    } else {
                        Poisson::new(lambda).expect("positive rate").sample(&mut &mut *rng)
                    }
                }
            };
        }
        y
    }
}

type MeanFn = Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync>;

/// Gaussian-error nonlinear model `y_i ~ N(mu(theta; x_i), sigma^2)` with a
/// caller-supplied mean function and, optionally, its parameter gradient.
/// Without a gradient, central finite differences with per-component step
/// `1e-6 * (1 + |theta_j|)` stand in.
#[derive(Clone)]
pub struct NonlinearModel {
    param_dim: usize,
    pub noise_variance: f64,
    mean: MeanFn,
    grad: Option<GradFn>,
}

impl NonlinearModel {
    pub fn new(param_dim: usize, noise_variance: f64, mean: MeanFn, grad: Option<GradFn>) -> Self {
        assert!(noise_variance > 0.0, "noise variance must be positive");
        Self {
            param_dim,
            noise_variance,
            mean,
            grad,
        }
    }

    pub fn mean_at(&self, theta: &DVector<f64>, run: &[f64]) -> f64 {
        (self.mean)(theta, run)
    }

    /// Parameter gradient of the mean at one run, analytic when supplied,
    /// otherwise by central finite differences.
    pub fn mean_grad_at(&self, theta: &DVector<f64>, run: &[f64]) -> DVector<f64> {
        if let Some(g) = &self.grad {
            return g(theta, run);
        }
        let mut out = DVector::zeros(self.param_dim);
        for j in 0..self.param_dim {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            out[j] = ((self.mean)(&tp, run) - (self.mean)(&tm, run)) / (2.0 * h);
        }
        out
    }

    fn means(&self, theta: &DVector<f64>, d: &Design) -> DVector<f64> {
        DVector::from_fn(d.n_runs(), |i, _| (self.mean)(theta, &d.row(i)))
    }
}

impl StatModel for NonlinearModel {
    fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn log_likelihood(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> f64 {
        let n = d.n_runs() as f64;
        let mu = self.means(theta, d);
        let mut ss = 0.0;
        for i in 0..d.n_runs() {
            if !mu[i].is_finite() {
                return f64::NEG_INFINITY;
            }
            ss += (y[i] - mu[i]).powi(2);
        }
        -0.5 * n * (2.0 * std::f64::consts::PI * self.noise_variance).ln()
            - 0.5 * ss / self.noise_variance
    }

    fn score(&self, theta: &DVector<f64>, y: &DVector<f64>, d: &Design) -> DVector<f64> {
        let mut g = DVector::zeros(self.param_dim);
        for i in 0..d.n_runs() {
            let run = d.row(i);
            let r = y[i] - (self.mean)(theta, &run);
            g += self.mean_grad_at(theta, &run) * (r / self.noise_variance);
        }
        g
    }

    fn fisher_information(&self, theta: &DVector<f64>, d: &Design) -> DMatrix<f64> {
        let p = self.param_dim;
        let mut info = DMatrix::zeros(p, p);
        for i in 0..d.n_runs() {
            let g = self.mean_grad_at(theta, &d.row(i));
            for a in 0..p {
                for b in a..p {
                    info[(a, b)] += g[a] * g[b] / self.noise_variance;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        info
    }

    fn simulate(&self, theta: &DVector<f64>, d: &Design, rng: &mut dyn RngCore) -> DVector<f64> {
        let sd = self.noise_variance.sqrt();
        let mu = self.means(theta, d);
        DVector::from_fn(d.n_runs(), |i, _| {
            let z: f64 = StandardNormal.sample(&mut &mut *rng);
            mu[i] + sd * z
        })
    }
}

/// Log determinant of the information matrix via Cholesky. Returns the
/// [`SINGULAR_LOGDET`] sentinel when the matrix cannot be factorized or
/// the determinant underflows.
pub fn d_criterion(info: &DMatrix<f64>) -> f64 {
    if info.iter().any(|v| !v.is_finite()) {
        return SINGULAR_LOGDET;
    }
    match Cholesky::new(info.clone()) {
        Some(chol) => {
            let ld: f64 = (0..info.nrows())
                .map(|i| chol.l_dirty()[(i, i)].ln())
                .sum::<f64>()
                * 2.0;
            if ld.is_finite() {
                ld
            } else {
                SINGULAR_LOGDET
            }
        }
        None => SINGULAR_LOGDET,
    }
}

/// Negative trace of the inverse information, computed by solving against
/// identity columns. Errors when the matrix is singular.
pub fn a_criterion(info: &DMatrix<f64>) -> Result<f64> {
    if info.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    let p = info.nrows();
    let chol = Cholesky::new(info.clone()).ok_or(Error::SingularInformation)?;
    let mut trace = 0.0;
    for j in 0..p {
        let mut e = DVector::zeros(p);
        e[j] = 1.0;
        let col = chol.solve(&e);
        trace += col[j];
    }
    if !trace.is_finite() {
        return Err(Error::SingularInformation);
    }
    Ok(-trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::root_rng;
    use rand::Rng;

    fn poisson_1d(theta: f64, xs: &[f64]) -> (GlmModel, DVector<f64>, Design) {
        let m = GlmModel::new(GlmFamily::PoissonLog, false, vec![0]);
        let d = Design::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        (m, DVector::from_vec(vec![theta]), d)
    }

    #[test]
    fn poisson_scalar_information_formula() {
        let xs = [-1.0, 0.3, 0.7, 1.0];
        let theta = 0.4;
        let (m, tv, d) = poisson_1d(theta, &xs);
        let info = m.fisher_information(&tv, &d);
        let expected: f64 = xs.iter().map(|&x| x * x * (theta * x).exp()).sum();
        assert!((info[(0, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn logistic_information_at_zero_is_quarter_xtx() {
        let m = GlmModel::main_effects(GlmFamily::BernoulliLogit, true, 2);
        let d = Design::from_rows(&[vec![1.0, -1.0], vec![-0.5, 0.25], vec![0.0, 1.0]]).unwrap();
        let theta = DVector::zeros(3);
        let info = m.fisher_information(&theta, &d);
        let x = m.model_matrix(&d);
        let xtx = x.transpose() * &x;
        assert!((info - xtx * 0.25).norm() < 1e-12);
    }

    #[test]
    fn nonlinear_linear_mean_information_is_xtx_over_sigma2() {
        let mean: MeanFn = Arc::new(|th, run| th[0] * run[0] + th[1] * run[1]);
        let grad: GradFn = Arc::new(|_, run| DVector::from_vec(vec![run[0], run[1]]));
        let m = NonlinearModel::new(2, 4.0, mean, Some(grad));
        let d = Design::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]]).unwrap();
        let x = DMatrix::from_fn(3, 2, |i, j| d.coordinate(i, j));
        let theta = DVector::from_vec(vec![5.0, -2.0]);
        let info = m.fisher_information(&theta, &d);
        assert!((info - x.transpose() * &x / 4.0).norm() < 1e-12);
        // Single run: rank one, determinant zero, D-criterion hits the sentinel.
        let d1 = Design::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let info1 = m.fisher_information(&theta, &d1);
        assert_eq!(d_criterion(&info1), SINGULAR_LOGDET);
        assert!(a_criterion(&info1).is_err());
    }

    #[test]
    fn compartmental_gradient_matches_finite_differences() {
        let mean: MeanFn = Arc::new(|th, run| {
            let t = run[0];
            th[2] * ((-th[0] * t).exp() - (-th[1] * t).exp())
        });
        let grad: GradFn = Arc::new(|th, run| {
            let t = run[0];
            DVector::from_vec(vec![
                -th[2] * t * (-th[0] * t).exp(),
                th[2] * t * (-th[1] * t).exp(),
                (-th[0] * t).exp() - (-th[1] * t).exp(),
            ])
        });
        let with_grad = NonlinearModel::new(3, 1.0, mean.clone(), Some(grad));
        let fd_only = NonlinearModel::new(3, 1.0, mean, None);
        let theta = DVector::from_vec(vec![0.05884, 4.298, 21.8]);
        for t in [0.5, 2.0, 10.0, 24.0] {
            let ga = with_grad.mean_grad_at(&theta, &[t]);
            let gf = fd_only.mean_grad_at(&theta, &[t]);
            for j in 0..3 {
                let denom = ga[j].abs().max(1e-8);
                assert!(
                    ((ga[j] - gf[j]) / denom).abs() < 1e-5,
                    "t={t} j={j}: {} vs {}",
                    ga[j],
                    gf[j]
                );
            }
        }
    }

    #[test]
    fn criteria_diagonal_cases() {
        let id3 = DMatrix::identity(3, 3);
        assert!(d_criterion(&id3).abs() < 1e-14);
        assert!((a_criterion(&id3).unwrap() + 3.0).abs() < 1e-14);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
        assert!((d_criterion(&diag) - 16f64.ln()).abs() < 1e-14);
        assert!((a_criterion(&diag).unwrap() + 0.625).abs() < 1e-14);
        let singular = DMatrix::from_fn(2, 2, |_, _| 1.0);
        assert_eq!(d_criterion(&singular), SINGULAR_LOGDET);
        assert!(a_criterion(&singular).is_err());
    }

    #[test]
    fn log_det_scaling_identity() {
        let mut rng = root_rng(5);
        for _ in 0..20 {
            let p = 1 + rng.random_range(0..4usize);
            let a = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
            let info = &a * a.transpose() + DMatrix::identity(p, p) * 0.5;
            let c: f64 = 0.1 + 3.0 * rng.random::<f64>();
            let lhs = d_criterion(&(&info * c));
            let rhs = d_criterion(&info) + p as f64 * c.ln();
            assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn bernoulli_loglik_at_zero_eta() {
        let m = GlmModel::new(GlmFamily::BernoulliLogit, false, vec![0]);
        let d = Design::from_rows(&[vec![1.0], vec![-1.0], vec![0.5]]).unwrap();
        let theta = DVector::zeros(1);
        for y in [[0.0, 1.0, 1.0], [1.0, 1.0, 0.0]] {
            let ll = m.log_likelihood(&theta, &DVector::from_row_slice(&y), &d);
            assert!((ll + 3.0 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_loglik_at_exact_mean() {
        let mean: MeanFn = Arc::new(|th, run| th[0] * run[0]);
        let m = NonlinearModel::new(1, 0.25, mean, None);
        let d = Design::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let theta = DVector::from_vec(vec![3.0]);
        let y = DVector::from_vec(vec![3.0, 6.0]);
        let ll = m.log_likelihood(&theta, &y, &d);
        let expected = -1.0 * (2.0 * std::f64::consts::PI * 0.25).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn poisson_simulation_mean_matches_rate() {
        let (m, theta, d) = poisson_1d(0.0, &[1.0]);
        let mut rng = root_rng(10);
        let b = 100_000;
        let mut total = 0.0;
        for _ in 0..b {
            total += m.simulate(&theta, &d, &mut rng)[0];
        }
        let mean = total / b as f64;
        // Rate is 1; the sample mean should land within 3 sigma of it.
        assert!((mean - 1.0).abs() < 3.0 / (b as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn information_is_symmetric_psd() {
        let mut rng = root_rng(22);
        for _ in 0..20 {
            let n = 2 + rng.random_range(0..6usize);
            let k = 1 + rng.random_range(0..3usize);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let d = Design::from_rows(&rows).unwrap();
            let m = GlmModel::main_effects(GlmFamily::BernoulliLogit, true, k);
            let theta =
                DVector::from_fn(m.param_dim(), |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let info = m.fisher_information(&theta, &d);
            assert!((info.clone() - info.transpose()).norm() < 1e-12);
            let eig = info.symmetric_eigenvalues();
            let max = eig.iter().copied().fold(f64::MIN, f64::max);
            assert!(eig.iter().all(|&l| l >= -1e-8 * max.max(1.0)));
        }
    }
}
