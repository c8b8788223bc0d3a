//! Expected-utility evaluators.
//!
//! A utility is either stochastic, returning a vector of `B` independent
//! utility draws for a design, or deterministic, returning one scalar.
//! Stochastic evaluators are driven by a per-call seed: draw `b` always
//! reads from substream `b`, so the same `(design, B, seed)` triple
//! reproduces the same draw vector no matter how or where the draws are
//! computed.
//!
//! The approximate utilities implemented here are the nested Monte Carlo
//! and Laplace approximations to Shannon information gain, the normal-based
//! approximation to negative squared error loss (posterior mean replaced by
//! the posterior mode of a normal approximation), and the 0-1 model
//! discrimination utility with inner Monte Carlo marginal likelihoods.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::models::StatModel;
use crate::rng::DrawStreams;

pub type StochasticFn = Arc<dyn Fn(&Design, usize, u64) -> Result<Vec<f64>> + Send + Sync>;
pub type DeterministicFn = Arc<dyn Fn(&Design) -> Result<f64> + Send + Sync>;

/// The caller-supplied expected-utility contract.
#[derive(Clone)]
pub enum Utility {
    /// `(design, B, call_seed) -> B utility draws`.
    Stochastic(StochasticFn),
    /// `design -> scalar` (already an expectation, e.g. by quadrature).
    Deterministic(DeterministicFn),
}

impl Utility {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, Utility::Deterministic(_))
    }
}

/// Sample mean, sample standard deviation (divisor `B - 1`) and the raw
/// draws of a stochastic utility at one design.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub mean: f64,
    pub sd: f64,
    pub draws: Vec<f64>,
}

pub fn monte_carlo_expected_utility(
    utility: &StochasticFn,
    d: &Design,
    b: usize,
    call_seed: u64,
) -> Result<McSummary> {
    if b < 2 {
        return Err(Error::InvalidArgument(
            "Monte Carlo sample size must be at least 2".into(),
        ));
    }
    let draws = utility(d, b, call_seed)?;
    if draws.len() != b {
        return Err(Error::DimensionMismatch(format!(
            "utility returned {} draws for B = {b}",
            draws.len()
        )));
    }
    if let Some(i) = draws.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mean = draws.iter().sum::<f64>() / b as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    Ok(McSummary {
        mean,
        sd: var.sqrt(),
        draws,
    })
}

/// Draws rows from the prior: `(B, rng) -> B x p matrix`.
#[derive(Clone)]
pub struct PriorSampler {
    dim: usize,
    sample_fn: Arc<dyn Fn(usize, &mut dyn RngCore) -> DMatrix<f64> + Send + Sync>,
}

impl PriorSampler {
    pub fn new(
        dim: usize,
        sample_fn: Arc<dyn Fn(usize, &mut dyn RngCore) -> DMatrix<f64> + Send + Sync>,
    ) -> Self {
        Self { dim, sample_fn }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, b: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
        (self.sample_fn)(b, rng)
    }

    pub fn sample_one(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let m = self.sample(1, rng);
        DVector::from_fn(self.dim, |j, _| m[(0, j)])
    }

    /// Multivariate normal prior.
    pub fn normal(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        let chol = Cholesky::new(covariance).ok_or_else(|| {
            Error::InvalidArgument("prior covariance is not positive definite".into())
        })?;
        let l = chol.l();
        Ok(Self::new(
            p,
            Arc::new(move |b, rng| {
                let mut out = DMatrix::zeros(b, p);
                let mut z = DVector::zeros(p);
                for row in 0..b {
                    for j in 0..p {
                        z[j] = StandardNormal.sample(&mut &mut *rng);
                    }
                    let th = &l * &z;
                    for j in 0..p {
                        out[(row, j)] = mean[j] + th[j];
                    }
                }
                out
            }),
        ))
    }

    /// Independent uniform prior; components with equal limits are point
    /// masses.
    pub fn independent_uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("support rows differ".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument("lower limit above upper".into()));
        }
        let p = lower.len();
        Ok(Self::new(
            p,
            Arc::new(move |b, rng| {
                DMatrix::from_fn(b, p, |_, j| {
                    if lower[j] < upper[j] {
                        let u: f64 = rand::Rng::random(&mut &mut *rng);
                        lower[j] + (upper[j] - lower[j]) * u
                    } else {
                        lower[j]
                    }
                })
            }),
        ))
    }
}

type LogDensityFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type HessianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Log prior density with its first two derivatives, as needed by the
/// posterior-mode search and the Laplace approximation. `free` marks the
/// coordinates that actually vary; point-mass components stay fixed.
#[derive(Clone)]
pub struct LogPrior {
    pub log_density: LogDensityFn,
    pub grad: GradientFn,
    pub hessian: HessianFn,
    pub free: Vec<bool>,
}

impl LogPrior {
    pub fn normal(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        let chol = Cholesky::new(covariance).ok_or_else(|| {
            Error::InvalidArgument("prior covariance is not positive definite".into())
        })?;
        let log_det: f64 = (0..p).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        let norm_const = -0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        let precision = chol.inverse();
        let mean_d = mean.clone();
        let prec_d = precision.clone();
        let prec_h = precision.clone();
        Ok(Self {
            log_density: Arc::new(move |th| {
                let c = th - &mean_d;
                norm_const - 0.5 * c.dot(&(&prec_d * &c))
            }),
            grad: Arc::new(move |th| -(&precision * (th - &mean))),
            hessian: Arc::new(move |_| -prec_h.clone()),
            free: vec![true; p],
        })
    }

    /// Independent uniform: constant density inside the support, minus
    /// infinity outside; flat derivatives. Point-mass components (equal
    /// limits) are excluded from the free set.
    pub fn independent_uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("support rows differ".into()));
        }
        let p = lower.len();
        let free: Vec<bool> = lower.iter().zip(&upper).map(|(l, u)| l < u).collect();
        let log_vol: f64 = lower
            .iter()
            .zip(&upper)
            .filter(|(l, u)| l < u)
            .map(|(l, u)| (u - l).ln())
            .sum();
        let (lo, up) = (lower, upper);
        Ok(Self {
            log_density: Arc::new(move |th| {
                for j in 0..p {
                    if th[j] < lo[j] || th[j] > up[j] {
                        return f64::NEG_INFINITY;
                    }
                }
                -log_vol
            }),
            grad: Arc::new(move |th| DVector::zeros(th.len())),
            hessian: Arc::new(move |th| DMatrix::zeros(th.len(), th.len())),
            free,
        })
    }
}

/// Result of the posterior-mode search: the mode, the curvature of the
/// normal approximation (expected Fisher information minus the log-prior
/// Hessian, restricted to the free coordinates), and convergence state.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub mode: DVector<f64>,
    pub curvature: DMatrix<f64>,
    pub free: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

const MAX_NEWTON_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 40;

/// Newton (Fisher scoring) search for the posterior mode with step
/// halving. Non-convergence is not fatal: the last iterate is returned
/// flagged, and callers count it.
pub fn find_posterior_mode(
    model: &dyn StatModel,
    log_prior: &LogPrior,
    y: &DVector<f64>,
    d: &Design,
    start: &DVector<f64>,
) -> LaplaceFit {
    let p = model.param_dim();
    let free: Vec<usize> = (0..p).filter(|&j| log_prior.free[j]).collect();
    let nf = free.len();
    let mut theta = start.clone();
    let log_post = |th: &DVector<f64>| {
        let lp = (log_prior.log_density)(th);
        if lp == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            model.log_likelihood(th, y, d) + lp
        }
    };
    let mut lp = log_post(&theta);
    let mut converged = false;
    let mut iterations = 0;
    let mut curvature = DMatrix::zeros(nf, nf);

    for iter in 0..MAX_NEWTON_ITERATIONS {
        iterations = iter + 1;
        let grad_full = model.score(&theta, y, d) + (log_prior.grad)(&theta);
        let info = model.fisher_information(&theta, d) - (log_prior.hessian)(&theta);
        let mut grad = DVector::zeros(nf);
        for (a, &ja) in free.iter().enumerate() {
            grad[a] = grad_full[ja];
            for (b, &jb) in free.iter().enumerate() {
                curvature[(a, b)] = info[(ja, jb)];
            }
        }
        if grad.amax() <= 1e-6 * (1.0 + lp.abs()) {
            converged = true;
            break;
        }

        // Solve H s = g, escalating a diagonal ridge when H is not PD.
        let scale = (0..nf)
            .map(|a| curvature[(a, a)].abs())
            .fold(0.0f64, f64::max)
            .max(1.0);
        let mut ridge = 0.0;
        let step = loop {
            let mut h = curvature.clone();
            if ridge > 0.0 {
                for a in 0..nf {
                    h[(a, a)] += ridge;
                }
            }
            match Cholesky::new(h) {
                Some(c) => break c.solve(&grad),
                None => {
                    ridge = if ridge == 0.0 {
                        1e-10 * scale
                    } else {
                        ridge * 10.0
                    };
                    if ridge > 1e2 * scale {
                        break grad.clone() / scale;
                    }
                }
            }
        };

        let mut s = 1.0;
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let mut trial = theta.clone();
            for (a, &ja) in free.iter().enumerate() {
                trial[ja] += s * step[a];
            }
            let lp_trial = log_post(&trial);
            if lp_trial > lp {
                let gain = lp_trial - lp;
                theta = trial;
                lp = lp_trial;
                // A vanishing gain means the iterate has stopped moving,
                // typically against the support boundary.
                improved = gain > 1e-12 * (1.0 + lp.abs());
                break;
            }
            s *= 0.5;
        }
        if !improved {
            let grad_full = model.score(&theta, y, d) + (log_prior.grad)(&theta);
            let gnorm = free
                .iter()
                .map(|&j| grad_full[j].abs())
                .fold(0.0, f64::max);
            converged = gnorm <= 1e-6 * (1.0 + lp.abs());
            break;
        }
    }

    // Curvature at the final iterate.
    let info = model.fisher_information(&theta, d) - (log_prior.hessian)(&theta);
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            curvature[(a, b)] = info[(ja, jb)];
        }
    }
    LaplaceFit {
        mode: theta,
        curvature,
        free,
        converged,
        iterations,
    }
}

/// Log determinant with escalating jitter; the curvature of a nearly flat
/// fit can be numerically semidefinite.
fn log_det_jittered(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return 0.0;
    }
    let scale = (0..n)
        .map(|i| h[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut trial = h.clone();
        if jitter > 0.0 {
            for i in 0..n {
                trial[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(trial) {
            return (0..n).map(|i| c.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        }
        jitter = if jitter == 0.0 {
            1e-10 * scale
        } else {
            jitter * 10.0
        };
        if jitter > 1e-2 * scale {
            return f64::NEG_INFINITY;
        }
    }
}

/// Laplace approximation to the log marginal likelihood at a fitted mode:
/// `loglik(mode) + logprior(mode) + (p/2) log 2 pi - log|H| / 2` with `p`
/// the number of free coordinates.
pub fn laplace_log_marginal(
    model: &dyn StatModel,
    log_prior: &LogPrior,
    y: &DVector<f64>,
    d: &Design,
    fit: &LaplaceFit,
) -> f64 {
    let nf = fit.free.len();
    model.log_likelihood(&fit.mode, y, d)
        + (log_prior.log_density)(&fit.mode)
        + 0.5 * nf as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * log_det_jittered(&fit.curvature)
}

/// Counters for the posterior-mode searches embedded in a utility; runs
/// report the non-convergence rate.
#[derive(Clone, Default)]
pub struct LaplaceDiagnostics {
    pub nonconverged: Arc<AtomicU64>,
    pub total: Arc<AtomicU64>,
}

impl LaplaceDiagnostics {
    pub fn counts(&self) -> (u64, u64) {
        (
            self.nonconverged.load(Ordering::Relaxed),
            self.total.load(Ordering::Relaxed),
        )
    }

    pub fn rate(&self) -> f64 {
        let (bad, total) = self.counts();
        if total == 0 {
            0.0
        } else {
            bad as f64 / total as f64
        }
    }

    fn record(&self, fit: &LaplaceFit) {
        self.total.fetch_add(1, Ordering::Relaxed);
        if !fit.converged {
            self.nonconverged.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Normal-based approximation to negative squared error loss: each draw is
/// `-(theta - mode)' (theta - mode)`, the posterior mode standing in for
/// the posterior mean.
pub fn nsel_normal_utility(
    model: Arc<dyn StatModel>,
    prior_sampler: PriorSampler,
    log_prior: LogPrior,
) -> (Utility, LaplaceDiagnostics) {
    let diags = LaplaceDiagnostics::default();
    let diags_out = diags.clone();
    let f: StochasticFn = Arc::new(move |d, b, call_seed| {
        let streams = DrawStreams::new(call_seed);
        let mut draws = Vec::with_capacity(b);
        for bi in 0..b {
            let mut rng = streams.draw(bi);
            let theta = prior_sampler.sample_one(&mut rng);
            let y = model.simulate(&theta, d, &mut rng);
            let fit = find_posterior_mode(model.as_ref(), &log_prior, &y, d, &theta);
            diags.record(&fit);
            let diff = &theta - &fit.mode;
            draws.push(-diff.dot(&diff));
        }
        Ok(draws)
    });
    (Utility::Stochastic(f), diags_out)
}

/// Shannon information gain by nested Monte Carlo: the marginal likelihood
/// is an inner prior average of the likelihood, computed with max-shifted
/// log-sum-exp. One inner sample is drawn per evaluator call and shared
/// across the batch.
pub fn sig_nested_mc_utility(
    model: Arc<dyn StatModel>,
    prior_sampler: PriorSampler,
    b_inner: usize,
) -> Utility {
    Utility::Stochastic(Arc::new(move |d, b, call_seed| {
        let streams = DrawStreams::new(call_seed);
        let inner = prior_sampler.sample(b_inner, &mut streams.shared(0));
        let p = prior_sampler.dim();
        let inner_rows: Vec<DVector<f64>> = (0..b_inner)
            .map(|r| DVector::from_fn(p, |j, _| inner[(r, j)]))
            .collect();
        let mut draws = Vec::with_capacity(b);
        let mut inner_ll = vec![0.0; b_inner];
        for bi in 0..b {
            let mut rng = streams.draw(bi);
            let theta = prior_sampler.sample_one(&mut rng);
            let y = model.simulate(&theta, d, &mut rng);
            let ll = model.log_likelihood(&theta, &y, d);
            for (r, row) in inner_rows.iter().enumerate() {
                inner_ll[r] = model.log_likelihood(row, &y, d);
            }
            draws.push(ll - log_mean_exp(&inner_ll));
        }
        Ok(draws)
    }))
}

/// Shannon information gain with the marginal likelihood replaced by its
/// Laplace approximation at the posterior mode.
pub fn sig_laplace_utility(
    model: Arc<dyn StatModel>,
    prior_sampler: PriorSampler,
    log_prior: LogPrior,
) -> (Utility, LaplaceDiagnostics) {
    let diags = LaplaceDiagnostics::default();
    let diags_out = diags.clone();
    let f: StochasticFn = Arc::new(move |d, b, call_seed| {
        let streams = DrawStreams::new(call_seed);
        let mut draws = Vec::with_capacity(b);
        for bi in 0..b {
            let mut rng = streams.draw(bi);
            let theta = prior_sampler.sample_one(&mut rng);
            let y = model.simulate(&theta, d, &mut rng);
            let fit = find_posterior_mode(model.as_ref(), &log_prior, &y, d, &theta);
            diags.record(&fit);
            let log_marg = laplace_log_marginal(model.as_ref(), &log_prior, &y, d, &fit);
            draws.push(model.log_likelihood(&theta, &y, d) - log_marg);
        }
        Ok(draws)
    });
    (Utility::Stochastic(f), diags_out)
}

/// Prior samplers for the model-discrimination utility. `Common` shares
/// the literal inner draws across models, which is the right choice when
/// every candidate model has the same parameter prior.
#[derive(Clone)]
pub enum ZeroOnePriors {
    Common(PriorSampler),
    PerModel(Vec<PriorSampler>),
}

/// 0-1 model discrimination utility: draw a model uniformly, parameters
/// from its prior and data from the model; score 1 when the model with
/// the largest inner Monte Carlo marginal likelihood is the generating
/// one. Marginal-likelihood ties break toward the smallest model index.
pub fn zero_one_utility(
    models: Vec<Arc<dyn StatModel>>,
    priors: ZeroOnePriors,
    b_inner: usize,
) -> Result<Utility> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no candidate models".into()));
    }
    if let ZeroOnePriors::PerModel(s) = &priors {
        if s.len() != models.len() {
            return Err(Error::DimensionMismatch(
                "one prior sampler per model required".into(),
            ));
        }
    }
    let n_models = models.len();
    Ok(Utility::Stochastic(Arc::new(move |d, b, call_seed| {
        let streams = DrawStreams::new(call_seed);
        // Inner prior sample per model, drawn once per call and reused for
        // every outer draw. A common sampler shares the literal draws.
        let inner_rows: Vec<Vec<DVector<f64>>> = match &priors {
            ZeroOnePriors::Common(sampler) => {
                let m = sampler.sample(b_inner, &mut streams.shared(0));
                let rows: Vec<DVector<f64>> = (0..b_inner)
                    .map(|r| DVector::from_fn(sampler.dim(), |j, _| m[(r, j)]))
                    .collect();
                vec![rows; n_models]
            }
            ZeroOnePriors::PerModel(samplers) => samplers
                .iter()
                .enumerate()
                .map(|(mi, sampler)| {
                    let m = sampler.sample(b_inner, &mut streams.shared(mi as u64));
                    (0..b_inner)
                        .map(|r| DVector::from_fn(sampler.dim(), |j, _| m[(r, j)]))
                        .collect()
                })
                .collect(),
        };

        let mut draws = Vec::with_capacity(b);
        let mut inner_ll = vec![0.0; b_inner];
        for bi in 0..b {
            let mut rng = streams.draw(bi);
            let m_true = rng.random_range(0..n_models);
            let theta = match &priors {
                ZeroOnePriors::Common(sampler) => sampler.sample_one(&mut rng),
                ZeroOnePriors::PerModel(samplers) => samplers[m_true].sample_one(&mut rng),
            };
            let y = models[m_true].simulate(&theta, d, &mut rng);

            let mut best_model = 0;
            let mut best_lm = f64::NEG_INFINITY;
            for (mi, model) in models.iter().enumerate() {
                for (r, row) in inner_rows[mi].iter().enumerate() {
                    inner_ll[r] = model.log_likelihood(row, &y, d);
                }
                let lm = log_mean_exp(&inner_ll);
                if lm > best_lm {
                    best_lm = lm;
                    best_model = mi;
                }
            }
            draws.push(f64::from(best_model == m_true));
        }
        Ok(draws)
    })))
}

/// `log(mean(exp(v)))` with max-shift stabilization.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + (sum / v.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GlmFamily, GlmModel, NonlinearModel};

    fn linear_gaussian(sigma2: f64) -> (Arc<dyn StatModel>, DVector<f64>, DMatrix<f64>, Design) {
        // y_i ~ N(theta' x_i, sigma2) with a 2-parameter linear mean.
        let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
            Arc::new(|th: &DVector<f64>, run: &[f64]| th[0] * run[0] + th[1] * run[1]);
        let grad: Arc<dyn Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync> =
            Arc::new(|_: &DVector<f64>, run: &[f64]| DVector::from_vec(vec![run[0], run[1]]));
        let model = Arc::new(NonlinearModel::new(2, sigma2, mean, Some(grad)));
        let prior_mean = DVector::from_vec(vec![0.5, -1.0]);
        let prior_cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let d = Design::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.5],
        ])
        .unwrap();
        (model, prior_mean, prior_cov, d)
    }

    fn conjugate_posterior_mean(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        sigma2: f64,
        m0: &DVector<f64>,
        s0: &DMatrix<f64>,
    ) -> DVector<f64> {
        let s0_inv = s0.clone().try_inverse().unwrap();
        let prec = &s0_inv + x.transpose() * x / sigma2;
        let cov = prec.try_inverse().unwrap();
        &cov * (&s0_inv * m0 + x.transpose() * y / sigma2)
    }

    fn analytic_log_marginal(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        sigma2: f64,
        m0: &DVector<f64>,
        s0: &DMatrix<f64>,
    ) -> f64 {
        // y ~ N(X m0, X S0 X' + sigma2 I).
        let n = y.len();
        let mean = x * m0;
        let cov = x * s0 * x.transpose() + DMatrix::identity(n, n) * sigma2;
        let chol = Cholesky::new(cov).unwrap();
        let log_det: f64 = (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        let c = y - mean;
        let solved = chol.solve(&c);
        -0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * c.dot(&solved)
    }

    #[test]
    fn mc_summary_constant_utility() {
        let f: StochasticFn = Arc::new(|_, b, _| Ok(vec![3.0; b]));
        let d = Design::from_rows(&[vec![0.0]]).unwrap();
        let s = monte_carlo_expected_utility(&f, &d, 100, 1).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.draws.len(), 100);
    }

    #[test]
    fn mc_rejects_non_finite() {
        let f: StochasticFn = Arc::new(|_, b, _| {
            let mut v = vec![1.0; b];
            v[b / 2] = f64::NAN;
            Ok(v)
        });
        let d = Design::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(
            monte_carlo_expected_utility(&f, &d, 10, 1),
            Err(Error::NonFinite(5))
        ));
    }

    #[test]
    fn utilities_are_reproducible() {
        let (model, m0, s0, d) = linear_gaussian(0.5);
        let sampler = PriorSampler::normal(m0, s0).unwrap();
        let Utility::Stochastic(f) = sig_nested_mc_utility(model, sampler, 50) else {
            panic!()
        };
        let a = f(&d, 20, 99).unwrap();
        let b = f(&d, 20, 99).unwrap();
        assert_eq!(a, b);
        let c = f(&d, 20, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn posterior_mode_matches_conjugate_formula() {
        let (model, m0, s0, d) = linear_gaussian(0.5);
        let x = DMatrix::from_fn(d.n_runs(), 2, |i, j| d.coordinate(i, j));
        let y = DVector::from_vec(vec![0.3, -0.7, 1.1, 0.4]);
        let log_prior = LogPrior::normal(m0.clone(), s0.clone()).unwrap();
        let fit = find_posterior_mode(model.as_ref(), &log_prior, &y, &d, &m0);
        assert!(fit.converged);
        let post_mean = conjugate_posterior_mean(&x, &y, 0.5, &m0, &s0);
        assert!((fit.mode - post_mean).amax() < 1e-8);
    }

    #[test]
    fn laplace_marginal_exact_on_conjugate_instances() {
        let (model, m0, s0, d) = linear_gaussian(0.5);
        let x = DMatrix::from_fn(d.n_runs(), 2, |i, j| d.coordinate(i, j));
        let log_prior = LogPrior::normal(m0.clone(), s0.clone()).unwrap();
        let sampler = PriorSampler::normal(m0.clone(), s0.clone()).unwrap();
        let mut rng = crate::rng::root_rng(17);
        for _ in 0..10 {
            let theta = sampler.sample_one(&mut rng);
            let y = model.simulate(&theta, &d, &mut rng);
            let fit = find_posterior_mode(model.as_ref(), &log_prior, &y, &d, &theta);
            let got = laplace_log_marginal(model.as_ref(), &log_prior, &y, &d, &fit);
            let exact = analytic_log_marginal(&x, &y, 0.5, &m0, &s0);
            assert!(
                ((got - exact) / exact).abs() < 1e-8,
                "laplace {got} vs analytic {exact}"
            );
        }
    }

    #[test]
    fn flat_likelihood_mode_is_prior_mode() {
        // Zero-information likelihood: the mean does not depend on theta.
        let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
            Arc::new(|_: &DVector<f64>, _: &[f64]| 0.0);
        let grad: Arc<dyn Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync> =
            Arc::new(|_: &DVector<f64>, _: &[f64]| DVector::zeros(2));
        let model = NonlinearModel::new(2, 1.0, mean, Some(grad));
        let m0 = DVector::from_vec(vec![0.7, -0.2]);
        let log_prior = LogPrior::normal(m0.clone(), DMatrix::identity(2, 2)).unwrap();
        let d = Design::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let y = DVector::from_vec(vec![0.0]);
        let fit = find_posterior_mode(&model, &log_prior, &y, &d, &m0);
        assert!((fit.mode - m0).amax() < 1e-10);
    }

    #[test]
    fn sig_nested_mc_conjugate_value() {
        // One observation y ~ N(theta, 1) with theta ~ N(0, 1): the
        // expected information gain is log(1 + 1) / 2.
        let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
            Arc::new(|th: &DVector<f64>, _: &[f64]| th[0]);
        let model: Arc<dyn StatModel> = Arc::new(NonlinearModel::new(1, 1.0, mean, None));
        let sampler = PriorSampler::normal(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let Utility::Stochastic(f) = sig_nested_mc_utility(model, sampler, 2_000) else {
            panic!()
        };
        let d = Design::from_rows(&[vec![1.0]]).unwrap();
        let s = monte_carlo_expected_utility(&f, &d, 20_000, 5).unwrap();
        let exact = 0.5 * 2f64.ln();
        assert!((s.mean - exact).abs() < 0.02, "SIG {} vs {exact}", s.mean);
    }

    #[test]
    fn sig_point_mass_prior_gives_zero() {
        let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
            Arc::new(|th: &DVector<f64>, _: &[f64]| th[0]);
        let model: Arc<dyn StatModel> = Arc::new(NonlinearModel::new(1, 1.0, mean, None));
        let sampler = PriorSampler::independent_uniform(vec![2.5], vec![2.5]).unwrap();
        let Utility::Stochastic(f) = sig_nested_mc_utility(model, sampler, 100) else {
            panic!()
        };
        let d = Design::from_rows(&[vec![1.0]]).unwrap();
        let draws = f(&d, 50, 3).unwrap();
        assert!(draws.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn sig_laplace_matches_nested_mc_on_conjugate_model() {
        let (model, m0, s0, d) = linear_gaussian(0.8);
        let sampler = PriorSampler::normal(m0.clone(), s0.clone()).unwrap();
        let log_prior = LogPrior::normal(m0, s0).unwrap();
        let (lap, diags) = sig_laplace_utility(model.clone(), sampler.clone(), log_prior);
        let nested = sig_nested_mc_utility(model, sampler, 5_000);
        let (Utility::Stochastic(fl), Utility::Stochastic(fnest)) = (lap, nested) else {
            panic!()
        };
        let sl = monte_carlo_expected_utility(&fl, &d, 4_000, 7).unwrap();
        let sn = monte_carlo_expected_utility(&fnest, &d, 4_000, 8).unwrap();
        assert!(
            (sl.mean - sn.mean).abs() < 0.06,
            "laplace {} vs nested {}",
            sl.mean,
            sn.mean
        );
        assert_eq!(diags.rate(), 0.0);
    }

    #[test]
    fn nsel_norm_is_nonpositive_and_tightens_with_information() {
        let (model, m0, s0, d) = linear_gaussian(1.0);
        let sampler = PriorSampler::normal(m0.clone(), s0.clone()).unwrap();
        let log_prior = LogPrior::normal(m0.clone(), s0.clone()).unwrap();
        let (u, _) = nsel_normal_utility(model, sampler, log_prior);
        let Utility::Stochastic(f) = u else { panic!() };
        let loose = monte_carlo_expected_utility(&f, &d, 2_000, 1).unwrap();
        assert!(loose.draws.iter().all(|&v| v <= 0.0));

        // Much smaller noise: the mode approaches the truth and the
        // utility rises toward zero.
        let (model_tight, m0t, s0t, _) = linear_gaussian(1e-6);
        let sampler = PriorSampler::normal(m0t.clone(), s0t.clone()).unwrap();
        let log_prior = LogPrior::normal(m0t, s0t).unwrap();
        let (u2, _) = nsel_normal_utility(model_tight, sampler, log_prior);
        let Utility::Stochastic(f2) = u2 else { panic!() };
        let tight = monte_carlo_expected_utility(&f2, &d, 2_000, 1).unwrap();
        assert!(tight.mean > loose.mean);
        assert!(tight.mean > -1e-4, "tight {}", tight.mean);
    }

    #[test]
    fn zero_one_single_model_is_always_one() {
        let m = Arc::new(GlmModel::new(GlmFamily::PoissonLog, false, vec![0]));
        let sampler = PriorSampler::normal(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let u = zero_one_utility(vec![m], ZeroOnePriors::Common(sampler), 20).unwrap();
        let Utility::Stochastic(f) = u else { panic!() };
        let d = Design::from_rows(&[vec![1.0]]).unwrap();
        let draws = f(&d, 200, 9).unwrap();
        assert!(draws.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_one_separated_models_reach_one() {
        // Two Gaussian models with far-apart constant means and tiny noise.
        let mk = |c: f64| -> Arc<dyn StatModel> {
            let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
                Arc::new(move |_: &DVector<f64>, _: &[f64]| c);
            Arc::new(NonlinearModel::new(1, 1e-4, mean, None))
        };
        let sampler = PriorSampler::independent_uniform(vec![0.0], vec![1.0]).unwrap();
        let u =
            zero_one_utility(vec![mk(0.0), mk(10.0)], ZeroOnePriors::Common(sampler), 30).unwrap();
        let Utility::Stochastic(f) = u else { panic!() };
        let d = Design::from_rows(&[vec![0.5]]).unwrap();
        let draws = f(&d, 300, 2).unwrap();
        assert!(draws.iter().all(|&v| v == 0.0 || v == 1.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean > 0.99, "mean {mean}");
    }

    #[test]
    fn log_mean_exp_shift_invariance() {
        // The inner stabilization behind SIG's shift invariance.
        let v = [-1.0, 0.5, 2.0, -3.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 123.456).collect();
        assert!((log_mean_exp(&shifted) - log_mean_exp(&v) - 123.456).abs() < 1e-9);
    }

    #[test]
    fn nested_mc_bias_shrinks_with_inner_sample() {
        let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
            Arc::new(|th: &DVector<f64>, _: &[f64]| th[0]);
        let model: Arc<dyn StatModel> = Arc::new(NonlinearModel::new(1, 1.0, mean, None));
        let sampler = PriorSampler::normal(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
        let d = Design::from_rows(&[vec![1.0]]).unwrap();
        let exact = 0.5 * 2f64.ln();
        let estimate = |b_inner: usize| {
            let Utility::Stochastic(f) =
                sig_nested_mc_utility(model.clone(), sampler.clone(), b_inner)
            else {
                panic!()
            };
            monte_carlo_expected_utility(&f, &d, 30_000, 42).unwrap().mean
        };
        let coarse = estimate(20);
        let fine = estimate(5_000);
        // Upward bias of order 1/B_inner: the coarse estimate sits farther
        // from the truth and on the high side.
        assert!(coarse > exact);
        assert!((fine - exact).abs() < (coarse - exact).abs());
    }
}
