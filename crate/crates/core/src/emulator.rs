//! One-dimensional Gaussian-process emulator of the expected utility along
//! a single design coordinate.
//!
//! Training abscissae are rescaled to `[0, 1]` and the utility values are
//! standardized before fitting, so one kernel parameterization serves all
//! coordinates and utility scales. The kernel is squared exponential with
//! a constant prior mean; the constant mean and the signal variance are
//! profiled out analytically, and the length scale (plus the nugget-to-
//! signal ratio when the training values are noisy) maximizes the log
//! marginal likelihood by golden-section search over `log l`. Prediction
//! only ever uses the posterior mean, which is all the coordinate exchange
//! needs, and maximization over a candidate grid is by exhaustive
//! evaluation: the predictive mean is cheap and a grid sweep is robust to
//! multimodal fits.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Training data for one coordinate: the trial coordinate values and their
/// expected-utility evaluations.
#[derive(Debug, Clone)]
pub struct EmulatorTrainingSet {
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
}

impl EmulatorTrainingSet {
    pub fn new(abscissae: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if abscissae.len() != values.len() {
            return Err(Error::DimensionMismatch(
                "abscissae and values differ in length".into(),
            ));
        }
        if abscissae.len() < 3 {
            return Err(Error::InvalidArgument(
                "emulator needs at least 3 training points".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "training values must be finite".into(),
            ));
        }
        let mut sorted = abscissae.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "training abscissae must be distinct".into(),
            ));
        }
        Ok(Self { abscissae, values })
    }

    fn len(&self) -> usize {
        self.abscissae.len()
    }
}

/// Fitted emulator. Immutable; prediction is pure.
#[derive(Debug, Clone)]
pub struct Emulator1D {
    /// Training abscissae rescaled to [0, 1].
    x: Vec<f64>,
    /// Affine map from raw coordinate to the rescaled axis.
    x_offset: f64,
    x_scale: f64,
    /// Affine map from standardized value back to raw value.
    v_mean: f64,
    v_sd: f64,
    /// None for a constant emulator (zero-variance training values).
    fit: Option<GpFit>,
}

#[derive(Debug, Clone)]
struct GpFit {
    length_scale: f64,
    constant_mean: f64,
    /// (R + g I)^-1 (v - m 1) in standardized space.
    alpha: DVector<f64>,
    /// Diagonal kernel term applied when predicting exactly at a training
    /// abscissa. In deterministic mode the tiny nugget is jitter, part of
    /// the fitted kernel, and including it makes the emulator interpolate;
    /// in stochastic mode the nugget is observation noise and prediction
    /// uses the noise-free kernel so the fit smooths.
    diag_bump: f64,
}

const LOG_LS_LO: f64 = -4.605170185988091; // ln 0.01
const LOG_LS_HI: f64 = 2.302585092994046; // ln 10
const DETERMINISTIC_NUGGET: f64 = 1e-10;
const NUGGET_GRID: [f64; 9] = [1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0];

fn correlation(x: &[f64], length_scale: f64) -> DMatrix<f64> {
    let q = x.len();
    DMatrix::from_fn(q, q, |a, b| {
        let d = x[a] - x[b];
        (-d * d / (2.0 * length_scale * length_scale)).exp()
    })
}

/// Cholesky with escalating diagonal jitter: start at 1e-10, multiply by
/// 10 per retry, give up past 1e-4.
fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let mut jitter = 0.0;
    loop {
        let mut trial = m.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                trial[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(trial) {
            return Ok(c);
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-4 {
            return Err(Error::NumericalFailure(
                "training covariance not factorizable within jitter budget".into(),
            ));
        }
    }
}

/// Profiled log marginal likelihood (up to an additive constant) of the
/// standardized data at the given length scale and nugget ratio.
fn profiled_lml(x: &[f64], v: &DVector<f64>, length_scale: f64, nugget: f64) -> Result<f64> {
    let q = x.len();
    let mut r = correlation(x, length_scale);
    for i in 0..q {
        r[(i, i)] += nugget;
    }
    let chol = cholesky_jittered(&r)?;
    let ones = DVector::from_element(q, 1.0);
    let rinv_v = chol.solve(v);
    let rinv_1 = chol.solve(&ones);
    let m_hat = ones.dot(&rinv_v) / ones.dot(&rinv_1);
    let centered = v - &ones * m_hat;
    let rinv_c = chol.solve(&centered);
    let sigma2 = (centered.dot(&rinv_c) / q as f64).max(1e-300);
    let log_det: f64 = (0..q).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * q as f64 * sigma2.ln() - 0.5 * log_det)
}

/// Golden-section maximization of `f` over `[lo, hi]`.
fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, iters: usize) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        c
    } else {
        d
    }
}

/// Fits the emulator. With `stochastic` set, the nugget-to-signal ratio is
/// estimated alongside the length scale; otherwise the nugget is pinned to
/// numerical jitter and the fit interpolates.
pub fn fit_1d(data: &EmulatorTrainingSet, stochastic: bool) -> Result<Emulator1D> {
    let q = data.len();
    let x_min = data.abscissae.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = data
        .abscissae
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let x_scale = if x_max > x_min { x_max - x_min } else { 1.0 };
    let x: Vec<f64> = data
        .abscissae
        .iter()
        .map(|&a| (a - x_min) / x_scale)
        .collect();

    let v_mean = data.values.iter().sum::<f64>() / q as f64;
    let var = data
        .values
        .iter()
        .map(|v| (v - v_mean).powi(2))
        .sum::<f64>()
        / (q as f64 - 1.0);
    let v_sd = var.sqrt();
    if v_sd == 0.0 {
        // Constant data: the predictive mean is that constant everywhere.
        return Ok(Emulator1D {
            x,
            x_offset: x_min,
            x_scale,
            v_mean,
            v_sd: 0.0,
            fit: None,
        });
    }
    let v = DVector::from_iterator(q, data.values.iter().map(|&val| (val - v_mean) / v_sd));

    let nuggets: &[f64] = if stochastic {
        &NUGGET_GRID
    } else {
        &[DETERMINISTIC_NUGGET]
    };
    let mut best: Option<(f64, f64, f64)> = None; // (lml, log_ls, nugget)
    for &g in nuggets {
        let log_ls = golden_section(
            |ll| profiled_lml(&x, &v, ll.exp(), g).unwrap_or(f64::NEG_INFINITY),
            LOG_LS_LO,
            LOG_LS_HI,
            40,
        );
        if let Ok(lml) = profiled_lml(&x, &v, log_ls.exp(), g) {
            if best.is_none_or(|(b, _, _)| lml > b) {
                best = Some((lml, log_ls, g));
            }
        }
    }
    let (_, log_ls, nugget) =
        best.ok_or_else(|| Error::NumericalFailure("no admissible emulator fit".into()))?;
    let length_scale = log_ls.exp();

    let mut r = correlation(&x, length_scale);
    for i in 0..q {
        r[(i, i)] += nugget;
    }
    let chol = cholesky_jittered(&r)?;
    let ones = DVector::from_element(q, 1.0);
    let rinv_v = chol.solve(&v);
    let rinv_1 = chol.solve(&ones);
    let m_hat = ones.dot(&rinv_v) / ones.dot(&rinv_1);
    if !m_hat.is_finite() {
        return Err(Error::NumericalFailure(
            "profiled constant mean is not finite".into(),
        ));
    }
    let centered = v - &ones * m_hat;
    let mut alpha = chol.solve(&centered);
    // One step of iterative refinement; the training matrix is often close
    // to singular at long length scales and the raw solve can leave a
    // residual large enough to break the interpolation property.
    let residual = &centered - &r * &alpha;
    alpha += chol.solve(&residual);

    Ok(Emulator1D {
        x,
        x_offset: x_min,
        x_scale,
        v_mean,
        v_sd,
        fit: Some(GpFit {
            length_scale,
            constant_mean: m_hat,
            alpha,
            diag_bump: if stochastic { 0.0 } else { nugget },
        }),
    })
}

impl Emulator1D {
    /// Fitted constant prior mean on the raw value scale; this is also the
    /// kernel-decay limit of the predictive mean far from the data.
    pub fn constant_mean(&self) -> f64 {
        match &self.fit {
            None => self.v_mean,
            Some(fit) => self.v_mean + self.v_sd * fit.constant_mean,
        }
    }

    /// Posterior predictive mean at a raw coordinate value.
    pub fn predictive_mean(&self, coordinate: f64) -> f64 {
        match &self.fit {
            None => self.v_mean,
            Some(fit) => {
                let xs = (coordinate - self.x_offset) / self.x_scale;
                let mut acc = fit.constant_mean;
                for (i, &xi) in self.x.iter().enumerate() {
                    let d = xs - xi;
                    let mut k = (-d * d / (2.0 * fit.length_scale * fit.length_scale)).exp();
                    if d == 0.0 {
                        k += fit.diag_bump;
                    }
                    acc += k * fit.alpha[i];
                }
                self.v_mean + self.v_sd * acc
            }
        }
    }

    /// Grid point with the largest predictive mean; ties break toward the
    /// smallest coordinate so runs stay deterministic.
    pub fn maximize_on_grid(&self, grid: &[f64]) -> (f64, f64) {
        assert!(!grid.is_empty(), "empty candidate grid");
        let mut best_x = grid[0];
        let mut best_v = self.predictive_mean(grid[0]);
        for &g in &grid[1..] {
            let v = self.predictive_mean(g);
            if v > best_v || (v == best_v && g < best_x) {
                best_x = g;
                best_v = v;
            }
        }
        (best_x, best_v)
    }
}
