//! Ready-to-run design problems.
//!
//! Each scenario bundles a model, prior, utility, design space and engine
//! settings for one of the worked problems: the single-parameter Poisson
//! information example, pseudo-Bayesian D-optimal sampling times for a
//! pharmacokinetic compartmental model (optionally with a minimum-spacing
//! constraint), pseudo-Bayesian A and normal-based NSEL designs for a
//! four-factor logistic regression, 0-1 model discrimination between
//! chemical reaction orders, and sensor placement for Gaussian-process
//! prediction with location-dependent costs.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::Distribution;

use crate::design::{Design, DesignSpace, MinSpacingConstraint};
use crate::engine::AceSettings;
use crate::error::{Error, Result};
use crate::models::{NonlinearModel, StatModel};
use crate::quadrature::{
    build_radial_spherical, transform_to_prior, IndependentUniformPrior, InformationCriterion,
    NormalPrior, QuadraturePrior, QuadratureRule,
};
use crate::rng::DrawStreams;
use crate::utility::{
    nsel_normal_utility, LaplaceDiagnostics, LogPrior, PriorSampler, StochasticFn, Utility,
    ZeroOnePriors,
};

/// A fully specified design problem.
pub struct Scenario {
    pub name: &'static str,
    pub description: &'static str,
    pub n: usize,
    pub k: usize,
    pub space: DesignSpace,
    pub utility: Utility,
    pub settings: AceSettings,
    pub criterion: String,
    pub efficiency: crate::assess::EfficiencyKind,
    /// Posterior-mode search counters, for utilities that have them.
    pub diagnostics: Option<LaplaceDiagnostics>,
}

/// Registered scenario names with one-line descriptions.
pub fn scenario_list() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "poisson_fisher",
            "single-parameter Poisson count model, Monte Carlo Fisher-information utility, n=12 on [-1,1]",
        ),
        (
            "compartmental",
            "pharmacokinetic compartmental model, quadrature pseudo-Bayesian D, n=18 sampling times on [0,24]",
        ),
        (
            "logistic_A",
            "four-factor logistic regression, quadrature pseudo-Bayesian A, n=6 on [-1,1]^4",
        ),
        (
            "logistic_nsel_norm",
            "four-factor logistic regression, normal-based NSEL utility by Monte Carlo, n=6 on [-1,1]^4",
        ),
        (
            "chemical",
            "chemical reaction order discrimination, 0-1 utility with inner Monte Carlo marginal likelihoods, n=20",
        ),
        (
            "sensor",
            "sensor placement for Gaussian-process prediction with quadratic placement costs, n=10 on [0,1]^2",
        ),
    ]
}

/// Builds a scenario by name. `min_spacing` adds the sampling-time
/// constraint (only meaningful for the compartmental scenario, which then
/// skips the consolidation phase).
pub fn build_scenario(name: &str, seed: u64, min_spacing: Option<f64>) -> Result<Scenario> {
    match name {
        "poisson_fisher" => poisson_fisher(seed),
        "compartmental" => compartmental(seed, min_spacing),
        "logistic_A" => logistic_a(seed),
        "logistic_nsel_norm" => logistic_nsel_norm(seed),
        "chemical" => chemical(seed),
        "sensor" => sensor(seed),
        other => Err(Error::InvalidArgument(format!(
            "unknown scenario \"{other}\""
        ))),
    }
}

fn quadrature_utility(
    model: Arc<dyn StatModel>,
    rule: Arc<QuadratureRule>,
    criterion: InformationCriterion,
) -> Utility {
    Utility::Deterministic(Arc::new(move |d: &Design| {
        crate::quadrature::expected_criterion(&rule, model.as_ref(), d, criterion)
    }))
}

fn poisson_fisher(seed: u64) -> Result<Scenario> {
    let n = 12;
    // Fisher information of the one-parameter Poisson count model with
    // rate exp(theta x), averaged over standard normal prior draws.
    let utility: StochasticFn = Arc::new(|d: &Design, b, call_seed| {
        let streams = DrawStreams::new(call_seed);
        Ok((0..b)
            .map(|bi| {
                let mut rng = streams.draw(bi);
                let theta: f64 = rand_distr::StandardNormal.sample(&mut rng);
                (0..d.n_runs())
                    .map(|i| {
                        let x = d.coordinate(i, 0);
                        x * x * (theta * x).exp()
                    })
                    .sum()
            })
            .collect())
    });
    Ok(Scenario {
        name: "poisson_fisher",
        description: scenario_list()[0].1,
        n,
        k: 1,
        space: DesignSpace::from_scalar(n, 1, -1.0, 1.0)?,
        utility: Utility::Stochastic(utility),
        settings: AceSettings {
            seed,
            ..Default::default()
        },
        criterion: "fisher-information".into(),
        efficiency: crate::assess::EfficiencyKind::None,
        diagnostics: None,
    })
}

/// Mean and gradient of the open one-compartment pharmacokinetic response
/// `theta3 (exp(-theta1 t) - exp(-theta2 t))`.
pub fn compartmental_model() -> NonlinearModel {
    let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
        Arc::new(|th: &DVector<f64>, run: &[f64]| {
            let t = run[0];
            th[2] * ((-th[0] * t).exp() - (-th[1] * t).exp())
        });
    let grad: Arc<dyn Fn(&DVector<f64>, &[f64]) -> DVector<f64> + Send + Sync> =
        Arc::new(|th: &DVector<f64>, run: &[f64]| {
            let t = run[0];
            DVector::from_vec(vec![
                -th[2] * t * (-th[0] * t).exp(),
                th[2] * t * (-th[1] * t).exp(),
                (-th[0] * t).exp() - (-th[1] * t).exp(),
            ])
        });
    // The D-criterion ranking does not depend on the response variance;
    // unit variance by convention.
    NonlinearModel::new(3, 1.0, mean, Some(grad))
}

/// Prior support of the compartmental parameters. The third parameter is a
/// point mass.
pub fn compartmental_prior() -> IndependentUniformPrior {
    IndependentUniformPrior::new(vec![0.01884, 0.298, 21.8], vec![0.09884, 8.298, 21.8])
        .expect("valid support")
}

fn compartmental(seed: u64, min_spacing: Option<f64>) -> Result<Scenario> {
    let n = 18;
    let prior = compartmental_prior();
    // Higher rule resolution than the library default: the acceptance
    // windows for this problem are tight and evaluations stay cheap.
    let rule = build_radial_spherical(prior.effective_dim(), 8, 8, seed)?;
    let rule = Arc::new(transform_to_prior(&rule, &QuadraturePrior::Uniform(prior))?);
    let model: Arc<dyn StatModel> = Arc::new(compartmental_model());

    let mut space = DesignSpace::from_scalar(n, 1, 0.0, 24.0)?;
    let mut settings = AceSettings {
        seed,
        ..Default::default()
    };
    if let Some(c) = min_spacing {
        space = space.with_constraint(Arc::new(MinSpacingConstraint {
            lower: 0.0,
            upper: 24.0,
            spacing: c,
            grid_size: 10_000,
        }));
        // Consolidation would create repeated sampling times, which the
        // spacing constraint forbids.
        settings.n2 = 0;
    }
    Ok(Scenario {
        name: "compartmental",
        description: scenario_list()[1].1,
        n,
        k: 1,
        space,
        utility: quadrature_utility(model, rule, InformationCriterion::D),
        settings,
        criterion: "D".into(),
        efficiency: crate::assess::EfficiencyKind::D { p: 3 },
        diagnostics: None,
    })
}

/// Logistic regression with intercept and four main effects.
pub fn logistic_model() -> crate::models::GlmModel {
    crate::models::GlmModel::main_effects(crate::models::GlmFamily::BernoulliLogit, true, 4)
}

/// Independent uniform prior limits of the five logistic parameters.
pub fn logistic_prior_support() -> (Vec<f64>, Vec<f64>) {
    (
        vec![-3.0, 4.0, 5.0, -6.0, -2.5],
        vec![3.0, 10.0, 11.0, 0.0, 3.5],
    )
}

fn logistic_a(seed: u64) -> Result<Scenario> {
    let n = 6;
    let (lo, up) = logistic_prior_support();
    let prior = IndependentUniformPrior::new(lo, up)?;
    let rule = build_radial_spherical(prior.effective_dim(), 8, 4, seed)?;
    let rule = Arc::new(transform_to_prior(&rule, &QuadraturePrior::Uniform(prior))?);
    let model: Arc<dyn StatModel> = Arc::new(logistic_model());
    Ok(Scenario {
        name: "logistic_A",
        description: scenario_list()[2].1,
        n,
        k: 4,
        space: DesignSpace::from_scalar(n, 4, -1.0, 1.0)?,
        utility: quadrature_utility(model, rule, InformationCriterion::A),
        settings: AceSettings {
            seed,
            ..Default::default()
        },
        criterion: "A".into(),
        efficiency: crate::assess::EfficiencyKind::A,
        diagnostics: None,
    })
}

fn logistic_nsel_norm(seed: u64) -> Result<Scenario> {
    let n = 6;
    let (lo, up) = logistic_prior_support();
    let model: Arc<dyn StatModel> = Arc::new(logistic_model());
    let sampler = PriorSampler::independent_uniform(lo.clone(), up.clone())?;
    let log_prior = LogPrior::independent_uniform(lo, up)?;
    let (utility, diags) = nsel_normal_utility(model, sampler, log_prior);
    Ok(Scenario {
        name: "logistic_nsel_norm",
        description: scenario_list()[3].1,
        n,
        k: 4,
        space: DesignSpace::from_scalar(n, 4, -1.0, 1.0)?,
        utility,
        settings: AceSettings {
            seed,
            ..Default::default()
        },
        criterion: "NSEL-Norm".into(),
        efficiency: crate::assess::EfficiencyKind::None,
        diagnostics: Some(diags),
    })
}

/// Reaction-order mean response: `exp(-eta)` for order index 0 and
/// `(1 + m eta)^(-1/m)` for orders 1..3, with
/// `eta = theta1 x1 exp(-theta2 / x2)`.
pub fn chemical_model(order: usize) -> NonlinearModel {
    let m = order as f64;
    let mean: Arc<dyn Fn(&DVector<f64>, &[f64]) -> f64 + Send + Sync> =
        Arc::new(move |th: &DVector<f64>, run: &[f64]| {
            let eta = th[0] * run[0] * (-th[1] / run[1]).exp();
            if order == 0 {
                (-eta).exp()
            } else {
                (1.0 + m * eta).powf(-1.0 / m)
            }
        });
    NonlinearModel::new(2, 0.01, mean, None)
}

fn chemical(seed: u64) -> Result<Scenario> {
    let n = 20;
    let models: Vec<Arc<dyn StatModel>> = (0..4)
        .map(|m| Arc::new(chemical_model(m)) as Arc<dyn StatModel>)
        .collect();
    let prior_mean = DVector::from_vec(vec![400.0, 5000.0]);
    let prior_cov = DMatrix::from_diagonal(&DVector::from_vec(vec![625.0, 62_500.0]));
    let sampler = PriorSampler::normal(prior_mean, prior_cov)?;
    let utility =
        crate::utility::zero_one_utility(models, ZeroOnePriors::Common(sampler), 100)?;
    Ok(Scenario {
        name: "chemical",
        description: scenario_list()[4].1,
        n,
        k: 2,
        space: DesignSpace::from_columns(n, &[0.0, 450.0], &[150.0, 600.0])?,
        utility,
        settings: AceSettings {
            b_comparison: 1_000,
            b_emulator: 100,
            q: 15,
            n2: 0,
            binary: true,
            seed,
            ..Default::default()
        },
        criterion: "0-1".into(),
        efficiency: crate::assess::EfficiencyKind::None,
        diagnostics: None,
    })
}

/// Entrywise squared-exponential correlation between two point sets:
/// `exp(-phi * squared Euclidean distance)`.
pub fn squared_exp_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>, phi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), b.nrows(), |r, c| {
        let mut d2 = 0.0;
        for j in 0..a.ncols() {
            let diff = a[(r, j)] - b[(c, j)];
            d2 += diff * diff;
        }
        (-phi * d2).exp()
    })
}

/// Posterior predictive mean `S' (C + tau2 I)^-1 y` by linear solve.
pub fn posterior_predictive_mean(
    s: &DMatrix<f64>,
    c: &DMatrix<f64>,
    tau2: f64,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = c.nrows();
    let mut ridged = c.clone();
    for i in 0..n {
        ridged[(i, i)] += tau2;
    }
    let chol = Cholesky::new(ridged).ok_or_else(|| {
        Error::NumericalFailure("training correlation matrix not positive definite".into())
    })?;
    Ok(s.transpose() * chol.solve(y))
}

/// Fixed parameters of the sensor placement problem.
pub struct SensorScenario {
    pub phi: f64,
    pub tau2: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub delta: f64,
    pub prediction_grid: DMatrix<f64>,
}

impl Default for SensorScenario {
    fn default() -> Self {
        // 10 x 10 prediction grid over the unit square, first coordinate
        // cycling fastest.
        let r = 10;
        let mut grid = DMatrix::zeros(r * r, 2);
        for b in 0..r {
            for a in 0..r {
                grid[(b * r + a, 0)] = a as f64 / (r - 1) as f64;
                grid[(b * r + a, 1)] = b as f64 / (r - 1) as f64;
            }
        }
        Self {
            phi: 1.0,
            tau2: 1e-5,
            gamma_shape: 1.5,
            gamma_rate: 0.5,
            delta: 0.25,
            prediction_grid: grid,
        }
    }
}

/// Total placement cost: squared Euclidean distance of every sensor from
/// the origin.
pub fn sensor_cost(d: &Design) -> f64 {
    (0..d.n_runs())
        .map(|i| (0..d.n_vars()).map(|j| d.coordinate(i, j).powi(2)).sum::<f64>())
        .sum()
}

/// Prediction-accuracy-minus-cost utility: sample the joint response at
/// sensors and grid, predict the grid from the sensors, count predictions
/// within `delta`, subtract the placement cost.
pub fn sensor_utility(sc: Arc<SensorScenario>) -> Utility {
    Utility::Stochastic(Arc::new(move |d: &Design, b, call_seed| {
        let n = d.n_runs();
        let n0 = sc.prediction_grid.nrows();
        let dm = d.matrix();
        let c = squared_exp_correlation(dm, dm, sc.phi);
        let s = squared_exp_correlation(dm, &sc.prediction_grid, sc.phi);
        let c0 = squared_exp_correlation(&sc.prediction_grid, &sc.prediction_grid, sc.phi);

        let nt = n + n0;
        let mut sigma = DMatrix::zeros(nt, nt);
        sigma.view_mut((0, 0), (n, n)).copy_from(&c);
        sigma.view_mut((0, n), (n, n0)).copy_from(&s);
        sigma.view_mut((n, 0), (n0, n)).copy_from(&s.transpose());
        sigma.view_mut((n, n), (n0, n0)).copy_from(&c0);
        for i in 0..nt {
            sigma[(i, i)] += sc.tau2;
        }
        let joint_chol = Cholesky::new(sigma).ok_or_else(|| {
            Error::NumericalFailure("joint response covariance not positive definite".into())
        })?;
        let l = joint_chol.l();

        // Prediction weights S' (C + tau2 I)^-1, computed once per call.
        let mut ridged = c;
        for i in 0..n {
            ridged[(i, i)] += sc.tau2;
        }
        let train_chol = Cholesky::new(ridged).ok_or_else(|| {
            Error::NumericalFailure("sensor correlation matrix not positive definite".into())
        })?;
        let weights = (train_chol.solve(&s)).transpose(); // n0 x n

        let cost = sensor_cost(d);
        let gamma = rand_distr::Gamma::new(sc.gamma_shape, 1.0 / sc.gamma_rate)
            .map_err(|e| Error::NumericalFailure(format!("gamma prior: {e}")))?;
        let streams = DrawStreams::new(call_seed);
        let mut draws = Vec::with_capacity(b);
        let mut z = DVector::zeros(nt);
        for bi in 0..b {
            let mut rng = streams.draw(bi);
            let precision: f64 = gamma.sample(&mut rng);
            let sd = (1.0 / precision).sqrt();
            for v in z.iter_mut() {
                *v = rand_distr::StandardNormal.sample(&mut rng);
            }
            let ytilde = &l * &z * sd;
            let y = ytilde.rows(0, n).into_owned();
            let y0 = ytilde.rows(n, n0);
            let pred = &weights * &y;
            let mut accuracy = 0usize;
            for i in 0..n0 {
                if (pred[i] - y0[i]).abs() < sc.delta {
                    accuracy += 1;
                }
            }
            draws.push(accuracy as f64 - cost);
        }
        Ok(draws)
    }))
}

fn sensor(seed: u64) -> Result<Scenario> {
    let n = 10;
    let sc = Arc::new(SensorScenario::default());
    Ok(Scenario {
        name: "sensor",
        description: scenario_list()[5].1,
        n,
        k: 2,
        space: DesignSpace::from_scalar(n, 2, 0.0, 1.0)?,
        utility: sensor_utility(sc),
        settings: AceSettings {
            seed,
            ..Default::default()
        },
        criterion: "prediction-accuracy-minus-cost".into(),
        efficiency: crate::assess::EfficiencyKind::None,
        diagnostics: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utility::monte_carlo_expected_utility;

    #[test]
    fn registry_has_all_scenarios() {
        for (name, _) in scenario_list() {
            let s = build_scenario(name, 1, None).unwrap();
            assert_eq!(s.name, name);
            assert_eq!(s.space.n_runs(), s.n);
            assert_eq!(s.space.n_vars(), s.k);
        }
        assert!(build_scenario("nope", 1, None).is_err());
    }

    #[test]
    fn poisson_zero_design_has_zero_utility() {
        let s = build_scenario("poisson_fisher", 1, None).unwrap();
        let Utility::Stochastic(f) = &s.utility else {
            panic!()
        };
        let d = Design::from_rows(&vec![vec![0.0]; 12]).unwrap();
        let m = monte_carlo_expected_utility(f, &d, 100, 1).unwrap();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.sd, 0.0);
    }

    #[test]
    fn poisson_optimal_design_mean() {
        let s = build_scenario("poisson_fisher", 1, None).unwrap();
        let Utility::Stochastic(f) = &s.utility else {
            panic!()
        };
        let d = Design::from_rows(&vec![vec![1.0]; 12]).unwrap();
        // Draw sd is about 26, so B = 400k puts the standard error near
        // 0.04 and a 5-sigma bound at 0.2.
        let m = monte_carlo_expected_utility(f, &d, 400_000, 3).unwrap();
        let exact = 12.0 * 0.5f64.exp();
        assert!((m.mean - exact).abs() < 0.2, "{} vs {exact}", m.mean);
    }

    #[test]
    fn squared_exp_correlation_values() {
        let a = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let r = squared_exp_correlation(&a, &a, 1.0);
        assert_eq!(r[(0, 0)], 1.0);
        assert!((r[(0, 1)] - (-1.0f64).exp()).abs() < 1e-12);
        let flat = squared_exp_correlation(&a, &a, 0.0);
        assert!(flat.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn predictive_mean_matches_explicit_inverse() {
        let mut rng = crate::rng::root_rng(8);
        use rand::Rng;
        let pts = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>());
        let grid = DMatrix::from_fn(7, 2, |_, _| rng.random::<f64>());
        let c = squared_exp_correlation(&pts, &pts, 1.0);
        let s = squared_exp_correlation(&pts, &grid, 1.0);
        let y = DVector::from_fn(5, |_, _| rng.random::<f64>() - 0.5);
        let tau2 = 1e-5;
        let got = posterior_predictive_mean(&s, &c, tau2, &y).unwrap();
        let mut ridged = c.clone();
        for i in 0..5 {
            ridged[(i, i)] += tau2;
        }
        let explicit = s.transpose() * ridged.try_inverse().unwrap() * &y;
        assert!((got - explicit).amax() < 1e-10);
    }

    #[test]
    fn predictive_mean_interpolates_training_point() {
        // Predicting at a sensor location with no nugget recovers y there.
        let pts = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.5, 0.5, 0.9, 0.3]);
        let c = squared_exp_correlation(&pts, &pts, 1.0);
        let s = squared_exp_correlation(&pts, &pts, 1.0);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let pred = posterior_predictive_mean(&s, &c, 0.0, &y).unwrap();
        assert!((pred - y).amax() < 1e-8);
        // Zero data predict zero.
        let z = DVector::zeros(3);
        let pred = posterior_predictive_mean(&s, &c, 1e-5, &z).unwrap();
        assert!(pred.amax() < 1e-12);
    }

    #[test]
    fn sensor_cost_and_bounds() {
        let d = Design::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(sensor_cost(&d), 2.0);

        let s = build_scenario("sensor", 1, None).unwrap();
        let Utility::Stochastic(f) = &s.utility else {
            panic!()
        };
        let space = DesignSpace::from_scalar(10, 2, 0.0, 1.0).unwrap();
        let d =
            crate::design::latin_hypercube_start(10, 2, &space, &mut crate::rng::root_rng(2))
                .unwrap();
        let draws = f(&d, 500, 4).unwrap();
        // Accuracy is between 0 and 100; cost on the unit square is at
        // most 2 per sensor.
        let cost = sensor_cost(&d);
        for &v in &draws {
            assert!(v >= -cost && v <= 100.0 - cost, "draw {v}");
        }
    }

    #[test]
    fn chemical_draws_are_binary_and_plausible() {
        let s = build_scenario("chemical", 1, None).unwrap();
        let Utility::Stochastic(f) = &s.utility else {
            panic!()
        };
        let space = DesignSpace::from_columns(20, &[0.0, 450.0], &[150.0, 600.0]).unwrap();
        let d =
            crate::design::latin_hypercube_start(20, 2, &space, &mut crate::rng::root_rng(3))
                .unwrap();
        let draws = f(&d, 400, 9).unwrap();
        assert!(draws.iter().all(|&v| v == 0.0 || v == 1.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        // A space-filling design identifies the order most of the time but
        // not always.
        assert!(mean > 0.5 && mean < 1.0, "mean {mean}");
    }

    #[test]
    fn chemical_degenerate_design_near_chance() {
        // All runs at minimal time and maximal temperature: eta is zero,
        // every order has the same mean response, and discrimination
        // collapses to the 1-in-4 chance level.
        let s = build_scenario("chemical", 1, None).unwrap();
        let Utility::Stochastic(f) = &s.utility else {
            panic!()
        };
        let d = Design::from_rows(&vec![vec![0.0, 600.0]; 20]).unwrap();
        let draws = f(&d, 2_000, 11).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.25).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn compartmental_quadrature_utility_is_finite_and_stable() {
        let s = build_scenario("compartmental", 1, None).unwrap();
        let Utility::Deterministic(f) = &s.utility else {
            panic!()
        };
        let d = Design::from_rows(&(1..=18).map(|i| vec![i as f64 * 24.0 / 18.0]).collect::<Vec<_>>())
            .unwrap();
        let v1 = f(&d).unwrap();
        let v2 = f(&d).unwrap();
        assert_eq!(v1, v2);
        assert!(v1.is_finite());
        // Collapsing all times to one point destroys identifiability.
        let bad = Design::from_rows(&vec![vec![12.0]; 18]).unwrap();
        let vb = f(&bad).unwrap();
        assert!(vb < v1);
    }

    #[test]
    fn logistic_a_utility_finite_on_reasonable_designs() {
        let s = build_scenario("logistic_A", 1, None).unwrap();
        let Utility::Deterministic(f) = &s.utility else {
            panic!()
        };
        let space = DesignSpace::from_scalar(6, 4, -1.0, 1.0).unwrap();
        let d =
            crate::design::latin_hypercube_start(6, 4, &space, &mut crate::rng::root_rng(5))
                .unwrap();
        let v = f(&d).unwrap();
        assert!(v.is_finite());
        assert!(v < 0.0, "negative trace expected, got {v}");
    }
}
