//! The two-phase coordinate-exchange optimizer.
//!
//! Phase I cycles through the design coordinates in row-major order. For
//! each coordinate it evaluates the expected utility at a handful of
//! trial values, fits the one-dimensional emulator, maximizes the
//! emulator's predictive mean over the full candidate grid, and then
//! subjects the proposed exchange to an acceptance step that is computed
//! independently of the emulator: a Bayesian two-sample comparison of
//! fresh utility draws for stochastic utilities, or a direct comparison
//! for deterministic ones. Phase II consolidates clusters of near-equal
//! runs by point exchange, using the current design's own rows as the
//! candidate set: augment with the best repeated run, then delete the
//! worst row, and accept or reject the net exchange the same way.
//!
//! Every repetition is sequential by construction (each exchange depends
//! on the previous accepted design); multistart repetitions run on
//! independent seed substreams, so results never depend on thread count.

use std::time::{Duration, Instant};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::design::{latin_hypercube_1d, Design, DesignSpace, DEFAULT_GRID_SIZE};
use crate::emulator::{fit_1d, EmulatorTrainingSet};
use crate::error::{Error, Result};
use crate::rng::{repetition_rng, root_rng};
use crate::utility::{monte_carlo_expected_utility, Utility};

/// Tuning parameters of one optimization run.
#[derive(Debug, Clone)]
pub struct AceSettings {
    /// Monte Carlo sample size for the acceptance comparisons.
    pub b_comparison: usize,
    /// Monte Carlo sample size for the emulator training evaluations.
    pub b_emulator: usize,
    /// Number of emulator training points per coordinate.
    pub q: usize,
    /// Phase I sweeps.
    pub n1: usize,
    /// Phase II iterations.
    pub n2: usize,
    /// Use the test of proportions (for 0/1 utility draws) instead of the
    /// two-sample t comparison.
    pub binary: bool,
    /// Root seed; every random quantity in the run derives from it.
    pub seed: u64,
    /// Grid resolution for unconstrained candidate grids.
    pub grid_size: usize,
}

impl Default for AceSettings {
    fn default() -> Self {
        Self {
            b_comparison: 20_000,
            b_emulator: 1_000,
            q: 20,
            n1: 20,
            n2: 100,
            binary: false,
            seed: 0,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

/// Outcome of one acceptance comparison.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceDecision {
    /// Posterior probability that the proposed design's expected utility
    /// exceeds the current design's.
    pub p_star: f64,
    pub accepted: bool,
}

/// Posterior probability that the proposed mean exceeds the current mean
/// under independent normal models with noninformative priors: the upper
/// tail at zero of a location-scale t for the mean difference, with
/// Welch-style scale and Welch-Satterthwaite degrees of freedom.
pub fn accept_ttest(
    current: &[f64],
    proposed: &[f64],
    rng: &mut dyn RngCore,
) -> Result<AcceptanceDecision> {
    if current.len() < 2 || proposed.len() < 2 {
        return Err(Error::InvalidArgument(
            "acceptance test needs at least 2 draws per design".into(),
        ));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (n1, m1, v1) = stats(current);
    let (n2, m2, v2) = stats(proposed);
    let p_star = if v1 + v2 == 0.0 {
        // Degenerate draws: fall back to a direct comparison of means.
        if m2 == m1 {
            0.5
        } else if m2 > m1 {
            1.0
        } else {
            0.0
        }
    } else {
        let a1 = v1 / n1;
        let a2 = v2 / n2;
        let se = (a1 + a2).sqrt();
        let df = (a1 + a2).powi(2) / (a1 * a1 / (n1 - 1.0) + a2 * a2 / (n2 - 1.0));
        let t = StudentsT::new(0.0, 1.0, df.max(1.0))
            .map_err(|e| Error::NumericalFailure(format!("t distribution: {e}")))?;
        t.cdf((m2 - m1) / se)
    };
    let u: f64 = rand::Rng::random(&mut &mut *rng);
    Ok(AcceptanceDecision {
        p_star,
        accepted: u < p_star,
    })
}

/// Number of posterior draws used by the test of proportions.
const PROPORTIONS_MC: usize = 100_000;

/// One-sided comparison of two success proportions for 0/1 utility draws:
/// with Beta(1, 1) priors the posteriors are Beta, and the probability
/// that the proposed success rate exceeds the current one is estimated
/// from paired posterior draws.
pub fn accept_proportions(
    current: &[f64],
    proposed: &[f64],
    rng: &mut dyn RngCore,
) -> Result<AcceptanceDecision> {
    for v in current.iter().chain(proposed) {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::InvalidArgument(
                "test of proportions requires 0/1 utility draws".into(),
            ));
        }
    }
    let beta_params = |v: &[f64]| {
        let s: f64 = v.iter().sum();
        (1.0 + s, 1.0 + v.len() as f64 - s)
    };
    let (a1, b1) = beta_params(current);
    let (a2, b2) = beta_params(proposed);
    let beta1 = rand_distr::Beta::new(a1, b1)
        .map_err(|e| Error::NumericalFailure(format!("beta posterior: {e}")))?;
    let beta2 = rand_distr::Beta::new(a2, b2)
        .map_err(|e| Error::NumericalFailure(format!("beta posterior: {e}")))?;
    let mut wins = 0usize;
    for _ in 0..PROPORTIONS_MC {
        let p1: f64 = beta1.sample(&mut &mut *rng);
        let p2: f64 = beta2.sample(&mut &mut *rng);
        if p2 > p1 {
            wins += 1;
        }
    }
    let p_star = wins as f64 / PROPORTIONS_MC as f64;
    let u: f64 = rand::Rng::random(&mut &mut *rng);
    Ok(AcceptanceDecision {
        p_star,
        accepted: u < p_star,
    })
}

/// One point of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub phase: u8,
    pub iteration: usize,
    pub expected_utility: f64,
}

/// Result of one phase.
#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub design: Design,
    pub trace: Vec<TracePoint>,
    pub accepted: usize,
    pub steps: usize,
    /// Coordinates (Phase I) or iterations (Phase II) abandoned after
    /// numerical failures.
    pub skipped: usize,
    pub elapsed: Duration,
}

/// Result of a full run: both phases plus bookkeeping.
#[derive(Debug, Clone)]
pub struct AceResult {
    pub phase1_design: Design,
    pub phase2_design: Design,
    pub phase1_trace: Vec<TracePoint>,
    pub phase2_trace: Vec<TracePoint>,
    pub phase1_elapsed: Duration,
    pub phase2_elapsed: Duration,
    pub phase1_accepted: usize,
    pub phase1_steps: usize,
    pub phase2_accepted: usize,
    pub phase2_steps: usize,
    pub skipped: usize,
}

impl AceResult {
    /// Trace CSV: columns `phase,iteration,expected_utility`, one row per
    /// recorded point, utilities with 17 significant digits.
    pub fn trace_to_csv(&self) -> String {
        let mut out = String::from("phase,iteration,expected_utility\n");
        for t in self.phase1_trace.iter().chain(&self.phase2_trace) {
            out.push_str(&format!(
                "{},{},{}\n",
                t.phase,
                t.iteration,
                crate::design::format_sig17(t.expected_utility)
            ));
        }
        out
    }
}

/// Expected-utility estimate of one design: the utility itself when
/// deterministic, otherwise a fresh `b`-draw Monte Carlo mean.
fn estimate(u: &Utility, d: &Design, b: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    match u {
        Utility::Deterministic(f) => f(d),
        Utility::Stochastic(f) => Ok(monte_carlo_expected_utility(f, d, b, rng.next_u64())?.mean),
    }
}

/// Acceptance step shared by both phases. Re-evaluates both designs with
/// fresh, independent samples; estimates are never reused across steps.
/// An evaluation error makes the failing side lose the comparison.
fn acceptance_step(
    u: &Utility,
    current: &Design,
    proposed: &Design,
    s: &AceSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(bool, f64)> {
    match u {
        Utility::Deterministic(f) => {
            let u_curr = f(current);
            let u_prop = f(proposed);
            match (u_curr, u_prop) {
                (Ok(c), Ok(p)) => Ok((p > c, if p > c { p } else { c })),
                (Err(_), Ok(p)) => Ok((true, p)),
                (Ok(c), Err(_)) => Ok((false, c)),
                (Err(e), Err(_)) => Err(e),
            }
        }
        Utility::Stochastic(f) => {
            let curr = monte_carlo_expected_utility(f, current, s.b_comparison, rng.next_u64());
            let prop = monte_carlo_expected_utility(f, proposed, s.b_comparison, rng.next_u64());
            match (curr, prop) {
                (Ok(c), Ok(p)) => {
                    let decision = if s.binary {
                        accept_proportions(&c.draws, &p.draws, rng)?
                    } else {
                        accept_ttest(&c.draws, &p.draws, rng)?
                    };
                    Ok((
                        decision.accepted,
                        if decision.accepted { p.mean } else { c.mean },
                    ))
                }
                (Err(_), Ok(p)) => Ok((true, p.mean)),
                (Ok(c), Err(_)) => Ok((false, c.mean)),
                (Err(e), Err(_)) => Err(e),
            }
        }
    }
}

/// Phase I: emulator-guided cyclic coordinate exchange.
pub fn phase1(
    u: &Utility,
    start: &Design,
    space: &DesignSpace,
    s: &AceSettings,
    rng: &mut ChaCha8Rng,
) -> Result<PhaseOutcome> {
    if !space.contains(start) {
        return Err(Error::InvalidArgument(
            "start design violates the design space bounds".into(),
        ));
    }
    let t0 = Instant::now();
    let mut d = start.clone();
    let mut trace = Vec::with_capacity(s.n1);
    let (mut accepted, mut steps, mut skipped) = (0usize, 0usize, 0usize);
    let mut current_estimate = if s.n1 > 0 {
        estimate(u, &d, s.b_comparison, rng).unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };
    let stochastic_fit = !u.is_deterministic();

    for sweep in 0..s.n1 {
        for i in 0..d.n_runs() {
            for j in 0..d.n_vars() {
                let grid = space.candidate_grid(&d, i, j, s.grid_size)?;

                let proposal = if grid.len() < 3 {
                    // Too few admissible values to emulate: evaluate them
                    // all directly and take the best.
                    let mut best: Option<(f64, f64)> = None;
                    for &x in &grid {
                        let trial = d.with_coordinate(i, j, x);
                        if let Ok(v) = estimate(u, &trial, s.b_emulator, rng) {
                            if best.is_none_or(|(_, bv)| v > bv) {
                                best = Some((x, v));
                            }
                        }
                    }
                    best.map(|(x, _)| x)
                } else {
                    let abscissae = if space.is_constrained() {
                        let q = s.q.min(grid.len());
                        rand::seq::index::sample(rng, grid.len(), q)
                            .into_iter()
                            .map(|idx| grid[idx])
                            .collect::<Vec<f64>>()
                    } else {
                        latin_hypercube_1d(s.q, space.lower(i, j), space.upper(i, j), rng)
                    };
                    let mut xs = Vec::with_capacity(abscissae.len());
                    let mut vs = Vec::with_capacity(abscissae.len());
                    for &x in &abscissae {
                        let trial = d.with_coordinate(i, j, x);
                        if let Ok(v) = estimate(u, &trial, s.b_emulator, rng) {
                            xs.push(x);
                            vs.push(v);
                        }
                    }
                    if xs.len() < 3 {
                        skipped += 1;
                        continue;
                    }
                    match EmulatorTrainingSet::new(xs, vs).and_then(|t| fit_1d(&t, stochastic_fit))
                    {
                        Ok(em) => Some(em.maximize_on_grid(&grid).0),
                        Err(_) => {
                            skipped += 1;
                            continue;
                        }
                    }
                };
                let Some(x_star) = proposal else {
                    skipped += 1;
                    continue;
                };

                let proposed = d.with_coordinate(i, j, x_star);
                steps += 1;
                match acceptance_step(u, &d, &proposed, s, rng) {
                    Ok((take, est)) => {
                        if take {
                            debug_assert!(space.contains(&proposed));
                            d = proposed;
                            accepted += 1;
                        }
                        current_estimate = est;
                    }
                    Err(_) => {
                        skipped += 1;
                    }
                }
            }
        }
        trace.push(TracePoint {
            phase: 1,
            iteration: sweep + 1,
            expected_utility: current_estimate,
        });
    }

    Ok(PhaseOutcome {
        design: d,
        trace,
        accepted,
        steps,
        skipped,
        elapsed: t0.elapsed(),
    })
}

/// Phase II: point-exchange consolidation over the design's own rows.
pub fn phase2(
    u: &Utility,
    d_in: &Design,
    s: &AceSettings,
    rng: &mut ChaCha8Rng,
) -> Result<PhaseOutcome> {
    if s.n2 > 0 && d_in.n_runs() < 2 {
        return Err(Error::InvalidArgument(
            "point exchange needs at least 2 runs".into(),
        ));
    }
    let t0 = Instant::now();
    let mut d = d_in.clone();
    let mut trace = Vec::with_capacity(s.n2);
    let (mut accepted, mut steps, mut skipped) = (0usize, 0usize, 0usize);
    let mut current_estimate = if s.n2 > 0 {
        estimate(u, &d, s.b_comparison, rng).unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };

    for iteration in 0..s.n2 {
        let n = d.n_runs();
        // Augment with a repeat of the best row.
        let mut best_aug: Option<(usize, f64)> = None;
        for i in 0..n {
            let cand = d.with_repeated_run(i);
            if let Ok(v) = estimate(u, &cand, s.b_emulator, rng) {
                if best_aug.is_none_or(|(_, bv)| v > bv) {
                    best_aug = Some((i, v));
                }
            }
        }
        let Some((i_star, _)) = best_aug else {
            skipped += 1;
            trace.push(TracePoint {
                phase: 2,
                iteration: iteration + 1,
                expected_utility: current_estimate,
            });
            continue;
        };
        let augmented = d.with_repeated_run(i_star);

        // Delete the worst row of the augmented design.
        let mut best_del: Option<(usize, f64)> = None;
        for h in 0..augmented.n_runs() {
            let cand = augmented.without_run(h);
            if let Ok(v) = estimate(u, &cand, s.b_emulator, rng) {
                if best_del.is_none_or(|(_, bv)| v > bv) {
                    best_del = Some((h, v));
                }
            }
        }
        let Some((h_star, _)) = best_del else {
            skipped += 1;
            trace.push(TracePoint {
                phase: 2,
                iteration: iteration + 1,
                expected_utility: current_estimate,
            });
            continue;
        };
        let proposed = augmented.without_run(h_star);
        debug_assert_eq!(proposed.n_runs(), n);

        steps += 1;
        match acceptance_step(u, &d, &proposed, s, rng) {
            Ok((take, est)) => {
                if take {
                    d = proposed;
                    accepted += 1;
                }
                current_estimate = est;
            }
            Err(_) => skipped += 1,
        }
        trace.push(TracePoint {
            phase: 2,
            iteration: iteration + 1,
            expected_utility: current_estimate,
        });
    }

    Ok(PhaseOutcome {
        design: d,
        trace,
        accepted,
        steps,
        skipped,
        elapsed: t0.elapsed(),
    })
}

fn ace_with_rng(
    u: &Utility,
    start: &Design,
    space: &DesignSpace,
    s: &AceSettings,
    rng: &mut ChaCha8Rng,
) -> Result<AceResult> {
    let p1 = phase1(u, start, space, s, rng)?;
    let p2 = phase2(u, &p1.design, s, rng)?;
    Ok(AceResult {
        phase1_design: p1.design,
        phase2_design: p2.design,
        phase1_trace: p1.trace,
        phase2_trace: p2.trace,
        phase1_elapsed: p1.elapsed,
        phase2_elapsed: p2.elapsed,
        phase1_accepted: p1.accepted,
        phase1_steps: p1.steps,
        phase2_accepted: p2.accepted,
        phase2_steps: p2.steps,
        skipped: p1.skipped + p2.skipped,
    })
}

/// Runs both phases from a single starting design.
pub fn ace(u: &Utility, start: &Design, space: &DesignSpace, s: &AceSettings) -> Result<AceResult> {
    let mut rng = root_rng(s.seed);
    ace_with_rng(u, start, space, s, &mut rng)
}

/// Result of repeating the optimization from several starting designs.
#[derive(Debug, Clone)]
pub struct PaceResult {
    /// Per-repetition results, in start order; failed repetitions are None.
    pub repetitions: Vec<Option<AceResult>>,
    /// Error messages of failed repetitions, with their indices.
    pub failures: Vec<(usize, String)>,
    /// Per-repetition assessed expected utility: mean and standard
    /// deviation of `n_assess` fresh estimates, or the single value and 0
    /// in deterministic mode.
    pub assessed: Vec<Option<(f64, f64)>>,
    /// Index of the repetition whose assessed mean is largest (ties break
    /// toward the smallest index).
    pub best_index: usize,
    pub best_design: Design,
}

/// Default number of fresh estimates used to assess each final design.
pub const DEFAULT_N_ASSESS: usize = 20;

/// Repeats the optimization from `C` starting designs on independent seed
/// substreams and picks the final design with the best assessed expected
/// utility. `parallelism` bounds the worker threads; it never affects the
/// results.
pub fn pace(
    u: &Utility,
    starts: &[Design],
    space: &DesignSpace,
    s: &AceSettings,
    parallelism: usize,
    n_assess: usize,
) -> Result<PaceResult> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starting designs".into()));
    }
    let run_one = |(r, start): (usize, &Design)| -> (usize, Result<(AceResult, (f64, f64))>) {
        let mut rng = repetition_rng(s.seed, r);
        let outcome = ace_with_rng(u, start, space, s, &mut rng).and_then(|res| {
            let assessed = match u {
                Utility::Deterministic(f) => (f(&res.phase2_design)?, 0.0),
                Utility::Stochastic(f) => {
                    let mut means = Vec::with_capacity(n_assess);
                    for _ in 0..n_assess.max(1) {
                        means.push(
                            monte_carlo_expected_utility(
                                f,
                                &res.phase2_design,
                                s.b_comparison,
                                rng.next_u64(),
                            )?
                            .mean,
                        );
                    }
                    let m = means.iter().sum::<f64>() / means.len() as f64;
                    let sd = if means.len() > 1 {
                        (means.iter().map(|v| (v - m).powi(2)).sum::<f64>()
                            / (means.len() as f64 - 1.0))
                            .sqrt()
                    } else {
                        0.0
                    };
                    (m, sd)
                }
            };
            Ok((res, assessed))
        });
        (r, outcome)
    };

    let outcomes: Vec<(usize, Result<(AceResult, (f64, f64))>)> = if parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            starts.par_iter().enumerate().map(run_one).collect()
        })
    } else {
        starts.iter().enumerate().map(run_one).collect()
    };

    let mut repetitions: Vec<Option<AceResult>> = vec![None; starts.len()];
    let mut assessed: Vec<Option<(f64, f64)>> = vec![None; starts.len()];
    let mut failures = Vec::new();
    for (r, outcome) in outcomes {
        match outcome {
            Ok((res, a)) => {
                repetitions[r] = Some(res);
                assessed[r] = Some(a);
            }
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let best_index = assessed
        .iter()
        .enumerate()
        .filter_map(|(r, a)| a.map(|(m, _)| (r, m)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(r, _)| r);
    let Some(best_index) = best_index else {
        let (r, msg) = failures
            .first()
            .cloned()
            .unwrap_or((0, "unknown failure".into()));
        return Err(Error::NumericalFailure(format!(
            "every repetition failed; first failure (repetition {r}): {msg}"
        )));
    };
    let best_design = repetitions[best_index]
        .as_ref()
        .expect("best repetition present")
        .phase2_design
        .clone();
    Ok(PaceResult {
        repetitions,
        failures,
        assessed,
        best_index,
        best_design,
    })
}
