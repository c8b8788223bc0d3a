//! Design comparison: re-estimates the expected utility of two designs and
//! reports pseudo-Bayesian relative efficiencies where they apply.

use serde::Serialize;

use crate::design::Design;
use crate::error::Result;
use crate::rng::root_rng;
use crate::utility::{monte_carlo_expected_utility, Utility};
use rand::RngCore;

/// Which relative-efficiency figure accompanies the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfficiencyKind {
    /// Log-determinant criterion; needs the parameter dimension.
    D { p: usize },
    /// Negative-trace criterion.
    A,
    /// Utilities without a defined efficiency figure.
    None,
}

/// Comparison report. `relative_efficiency` is present exactly when the
/// criterion is pseudo-Bayesian D or A.
#[derive(Debug, Clone, Serialize)]
pub struct AssessmentReport {
    pub criterion: String,
    pub design1_mean: f64,
    pub design1_sd: f64,
    pub design2_mean: f64,
    pub design2_sd: f64,
    pub relative_efficiency: Option<f64>,
    #[serde(skip)]
    pub design1_estimates: Vec<f64>,
    #[serde(skip)]
    pub design2_estimates: Vec<f64>,
    #[serde(skip)]
    pub deterministic: bool,
}

/// Relative D-efficiency of `d1` against `d2` in percent:
/// `100 exp((U1 - U2) / p)`.
pub fn relative_d_efficiency(u1: f64, u2: f64, p: usize) -> f64 {
    100.0 * ((u1 - u2) / p as f64).exp()
}

/// Relative A-efficiency in percent for negative-trace utilities:
/// `100 U2 / U1`, so a better first design scores above 100.
pub fn relative_a_efficiency(u1: f64, u2: f64) -> f64 {
    100.0 * u2 / u1
}

/// Estimates the expected utility of both designs. Stochastic utilities
/// get `n_assess` independent `b`-draw means each; deterministic utilities
/// are evaluated once.
pub fn assess(
    u: &Utility,
    d1: &Design,
    d2: &Design,
    b: usize,
    n_assess: usize,
    seed: u64,
    criterion: &str,
    efficiency: EfficiencyKind,
) -> Result<AssessmentReport> {
    let mut rng = root_rng(seed);
    let (e1, e2, deterministic) = match u {
        Utility::Deterministic(f) => (vec![f(d1)?], vec![f(d2)?], true),
        Utility::Stochastic(f) => {
            let mut run = |d: &Design| -> Result<Vec<f64>> {
                (0..n_assess.max(1))
                    .map(|_| Ok(monte_carlo_expected_utility(f, d, b, rng.next_u64())?.mean))
                    .collect()
            };
            let e1 = run(d1)?;
            let e2 = run(d2)?;
            (e1, e2, false)
        }
    };
    let summarize = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        (m, sd)
    };
    let (m1, s1) = summarize(&e1);
    let (m2, s2) = summarize(&e2);
    let relative_efficiency = match efficiency {
        EfficiencyKind::D { p } => Some(relative_d_efficiency(m1, m2, p)),
        EfficiencyKind::A => Some(relative_a_efficiency(m1, m2)),
        EfficiencyKind::None => None,
    };
    Ok(AssessmentReport {
        criterion: criterion.to_string(),
        design1_mean: m1,
        design1_sd: s1,
        design2_mean: m2,
        design2_sd: s2,
        relative_efficiency,
        design1_estimates: e1,
        design2_estimates: e2,
        deterministic,
    })
}

impl AssessmentReport {
    /// Raw estimates as CSV with columns `design,estimate` for external
    /// plotting; stochastic comparisons emit `2 * n_assess` rows.
    pub fn estimates_to_csv(&self) -> String {
        let mut out = String::from("design,estimate\n");
        for v in &self.design1_estimates {
            out.push_str(&format!("1,{}\n", crate::design::format_sig17(*v)));
        }
        for v in &self.design2_estimates {
            out.push_str(&format!("2,{}\n", crate::design::format_sig17(*v)));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn efficiency_formulas() {
        assert!((relative_d_efficiency(1.0, 1.0, 3) - 100.0).abs() < 1e-12);
        // A difference of exactly p gives 100 e.
        let v = relative_d_efficiency(5.0, 2.0, 3);
        assert!((v - 100.0 * std::f64::consts::E).abs() < 1e-9);
        let v = relative_d_efficiency(15.79695, 15.70753, 3);
        assert!((v - 103.026).abs() < 0.001, "{v}");

        // The printed pair from the logistic comparison.
        let a = relative_a_efficiency(-225.6464, -267.3872);
        assert!((a - 118.4983).abs() < 0.001, "{a}");
        assert!((relative_a_efficiency(-7.0, -7.0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn efficiency_reciprocity() {
        let (u1, u2, p) = (12.3, 11.1, 4);
        let ab = relative_d_efficiency(u1, u2, p);
        let ba = relative_d_efficiency(u2, u1, p);
        assert!((ab * ba - 10_000.0).abs() < 1e-9 * 10_000.0);
    }

    #[test]
    fn deterministic_identical_designs() {
        let u = Utility::Deterministic(Arc::new(|d: &Design| Ok(d.coordinate(0, 0) * 2.0)));
        let d = Design::from_rows(&[vec![3.0]]).unwrap();
        let r = assess(&u, &d, &d, 0, 0, 1, "D", EfficiencyKind::D { p: 2 }).unwrap();
        assert_eq!(r.design1_mean, r.design2_mean);
        assert_eq!(r.relative_efficiency, Some(100.0));
        assert!(r.deterministic);
        assert_eq!(r.design1_sd, 0.0);
    }

    #[test]
    fn stochastic_report_counts_and_csv() {
        let u = Utility::Stochastic(Arc::new(|_: &Design, b, seed| {
            Ok((0..b).map(|i| ((i as u64 + seed) % 7) as f64).collect())
        }));
        let d = Design::from_rows(&[vec![0.0]]).unwrap();
        let r = assess(&u, &d, &d, 100, 5, 2, "SIG-MC", EfficiencyKind::None).unwrap();
        assert_eq!(r.design1_estimates.len(), 5);
        assert_eq!(r.design2_estimates.len(), 5);
        assert!(r.relative_efficiency.is_none());
        let csv = r.estimates_to_csv();
        assert_eq!(csv.lines().count(), 11);
        let json = r.to_json();
        assert!(json.contains("\"design1_mean\""));
        assert!(json.contains("\"relative_efficiency\": null"));
    }
}
