use bayesdes::design::{latin_hypercube_start, Design, DesignSpace};
use bayesdes::engine::{ace, AceSettings};
use bayesdes::models::{d_criterion, StatModel};
use bayesdes::scenarios::{build_scenario, compartmental_model};
use bayesdes::utility::Utility;
use nalgebra::DVector;

// Tensor Gauss-Legendre reference for the uniform-prior expectation of
// log|I| over the (theta1, theta2) box.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            let dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 { break; }
        }
        nodes[i] = x;
        let (mut p0, mut p1) = (1.0, 0.0);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
        }
        let dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn reference_ud(d: &Design) -> f64 {
    let model = compartmental_model();
    let (zn, zw) = gauss_legendre(40);
    let (a1, b1) = (0.01884, 0.09884);
    let (a2, b2) = (0.298, 8.298);
    let mut acc = 0.0;
    for (i, &z1) in zn.iter().enumerate() {
        let t1 = a1 + (b1 - a1) * (z1 + 1.0) / 2.0;
        for (j, &z2) in zn.iter().enumerate() {
            let t2 = a2 + (b2 - a2) * (z2 + 1.0) / 2.0;
            let theta = DVector::from_vec(vec![t1, t2, 21.8]);
            acc += zw[i] / 2.0 * zw[j] / 2.0 * d_criterion(&model.fisher_information(&theta, d));
        }
    }
    acc
}

fn main() {
    let t0 = std::time::Instant::now();
    let sc = build_scenario("compartmental", 1, None).unwrap();
    let Utility::Deterministic(f) = &sc.utility else { panic!() };

    // Rule accuracy on a few designs.
    let space = DesignSpace::from_scalar(18, 1, 0.0, 24.0).unwrap();
    for seed in [1u64, 2, 3] {
        let d = latin_hypercube_start(18, 1, &space, &mut bayesdes::rng::root_rng(seed)).unwrap();
        let rule_val = f(&d).unwrap();
        let ref_val = reference_ud(&d);
        println!("seed {seed}: rule U_D = {rule_val:.5}, tensor-GL reference = {ref_val:.5}, |err| = {:.2e}", (rule_val - ref_val).abs());
    }

    // Full run.
    let start = latin_hypercube_start(18, 1, &sc.space, &mut bayesdes::rng::root_rng(1)).unwrap();
    let res = ace(&sc.utility, &start, &sc.space, &sc.settings).unwrap();
    let u1 = f(&res.phase1_design).unwrap();
    let u2 = f(&res.phase2_design).unwrap();
    println!("phase1 U_D = {u1:.5} (paper 15.70753), unique = {}", res.phase1_design.unique_run_count(res.phase1_design.default_unique_tol()));
    println!("phase2 U_D = {u2:.5} (paper 15.79695), unique = {}", res.phase2_design.unique_run_count(res.phase2_design.default_unique_tol()));
    println!("reference check phase2: {:.5}", reference_ud(&res.phase2_design));
    println!("D-eff phase2 vs phase1: {:.4}", bayesdes::assess::relative_d_efficiency(u2, u1, 3));
    println!("elapsed: {:.1?}", t0.elapsed());
}
