use bayesdes::design::latin_hypercube_start;
use bayesdes::engine::ace;
use bayesdes::scenarios::build_scenario;
use bayesdes::utility::Utility;

fn main() {
    for seed in 1u64..=4 {
        let sc = build_scenario("compartmental", seed, Some(0.25)).unwrap();
        let Utility::Deterministic(f) = &sc.utility else { panic!() };
        let start =
            latin_hypercube_start(18, 1, &sc.space, &mut bayesdes::rng::root_rng(seed)).unwrap();
        let res = ace(&sc.utility, &start, &sc.space, &sc.settings).unwrap();
        let u = f(&res.phase2_design).unwrap();
        let mut times: Vec<f64> = (0..18).map(|i| res.phase2_design.coordinate(i, 0)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min_gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        println!("seed {seed}: U_D = {u:.5} (paper 15.34813-15.36236), min spacing = {min_gap:.4}, n2 design = phase1? {}", res.phase2_design == res.phase1_design);
    }
}
