use bayesdes::design::latin_hypercube_start;
use bayesdes::engine::ace;
use bayesdes::scenarios::build_scenario;
use bayesdes::utility::Utility;

fn main() {
    for seed in 1u64..=6 {
        let sc = build_scenario("compartmental", seed, None).unwrap();
        let Utility::Deterministic(f) = &sc.utility else { panic!() };
        let start =
            latin_hypercube_start(18, 1, &sc.space, &mut bayesdes::rng::root_rng(seed)).unwrap();
        let res = ace(&sc.utility, &start, &sc.space, &sc.settings).unwrap();
        let u1 = f(&res.phase1_design).unwrap();
        let u2 = f(&res.phase2_design).unwrap();
        println!(
            "seed {seed}: phase1 {u1:.5} phase2 {u2:.5} unique {} -> {}",
            res.phase1_design.unique_run_count(res.phase1_design.default_unique_tol()),
            res.phase2_design.unique_run_count(res.phase2_design.default_unique_tol()),
        );
    }
}
