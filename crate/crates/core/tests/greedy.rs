use partial_loading::dp::solve_bs;
use partial_loading::greedy::{rate_value, solve_general, RateValue};
use partial_loading::harness::{generate_scenario, ScenarioParams};
use partial_loading::library::SynthParams;
use partial_loading::oracle::{
    exhaustive_search, tiny_instance, validate_schedule, SearchLimits, TinySpec,
};
use partial_loading::radio::sample_fading_seeded;
use partial_loading::{Instance, SolveOptions};

#[test]
fn never_beats_dp_on_backbone_sharing() {
    let params = ScenarioParams {
        n_users: 40,
        deadline_ms: 400.0,
        ..ScenarioParams::default()
    };
    for seed in 0..40 {
        let mut sc = generate_scenario(&params, seed).unwrap();
        sc.fading_gains = Some(sample_fading_seeded(seed, sc.users.len()).gains);
        let gains = sc.gains();
        let inst = Instance::new(&sc, &gains, SolveOptions::default()).unwrap();
        let g = solve_general(&inst);
        let report = validate_schedule(&g, &sc, &gains).unwrap();
        assert!(report.feasible, "{}", report.summary());
        assert!(g.served_count <= solve_bs(&inst).unwrap().served_count, "seed {seed}");
    }
}

#[test]
fn feasible_on_general_libraries() {
    let params = ScenarioParams {
        library: SynthParams::general(0.85),
        ..ScenarioParams::default()
    };
    for seed in 0..20 {
        let sc = generate_scenario(&params, seed).unwrap();
        let gains = sc.gains();
        let inst = Instance::new(&sc, &gains, SolveOptions::default()).unwrap();
        let g = solve_general(&inst);
        let report = validate_schedule(&g, &sc, &gains).unwrap();
        assert!(report.feasible, "seed {seed}: {}", report.summary());
        assert!(g.served_count > 0);
        // each model is chosen at most once
        let runs = g.model_runs();
        let mut d = runs.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), runs.len());
    }
}

#[test]
fn close_to_exhaustive_on_tiny_general_instances() {
    let spec = TinySpec {
        general: true,
        ..TinySpec::default()
    };
    let mut gaps = Vec::new();
    for seed in 0..60 {
        let sc = tiny_instance(seed, &spec);
        let gains = sc.gains();
        let inst = Instance::new(&sc, &gains, SolveOptions::default()).unwrap();
        let g = solve_general(&inst).served_count;
        let opt = exhaustive_search(&inst, SearchLimits::default(), false).unwrap().optimum;
        assert!(g <= opt);
        if opt > 0 {
            gaps.push((opt - g) as f64 / opt as f64);
        }
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean <= 0.10, "mean gap {mean}");
}

#[test]
fn zero_users_gives_an_empty_schedule() {
    let params = ScenarioParams {
        n_users: 0,
        ..ScenarioParams::default()
    };
    let sc = generate_scenario(&params, 1).unwrap();
    let gains = sc.gains();
    let inst = Instance::new(&sc, &gains, SolveOptions::default()).unwrap();
    let g = solve_general(&inst);
    assert_eq!(g.served_count, 0);
    assert!(g.batches.is_empty());
}

#[test]
fn rate_value_is_zero_without_slots_and_integral_otherwise() {
    let sc = tiny_instance(7, &TinySpec::default());
    let gains = sc.gains();
    let inst = Instance::new(&sc, &gains, SolveOptions::default()).unwrap();
    for i in 0..inst.n_models() {
        assert_eq!(rate_value(&inst, None, i, 0), RateValue::ZERO);
        for t in 1..=inst.slots() {
            let v = rate_value(&inst, None, i, t);
            assert!(v.slots <= t);
            // users actually fit in the chosen slot count
            if v.users > 0 {
                assert!(inst.phi(None, i, v.users) <= inst.slot_budget_s(v.slots));
            }
        }
    }
}
