use partial_loading::dp::solve_bs;
use partial_loading::harness::{generate_scenario, ScenarioParams};
use partial_loading::oracle::{validate_schedule, Constraint, ValidationError};
use partial_loading::{Instance, Schedule, SolveOptions, UserId};

fn solved() -> (partial_loading::instance::Scenario, Schedule) {
    let sc = generate_scenario(&ScenarioParams::default(), 8).unwrap();
    let gains = sc.gains();
    let s = solve_bs(&Instance::new(&sc, &gains, SolveOptions::default()).unwrap()).unwrap();
    assert!(s.batches.len() >= 2);
    (sc, s)
}

fn violations(sc: &partial_loading::instance::Scenario, s: &Schedule) -> Vec<Constraint> {
    let r = validate_schedule(s, sc, &sc.gains()).unwrap();
    assert_eq!(r.feasible, r.violations.is_empty());
    if !r.feasible {
        assert_eq!(r.served_count, 0);
    }
    r.violations.iter().map(|v| v.constraint).collect()
}

#[test]
fn accepts_solver_output_and_recomputes_completion() {
    let (sc, s) = solved();
    let r = validate_schedule(&s, &sc, &sc.gains()).unwrap();
    assert!(r.feasible);
    assert_eq!(r.served_count, s.served_count);
    let total: f64 = s.batches.iter().map(|b| b.latency.total_s).sum();
    let last = *r.completion_s.last().unwrap();
    assert!((last - total).abs() < 1e-9);
    assert!(last <= sc.deadline_s() + 1e-9);
}

#[test]
fn flags_a_missed_deadline() {
    let (mut sc, s) = solved();
    sc.horizon_slots /= 2;
    assert!(violations(&sc, &s).contains(&Constraint::Deadline));
}

#[test]
fn flags_a_user_served_twice() {
    let (sc, mut s) = solved();
    let b = &mut s.batches[0];
    b.users.push(b.users[0]);
    b.shares = vec![1.0 / b.users.len() as f64; b.users.len()];
    assert!(violations(&sc, &s).contains(&Constraint::SingleBatch));
}

#[test]
fn flags_a_mixed_batch() {
    let (sc, mut s) = solved();
    let first = s.batches[0].model;
    let other = s.batches.iter().find(|b| b.model != first).unwrap().users[0];
    s.batches[0].users[0] = other;
    assert!(violations(&sc, &s).contains(&Constraint::Homogeneity));
}

#[test]
fn flags_oversubscribed_bandwidth() {
    let (sc, mut s) = solved();
    for x in &mut s.batches[0].shares {
        *x = 1.0;
    }
    if s.batches[0].users.len() > 1 {
        assert!(violations(&sc, &s).contains(&Constraint::Bandwidth));
    }
    s.batches[0].shares[0] = -0.5;
    assert!(violations(&sc, &s).contains(&Constraint::Bandwidth));
}

#[test]
fn flags_a_batch_over_gpu_memory() {
    let (mut sc, s) = solved();
    sc.hw.gpu_mem_bytes = 1;
    assert!(violations(&sc, &s).contains(&Constraint::Memory));
}

#[test]
fn rejects_malformed_schedules() {
    let (sc, mut s) = solved();
    s.batches[0].users[0] = UserId(9999);
    assert!(matches!(
        validate_schedule(&s, &sc, &sc.gains()),
        Err(ValidationError::UnknownUser { .. })
    ));
    let (sc, mut s) = solved();
    s.batches[0].shares.pop();
    assert!(matches!(
        validate_schedule(&s, &sc, &sc.gains()),
        Err(ValidationError::ShareCount { .. })
    ));
    let (sc, s) = solved();
    assert!(matches!(
        validate_schedule(&s, &sc, &[1.0]),
        Err(ValidationError::GainCount { .. })
    ));
}

#[test]
fn schedule_json_round_trip() {
    let (sc, s) = solved();
    let back = Schedule::from_json(&s.to_json().unwrap()).unwrap();
    assert_eq!(back, s);
    assert!(validate_schedule(&back, &sc, &sc.gains()).unwrap().feasible);
}
