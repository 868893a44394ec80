mod common;

use std::collections::HashSet;

use premarshal::cutting_plane::{run_cutting_plane, write_iteration_log, CutParams, MasterState};
use premarshal::formulation::{evaluate_layout_cvar, solve_direct, CvarProblem, SolvedLayout};
use premarshal::milp::{backend_from_env, SolveParams, SolveStatus};
use premarshal::oracle::brute_force_optimum;
use premarshal::{BayConfig, ScenarioSet};
use proptest::prelude::*;

fn run(problem: &CvarProblem, params: &CutParams) -> (SolvedLayout, MasterState) {
    run_cutting_plane(problem, backend_from_env().unwrap().as_mut(), params).unwrap()
}

fn check_trajectory(state: &MasterState, num_scenarios: usize, n: f64) {
    for w in state.log.windows(2) {
        assert!(w[1].lower_bound >= w[0].lower_bound, "LB decreased: {:?}", state.log);
        assert!(w[1].upper_bound <= w[0].upper_bound, "UB increased: {:?}", state.log);
    }
    for r in &state.log {
        assert!(r.lower_bound <= r.upper_bound + 1e-6);
        assert!(r.lower_bound >= 0.0 && r.upper_bound <= n + 1e-9);
    }
    let distinct: HashSet<&Vec<usize>> = state.subsets.iter().collect();
    assert_eq!(distinct.len(), state.subsets.len(), "a cut repeated");
    assert!(state.num_blocks() <= num_scenarios);
    let new_blocks: usize = state.log.iter().map(|r| r.new_blocks).sum();
    let initial = usize::from(!state.scheduled_pseudo_scenario);
    assert_eq!(new_blocks + initial, state.num_blocks());
}

#[test]
fn single_scenario_terminates_quickly() {
    let config = BayConfig::new(2, 2, vec![1, 1, 1]).unwrap();
    for order in [[1u32, 2, 3], [3, 1, 2]] {
        let scenarios = common::scenario_set(3, &[(&order, 1.0)]);
        let problem = CvarProblem::new(config.clone(), scenarios.clone(), 0.5).unwrap();
        let (solved, state) = run(&problem, &CutParams::default());
        assert_eq!(solved.status, SolveStatus::Optimal);
        assert!(state.log.len() <= 2, "{:?}", state.log);
        let oracle = brute_force_optimum(&config, &scenarios, 0.5).unwrap();
        assert!((solved.objective - oracle.objective).abs() < 1e-6);
    }
}

#[test]
fn worked_example_matches_oracle() {
    let config = BayConfig::new(2, 2, vec![1, 1, 1]).unwrap();
    let scenarios = common::worked_example();
    for alpha in [0.0, 0.75] {
        let problem = CvarProblem::new(config.clone(), scenarios.clone(), alpha).unwrap();
        let (solved, state) = run(&problem, &CutParams::default());
        let oracle = brute_force_optimum(&config, &scenarios, alpha).unwrap();
        assert_eq!(solved.status, SolveStatus::Optimal);
        assert!((solved.objective - oracle.objective).abs() < 1e-6);
        check_trajectory(&state, scenarios.len(), 3.0);
    }
}

#[test]
fn scheduled_order_absent_from_scenarios() {
    let config = BayConfig::new(2, 2, vec![1, 1, 1]).unwrap();
    let scenarios = common::scenario_set(3, &[(&[2, 1, 3], 0.5), (&[3, 2, 1], 0.25), (&[1, 3, 2], 0.25)]);
    assert!(scenarios.scheduled_index().is_none());
    let problem = CvarProblem::new(config.clone(), scenarios.clone(), 0.75).unwrap();
    let (solved, state) = run(&problem, &CutParams::default());
    assert!(state.scheduled_pseudo_scenario);
    assert!(state.subsets[0].is_empty());
    let oracle = brute_force_optimum(&config, &scenarios, 0.75).unwrap();
    assert!((solved.objective - oracle.objective).abs() < 1e-6);
    check_trajectory(&state, scenarios.len(), 3.0);
}

#[test]
fn matches_direct_on_a_small_bay() {
    let config = BayConfig::new(3, 3, vec![2, 2, 2, 1]).unwrap();
    let scenarios = common::sampled(4, 60, 17);
    for alpha in [0.0, 0.75, 0.9] {
        let problem = CvarProblem::new(config.clone(), scenarios.clone(), alpha).unwrap();
        let (cp, state) = run(&problem, &CutParams::default());
        let direct = solve_direct(&problem, backend_from_env().unwrap().as_mut(), &SolveParams::default()).unwrap();
        assert_eq!(cp.status, SolveStatus::Optimal);
        assert!((cp.objective - direct.objective).abs() < 1e-6, "alpha {alpha}");
        assert_eq!(cp.objective, state.upper_bound);
        check_trajectory(&state, scenarios.len(), 7.0);
    }
}

#[test]
fn iteration_cap_returns_incumbent() {
    let config = BayConfig::new(3, 3, vec![2, 2, 2, 1]).unwrap();
    let scenarios = common::sampled(4, 60, 17);
    let problem = CvarProblem::new(config, scenarios.clone(), 0.75).unwrap();
    let params = CutParams {
        max_iterations: Some(1),
        ..CutParams::default()
    };
    let (solved, state) = run(&problem, &params);
    assert_eq!(state.log.len(), 1);
    if solved.status == SolveStatus::FeasibleTimeLimit {
        assert!(state.gap(&params) > params.epsilon);
    }
    let exact = evaluate_layout_cvar(&solved.layout, &scenarios, 0.75).unwrap();
    assert_eq!(solved.objective, exact.cvar);

    let mut csv = Vec::new();
    write_iteration_log(&state.log, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("k,LB,UB,gap,cut_size,new_blocks,master_time_s\n0,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn unused_iteration_cap_is_inert() {
    let config = BayConfig::new(2, 2, vec![1, 1, 1]).unwrap();
    let problem = CvarProblem::new(config, common::worked_example(), 0.75).unwrap();
    let (free, state) = run(&problem, &CutParams::default());
    let capped = CutParams {
        max_iterations: Some(state.log.len()),
        ..CutParams::default()
    };
    let (bounded, _) = run(&problem, &capped);
    assert_eq!(free.objective, bounded.objective);
    assert_eq!(bounded.status, SolveStatus::Optimal);
}

#[test]
fn zero_epsilon_still_terminates() {
    let config = BayConfig::new(2, 2, vec![1, 1, 1]).unwrap();
    let scenarios = common::worked_example();
    let problem = CvarProblem::new(config.clone(), scenarios.clone(), 0.5).unwrap();
    let params = CutParams {
        epsilon: 0.0,
        ..CutParams::default()
    };
    let (solved, _) = run(&problem, &params);
    assert_eq!(solved.status, SolveStatus::Optimal);
    let oracle = brute_force_optimum(&config, &scenarios, 0.5).unwrap();
    assert!((solved.objective - oracle.objective).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matches_oracle_on_tiny_instances(seed in 0u64..1_000_000, alpha_idx in 0usize..4) {
        let alpha = [0.0, 0.5, 0.75, 0.9][alpha_idx];
        let (config, scenarios) = common::tiny_instance(seed, 50);
        let problem = CvarProblem::new(config.clone(), scenarios.clone(), alpha).unwrap();
        let (solved, state) = run(&problem, &CutParams::default());
        let oracle = brute_force_optimum(&config, &scenarios, alpha).unwrap();
        prop_assert_eq!(solved.status, SolveStatus::Optimal);
        prop_assert!((solved.objective - oracle.objective).abs() < 1e-6);
        check_trajectory(&state, scenarios.len(), config.num_containers() as f64);
    }

    #[test]
    fn scenario_order_does_not_matter(seed in 0u64..1_000_000) {
        let (config, scenarios) = common::tiny_instance(seed, 50);
        let mut reversed = scenarios.scenarios().to_vec();
        reversed.reverse();
        let reversed = ScenarioSet::new(scenarios.num_ships(), reversed).unwrap();
        let a = run(&CvarProblem::new(config.clone(), scenarios, 0.75).unwrap(), &CutParams::default()).0;
        let b = run(&CvarProblem::new(config, reversed, 0.75).unwrap(), &CutParams::default()).0;
        prop_assert!((a.objective - b.objective).abs() < 1e-6);
    }
}
