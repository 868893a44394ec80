#![allow(dead_code)]

use premarshal::sampling::{sample_scenarios, DistributionSpec, RngSeed};
use premarshal::{ArrivalOrder, BayConfig, Scenario, ScenarioSet};
use rand::Rng;

pub fn scenario_set(r: usize, entries: &[(&[u32], f64)]) -> ScenarioSet {
    ScenarioSet::new(
        r,
        entries
            .iter()
            .map(|(o, p)| Scenario {
                order: ArrivalOrder::new(o.to_vec()).unwrap(),
                probability: *p,
            })
            .collect(),
    )
    .unwrap()
}

/// The four-sample example: orders (1,2,3) twice, (2,1,3) and (1,3,2).
pub fn worked_example() -> ScenarioSet {
    scenario_set(3, &[(&[1, 2, 3], 0.5), (&[2, 1, 3], 0.25), (&[1, 3, 2], 0.25)])
}

/// A random bay with `S <= 3`, `H <= 2`, `R <= 3`, `N <= 4` and scenarios
/// aggregated from `samples` draws of a random arrival-time distribution.
pub fn tiny_instance(seed: u64, samples: usize) -> (BayConfig, ScenarioSet) {
    let mut rng = RngSeed::new(seed, 0).rng();
    loop {
        let s = rng.gen_range(1..=3);
        let h = rng.gen_range(1..=2);
        let r = rng.gen_range(1..=3);
        let counts: Vec<usize> = (0..r).map(|_| rng.gen_range(0..=2)).collect();
        let n: usize = counts.iter().sum();
        if n == 0 || n > 4 || n > s * h {
            continue;
        }
        let config = BayConfig::new(s, h, counts).unwrap();
        let spec = DistributionSpec::random(r, &mut rng).unwrap();
        let scenarios = sample_scenarios(&spec, samples, &mut RngSeed::new(seed, 1).rng()).unwrap();
        return (config, scenarios);
    }
}

/// Scenarios from `samples` draws on a random distribution over `r` ships.
pub fn sampled(r: usize, samples: usize, seed: u64) -> ScenarioSet {
    let spec = DistributionSpec::random(r, &mut RngSeed::new(seed, 0).rng()).unwrap();
    sample_scenarios(&spec, samples, &mut RngSeed::new(seed, 1).rng()).unwrap()
}

/// Two ships in either order with equal probability.
pub fn worked_example_two_ships() -> ScenarioSet {
    scenario_set(2, &[(&[1, 2], 0.5), (&[2, 1], 0.5)])
}
