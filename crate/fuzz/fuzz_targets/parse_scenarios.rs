#![no_main]

use libfuzzer_sys::fuzz_target;
use premarshal::ScenarioSet;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(set) = ScenarioSet::from_json(text) else { return };
    let total: f64 = set.iter().map(|s| s.probability).sum();
    assert!((total - 1.0).abs() <= 1e-12);
    assert!(set.iter().all(|s| s.order.len() == set.num_ships()));
});
