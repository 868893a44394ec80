#![no_main]

use libfuzzer_sys::fuzz_target;
use premarshal::sampling::{sample_scenarios, DistributionSpec, RngSeed};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = DistributionSpec::from_json(text) else {
        return;
    };
    if spec.dimension() <= 16 {
        let mut rng = RngSeed::new(0, 0).rng();
        let set = sample_scenarios(&spec, 4, &mut rng).unwrap();
        assert_eq!(set.num_ships(), spec.dimension());
    }
});
