#![no_main]

use libfuzzer_sys::fuzz_target;
use premarshal::{BayConfig, Layout};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = BayConfig::from_json(text) else { return };
    assert!(config.num_containers() <= config.capacity());
    if config.capacity() <= 1 << 16 {
        let empty = Layout::empty(&config);
        assert_eq!(empty.num_stacks(), config.num_stacks());
    }
});
