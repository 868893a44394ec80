#![no_main]

use libfuzzer_sys::fuzz_target;
use premarshal::{ArrivalOrder, Layout};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(layout) = Layout::from_json(text) else { return };
    let again = serde_json::to_string(&layout).unwrap();
    assert_eq!(Layout::from_json(&again).unwrap(), layout);
    if layout.num_classes() > 0 {
        let order = ArrivalOrder::scheduled(layout.num_classes());
        let misplaced = premarshal::count_misplaced(&layout, &order).unwrap();
        assert!(misplaced <= layout.class_counts().iter().sum::<usize>());
    }
});
