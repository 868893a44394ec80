#![no_main]

use libfuzzer_sys::fuzz_target;
use premarshal::sampling::{order_from_times, ArrivalTimeSample};

fuzz_target!(|data: &[u8]| {
    let times: Vec<f64> = data
        .chunks_exact(8)
        .take(64)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if times.is_empty() {
        return;
    }
    let finite = times.iter().all(|t| t.is_finite());
    match order_from_times(&ArrivalTimeSample::new(times.clone())) {
        Ok(order) => {
            assert!(finite);
            let ranked: Vec<f64> = order.order().iter().map(|&s| times[s as usize - 1]).collect();
            assert!(ranked.windows(2).all(|w| w[0] <= w[1]));
        }
        Err(_) => assert!(!finite),
    }
});
