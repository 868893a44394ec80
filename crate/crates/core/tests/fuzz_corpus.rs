//! Runs the checked-in fuzz seeds through the same parsers as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use premarshal::sampling::{order_from_times, ArrivalTimeSample, DistributionSpec};
use premarshal::{BayConfig, Layout, ScenarioSet};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read(&p).unwrap()))
        .collect()
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn layout_seeds_parse() {
    for (name, bytes) in seeds("parse_layout") {
        let layout = Layout::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = serde_json::to_string(&layout).unwrap();
        assert_eq!(Layout::from_json(&again).unwrap(), layout);
    }
}

#[test]
fn scenario_seeds_parse() {
    for (name, bytes) in seeds("parse_scenarios") {
        ScenarioSet::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn distribution_seeds_parse() {
    for (name, bytes) in seeds("parse_distribution") {
        DistributionSpec::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn bay_config_seeds_parse() {
    for (name, bytes) in seeds("parse_bay_config") {
        BayConfig::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn time_seeds_rank() {
    for (name, bytes) in seeds("orders_from_times") {
        let times: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let order = order_from_times(&ArrivalTimeSample::new(times.clone())).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(order.len(), times.len());
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    assert!(Layout::from_json(r#"{"S":1,"H":1,"R":1,"stacks":[[1,1]]}"#).is_err());
    assert!(Layout::from_json(r#"{"S":1,"H":2,"R":1,"stacks":[[2]]}"#).is_err());
    assert!(ScenarioSet::from_json(r#"{"R":2,"scenarios":[{"order":[1,2],"p":0.6}]}"#).is_err());
    assert!(ScenarioSet::from_json(r#"{"R":2,"scenarios":[{"order":[1,1],"p":1.0}]}"#).is_err());
    assert!(DistributionSpec::from_json(r#"{"mu":[0,0],"sigma":[[1,2],[2,1]]}"#).is_err());
    assert!(BayConfig::from_json(r#"{"S":1,"H":1,"R":1,"class_counts":[2]}"#).is_err());
    assert!(BayConfig::from_json("not json").is_err());
    assert!(order_from_times(&ArrivalTimeSample::new(vec![0.0, f64::NAN])).is_err());
}
