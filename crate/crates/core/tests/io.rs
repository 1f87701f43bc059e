mod common;

use common::*;
use ctmopt::ctm::{self, Model};
use ctmopt::error::Error;
use ctmopt::experiments::grid;
use ctmopt::export::{num, sha256_hex, trajectory_csv, ArtifactWriter, MANIFEST_NAME};
use ctmopt::io::{load_scenario, parse_scenario, scenario_to_json};
use ctmopt::presets;
use proptest::prelude::*;

#[test]
fn bundled_scenarios_round_trip() {
    for s in [presets::pulse_bottleneck().unwrap(), presets::constant_inflow().unwrap()] {
        let back = parse_scenario(&scenario_to_json(&s)).unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn short_series_are_extended() {
    let s = presets::pulse_bottleneck().unwrap();
    assert_eq!(s.horizon, 25);
    let src = s.network.index_of(1).unwrap();
    assert_eq!((0..5).map(|t| s.inflow_at(src, t)).collect::<Vec<_>>(), vec![0.0, 8.0, 16.0, 8.0, 0.0]);
    assert_eq!(s.inflow_at(src, 24), 0.0);
}

#[test]
fn malformed_files_are_config_errors() {
    let good = presets::PULSE_BOTTLENECK_JSON;
    assert!(matches!(parse_scenario("{"), Err(Error::Config(_))));
    let no_units = good.replacen("\"units\"", "\"unit_names\"", 1);
    assert!(matches!(parse_scenario(&no_units), Err(Error::Config(_))));
    let bad_key = good.replacen("\"2,3\"", "\"2-3\"", 1);
    assert!(matches!(parse_scenario(&bad_key), Err(Error::Config(_))));
    assert!(load_scenario(std::path::Path::new("/nonexistent/scenario.json")).is_err());
}

#[test]
fn number_formatting() {
    assert_eq!(num(0.0), "0");
    assert_eq!(num(-0.0), "0");
    assert_eq!(num(-1e-300 * 1e-300), "0");
    assert_eq!(num(2.5), "2.5");
    assert_eq!(num(0.1 + 0.2), "0.3");
    assert_eq!(num(1.0 / 3.0), "0.333333333333");
    assert_eq!(num(f64::INFINITY), "inf");
    assert_eq!(num(f64::NAN), "nan");
}

#[test]
fn grid_is_index_based() {
    let g = grid(0.0, 0.1, 3.0).unwrap();
    assert_eq!(g.len(), 31);
    assert_eq!(g[30], 3.0);
    // Snapped to the decimal grid: no 0.30000000000000004.
    assert_eq!(g[3], 0.3);
    assert!(grid(0.0, 0.0, 1.0).is_err());
    assert!(grid(1.0, 0.1, 0.0).is_err());
}

#[test]
fn trajectory_csv_layout() {
    let s = chain(2, 2, vec![1.0]);
    let traj = ctm::simulate(&s, None, Model::Fifo).unwrap();
    let csv = trajectory_csv(&s.network, &traj);
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("step,cell,x [veh]"));
    assert_eq!(lines.len(), 1 + 3 * 2);
    // The last step has volumes only.
    assert_eq!(lines[6], "2,2,1,,,,");
}

#[test]
fn manifest_lists_sorted_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ArtifactWriter::new(dir.path()).unwrap();
    w.write("b.csv", "x\n").unwrap();
    w.write("sub/a.csv", "y\n").unwrap();
    w.write("b.csv", "z\n").unwrap();
    assert_eq!(w.entries().len(), 2);
    let path = w.finish().unwrap();
    assert_eq!(path.file_name().unwrap(), MANIFEST_NAME);
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let files: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["file"].as_str().unwrap()).collect();
    assert_eq!(files, vec!["b.csv", "sub/a.csv"]);
    assert_eq!(v[0]["sha256"], sha256_hex(b"z\n"));
    assert_eq!(std::fs::read_to_string(dir.path().join("sub/a.csv")).unwrap(), "y\n");
}

proptest! {
    #[test]
    fn random_scenarios_round_trip(seed in any::<u64>()) {
        let s = random_scenario(&mut rng(seed), &GenOptions::default());
        let back = parse_scenario(&scenario_to_json(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn formatted_numbers_parse_close(v in -1e12f64..1e12) {
        let back: f64 = num(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 1e-11 * v.abs().max(1e-300));
    }
}
