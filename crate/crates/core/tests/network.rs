mod common;

use common::*;
use ctmopt::network::{classify_junctions, validate, JunctionKind, RoutingSchedule, SourceActuation, Supply};
use ctmopt::presets;
use proptest::prelude::*;

#[test]
fn bundled_scenario_validates() {
    let s = presets::pulse_bottleneck().unwrap();
    let rep = validate(&s);
    assert!(rep.is_ok(), "{:?}", rep.violations);
    assert_eq!(rep.cfl_ratio, 1.0);
}

#[test]
fn routing_row_below_one_is_reported() {
    let s = presets::pulse_bottleneck().unwrap();
    let mut bad = s.clone();
    let net = &bad.network;
    let key = (net.index_of(2).unwrap(), net.index_of(5).unwrap());
    bad.routing.as_mut().unwrap().ratios.insert(key, vec![1.0 / 3.0 - 0.1]);
    let rep = validate(&bad);
    assert!(!rep.is_ok());
    let v = rep.violations.iter().find(|v| v.code == "routing-row-sum").expect("row-sum violation");
    assert_eq!(v.cell, Some(2));
    assert_eq!(v.step, Some(0));
}

#[test]
fn validate_reports_every_problem() {
    let mut s = chain(3, 4, vec![1.0; 4]);
    s.x0[1] = 11.0;
    s.inflow[2] = vec![0.5];
    s.tau = 20.0;
    let rep = validate(&s);
    let codes: Vec<&str> = rep.violations.iter().map(|v| v.code).collect();
    assert!(codes.contains(&"x0-jam"), "{codes:?}");
    assert!(codes.contains(&"inflow-non-source"), "{codes:?}");
    assert!(codes.contains(&"cfl"), "{codes:?}");
    // Same input, same report.
    assert_eq!(validate(&s).violations, rep.violations);
}

#[test]
fn diverge_without_routing_is_reported() {
    let s = scenario(
        (1..=4).map(unit).collect(),
        &[(1, 2), (2, 3), (2, 4)],
        &[1],
        &[3, 4],
        2,
        vec![vec![1.0]],
        None,
    );
    assert!(validate(&s).violations.iter().any(|v| v.code == "routing-missing"));
}

#[test]
fn demand_examples() {
    let c = unit(2);
    assert_eq!(c.diagram.demand(4.0, 1.0, 0).unwrap(), 4.0);
    assert_eq!(c.diagram.demand(0.0, 0.3, 0).unwrap(), 0.0);
    let mut src = unit(1);
    src.diagram.is_source = true;
    assert_eq!(src.diagram.demand(10.0, 0.5, 0).unwrap(), 3.0);
    assert_eq!(src.diagram.demand_with(10.0, 0.5, 0, SourceActuation::SpeedScaling).unwrap(), 5.0);
    assert!(c.diagram.demand(-1.0, 1.0, 0).is_err());
    assert!(c.diagram.demand(1.0, 1.5, 0).is_err());
}

#[test]
fn supply_examples() {
    let c = unit(2);
    assert_eq!(c.diagram.supply(0.0, 0).unwrap(), Supply::Finite(6.0));
    assert_eq!(c.diagram.supply(10.0, 0).unwrap(), Supply::Finite(0.0));
    assert_eq!(c.diagram.supply(7.0, 0).unwrap(), Supply::Finite(3.0));
    assert!(c.diagram.supply(10.5, 0).is_err());
    let mut src = unit(1);
    src.diagram.is_source = true;
    assert!(src.diagram.supply(1e6, 0).unwrap().is_unbounded());
}

#[test]
fn capacity_schedule_extends_last_value() {
    let c = cell(1, 1.0, 1.0, 10.0, vec![6.0, 0.0, 3.0]);
    assert_eq!(c.diagram.capacity_at(1), 0.0);
    assert_eq!(c.diagram.capacity_at(2), 3.0);
    assert_eq!(c.diagram.capacity_at(50), 3.0);
}

#[test]
fn junction_kinds() {
    let s = presets::pulse_bottleneck().unwrap();
    let kinds: Vec<JunctionKind> = classify_junctions(&s.network).into_iter().map(|(_, k)| k).collect();
    assert!(!kinds.contains(&JunctionKind::General));
    assert_eq!(kinds.iter().filter(|&&k| k == JunctionKind::Diverge).count(), 2);
    assert_eq!(kinds.iter().filter(|&&k| k == JunctionKind::Merge).count(), 2);

    let general = scenario(
        (1..=4).map(unit).collect(),
        &[(1, 3), (2, 3), (1, 4), (2, 4)],
        &[1, 2],
        &[3, 4],
        1,
        vec![],
        Some(vec![((1, 3), 0.5), ((1, 4), 0.5), ((2, 3), 0.5), ((2, 4), 0.5)]),
    );
    let kinds: Vec<JunctionKind> = classify_junctions(&general.network).into_iter().map(|(_, k)| k).collect();
    assert!(kinds.contains(&JunctionKind::General));
}

#[test]
fn routing_constant_extension() {
    let s = presets::pulse_bottleneck().unwrap();
    let net = &s.network;
    let r = s.routing.as_ref().unwrap();
    let e = net.edge_index(net.index_of(2).unwrap(), net.index_of(3).unwrap()).unwrap();
    assert!((r.ratio(net, e, 0) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.ratio(net, e, 0), r.ratio(net, e, 1000));
    // Single-exit cells default to 1.
    let trivial = RoutingSchedule::default();
    let e = net.edge_index(net.index_of(1).unwrap(), net.index_of(2).unwrap()).unwrap();
    assert_eq!(trivial.ratio(net, e, 0), 1.0);
}

proptest! {
    #[test]
    fn demand_and_supply_shape(
        slope in 0.1f64..1.0, sslope in 0.1f64..1.0, jam in 5.0f64..30.0, cap in 0.0f64..20.0,
        a in 0.0f64..1.0, b in 0.0f64..1.0, alpha in 0.0f64..1.0,
    ) {
        let c = cell(1, slope, sslope, jam, vec![cap]);
        let (lo, hi) = if a <= b { (a * jam, b * jam) } else { (b * jam, a * jam) };
        let fd = &c.diagram;
        prop_assert!(fd.demand(lo, 1.0, 0).unwrap() >= 0.0);
        prop_assert!(fd.demand(lo, 1.0, 0).unwrap() <= fd.demand(hi, 1.0, 0).unwrap());
        prop_assert!(fd.demand(hi, alpha, 0).unwrap() <= fd.demand(hi, 1.0, 0).unwrap());
        prop_assert!(fd.supply(lo, 0).unwrap().value() >= fd.supply(hi, 0).unwrap().value());
    }
}
