mod common;

use approx::assert_relative_eq;
use common::*;
use ctmopt::ctm::Model;
use ctmopt::experiments;
use ctmopt::presets;
use ctmopt::robustness::{
    bound_prop3, compute_envelope, find_equilibrium, lipschitz_constant, sensitivity_bound, sensitivity_closed_form,
    sweep, Context, Equilibrium, PerturbationSpec, Provenance,
};
use ctmopt::synthesis::ControlSchedule;
use proptest::prelude::*;

#[test]
fn cumulative_bound_sums_deviations() {
    let s = chain(3, 4, vec![1.0; 4]);
    assert!(bound_prop3(&s, &PerturbationSpec::none(&s)).values.iter().all(|&v| v == 0.0));

    let mut p = PerturbationSpec::inflow_offset(&s, 0, 0.5);
    p.x0[1] = 2.0;
    let b = bound_prop3(&s, &p);
    assert_eq!(b.values, vec![2.0, 2.5, 3.0, 3.5, 4.0]);
    assert!(b.provenance.iter().all(|&q| q == Provenance::Prop3));
}

#[test]
fn negative_offsets_clamp_at_zero() {
    let s = chain(2, 3, vec![1.0, 0.2, 1.0]);
    let p = PerturbationSpec::inflow_offset(&s, 0, -0.5);
    assert_eq!(p.inflow[0], vec![0.5, 0.0, 0.5]);
}

#[test]
fn envelope_examples() {
    let s = chain(2, 2, vec![5.0, 5.5]);
    let mut p = PerturbationSpec::none(&s);
    p.inflow[0] = vec![5.5, 5.0];
    p.x0 = vec![0.0, 1.0];
    let env = compute_envelope(&s, &p);
    assert_eq!(env.lambda_hi[0], 6.0);
    assert_eq!(env.lambda_lo[0], 4.5);
    assert_eq!(env.x0_hi, vec![0.0, 1.0]);
    assert_eq!(env.x0_lo, vec![0.0, 0.0]);

    let mut p = PerturbationSpec::none(&s);
    p.inflow[0] = vec![0.0, 0.0];
    assert_eq!(compute_envelope(&s, &p).lambda_lo[0], 0.0);
}

#[test]
fn lipschitz_constant_of_unit_chain() {
    assert_eq!(lipschitz_constant(&chain(4, 1, vec![]).network), 4.0);
}

#[test]
fn sensitivity_matches_closed_form() {
    let s = chain(3, 6, vec![1.0; 6]);
    let p = PerturbationSpec::inflow_offset(&s, 0, 0.5);
    let b = sensitivity_bound(&s, &p, 4.0);
    for (t, &v) in b.values.iter().enumerate() {
        assert_relative_eq!(v, sensitivity_closed_form(4.0, 0.5, 0.0, t as f64), max_relative = 1e-12);
    }
    assert_relative_eq!(b.values[3], (12.0f64.exp() - 1.0) / 4.0 * 0.5, max_relative = 1e-12);
    // Zero rate reduces to the linear growth.
    assert_eq!(sensitivity_closed_form(0.0, 0.5, 1.0, 4.0), 3.0);
}

#[test]
fn equilibria_of_a_chain() {
    let s = chain(3, 1, vec![]);
    let c = ControlSchedule::uncontrolled(&s).unwrap();
    let net = &s.network;
    let zero = find_equilibrium(net, &[0.0; 3], &c, Model::Fifo, &[0.0; 3], 0).unwrap();
    assert_eq!(zero.volumes().unwrap(), &[0.0; 3]);

    // Unit slopes: volume equals throughput in free flow.
    let eq = find_equilibrium(net, &[5.0, 0.0, 0.0], &c, Model::Fifo, &[0.0; 3], 0).unwrap();
    for &v in eq.volumes().unwrap() {
        assert_relative_eq!(v, 5.0, epsilon = 1e-6);
    }

    // Above capacity the source queue grows without bound.
    let over = find_equilibrium(net, &[7.0, 0.0, 0.0], &c, Model::Fifo, &[0.0; 3], 0).unwrap();
    assert_eq!(over, Equilibrium::Overload);
}

#[test]
fn zero_capacity_bottleneck_has_no_free_flow_inflow() {
    let mut s = chain(3, 8, vec![1.0; 8]);
    s.network.cells[2].diagram.capacity = vec![0.0];
    let c = ControlSchedule::uncontrolled(&s).unwrap();
    let ctx = Context::new(&s, &c, Model::Fifo);
    assert_eq!(ctx.max_freeflow_inflow().unwrap(), 0.0);
}

#[test]
fn combined_bound_never_exceeds_its_parts() {
    let s = chain(3, 10, vec![2.0; 10]);
    let c = ControlSchedule::uncontrolled(&s).unwrap();
    let ctx = Context::new(&s, &c, Model::Fifo);
    let p = PerturbationSpec::inflow_offset(&s, 0, 1.0);
    let combined = ctx.combined_bound(&p, None).unwrap();
    let p3 = bound_prop3(&s, &p);
    let p4 = ctx.bound_prop4(&p).unwrap().expect("equilibria exist below capacity");
    for t in 0..combined.values.len() {
        assert!(combined.values[t] <= p3.values[t]);
        assert!(combined.values[t] <= p4.values[t]);
    }
    let sens = sensitivity_bound(&s, &p, lipschitz_constant(&s.network));
    assert!(p3.values.iter().zip(&sens.values).skip(1).all(|(a, b)| a <= b));
}

#[test]
fn overload_switches_provenance() {
    let s = chain(3, 30, vec![2.0; 30]);
    let c = ControlSchedule::uncontrolled(&s).unwrap();
    let ctx = Context::new(&s, &c, Model::Fifo);
    let hat = ctx.transition_inflow().unwrap();
    // Unit slopes with jam 10: supply 10 − λ meets demand λ at 5, below C = 6.
    assert!((hat - 5.0).abs() <= 1e-3, "{hat}");
    let p = PerturbationSpec::inflow_offset(&s, 0, 6.0);
    let b = ctx.combined_bound(&p, Some(hat)).unwrap();
    assert!(b.provenance.iter().all(|&q| q == Provenance::OverloadHeuristic));
    // Once the base bound has settled on its constant part, the growth rate
    // equals the excess over the transition inflow.
    let rate = b.values[30] - b.values[29];
    assert!((rate - (8.0 - hat)).abs() <= 0.1 * (8.0 - hat), "{rate}");
}

#[test]
fn sweep_bounds_are_sound_on_bundled_scenario() {
    let s = presets::constant_inflow().unwrap();
    let opt = experiments::robustness_controls(&s, 0.0).unwrap();
    let grid = [0.0, 0.5, 1.0, 2.0, 3.0];
    for model in [Model::Fifo, Model::NonFifo] {
        let ctx = Context::new(&s, &opt.controls, model);
        let points = sweep(&ctx, &grid, 2).unwrap();
        assert_eq!(points.iter().map(|p| p.delta).collect::<Vec<_>>(), grid);
        assert_eq!(points[0].cost_perturbation, 0.0);
        for p in &points {
            assert!(p.cost_perturbation <= p.combined_sum, "{model} Δ={}", p.delta);
            for (d, b) in p.deviation.iter().zip(&p.combined.values) {
                assert!(d <= &(b + 1e-9), "{model} Δ={}: {d} > {b}", p.delta);
            }
        }
        // Same result regardless of the thread count.
        assert_eq!(sweep(&ctx, &grid, 1).unwrap(), points);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // The cumulative bound holds for any perturbation of the uncontrolled
    // non-FIFO dynamics with order-preserving slopes.
    #[test]
    fn cumulative_bound_holds_for_nonfifo(seed in any::<u64>(), delta in -2.0f64..2.0) {
        let opts = GenOptions { max_speed: 25.0, ..GenOptions::default() };
        let s = random_scenario(&mut rng(seed), &opts);
        let c = ControlSchedule::uncontrolled(&s).unwrap();
        let ctx = Context::new(&s, &c, Model::NonFifo);
        let src = s.network.sources[0];
        let p = PerturbationSpec::inflow_offset(&s, src, delta);
        let a = ctx.simulate(&PerturbationSpec::none(&s)).unwrap();
        let b = ctx.simulate(&p).unwrap();
        let bound = bound_prop3(&s, &p);
        for (t, (x, y)) in a.x.iter().zip(&b.x).enumerate() {
            prop_assert!(l1(x, y) <= bound.values[t] + 1e-9);
        }
    }
}
