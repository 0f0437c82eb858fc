mod common;

use carbon_control::keyvars::{circularity_general, key_series, phi1, phi_nz, CircularityInputs};
use carbon_control::pipeline::run_scenario;
use carbon_control::scenario::Scenario;
use carbon_control::simulate::Trajectory;
use common::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn circularity_is_minus_the_sum_of_flows(
        states in proptest::collection::vec((0.0..2000.0f64, 0.0..500.0f64, 0.0..1000.0f64, 0.0..3000.0f64, -2000.0..2000.0f64), 1..50)
    ) {
        let fleet = co2_fleet();
        let rates = carbon_control::network::RateConstants::tropospheric_co2(&fleet);
        let mut traj = Trajectory::default();
        for (i, (x1, x2, x3, x4, u)) in states.iter().enumerate() {
            traj.t.push(i as f64);
            traj.x.push([*x1, *x2, *x3, *x4]);
            traj.u.push(*u);
        }
        let ks = key_series(&traj, &rates, &fleet);
        for i in 0..traj.len() {
            let sum = ks.lambda[i] + ks.phi1[i] + ks.phi_nz[i];
            let scale = ks.phi1[i].abs() + ks.phi_nz[i].abs();
            prop_assert!(sum.abs() <= 1e-12 * scale.max(1e-300));
        }
    }

    #[test]
    fn general_form_with_flow_only_is_network_form(x2 in 0.0..500.0f64, x3 in 0.0..1000.0f64, u in -2000.0..2000.0f64) {
        let fleet = co2_fleet();
        let rates = carbon_control::network::RateConstants::tropospheric_co2(&fleet);
        let flow = phi1(x2, x3, &rates) + phi_nz(x2, x3, u, &rates, &fleet);
        let inp = CircularityInputs { m_fb: 0.0, mdot_fc: flow, delta: 1.0, mu_fb: 1.0, c_fb: 1.0, c_fc: 1.0 };
        prop_assert_eq!(circularity_general(&inp), -flow);
    }
}

#[test]
fn initial_flows_of_the_co2_case() {
    let fleet = co2_fleet();
    let rates = carbon_control::network::RateConstants::tropospheric_co2(&fleet);
    assert!((phi1(210.0, 500.0, &rates) - 363.0).abs() < 1e-12);
    // gross emissions 210 + 500 t/d
    assert!((phi_nz(210.0, 500.0, 0.0, &rates, &fleet) - 710.0).abs() < 1e-9);
}

#[test]
fn sign_of_initial_circularity_follows_the_gain() {
    let full = run_scenario(&Scenario::bundled("co2_fullstate").unwrap()).unwrap();
    let output = run_scenario(&Scenario::bundled("co2_output").unwrap()).unwrap();
    assert!(full.keys.lambda[0] > 0.0);
    assert!(output.keys.lambda[0] < 0.0);
    let u0 = full.trajectory.u[0];
    assert!((full.keys.phi_nz[0] - (710.0 - u0)).abs() < 1e-9);
}

#[test]
fn key_variables_vanish_as_the_loop_settles() {
    for name in ["co2_fullstate", "co2_output"] {
        let run = run_scenario(&Scenario::bundled(name).unwrap()).unwrap();
        let peak = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for series in [&run.keys.lambda, &run.keys.phi1, &run.keys.phi_nz] {
            assert!(series.last().unwrap().abs() <= 1e-6 * peak(series), "{name}");
        }
        assert!((run.keys.gamma.unwrap() - 1911.6).abs() < 1e-6 * 1911.6);
    }
}
