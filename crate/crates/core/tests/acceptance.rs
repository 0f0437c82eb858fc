//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with its measured values and wall time; the test fails if any line fails.

mod common;

use std::time::{Duration, Instant};

use carbon_control::control::{closed_loop, evaluate_cost, ControllerDesign};
use carbon_control::keyvars::GAMMA_TAIL_FRACTION;
use carbon_control::linalg::{are_residual, eigenvalues, solve_are, solve_lyapunov, Matrix};
use carbon_control::network::OutputMode;
use carbon_control::pipeline::{run_scenario, RunOutcome};
use carbon_control::scenario::Scenario;
use carbon_control::simulate::{
    check_nonnegative, settling_time, simulate_closed_loop, TimeGrid, Trajectory, CELSIUS_OFFSET,
};
use common::*;
use rand::Rng;

struct Verdict {
    name: String,
    pass: bool,
}

struct Sheet {
    verdicts: Vec<Verdict>,
}

impl Sheet {
    fn check(&mut self, name: &str, budget: Duration, f: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (ok, detail) = f();
        let elapsed = start.elapsed();
        let pass = ok && elapsed <= budget;
        println!(
            "{} {name}: {detail} [{:.2} s, budget {} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        self.verdicts.push(Verdict { name: name.into(), pass });
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn run(name: &str) -> RunOutcome {
    run_scenario(&Scenario::bundled(name).unwrap()).unwrap()
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// 1% settling of x1 to the set-point, measured against the initial
/// deviation; the time to stay within 1% of the set-point value itself is
/// returned alongside for reference.
fn x1_settling(out: &RunOutcome) -> (f64, f64) {
    let x1e = out.design.setpoint.x_e[0];
    let deviation = (out.trajectory.x[0][0] - x1e).abs();
    let settle = |band: f64| settling_time(&out.trajectory, 0, x1e, band).unwrap_or(f64::INFINITY);
    (settle(0.01), settle(0.01 * x1e / deviation))
}

fn output_gain(d: &ControllerDesign, k: f64, g: &[f64]) -> (bool, String) {
    let gv = d.g.clone().unwrap_or_default();
    let ok = within(&d.k, &[k], 0.005) && within(&gv, g, 0.005) && d.are_residual <= 1e-7;
    (ok, format!("K {} G {} residual {:.1e}", fmt(&d.k), fmt(&gv), d.are_residual))
}

fn max_rel_state_change(a: &Trajectory, b: &Trajectory) -> f64 {
    a.x.iter().zip(&b.x).map(|(p, q)| max_rel_diff(p, q)).fold(0.0, f64::max)
}

#[test]
fn acceptance() {
    let mut sheet = Sheet { verdicts: Vec::new() };

    sheet.check("eigenvalues", secs(1), || {
        let random = eigenvalues(random_rate_model(OutputMode::Full).a()).unwrap().sorted_real();
        let co2 = eigenvalues(co2_model(OutputMode::Full).a()).unwrap().sorted_real();
        let ok = within(&random, &[-128.85, -95.20, -9.04, 0.0], 0.01) && within(&co2, &[-0.7, -0.4, -0.3, 0.0], 1e-6);
        (ok, format!("random rates {} CO2 {}", fmt(&random), fmt(&co2)))
    });

    for (scenario, want) in [
        ("random_rates_fullstate", [-0.75, -0.76, -0.77, -0.69]),
        ("co2_fullstate", [-0.94, -0.67, -0.93, -0.65]),
    ] {
        sheet.check(&format!("full-state gain {scenario}"), secs(1), || {
            let d = carbon_control::pipeline::design(&Scenario::bundled(scenario).unwrap()).unwrap();
            (within(&d.controller.k, &want, 0.01), format!("K {}", fmt(&d.controller.k)))
        });
    }

    sheet.check("output-feedback gain random_rates_output", secs(10), || {
        let d = carbon_control::pipeline::design(&Scenario::bundled("random_rates_output").unwrap()).unwrap();
        output_gain(&d.controller, -0.694, &[0.0, 0.696, 0.698, 0.618])
    });
    sheet.check("output-feedback gain co2_output", secs(10), || {
        let d = carbon_control::pipeline::design(&Scenario::bundled("co2_output").unwrap()).unwrap();
        output_gain(&d.controller, -0.837, &[0.0, 0.284, 0.357, 0.089])
    });

    let started = Instant::now();
    let full = run("co2_fullstate");
    let output = run("co2_output");
    let milestone_runs = started.elapsed();
    let milestone_budget = secs(30).saturating_sub(milestone_runs);

    sheet.check("full-state x1 settles to 637.2 t (1% band) by 25 ± 5 d", milestone_budget, || {
        let (t, t_value) = x1_settling(&full);
        ((20.0..=30.0).contains(&t), format!("settles at {t:.2} d (within 1% of x1e at {t_value:.2} d)"))
    });
    for (index, label) in [(1, "x2"), (2, "x3")] {
        sheet.check(&format!("full-state {label} within 1% of initial by about 6 d (± 1.5 d)"), milestone_budget, || {
            let t = settling_time(&full.trajectory, index, 0.0, 0.01).unwrap_or(f64::INFINITY);
            ((4.5..=7.5).contains(&t), format!("reaches 1% at {t:.2} d"))
        });
    }
    sheet.check("output-feedback x1 settles to 637.2 t (1% band) by 60 ± 10 d", milestone_budget, || {
        let (t, t_value) = x1_settling(&output);
        ((50.0..=70.0).contains(&t), format!("settles at {t:.2} d (within 1% of x1e at {t_value:.2} d)"))
    });
    sheet.check("full-state u(0) = 1200 t/d ± 10%", milestone_budget, || {
        let u0 = full.trajectory.u[0];
        ((u0 - 1200.0).abs() <= 120.0, format!("u(0) = {u0:.2} t/d"))
    });
    sheet.check("output-feedback u(0) = 260 t/d ± 15%", milestone_budget, || {
        let u0 = output.trajectory.u[0];
        ((u0 - 260.0).abs() <= 39.0, format!("u(0) = {u0:.2} t/d"))
    });

    let mut temperature_run = None;
    sheet.check("temperature 133 ± 2 °C at 6000 d", secs(60), || {
        let out = run("co2_fullstate_temperature");
        let ts = out.trajectory.temperature.clone().unwrap();
        let i = out.trajectory.t.iter().position(|t| *t >= 6000.0 - 1e-9).unwrap();
        let c = ts[i] - CELSIUS_OFFSET;
        let start = ts[0] - CELSIUS_OFFSET;
        temperature_run = Some(out);
        ((c - 133.0).abs() <= 2.0 && (start - 15.2).abs() < 1e-9, format!("T(0) = {start:.2} °C, T(6000 d) = {c:.3} °C"))
    });
    sheet.check("temperature equilibrium matches radiative balance within 0.1 K", secs(1), || {
        let out = temperature_run.as_ref().unwrap();
        let scenario = Scenario::bundled("co2_fullstate_temperature").unwrap();
        let params = scenario.temperature_params().unwrap();
        let t_star = params.equilibrium_temperature(out.design.setpoint.x_e[0]);
        let last = *out.trajectory.temperature.as_ref().unwrap().last().unwrap();
        ((last - t_star).abs() <= 0.1, format!("T(end) = {last:.4} K, T* = {t_star:.4} K"))
    });

    sheet.check("every bundled scenario stays nonnegative", secs(60), || {
        let mut worst = Vec::new();
        for name in Scenario::bundled_names() {
            let out = run(name);
            if let Err(e) = check_nonnegative(&out.trajectory) {
                worst.push(format!("{name}: {e}"));
            }
        }
        (worst.is_empty(), if worst.is_empty() { "all six".into() } else { worst.join("; ") })
    });

    let model = full.design.model.clone();
    let sp = full.design.setpoint;
    let weights = full.design.weights.clone();
    let lqr = full.design.controller.clone();
    let cost = |k: &Matrix| {
        let traj = simulate_closed_loop(&model, k, &CO2_X0, &sp, &TimeGrid::new(150.0, 0.01)).unwrap();
        evaluate_cost(&traj, &sp, &weights).unwrap()
    };

    sheet.check("LQR value identity within 1%", secs(5), || {
        let j = cost(&lqr.gain());
        let x0t: Vec<f64> = (0..4).map(|i| CO2_X0[i] - sp.x_e[i]).collect();
        let predicted = 0.5 * lqr.cost_matrix().quad_form(&x0t);
        let rel = (j - predicted).abs() / predicted;
        (rel <= 0.01, format!("J = {j:.1}, ½x̃0ᵀPx̃0 = {predicted:.1}, relative gap {rel:.1e}"))
    });

    sheet.check("20 perturbed gains all cost more", secs(30), || {
        let best = cost(&lqr.gain());
        let mut r = rng(20);
        let (mut evaluated, mut worse, mut smallest_gap) = (0, 0, f64::INFINITY);
        for _ in 0..20 {
            let k: Vec<f64> = lqr.k.iter().map(|k| k * (1.0 + 0.05 * r.gen_range(-1.0..1.0))).collect();
            let gain = Matrix::row(&k);
            if eigenvalues(&closed_loop(&model, &gain)).unwrap().max_real() >= 0.0 {
                continue;
            }
            let j = cost(&gain);
            evaluated += 1;
            if j > best {
                worse += 1;
            }
            smallest_gap = smallest_gap.min(j - best);
        }
        (
            evaluated == 20 && worse == 20,
            format!("{worse}/{evaluated} cost more, smallest increase {smallest_gap:.3}"),
        )
    });

    sheet.check("Lyapunov and Riccati on 100 random stable systems", secs(10), || {
        let mut failures = Vec::new();
        let (mut worst_lyap, mut worst_are) = (0.0f64, 0.0f64);
        for seed in 0..100u64 {
            let mut r = rng(1000 + seed);
            let n = r.gen_range(1..=6);
            let a = random_stable(&mut r, n);
            let q = random_spd(&mut r, n);
            let p = solve_lyapunov(&a, &q).unwrap();
            let res = (&(&(&a.transpose() * &p) + &(&p * &a)) + &q).norm_inf() / q.norm_inf();
            worst_lyap = worst_lyap.max(res);
            if res > 1e-9 || p.asymmetry() > 1e-10 {
                failures.push(format!("lyapunov seed {seed}"));
            }
            let b = random_matrix(&mut r, n, 1);
            let r2 = r.gen_range(0.1..10.0);
            let x = solve_are(&a, &b, &q, r2).unwrap();
            let s = (&b * &b.transpose()).scale(1.0 / r2);
            let res = are_residual(&a, &s, &q, &x).norm_inf() / (1.0 + q.norm_inf());
            worst_are = worst_are.max(res);
            let stable = eigenvalues(&(&a - &(&s * &x))).unwrap().max_real() < 0.0;
            if res > 1e-8 || x.asymmetry() > 1e-10 * (1.0 + x.max_abs()) || !stable {
                failures.push(format!("riccati seed {seed}"));
            }
        }
        (
            failures.is_empty(),
            format!("worst relative residuals {worst_lyap:.1e} / {worst_are:.1e}; failures {failures:?}"),
        )
    });

    sheet.check("halving the RK4 step changes states by at most 1e-6 relative", secs(30), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, x0) in [
            ("co2_fullstate", CO2_X0),
            ("co2_output", CO2_X0),
            ("random_rates_fullstate", RANDOM_X0),
            ("random_rates_output", RANDOM_X0),
        ] {
            let s = Scenario::bundled(name).unwrap();
            let d = carbon_control::pipeline::design(&s).unwrap();
            let k = d.controller.gain();
            let stride = s.record_every;
            let coarse = TimeGrid::new(s.horizon, s.dt).with_stride(stride);
            let fine = TimeGrid::new(s.horizon, s.dt / 2.0).with_stride(2 * stride);
            let a = simulate_closed_loop(&d.model, &k, &x0, &d.setpoint, &coarse).unwrap();
            let b = simulate_closed_loop(&d.model, &k, &x0, &d.setpoint, &fine).unwrap();
            let change = max_rel_state_change(&a, &b);
            ok &= a.len() == b.len() && change <= 1e-6;
            parts.push(format!("{name} {change:.1e}"));
        }
        (ok, parts.join(", "))
    });

    sheet.check("λ + φ1 + φnz = 0 to 1e-12 relative", secs(1), || {
        let mut worst = 0.0f64;
        for out in [&full, &output] {
            let k = &out.keys;
            for i in 0..k.t.len() {
                let scale = k.phi1[i].abs() + k.phi_nz[i].abs();
                if scale > 0.0 {
                    worst = worst.max((k.lambda[i] + k.phi1[i] + k.phi_nz[i]).abs() / scale);
                }
            }
        }
        (worst <= 1e-12, format!("worst {worst:.1e}"))
    });

    sheet.check("x1 + x4 constant to 1e-6 of γ over the net-zero tail window", secs(1), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, out) in [("co2_fullstate", &full), ("co2_output", &output)] {
            let Some(gamma) = out.keys.gamma else {
                ok = false;
                parts.push(format!("{name}: no net-zero tail"));
                continue;
            };
            let tr = &out.trajectory;
            let start = tr.t.last().unwrap() * (1.0 - GAMMA_TAIL_FRACTION);
            let dev = tr
                .t
                .iter()
                .zip(&tr.x)
                .filter(|(t, _)| **t >= start)
                .map(|(_, x)| (x[0] + x[3] - gamma).abs() / gamma)
                .fold(0.0, f64::max);
            ok &= dev <= 1e-6;
            parts.push(format!("{name}: γ = {gamma:.4}, deviation {dev:.1e}"));
        }
        (ok, parts.join(", "))
    });

    sheet.check("x1 + x4 constant to 1e-6 once x2, x3, u are below 1e-6 of their initial size", secs(1), || {
        let mut parts = Vec::new();
        let mut ok = true;
        for (name, out) in [("co2_fullstate", &full), ("co2_output", &output)] {
            let tr = &out.trajectory;
            let small = |i: usize| {
                tr.x[i][1].abs() <= 1e-6 * tr.x[0][1].abs()
                    && tr.x[i][2].abs() <= 1e-6 * tr.x[0][2].abs()
                    && tr.u[i].abs() <= 1e-6 * tr.u[0].abs()
            };
            let Some(first) = (0..tr.len()).rev().take_while(|&i| small(i)).last() else {
                ok = false;
                parts.push(format!("{name}: threshold never reached"));
                continue;
            };
            let totals: Vec<f64> = tr.x[first..].iter().map(|x| x[0] + x[3]).collect();
            let lo = totals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let spread = (hi - lo) / lo;
            ok &= spread <= 1e-6;
            parts.push(format!("{name}: from t = {:.2} d, spread {spread:.1e}", tr.t[first]));
        }
        (ok, parts.join(", "))
    });

    let failed: Vec<&str> = sheet.verdicts.iter().filter(|v| !v.pass).map(|v| v.name.as_str()).collect();
    println!("{} of {} criteria passed", sheet.verdicts.len() - failed.len(), sheet.verdicts.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
