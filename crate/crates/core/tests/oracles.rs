//! Dual-route checks: independent fixed-step integration against the series
//! start, and the flux representation on a fresh separatrix witness.

use radshoot::asymptotics::integral_representation_check;
use radshoot::shooting::separatrix_witness;
use radshoot::{radial_rhs, taylor_start, IntegrationControls, ProblemSpec, StateVector};

/// Classic fixed-step RK4 over the radial system; test-local on purpose so
/// the series start is checked against a route that shares nothing with the
/// adaptive stepper.
fn rk4(spec: &ProblemSpec, mut state: StateVector, r_end: f64, steps: usize) -> StateVector {
    let h = (r_end - state.r) / steps as f64;
    let n = state.y.len();
    for _ in 0..steps {
        let k1 = radial_rhs(spec, &state).unwrap();
        let at = |r: f64, y: Vec<f64>| StateVector::new(r, y);
        let add = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> {
            y.iter().zip(k).map(|(a, b)| a + c * b).collect()
        };
        let k2 = radial_rhs(spec, &at(state.r + h / 2.0, add(&state.y, &k1, h / 2.0))).unwrap();
        let k3 = radial_rhs(spec, &at(state.r + h / 2.0, add(&state.y, &k2, h / 2.0))).unwrap();
        let k4 = radial_rhs(spec, &at(state.r + h, add(&state.y, &k3, h))).unwrap();
        for i in 0..n {
            state.y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        state.r += h;
    }
    state
}

#[test]
fn taylor_start_matches_fixed_step_oracle() {
    let spec = ProblemSpec::exponential(3, 0.0, -1.0);
    let (r0, r1) = (1e-4, 9e-4);
    // start data with the quartic series term dropped: the induced error is
    // O(r0^4) ~ 1e-16 and Richardson removes the O(h^4) marching error
    let beta = spec.beta();
    let quadratic_start = StateVector::new(
        r0,
        vec![
            beta * r0 * r0 / 6.0,
            beta * r0 / 3.0,
            beta + r0 * r0 / 6.0,
            r0 / 3.0,
        ],
    );
    let coarse = rk4(&spec, quadratic_start.clone(), r1, 200);
    let fine = rk4(&spec, quadratic_start, r1, 400);
    let series = taylor_start(&spec, r1).unwrap();
    for i in 0..4 {
        let extrapolated = (16.0 * fine.y[i] - coarse.y[i]) / 15.0;
        assert!(
            (extrapolated - series.y[i]).abs() < 1e-14,
            "component {i}: oracle {extrapolated:e} vs series {:e}",
            series.y[i]
        );
    }
}

#[test]
fn taylor_start_stated_value_dimension3() {
    // alpha = beta = 0: u(r0) = e^0 r0^4/(8·3·5) with O(r0^6) truncation
    let spec = ProblemSpec::exponential(3, 0.0, 0.0);
    let s = taylor_start(&spec, 1e-3).unwrap();
    assert!((s.u() - 1e-12 / 120.0).abs() < 1e-18);
    // oracle start keeps the quadratic series (v = r²/6, v' = r/3); only the
    // quartic term of u is dropped, an O(r0^4/120) perturbation
    let r0 = 1e-4;
    let oracle = rk4(
        &spec,
        StateVector::new(r0, vec![0.0, 0.0, r0 * r0 / 6.0, r0 / 3.0]),
        1e-3,
        400,
    );
    assert!(
        (oracle.u() - s.u()).abs() < 1e-17,
        "{} vs {}",
        oracle.u(),
        s.u()
    );
}

#[test]
fn representation_closes_on_fresh_witness() {
    // smaller extrapolation base than the verification registry uses, so this
    // is an independent configuration of the same pipeline
    let w = separatrix_witness(3, 2e3, 1e-9, 100.0, &IntegrationControls::default()).unwrap();
    let rep = integral_representation_check(w.trajectory(), &[5.0, 10.0, 20.0, 30.0]).unwrap();
    assert!(
        rep.max_deviation <= 1e-3,
        "max deviation {:.3e}",
        rep.max_deviation
    );
    let at30 = rep.samples.iter().find(|s| s.r == 30.0).unwrap();
    assert!(at30.v_deviation <= 1e-5);
}
