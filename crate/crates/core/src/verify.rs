//! Named verification checks over the whole laboratory.
//!
//! Every check is deterministic and returns a pass/fail flag, a margin to its
//! threshold (positive means pass with room), and a human-readable detail
//! line. Expensive shared artifacts — separatrix brackets, the exponential
//! trajectory battery, the extinction scans — are computed once per process.

use once_cell::sync::Lazy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    check_supersolution, expansion_from_witness, integral_representation_check, log_limit_check,
    max_psi, scaling_invariance_deviation, supersolution_grid,
};
use crate::error::{Error, Result};
use crate::integrate::{integrate, IntegrationControls, Termination, Trajectory};
use crate::negpower::{
    comparison_limit_check, default_ab_grid, extinction_scan, growth_bounds_check,
    lemma_implication_check, one_d_concavity_probe, quadratic_bound_pointwise, ExtinctionOutcome,
    ExtinctionRecord, SURVIVAL_HORIZON,
};
use crate::problem::{closed_form_n4, emden_fowler_polynomial, ProblemSpec};
use crate::quadrature::{quadrature_weighted, TailPolicy};
use crate::shooting::{
    classify, find_separatrix, scan_n2, scan_n2_higher, separatrix_witness, sign_crossing_check,
    Classification, SeparatrixResult, SeparatrixWitness,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub details: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, margin: f64, details: String) -> Self {
        let margin = if margin.is_finite() { margin } else { -1.0 };
        CheckResult {
            name: name.to_string(),
            passed,
            margin,
            details,
        }
    }

    fn failed(name: &str, details: String) -> Self {
        CheckResult::new(name, false, -1.0, details)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerificationReport {
    pub fn failing_names(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

type CheckFn = fn() -> CheckResult;

const REGISTRY: &[(&str, CheckFn)] = &[
    ("closed_form_residual", check_closed_form_residual),
    ("operator_polynomial", check_operator_polynomial),
    ("quadrature_beta_integral", check_quadrature_beta),
    ("quadrature_gamma_integrals", check_quadrature_gamma),
    ("supersolution", check_supersolution_levels),
    ("one_d_concavity", check_one_d_concavity),
    ("comparison_limit", check_comparison_limit),
    ("scaling_invariance", check_scaling_invariance),
    ("monotone_classification", check_monotone_classification),
    ("separatrix_anchor_n4", check_separatrix_anchor_n4),
    ("quadratic_lower_bound", check_quadratic_lower_bound),
    ("upper_bound_global", check_upper_bound_global),
    ("sign_crossing_implies_blowup", check_sign_crossing),
    ("n2_universal_blowup", check_n2_universal_blowup),
    ("log_limit_n5", check_log_limit_n5),
    ("expansion_n3", check_expansion_n3),
    ("integral_representation_n3", check_representation_n3),
    ("sigma_vanishes_at_separatrix", check_sigma_trend),
    ("extinction_p_le_1", check_extinction_p_le_1),
    ("neg_power_monotonicity", check_neg_power_monotonicity),
    ("survival_p2", check_survival_p2),
];

pub fn all_check_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

/// Run the named checks (all of them when `names` is None). Unknown names are
/// rejected; an empty list yields an empty, passing report.
pub fn run_checks(names: Option<&[String]>) -> Result<VerificationReport> {
    let selected: Vec<(&str, CheckFn)> = match names {
        None => REGISTRY.to_vec(),
        Some(list) => {
            let mut sel = Vec::new();
            for want in list {
                match REGISTRY.iter().find(|(n, _)| n == want) {
                    Some(&entry) => sel.push(entry),
                    None => return Err(Error::UnknownCheck(want.clone())),
                }
            }
            sel
        }
    };
    let checks: Vec<CheckResult> = selected.into_iter().map(|(_, f)| f()).collect();
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { checks, all_passed })
}

// ---------------------------------------------------------------------------
// shared artifacts

/// The horizon needed to pin β₀ in dimension 4 to a few 1e-8: the bracket
/// switch point approaches β₀ only like a power of the horizon.
pub const ANCHOR_HORIZON_N4: f64 = 6e4;

static SEP_N4: Lazy<std::result::Result<SeparatrixResult, String>> = Lazy::new(|| {
    find_separatrix(4, ANCHOR_HORIZON_N4, 1e-10, &IntegrationControls::default())
        .map_err(|e| e.to_string())
});

static WITNESS_N3: Lazy<std::result::Result<SeparatrixWitness, String>> = Lazy::new(|| {
    separatrix_witness(3, 5e4, 1e-10, 100.0, &IntegrationControls::default())
        .map_err(|e| e.to_string())
});

// Beyond the critical Laplacian, u + 4 ln r approaches its limit like
// r^(-1/2) with a slowly rotating phase, so the evaluation horizon must sit
// in the thousands; 2500 -> 5000 is a doubling on which the Richardson gap
// both meets the 5e-2 budget and shrinks.
static WITNESS_N5: Lazy<std::result::Result<SeparatrixWitness, String>> = Lazy::new(|| {
    separatrix_witness(5, 5e4, 1e-10, 2500.0, &IntegrationControls::default())
        .map_err(|e| e.to_string())
});

/// The exponential trajectory battery: m in {1,2}, N in {2,3,4,5}, eight
/// initial data each — 64 trajectories shared by the sign-crossing and
/// lower-bound checks.
static EXP_BATTERY: Lazy<Vec<Trajectory>> = Lazy::new(|| {
    let mut specs: Vec<(ProblemSpec, f64)> = Vec::new();
    let m1_betas = [-6.0, -3.0, -1.7, -1.0, -0.5, 0.0, 1.0, 3.0];
    for &dim in &[2u32, 3, 4, 5] {
        let r_max = if dim == 2 { 1e10 } else { crate::shooting::default_horizon(dim) };
        for &beta in &m1_betas {
            specs.push((ProblemSpec::exponential(dim, 0.0, beta), r_max));
        }
    }
    let m2_data: [[f64; 3]; 8] = [
        [0.0, 0.0, 0.0],
        [-2.0, 0.0, 0.0],
        [0.0, -2.0, 0.0],
        [0.0, 0.0, -2.0],
        [-2.0, -2.0, -2.0],
        [1.0, -1.0, 0.0],
        [-1.0, 1.0, -1.0],
        [2.0, 1.0, 0.0],
    ];
    for &dim in &[2u32, 3, 4, 5] {
        let r_max = if dim == 2 { 1e6 } else { 40.0 };
        for d in &m2_data {
            specs.push((
                ProblemSpec::exponential_polyharmonic(dim, 2, vec![0.0, d[0], d[1], d[2]]),
                r_max,
            ));
        }
    }
    specs
        .par_iter()
        .map(|(spec, r_max)| {
            let controls = IntegrationControls::with_r_max(*r_max);
            integrate(spec, &controls).expect("battery specs are valid")
        })
        .collect()
});

static P_SCANS: Lazy<Vec<(f64, Vec<ExtinctionRecord>)>> = Lazy::new(|| {
    let (a_grid, b_grid) = default_ab_grid();
    let controls = IntegrationControls::with_r_max(SURVIVAL_HORIZON);
    [0.25, 0.5, 0.75, 1.0, 2.0]
        .iter()
        .map(|&p| (p, extinction_scan(3, p, &a_grid, &b_grid, &controls)))
        .collect()
});

fn sep(
    result: &'static Lazy<std::result::Result<SeparatrixResult, String>>,
    name: &str,
) -> std::result::Result<&'static SeparatrixResult, CheckResult> {
    match &**result {
        Ok(s) => Ok(s),
        Err(e) => Err(CheckResult::failed(name, format!("separatrix search failed: {e}"))),
    }
}

fn witness(
    result: &'static Lazy<std::result::Result<SeparatrixWitness, String>>,
    name: &str,
) -> std::result::Result<&'static SeparatrixWitness, CheckResult> {
    match &**result {
        Ok(s) => Ok(s),
        Err(e) => Err(CheckResult::failed(name, format!("separatrix witness failed: {e}"))),
    }
}

// ---------------------------------------------------------------------------
// checks

fn check_closed_form_residual() -> CheckResult {
    let name = "closed_form_residual";
    let mut worst: f64 = 0.0;
    let mut r = 0.0;
    while r <= 50.0 {
        let res = (closed_form_n4::bilaplacian(r) - closed_form_n4::u(r).exp()).abs();
        worst = worst.max(res);
        r += 0.01;
    }
    CheckResult::new(
        name,
        worst < 1e-10,
        1e-10 - worst,
        format!("max |Δ²u - e^u| over [0,50] = {worst:.3e}"),
    )
}

fn check_operator_polynomial() -> CheckResult {
    let name = "operator_polynomial";
    let mut mismatches = 0u32;
    let mut total = 0u32;
    for dim in 1..=10u32 {
        for order in 1..=3u32 {
            let p = emden_fowler_polynomial(dim, order);
            for k in (4 * order as i128)..(4 * order as i128 + 21) {
                let mut eigen = 1i128;
                let mut kk = k;
                for _ in 0..2 * order {
                    eigen *= kk * (kk + dim as i128 - 2);
                    kk -= 2;
                }
                total += 1;
                if p.eval_int(k) != eigen {
                    mismatches += 1;
                }
            }
            if p.eval_int(0) != 0 {
                mismatches += 1;
            }
        }
    }
    CheckResult::new(
        name,
        mismatches == 0,
        if mismatches == 0 { 1.0 } else { -(mismatches as f64) },
        format!("{total} exact eigenvalue identities, {mismatches} mismatches"),
    )
}

fn geometric_radii(r0: f64, r_end: f64, n: usize) -> Vec<f64> {
    let q = (r_end / r0).powf(1.0 / n as f64);
    let mut radii: Vec<f64> = (0..=n).map(|i| r0 * q.powi(i as i32)).collect();
    radii[0] = r0;
    let last = radii.len() - 1;
    radii[last] = r_end;
    radii
}

fn check_quadrature_beta() -> CheckResult {
    let name = "quadrature_beta_integral";
    let spec = ProblemSpec::exponential(4, 0.0, closed_form_n4::beta0());
    let radii = geometric_radii(1e-3, 3000.0, 6000);
    let traj = Trajectory::synthetic(
        spec,
        IntegrationControls {
            r0: 1e-3,
            r_max: 3000.0,
            ..Default::default()
        },
        &radii,
        closed_form_n4::state,
        Termination::ReachedHorizon,
    );
    // exact Beta-type value: ∫₀^∞ t³(1+ct²)^{-4} dt = B(2,2)/(2c²) = 1/(12c²),
    // and 1/c² = 384, so the target is 32
    let expect = 32.0;
    match quadrature_weighted(&traj, 3, TailPolicy::FittedBound) {
        Ok(q) => {
            let gap = (q.value - expect).abs();
            let honest = gap <= q.error_bound;
            CheckResult::new(
                name,
                gap < 1e-8 && honest,
                1e-8 - gap,
                format!(
                    "∫t³e^u = {:.12} (target {expect}), gap {gap:.2e}, bound {:.2e}, honest = {honest}",
                    q.value, q.error_bound
                ),
            )
        }
        Err(e) => CheckResult::failed(name, e.to_string()),
    }
}

fn check_quadrature_gamma() -> CheckResult {
    let name = "quadrature_gamma_integrals";
    let spec = ProblemSpec::exponential(3, 0.0, 0.0);
    let radii = geometric_radii(1e-6, 70.0, 4000);
    let traj = Trajectory::synthetic(
        spec,
        IntegrationControls {
            r0: 1e-6,
            r_max: 70.0,
            ..Default::default()
        },
        &radii,
        |r| vec![-r, -1.0, -2.0 / r, 2.0 / (r * r)],
        Termination::ReachedHorizon,
    );
    match crate::asymptotics::expansion_coefficients(&traj) {
        Ok(rep) => {
            let gaps = [
                (rep.alpha1.value + 1.0).abs(),
                (rep.alpha2.value - 3.0).abs(),
                (rep.alpha3.value + 4.0).abs(),
            ];
            let worst = gaps.iter().cloned().fold(0.0, f64::max);
            CheckResult::new(
                name,
                worst < 1e-8,
                1e-8 - worst,
                format!(
                    "alphas = ({:.10}, {:.10}, {:.10}) vs (-1, 3, -4), worst gap {worst:.2e}",
                    rep.alpha1.value, rep.alpha2.value, rep.alpha3.value
                ),
            )
        }
        Err(e) => CheckResult::failed(name, e.to_string()),
    }
}

fn check_supersolution_levels() -> CheckResult {
    let name = "supersolution";
    let grid = supersolution_grid(12.0, 4000);
    let (argmax, maxv, unimodal) = max_psi(0.1, 12.0);
    let tight = check_supersolution(0.1, maxv.ln(), &grid);
    let reduced = check_supersolution(0.1, maxv.ln() - 1.0, &grid);
    let passed = tight.pass && tight.direct_form_agrees && unimodal && !reduced.pass;
    CheckResult::new(
        name,
        passed,
        tight.worst_margin + 1e-10,
        format!(
            "max psi = {maxv:.9} at r = {argmax:.9}; tight margin {:.2e}; reduced level fails = {}",
            tight.worst_margin, !reduced.pass
        ),
    )
}

fn check_one_d_concavity() -> CheckResult {
    let name = "one_d_concavity";
    let rep = one_d_concavity_probe();
    CheckResult::new(
        name,
        rep.all_forced_negative,
        if rep.all_forced_negative { 1.0 } else { -1.0 },
        format!(
            "second derivative forced through zero in {} polynomial cases",
            rep.cases.len()
        ),
    )
}

fn check_comparison_limit() -> CheckResult {
    let name = "comparison_limit";
    let rep = comparison_limit_check(6.0, 1.0, 3, &[1e3, 2e3]);
    let dev1 = rep.samples[0].deviation;
    let ratio = rep.samples[1].deviation / dev1;
    let passed = dev1 < 1e-2 && (ratio - 0.5).abs() < 0.1;
    CheckResult::new(
        name,
        passed,
        1e-2 - dev1,
        format!(
            "rW' at 1e3 = {:.6} (target {:.3}), deviation {dev1:.3e}, halving ratio {ratio:.3}",
            rep.samples[0].value, rep.target
        ),
    )
}

fn check_scaling_invariance() -> CheckResult {
    let name = "scaling_invariance";
    match scaling_invariance_deviation(3, -1.0, 2.0, 10.0, &IntegrationControls::default()) {
        Ok(sup) => CheckResult::new(
            name,
            sup <= 1e-6,
            1e-6 - sup,
            format!("lambda = 2 sup deviation {sup:.3e}"),
        ),
        Err(e) => CheckResult::failed(name, e.to_string()),
    }
}

fn check_monotone_classification() -> CheckResult {
    let name = "monotone_classification";
    let betas = [
        -3.0, -2.2, -1.9, -1.75, -1.68, -1.64, -1.62, -1.55, -1.3, -0.8, 0.0, 1.5,
    ];
    let controls = IntegrationControls::with_r_max(40.0);
    let mut last_global = f64::NEG_INFINITY;
    let mut first_blowup = f64::INFINITY;
    let mut indeterminate = 0;
    for &beta in &betas {
        match classify(&ProblemSpec::exponential(4, 0.0, beta), &controls) {
            Ok(Classification::Global { .. }) => last_global = last_global.max(beta),
            Ok(Classification::Blowup { .. }) => first_blowup = first_blowup.min(beta),
            _ => indeterminate += 1,
        }
    }
    let passed = indeterminate == 0 && last_global < first_blowup;
    CheckResult::new(
        name,
        passed,
        first_blowup - last_global,
        format!(
            "global up to beta = {last_global}, blowup from beta = {first_blowup}, {indeterminate} indeterminate"
        ),
    )
}

fn check_separatrix_anchor_n4() -> CheckResult {
    let name = "separatrix_anchor_n4";
    let s = match sep(&SEP_N4, name) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let beta_gap = (s.beta0_est - closed_form_n4::beta0()).abs();
    let lower = s.lower_witness();
    let mut sup: f64 = 0.0;
    let mut r = 0.0_f64;
    while r <= 20.0 {
        let rr = r.max(lower.first_r());
        if let Ok(u) = lower.u_at(rr) {
            sup = sup.max((u - closed_form_n4::u(rr)).abs());
        }
        r += 0.05;
    }
    let passed = beta_gap < 1e-4 && sup <= 1e-5;
    CheckResult::new(
        name,
        passed,
        (1e-4 - beta_gap).min(1e-5 - sup),
        format!(
            "beta0_est = {:.9} (gap {beta_gap:.2e}) at horizon {}, sup |u - closed form| on [0,20] = {sup:.2e}",
            s.beta0_est, s.r_max
        ),
    )
}

fn check_quadratic_lower_bound() -> CheckResult {
    let name = "quadratic_lower_bound";
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for traj in EXP_BATTERY.iter() {
        if traj.spec.order != 1 {
            continue;
        }
        count += 1;
        let beta = traj.spec.beta();
        let n = traj.spec.dim as f64;
        for node in &traj.nodes {
            let slack = 1e-8 * (1.0 + node.r * node.r);
            let margin = node.u() - beta * node.r * node.r / (2.0 * n) + slack;
            worst = worst.min(margin);
        }
    }
    CheckResult::new(
        name,
        worst >= 0.0,
        worst,
        format!("min over {count} m=1 trajectories of u - beta r²/2N (with 1e-8(1+r²) slack) = {worst:.3e}"),
    )
}

fn check_upper_bound_global() -> CheckResult {
    let name = "upper_bound_global";
    let s = match sep(&SEP_N4, name) {
        Ok(s) => s,
        Err(c) => return c,
    };
    let beta0 = s.beta0_est;
    let controls = IntegrationControls::with_r_max(40.0);
    let mut worst = f64::INFINITY;
    for &delta in &[0.15, 0.5, 1.0, 2.0] {
        let beta = beta0 - delta;
        let traj = match integrate(&ProblemSpec::exponential(4, 0.0, beta), &controls) {
            Ok(t) => t,
            Err(e) => return CheckResult::failed(name, e.to_string()),
        };
        if !traj.termination.reached_horizon() {
            return CheckResult::failed(name, format!("beta = {beta} did not stay global"));
        }
        for node in &traj.nodes {
            let bound = -(beta0 - beta) / 8.0 * node.r * node.r + 1e-6 * (1.0 + node.r * node.r);
            worst = worst.min(bound - node.u());
        }
    }
    CheckResult::new(
        name,
        worst >= 0.0,
        worst,
        format!("min margin of the quadratic upper bound below the separatrix = {worst:.3e}"),
    )
}

fn check_sign_crossing() -> CheckResult {
    let name = "sign_crossing_implies_blowup";
    let mut crossings = 0;
    let mut counterexamples = 0;
    let mut unresolved = 0;
    for traj in EXP_BATTERY.iter() {
        let m2 = 2 * traj.spec.order as usize;
        let comp = 2 * (m2 - 1);
        if let Some(_r_star) = sign_crossing_check(traj) {
            crossings += 1;
            match traj.termination {
                Termination::Blowup { .. } => {}
                // horizon survivor whose top level already turned positive is
                // committed to blowup: the level is strictly increasing
                Termination::ReachedHorizon if traj.end_state().y[comp] > 0.0 => {}
                Termination::ReachedHorizon => counterexamples += 1,
                _ => unresolved += 1,
            }
        }
    }
    let passed = counterexamples == 0 && unresolved == 0 && EXP_BATTERY.len() >= 50;
    CheckResult::new(
        name,
        passed,
        if passed { crossings as f64 } else { -(counterexamples as f64) },
        format!(
            "{} trajectories, {crossings} crossings, {counterexamples} counterexamples, {unresolved} unresolved",
            EXP_BATTERY.len()
        ),
    )
}

fn check_n2_universal_blowup() -> CheckResult {
    let name = "n2_universal_blowup";
    let betas: Vec<f64> = (0..=30).map(|i| -100.0 + 110.0 * i as f64 / 30.0).collect();
    let controls = IntegrationControls {
        r_max: 1e6,
        ..Default::default()
    };
    let recs = scan_n2(&betas, &controls);
    let mut blowups = 0;
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for rec in &recs {
        match rec.outcome.log10_r_est() {
            Some(lg) if lg.is_finite() => {
                blowups += 1;
                if lg > prev + 0.02 {
                    monotone = false;
                }
                prev = lg;
            }
            _ => {}
        }
    }
    let higher_controls = IntegrationControls {
        r_max: 1e7,
        ..Default::default()
    };
    let lattice: Vec<[f64; 3]> = vec![
        [-5.0, -5.0, -5.0],
        [-2.0, -2.0, -2.0],
        [-2.0, -1.0, 1.0],
        [-1.0, -2.0, 1.0],
        [-1.0, 1.0, -2.0],
        [1.0, -2.0, -2.0],
        [1.0, 1.0, -2.0],
        [-2.0, 1.0, 1.0],
        [0.0, -1.0, -1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, -2.0],
        [-1.0, -1.0, -1.0],
    ];
    let recs2 = scan_n2_higher(&lattice, &higher_controls);
    let blowups2 = recs2.iter().filter(|r| r.outcome.is_blowup()).count();
    let passed = blowups == recs.len() && blowups2 == recs2.len() && monotone;
    CheckResult::new(
        name,
        passed,
        (blowups + blowups2) as f64 - (recs.len() + recs2.len()) as f64
            + if monotone { 0.5 } else { -0.5 },
        format!(
            "m=1: {blowups}/{} blowup over beta in [-100,10]; m=2: {blowups2}/{} over the init lattice; R_est nonincreasing = {monotone}",
            recs.len(),
            recs2.len()
        ),
    )
}

fn check_log_limit_n5() -> CheckResult {
    let name = "log_limit_n5";
    let w = match witness(&WITNESS_N5, name) {
        Ok(w) => w,
        Err(c) => return c,
    };
    let rep = match log_limit_check(w.trajectory(), 5) {
        Ok(r) => r,
        Err(e) => return CheckResult::failed(name, e.to_string()),
    };
    let r_wide = 2.0 * w.witness_r_max;
    let wide = match integrate(
        &ProblemSpec::exponential(5, 0.0, w.beta_star),
        &IntegrationControls::with_r_max(r_wide),
    ) {
        Ok(t) => t,
        Err(e) => return CheckResult::failed(name, e.to_string()),
    };
    let rep_wide = match log_limit_check(&wide, 5) {
        Ok(r) => r,
        Err(e) => return CheckResult::failed(name, e.to_string()),
    };
    let gap = (rep.estimate - rep.target).abs();
    let gap_wide = (rep_wide.estimate - rep_wide.target).abs();
    // same budget in dimension 6, where the target is ln 64
    let n6 = separatrix_witness(6, 5e4, 1e-10, 2500.0, &IntegrationControls::default())
        .and_then(|w6| log_limit_check(w6.trajectory(), 6));
    let gap6 = match &n6 {
        Ok(rep6) => (rep6.estimate - rep6.target).abs(),
        Err(e) => return CheckResult::failed(name, e.to_string()),
    };
    let passed = gap < 5e-2 && gap_wide < gap && gap6 < 5e-2;
    CheckResult::new(
        name,
        passed,
        5e-2 - gap,
        format!(
            "u + 4 ln r → {:.5} vs ln 24 = {:.5}; gap {gap:.2e} at r_max {}, {gap_wide:.2e} at {}; dimension 6 gap {gap6:.2e} vs ln 64",
            rep.estimate, rep.target, w.witness_r_max, r_wide
        ),
    )
}

fn check_expansion_n3() -> CheckResult {
    let name = "expansion_n3";
    let w = match witness(&WITNESS_N3, name) {
        Ok(w) => w,
        Err(c) => return c,
    };
    let rep = match expansion_from_witness(w) {
        Ok(r) => r,
        Err(e) => return CheckResult::failed(name, e.to_string()),
    };
    // the far-field residual of any finite-precision witness is dominated by
    // the β-uncertainty riding the unstable quadratic mode: it grows like r²
    // rather than decaying like the true remainder, so the pass condition
    // covers the sign pattern and the two routes to a, and the residual table
    // is reported for inspection
    let passed = rep.signs_ok && rep.a_consistent && rep.alpha2_route_rel < 1e-14;
    let residuals: Vec<String> = rep
        .residual_samples
        .iter()
        .map(|s| format!("res({}) = {:.3e}", s.r, s.residual))
        .collect();
    CheckResult::new(
        name,
        passed,
        if passed { 1.0 } else { -1.0 },
        format!(
            "alpha = ({:.6} ± {:.1e}, {:.6} ± {:.1e}, {:.6} ± {:.1e}); a = {:.6}, |a - 2a1| = {:.2e}, consistent = {}; decay ratio {:.3}; {}",
            rep.alpha1.value,
            rep.alpha1.error,
            rep.alpha2.value,
            rep.alpha2.error,
            rep.alpha3.value,
            rep.alpha3.error,
            rep.a.value,
            rep.a_gap,
            rep.a_consistent,
            rep.decay_ratio,
            residuals.join(", ")
        ),
    )
}

fn check_representation_n3() -> CheckResult {
    let name = "integral_representation_n3";
    let w = match witness(&WITNESS_N3, name) {
        Ok(w) => w,
        Err(c) => return c,
    };
    match integral_representation_check(w.trajectory(), &[5.0, 10.0, 20.0, 30.0]) {
        Ok(rep) => {
            let at30 = rep
                .samples
                .iter()
                .find(|smp| smp.r == 30.0)
                .map(|smp| smp.u_deviation.max(smp.v_deviation))
                .unwrap_or(f64::INFINITY);
            CheckResult::new(
                name,
                at30 <= 1e-5,
                1e-5 - at30,
                format!(
                    "max deviation over samples {:.3e}; at r = 30: {at30:.3e}",
                    rep.max_deviation
                ),
            )
        }
        Err(e) => CheckResult::failed(name, e.to_string()),
    }
}

fn check_sigma_trend() -> CheckResult {
    let name = "sigma_vanishes_at_separatrix";
    let w = match witness(&WITNESS_N3, name) {
        Ok(w) => w,
        Err(c) => return c,
    };
    // σ = lim Δu is negative below β₀ and must sink to zero as β rises to it
    let controls = IntegrationControls::with_r_max(100.0);
    let mut sigmas = Vec::new();
    for &delta in &[0.3, 0.1, 0.03, 0.01] {
        let spec = ProblemSpec::exponential(3, 0.0, w.beta_star - delta);
        match integrate(&spec, &controls) {
            Ok(t) if t.termination.reached_horizon() => sigmas.push(t.end_state().y[2]),
            Ok(t) => {
                return CheckResult::failed(
                    name,
                    format!("beta below the separatrix terminated {:?}", t.termination),
                )
            }
            Err(e) => return CheckResult::failed(name, e.to_string()),
        }
    }
    let all_negative = sigmas.iter().all(|s| *s < 0.0);
    let decreasing = sigmas.windows(2).all(|p| p[1].abs() < p[0].abs());
    let passed = all_negative && decreasing;
    CheckResult::new(
        name,
        passed,
        if passed { sigmas[0].abs() - sigmas[3].abs() } else { -1.0 },
        format!(
            "sigma at beta0 - delta for delta in [0.3, 0.1, 0.03, 0.01]: {}",
            sigmas
                .iter()
                .map(|s| format!("{s:+.4e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn check_extinction_p_le_1() -> CheckResult {
    let name = "extinction_p_le_1";
    let mut survivors = 0;
    let mut indeterminate = 0;
    let mut cells = 0;
    for (p, recs) in P_SCANS.iter() {
        if *p > 1.0 {
            continue;
        }
        for rec in recs {
            cells += 1;
            match rec.outcome {
                ExtinctionOutcome::Extinct { .. } => {}
                ExtinctionOutcome::Survived { .. } => survivors += 1,
                ExtinctionOutcome::Indeterminate { .. } => indeterminate += 1,
            }
        }
    }
    let passed = survivors == 0 && indeterminate == 0;
    CheckResult::new(
        name,
        passed,
        if passed { 1.0 } else { -(survivors as f64 + indeterminate as f64) },
        format!("{cells} cells over p in {{0.25, 0.5, 0.75, 1.0}}: {survivors} survivors, {indeterminate} indeterminate after escalation"),
    )
}

fn check_neg_power_monotonicity() -> CheckResult {
    let name = "neg_power_monotonicity";
    let controls = IntegrationControls::with_r_max(SURVIVAL_HORIZON);
    let cells = [
        (1.0, 1.0, 0.0),
        (1.0, 1.0, -1.0),
        (0.5, 2.0, 1.0),
        (0.25, 0.5, 2.0),
        (0.75, 4.0, -2.0),
        (2.0, 1.0, 4.0),
        (2.0, 0.5, 2.0),
        (1.0, 4.0, 4.0),
    ];
    let mut worst = f64::INFINITY;
    for &(p, a, b) in &cells {
        let traj = match integrate(&ProblemSpec::neg_power(3, p, a, b), &controls) {
            Ok(t) => t,
            Err(e) => return CheckResult::failed(name, e.to_string()),
        };
        match lemma_implication_check(&traj) {
            Ok(rep) => {
                if !rep.laplacian_strictly_decreasing || !rep.contrapositive_holds {
                    return CheckResult::new(
                        name,
                        false,
                        -1.0,
                        format!("lemma violated at (p,a,b) = ({p},{a},{b}): {rep:?}"),
                    );
                }
            }
            Err(e) => return CheckResult::failed(name, e.to_string()),
        }
        let (ok, margin) = quadratic_bound_pointwise(&traj);
        if !ok {
            return CheckResult::new(
                name,
                false,
                margin,
                format!("quadratic pointwise bound violated at (p,a,b) = ({p},{a},{b})"),
            );
        }
        worst = worst.min(margin);
    }
    CheckResult::new(
        name,
        true,
        worst,
        format!("Δu strictly decreasing, contrapositive and quadratic bound hold on {} cells", cells.len()),
    )
}

fn check_survival_p2() -> CheckResult {
    let name = "survival_p2";
    let recs = P_SCANS
        .iter()
        .find(|(p, _)| *p == 2.0)
        .map(|(_, r)| r.clone())
        .unwrap_or_default();
    let survivor = recs.iter().find(|r| r.outcome.is_survived());
    match survivor {
        Some(rec) => {
            let exponent = match rec.outcome {
                ExtinctionOutcome::Survived {
                    growth_exponent, ..
                } => growth_exponent,
                _ => unreachable!(),
            };
            let controls = IntegrationControls::with_r_max(SURVIVAL_HORIZON);
            let traj = match integrate(&ProblemSpec::neg_power(3, 2.0, rec.a, rec.b), &controls) {
                Ok(t) => t,
                Err(e) => return CheckResult::failed(name, e.to_string()),
            };
            let growth = match growth_bounds_check(&traj) {
                Ok(g) => g,
                Err(e) => return CheckResult::failed(name, e.to_string()),
            };
            let in_range = ( 4.0 / 3.0..=2.2).contains(&exponent);
            let passed = in_range && growth.lower_ok && growth.upper_ok && growth.chain_ok;
            CheckResult::new(
                name,
                passed,
                exponent - 4.0 / 3.0,
                format!(
                    "survivor at (a,b) = ({},{}) with exponent {exponent:.4}; growth bounds lower/upper/chain = {}/{}/{}",
                    rec.a, rec.b, growth.lower_ok, growth.upper_ok, growth.chain_ok
                ),
            )
        }
        None => CheckResult::failed(name, "no surviving cell found for p = 2".into()),
    }
}
