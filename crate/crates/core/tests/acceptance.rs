//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::f64::consts::{E, PI};
use std::process::ExitCode;
use std::time::Instant;

use evocert::certificates::{blowup_analyze, check_a2_t23, Analysis, CertOptions, TheoremId, Verdict};
use evocert::coeffs::{ProblemSpec, ScalarFunction};
use evocert::linalg::{operator_norm_unchecked, vec_norm, NormKind};
use evocert::propagator::{propagate, PropagatorTable};
use evocert::scenarios::{self, example2_gamma_integral, oracle_deviation, Overrides, ScenarioId};
use evocert::simulate::{integrate, verify_envelope, TrajectoryStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario_table(id: ScenarioId, tol: f64) -> (ProblemSpec, PropagatorTable) {
    let sc = scenarios::build(id, &Overrides::default()).expect("scenario builds");
    let table = propagate(&sc.spec.b, sc.spec.t_max, tol, sc.spec.norm()).expect("propagates");
    (sc.spec, table)
}

fn c1_oracle() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for id in [ScenarioId::Example1, ScenarioId::Example2] {
        let start = Instant::now();
        let sc = scenarios::build(id, &Overrides::default()).unwrap();
        let table = propagate(&sc.spec.b, sc.spec.t_max, 1e-8, sc.spec.norm()).unwrap();
        let dev = oracle_deviation(&table, sc.oracle.as_ref().unwrap(), 4.0 * PI, 20).unwrap();
        let secs = start.elapsed().as_secs_f64();
        pass &= dev <= 1e-6 && secs < 5.0;
        parts.push(format!("{id}: max dev {dev:.2e} in {secs:.2}s"));
    }
    outcome(pass, format!("{} (≤ 1e-6, < 5 s)", parts.join("; ")))
}

fn c2_example1_bounds() -> Outcome {
    let (spec, table) = scenario_table(ScenarioId::Example1, 1e-8);
    let sup = Analysis::new(&spec, &table, CertOptions::default()).sup_u().value;
    let n = 20;
    let hi = table.t_max();
    let mut two = 0.0f64;
    for i in 0..=n {
        for j in 0..=i {
            let (t, xi) = (hi * i as f64 / n as f64, hi * j as f64 / n as f64);
            two = two.max(operator_norm_unchecked(&table.eval_u_two(t, xi).unwrap(), table.norm_kind()));
        }
    }
    let pass = (sup - E).abs() <= 1e-4 && two <= E * E;
    outcome(pass, format!("sup‖U(t)‖ = {sup:.8} (e ± 1e-4); sup_(t≥ξ)‖U(t,ξ)‖ = {two:.6} ≤ e² = {:.6}", E * E))
}

fn c3_example2_bounds() -> Outcome {
    let (spec, table) = scenario_table(ScenarioId::Example2, 1e-8);
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = f64::INFINITY;
    for (&t, &u) in table.grid().iter().zip(table.u_norms()) {
        worst_lo = worst_lo.min(u / (-t - 4.0).exp());
        worst_hi = worst_hi.min((-t + 4.0).exp() / u);
    }
    let bounds = worst_lo > 1.0 && worst_hi > 1.0;
    let cert = Analysis::new(&spec, &table, CertOptions::default()).check(TheoremId::C25);
    let certified = cert.verdict == Verdict::Certified;
    let c2 = cert.constants.get("C2").copied().unwrap_or(f64::NAN);
    let traj = integrate(&spec, spec.t_max, 1e-10);
    let ratio = traj
        .samples
        .iter()
        .map(|s| s.norm / (c2 * (-s.t + 4.0).exp()))
        .fold(0.0, f64::max);
    let env_ok = verify_envelope(&traj, &cert, &table).is_ok_and(|r| r.pass);
    let pass = bounds && certified && env_ok && ratio <= 1.0 + 1e-6;
    outcome(
        pass,
        format!(
            "{} grid points: min ‖U‖/e^(−t−4) = {worst_lo:.3}, min e^(−t+4)/‖U‖ = {worst_hi:.3}; C2.5 {}; max ‖u‖/(C₂e^(−t+4)) = {ratio:.3e} (≤ 1+1e-6)",
            table.grid().len(),
            cert.verdict.as_str()
        ),
    )
}

fn c4_blowup() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (u0, g, t0) in [(1.0, 0.0, 1.0), (0.5, 0.0, 2.0), (2.0, -1.0, 2f64.ln())] {
        let an = blowup_analyze(u0, ScalarFunction::constant(g), ScalarFunction::constant(1.0), 2.0, 5.0).unwrap();
        let root = an.t0.unwrap_or(f64::NAN);
        let spec = ProblemSpec::scalar_bernoulli(ScalarFunction::constant(g), ScalarFunction::constant(1.0), 2.0, u0, 5.0);
        let traj = integrate(&spec, 5.0, 1e-10);
        let escape = match traj.status {
            TrajectoryStatus::BlewUp { t_escape } => t_escape,
            _ => f64::INFINITY,
        };
        let ok = (root - t0).abs() <= 1e-8 && escape < t0 * 1.001;
        pass &= ok;
        parts.push(format!("u₀={u0},γ={g}: |t0−{t0:.6}| = {:.1e}, escape {escape:.6}", (root - t0).abs()));
    }
    outcome(pass, parts.join("; "))
}

fn c5_soundness() -> Outcome {
    let start = Instant::now();
    let ids = [
        TheoremId::A1T21,
        TheoremId::A2T23,
        TheoremId::C25,
        TheoremId::A3T24,
        TheoremId::HT31,
        TheoremId::HT33,
        TheoremId::HT34,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, id) in ids.into_iter().enumerate() {
        let run = common::soundness(id, 50, 400, 1e-5, 0x5eed + k as u64);
        pass &= run.certified == 50 && run.violations.is_empty();
        parts.push(format!("{id} {}/{} ({} violations, max ratio {:.4})", run.certified, run.attempts, run.violations.len(), run.max_ratio));
        for v in run.violations.iter().take(3) {
            parts.push(format!("  {id} {v}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    outcome(pass, format!("{}; total {secs:.1}s (< 120 s)", parts.join(", ")))
}

fn c6_scalar() -> Outcome {
    let spec = ProblemSpec::scalar_bernoulli(ScalarFunction::constant(-1.0), ScalarFunction::constant(1.0), 2.0, 0.5, 20.0);
    let table = propagate(&spec.b, spec.t_max, 1e-10, spec.norm()).unwrap();
    let cert = check_a2_t23(&spec, &table);
    let consts: Vec<f64> = ["J", "Theta", "M3", "C2"].iter().map(|k| cert.constants.get(*k).copied().unwrap_or(f64::NAN)).collect();
    let consts_ok = consts.iter().all(|v| (v - 1.0).abs() <= 1e-6);
    let traj = integrate(&spec, spec.t_max, 1e-10);
    let sup = traj.samples.iter().map(|s| s.u[0] * s.t.exp()).fold(0.0, f64::max);
    let closed = traj
        .samples
        .iter()
        .map(|s| (s.u[0] - 1.0 / (1.0 + s.t.exp())).abs() * s.t.exp())
        .fold(0.0, f64::max);
    let pass = cert.verdict == Verdict::Certified && consts_ok && sup <= 1.0 + 1e-8 && closed <= 1e-8;
    outcome(
        pass,
        format!(
            "J, Θ, M₃, C₂ = {:?}; sup u·e^t = {sup:.12} (≤ 1+1e-8); max |u − 1/(1+e^t)|·e^t = {closed:.1e}",
            consts
        ),
    )
}

fn c7_holder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut checked = 0;
    for p in [1.5, 2.0, 3.0] {
        for norm in [NormKind::L2, NormKind::L1, NormKind::LInf] {
            let spec = ProblemSpec::new(
                evocert::coeffs::MatrixFunction::diagonal(vec![ScalarFunction::zero(); 4]),
                ScalarFunction::parse("exp(-t)").unwrap(),
                p,
                vec![0.0; 4],
                1.0,
            )
            .with_norm(norm);
            let mut g = vec![0.0; 4];
            for _ in 0..1000 {
                let t: f64 = rng.random_range(0.0..1.0);
                let scale = 10f64.powf(rng.random_range(-3.0..1.0));
                let u: Vec<f64> = (0..4).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
                spec.eval_nonlinearity(t, &u, &mut g);
                checked += 1;
                if vec_norm(&g, norm) > spec.alpha.eval(t) * vec_norm(&u, norm).powf(p) {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {checked} samples (p ∈ {{1.5, 2, 3}}, ℓ², ℓ¹, ℓ∞)"))
}

fn c8_liouville() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for id in ScenarioId::ALL {
        let (spec, table) = scenario_table(id, 1e-8);
        let dev = table.liouville_deviation(&spec.b, 400).unwrap_or(f64::INFINITY);
        pass &= dev <= 1e-6;
        parts.push(format!("{id} {dev:.1e}"));
    }
    outcome(pass, format!("{} (≤ 1e-6)", parts.join(", ")))
}

fn c9_gamma_slope() -> Outcome {
    let ks: Vec<f64> = (1..=5).map(|k| k as f64).collect();
    let vals: Vec<f64> = (1..=5).map(example2_gamma_integral).collect();
    let (mk, mv) = (ks.iter().sum::<f64>() / 5.0, vals.iter().sum::<f64>() / 5.0);
    let slope = ks.iter().zip(&vals).map(|(k, v)| (k - mk) * (v - mv)).sum::<f64>()
        / ks.iter().map(|k| (k - mk).powi(2)).sum::<f64>();
    let linear = vals.iter().zip(&ks).all(|(v, k)| (v - slope * k).abs() <= 1e-8 * v.abs().max(1.0));
    outcome(slope > 0.0 && linear, format!("∫₀^(2πk) γ = {vals:.6?}; slope {slope:.6} > 0"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("propagator oracle agreement", c1_oracle),
        ("example 1 propagator bounds", c2_example1_bounds),
        ("example 2 propagator bounds and C2.5 envelope", c3_example2_bounds),
        ("blow-up times", c4_blowup),
        ("soundness property suite", c5_soundness),
        ("scalar T2.3 end to end", c6_scalar),
        ("power nonlinearity bound", c7_holder),
        ("Liouville cross-check", c8_liouville),
        ("gamma integral grows linearly", c9_gamma_slope),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {}. {name}: {} [{:.2}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
