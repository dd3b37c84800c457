//! Random problem generator for the soundness runs.

#![allow(dead_code)]

use evocert::certificates::{Analysis, CertOptions, Certificate, TheoremId};
use evocert::coeffs::{DecayClass, MatrixFunction, ProblemSpec, ScalarFunction, Space};
use evocert::expr::Expr;
use evocert::linalg::{vec_norm, NormKind};
use evocert::par::Exec;
use evocert::propagator::propagate;
use evocert::simulate::{integrate_with, verify_envelope, EnvelopeReport, SimOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const T_MAX: f64 = 20.0;
pub const TOL: f64 = 1e-8;
pub const OUTPUT_INTERVALS: usize = 250;

fn c(x: f64) -> Expr {
    Expr::Const(x)
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

/// `amp·cos(w·t + phase)`
fn wave(amp: f64, w: f64, phase: f64) -> Expr {
    Expr::Mul(b(c(amp)), b(Expr::Cos(b(Expr::Add(b(Expr::Mul(b(c(w)), b(Expr::T))), b(c(phase)))))))
}

/// `amp·exp(−rate·t)`
fn decaying(amp: f64, rate: f64) -> Expr {
    Expr::Mul(b(c(amp)), b(Expr::Exp(b(Expr::Mul(b(c(-rate)), b(Expr::T))))))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_b(rng: &mut ChaCha8Rng, n: usize, min_damping: f64) -> MatrixFunction {
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let e = if i == j {
                let a = rng.random_range(min_damping..0.8);
                Expr::Add(b(c(-a)), b(wave(rng.random_range(0.0..1.0), rng.random_range(0.2..1.5), rng.random_range(0.0..6.3))))
            } else if rng.random_bool(0.4) {
                wave(rng.random_range(-0.3..0.3), rng.random_range(0.2..1.5), rng.random_range(0.0..6.3))
            } else {
                c(0.0)
            };
            entries.push(ScalarFunction::from_expr(e));
        }
    }
    MatrixFunction::new(n, entries).expect("square")
}

fn random_dir(rng: &mut ChaCha8Rng, n: usize, norm: NormKind) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = vec_norm(&v, norm);
        if s > 1e-3 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Forcing `β(t)·cos(νt)·dir`, so `‖f(t)‖ ≤ β(t)`.
fn forcing_for(rng: &mut ChaCha8Rng, beta: &Expr, n: usize, norm: NormKind) -> Vec<ScalarFunction> {
    let nu = rng.random_range(0.1..3.0);
    random_dir(rng, n, norm)
        .into_iter()
        .map(|d| ScalarFunction::from_expr(Expr::Mul(b(beta.clone()), b(wave(d, nu, 0.0)))))
        .collect()
}

/// A random problem shaped so that `id` has a fair chance to certify.
pub fn random_spec(id: TheoremId, seed: u64) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hilbert = id.is_hilbert();
    let (nb, m) = if hilbert {
        let nb = rng.random_range(1..=3usize);
        (nb, rng.random_range(1..=6 / nb))
    } else {
        (rng.random_range(1..=6usize), 1)
    };
    let n = nb * m;
    let norm = if hilbert {
        NormKind::L2
    } else {
        [NormKind::L2, NormKind::L1, NormKind::LInf][rng.random_range(0..3usize)]
    };
    let p = [1.5, 2.0, 3.0][rng.random_range(0..3usize)];
    let min_damping = if matches!(id, TheoremId::A1T21 | TheoremId::HT31) { 0.15 } else { 0.3 };
    let bm = random_b(&mut rng, nb, min_damping);

    let rate = rng.random_range(0.5..2.0);
    let amp = rng.random_range(0.1..2.0);
    let alpha_e = decaying(amp, rate);
    let alpha = ScalarFunction::from_expr(alpha_e.clone()).with_decay(DecayClass::Exponential { rate });

    let zeta_kind = matches!(id, TheoremId::A3T24 | TheoremId::HT34);
    let (beta_e, beta_rate) = if zeta_kind {
        // ζ theorems need β > 0 wherever α > 0; β/α must not vanish.
        let k = log_uniform(&mut rng, 1e-4, 1e-1);
        let s = rng.random_range(0.0..rate);
        (decaying(k, s), Some(s))
    } else if rng.random_bool(0.4) {
        (c(0.0), None)
    } else {
        let k = log_uniform(&mut rng, 1e-8, 1e-3);
        // For the ‖U‖-scaled budgets β must decay faster than α‖U‖^p.
        let s = rate + rng.random_range(0.5..3.0) * p;
        (decaying(k, s), Some(s))
    };
    let mut beta = ScalarFunction::from_expr(beta_e.clone());
    if let Some(s) = beta_rate {
        if s > 0.0 {
            beta = beta.with_decay(DecayClass::Exponential { rate: s });
        }
    }
    let radius = log_uniform(&mut rng, 1e-5, if zeta_kind { 1e-2 } else { 3e-2 });
    let u0: Vec<f64> = random_dir(&mut rng, n, norm).into_iter().map(|x| x * radius).collect();

    let mut spec = ProblemSpec::new(bm, alpha, p, u0, T_MAX).with_beta(beta);
    spec = if hilbert {
        let spectrum: Vec<f64> = (0..m).map(|_| -rng.random_range(0.0..20.0)).collect();
        spec.with_space(Space::HilbertSplit { spectrum })
    } else {
        spec.with_norm(norm)
    };
    if beta_rate.is_some() {
        let f = forcing_for(&mut rng, &beta_e, n, norm);
        spec = spec.with_forcing(f);
    }
    spec
}

pub struct SoundnessRun {
    pub certified: usize,
    pub attempts: usize,
    pub violations: Vec<String>,
    pub max_ratio: f64,
}

pub fn check_one(id: TheoremId, seed: u64) -> Option<(Certificate, EnvelopeReport)> {
    check_one_with(id, seed, Exec::Sequential)
}

pub fn check_one_with(id: TheoremId, seed: u64, exec: Exec) -> Option<(Certificate, EnvelopeReport)> {
    let spec = random_spec(id, seed);
    let table = propagate(&spec.b, spec.t_max, TOL, spec.norm()).ok()?;
    let cert = Analysis::new(&spec, &table, CertOptions::default().with_exec(exec)).check(id);
    if !cert.is_certified() {
        return None;
    }
    let opts = SimOptions {
        intervals: OUTPUT_INTERVALS,
        ..SimOptions::new(TOL)
    };
    let traj = integrate_with(&spec, &spec.u0, |t, out| spec.eval_forcing(t, out), spec.t_max, &opts);
    let report = verify_envelope(&traj, &cert, &table).ok()?;
    Some((cert, report))
}

/// Draws specs for `id` until `want` certify (or `max_attempts` run out)
/// and checks each trajectory against its envelope.
pub fn soundness(id: TheoremId, want: usize, max_attempts: usize, ratio_tol: f64, base_seed: u64) -> SoundnessRun {
    let mut run = SoundnessRun {
        certified: 0,
        attempts: 0,
        violations: Vec::new(),
        max_ratio: 0.0,
    };
    while run.certified < want && run.attempts < max_attempts {
        let seed = base_seed.wrapping_mul(1_000_003).wrapping_add(run.attempts as u64);
        run.attempts += 1;
        let Some((_, rep)) = check_one(id, seed) else { continue };
        run.certified += 1;
        run.max_ratio = run.max_ratio.max(rep.max_ratio);
        if rep.blew_up || !(rep.max_ratio <= 1.0 + ratio_tol) {
            run.violations.push(format!("seed {seed}: ratio {:e} at t = {}", rep.max_ratio, rep.argmax_t));
        }
    }
    run
}
