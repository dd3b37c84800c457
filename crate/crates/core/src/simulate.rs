//! Direct integration of the nonlinear problem, envelope verification and
//! sampled Lyapunov-stability checks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::certificates::{Certificate, Envelope, ForcingBudget};
use crate::coeffs::ProblemSpec;
use crate::linalg::{vec_norm, NormKind};
use crate::ode::{self, Control, OdeSystem, StepperOptions};
use crate::par::{self, Exec};
use crate::propagator::PropagatorTable;
use crate::report::{CsvOut, ReportError};

pub const ESCAPE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    pub u: Vec<f64>,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    Completed,
    BlewUp { t_escape: f64 },
    SolverFailure { t: f64, message: String },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolverMeta {
    pub tol: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub status: TrajectoryStatus,
    pub meta: SolverMeta,
}

impl Trajectory {
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.norm).fold(0.0, f64::max)
    }

    pub fn blew_up(&self) -> bool {
        matches!(self.status, TrajectoryStatus::BlewUp { .. })
    }

    /// Columns `t, u_1..u_n, norm_u`, then one `envelope_<name>` column
    /// per entry of `envelopes` (sampled at the same times).
    pub fn write_csv<W: Write>(&self, w: W, envelopes: &[(String, Vec<f64>)]) -> Result<(), ReportError> {
        let n = self.samples.first().map_or(0, |s| s.u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("u_{i}")));
        header.push("norm_u".into());
        header.extend(envelopes.iter().map(|(name, _)| format!("envelope_{name}")));
        let mut out = CsvOut::new(w, "trajectory", &header)?;
        let mut row = Vec::with_capacity(header.len());
        for (i, s) in self.samples.iter().enumerate() {
            row.clear();
            row.push(s.t);
            row.extend_from_slice(&s.u);
            row.push(s.norm);
            row.extend(envelopes.iter().map(|(_, env)| env.get(i).copied().unwrap_or(f64::NAN)));
            out.row(&row)?;
        }
        out.finish()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub tol: f64,
    /// Uniform output intervals on `[0, T_max]`.
    pub intervals: usize,
    pub escape: f64,
}

impl SimOptions {
    pub fn new(tol: f64) -> Self {
        SimOptions {
            tol,
            intervals: 1000,
            escape: ESCAPE_THRESHOLD,
        }
    }
}

struct Nonlinear<'a, F> {
    spec: &'a ProblemSpec,
    /// Nonzero entries of `B` as `(row, column, b_ij)`.
    b: Vec<(usize, usize, &'a crate::coeffs::ScalarFunction)>,
    forcing: F,
    a: Option<Vec<f64>>,
    scratch: std::cell::RefCell<Vec<f64>>,
}

impl<F: Fn(f64, &mut [f64])> OdeSystem for Nonlinear<'_, F> {
    fn dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let spec = self.spec;
        let m = spec.space.multiplicity();
        let mut g = self.scratch.borrow_mut();
        // B acts on the block index: (B ⊗ I) y.
        dy.iter_mut().for_each(|d| *d = 0.0);
        for &(i, j, b) in &self.b {
            let v = b.eval(t);
            for k in 0..m {
                dy[i * m + k] += v * y[j * m + k];
            }
        }
        spec.eval_nonlinearity(t, y, &mut g);
        for (d, x) in dy.iter_mut().zip(g.iter()) {
            *d += x;
        }
        (self.forcing)(t, &mut g);
        for (d, x) in dy.iter_mut().zip(g.iter()) {
            *d += x;
        }
    }

    fn diagonal_linear(&self) -> Option<&[f64]> {
        self.a.as_deref()
    }

    fn error_scale(&self, y_old: &[f64], y_new: &[f64], tol: f64, scale: &mut [f64]) {
        let m = y_old
            .iter()
            .chain(y_new.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        let s = tol * m.max(1e-12);
        scale.iter_mut().for_each(|x| *x = s);
    }
}

/// Integrates the spec's own problem on `[0, T_max]`.
pub fn integrate(spec: &ProblemSpec, t_max: f64, tol: f64) -> Trajectory {
    integrate_with(spec, &spec.u0, |t, out| spec.eval_forcing(t, out), t_max, &SimOptions::new(tol))
}

/// Integrates from `u0` with an arbitrary forcing.
pub fn integrate_with<F>(spec: &ProblemSpec, u0: &[f64], forcing: F, t_max: f64, opts: &SimOptions) -> Trajectory
where
    F: Fn(f64, &mut [f64]),
{
    let dim = spec.state_dim();
    let norm = spec.norm();
    let n = spec.b.dim();
    let b = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, spec.b.entry(i, j)))
        .filter(|(_, _, f)| !f.is_identically_zero())
        .collect();
    let sys = Nonlinear {
        spec,
        b,
        forcing,
        a: spec.a_diagonal(),
        scratch: std::cell::RefCell::new(vec![0.0; dim]),
    };
    let mut stepper = StepperOptions::new(opts.tol);
    stepper.h_max = t_max / 200.0;
    let n_out = opts.intervals.max(1);
    let out_t = |k: usize| t_max * k as f64 / n_out as f64;
    let mut samples = vec![Sample {
        t: 0.0,
        u: u0.to_vec(),
        norm: vec_norm(u0, norm),
    }];
    let mut next = 1usize;
    let mut status = TrajectoryStatus::Completed;
    let mut buf = vec![0.0; dim];
    let lin = sys.a.clone();
    let result = ode::integrate(&sys, 0.0, u0, t_max, &stepper, |info| {
        while next <= n_out && out_t(next) <= info.t_new {
            let t = out_t(next);
            if t == info.t_new {
                buf.copy_from_slice(info.y_new);
            } else {
                info.dense.eval(t, lin.as_deref(), &mut buf);
            }
            samples.push(Sample {
                t,
                u: buf.clone(),
                norm: vec_norm(&buf, norm),
            });
            next += 1;
        }
        let nrm = vec_norm(info.y_new, norm);
        if !(nrm < opts.escape) {
            if samples.last().is_some_and(|s| s.t < info.t_new) {
                samples.push(Sample {
                    t: info.t_new,
                    u: info.y_new.to_vec(),
                    norm: nrm,
                });
            }
            status = TrajectoryStatus::BlewUp { t_escape: info.t_new };
            return Control::Stop;
        }
        Control::Continue
    });
    let meta = |st: &ode::SolveStats| SolverMeta {
        tol: opts.tol,
        accepted: st.accepted,
        rejected: st.rejected,
        rhs_evals: st.rhs_evals,
    };
    match result {
        Ok(st) => Trajectory {
            samples,
            status,
            meta: meta(&st),
        },
        Err(e) => {
            let t = match e {
                ode::OdeError::StepUnderflow { t, .. } | ode::OdeError::MaxSteps { t, .. } | ode::OdeError::NonFinite { t } => t,
            };
            Trajectory {
                samples,
                status: TrajectoryStatus::SolverFailure { t, message: e.to_string() },
                meta: SolverMeta {
                    tol: opts.tol,
                    accepted: 0,
                    rejected: 0,
                    rhs_evals: 0,
                },
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("certificate {0} is not certified")]
    NotCertified(String),
    #[error("certificate {0} licenses no envelope")]
    NoEnvelope(String),
    #[error(transparent)]
    Quad(#[from] crate::quad::QuadError),
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub theorem: String,
    /// `max_i ‖u(tᵢ)‖ / envelope(tᵢ)`
    pub max_ratio: f64,
    pub argmax_t: f64,
    pub samples: usize,
    pub pass: bool,
    /// A certified trajectory that escaped: always a soundness failure.
    pub blew_up: bool,
    #[serde(skip)]
    pub envelope: Vec<f64>,
}

/// Compares a trajectory with the envelope of a certified certificate;
/// passes when the ratio is at most `1 + 10·tol`.
pub fn verify_envelope(traj: &Trajectory, cert: &Certificate, table: &PropagatorTable) -> Result<EnvelopeReport, VerifyError> {
    let name = cert.theorem.to_string();
    if !cert.is_certified() {
        return Err(VerifyError::NotCertified(name));
    }
    let env = cert.envelope.as_ref().ok_or_else(|| VerifyError::NoEnvelope(name.clone()))?;
    let t_max = table.t_max();
    let mut values = Vec::with_capacity(traj.samples.len());
    let mut worst = (0.0f64, 0.0);
    for s in &traj.samples {
        let e = env.eval(table, s.t.min(t_max))?;
        values.push(e);
        let r = if s.norm == 0.0 {
            0.0
        } else if e > 0.0 {
            s.norm / e
        } else {
            f64::INFINITY
        };
        if r > worst.0 || r.is_nan() {
            worst = (r, s.t);
        }
    }
    let blew_up = traj.blew_up();
    Ok(EnvelopeReport {
        theorem: name,
        max_ratio: worst.0,
        argmax_t: worst.1,
        samples: traj.samples.len(),
        pass: !blew_up && worst.0 <= 1.0 + 10.0 * traj.meta.tol,
        blew_up,
        envelope: values,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LyapunovOptions {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// Multiplies the certified initial-data radius (negative controls use > 1).
    pub delta_scale: f64,
    /// Multiplies the certified forcing budget.
    pub budget_scale: f64,
    pub intervals: usize,
    pub exec: Exec,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            trials: 50,
            seed: 0,
            tol: 1e-8,
            delta_scale: 1.0,
            budget_scale: 1.0,
            intervals: 400,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    Sinusoid,
    Decaying,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: usize,
    pub u0_norm: f64,
    pub forcing: ForcingKind,
    pub sup_norm: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// Always true: a finite sample over a forcing family, not a proof.
    pub sampled: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: Vec<Trial>,
    pub violations: usize,
    /// `max sup_t ‖u(t)‖ / ε` over all trials.
    pub max_ratio: f64,
}

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("certificate {0} is not a certified uniform-bound certificate")]
    Unsuitable(String),
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize, norm: NormKind) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = vec_norm(&v, norm);
        if s > 1e-3 {
            return v.into_iter().map(|x| x / s).collect();
        }
    }
}

/// Random initial data inside `δ` and random admissible forcings
/// `q·budget(t)·s(t)·dir` with `|s| ≤ 1` (a shifted sinusoid or `e^{−t}`),
/// each checked against `sup_t ‖u(t)‖ < ε`. Trial `i` uses stream `i` of
/// the seeded generator, so results do not depend on scheduling.
pub fn lyapunov_sample(spec: &ProblemSpec, table: &PropagatorTable, cert: &Certificate, opts: &LyapunovOptions) -> Result<StabilityReport, LyapunovError> {
    let (Some(Envelope::Uniform { bound: eps }), Some(delta), Some(budget)) = (&cert.envelope, cert.delta, cert.budget) else {
        return Err(LyapunovError::Unsuitable(cert.theorem.to_string()));
    };
    if !cert.is_certified() {
        return Err(LyapunovError::Unsuitable(cert.theorem.to_string()));
    }
    let eps = *eps;
    let n = spec.state_dim();
    let norm = spec.norm();
    let t_max = spec.t_max;
    let sim = SimOptions {
        tol: opts.tol,
        intervals: opts.intervals,
        escape: ESCAPE_THRESHOLD,
    };
    let trials = par::map(opts.exec, opts.trials, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let r: f64 = rng.random();
        let u0: Vec<f64> = random_unit(&mut rng, n, norm)
            .into_iter()
            .map(|x| x * r * delta * opts.delta_scale)
            .collect();
        let dir = random_unit(&mut rng, n, norm);
        let q: f64 = rng.random::<f64>() * opts.budget_scale;
        let kind = if rng.random::<bool>() { ForcingKind::Sinusoid } else { ForcingKind::Decaying };
        let omega = rng.random_range(0.1..5.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let budget_at = |t: f64| match budget {
            ForcingBudget::Proportional { .. } => budget.at(spec.alpha.eval(t), 1.0),
            ForcingBudget::PropagatorScaled { .. } => budget.at(spec.alpha.eval(t), table.u_norm_at(t.min(table.t_max()))),
        };
        let forcing = |t: f64, out: &mut [f64]| {
            let s = match kind {
                ForcingKind::Sinusoid => (omega * t + phase).sin(),
                ForcingKind::Decaying => (-t).exp(),
            };
            let c = q * budget_at(t) * s;
            for (o, d) in out.iter_mut().zip(&dir) {
                *o = c * d;
            }
        };
        let traj = integrate_with(spec, &u0, forcing, t_max, &sim);
        let sup = traj.sup_norm();
        Trial {
            index: i,
            u0_norm: vec_norm(&u0, norm),
            forcing: kind,
            sup_norm: sup,
            violated: traj.blew_up() || !(sup < eps),
        }
    });
    let violations = trials.iter().filter(|t| t.violated).count();
    let max_ratio = trials.iter().map(|t| t.sup_norm / eps).fold(0.0, f64::max);
    Ok(StabilityReport {
        sampled: true,
        epsilon: eps,
        delta,
        trials,
        violations,
        max_ratio,
    })
}
