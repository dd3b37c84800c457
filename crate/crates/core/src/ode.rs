//! Dormand–Prince 5(4) stepper with continuous output.
//!
//! Systems may expose a constant diagonal linear part `a`. The stepper then
//! advances the integrating-factor form `v = e^{-a(s - t_n)} u` within each
//! step, which treats the diagonal exactly and keeps the embedded error
//! estimate of the pair for the remainder.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum step count {max_steps} reached at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Right-hand side, excluding the diagonal linear part if one is exposed.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Constant diagonal linear part, integrated exactly.
    fn diagonal_linear(&self) -> Option<&[f64]> {
        None
    }

    /// Per-component error weights; the step is accepted when the RMS of
    /// `err_i / scale_i` is at most one.
    fn error_scale(&self, y_old: &[f64], y_new: &[f64], tol: f64, scale: &mut [f64]) {
        let m = y_old
            .iter()
            .chain(y_new.iter())
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        let s = tol * m.max(1e-300);
        scale.iter_mut().for_each(|x| *x = s);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepperOptions {
    pub tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Disable adaptivity and take steps of exactly this size.
    pub fixed_step: Option<f64>,
}

impl StepperOptions {
    pub fn new(tol: f64) -> Self {
        StepperOptions {
            tol,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
            fixed_step: None,
        }
    }
}

/// Coefficients of one step's continuous extension.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    pub r: [Vec<f64>; 5],
}

impl DenseSegment {
    /// Continuous extension at `t` (within `[t0, t0 + h]`), fourth order.
    pub fn eval(&self, t: f64, lin: Option<&[f64]>, out: &mut [f64]) {
        let theta = if self.h > 0.0 { (t - self.t0) / self.h } else { 0.0 };
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
        if let Some(a) = lin {
            let s = theta * self.h;
            for i in 0..out.len() {
                out[i] *= (a[i] * s).exp();
            }
        }
    }
}

pub struct StepInfo<'a> {
    pub t_old: f64,
    pub t_new: f64,
    pub y_new: &'a [f64],
    pub dense: &'a DenseSegment,
}

pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub t_final: f64,
    pub stopped_early: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Work {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    utmp: Vec<f64>,
    err: Vec<f64>,
    scale: Vec<f64>,
}

/// Evaluates the stage derivative at stage offset `c·h`, applying the
/// integrating factor when a diagonal linear part is present.
fn stage<S: OdeSystem + ?Sized>(
    sys: &S,
    lin: Option<&[f64]>,
    t: f64,
    ch: f64,
    v: &[f64],
    utmp: &mut [f64],
    out: &mut [f64],
) {
    match lin {
        None => sys.rhs(t + ch, v, out),
        Some(a) => {
            for i in 0..v.len() {
                utmp[i] = (a[i] * ch).exp() * v[i];
            }
            sys.rhs(t + ch, utmp, out);
            for i in 0..v.len() {
                out[i] *= (-a[i] * ch).exp();
            }
        }
    }
}

fn rms(err: &[f64], scale: &[f64]) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(scale)
        .map(|(e, s)| {
            let r = e / s;
            r * r
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

/// Integrates from `t0` to `t_end`, reporting every accepted step to
/// `observer`. Returns early (without error) when the observer says stop.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &StepperOptions,
    mut observer: F,
) -> Result<SolveStats, OdeError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(&StepInfo<'_>) -> Control,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state dimension");
    let lin = sys.diagonal_linear();
    let mut w = Work {
        k: std::array::from_fn(|_| vec![0.0; n]),
        ytmp: vec![0.0; n],
        ynew: vec![0.0; n],
        utmp: vec![0.0; n],
        err: vec![0.0; n],
        scale: vec![0.0; n],
    };
    let mut stats = SolveStats {
        t_final: t0,
        ..Default::default()
    };
    let mut y = y0.to_vec();
    let mut t = t0;
    if t_end <= t0 {
        return Ok(stats);
    }

    sys.rhs(t, &y, &mut w.k[0]);
    stats.rhs_evals += 1;

    let mut h = match opts.fixed_step {
        Some(h) => h,
        None => initial_step(sys, t, &y, t_end - t0, opts, &mut w, &mut stats),
    };
    let mut errold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut dense = DenseSegment {
        t0,
        h: 0.0,
        r: std::array::from_fn(|_| vec![0.0; n]),
    };

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        let remaining = t_end - t;
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t, h });
        }

        // stages
        for i in 0..n {
            w.ytmp[i] = y[i] + h * A21 * w.k[0][i];
        }
        stage(sys, lin, t, C2 * h, &w.ytmp, &mut w.utmp, &mut w.k[1]);
        for i in 0..n {
            w.ytmp[i] = y[i] + h * (A31 * w.k[0][i] + A32 * w.k[1][i]);
        }
        stage(sys, lin, t, C3 * h, &w.ytmp, &mut w.utmp, &mut w.k[2]);
        for i in 0..n {
            w.ytmp[i] = y[i] + h * (A41 * w.k[0][i] + A42 * w.k[1][i] + A43 * w.k[2][i]);
        }
        stage(sys, lin, t, C4 * h, &w.ytmp, &mut w.utmp, &mut w.k[3]);
        for i in 0..n {
            w.ytmp[i] = y[i]
                + h * (A51 * w.k[0][i] + A52 * w.k[1][i] + A53 * w.k[2][i] + A54 * w.k[3][i]);
        }
        stage(sys, lin, t, C5 * h, &w.ytmp, &mut w.utmp, &mut w.k[4]);
        for i in 0..n {
            w.ytmp[i] = y[i]
                + h * (A61 * w.k[0][i]
                    + A62 * w.k[1][i]
                    + A63 * w.k[2][i]
                    + A64 * w.k[3][i]
                    + A65 * w.k[4][i]);
        }
        stage(sys, lin, t, h, &w.ytmp, &mut w.utmp, &mut w.k[5]);
        // ynew holds the fifth-order solution in step coordinates
        for i in 0..n {
            w.ynew[i] = y[i]
                + h * (A71 * w.k[0][i]
                    + A73 * w.k[2][i]
                    + A74 * w.k[3][i]
                    + A75 * w.k[4][i]
                    + A76 * w.k[5][i]);
        }
        stage(sys, lin, t, h, &w.ynew, &mut w.utmp, &mut w.k[6]);
        stats.rhs_evals += 6;

        for i in 0..n {
            w.err[i] = h
                * (E1 * w.k[0][i]
                    + E3 * w.k[2][i]
                    + E4 * w.k[3][i]
                    + E5 * w.k[4][i]
                    + E6 * w.k[5][i]
                    + E7 * w.k[6][i]);
        }
        // map to the state coordinates at t + h
        let mut y_next = w.ynew.clone();
        if let Some(a) = lin {
            for i in 0..n {
                let g = (a[i] * h).exp();
                y_next[i] *= g;
                w.err[i] *= g;
            }
        }
        if y_next.iter().any(|x| !x.is_finite()) {
            if opts.fixed_step.is_some() {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.25;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        let err = if opts.fixed_step.is_some() {
            0.0
        } else {
            sys.error_scale(&y, &y_next, opts.tol, &mut w.scale);
            rms(&w.err, &w.scale)
        };

        if err <= 1.0 {
            // continuous extension, in step coordinates
            for i in 0..n {
                let ydiff = w.ynew[i] - y[i];
                let bspl = h * w.k[0][i] - ydiff;
                dense.r[0][i] = y[i];
                dense.r[1][i] = ydiff;
                dense.r[2][i] = bspl;
                dense.r[3][i] = ydiff - h * w.k[6][i] - bspl;
                dense.r[4][i] = h
                    * (D1 * w.k[0][i]
                        + D3 * w.k[2][i]
                        + D4 * w.k[3][i]
                        + D5 * w.k[4][i]
                        + D6 * w.k[5][i]
                        + D7 * w.k[6][i]);
            }
            dense.t0 = t;
            dense.h = h;
            let t_new = if last { t_end } else { t + h };
            stats.accepted += 1;
            y.copy_from_slice(&y_next);
            // FSAL: k7 is the derivative at t + h in step coordinates
            match lin {
                None => {
                    let k6 = std::mem::take(&mut w.k[6]);
                    w.k[6] = std::mem::replace(&mut w.k[0], k6);
                }
                Some(_) => {
                    sys.rhs(t_new, &y, &mut w.k[0]);
                    stats.rhs_evals += 1;
                }
            }
            let info = StepInfo {
                t_old: t,
                t_new,
                y_new: &y,
                dense: &dense,
            };
            let ctl = observer(&info);
            t = t_new;
            stats.t_final = t;
            if let Control::Stop = ctl {
                stats.stopped_early = true;
                return Ok(stats);
            }
            if last {
                return Ok(stats);
            }
            if opts.fixed_step.is_none() {
                let fac = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-0.2 + 0.75 * 0.04) * errold.powf(0.04)).clamp(0.2, 10.0)
                };
                let fac = if last_rejected { fac.min(1.0) } else { fac };
                h = (h * fac).min(opts.h_max);
                errold = err.max(1e-4);
            }
            last_rejected = false;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    span: f64,
    opts: &StepperOptions,
    w: &mut Work,
    stats: &mut SolveStats,
) -> f64 {
    let n = y.len();
    sys.error_scale(y, y, opts.tol, &mut w.scale);
    let d0 = rms(y, &w.scale);
    let d1 = rms(&w.k[0], &w.scale);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(opts.h_max);
    for i in 0..n {
        w.ytmp[i] = y[i] + h0 * w.k[0][i];
    }
    sys.rhs(t + h0, &w.ytmp, &mut w.k[1]);
    stats.rhs_evals += 1;
    for i in 0..n {
        w.err[i] = (w.k[1][i] - w.k[0][i]) / h0;
    }
    let d2 = rms(&w.err, &w.scale);
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1).min(span).min(opts.h_max);
    if let Some(a) = sys.diagonal_linear() {
        // keep the first step inside the range where e^{a h} is representable
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if amax > 0.0 {
            h = h.min(1.0 / amax);
        }
    }
    h
}
