//! Weighted integrals against the propagator, their sup over time, and
//! improper integrals with explicit tail accounting.

pub mod gk;
mod tail;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::coeffs::{DecayClass, ScalarFunction};
use crate::linalg::operator_norm_unchecked;
use crate::par::{self, Exec};
use crate::propagator::PropagatorTable;

pub use gk::{QuadOptions, QuadResult};
pub use tail::{fit_decay, fit_pair_kernel, DecayFit, PairFit, GROWTH_TOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {error:e})")]
    NoConvergence { a: f64, b: f64, error: f64 },
    #[error("non-finite integrand on [{a}, {b}]")]
    NonFinite { a: f64, b: f64 },
    #[error("time {t} outside [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
}

/// How an infinite-horizon quantity was obtained from the finite window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailStatus {
    ExactClosedForm,
    TailBounded,
    Truncated,
}

impl TailStatus {
    pub fn worst(self, other: TailStatus) -> TailStatus {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TailStatus::ExactClosedForm => "exact",
            TailStatus::TailBounded => "tail-bounded",
            TailStatus::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `‖U(t)U⁻¹(ξ)‖`
    TwoParam,
    /// `‖U(t)‖·‖U⁻¹(ξ)‖`
    Split,
    /// `1`
    Plain,
}

/// Evaluates `ξ ↦ k(t, ξ)` for a fixed `t`.
pub(crate) struct KernelAt<'a> {
    table: &'a PropagatorTable,
    kernel: Kernel,
    ut: DMatrix<f64>,
    ut_norm: f64,
    v: DMatrix<f64>,
    prod: DMatrix<f64>,
}

impl<'a> KernelAt<'a> {
    pub(crate) fn new(table: &'a PropagatorTable, kernel: Kernel, t: f64) -> Self {
        let n = table.dim();
        let mut ut = DMatrix::zeros(n, n);
        table.u_into(t, &mut ut);
        let ut_norm = operator_norm_unchecked(&ut, table.norm_kind());
        KernelAt {
            table,
            kernel,
            ut,
            ut_norm,
            v: DMatrix::zeros(n, n),
            prod: DMatrix::zeros(n, n),
        }
    }

    pub(crate) fn eval(&mut self, xi: f64) -> f64 {
        match self.kernel {
            Kernel::Plain => 1.0,
            Kernel::Split => {
                self.table.uinv_into(xi, &mut self.v);
                self.ut_norm * operator_norm_unchecked(&self.v, self.table.norm_kind())
            }
            Kernel::TwoParam => {
                self.table.uinv_into(xi, &mut self.v);
                self.ut.mul_to(&self.v, &mut self.prod);
                operator_norm_unchecked(&self.prod, self.table.norm_kind())
            }
        }
    }
}

fn check_range(table: &PropagatorTable, t: f64) -> Result<f64, QuadError> {
    let t_max = table.t_max();
    if !(t >= 0.0 && t <= t_max * (1.0 + 1e-12)) {
        return Err(QuadError::OutOfRange { t, t_max });
    }
    Ok(t.min(t_max))
}

/// `∫_a^b g` split into pieces of length at most 2 so that oscillatory
/// kernels are resolved before the error estimate is trusted.
pub(crate) fn integrate_pieces<F: FnMut(f64) -> f64>(mut g: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64, QuadError> {
    if b <= a {
        return Ok(0.0);
    }
    let pieces = ((b - a) / 2.0).ceil().max(1.0) as usize;
    let h = (b - a) / pieces as f64;
    let mut breaks: Vec<f64> = (0..pieces).map(|k| a + h * k as f64).collect();
    breaks.push(b);
    Ok(gk::integrate_partition(&mut g, &breaks, opts)?.value)
}

/// `∫₀ᵗ k(t, ξ) w(ξ) dξ` for an arbitrary weight closure.
pub fn weighted_integral_fn<W>(table: &PropagatorTable, weight: W, t: f64, kernel: Kernel) -> Result<f64, QuadError>
where
    W: Fn(f64) -> f64,
{
    let t = check_range(table, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let mut k = KernelAt::new(table, kernel, t);
    integrate_pieces(
        |xi| {
            let w = weight(xi);
            if w == 0.0 {
                0.0
            } else {
                k.eval(xi) * w
            }
        },
        0.0,
        t,
        &QuadOptions::default(),
    )
}

/// `∫₀ᵗ k(t, ξ) w(ξ) dξ`.
pub fn weighted_integral(table: &PropagatorTable, weight: &ScalarFunction, t: f64, kernel: Kernel) -> Result<f64, QuadError> {
    if weight.is_identically_zero() {
        check_range(table, t)?;
        return Ok(0.0);
    }
    weighted_integral_fn(table, |x| weight.eval(x), t, kernel)
}

#[derive(Debug, Clone, Copy)]
pub struct SupOptions {
    /// Initial number of grid intervals.
    pub min_nodes: usize,
    /// Stop doubling once the sup changes by less than this (relative).
    pub sup_tol: f64,
    pub max_nodes: usize,
    pub exec: Exec,
}

impl Default for SupOptions {
    fn default() -> Self {
        SupOptions {
            min_nodes: 400,
            sup_tol: 1e-6,
            max_nodes: 6400,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupIntegralResult {
    /// Sup over `t ≥ 0`: the window sup, raised to the tail bound when one
    /// is available.
    pub value: f64,
    pub argmax_t: f64,
    pub window_sup: f64,
    pub tail_bound: Option<f64>,
    pub tail_status: TailStatus,
    pub converged: bool,
    pub fit: Option<PairFit>,
    #[serde(skip)]
    pub per_t_times: Vec<f64>,
    #[serde(skip)]
    pub per_t: Vec<f64>,
}

const GOLDEN_ITERS: usize = 40;

fn golden_max<F: FnMut(f64) -> Result<f64, QuadError>>(mut f: F, mut a: f64, mut b: f64) -> Result<(f64, f64), QuadError> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if (b - a) <= 1e-10 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Max of a sampled curve refined by golden-section search around its
/// three largest interior local maxima.
fn refined_max<F>(times: &[f64], vals: &[f64], mut f: F) -> Result<(f64, f64), QuadError>
where
    F: FnMut(f64) -> Result<f64, QuadError>,
{
    let mut best = (times[0], vals[0]);
    for (t, v) in times.iter().zip(vals) {
        if *v > best.1 {
            best = (*t, *v);
        }
    }
    let mut peaks: Vec<usize> = (1..vals.len().saturating_sub(1))
        .filter(|&i| vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] && vals[i] > 0.0)
        .collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    for &i in peaks.iter().take(3) {
        let (t, v) = golden_max(&mut f, times[i - 1], times[i + 1])?;
        if v > best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

fn sweep<F>(exec: Exec, times: &[f64], f: F) -> Result<Vec<f64>, QuadError>
where
    F: Fn(f64) -> Result<f64, QuadError> + Sync + Send,
{
    par::try_map(exec, times.len(), |i| f(times[i]))
}

/// `∫₀^∞ w` beyond the window and `sup_{t ≥ T} w`, from the weight's tail
/// class.
fn tail_info(weight: &ScalarFunction, t_max: f64) -> (Option<f64>, Option<f64>) {
    (weight.tail_sup(t_max), weight.tail_integral(t_max))
}

/// `(w(T), r)` with `w(ξ) ≤ w(T) e^{−r(ξ−T)}` beyond `T`.
fn exp_tail(weight: &ScalarFunction, t_max: f64) -> Option<(f64, f64)> {
    match weight.decay() {
        DecayClass::Exponential { rate } if weight.constant_value().is_none() => Some((weight.eval(t_max).abs(), rate)),
        _ => None,
    }
}

/// `sup_{t ≥ 0} ∫₀ᵗ k(t, ξ) w(ξ) dξ`.
///
/// The window part is evaluated on a uniform grid that is doubled until the
/// refined maximum settles. Beyond `T_max` the kernel is bounded by a fitted
/// `K e^{−μ(t−ξ)}` and the weight by its tail class; when either is missing
/// the result is marked truncated and holds the window sup only.
pub fn sup_integral(table: &PropagatorTable, weight: &ScalarFunction, kernel: Kernel, opts: &SupOptions) -> Result<SupIntegralResult, QuadError> {
    let t_max = table.t_max();
    if weight.is_identically_zero() {
        return Ok(SupIntegralResult {
            value: 0.0,
            argmax_t: 0.0,
            window_sup: 0.0,
            tail_bound: Some(0.0),
            tail_status: TailStatus::ExactClosedForm,
            converged: true,
            fit: None,
            per_t_times: vec![0.0, t_max],
            per_t: vec![0.0, 0.0],
        });
    }
    let eval = |t: f64| weighted_integral(table, weight, t, kernel);

    let mut n = opts.min_nodes.max(2);
    let mut times: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let mut vals = sweep(opts.exec, &times, eval)?;
    let mut best = refined_max(&times, &vals, eval)?;
    let mut converged = false;
    while 2 * n <= opts.max_nodes {
        let mids: Vec<f64> = (0..n).map(|k| t_max * (2 * k + 1) as f64 / (2 * n) as f64).collect();
        let mid_vals = sweep(opts.exec, &mids, eval)?;
        let mut t2 = Vec::with_capacity(2 * n + 1);
        let mut v2 = Vec::with_capacity(2 * n + 1);
        for k in 0..n {
            t2.push(times[k]);
            v2.push(vals[k]);
            t2.push(mids[k]);
            v2.push(mid_vals[k]);
        }
        t2.push(times[n]);
        v2.push(vals[n]);
        times = t2;
        vals = v2;
        n *= 2;
        let next = refined_max(&times, &vals, eval)?;
        let change = (next.1 - best.1).abs();
        best = if next.1 >= best.1 { next } else { best };
        if change <= opts.sup_tol * best.1.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let (w_sup, w_int) = tail_info(weight, t_max);
    let (tail_bound, status, fit) = if kernel == Kernel::Plain {
        // ∫₀ᵗ w is nondecreasing: its sup is the full improper integral
        match w_int {
            Some(rest) => (Some(vals[vals.len() - 1] + rest), TailStatus::TailBounded, None),
            None => (None, TailStatus::Truncated, None),
        }
    } else {
        let mut fit = fit_pair_kernel(table, kernel, opts.exec);
        let bound = if fit.stable {
            fit.tail_bound(
                t_max,
                |mu, lambda| {
                    integrate_pieces(|x| (-mu * (t_max - x) + lambda * x).exp() * weight.eval(x), 0.0, t_max, &QuadOptions::default())
                        .unwrap_or(f64::INFINITY)
                },
                w_sup,
                w_int,
                exp_tail(weight, t_max),
            )
        } else {
            None
        };
        match bound {
            Some(b) => (Some(b), TailStatus::TailBounded, Some(fit)),
            None => (None, TailStatus::Truncated, Some(fit)),
        }
    };
    let value = match tail_bound {
        Some(b) => best.1.max(b),
        None => best.1,
    };
    Ok(SupIntegralResult {
        value,
        argmax_t: best.0,
        window_sup: best.1,
        tail_bound,
        tail_status: status,
        converged,
        fit,
        per_t_times: times,
        per_t: vals,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImproperResult {
    pub value: f64,
    pub window: f64,
    pub tail: Option<f64>,
    pub tail_status: TailStatus,
    pub fit: Option<DecayFit>,
}

/// `∫₀^∞ α(ξ) ‖U⁻¹(ξ)‖ ‖U(ξ)‖^p dξ`: the window integral plus a tail from
/// a fitted `‖U⁻¹‖‖U‖^p ≤ G e^{−νξ}` combined with the tail class of `α`.
pub fn improper_integral(table: &PropagatorTable, alpha: &ScalarFunction, p: f64, exec: Exec) -> Result<ImproperResult, QuadError> {
    let h = |x: f64| table.uinv_norm_at(x) * table.u_norm_at(x).powf(p);
    improper_product(table, alpha, h, exec)
}

/// `∫₀^∞ α(ξ) h(ξ) dξ` for a nonnegative propagator functional `h`.
pub fn improper_product<H>(table: &PropagatorTable, alpha: &ScalarFunction, h: H, exec: Exec) -> Result<ImproperResult, QuadError>
where
    H: Fn(f64) -> f64 + Sync,
{
    let t_max = table.t_max();
    if alpha.is_identically_zero() {
        return Ok(ImproperResult {
            value: 0.0,
            window: 0.0,
            tail: Some(0.0),
            tail_status: TailStatus::ExactClosedForm,
            fit: None,
        });
    }
    let window = integrate_pieces(|x| alpha.eval(x) * h(x), 0.0, t_max, &QuadOptions::default())?;
    let mut fit = fit_decay(t_max, &h, exec);
    let (w_sup, w_int) = tail_info(alpha, t_max);
    let tail = if fit.stable { fit.tail_bound(t_max, w_sup, w_int, exp_tail(alpha, t_max)) } else { None };
    Ok(match tail {
        Some(tl) => ImproperResult {
            value: window + tl,
            window,
            tail: Some(tl),
            tail_status: TailStatus::TailBounded,
            fit: Some(fit),
        },
        None => ImproperResult {
            value: window,
            window,
            tail: None,
            tail_status: TailStatus::Truncated,
            fit: Some(fit),
        },
    })
}

/// Sup over `t ≥ 0` of a sampled nonnegative function of time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimeSup {
    pub value: f64,
    pub argmax_t: f64,
    pub tail_status: TailStatus,
}

/// Window sup of `g` on the table nodes and a uniform grid, refined near the
/// peak. The tail is accepted as bounded when the sup over the second half
/// of the window does not exceed the first-half sup by more than
/// [`GROWTH_TOL`].
pub fn time_sup<G: Fn(f64) -> f64>(table: &PropagatorTable, g: G) -> TimeSup {
    let t_max = table.t_max();
    let mut times: Vec<f64> = (0..=2000).map(|k| t_max * k as f64 / 2000.0).collect();
    times.extend_from_slice(table.grid());
    times.sort_by(f64::total_cmp);
    times.dedup();
    let vals: Vec<f64> = times.iter().map(|&t| g(t)).collect();
    let (t_best, v_best) = refined_max(&times, &vals, |t| Ok(g(t))).expect("infallible");
    let half = t_max / 2.0;
    let first = times
        .iter()
        .zip(&vals)
        .filter(|(t, _)| **t <= half)
        .fold(0.0f64, |m, (_, v)| m.max(*v));
    let second = times
        .iter()
        .zip(&vals)
        .filter(|(t, _)| **t > half)
        .fold(0.0f64, |m, (_, v)| m.max(*v));
    let status = if second <= first * (1.0 + GROWTH_TOL) {
        TailStatus::TailBounded
    } else {
        TailStatus::Truncated
    };
    TimeSup {
        value: v_best,
        argmax_t: t_best,
        tail_status: status,
    }
}
