//! Certificates parameterized by the kernel; the split-kernel (Hilbert)
//! variants reuse these after the dissipativity gate.

use super::{Analysis, Certificate, Envelope, ForcingBudget, LoggedCheck, SubVerdict, TheoremId};
use crate::coeffs::DecayClass;
use crate::par;
use crate::propagator::PropagatorTable;
use crate::quad::{self, Kernel, TailStatus};

/// Uniform grid plus table nodes, used for pointwise hypotheses.
pub(super) fn check_grid(table: &PropagatorTable, n: usize) -> Vec<f64> {
    let t_max = table.t_max();
    let mut g: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    g.extend_from_slice(table.grid());
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Largest `ε` with `ε^{p−1}·M` at 90% of the admissible `1/4`.
fn auto_epsilon(m: f64, p: f64) -> f64 {
    if m > 0.0 {
        (0.9 / (4.0 * m)).powf(1.0 / (p - 1.0))
    } else {
        1.0
    }
}

/// `max_t (β(t) − budget(t))` over the grid.
fn budget_excess(a: &Analysis, budget: &ForcingBudget) -> f64 {
    check_grid(a.table, 1000)
        .into_iter()
        .map(|t| a.spec.beta.eval(t) - budget.at(a.spec.alpha.eval(t), a.table.u_norm_at(t)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn beyond_window(c: &mut Certificate, what: &str) {
    c.assumptions.push(format!("{what} assumed to persist beyond T_max"));
}

/// Uniform bound `‖u(t)‖ < ε` for small data and small forcing.
pub(super) fn stability(a: &Analysis, id: TheoremId, kernel: Kernel) -> Certificate {
    let p = a.spec.p;
    let mut c = Certificate::new(id);
    let sup_u = a.sup_u();
    let m = match a.m(kernel) {
        Ok(m) => m,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    c.tail(sup_u.tail_status);
    c.tail(m.tail_status);
    c.constant("supU", sup_u.value);
    c.constant("M", m.value);
    c.constant("M_window", m.window_sup);
    let eps = a.opts.epsilon.unwrap_or_else(|| auto_epsilon(m.value, p));
    c.constant("epsilon", eps);
    c.check(LoggedCheck::less("ε^(p−1)·M < 1/4", eps.powf(p - 1.0) * m.value, 0.25));

    let delta = eps.min(eps / (4.0 * sup_u.value) * (1.0 - a.opts.delta_margin));
    let factor = if m.value > 0.0 { eps / (4.0 * m.value) } else { 0.0 };
    let budget = ForcingBudget::Proportional { factor };
    c.constant("delta", delta);
    c.constant("budget_factor", factor);
    c.check(LoggedCheck::less("‖u₀‖ < δ", a.spec.u0_norm(), delta));
    c.check(LoggedCheck::at_most("β(t) ≤ ε·α(t)/(4M)", budget_excess(a, &budget), 0.0));
    beyond_window(&mut c, "the forcing budget");
    c.delta = Some(delta);
    c.budget = Some(budget);
    c.envelope = Some(Envelope::Uniform { bound: eps });
    c.finish()
}

struct PropagatorConstants {
    j: f64,
    omega: f64,
    theta: f64,
    m3: f64,
    c2: f64,
}

/// `M₃ = 1/((‖u₀‖+ω)^{1−p} − (p−1)J)`, `C₂ = M₃^{1/(p−1)} − ω`; both are
/// infinite when the denominator is not positive.
fn propagator_constants(j: f64, omega: f64, u0_norm: f64, p: f64) -> PropagatorConstants {
    let theta = if j > 0.0 {
        ((p - 1.0) * j).powf(-1.0 / (p - 1.0))
    } else {
        f64::INFINITY
    };
    let s = u0_norm + omega;
    let (m3, c2) = if s == 0.0 {
        (0.0, 0.0)
    } else {
        let d = s.powf(1.0 - p) - (p - 1.0) * j;
        if d <= 0.0 {
            return PropagatorConstants {
                j,
                omega,
                theta,
                m3: f64::INFINITY,
                c2: f64::INFINITY,
            };
        }
        let m3 = 1.0 / d;
        (m3, m3.powf(1.0 / (p - 1.0)) - omega)
    };
    PropagatorConstants { j, omega, theta, m3, c2 }
}

fn record(c: &mut Certificate, k: &PropagatorConstants) {
    c.constant("J", k.j);
    c.constant("omega", k.omega);
    c.constant("Theta", k.theta);
    c.constant("M3", k.m3);
    c.constant("C2", k.c2);
}

fn boundedness_sub_verdicts(a: &Analysis, c: &mut Certificate) {
    let sup = a.sup_u();
    let bounded = if sup.tail_status == TailStatus::Truncated {
        SubVerdict::Undetermined
    } else {
        SubVerdict::Holds
    };
    c.sub_verdicts.insert("bounded".into(), bounded);
    let decays = if a.decay().decays {
        SubVerdict::Holds
    } else {
        SubVerdict::Undetermined
    };
    c.sub_verdicts.insert("decays".into(), decays);
}

/// `‖u(t)‖ ≤ C₂‖U(t)‖`; the corollary form reports the forcing and the
/// initial-data conditions separately.
pub(super) fn propagator_envelope(a: &Analysis, id: TheoremId) -> Certificate {
    let p = a.spec.p;
    let mut c = Certificate::new(id);
    let omega = a.omega();
    if let Some(t) = omega.undefined_at {
        return Certificate::rejected(id, format!("ω undefined: β > 0 where α = 0 (t = {t})"));
    }
    let j = match a.j() {
        Ok(j) => j,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    c.tail(j.tail_status);
    c.tail(omega.tail_status);
    c.constant("J_window", j.window);
    let u0n = a.spec.u0_norm();
    let k = propagator_constants(j.value, omega.value, u0n, p);
    record(&mut c, &k);
    if id == TheoremId::C25 {
        c.check(LoggedCheck::less("ω < Θ", k.omega, k.theta));
        c.check(LoggedCheck::less("‖u₀‖ < Θ − ω", u0n, k.theta - k.omega));
    } else {
        c.check(LoggedCheck::less("ω < Θ − ‖u₀‖", k.omega, k.theta - u0n));
    }
    boundedness_sub_verdicts(a, &mut c);
    c.envelope = Some(Envelope::ScaledPropagator { c2: k.c2 });
    c.finish()
}

/// Asymptotic stability under small persistent perturbations, for
/// decaying `‖U‖`, integrable `α` and `‖U⁻¹‖‖U‖ ≤ c`.
pub(super) fn asymptotic(a: &Analysis) -> Certificate {
    let id = TheoremId::C29;
    let (spec, table) = (a.spec, a.table);
    let p = spec.p;
    let mut c = Certificate::new(id);
    let dec = a.decay();
    c.constant("U_final", dec.final_norm);
    c.constant("supU", dec.sup_norm);
    c.check(LoggedCheck::less(
        "‖U(T)‖ < threshold·sup‖U‖",
        dec.final_norm,
        a.opts.decay_threshold * dec.sup_norm,
    ));
    c.check(LoggedCheck::at_most(
        "sup‖U‖ on last tenth ≤ sup on previous tenth",
        dec.last_decile_sup,
        dec.previous_decile_sup,
    ));
    beyond_window(&mut c, "decay of ‖U(t)‖");

    let int_alpha = match a.m(Kernel::Plain) {
        Ok(m) => m,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    c.constant("int_alpha", int_alpha.value);
    if spec.alpha.constant_value().is_some_and(|v| v > 0.0) {
        c.check(LoggedCheck::flag("∫α < ∞ (α is a positive constant)", false));
    } else {
        c.tail(int_alpha.tail_status);
    }

    let measured = quad::time_sup(table, |t| table.uinv_norm_at(t) * table.u_norm_at(t));
    c.constant("c_measured", measured.value);
    let cc = match a.opts.c29 {
        Some(user) => {
            c.check(LoggedCheck::at_most("‖U⁻¹(t)‖‖U(t)‖ ≤ c", measured.value, user));
            user
        }
        None => {
            c.tail(measured.tail_status);
            measured.value
        }
    };
    c.constant("c", cc);

    // J directly, or through ‖U⁻¹‖‖U‖^p ≤ c‖U‖^{p−1} on the tail.
    let j = match a.j() {
        Ok(j) => j,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    let mut j_value = j.value;
    let mut j_status = j.tail_status;
    if j_status == TailStatus::Truncated {
        if let Some(w) = spec.alpha.tail_integral(spec.t_max) {
            j_value = j.window + cc * dec.last_decile_sup.powf(p - 1.0) * w;
            j_status = TailStatus::TailBounded;
        }
    }
    c.tail(j_status);
    let theta = if j_value > 0.0 {
        ((p - 1.0) * j_value).powf(-1.0 / (p - 1.0))
    } else {
        f64::INFINITY
    };
    let factor = if theta.is_finite() { 0.5f64.powf(p) * theta.powf(p) } else { f64::INFINITY };
    let budget = ForcingBudget::PropagatorScaled { factor, p };
    let delta = if theta.is_finite() {
        0.5 * theta * (1.0 - a.opts.delta_margin)
    } else {
        1.0
    };
    c.constant("delta", delta);
    c.constant("budget_factor", factor);
    c.check(LoggedCheck::less("‖u₀‖ < δ", spec.u0_norm(), delta));
    c.check(LoggedCheck::at_most("β(t) ≤ α(t)‖U(t)‖^p (Θ/2)^p", budget_excess(a, &budget), 0.0));
    beyond_window(&mut c, "the forcing budget");

    let omega = a.omega();
    if omega.undefined_at.is_some() {
        return Certificate::rejected(id, "ω undefined: β > 0 where α = 0");
    }
    let k = propagator_constants(j_value, omega.value, spec.u0_norm(), p);
    record(&mut c, &k);
    c.sub_verdicts.insert("decays".into(), SubVerdict::Holds);
    c.delta = Some(delta);
    c.budget = Some(budget);
    c.envelope = Some(Envelope::ScaledPropagator { c2: k.c2 });
    c.finish()
}

/// Golden-section minimization of `f` over `ln κ ∈ [−6, 6]`, started from
/// the best point of a coarse scan.
pub fn search_kappa<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (lo, hi) = (-6.0f64, 6.0f64);
    let n = 48;
    let h = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + h * i as f64)
        .min_by(|x, y| f(x.exp()).total_cmp(&f(y.exp())))
        .expect("nonempty scan");
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1.exp());
    let mut f2 = f(x2.exp());
    for _ in 0..60 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1.exp());
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2.exp());
        }
    }
    (0.5 * (a + b)).exp()
}

/// `‖u(t)‖ < (κ+1)ζ(t)` under `α ≤ κβ/((κ+1)ζ)^p`; the corollary form adds
/// boundedness of `ζ` to the verdict.
pub(super) fn zeta_envelope(a: &Analysis, id: TheoremId, kernel: Kernel) -> Certificate {
    let (spec, table) = (a.spec, a.table);
    let p = spec.p;
    let u0n = spec.u0_norm();
    if u0n == 0.0 {
        return Certificate::rejected(id, "precondition violated: u₀ = 0");
    }
    let mut c = Certificate::new(id);
    let forced = match quad::sup_integral(table, &spec.beta, kernel, &a.opts.sup) {
        Ok(m) => m,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    // The sup sweep already holds the kernel integral on its own nodes.
    let known = |t: f64| {
        forced
            .per_t_times
            .binary_search_by(|x| x.total_cmp(&t))
            .ok()
            .map(|i| forced.per_t[i])
    };
    let grid = check_grid(table, 400);
    let zetas = match par::try_map(a.opts.exec, grid.len(), |i| match known(grid[i]) {
        Some(v) => Ok(table.u_norm_at(grid[i]) * u0n + v),
        None => super::zeta(table, &spec.beta, u0n, kernel, grid[i]),
    }) {
        Ok(z) => z,
        Err(e) => return Certificate::numerical_failure(id, &e),
    };
    // α((κ+1)ζ)^p/(κβ) = (κ+1)^p/κ · r(t) with r = αζ^p/β; 0/0 counts as 0.
    let r: Vec<f64> = grid
        .iter()
        .zip(&zetas)
        .map(|(&t, &z)| {
            let (al, be) = (spec.alpha.eval(t), spec.beta.eval(t));
            if al <= 0.0 {
                0.0
            } else if be <= 0.0 {
                f64::INFINITY
            } else {
                al * z.powf(p) / be
            }
        })
        .collect();
    let worst = |kappa: f64| {
        let s = (kappa + 1.0).powf(p) / kappa;
        r.iter().fold(0.0f64, |m, x| m.max(s * x))
    };
    let kappa = a.opts.kappa.unwrap_or_else(|| search_kappa(worst));
    c.constant("kappa", kappa);
    c.constant("zeta_max", zetas.iter().copied().fold(0.0, f64::max));
    c.constant("zeta_final", *zetas.last().unwrap_or(&0.0));
    c.check(LoggedCheck::at_most("max_t α((κ+1)ζ)^p/(κβ) ≤ 1", worst(kappa), 1.0));
    if spec.alpha.is_identically_zero() {
        c.tail(TailStatus::ExactClosedForm);
    } else {
        c.tail(TailStatus::TailBounded);
        beyond_window(&mut c, "α ≤ κβ/((κ+1)ζ)^p");
    }

    let sup_u = a.sup_u();
    c.constant("supU", sup_u.value);
    c.constant("sup_forced", forced.value);
    let bounded_status = sup_u.tail_status.worst(forced.tail_status);
    c.sub_verdicts.insert(
        "bounded".into(),
        if bounded_status == TailStatus::Truncated {
            SubVerdict::Undetermined
        } else {
            SubVerdict::Holds
        },
    );
    let mu = forced.fit.as_ref().and_then(|f| f.mu).unwrap_or(0.0);
    let beta_vanishes = matches!(spec.beta.decay(), DecayClass::Exponential { .. });
    let decays = a.decay().decays && (spec.beta.is_identically_zero() || (mu > 0.0 && beta_vanishes));
    c.sub_verdicts.insert(
        "decays".into(),
        if decays { SubVerdict::Holds } else { SubVerdict::Undetermined },
    );
    if id == TheoremId::C27 {
        c.tail(bounded_status);
    }
    c.envelope = Some(Envelope::Zeta {
        kappa,
        u0_norm: u0n,
        kernel,
        beta: spec.beta.clone(),
    });
    c.finish()
}
