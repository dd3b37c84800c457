//! Finite-time blow-up for the scalar model `u' = γ(t)u + α(t)u^p`, `u₀ > 0`.
//!
//! With `U(t) = exp ∫₀ᵗ γ` the solution is `U(t)·φ(t)^{−1/(p−1)}` where
//! `φ(t) = u₀^{1−p} − (p−1)∫₀ᵗ U^{p−1}α`, so it blows up at the first zero
//! of `φ`.

use serde::Serialize;
use thiserror::Error;

use super::{Certificate, LoggedCheck, TheoremId};
use crate::coeffs::{Nonlinearity, ProblemSpec, ScalarFunction, Space};
use crate::quad::{gk, QuadError, QuadOptions, TailStatus};

const SCAN_POINTS: usize = 400;
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BlowupError {
    #[error("invalid blow-up problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupAnalysis {
    pub u0: f64,
    pub p: f64,
    pub t_max: f64,
    /// First zero of `φ` in `[0, T_max]`.
    pub t0: Option<f64>,
    pub phi0: f64,
    #[serde(skip)]
    gamma: ScalarFunction,
    #[serde(skip)]
    alpha: ScalarFunction,
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 1e-300,
        max_intervals: 4000,
    }
}

fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Result<f64, QuadError> {
    if b <= a {
        return Ok(0.0);
    }
    Ok(gk::integrate(f, a, b, &quad_opts())?.value)
}

impl BlowupAnalysis {
    /// `∫₀ᵗ γ`
    pub fn log_u(&self, t: f64) -> f64 {
        match self.gamma.constant_value() {
            Some(c) => c * t,
            None => integrate(|x| self.gamma.eval(x), 0.0, t).unwrap_or(f64::NAN),
        }
    }

    pub fn big_u(&self, t: f64) -> f64 {
        self.log_u(t).exp()
    }

    /// `∫_a^b U^{p−1}α`
    fn growth(&self, a: f64, b: f64) -> Result<f64, QuadError> {
        let q = self.p - 1.0;
        match (self.gamma.constant_value(), self.alpha.constant_value()) {
            (Some(g), Some(al)) if g != 0.0 => Ok(al * ((q * g * b).exp() - (q * g * a).exp()) / (q * g)),
            (Some(_), Some(al)) => Ok(al * (b - a)),
            _ => integrate(|x| self.big_u(x).powf(q) * self.alpha.eval(x), a, b),
        }
    }

    pub fn phi(&self, t: f64) -> Result<f64, QuadError> {
        Ok(self.phi0 - (self.p - 1.0) * self.growth(0.0, t)?)
    }

    /// `ũ(t) = U(t)·φ(t)^{−1/(p−1)}` on `[0, t₀)`, `None` beyond.
    pub fn closed_form(&self, t: f64) -> Option<f64> {
        if self.t0.is_some_and(|t0| t >= t0) {
            return None;
        }
        let phi = self.phi(t).ok()?;
        (phi > 0.0).then(|| self.big_u(t) * phi.powf(-1.0 / (self.p - 1.0)))
    }
}

pub fn blowup_analyze(u0: f64, gamma: ScalarFunction, alpha: ScalarFunction, p: f64, t_max: f64) -> Result<BlowupAnalysis, BlowupError> {
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(BlowupError::Invalid(format!("u0 must be positive, got {u0}")));
    }
    if !(p > 1.0) {
        return Err(BlowupError::Invalid(format!("p must exceed 1, got {p}")));
    }
    if !(t_max > 0.0) {
        return Err(BlowupError::Invalid(format!("T_max must be positive, got {t_max}")));
    }
    let mut an = BlowupAnalysis {
        u0,
        p,
        t_max,
        t0: None,
        phi0: u0.powf(1.0 - p),
        gamma,
        alpha,
    };
    let q = p - 1.0;
    // φ is tracked cumulatively over the scan.
    let h = t_max / SCAN_POINTS as f64;
    let mut phi_prev = an.phi0;
    let mut bracket = None;
    for k in 1..=SCAN_POINTS {
        let (a, b) = (h * (k - 1) as f64, h * k as f64);
        let phi_b = phi_prev - q * an.growth(a, b)?;
        if phi_b <= 0.0 {
            bracket = Some((a, b, phi_prev));
            break;
        }
        phi_prev = phi_b;
    }
    if let Some((mut lo, mut hi, phi_lo)) = bracket {
        let base = lo;
        let phi_at = |t: f64| -> Result<f64, QuadError> { Ok(phi_lo - q * an.growth(base, t)?) };
        for _ in 0..200 {
            if hi - lo <= ROOT_TOL * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if phi_at(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        an.t0 = Some(0.5 * (lo + hi));
    }
    Ok(an)
}

/// Scalar, unforced, power nonlinearity, positive data.
pub(super) fn is_scalar_model(spec: &ProblemSpec) -> bool {
    matches!(spec.space, Space::BanachFinite { .. })
        && spec.b.dim() == 1
        && matches!(spec.nonlinearity, Nonlinearity::Power)
        && !spec.has_forcing()
        && spec.u0.first().is_some_and(|u| *u > 0.0)
}

pub fn blowup_certificate(spec: &ProblemSpec) -> Certificate {
    let id = TheoremId::Blowup;
    if !is_scalar_model(spec) {
        return Certificate::rejected(id, "blow-up analysis needs a scalar unforced power model with u₀ > 0");
    }
    let an = match blowup_analyze(spec.u0[0], spec.b.entry(0, 0).clone(), spec.alpha.clone(), spec.p, spec.t_max) {
        Ok(a) => a,
        Err(BlowupError::Quad(e)) => return Certificate::numerical_failure(id, &e),
        Err(e) => return Certificate::rejected(id, e.to_string()),
    };
    let mut c = Certificate::new(id);
    c.tail_status = TailStatus::ExactClosedForm;
    c.constant("phi0", an.phi0);
    match an.t0 {
        Some(t0) => {
            c.constant("t0", t0);
            c.check(LoggedCheck::flag("φ changes sign in [0, T_max]", true));
            let mut c = c.finish();
            c.reason = format!("blow-up at t0 = {t0}");
            c
        }
        None => {
            let phi_end = an.phi(spec.t_max).unwrap_or(f64::NAN);
            c.constant("phi_T", phi_end);
            c.check(LoggedCheck::at_most("φ(T_max) ≤ 0", phi_end, 0.0));
            let mut c = c.finish();
            c.reason = "φ > 0 on [0, T_max]: no blow-up detected in the window".into();
            c
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(c: f64) -> ScalarFunction {
        ScalarFunction::constant(c)
    }

    #[test]
    fn riccati_blow_up_times() {
        let a = blowup_analyze(1.0, k(0.0), k(1.0), 2.0, 5.0).unwrap();
        assert!((a.t0.unwrap() - 1.0).abs() < 1e-10);
        assert!((a.closed_form(0.5).unwrap() - 2.0).abs() < 1e-12);
        let b = blowup_analyze(0.5, k(0.0), k(1.0), 2.0, 5.0).unwrap();
        assert!((b.t0.unwrap() - 2.0).abs() < 1e-10);
        let c = blowup_analyze(2.0, k(-1.0), k(1.0), 2.0, 5.0).unwrap();
        assert!((c.t0.unwrap() - 2f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn quadrature_path_matches_closed_form() {
        // U = e^{sin t}, α = cos t: φ(t) = 2 − e^{sin t} for u₀ = 1.
        let g = ScalarFunction::parse("cos(t)").unwrap();
        let al = ScalarFunction::parse("cos(t)").unwrap();
        let a = blowup_analyze(1.0, g, al, 2.0, 1.0).unwrap();
        let t0 = 2f64.ln().asin();
        assert!((a.t0.unwrap() - t0).abs() < 1e-10, "{:?}", a.t0);
        assert!((a.phi(0.3).unwrap() - (2.0 - 0.3f64.sin().exp())).abs() < 1e-12);
    }

    #[test]
    fn no_blow_up_when_damped() {
        let a = blowup_analyze(0.5, k(-1.0), k(1.0), 2.0, 20.0).unwrap();
        assert!(a.t0.is_none());
        assert!(a.phi(20.0).unwrap() > 0.0);
        assert!(blowup_analyze(0.0, k(0.0), k(1.0), 2.0, 1.0).is_err());
    }
}
