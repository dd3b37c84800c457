//! Certificates: each checks one set of hypotheses on `(spec, table)` and,
//! when they hold, licenses an envelope for `‖u(t)‖`.

mod banach;
mod blowup;
mod hilbert;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Serialize, Serializer};

use crate::coeffs::{ProblemSpec, ScalarFunction, Space};
use crate::par::{self, Exec};
use crate::propagator::PropagatorTable;
use crate::quad::{self, ImproperResult, Kernel, QuadError, SupIntegralResult, SupOptions, TailStatus, TimeSup};

pub use blowup::{blowup_analyze, blowup_certificate, BlowupAnalysis, BlowupError};
pub use hilbert::{dissipativity_check, DissipativityReport};

const ENVELOPE_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TheoremId {
    A1T21,
    A2T23,
    C25,
    C29,
    A3T24,
    C27,
    HT31,
    HT33,
    HT34,
    Blowup,
}

impl TheoremId {
    pub const ALL: [TheoremId; 10] = [
        TheoremId::A1T21,
        TheoremId::A2T23,
        TheoremId::C25,
        TheoremId::C29,
        TheoremId::A3T24,
        TheoremId::C27,
        TheoremId::HT31,
        TheoremId::HT33,
        TheoremId::HT34,
        TheoremId::Blowup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::A1T21 => "A1-T2.1",
            TheoremId::A2T23 => "A2-T2.3",
            TheoremId::C25 => "C2.5",
            TheoremId::C29 => "C2.9",
            TheoremId::A3T24 => "A3-T2.4",
            TheoremId::C27 => "C2.7",
            TheoremId::HT31 => "H-T3.1",
            TheoremId::HT33 => "H-T3.3",
            TheoremId::HT34 => "H-T3.4",
            TheoremId::Blowup => "BLOWUP",
        }
    }

    pub fn is_hilbert(self) -> bool {
        matches!(self, TheoremId::HT31 | TheoremId::HT33 | TheoremId::HT34)
    }

    /// Whether the theorem can be applied to a spec on this space.
    pub fn applies_to(self, spec: &ProblemSpec) -> bool {
        match (&spec.space, self) {
            (_, TheoremId::Blowup) => blowup::is_scalar_model(spec),
            (Space::HilbertSplit { .. }, id) => id.is_hilbert(),
            (Space::BanachFinite { norm }, id) if id.is_hilbert() => *norm == crate::linalg::NormKind::L2,
            _ => true,
        }
    }

    /// Theorems checked when none are requested.
    pub fn defaults_for(spec: &ProblemSpec) -> Vec<TheoremId> {
        let base: &[TheoremId] = match spec.space {
            Space::HilbertSplit { .. } => &[TheoremId::HT31, TheoremId::HT33, TheoremId::HT34],
            Space::BanachFinite { .. } => &[
                TheoremId::A1T21,
                TheoremId::A2T23,
                TheoremId::C25,
                TheoremId::C29,
                TheoremId::A3T24,
                TheoremId::C27,
            ],
        };
        let mut v = base.to_vec();
        if blowup::is_scalar_model(spec) {
            v.push(TheoremId::Blowup);
        }
        v
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_uppercase();
        let short = key.strip_prefix("A1-").or(key.strip_prefix("A2-")).or(key.strip_prefix("A3-")).unwrap_or(&key);
        Ok(match short {
            "T2.1" => TheoremId::A1T21,
            "T2.3" => TheoremId::A2T23,
            "C2.5" => TheoremId::C25,
            "C2.9" => TheoremId::C29,
            "T2.4" => TheoremId::A3T24,
            "C2.7" => TheoremId::C27,
            "H-T3.1" | "T3.1" => TheoremId::HT31,
            "H-T3.3" | "T3.3" => TheoremId::HT33,
            "H-T3.4" | "T3.4" => TheoremId::HT34,
            "BLOWUP" => TheoremId::Blowup,
            _ => return Err(format!("unknown theorem id '{s}'")),
        })
    }
}

impl Serialize for TheoremId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
    /// Every checked inequality holds but an improper quantity was only
    /// computed on the window.
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::NotCertified => "not-certified",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubVerdict {
    Holds,
    Fails,
    Undetermined,
}

/// One inequality `lhs < rhs` (or `≤`) with its margin `rhs − lhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoggedCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub strict: bool,
    pub holds: bool,
}

impl LoggedCheck {
    pub fn less(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        LoggedCheck {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            strict: true,
            holds: lhs < rhs,
        }
    }

    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        LoggedCheck {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            strict: false,
            holds: lhs <= rhs,
        }
    }

    /// A yes/no condition without a numeric comparison.
    pub fn flag(name: impl Into<String>, holds: bool) -> Self {
        let v = if holds { 1.0 } else { 0.0 };
        LoggedCheck {
            name: name.into(),
            lhs: v,
            rhs: 1.0,
            margin: v - 1.0,
            strict: false,
            holds,
        }
    }
}

/// Bound on `‖u(t)‖` licensed by a certificate.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    /// `‖u(t)‖ < bound`
    Uniform { bound: f64 },
    /// `‖u(t)‖ ≤ c2·‖U(t)‖`
    ScaledPropagator { c2: f64 },
    /// `‖u(t)‖ < (κ+1)·ζ(t)`, `ζ(t) = ‖U(t)‖‖u₀‖ + ∫₀ᵗ k(t,ξ)β(ξ)dξ`
    Zeta {
        kappa: f64,
        u0_norm: f64,
        kernel: Kernel,
        #[serde(skip)]
        beta: ScalarFunction,
    },
}

impl Envelope {
    pub fn eval(&self, table: &PropagatorTable, t: f64) -> Result<f64, QuadError> {
        Ok(match self {
            Envelope::Uniform { bound } => *bound,
            Envelope::ScaledPropagator { c2 } => c2 * table.u_norm_at(t),
            Envelope::Zeta { kappa, u0_norm, kernel, beta } => (kappa + 1.0) * zeta(table, beta, *u0_norm, *kernel, t)?,
        })
    }

    pub fn is_strict(&self) -> bool {
        !matches!(self, Envelope::ScaledPropagator { .. })
    }
}

/// `‖U(t)‖·‖u₀‖ + ∫₀ᵗ k(t, ξ) β(ξ) dξ`
pub fn zeta(table: &PropagatorTable, beta: &ScalarFunction, u0_norm: f64, kernel: Kernel, t: f64) -> Result<f64, QuadError> {
    Ok(table.u_norm_at(t) * u0_norm + quad::weighted_integral(table, beta, t, kernel)?)
}

/// Forcing bound under which a stability certificate applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForcingBudget {
    /// `β(t) ≤ factor·α(t)`
    Proportional { factor: f64 },
    /// `β(t) ≤ factor·α(t)·‖U(t)‖^p`
    PropagatorScaled { factor: f64, p: f64 },
}

impl ForcingBudget {
    pub fn at(&self, alpha_t: f64, u_norm_t: f64) -> f64 {
        match *self {
            ForcingBudget::Proportional { factor } => factor * alpha_t,
            ForcingBudget::PropagatorScaled { factor, p } => factor * alpha_t * u_norm_t.powf(p),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub theorem: TheoremId,
    pub verdict: Verdict,
    pub reason: String,
    pub tail_status: TailStatus,
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<LoggedCheck>,
    pub sub_verdicts: BTreeMap<String, SubVerdict>,
    pub assumptions: Vec<String>,
    pub envelope: Option<Envelope>,
    /// Radius for initial data (`‖u₀‖ < delta`) for stability certificates.
    pub delta: Option<f64>,
    pub budget: Option<ForcingBudget>,
    /// `(t, envelope(t))` on a uniform grid, for reports.
    pub envelope_samples: Vec<[f64; 2]>,
}

impl Certificate {
    fn new(theorem: TheoremId) -> Self {
        Certificate {
            theorem,
            verdict: Verdict::NotCertified,
            reason: String::new(),
            tail_status: TailStatus::ExactClosedForm,
            constants: BTreeMap::new(),
            checks: Vec::new(),
            sub_verdicts: BTreeMap::new(),
            assumptions: vec!["local existence of solutions is assumed, not verified".into()],
            envelope: None,
            delta: None,
            budget: None,
            envelope_samples: Vec::new(),
        }
    }

    fn constant(&mut self, name: &str, v: f64) {
        self.constants.insert(name.to_string(), v);
    }

    fn check(&mut self, c: LoggedCheck) {
        self.checks.push(c);
    }

    fn tail(&mut self, s: TailStatus) {
        self.tail_status = self.tail_status.worst(s);
    }

    /// Rejected before any inequality was evaluated.
    fn rejected(theorem: TheoremId, reason: impl Into<String>) -> Self {
        let mut c = Certificate::new(theorem);
        c.reason = reason.into();
        c
    }

    fn numerical_failure(theorem: TheoremId, err: &QuadError) -> Self {
        let mut c = Certificate::new(theorem);
        c.verdict = Verdict::Inconclusive;
        c.reason = format!("numerical failure: {err}");
        c
    }

    /// Sets the verdict from the logged checks and the tail status. The
    /// envelope is kept only for certified results.
    fn finish(mut self) -> Self {
        if let Some(bad) = self.checks.iter().find(|c| !c.holds) {
            self.verdict = Verdict::NotCertified;
            self.reason = format!("fails: {}", bad.name);
            self.envelope = None;
            self.delta = None;
            self.budget = None;
        } else if self.tail_status == TailStatus::Truncated {
            self.verdict = Verdict::Inconclusive;
            self.reason = "inequalities hold on the window but a tail is truncated".into();
            self.envelope = None;
        } else {
            self.verdict = Verdict::Certified;
            self.reason = "all hypotheses hold".into();
        }
        self
    }

    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CertOptions {
    /// Target bound for the stability certificates; chosen automatically
    /// when absent.
    pub epsilon: Option<f64>,
    /// Fixed κ for the ζ certificates; searched when absent.
    pub kappa: Option<f64>,
    /// Constant of `‖U⁻¹(t)‖ ≤ c/‖U(t)‖`; measured when absent.
    pub c29: Option<f64>,
    /// `‖U(T)‖ < decay_threshold·sup‖U‖` counts as decay evidence.
    pub decay_threshold: f64,
    /// Safety factor applied to the initial-data radius.
    pub delta_margin: f64,
    pub sup: SupOptions,
    pub exec: Exec,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            epsilon: None,
            kappa: None,
            c29: None,
            decay_threshold: 1e-6,
            delta_margin: 1e-3,
            sup: SupOptions::default(),
            exec: Exec::default(),
        }
    }
}

impl CertOptions {
    /// Sets the execution mode for certificate runs and sup sweeps alike.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self.sup.exec = exec;
        self
    }
}

/// `ω = sup (β/α)^{1/p} / ‖U(t)‖`
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OmegaResult {
    pub value: f64,
    pub argmax_t: f64,
    pub tail_status: TailStatus,
    /// First time where `β > 0` while `α = 0`.
    pub undefined_at: Option<f64>,
}

/// Evidence that `‖U(t)‖ → 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayEvidence {
    pub final_norm: f64,
    pub sup_norm: f64,
    pub last_decile_sup: f64,
    pub previous_decile_sup: f64,
    pub decays: bool,
}

/// Shared, lazily computed quantities for one `(spec, table)`.
pub struct Analysis<'a> {
    pub spec: &'a ProblemSpec,
    pub table: &'a PropagatorTable,
    pub opts: CertOptions,
    sup_u: OnceLock<TimeSup>,
    m_two: OnceLock<Result<SupIntegralResult, QuadError>>,
    m_split: OnceLock<Result<SupIntegralResult, QuadError>>,
    int_alpha: OnceLock<Result<SupIntegralResult, QuadError>>,
    j: OnceLock<Result<ImproperResult, QuadError>>,
    omega: OnceLock<OmegaResult>,
    decay: OnceLock<DecayEvidence>,
}

impl<'a> Analysis<'a> {
    pub fn new(spec: &'a ProblemSpec, table: &'a PropagatorTable, opts: CertOptions) -> Self {
        Analysis {
            spec,
            table,
            opts,
            sup_u: OnceLock::new(),
            m_two: OnceLock::new(),
            m_split: OnceLock::new(),
            int_alpha: OnceLock::new(),
            j: OnceLock::new(),
            omega: OnceLock::new(),
            decay: OnceLock::new(),
        }
    }

    pub fn sup_u(&self) -> TimeSup {
        *self.sup_u.get_or_init(|| quad::time_sup(self.table, |t| self.table.u_norm_at(t)))
    }

    /// `sup_t ∫₀ᵗ k(t,ξ) α(ξ) dξ` for the two-parameter or split kernel.
    pub fn m(&self, kernel: Kernel) -> Result<&SupIntegralResult, QuadError> {
        let cell = match kernel {
            Kernel::TwoParam => &self.m_two,
            Kernel::Split => &self.m_split,
            Kernel::Plain => &self.int_alpha,
        };
        cell.get_or_init(|| quad::sup_integral(self.table, &self.spec.alpha, kernel, &self.opts.sup))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `∫₀^∞ α‖U⁻¹‖‖U‖^p`
    pub fn j(&self) -> Result<&ImproperResult, QuadError> {
        self.j
            .get_or_init(|| quad::improper_integral(self.table, &self.spec.alpha, self.spec.p, self.opts.exec))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn omega(&self) -> OmegaResult {
        *self.omega.get_or_init(|| {
            let spec = self.spec;
            if spec.beta.is_identically_zero() {
                return OmegaResult {
                    value: 0.0,
                    argmax_t: 0.0,
                    tail_status: TailStatus::ExactClosedForm,
                    undefined_at: None,
                };
            }
            let p = spec.p;
            let mut undefined = None;
            let t_max = self.table.t_max();
            for k in 0..=2000 {
                let t = t_max * k as f64 / 2000.0;
                if spec.beta.eval(t) > 0.0 && spec.alpha.eval(t) <= 0.0 {
                    undefined = Some(t);
                    break;
                }
            }
            let g = |t: f64| {
                let b = spec.beta.eval(t);
                let a = spec.alpha.eval(t);
                if b <= 0.0 {
                    0.0
                } else if a <= 0.0 {
                    f64::INFINITY
                } else {
                    (b / a).powf(1.0 / p) / self.table.u_norm_at(t)
                }
            };
            let s = quad::time_sup(self.table, g);
            OmegaResult {
                value: s.value,
                argmax_t: s.argmax_t,
                tail_status: s.tail_status,
                undefined_at: undefined,
            }
        })
    }

    pub fn decay(&self) -> DecayEvidence {
        *self.decay.get_or_init(|| {
            let t_max = self.table.t_max();
            let sup = self.sup_u().value;
            let final_norm = self.table.u_norm_at(t_max);
            let window_sup = |a: f64, b: f64| {
                (0..=200)
                    .map(|k| self.table.u_norm_at(a + (b - a) * k as f64 / 200.0))
                    .fold(0.0, f64::max)
            };
            let last = window_sup(0.9 * t_max, t_max);
            let prev = window_sup(0.8 * t_max, 0.9 * t_max);
            DecayEvidence {
                final_norm,
                sup_norm: sup,
                last_decile_sup: last,
                previous_decile_sup: prev,
                decays: final_norm < self.opts.decay_threshold * sup && last <= prev,
            }
        })
    }

    /// Tail-class assumptions on the coefficient functions, for the log.
    fn tail_assumptions(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(a) = self.spec.alpha.tail_assumption() {
            v.push(format!("alpha: {a}"));
        }
        if let Some(b) = self.spec.beta.tail_assumption() {
            v.push(format!("beta: {b}"));
        }
        v
    }

    pub fn check(&self, id: TheoremId) -> Certificate {
        if !id.applies_to(self.spec) {
            return Certificate::rejected(id, format!("{id} does not apply to this problem"));
        }
        let mut cert = match id {
            TheoremId::A1T21 => banach::stability(self, id, Kernel::TwoParam),
            TheoremId::HT31 => hilbert::gate(self, id, |a| banach::stability(a, id, Kernel::Split)),
            TheoremId::A2T23 | TheoremId::C25 => banach::propagator_envelope(self, id),
            TheoremId::HT33 => hilbert::gate(self, id, |a| banach::propagator_envelope(a, id)),
            TheoremId::C29 => banach::asymptotic(self),
            TheoremId::A3T24 | TheoremId::C27 => banach::zeta_envelope(self, id, Kernel::TwoParam),
            TheoremId::HT34 => hilbert::gate(self, id, |a| banach::zeta_envelope(a, id, Kernel::Split)),
            TheoremId::Blowup => blowup::blowup_certificate(self.spec),
        };
        cert.assumptions.extend(self.tail_assumptions());
        if let Some(env) = &cert.envelope {
            let t_max = self.table.t_max();
            cert.envelope_samples = (0..=ENVELOPE_SAMPLES)
                .filter_map(|k| {
                    let t = t_max * k as f64 / ENVELOPE_SAMPLES as f64;
                    env.eval(self.table, t).ok().map(|v| [t, v])
                })
                .collect();
        }
        cert
    }

    /// Runs the requested certificates; results keep the requested order.
    pub fn check_all(&self, ids: &[TheoremId]) -> Vec<Certificate> {
        par::map(self.opts.exec, ids.len(), |i| self.check(ids[i]))
    }
}

pub fn check_a1_t21(spec: &ProblemSpec, table: &PropagatorTable, epsilon: f64) -> Certificate {
    let opts = CertOptions {
        epsilon: Some(epsilon),
        ..Default::default()
    };
    Analysis::new(spec, table, opts).check(TheoremId::A1T21)
}

pub fn check_a2_t23(spec: &ProblemSpec, table: &PropagatorTable) -> Certificate {
    Analysis::new(spec, table, CertOptions::default()).check(TheoremId::A2T23)
}

pub fn check_c25(spec: &ProblemSpec, table: &PropagatorTable) -> Certificate {
    Analysis::new(spec, table, CertOptions::default()).check(TheoremId::C25)
}

pub fn check_c29(spec: &ProblemSpec, table: &PropagatorTable, c: Option<f64>) -> Certificate {
    let opts = CertOptions {
        c29: c,
        ..Default::default()
    };
    Analysis::new(spec, table, opts).check(TheoremId::C29)
}

pub fn check_a3_t24(spec: &ProblemSpec, table: &PropagatorTable, kappa: Option<f64>) -> Certificate {
    let opts = CertOptions {
        kappa,
        ..Default::default()
    };
    Analysis::new(spec, table, opts).check(TheoremId::A3T24)
}

pub fn check_h_t31(spec: &ProblemSpec, table: &PropagatorTable, epsilon: f64) -> Certificate {
    let opts = CertOptions {
        epsilon: Some(epsilon),
        ..Default::default()
    };
    Analysis::new(spec, table, opts).check(TheoremId::HT31)
}

pub fn check_h_t33(spec: &ProblemSpec, table: &PropagatorTable) -> Certificate {
    Analysis::new(spec, table, CertOptions::default()).check(TheoremId::HT33)
}

pub fn check_h_t34(spec: &ProblemSpec, table: &PropagatorTable, kappa: Option<f64>) -> Certificate {
    let opts = CertOptions {
        kappa,
        ..Default::default()
    };
    Analysis::new(spec, table, opts).check(TheoremId::HT34)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_ids_round_trip() {
        for id in TheoremId::ALL {
            assert_eq!(id.as_str().parse::<TheoremId>().unwrap(), id);
        }
        assert_eq!("t2.1".parse::<TheoremId>().unwrap(), TheoremId::A1T21);
        assert!("T9.9".parse::<TheoremId>().is_err());
    }

    #[test]
    fn finish_requires_all_checks() {
        let mut c = Certificate::new(TheoremId::A1T21);
        c.check(LoggedCheck::less("a", 1.0, 2.0));
        c.envelope = Some(Envelope::Uniform { bound: 1.0 });
        let ok = c.clone().finish();
        assert_eq!(ok.verdict, Verdict::Certified);
        c.check(LoggedCheck::less("b", 2.0, 2.0));
        let bad = c.clone().finish();
        assert_eq!(bad.verdict, Verdict::NotCertified);
        assert!(bad.envelope.is_none());
        let mut t = Certificate::new(TheoremId::A1T21);
        t.tail(TailStatus::Truncated);
        assert_eq!(t.finish().verdict, Verdict::Inconclusive);
    }
}
