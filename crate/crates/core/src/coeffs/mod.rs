//! Coefficient data of `u' = B(t)u + G(t,u) + f(t)`: scalar bound functions,
//! matrix functions, nonlinearities and the assembled [`ProblemSpec`].

mod holder;
mod validate;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::linalg::NormKind;

pub use holder::{holder_alpha_bound, HolderError, HolderOptions, SampleReport};
pub use validate::{validate_spec, Check, ValidationReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dimension mismatch: {what} has {found}, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("spec rejected: {0}")]
    Rejected(String),
}

/// Tail behaviour asserted for `t > T_max`. Recorded in reports as an
/// assumption; never verified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DecayClass {
    #[default]
    None,
    /// Integrable tail, optionally with a bound on `∫_{T_max}^∞ f`.
    Integrable { tail: Option<f64> },
    /// `f(t) ≤ f(T_max)·e^{-rate (t - T_max)}` beyond the window.
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum FnKind {
    Expr(Expr),
    Table { t: Vec<f64>, v: Vec<f64> },
}

/// Real function of time, either an expression or linearly interpolated
/// samples (clamped outside the sampled range).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFunction {
    kind: FnKind,
    decay: DecayClass,
}

impl ScalarFunction {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        Ok(Self::from_expr(Expr::parse(src)?))
    }

    pub fn from_expr(e: Expr) -> Self {
        ScalarFunction {
            kind: FnKind::Expr(e),
            decay: DecayClass::None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_expr(Expr::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn tabulated(t: Vec<f64>, v: Vec<f64>) -> Result<Self, SpecError> {
        if t.len() != v.len() || t.is_empty() {
            return Err(SpecError::Invalid(format!(
                "table needs matching non-empty columns (got {} times, {} values)",
                t.len(),
                v.len()
            )));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpecError::Invalid("table times must be strictly increasing".into()));
        }
        Ok(ScalarFunction {
            kind: FnKind::Table { t, v },
            decay: DecayClass::None,
        })
    }

    pub fn with_decay(mut self, decay: DecayClass) -> Self {
        self.decay = decay;
        self
    }

    pub fn decay(&self) -> DecayClass {
        self.decay
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            FnKind::Expr(e) => e.eval(t),
            FnKind::Table { t: ts, v } => {
                if t <= ts[0] {
                    return v[0];
                }
                let last = ts.len() - 1;
                if t >= ts[last] {
                    return v[last];
                }
                let i = ts.partition_point(|&x| x <= t) - 1;
                let w = (t - ts[i]) / (ts[i + 1] - ts[i]);
                v[i] + w * (v[i + 1] - v[i])
            }
        }
    }

    /// Value when the function is constant in time.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.kind {
            FnKind::Expr(e) => e.constant_value(),
            FnKind::Table { v, .. } => v.iter().all(|x| *x == v[0]).then(|| v[0]),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Upper bound on `sup_{t ≥ T}` when the tail class (or constancy) gives one.
    pub fn tail_sup(&self, t_max: f64) -> Option<f64> {
        if let Some(c) = self.constant_value() {
            return Some(c.abs());
        }
        match self.decay {
            DecayClass::Exponential { .. } => Some(self.eval(t_max).abs()),
            _ => None,
        }
    }

    /// Upper bound on `∫_T^∞` when the tail class (or constancy) gives one.
    pub fn tail_integral(&self, t_max: f64) -> Option<f64> {
        if let Some(c) = self.constant_value() {
            return (c == 0.0).then_some(0.0);
        }
        match self.decay {
            DecayClass::Exponential { rate } if rate > 0.0 => Some(self.eval(t_max).abs() / rate),
            DecayClass::Integrable { tail: Some(b) } => Some(b),
            _ => None,
        }
    }

    /// Human-readable description of the tail assumption, if any.
    pub fn tail_assumption(&self) -> Option<String> {
        if self.constant_value().is_some() {
            return None;
        }
        match self.decay {
            DecayClass::None => None,
            DecayClass::Integrable { tail: Some(b) } => Some(format!("tail integral beyond T_max bounded by {b}")),
            DecayClass::Integrable { tail: None } => Some("integrable tail (no bound supplied)".into()),
            DecayClass::Exponential { rate } => Some(format!("decays at least like exp(-{rate} (t - T_max)) beyond T_max")),
        }
    }
}

impl fmt::Display for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FnKind::Expr(e) => write!(f, "{e}"),
            FnKind::Table { t, .. } => write!(f, "table[{} samples]", t.len()),
        }
    }
}

/// Closed-form two-parameter propagator `U(t, ξ)`.
pub type PropagatorFn = Arc<dyn Fn(f64, f64) -> DMatrix<f64> + Send + Sync>;

/// Square matrix of scalar functions.
#[derive(Clone)]
pub struct MatrixFunction {
    dim: usize,
    entries: Vec<ScalarFunction>,
    diagonal: bool,
    closed_form: Option<PropagatorFn>,
}

impl fmt::Debug for MatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixFunction")
            .field("dim", &self.dim)
            .field("entries", &self.entries.iter().map(|e| e.to_string()).collect::<Vec<_>>())
            .field("closed_form", &self.closed_form.is_some())
            .finish()
    }
}

impl MatrixFunction {
    /// Row-major entries.
    pub fn new(dim: usize, entries: Vec<ScalarFunction>) -> Result<Self, SpecError> {
        if dim == 0 {
            return Err(SpecError::Invalid("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(SpecError::DimensionMismatch {
                what: "B entries".into(),
                expected: dim * dim,
                found: entries.len(),
            });
        }
        let diagonal = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .all(|(r, c)| entries[r * dim + c].is_identically_zero());
        Ok(MatrixFunction {
            dim,
            entries,
            diagonal,
            closed_form: None,
        })
    }

    pub fn parse(rows: &[Vec<String>]) -> Result<Self, SpecError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(SpecError::DimensionMismatch {
                    what: format!("B row {i}"),
                    expected: dim,
                    found: row.len(),
                });
            }
            for s in row {
                entries.push(ScalarFunction::parse(s)?);
            }
        }
        Self::new(dim, entries)
    }

    pub fn diagonal(diag: Vec<ScalarFunction>) -> Self {
        let n = diag.len();
        let mut entries = vec![ScalarFunction::zero(); n * n];
        for (i, d) in diag.into_iter().enumerate() {
            entries[i * n + i] = d;
        }
        Self::new(n, entries).expect("square by construction")
    }

    pub fn with_closed_form(mut self, f: PropagatorFn) -> Self {
        self.closed_form = Some(f);
        self
    }

    pub fn closed_form(&self) -> Option<&PropagatorFn> {
        self.closed_form.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn entry(&self, r: usize, c: usize) -> &ScalarFunction {
        &self.entries[r * self.dim + c]
    }

    pub fn eval_into(&self, t: f64, out: &mut DMatrix<f64>) {
        let n = self.dim;
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] = if self.diagonal && r != c {
                    0.0
                } else {
                    self.entries[r * n + c].eval(t)
                };
            }
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.eval_into(t, &mut m);
        m
    }

    pub fn trace(&self, t: f64) -> f64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i].eval(t)).sum()
    }
}

/// User-supplied nonlinearity `(t, u, out)`.
pub type CustomMap = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone, Default)]
pub enum Nonlinearity {
    /// `G(t,u) = α(t)·sign(u)|u|^p` componentwise.
    #[default]
    Power,
    Custom(CustomMap),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Power => write!(f, "Power"),
            Nonlinearity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Nonlinearity {
    pub fn eval(&self, t: f64, u: &[f64], alpha_t: f64, p: f64, out: &mut [f64]) {
        match self {
            Nonlinearity::Power => {
                for (o, x) in out.iter_mut().zip(u) {
                    *o = alpha_t * x.signum() * x.abs().powf(p);
                }
            }
            Nonlinearity::Custom(m) => m(t, u, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Space {
    BanachFinite { norm: NormKind },
    /// `u' = B(t)u + A u + …` with `A = diag(spectrum)` acting on every
    /// component of the `B` block; the state is `dim(B) × spectrum.len()`.
    HilbertSplit { spectrum: Vec<f64> },
}

impl Default for Space {
    fn default() -> Self {
        Space::BanachFinite { norm: NormKind::L2 }
    }
}

impl Space {
    pub fn norm(&self) -> NormKind {
        match self {
            Space::BanachFinite { norm } => *norm,
            Space::HilbertSplit { .. } => NormKind::L2,
        }
    }

    pub fn is_hilbert(&self) -> bool {
        matches!(self, Space::HilbertSplit { .. })
    }

    /// Number of `A`-modes per `B` component.
    pub fn multiplicity(&self) -> usize {
        match self {
            Space::BanachFinite { .. } => 1,
            Space::HilbertSplit { spectrum } => spectrum.len(),
        }
    }
}

/// Complete problem data. State layout for split spaces is
/// `u[i * m + k]`: component `i` of the `B` block, mode `k`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub space: Space,
    pub b: MatrixFunction,
    pub alpha: ScalarFunction,
    pub beta: ScalarFunction,
    pub p: f64,
    pub nonlinearity: Nonlinearity,
    /// Forcing components; empty means `f ≡ 0`.
    pub forcing: Vec<ScalarFunction>,
    pub u0: Vec<f64>,
    pub t_max: f64,
}

impl ProblemSpec {
    pub fn new(b: MatrixFunction, alpha: ScalarFunction, p: f64, u0: Vec<f64>, t_max: f64) -> Self {
        ProblemSpec {
            space: Space::default(),
            b,
            alpha,
            beta: ScalarFunction::zero(),
            p,
            nonlinearity: Nonlinearity::Power,
            forcing: Vec::new(),
            u0,
            t_max,
        }
    }

    pub fn with_space(mut self, space: Space) -> Self {
        self.space = space;
        self
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.space = Space::BanachFinite { norm };
        self
    }

    pub fn with_beta(mut self, beta: ScalarFunction) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_forcing(mut self, forcing: Vec<ScalarFunction>) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_nonlinearity(mut self, g: Nonlinearity) -> Self {
        self.nonlinearity = g;
        self
    }

    pub fn with_u0(mut self, u0: Vec<f64>) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn norm(&self) -> NormKind {
        self.space.norm()
    }

    pub fn state_dim(&self) -> usize {
        self.b.dim() * self.space.multiplicity()
    }

    pub fn u0_norm(&self) -> f64 {
        crate::linalg::vec_norm(&self.u0, self.norm())
    }

    pub fn has_forcing(&self) -> bool {
        self.forcing.iter().any(|f| !f.is_identically_zero())
    }

    pub fn eval_forcing(&self, t: f64, out: &mut [f64]) {
        if self.forcing.is_empty() {
            out.iter_mut().for_each(|x| *x = 0.0);
        } else {
            for (o, f) in out.iter_mut().zip(&self.forcing) {
                *o = f.eval(t);
            }
        }
    }

    pub fn eval_nonlinearity(&self, t: f64, u: &[f64], out: &mut [f64]) {
        self.nonlinearity.eval(t, u, self.alpha.eval(t), self.p, out);
    }

    /// Diagonal of the split operator `A` over the full state, if any.
    pub fn a_diagonal(&self) -> Option<Vec<f64>> {
        match &self.space {
            Space::BanachFinite { .. } => None,
            Space::HilbertSplit { spectrum } => {
                let n = self.b.dim();
                Some((0..n).flat_map(|_| spectrum.iter().copied()).collect())
            }
        }
    }

    /// Scalar `u' = γ(t)u + α(t)u^p` with `u(0) = u0`.
    pub fn scalar_bernoulli(gamma: ScalarFunction, alpha: ScalarFunction, p: f64, u0: f64, t_max: f64) -> Self {
        ProblemSpec::new(MatrixFunction::diagonal(vec![gamma]), alpha, p, vec![u0], t_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec_norm;
    use proptest::prelude::*;

    #[test]
    fn table_interpolates_and_clamps() {
        let f = ScalarFunction::tabulated(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(2.0), 2.5);
        assert_eq!(f.eval(-1.0), 1.0);
        assert_eq!(f.eval(7.0), 2.0);
        assert!(ScalarFunction::tabulated(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn tail_knowledge() {
        let c = ScalarFunction::constant(2.0);
        assert_eq!(c.tail_sup(10.0), Some(2.0));
        assert_eq!(c.tail_integral(10.0), None);
        assert_eq!(ScalarFunction::zero().tail_integral(10.0), Some(0.0));
        let e = ScalarFunction::parse("exp(-2*t)")
            .unwrap()
            .with_decay(DecayClass::Exponential { rate: 2.0 });
        let expect = (-20.0f64).exp() / 2.0;
        assert!((e.tail_integral(10.0).unwrap() - expect).abs() < 1e-24);
        let free = ScalarFunction::parse("1/(1+t)").unwrap();
        assert_eq!(free.tail_integral(10.0), None);
        assert_eq!(free.tail_sup(10.0), None);
    }

    #[test]
    fn matrix_parse_and_diagonal_detection() {
        let rows = vec![
            vec!["cos(t)".to_string(), "0".to_string()],
            vec!["0".to_string(), "-cos(t)".to_string()],
        ];
        let b = MatrixFunction::parse(&rows).unwrap();
        assert!(b.is_diagonal());
        assert_eq!(b.eval(0.0)[(1, 1)], -1.0);
        let bad = vec![vec!["1".to_string()], vec!["0".to_string(), "1".to_string()]];
        assert!(matches!(MatrixFunction::parse(&bad), Err(SpecError::DimensionMismatch { .. })));
    }

    #[test]
    fn split_layout() {
        let spec = ProblemSpec::new(
            MatrixFunction::diagonal(vec![ScalarFunction::parse("cos(t)").unwrap(), ScalarFunction::parse("-cos(t)").unwrap()]),
            ScalarFunction::zero(),
            2.0,
            vec![0.0; 6],
            1.0,
        )
        .with_space(Space::HilbertSplit {
            spectrum: vec![0.0, -1.0, -4.0],
        });
        assert_eq!(spec.state_dim(), 6);
        assert_eq!(spec.a_diagonal().unwrap(), vec![0.0, -1.0, -4.0, 0.0, -1.0, -4.0]);
    }

    fn power_bound_holds(u: &[f64], p: f64, kind: NormKind) -> bool {
        let mut g = vec![0.0; u.len()];
        Nonlinearity::Power.eval(0.0, u, 1.0, p, &mut g);
        vec_norm(&g, kind) <= vec_norm(u, kind).powf(p)
    }

    proptest! {
        #[test]
        fn power_nonlinearity_obeys_norm_bound(
            u in proptest::collection::vec(-3.0f64..3.0, 1..6),
            p in 1.05f64..4.0,
        ) {
            for kind in [NormKind::L2, NormKind::L1, NormKind::LInf] {
                let mut g = vec![0.0; u.len()];
                Nonlinearity::Power.eval(0.0, &u, 1.0, p, &mut g);
                let lhs = vec_norm(&g, kind);
                let rhs = vec_norm(&u, kind).powf(p);
                prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{kind:?}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn power_bound_on_fixed_vectors() {
        assert!(power_bound_holds(&[0.3, -0.9, 0.2], 1.5, NormKind::L2));
        assert!(power_bound_holds(&[2.0, 1.0], 3.0, NormKind::L1));
    }
}
