//! Evolution operator `U(t)` of `U' = B(t)U`, its inverse from
//! `V' = −V B(t)`, and the two-parameter family `U(t, ξ) = U(t) U⁻¹(ξ)`.
//!
//! `U` and `U⁻¹` are integrated together by the Dormand–Prince pair and kept
//! with their continuous extension, so off-grid queries cost one polynomial
//! evaluation.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::coeffs::{MatrixFunction, PropagatorFn};
use crate::linalg::{operator_norm_unchecked, NormKind};
use crate::ode::{self, Control, DenseSegment, OdeError, OdeSystem, StepperOptions};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Minimum number of steps over `[0, T_max]`.
const MIN_STEPS: f64 = 200.0;
const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropagatorError {
    #[error("propagator integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("time {t} outside the table range [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },
    #[error("need 0 ≤ ξ ≤ t (got t = {t}, ξ = {xi})")]
    Order { t: f64, xi: f64 },
    #[error("‖U·U⁻¹ − I‖ = {residual:e} at t = {t} exceeds {limit:e} after tightening the tolerance")]
    Inconsistent { t: f64, residual: f64, limit: f64 },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

struct MatrixSystem<'a> {
    b: &'a MatrixFunction,
    n: usize,
}

impl OdeSystem for MatrixSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.n * self.n
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let b = self.b.eval(t);
        let (u, v) = y.split_at(nn);
        let (du, dv) = dy.split_at_mut(nn);
        // column-major: U[(i, j)] = u[j * n + i]
        if self.b.is_diagonal() {
            for j in 0..n {
                for i in 0..n {
                    du[j * n + i] = b[(i, i)] * u[j * n + i];
                    dv[j * n + i] = -v[j * n + i] * b[(j, j)];
                }
            }
            return;
        }
        for j in 0..n {
            for i in 0..n {
                let mut su = 0.0;
                let mut sv = 0.0;
                for k in 0..n {
                    su += b[(i, k)] * u[j * n + k];
                    sv += v[k * n + i] * b[(k, j)];
                }
                du[j * n + i] = su;
                dv[j * n + i] = -sv;
            }
        }
    }

    // Relative accuracy per column of U and per row of U⁻¹: entries of very
    // different magnitude (decaying U, growing U⁻¹) are each resolved.
    fn error_scale(&self, y_old: &[f64], y_new: &[f64], tol: f64, scale: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let mag = |i: usize| y_old[i].abs().max(y_new[i].abs());
        for j in 0..n {
            let m = (0..n).map(|i| mag(j * n + i)).fold(0.0, f64::max).max(1e-300);
            for i in 0..n {
                scale[j * n + i] = tol * m;
            }
        }
        for i in 0..n {
            let m = (0..n).map(|j| mag(nn + j * n + i)).fold(0.0, f64::max).max(1e-300);
            for j in 0..n {
                scale[nn + j * n + i] = tol * m;
            }
        }
    }
}

/// Sampled `U`, `U⁻¹` with continuous extension on `[0, T_max]`.
#[derive(Clone)]
pub struct PropagatorTable {
    n: usize,
    norm: NormKind,
    tol: f64,
    t_max: f64,
    grid: Vec<f64>,
    u: Vec<DMatrix<f64>>,
    uinv: Vec<DMatrix<f64>>,
    u_norm: Vec<f64>,
    uinv_norm: Vec<f64>,
    segments: Vec<DenseSegment>,
    consistency: f64,
    closed_form: Option<PropagatorFn>,
}

impl std::fmt::Debug for PropagatorTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropagatorTable")
            .field("dim", &self.n)
            .field("norm", &self.norm)
            .field("tol", &self.tol)
            .field("t_max", &self.t_max)
            .field("nodes", &self.grid.len())
            .field("consistency", &self.consistency)
            .finish()
    }
}

/// Integrates `U` and `U⁻¹` over `[0, t_max]` with per-step tolerance `tol`.
///
/// The product `U(tᵢ)U⁻¹(tᵢ)` is checked against the identity at every node;
/// when the residual exceeds `100·tol` the integration is repeated at a
/// tighter tolerance.
pub fn propagate(b: &MatrixFunction, t_max: f64, tol: f64, norm: NormKind) -> Result<PropagatorTable, PropagatorError> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(PropagatorError::Invalid(format!("T_max must be positive (got {t_max})")));
    }
    if !(tol > 0.0) {
        return Err(PropagatorError::Invalid(format!("tol must be positive (got {tol})")));
    }
    let limit = 100.0 * tol;
    let mut run_tol = tol;
    let mut last = None;
    for _ in 0..MAX_RETRIES {
        let mut table = integrate_once(b, t_max, run_tol, norm)?;
        let (t, residual) = table.worst_consistency();
        if residual <= limit {
            table.tol = tol;
            return Ok(table);
        }
        last = Some((t, residual));
        run_tol /= 10.0;
    }
    let (t, residual) = last.expect("at least one attempt");
    Err(PropagatorError::Inconsistent { t, residual, limit })
}

fn integrate_once(b: &MatrixFunction, t_max: f64, tol: f64, norm: NormKind) -> Result<PropagatorTable, PropagatorError> {
    let n = b.dim();
    let nn = n * n;
    let sys = MatrixSystem { b, n };
    let mut y0 = vec![0.0; 2 * nn];
    for i in 0..n {
        y0[i * n + i] = 1.0;
        y0[nn + i * n + i] = 1.0;
    }
    let mut opts = StepperOptions::new(tol);
    opts.h_max = t_max / MIN_STEPS;

    let ident = DMatrix::<f64>::identity(n, n);
    let mut table = PropagatorTable {
        n,
        norm,
        tol,
        t_max,
        grid: vec![0.0],
        u: vec![ident.clone()],
        uinv: vec![ident],
        u_norm: vec![1.0],
        uinv_norm: vec![1.0],
        segments: Vec::new(),
        consistency: 0.0,
        closed_form: b.closed_form().cloned(),
    };
    ode::integrate(&sys, 0.0, &y0, t_max, &opts, |step| {
        let u = DMatrix::from_column_slice(n, n, &step.y_new[..nn]);
        let v = DMatrix::from_column_slice(n, n, &step.y_new[nn..]);
        table.u_norm.push(operator_norm_unchecked(&u, norm));
        table.uinv_norm.push(operator_norm_unchecked(&v, norm));
        table.u.push(u);
        table.uinv.push(v);
        table.grid.push(step.t_new);
        table.segments.push(step.dense.clone());
        Control::Continue
    })?;
    // the final node lands on t_max up to rounding
    if let Some(last) = table.grid.last_mut() {
        *last = t_max;
    }
    let (_, c) = table.worst_consistency();
    table.consistency = c;
    Ok(table)
}

impl PropagatorTable {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn u_nodes(&self) -> &[DMatrix<f64>] {
        &self.u
    }

    pub fn uinv_nodes(&self) -> &[DMatrix<f64>] {
        &self.uinv
    }

    /// `‖U(tᵢ)‖` at the grid nodes.
    pub fn u_norms(&self) -> &[f64] {
        &self.u_norm
    }

    /// `‖U⁻¹(tᵢ)‖` at the grid nodes.
    pub fn uinv_norms(&self) -> &[f64] {
        &self.uinv_norm
    }

    /// Largest `‖U(tᵢ)U⁻¹(tᵢ) − I‖` over the grid.
    pub fn consistency(&self) -> f64 {
        self.consistency
    }

    pub fn closed_form(&self) -> Option<&PropagatorFn> {
        self.closed_form.as_ref()
    }

    fn worst_consistency(&self) -> (f64, f64) {
        let ident = DMatrix::<f64>::identity(self.n, self.n);
        let mut worst = (0.0, 0.0);
        for (i, t) in self.grid.iter().enumerate() {
            let r = operator_norm_unchecked(&(&self.u[i] * &self.uinv[i] - &ident), self.norm);
            if !(r <= worst.1) {
                worst = (*t, r);
            }
        }
        worst
    }

    fn check(&self, t: f64) -> Result<f64, PropagatorError> {
        let slack = 1e-12 * self.t_max;
        if !(t >= -slack && t <= self.t_max + slack) {
            return Err(PropagatorError::OutOfRange { t, t_max: self.t_max });
        }
        Ok(t.clamp(0.0, self.t_max))
    }

    fn segment(&self, t: f64) -> &DenseSegment {
        let i = self.grid.partition_point(|&x| x <= t);
        let i = i.saturating_sub(1).min(self.segments.len() - 1);
        &self.segments[i]
    }

    fn fill(&self, t: f64, offset: usize, out: &mut DMatrix<f64>) {
        let nn = self.n * self.n;
        let seg = self.segment(t);
        let theta = if seg.h > 0.0 { (t - seg.t0) / seg.h } else { 0.0 };
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &seg.r;
        let dst = out.as_mut_slice();
        for k in 0..nn {
            let i = offset + k;
            dst[k] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    /// Writes `U(t)` into `out` without range checks on `t`.
    pub fn u_into(&self, t: f64, out: &mut DMatrix<f64>) {
        if t == 0.0 {
            out.fill_with_identity();
        } else {
            self.fill(t, 0, out);
        }
    }

    /// Writes `U⁻¹(t)` into `out` without range checks on `t`.
    pub fn uinv_into(&self, t: f64, out: &mut DMatrix<f64>) {
        if t == 0.0 {
            out.fill_with_identity();
        } else {
            self.fill(t, self.n * self.n, out);
        }
    }

    pub fn eval_u(&self, t: f64) -> Result<DMatrix<f64>, PropagatorError> {
        let t = self.check(t)?;
        let mut m = DMatrix::zeros(self.n, self.n);
        self.u_into(t, &mut m);
        Ok(m)
    }

    pub fn eval_uinv(&self, xi: f64) -> Result<DMatrix<f64>, PropagatorError> {
        let xi = self.check(xi)?;
        let mut m = DMatrix::zeros(self.n, self.n);
        self.uinv_into(xi, &mut m);
        Ok(m)
    }

    /// `U(t, ξ) = U(t)·U⁻¹(ξ)` for `0 ≤ ξ ≤ t ≤ T_max`.
    pub fn eval_u_two(&self, t: f64, xi: f64) -> Result<DMatrix<f64>, PropagatorError> {
        let t = self.check(t)?;
        let xi = self.check(xi)?;
        if xi > t {
            return Err(PropagatorError::Order { t, xi });
        }
        if xi == t {
            return Ok(DMatrix::identity(self.n, self.n));
        }
        Ok(self.eval_u(t)? * self.eval_uinv(xi)?)
    }

    pub fn u_norm_at(&self, t: f64) -> f64 {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.u_into(t, &mut m);
        operator_norm_unchecked(&m, self.norm)
    }

    pub fn uinv_norm_at(&self, t: f64) -> f64 {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.uinv_into(t, &mut m);
        operator_norm_unchecked(&m, self.norm)
    }

    /// Largest `|det U(t) − exp ∫₀ᵗ tr B| / exp ∫₀ᵗ tr B` over `samples + 1`
    /// uniform times.
    pub fn liouville_deviation(&self, b: &MatrixFunction, samples: usize) -> Result<f64, crate::quad::QuadError> {
        let opts = crate::quad::QuadOptions {
            rel_tol: 1e-12,
            ..Default::default()
        };
        let mut worst = 0.0f64;
        let mut acc = 0.0;
        let mut prev = 0.0;
        let mut m = DMatrix::zeros(self.n, self.n);
        for k in 1..=samples {
            let t = self.t_max * k as f64 / samples as f64;
            acc += crate::quad::gk::integrate(|x| b.trace(x), prev, t, &opts)?.value;
            prev = t;
            self.u_into(t, &mut m);
            let expected = acc.exp();
            worst = worst.max((m.determinant() - expected).abs() / expected);
        }
        Ok(worst)
    }

    /// Writes the table as CSV: `t`, `U` and `U⁻¹` entries (row-major),
    /// `norm_U`, `norm_Uinv`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), crate::report::ReportError> {
        let n = self.n;
        let mut header = vec!["t".to_string()];
        for name in ["U", "Uinv"] {
            for i in 0..n {
                for j in 0..n {
                    header.push(format!("{name}_{}{}", i + 1, j + 1));
                }
            }
        }
        header.push("norm_U".into());
        header.push("norm_Uinv".into());
        let mut out = crate::report::CsvOut::new(w, "propagator", &header)?;
        for (k, t) in self.grid.iter().enumerate() {
            let mut row = Vec::with_capacity(header.len());
            row.push(*t);
            for m in [&self.u[k], &self.uinv[k]] {
                for i in 0..n {
                    for j in 0..n {
                        row.push(m[(i, j)]);
                    }
                }
            }
            row.push(self.u_norm[k]);
            row.push(self.uinv_norm[k]);
            out.row(&row)?;
        }
        out.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::ScalarFunction;

    fn diag_cos() -> MatrixFunction {
        MatrixFunction::diagonal(vec![
            ScalarFunction::parse("cos(t)").unwrap(),
            ScalarFunction::parse("-cos(t)").unwrap(),
        ])
    }

    #[test]
    fn zero_generator_gives_identity() {
        let b = MatrixFunction::new(2, vec![ScalarFunction::zero(); 4]).unwrap();
        let tab = propagate(&b, 5.0, DEFAULT_TOL, NormKind::L2).unwrap();
        for t in [0.0, 1.3, 5.0] {
            assert_eq!(tab.eval_u(t).unwrap(), DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn scalar_exponential() {
        let b = MatrixFunction::diagonal(vec![ScalarFunction::constant(-1.0)]);
        let tab = propagate(&b, 3.0, DEFAULT_TOL, NormKind::L2).unwrap();
        let u = tab.eval_u(2.0).unwrap()[(0, 0)];
        assert!((u - 0.1353352832366127).abs() < 1e-8 * 0.1353352832366127 * 10.0);
        let v = tab.eval_uinv(2.0).unwrap()[(0, 0)];
        assert!((u * v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn diagonal_cos_matches_closed_form() {
        let tab = propagate(&diag_cos(), 12.0, DEFAULT_TOL, NormKind::L2).unwrap();
        for k in 0..=40 {
            let t = 0.3 * k as f64;
            let u = tab.eval_u(t).unwrap();
            assert!((u[(0, 0)] - t.sin().exp()).abs() < 1e-7);
            assert!((u[(1, 1)] - (-t.sin()).exp()).abs() < 1e-7);
            assert_eq!(u[(0, 1)], 0.0);
            assert_eq!(u[(1, 0)], 0.0);
        }
    }

    #[test]
    fn two_parameter_identity_and_range() {
        let tab = propagate(&diag_cos(), 4.0, DEFAULT_TOL, NormKind::L2).unwrap();
        let m = tab.eval_u_two(2.5, 2.5).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
        assert!(matches!(tab.eval_u(4.5), Err(PropagatorError::OutOfRange { .. })));
        assert!(matches!(tab.eval_uinv(-0.1), Err(PropagatorError::OutOfRange { .. })));
        assert!(matches!(tab.eval_u_two(1.0, 2.0), Err(PropagatorError::Order { .. })));
    }

    #[test]
    fn consistency_is_recorded() {
        let rows = vec![
            vec!["0".to_string(), "1".to_string()],
            vec!["-1".to_string(), "-0.1*cos(t)".to_string()],
        ];
        let b = MatrixFunction::parse(&rows).unwrap();
        let tab = propagate(&b, 10.0, DEFAULT_TOL, NormKind::L2).unwrap();
        assert!(tab.consistency() <= 100.0 * DEFAULT_TOL);
    }
}
