use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::ScalarFunction;
use crate::linalg::{vec_norm, NormKind};
use crate::quad::gk::{integrate_vec, QuadOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HolderError {
    #[error("quadrature did not converge at t = {t}, u = {u:?}")]
    Quadrature { t: f64, u: Vec<f64> },
    #[error("invalid option: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct HolderOptions {
    pub samples: usize,
    /// Radius of the sampling ball; the bound is only claimed on this ball.
    pub radius: f64,
    pub t_max: f64,
    pub dim: usize,
    pub norm: NormKind,
    pub seed: u64,
}

impl HolderOptions {
    pub fn new(dim: usize, t_max: f64) -> Self {
        HolderOptions {
            samples: 1000,
            radius: 1.0,
            t_max,
            dim,
            norm: NormKind::L2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleReport {
    pub samples: usize,
    /// Largest observed `‖G(t,u)‖ / (α(t)‖u‖^{q+1})`.
    pub max_ratio: f64,
    pub witness_t: f64,
    pub witness_u: Vec<f64>,
    pub violations: usize,
}

/// Samples `(t, u)` in `[0, T] × B(0, R)`, reconstructs
/// `G(t,u) = ∫₀¹ [F'(t, ξu) − F'(t, 0)] u dξ` by quadrature and compares it
/// with `α(t)‖u‖^{q+1}`.
pub fn holder_alpha_bound<F>(f_prime: F, q: f64, alpha: &ScalarFunction, opts: &HolderOptions) -> Result<SampleReport, HolderError>
where
    F: Fn(f64, &[f64]) -> DMatrix<f64>,
{
    if !(q > 0.0) {
        return Err(HolderError::Invalid(format!("q must be positive (got {q})")));
    }
    if opts.dim == 0 || !(opts.radius > 0.0) {
        return Err(HolderError::Invalid("dimension and radius must be positive".into()));
    }
    let n = opts.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let quad = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 1e-14,
        ..Default::default()
    };
    let mut report = SampleReport {
        samples: opts.samples,
        max_ratio: 0.0,
        witness_t: 0.0,
        witness_u: vec![0.0; n],
        violations: 0,
    };
    let zero = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut xu = vec![0.0; n];
    for _ in 0..opts.samples {
        let t = rng.random_range(0.0..=opts.t_max);
        u.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        let un = vec_norm(&u, opts.norm);
        if un == 0.0 {
            continue;
        }
        let r = opts.radius * rng.random::<f64>().powf(1.0 / n as f64);
        u.iter_mut().for_each(|x| *x *= r / un);
        let un = vec_norm(&u, opts.norm);

        let j0 = f_prime(t, &zero);
        let uv = DVector::from_column_slice(&u);
        let (g, _) = integrate_vec(
            |xi, out| {
                for (d, s) in xu.iter_mut().zip(&u) {
                    *d = xi * s;
                }
                let jd = f_prime(t, &xu) - &j0;
                let v = jd * &uv;
                out.copy_from_slice(v.as_slice());
            },
            0.0,
            1.0,
            n,
            &quad,
        )
        .map_err(|_| HolderError::Quadrature { t, u: u.clone() })?;

        let gn = vec_norm(&g, opts.norm);
        let bound = alpha.eval(t) * un.powf(q + 1.0);
        let ratio = if bound > 0.0 {
            gn / bound
        } else if gn <= 1e-15 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > 1.0 + 1e-9 {
            report.violations += 1;
        }
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.witness_t = t;
            report.witness_u.copy_from_slice(&u);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_scalar_ratio_is_one() {
        // F(t,u) = α(t) u², F' = 2α u, G = α u²
        let alpha = ScalarFunction::parse("exp(-t)").unwrap();
        let a2 = alpha.clone();
        let r = holder_alpha_bound(
            move |t, u| DMatrix::from_element(1, 1, 2.0 * a2.eval(t) * u[0]),
            1.0,
            &alpha,
            &HolderOptions::new(1, 5.0),
        )
        .unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-10, "{}", r.max_ratio);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn linear_map_has_zero_ratio() {
        let r = holder_alpha_bound(
            |t, _u| DMatrix::from_row_slice(2, 2, &[t.cos(), 1.0, 0.0, -1.0]),
            1.0,
            &ScalarFunction::constant(1.0),
            &HolderOptions::new(2, 3.0),
        )
        .unwrap();
        assert_eq!(r.max_ratio, 0.0);
    }

    #[test]
    fn sine_cubic_bound() {
        // F = sin u − u, G = F, |sin u − u| ≤ |u|³/6 with α = 1/6, q = 2
        let r = holder_alpha_bound(
            |_t, u| DMatrix::from_element(1, 1, u[0].cos() - 1.0),
            2.0,
            &ScalarFunction::constant(1.0 / 6.0),
            &HolderOptions::new(1, 1.0),
        )
        .unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_ratio <= 1.0 && r.max_ratio > 0.95, "{}", r.max_ratio);
    }
}
