//! Split-space gate: the `A` part must be dissipative in the metric
//! induced by `U⁻¹`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Analysis, Certificate, LoggedCheck, TheoremId};
use crate::coeffs::ProblemSpec;
use crate::propagator::PropagatorTable;

const TIME_SAMPLES: usize = 50;
const STATE_SAMPLES: usize = 20;
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct DissipativityReport {
    pub samples: usize,
    /// Largest `⟨V u, V A u⟩ / (‖V u‖‖V A u‖)` seen, `V = U⁻¹(t) ⊗ I`.
    pub max_ratio: f64,
    pub holds: bool,
    pub witness_t: Option<f64>,
    pub witness_u: Option<Vec<f64>>,
}

/// `y[i*m+k] = Σ_j V_ij x[j*m+k]`
fn apply_block(v: &DMatrix<f64>, x: &[f64], m: usize, y: &mut [f64]) {
    let n = v.nrows();
    for i in 0..n {
        for k in 0..m {
            y[i * m + k] = (0..n).map(|j| v[(i, j)] * x[j * m + k]).sum();
        }
    }
}

/// Samples `Re⟨(U⁻¹)*U⁻¹Au, u⟩ ≤ 0` at grid times and random states.
pub fn dissipativity_check(spec: &ProblemSpec, table: &PropagatorTable, seed: u64) -> DissipativityReport {
    let Some(a) = spec.a_diagonal() else {
        return DissipativityReport {
            samples: 0,
            max_ratio: 0.0,
            holds: true,
            witness_t: None,
            witness_u: None,
        };
    };
    let n = table.dim();
    let m = spec.space.multiplicity();
    let dim = n * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DMatrix::zeros(n, n);
    let (mut u, mut au, mut y, mut z) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut worst = (f64::NEG_INFINITY, 0.0, Vec::new());
    for ti in 0..TIME_SAMPLES {
        let t = table.t_max() * ti as f64 / (TIME_SAMPLES - 1) as f64;
        table.uinv_into(t, &mut v);
        for _ in 0..STATE_SAMPLES {
            for ((x, ax), l) in u.iter_mut().zip(au.iter_mut()).zip(&a) {
                *x = rng.random_range(-1.0..1.0);
                *ax = l * *x;
            }
            apply_block(&v, &u, m, &mut y);
            apply_block(&v, &au, m, &mut z);
            let ip: f64 = y.iter().zip(&z).map(|(a, b)| a * b).sum();
            let scale = y.iter().map(|x| x * x).sum::<f64>().sqrt() * z.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = if scale > 0.0 { ip / scale } else { 0.0 };
            if ratio > worst.0 {
                worst = (ratio, t, u.clone());
            }
        }
    }
    let holds = worst.0 <= REL_TOL;
    DissipativityReport {
        samples: TIME_SAMPLES * STATE_SAMPLES,
        max_ratio: worst.0,
        holds,
        witness_t: (!holds).then_some(worst.1),
        witness_u: (!holds).then_some(worst.2),
    }
}

/// Runs `inner` only if the dissipativity sample passes.
pub(super) fn gate<F: FnOnce(&Analysis) -> Certificate>(a: &Analysis, id: TheoremId, inner: F) -> Certificate {
    let report = dissipativity_check(a.spec, a.table, 0xd155);
    if !report.holds {
        let mut c = Certificate::rejected(
            id,
            format!(
                "dissipativity fails at t = {} (ratio {:e})",
                report.witness_t.unwrap_or(f64::NAN),
                report.max_ratio
            ),
        );
        c.check(LoggedCheck::at_most("sampled ⟨U⁻¹u, U⁻¹Au⟩ ≤ 0", report.max_ratio, REL_TOL));
        return c;
    }
    let mut c = inner(a);
    c.constant("dissipativity_max_ratio", report.max_ratio);
    c.checks.insert(0, LoggedCheck::at_most("sampled ⟨U⁻¹u, U⁻¹Au⟩ ≤ 0", report.max_ratio, REL_TOL));
    c
}
