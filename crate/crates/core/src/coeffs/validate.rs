use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ProblemSpec, Space, SpecError};
use crate::linalg::vec_norm;

const GRID: usize = 1001;
const NONLINEAR_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Structural checks gate downstream use; the others are advisory.
    pub structural: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn usable(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.structural)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Converts a report with failed structural checks into an error.
    pub fn into_result(self) -> Result<Self, SpecError> {
        if self.usable() {
            return Ok(self);
        }
        let msg = self
            .failures()
            .filter(|c| c.structural)
            .map(|c| c.detail.clone())
            .collect::<Vec<_>>()
            .join("; ");
        Err(SpecError::Rejected(msg))
    }
}

fn grid(t_max: f64) -> impl Iterator<Item = f64> {
    (0..GRID).map(move |i| t_max * i as f64 / (GRID - 1) as f64)
}

fn first_negative(name: &str, f: &super::ScalarFunction, t_max: f64) -> Check {
    let bad = grid(t_max).map(|t| (t, f.eval(t))).find(|(_, v)| !(*v >= 0.0) || !v.is_finite());
    Check {
        name: format!("{name} nonnegative"),
        passed: bad.is_none(),
        structural: true,
        detail: match bad {
            None => format!("{name}(t) ≥ 0 on {GRID} grid points"),
            Some((t, v)) => format!("{name} negative or non-finite at t={t} ({name}={v})"),
        },
    }
}

/// Checks the hypotheses on the coefficient data. Deterministic: the sampled
/// checks use a fixed seed.
pub fn validate_spec(spec: &ProblemSpec) -> Result<ValidationReport, SpecError> {
    let n = spec.state_dim();
    if spec.u0.len() != n {
        return Err(SpecError::DimensionMismatch {
            what: "u0".into(),
            expected: n,
            found: spec.u0.len(),
        });
    }
    if !spec.forcing.is_empty() && spec.forcing.len() != n {
        return Err(SpecError::DimensionMismatch {
            what: "f".into(),
            expected: n,
            found: spec.forcing.len(),
        });
    }
    if !(spec.p > 1.0) || !spec.p.is_finite() {
        return Err(SpecError::Invalid(format!("exponent p must exceed 1 (got {})", spec.p)));
    }
    if !(spec.t_max > 0.0) || !spec.t_max.is_finite() {
        return Err(SpecError::Invalid(format!("T_max must be positive (got {})", spec.t_max)));
    }
    let t_max = spec.t_max;
    let norm = spec.norm();
    let mut checks = Vec::new();

    let nb = spec.b.dim();
    let mut bad_b = None;
    'outer: for t in grid(t_max) {
        for r in 0..nb {
            for c in 0..nb {
                let v = spec.b.entry(r, c).eval(t);
                if !v.is_finite() {
                    bad_b = Some((t, r, c));
                    break 'outer;
                }
            }
        }
    }
    checks.push(Check {
        name: "B bounded".into(),
        passed: bad_b.is_none(),
        structural: true,
        detail: match bad_b {
            None => "B(t) entries finite on the grid".into(),
            Some((t, r, c)) => format!("B[{r}][{c}] non-finite at t={t}"),
        },
    });

    checks.push(first_negative("alpha", &spec.alpha, t_max));
    checks.push(first_negative("beta", &spec.beta, t_max));

    let mut fbuf = vec![0.0; n];
    let mut violation = None;
    for t in grid(t_max) {
        spec.eval_forcing(t, &mut fbuf);
        let fnorm = vec_norm(&fbuf, norm);
        let b = spec.beta.eval(t);
        if !(fnorm <= b * (1.0 + 1e-12)) {
            violation = Some((t, fnorm, b));
            break;
        }
    }
    checks.push(Check {
        name: "forcing bound".into(),
        passed: violation.is_none(),
        structural: true,
        detail: match violation {
            None => "‖f‖ ≤ β on the grid".into(),
            Some((t, fnorm, b)) => format!("‖f‖ ≤ β violated at t={t} ({fnorm} > {b})"),
        },
    });

    let zero = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut g0_bad = None;
    for t in grid(t_max).step_by(10) {
        spec.eval_nonlinearity(t, &zero, &mut g);
        let gn = vec_norm(&g, norm);
        if gn != 0.0 {
            g0_bad = Some((t, gn));
            break;
        }
    }
    checks.push(Check {
        name: "G(t,0) = 0".into(),
        passed: g0_bad.is_none(),
        structural: true,
        detail: match g0_bad {
            None => "G vanishes at the origin".into(),
            Some((t, gn)) => format!("‖G(t,0)‖ = {gn} at t={t}"),
        },
    });

    // Sampled nonlinearity bound on the unit ball.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut u = vec![0.0; n];
    let mut worst = 0.0f64;
    let mut witness = None;
    for _ in 0..NONLINEAR_SAMPLES {
        let t = rng.random_range(0.0..=t_max);
        u.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        let un = vec_norm(&u, norm);
        if un == 0.0 {
            continue;
        }
        spec.eval_nonlinearity(t, &u, &mut g);
        let gn = vec_norm(&g, norm);
        let bound = spec.alpha.eval(t) * un.powf(spec.p);
        let ratio = if bound > 0.0 {
            gn / bound
        } else if gn == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > worst {
            worst = ratio;
            witness = Some(t);
        }
    }
    let ok = worst <= 1.0 + 1e-12;
    checks.push(Check {
        name: "nonlinearity bound (sampled)".into(),
        passed: ok,
        structural: true,
        detail: if ok {
            format!("max ‖G‖/(α‖u‖^p) = {worst} over {NONLINEAR_SAMPLES} samples")
        } else {
            format!(
                "‖G(t,u)‖ ≤ α(t)‖u‖^p violated at t={} (ratio {worst})",
                witness.unwrap_or(0.0)
            )
        },
    });

    let u0_ok = spec.u0.iter().all(|x| x.is_finite());
    checks.push(Check {
        name: "u0 finite".into(),
        passed: u0_ok,
        structural: true,
        detail: if u0_ok { "initial state finite".into() } else { "initial state has non-finite entries".into() },
    });

    if let Space::HilbertSplit { spectrum } = &spec.space {
        let bad = spectrum.iter().position(|l| !(*l <= 0.0) || !l.is_finite());
        checks.push(Check {
            name: "A spectrum nonpositive".into(),
            passed: bad.is_none(),
            structural: true,
            detail: match bad {
                None => format!("{} modes, all real and ≤ 0", spectrum.len()),
                Some(k) => format!("spectrum[{k}] = {} is positive", spectrum[k]),
            },
        });
    }

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{MatrixFunction, ScalarFunction};

    fn example_spec() -> ProblemSpec {
        let b = MatrixFunction::diagonal(vec![
            ScalarFunction::parse("cos(t)").unwrap(),
            ScalarFunction::parse("-cos(t)").unwrap(),
        ]);
        ProblemSpec::new(b, ScalarFunction::parse("exp(-t)").unwrap(), 2.0, vec![0.1, 0.1], 10.0)
    }

    #[test]
    fn clean_spec_passes() {
        let r = validate_spec(&example_spec()).unwrap();
        assert!(r.usable(), "{r:?}");
        assert_eq!(r.failures().count(), 0);
    }

    #[test]
    fn forcing_above_beta_is_reported() {
        let spec = example_spec().with_forcing(vec![ScalarFunction::parse("exp(-t)").unwrap(), ScalarFunction::zero()]);
        let r = validate_spec(&spec).unwrap();
        let bad: Vec<_> = r.failures().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].detail, "‖f‖ ≤ β violated at t=0 (1 > 0)");
        assert!(!r.usable());
    }

    #[test]
    fn negative_alpha_names_time() {
        let spec = example_spec().with_t_max(10.0);
        let spec = ProblemSpec {
            alpha: ScalarFunction::parse("1 - t").unwrap(),
            ..spec
        };
        let r = validate_spec(&spec).unwrap();
        let f = r.failures().next().unwrap();
        assert!(f.detail.starts_with("alpha negative or non-finite at t=1.01"), "{}", f.detail);
    }

    #[test]
    fn dimension_mismatch_rejects() {
        let spec = example_spec().with_u0(vec![0.1]);
        assert!(matches!(validate_spec(&spec), Err(SpecError::DimensionMismatch { .. })));
    }

    #[test]
    fn idempotent() {
        let spec = example_spec().with_beta(ScalarFunction::constant(0.5));
        assert_eq!(validate_spec(&spec).unwrap(), validate_spec(&spec).unwrap());
    }
}
