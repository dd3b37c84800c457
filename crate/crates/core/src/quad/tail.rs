//! Exponential envelopes fitted on the window, used to bound contributions
//! from beyond `T_max`.
//!
//! A candidate envelope is accepted only if it is *stable*: the constant
//! fitted on the whole window exceeds the one fitted on the first half by at
//! most [`GROWTH_TOL`]. Growth that only shows up late in the window thus
//! rejects the candidate. This is numerical evidence, not a proof.

use nalgebra::DMatrix;
use serde::Serialize;

use super::Kernel;
use crate::linalg::operator_norm_unchecked;
use crate::par::{self, Exec};
use crate::propagator::PropagatorTable;

pub const GROWTH_TOL: f64 = 1e-2;

fn sample_count(t_max: f64) -> usize {
    ((8.0 * t_max).ceil() as usize).clamp(160, 400)
}

/// Rates tried for the exponential envelopes: zero and log-spaced values in
/// `[1e-3, 1e2]`. A positive rate must decay by at least a factor `e` over
/// the window, otherwise it cannot be told apart from no decay.
fn rates(t_max: f64) -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain(
        (0..=50)
            .map(|k| 10f64.powf((k as f64 - 30.0) / 10.0))
            .filter(move |r| r * t_max >= 1.0),
    )
}

/// Fit of `k(t, ξ) ≤ K e^{−μ(t−ξ)} e^{λξ}` over sampled pairs `t ≥ ξ`.
/// Growth along the diagonal (`λ > 0`) appears for non-normal or split
/// kernels and is only usable against a weight decaying faster than `e^{−λξ}`.
#[derive(Debug, Clone, Serialize)]
pub struct PairFit {
    pub stable: bool,
    /// Stable `(μ, λ, K)` candidates.
    #[serde(skip)]
    pub candidates: Vec<(f64, f64, f64)>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<f64>,
    pub samples: usize,
}

impl PairFit {
    /// Smallest bound over stable candidates on `sup_{t > T} ∫₀ᵗ k w`, with
    /// `A_T = ∫₀^T e^{−μ(T−ξ)} e^{λξ} w` supplied by `a_t(μ, λ)`:
    /// `K·min(max(A_T, w̄/μ), A_T + W)` for `λ = 0`, and in general
    /// `K·(A_T + w(T) e^{λT}/max(μ, r−λ))` for `w(ξ) ≤ w(T) e^{−r(ξ−T)}`,
    /// `w_exp = (w(T), r)`, `r > λ`. Records the chosen candidate.
    pub fn tail_bound<A: Fn(f64, f64) -> f64>(
        &mut self,
        t_max: f64,
        a_t: A,
        w_sup: Option<f64>,
        w_int: Option<f64>,
        w_exp: Option<(f64, f64)>,
    ) -> Option<f64> {
        let mut best: Option<(f64, f64, f64, f64)> = None;
        for &(mu, lambda, k) in &self.candidates {
            let flat = lambda == 0.0;
            let via_exp = match w_exp {
                Some((w, r)) if r > lambda => Some((w, (lambda * t_max).exp() / mu.max(r - lambda))),
                _ => None,
            };
            let via_sup = match w_sup {
                Some(s) if flat && mu > 0.0 => Some(s / mu),
                _ => None,
            };
            let via_int = w_int.filter(|_| flat);
            if via_exp.is_none() && via_sup.is_none() && via_int.is_none() {
                continue;
            }
            let a = a_t(mu, lambda);
            let inner = [
                via_sup.map(|x| a.max(x)),
                via_int.map(|w| a + w),
                via_exp.map(|(w, f)| a + w * f),
            ]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min);
            let b = k * inner;
            if b.is_finite() && best.is_none_or(|(bb, ..)| b < bb) {
                best = Some((b, mu, lambda, k));
            }
        }
        let (b, mu, lambda, k) = best?;
        self.mu = Some(mu);
        self.lambda = Some(lambda);
        self.k = Some(k);
        Some(b)
    }
}

pub fn fit_pair_kernel(table: &PropagatorTable, kernel: Kernel, exec: Exec) -> PairFit {
    let t_max = table.t_max();
    let m = sample_count(t_max);
    let s: Vec<f64> = (0..=m).map(|i| t_max * i as f64 / m as f64).collect();
    let n = table.dim();
    let norm = table.norm_kind();
    let (us, vs): (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) = s
        .iter()
        .map(|&t| {
            let mut u = DMatrix::zeros(n, n);
            let mut v = DMatrix::zeros(n, n);
            table.u_into(t, &mut u);
            table.uinv_into(t, &mut v);
            (u, v)
        })
        .unzip();
    let un: Vec<f64> = us.iter().map(|u| operator_norm_unchecked(u, norm)).collect();
    let vn: Vec<f64> = vs.iter().map(|v| operator_norm_unchecked(v, norm)).collect();
    // rows[i][j] = k(s_i, s_j), j ≤ i
    let rows: Vec<Vec<f64>> = par::map(exec, s.len(), |i| {
        let mut prod = DMatrix::zeros(n, n);
        (0..=i)
            .map(|j| match kernel {
                Kernel::Plain => 1.0,
                Kernel::Split => un[i] * vn[j],
                Kernel::TwoParam => {
                    us[i].mul_to(&vs[j], &mut prod);
                    operator_norm_unchecked(&prod, norm)
                }
            })
            .collect()
    });
    let half = t_max / 2.0;
    let mut candidates = Vec::new();
    for mu in rates(t_max) {
        let mut full = 0.0f64;
        let mut first = 0.0f64;
        for (i, row) in rows.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                let v = k * (mu * (s[i] - s[j])).exp();
                full = full.max(v);
                if s[i] <= half {
                    first = first.max(v);
                }
            }
        }
        if full.is_finite() && full <= first * (1.0 + GROWTH_TOL) {
            candidates.push((mu, 0.0, full));
        }
    }
    // Diagonal growth, tried only when no flat envelope exists. Rates are
    // capped so that e^{μsᵢ} and e^{−(μ+λ)sⱼ} stay finite and normal.
    let pairs: Vec<(f64, f64)> = if candidates.is_empty() {
        let r: Vec<f64> = rates(t_max).collect();
        r.iter()
            .flat_map(|&mu| r.iter().filter(|&&l| l > 0.0).map(move |&l| (mu, l)))
            .filter(|(mu, l)| (mu + l) * t_max <= 700.0)
            .collect()
    } else {
        Vec::new()
    };
    let fits = par::map(exec, pairs.len(), |idx| {
        let (mu, lambda) = pairs[idx];
        // k·e^{μ(sᵢ−sⱼ)}·e^{−λsⱼ} = k·e^{μsᵢ}·e^{−(μ+λ)sⱼ}
        let ej: Vec<f64> = s.iter().map(|t| (-(mu + lambda) * t).exp()).collect();
        let mut full = 0.0f64;
        let mut first = 0.0f64;
        for (i, row) in rows.iter().enumerate() {
            let row_max = row.iter().zip(&ej).fold(0.0f64, |m, (k, e)| m.max(k * e)) * (mu * s[i]).exp();
            full = full.max(row_max);
            if s[i] <= half {
                first = first.max(row_max);
            }
        }
        (full.is_finite() && full <= first * (1.0 + GROWTH_TOL)).then_some((mu, lambda, full))
    });
    candidates.extend(fits.into_iter().flatten());
    PairFit {
        stable: !candidates.is_empty(),
        candidates,
        mu: None,
        lambda: None,
        k: None,
        samples: s.len(),
    }
}

/// Fit of `h(ξ) ≤ G e^{−νξ}` on the window; `ν < 0` admits growth, which
/// only a weight with a faster exponential tail can absorb.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub stable: bool,
    #[serde(skip)]
    pub candidates: Vec<(f64, f64)>,
    pub nu: Option<f64>,
    pub g: Option<f64>,
    pub samples: usize,
}

impl DecayFit {
    /// Smallest bound on `∫_T^∞ h w` over stable candidates:
    /// `G e^{−νT}·min(w̄/ν, W, w(T)/(ν+r))`, the last term for a weight with
    /// `w(ξ) ≤ w(T) e^{−r(ξ−T)}` given as `w_exp = (w(T), r)`.
    pub fn tail_bound(&mut self, t_max: f64, w_sup: Option<f64>, w_int: Option<f64>, w_exp: Option<(f64, f64)>) -> Option<f64> {
        let mut best: Option<(f64, f64, f64)> = None;
        for &(nu, g) in &self.candidates {
            let via_sup = match w_sup {
                Some(s) if nu > 0.0 => Some(s / nu),
                _ => None,
            };
            let via_int = w_int.filter(|_| nu >= 0.0);
            let via_exp = match w_exp {
                Some((w, r)) if nu + r > 0.0 => Some(w / (nu + r)),
                _ => None,
            };
            let Some(inner) = [via_sup, via_int, via_exp].into_iter().flatten().reduce(f64::min) else {
                continue;
            };
            let b = g * (-nu * t_max).exp() * inner;
            if b.is_finite() && best.is_none_or(|(bb, _, _)| b < bb) {
                best = Some((b, nu, g));
            }
        }
        let (b, nu, g) = best?;
        self.nu = Some(nu);
        self.g = Some(g);
        Some(b)
    }
}

pub fn fit_decay<H: Fn(f64) -> f64 + Sync>(t_max: f64, h: H, exec: Exec) -> DecayFit {
    let m = sample_count(t_max);
    let s: Vec<f64> = (0..=m).map(|i| t_max * i as f64 / m as f64).collect();
    let hv = par::map(exec, s.len(), |i| h(s[i]));
    let half = t_max / 2.0;
    let mut candidates = Vec::new();
    let growth: Vec<f64> = rates(t_max).filter(|r| *r > 0.0).map(|r| -r).collect();
    for nu in rates(t_max).chain(growth) {
        let mut full = 0.0f64;
        let mut first = 0.0f64;
        for (t, v) in s.iter().zip(&hv) {
            let x = v * (nu * t).exp();
            full = full.max(x);
            if *t <= half {
                first = first.max(x);
            }
        }
        if full.is_finite() && full <= first * (1.0 + GROWTH_TOL) {
            candidates.push((nu, full));
        }
    }
    DecayFit {
        stable: !candidates.is_empty(),
        candidates,
        nu: None,
        g: None,
        samples: s.len(),
    }
}
