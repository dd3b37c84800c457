//! Globally adaptive 21-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::QuadError;

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077600525728272,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];
// Gauss weights for the odd Kronrod abscissae XGK[1], XGK[3], ...
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-300,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rule<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [Vec<f64>; 2]) -> (Vec<f64>, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut resabs = vec![0.0; dim];
    let mut fvals: Vec<[f64; 2]> = Vec::with_capacity(10 * dim);
    let mut fc = vec![0.0; dim];
    f(center, &mut fc);
    for d in 0..dim {
        kron[d] = WGK[10] * fc[d];
        resabs[d] = WGK[10] * fc[d].abs();
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        let [lo, hi] = buf;
        f(center - dx, lo);
        f(center + dx, hi);
        for d in 0..dim {
            let s = lo[d] + hi[d];
            kron[d] += WGK[j] * s;
            resabs[d] += WGK[j] * (lo[d].abs() + hi[d].abs());
            if j % 2 == 1 {
                gauss[d] += WG[j / 2] * s;
            }
            fvals.push([lo[d], hi[d]]);
        }
    }
    let mut err = 0.0f64;
    for d in 0..dim {
        let mean = 0.5 * kron[d];
        let mut resasc = WGK[10] * (fc[d] - mean).abs();
        for j in 0..10 {
            let [lo, hi] = fvals[j * dim + d];
            resasc += WGK[j] * ((lo - mean).abs() + (hi - mean).abs());
        }
        let resasc = resasc * half.abs();
        let mut e = ((kron[d] - gauss[d]) * half).abs();
        if resasc != 0.0 && e != 0.0 {
            e = resasc * (1.0f64).min((200.0 * e / resasc).powf(1.5));
        }
        let ra = resabs[d] * half.abs();
        if ra > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * ra);
        }
        err = err.max(e);
        kron[d] *= half;
    }
    (kron, err)
}

/// Vector-valued integral of `f` over `[a, b]`; `f(x, out)` writes `dim` values.
/// Error control uses the max-norm over components.
pub fn integrate_vec<F>(f: F, a: f64, b: f64, dim: usize, opts: &QuadOptions) -> Result<(Vec<f64>, f64), QuadError>
where
    F: FnMut(f64, &mut [f64]),
{
    if a == b {
        return Ok((vec![0.0; dim], 0.0));
    }
    integrate_vec_partition(f, &[a, b], dim, opts)
}

/// As [`integrate_vec`] over `[breaks[0], breaks[last]]`, with every piece
/// of the partition seeded into one global error heap.
pub fn integrate_vec_partition<F>(mut f: F, breaks: &[f64], dim: usize, opts: &QuadOptions) -> Result<(Vec<f64>, f64), QuadError>
where
    F: FnMut(f64, &mut [f64]),
{
    let (a, b) = match breaks {
        [first, .., last] => (*first, *last),
        _ => return Ok((vec![0.0; dim], 0.0)),
    };
    let mut buf = [vec![0.0; dim], vec![0.0; dim]];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; dim];
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = rule(&mut f, w[0], w[1], dim, &mut buf);
        for d in 0..dim {
            total[d] += v[d];
        }
        total_err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e });
    }
    loop {
        let mag = total.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if total_err <= opts.abs_tol.max(opts.rel_tol * mag) {
            break;
        }
        if total.iter().any(|x| !x.is_finite()) {
            return Err(QuadError::NonFinite { a, b });
        }
        if heap.len() >= opts.max_intervals {
            let worst = heap.peek().expect("non-empty");
            return Err(QuadError::NoConvergence {
                a: worst.a,
                b: worst.b,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a).abs() <= 1e-13 * worst.a.abs().max(worst.b.abs()).max(1e-300) {
            // cannot subdivide further; accept if the rest already meets tolerance
            return Err(QuadError::NoConvergence {
                a: worst.a,
                b: worst.b,
                error: total_err,
            });
        }
        let (vl, el) = rule(&mut f, worst.a, mid, dim, &mut buf);
        let (vr, er) = rule(&mut f, mid, worst.b, dim, &mut buf);
        for d in 0..dim {
            total[d] += vl[d] + vr[d] - worst.value[d];
        }
        total_err += el + er - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: vl, error: el });
        heap.push(Piece { a: mid, b: worst.b, value: vr, error: er });
    }
    // re-sum to shed accumulated update error
    let mut sum = vec![0.0; dim];
    let mut err = 0.0;
    for p in heap.iter() {
        for d in 0..dim {
            sum[d] += p.value[d];
        }
        err += p.error;
    }
    Ok((sum, err))
}

/// Scalar integral of `f` over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult, QuadError>
where
    F: FnMut(f64) -> f64,
{
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    integrate_partition(f, &[a, b], opts)
}

/// Scalar integral over a partition, refined under one global tolerance.
pub fn integrate_partition<F>(mut f: F, breaks: &[f64], opts: &QuadOptions) -> Result<QuadResult, QuadError>
where
    F: FnMut(f64) -> f64,
{
    let mut count = 0usize;
    let (v, e) = integrate_vec_partition(
        |x, out| {
            count += 1;
            out[0] = f(x)
        },
        breaks,
        1,
        opts,
    )?;
    Ok(QuadResult {
        value: v[0],
        error: e,
        intervals: count / 21,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_and_trig() {
        let o = QuadOptions::default();
        let r = integrate(|x| (-x).exp(), 0.0, 30.0, &o).unwrap();
        assert!((r.value - (1.0 - (-30.0f64).exp())).abs() < 1e-12);
        let r = integrate(|x| x.cos().abs(), 0.0, 10.0 * std::f64::consts::PI, &o).unwrap();
        assert!((r.value - 20.0).abs() < 1e-7);
    }

    #[test]
    fn reversed_limits_negate() {
        let o = QuadOptions::default();
        let a = integrate(|x| x.sin(), 0.0, 1.0, &o).unwrap().value;
        let b = integrate(|x| x.sin(), 1.0, 0.0, &o).unwrap().value;
        assert!((a + b).abs() < 1e-15);
    }

    #[test]
    fn kinked_integrand_converges() {
        let r = integrate(|x| (x - 0.3).abs(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-9);
    }

    #[test]
    fn partition_matches_single_interval() {
        let o = QuadOptions::default();
        let g = |x: f64| (3.0 * x).sin().abs() * (-x).exp();
        let whole = integrate(g, 0.0, 7.0, &o).unwrap().value;
        let split = integrate_partition(g, &[0.0, 2.0, 4.0, 6.0, 7.0], &o).unwrap().value;
        assert!((whole - split).abs() <= 1e-8 * whole);
    }

    #[test]
    fn vector_integrand() {
        let (v, _) = integrate_vec(
            |x, out| {
                out[0] = x;
                out[1] = x * x;
            },
            0.0,
            1.0,
            2,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_integrand_reports_failure() {
        let opts = QuadOptions {
            max_intervals: 50,
            ..Default::default()
        };
        let err = integrate(|x| 1.0 / x, 0.0, 1.0, &opts).unwrap_err();
        match err {
            QuadError::NoConvergence { a, .. } => assert!(a < 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
