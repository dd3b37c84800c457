//! Vector and induced operator norms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum NormKind {
    #[default]
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "linf")]
    LInf,
}

impl NormKind {
    pub fn parse(s: &str) -> Option<NormKind> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "2" | "euclidean" | "spectral" => Some(NormKind::L2),
            "l1" | "1" => Some(NormKind::L1),
            "linf" | "inf" | "max" => Some(NormKind::LInf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormKind::L2 => "l2",
            NormKind::L1 => "l1",
            NormKind::LInf => "linf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

pub fn vec_norm(v: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L2 => {
            // scaled to avoid overflow near the escape threshold
            let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale == 0.0 || !scale.is_finite() {
                return scale;
            }
            scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
        }
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::LInf => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// Induced operator norm. The l2 norm is the largest singular value.
pub fn operator_norm(m: &DMatrix<f64>, kind: NormKind) -> Result<f64, LinalgError> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(LinalgError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(operator_norm_unchecked(m, kind))
}

/// As [`operator_norm`] without the finiteness scan; used on hot paths over
/// matrices produced by the integrators.
pub fn operator_norm_unchecked(m: &DMatrix<f64>, kind: NormKind) -> f64 {
    let (nr, nc) = m.shape();
    match kind {
        NormKind::L1 => (0..nc)
            .map(|c| m.column(c).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::LInf => (0..nr)
            .map(|r| m.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::L2 => spectral_norm(m),
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (nr, nc) = m.shape();
    if nr == 0 || nc == 0 {
        return 0.0;
    }
    if nr == 1 && nc == 1 {
        return m[(0, 0)].abs();
    }
    if is_diagonal(m) {
        return (0..nr.min(nc)).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    }
    if nr == 2 && nc == 2 {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let s = a * a + b * b + c * c + d * d;
        let x = a * a + b * b - c * c - d * d;
        let y = 2.0 * (a * c + b * d);
        return (0.5 * (s + x.hypot(y))).sqrt();
    }
    m.singular_values().max()
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let (nr, nc) = m.shape();
    for c in 0..nc {
        for r in 0..nr {
            if r != c && m[(r, c)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Condition number `‖T‖·‖T⁻¹‖`, `None` for singular input.
pub fn condition_number(t: &DMatrix<f64>, kind: NormKind) -> Option<f64> {
    let inv = t.clone().try_inverse()?;
    Some(operator_norm_unchecked(t, kind) * operator_norm_unchecked(&inv, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_e_over_e() {
        let e = std::f64::consts::E;
        let m = DMatrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0 / e]);
        for k in [NormKind::L2, NormKind::L1, NormKind::LInf] {
            assert!((operator_norm(&m, k).unwrap() - 2.718281828459045).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_is_one() {
        for n in 1..6 {
            let m = DMatrix::<f64>::identity(n, n);
            for k in [NormKind::L2, NormKind::L1, NormKind::LInf] {
                assert_eq!(operator_norm(&m, k).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn nilpotent_jordan_block() {
        // singular values of [[0,2],[0,0]] are {2, 0}
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        assert!((operator_norm(&m, NormKind::L2).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(operator_norm(&m, NormKind::L1).unwrap(), 2.0);
        assert_eq!(operator_norm(&m, NormKind::LInf).unwrap(), 2.0);
    }

    #[test]
    fn two_by_two_matches_svd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.3, -0.7, 2.2, 0.4]);
        let direct = m.singular_values().max();
        let fast = operator_norm(&m, NormKind::L2).unwrap();
        assert!((direct - fast).abs() <= 1e-12 * direct);
        let m3 = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 0.1, -2.0]);
        let v = operator_norm(&m3, NormKind::L2).unwrap();
        assert!((v - m3.singular_values().max()).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert_eq!(
            operator_norm(&m, NormKind::L2),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        );
    }

    #[test]
    fn vector_norms() {
        let v = [3.0, -4.0];
        assert_eq!(vec_norm(&v, NormKind::L2), 5.0);
        assert_eq!(vec_norm(&v, NormKind::L1), 7.0);
        assert_eq!(vec_norm(&v, NormKind::LInf), 4.0);
        assert_eq!(vec_norm(&[0.0, 0.0], NormKind::L2), 0.0);
    }
}
