//! Matrix exponential by scaling and squaring with the degree-13 Padé
//! approximant (Higham 2005).

use nalgebra::DMatrix;

use super::{ensure_finite, ensure_square, norm1};
use crate::{Error, Result, Scalar};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// `e^A` for a square matrix.
///
/// Fails on non-square or non-finite input, and reports [`Error::Overflow`]
/// instead of returning infinities when the result is not representable.
pub fn expm<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = ensure_square(a)?;
    ensure_finite(a, "matrix exponential input")?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if n == 1 {
        let e = a[(0, 0)].exp();
        if !e.is_finite() {
            return Err(Error::Overflow(a[(0, 0)].as_f64()));
        }
        return Ok(DMatrix::from_element(1, 1, e));
    }

    let norm = norm1(a);
    let theta = T::lit(THETA13);
    let mut squarings = 0u32;
    let mut scaled = a.clone();
    if norm > theta {
        let s = (norm / theta).log2().ceil();
        squarings = s.as_f64() as u32;
        if squarings > 1100 {
            return Err(Error::Overflow(norm.as_f64()));
        }
        scaled /= T::lit(2f64.powi(squarings as i32));
    }

    let b = |k: usize| T::lit(PADE13[k]);
    let ident = DMatrix::<T>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = &scaled * (&a6 * u_inner + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let v_inner = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * v_inner + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::Singular("Padé denominator"))?;
    for _ in 0..squarings {
        r = &r * &r;
        if !r.iter().all(|x| x.is_finite()) {
            return Err(Error::Overflow(norm.as_f64()));
        }
    }
    if !r.iter().all(|x| x.is_finite()) {
        return Err(Error::Overflow(norm.as_f64()));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Truncated Taylor series; only valid for small norms.
    fn taylor(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..terms {
            term = &term * a / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn zero_is_identity() {
        let e = expm(&DMatrix::<f64>::zeros(2, 2)).unwrap();
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((e - want).abs().max() < 1e-15);
    }

    #[test]
    fn matches_taylor_on_small_norm() {
        // Deterministic pseudo-random entries scaled to 1-norm <= 1.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let mut a = DMatrix::from_fn(4, 4, |_, _| next());
            let n = norm1(&a);
            a /= n;
            let diff = (expm(&a).unwrap() - taylor(&a, 30)).abs().max();
            assert!(diff <= 1e-12, "diff {diff}");
        }
    }

    #[test]
    fn large_norm_relative_accuracy() {
        // e^{tA} for a generator: rows must stay stochastic even when scaled.
        let q = DMatrix::from_row_slice(3, 3, &[-3.0, 2.0, 1.0, 0.5, -1.0, 0.5, 4.0, 0.0, -4.0]);
        let e = expm(&(&q * 250.0)).unwrap();
        for i in 0..3 {
            let s: f64 = e.row(i).sum();
            assert!((s - 1.0).abs() < 1e-12, "row {i} sum {s}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            expm(&DMatrix::<f64>::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let big = DMatrix::from_row_slice(2, 2, &[800.0, 0.0, 0.0, 1.0]);
        assert!(matches!(expm(&big), Err(Error::Overflow(_))));
        assert!(matches!(
            expm(&DMatrix::from_element(1, 1, 1e3)),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn single_precision() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0f32, 1.0, 0.5, -0.5]);
        let e = expm(&a).unwrap();
        for i in 0..2 {
            assert!((e.row(i).sum() - 1.0).abs() < 1e-5);
        }
    }
}
