//! Dense real linear-algebra kernels shared by the analytic modules.

mod expm;
mod generator;
mod quadratic;

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result, Scalar};

pub use expm::expm;
pub use generator::{is_irreducible, stationary_of_generator};
pub use quadratic::{quadratic_eigenpairs, QuadraticPencil, SpectralData, ZeroRoot};

pub(crate) use quadratic::eigenpairs_with;

/// Dense real matrix; rows and columns may be zero for empty phase classes.
pub type RealMatrix<T> = DMatrix<T>;

/// Largest admissible 1-norm condition estimate for a solve.
pub const MAX_CONDITION: f64 = 1e12;

pub(crate) fn ensure_square<T: Scalar>(a: &DMatrix<T>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub(crate) fn ensure_finite<T: Scalar>(a: &DMatrix<T>, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Induced 1-norm (max column sum).
pub fn norm1<T: Scalar>(a: &DMatrix<T>) -> T {
    a.column_iter()
        .map(|c| c.iter().fold(T::zero(), |s, x| s + x.abs()))
        .fold(T::zero(), |m, x| m.max(x))
}

/// Induced infinity norm (max row sum).
pub fn norm_inf<T: Scalar>(a: &DMatrix<T>) -> T {
    a.row_iter()
        .map(|r| r.iter().fold(T::zero(), |s, x| s + x.abs()))
        .fold(T::zero(), |m, x| m.max(x))
}

/// Entrywise max-abs.
pub fn max_abs<T: Scalar>(a: &DMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Inverse with a 1-norm condition check; empty matrices invert to empty.
pub fn inverse<T: Scalar>(a: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = a.clone().lu().try_inverse().ok_or(Error::Singular(what))?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > T::lit(MAX_CONDITION) {
        return Err(Error::IllConditioned {
            what,
            cond: cond.as_f64(),
        });
    }
    Ok(inv)
}

/// 1-norm condition estimate `‖A‖₁‖A⁻¹‖₁`; infinite when singular.
pub fn condition_number<T: Scalar>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 {
        return T::one();
    }
    match a.clone().lu().try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => T::max_value().unwrap_or_else(T::one),
    }
}

/// Solves `A X = B` with the same conditioning guard as [`inverse`].
pub fn solve<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let n = ensure_square(a)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!(
            "{what}: right-hand side has {} rows, expected {n}",
            b.nrows()
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let inv = inverse(a, what)?;
    Ok(inv * b)
}

/// Solves the row system `X A = B`.
pub fn solve_right<T: Scalar>(
    b: &DMatrix<T>,
    a: &DMatrix<T>,
    what: &'static str,
) -> Result<DMatrix<T>> {
    Ok(solve(&a.transpose(), &b.transpose(), what)?.transpose())
}

/// Parlett–Reinsch diagonal balancing with radix 2 (exact similarity).
pub(crate) fn balance<T: Scalar>(mut a: DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    for _sweep in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut g = r / two;
            while c < g {
                f *= two;
                c *= four;
            }
            g = r * two;
            while c >= g {
                f /= two;
                c /= four;
            }
            if (c + r) / f < T::lit(0.95) * s {
                converged = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    a
}

/// All eigenvalues of a real square matrix (balanced real Schur form).
pub fn eigenvalues<T: Scalar>(a: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let n = ensure_square(a)?;
    ensure_finite(a, "eigenvalue input")?;
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex::new(a[(0, 0)], T::zero())]),
        _ => {
            let schur = nalgebra::linalg::Schur::try_new(
                balance(a.clone()),
                T::default_epsilon(),
                2000 * n,
            )
            .ok_or(Error::NoConvergence("real Schur decomposition"))?;
            Ok(schur.complex_eigenvalues().iter().copied().collect())
        }
    }
}

/// Spectral radius `max |λ|`.
pub fn spectral_radius<T: Scalar>(a: &DMatrix<T>) -> Result<T> {
    use nalgebra::ComplexField;
    Ok(eigenvalues(a)?
        .into_iter()
        .fold(T::zero(), |m, z| m.max(z.modulus())))
}

/// Column vector of ones.
pub fn ones<T: Scalar>(n: usize) -> DVector<T> {
    DVector::from_element(n, T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balancing_preserves_spectrum() {
        let a = DMatrix::<f64>::from_row_slice(3, 3, &[1.0, 1e6, 0.0, 1e-6, 2.0, 1e4, 0.0, 1e-4, 3.0]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut direct: Vec<f64> = a.clone().complex_eigenvalues().iter().map(|z| z.re).collect();
        direct.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in ev.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn inverse_rejects_singular() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(inverse(&a, "test").is_err());
        assert_eq!(inverse(&DMatrix::<f64>::zeros(0, 0), "empty").unwrap().nrows(), 0);
    }

    #[test]
    fn row_solve() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let b = DMatrix::<f64>::from_row_slice(1, 2, &[4.0, 5.0]);
        let x = solve_right(&b, &a, "test").unwrap();
        assert!((&x * &a - &b).abs().max() < 1e-14);
    }
}
