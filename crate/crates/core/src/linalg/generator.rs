use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, ensure_square, norm_inf};
use crate::{Error, Result, Scalar};

/// Strong connectivity of the transition graph `i -> j` iff `Q[i][j] > 0`.
pub fn is_irreducible<T: Scalar>(q: &DMatrix<T>) -> std::result::Result<(), usize> {
    let n = q.nrows();
    if n <= 1 {
        return Ok(());
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let rate = if forward { q[(i, j)] } else { q[(j, i)] };
                if j != i && !seen[j] && rate > T::zero() {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    };
    for seen in [reach(true), reach(false)] {
        if let Some(bad) = seen.iter().position(|s| !s) {
            return Err(bad);
        }
    }
    Ok(())
}

/// Stationary probability vector `π` of an irreducible conservative
/// generator: `πᵀQ = 0`, `π > 0`, `Σπ = 1`.
///
/// Uses Grassmann–Taksar–Heyman state reduction, which only touches the
/// off-diagonal rates and involves no subtractions.
pub fn stationary_of_generator<T: Scalar>(q: &DMatrix<T>) -> Result<DVector<T>> {
    let n = ensure_square(q)?;
    if n == 0 {
        return Err(Error::Dimension("empty generator".into()));
    }
    ensure_finite(q, "generator")?;
    let scale = norm_inf(q).max(T::one());
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            if i != j && q[(i, j)] < T::zero() {
                return Err(Error::NotGenerator(format!("negative rate at ({i}, {j})")));
            }
            row += q[(i, j)];
        }
        if row.abs() > T::tol(1e-12) * scale {
            return Err(Error::NotGenerator(format!("row {i} sums to {row}")));
        }
    }
    is_irreducible(q).map_err(Error::Reducible)?;

    let mut a = q.clone();
    for k in (1..n).rev() {
        let s = (0..k).fold(T::zero(), |s, j| s + a[(k, j)]);
        if s <= T::zero() {
            return Err(Error::Reducible(k));
        }
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik == T::zero() {
                continue;
            }
            for j in 0..k {
                if i != j {
                    let akj = a[(k, j)];
                    a[(i, j)] += aik * akj;
                }
            }
        }
    }
    let mut pi = DVector::zeros(n);
    pi[0] = T::one();
    for j in 1..n {
        pi[j] = (0..j).fold(T::zero(), |s, i| s + pi[i] * a[(i, j)]);
    }
    let total = pi.sum();
    Ok(pi / total)
}
