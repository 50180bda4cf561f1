//! Markov-modulated Brownian motion: definition, validation and derived
//! characteristics.
//!
//! A model is a background generator `Q` on `N` states together with a drift
//! `μᵢ` and a variance `σᵢ² ≥ 0` per state. While the background chain sits
//! in state `i` the level moves as a Brownian motion with those parameters.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, norm_inf};
use crate::{Error, Result, Scalar};

/// Relative threshold below which the asymptotic drift is treated as zero.
pub const ZERO_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MmbmModel<T: Scalar> {
    generator: DMatrix<T>,
    drift: DVector<T>,
    variance: DVector<T>,
    labels: Vec<String>,
    stationary: DVector<T>,
}

/// Direction selector for the phase classes `E⁺` / `E⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// The states from which the level can move up (`E⁺`) or down (`E⁻`).
///
/// A state belongs to `E⁺` unless it has zero variance and non-positive
/// drift, and symmetrically for `E⁻`. Zero-variance zero-drift states belong
/// to neither class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseClasses {
    pub e_plus: Vec<usize>,
    pub e_minus: Vec<usize>,
    pub n_states: usize,
}

impl PhaseClasses {
    pub fn n_plus(&self) -> usize {
        self.e_plus.len()
    }

    pub fn n_minus(&self) -> usize {
        self.e_minus.len()
    }

    pub fn get(&self, sign: Sign) -> &[usize] {
        match sign {
            Sign::Plus => &self.e_plus,
            Sign::Minus => &self.e_minus,
        }
    }

    /// Every state is frozen (zero variance and zero drift).
    pub fn is_degenerate(&self) -> bool {
        self.e_plus.is_empty() && self.e_minus.is_empty()
    }
}

impl<T: Scalar> MmbmModel<T> {
    /// Builds a model from the generator, drifts and variances.
    ///
    /// Row sums of `q` within `1e-12·‖Q‖∞` of zero are repaired by adjusting
    /// the diagonal; anything larger is rejected.
    pub fn new(q: DMatrix<T>, drift: DVector<T>, variance: DVector<T>) -> Result<Self> {
        let n = linalg::ensure_square(&q)?;
        let labels = (1..=n).map(|i| format!("s{i}")).collect();
        Self::with_labels(q, drift, variance, labels)
    }

    pub fn with_labels(
        mut q: DMatrix<T>,
        drift: DVector<T>,
        variance: DVector<T>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let n = linalg::ensure_square(&q)?;
        if n == 0 {
            return Err(Error::Dimension("model needs at least one state".into()));
        }
        if drift.len() != n || variance.len() != n || labels.len() != n {
            return Err(Error::Dimension(format!(
                "{n} states but {} drifts, {} variances, {} labels",
                drift.len(),
                variance.len(),
                labels.len()
            )));
        }
        linalg::ensure_finite(&q, "generator")?;
        if !drift.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("drift"));
        }
        if !variance.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("variance"));
        }
        if let Some(i) = variance.iter().position(|&v| v < T::zero()) {
            return Err(Error::NegativeVariance(i));
        }
        let scale = norm_inf(&q);
        for i in 0..n {
            for j in 0..n {
                if i != j && q[(i, j)] < T::zero() {
                    return Err(Error::NotGenerator(format!("negative rate at ({i}, {j})")));
                }
            }
            let row = q.row(i).sum();
            if row.abs() > T::tol(1e-12) * scale {
                return Err(Error::NotGenerator(format!("row {i} sums to {row}")));
            }
            q[(i, i)] -= row;
        }
        let stationary = linalg::stationary_of_generator(&q)?;
        Ok(Self {
            generator: q,
            drift,
            variance,
            labels,
            stationary,
        })
    }

    /// Single-state Brownian motion.
    pub fn brownian(drift: T, variance: T) -> Result<Self> {
        Self::new(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, drift),
            DVector::from_element(1, variance),
        )
    }

    /// Builds a model from row-major slices.
    pub fn from_rows(q: &[&[T]], drift: &[T], variance: &[T]) -> Result<Self> {
        let n = q.len();
        if q.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("generator rows have unequal lengths".into()));
        }
        let flat: Vec<T> = q.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(
            DMatrix::from_row_slice(n, n, &flat),
            DVector::from_column_slice(drift),
            DVector::from_column_slice(variance),
        )
    }

    pub fn n_states(&self) -> usize {
        self.drift.len()
    }

    pub fn generator(&self) -> &DMatrix<T> {
        &self.generator
    }

    pub fn drift(&self) -> &DVector<T> {
        &self.drift
    }

    pub fn variance(&self) -> &DVector<T> {
        &self.variance
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Stationary distribution `π` of the background chain.
    pub fn stationary(&self) -> &DVector<T> {
        &self.stationary
    }

    pub fn phase_classes(&self) -> PhaseClasses {
        let mut e_plus = Vec::new();
        let mut e_minus = Vec::new();
        for i in 0..self.n_states() {
            let (v, m) = (self.variance[i], self.drift[i]);
            if v > T::zero() || m > T::zero() {
                e_plus.push(i);
            }
            if v > T::zero() || m < T::zero() {
                e_minus.push(i);
            }
        }
        PhaseClasses {
            e_plus,
            e_minus,
            n_states: self.n_states(),
        }
    }

    /// Phase classes, rejecting the constant process.
    pub fn validate(&self) -> Result<PhaseClasses> {
        let cls = self.phase_classes();
        if cls.is_degenerate() {
            return Err(Error::Degenerate);
        }
        Ok(cls)
    }

    /// `κ = Σ πᵢ μᵢ`.
    pub fn asymptotic_drift(&self) -> T {
        self.stationary.dot(&self.drift)
    }

    /// `|κ| ≤ 1e-10 · max|μᵢ|`.
    pub fn has_zero_drift(&self) -> bool {
        let scale = self.drift.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        self.asymptotic_drift().abs() <= T::tol(ZERO_DRIFT_TOL) * scale
    }

    pub fn is_fully_diffusive(&self) -> bool {
        self.variance.iter().all(|&v| v > T::zero())
    }

    /// Time-reversed model: generator `Δπ⁻¹ Qᵀ Δπ`, same drifts and variances.
    pub fn time_reverse(&self) -> Self {
        let n = self.n_states();
        let pi = &self.stationary;
        let q = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.generator[(i, i)]
            } else {
                pi[j] * self.generator[(j, i)] / pi[i]
            }
        });
        let mut out = self.clone();
        for i in 0..n {
            // Off-diagonal rounding may leave a tiny row sum.
            let off = (0..n).filter(|&j| j != i).fold(T::zero(), |s, j| s + q[(i, j)]);
            out.generator.row_mut(i).copy_from(&q.row(i));
            out.generator[(i, i)] = -off;
        }
        out
    }

    /// The model of `-X`: drifts negated. Swaps the roles of `E⁺` and `E⁻`.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.drift = -&self.drift;
        out
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_states();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let q = DMatrix::from_fn(n, n, |i, j| self.generator[(perm[i], perm[j])]);
        let mu = DVector::from_fn(n, |i, _| self.drift[perm[i]]);
        let s2 = DVector::from_fn(n, |i, _| self.variance[perm[i]]);
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        Self::with_labels(q, mu, s2, labels)
    }
}

/// Keeps the rows of `m` indexed by `E⁺` or `E⁻`, in model order.
///
/// An empty class yields a zero-row matrix.
pub fn restrict_rows<T: Scalar>(m: &DMatrix<T>, cls: &PhaseClasses, sign: Sign) -> Result<DMatrix<T>> {
    if m.nrows() != cls.n_states {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, model has {} states",
            m.nrows(),
            cls.n_states
        )));
    }
    Ok(select_rows(m, cls.get(sign)))
}

pub(crate) fn select_rows<T: Scalar>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}
