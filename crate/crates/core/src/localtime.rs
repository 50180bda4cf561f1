//! The reflected process observed at inverse local times.
//!
//! With `τᴸₓ = inf{t : L(t) > x}`, the pair `(X(τᴸₓ), J(τᴸₓ))` is a Markov
//! additive process in `x`; its law is fixed by the initial transform
//! `E_{x0}[e^{αX(τᴸ₀) − qτᴸ₀}; J(τᴸ₀)]` and the matrix exponent `Fᴸ(α)`. The
//! same holds at the upper barrier with `U` in place of `L`.
//!
//! Both are read off
//!
//! ```text
//! Mᴸ(α) = (Π⁻(Λ⁻−α)⁻¹e^{x0Λ⁻} + Π⁺(Λ⁺+α)⁻¹e^{(B−x0)Λ⁺}Π⁻₊e^{BΛ⁻}) K⁻
//! Mᵁ(α) = (Π⁺(Λ⁺+α)⁻¹e^{(B−x0)Λ⁺} + Π⁻(Λ⁻−α)⁻¹e^{x0Λ⁻}Π⁺₋e^{BΛ⁺}) K⁺
//! ```
//!
//! for `α ∈ (ρ⁻, −ρ⁺)`: `Mᴸ = init·Fᴸ⁻¹`, and the `E⁻` rows of `Mᴸ` at
//! `x0 = 0` are `Fᴸ⁻¹`. On the upper side the transform is taken in the level
//! above the barrier, i.e. of `X − (B − x0)`; at `x0 = 0` that is `−L(τᵁ₀)`.
//!
//! Setting `α = 0`, multiplying by `q` and letting `q ↓ 0` gives the long-run
//! rates of `L` and `U` per phase, see [`overflow_rates`].

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, expm, stationary_of_generator};
use crate::model::{select_rows, MmbmModel};
use crate::passage::{perron_eigenvalue, FirstPassage, PassagePair};
use crate::reflection::{Kernel, TwoBarrier};
use crate::{Error, Result, Scalar};

/// Tolerance on the residual of the block system defining `[Mᴸ, Mᵁ]`.
pub const BLOCK_RESIDUAL_TOL: f64 = 1e-9;
/// Relative distance kept from the ends of the admissible `α` interval.
pub const ALPHA_MARGIN: f64 = 1e-8;
/// Killing rate used by the limit route to the overflow rates.
pub const LIMIT_Q: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LocalTimeTransform<T: Scalar> {
    pub alpha: T,
    pub q: T,
    pub x0: T,
    pub b: T,
    /// `N × N⁻`.
    pub ml: DMatrix<T>,
    /// `N × N⁺`.
    pub mu: DMatrix<T>,
    pub fl: DMatrix<T>,
    pub fu: DMatrix<T>,
    /// `E_{x0}[e^{αX(τᴸ₀) − qτᴸ₀}; J(τᴸ₀)]`.
    pub init_l: DMatrix<T>,
    /// `E_{x0}[e^{α(X(τᵁ₀) − B + x0) − qτᵁ₀}; J(τᵁ₀)]`.
    pub init_u: DMatrix<T>,
    /// Perron eigenvalues of `fl`, `fu` (most negative finite value when the
    /// class is empty).
    pub k_l: T,
    pub k_u: T,
    pub residual: T,
    pub lower_phases: Vec<usize>,
    pub upper_phases: Vec<usize>,
}

impl<T: Scalar> LocalTimeTransform<T> {
    /// `e^{Fᴸ(α)x}`.
    pub fn lower_exponent_flow(&self, x: T) -> Result<DMatrix<T>> {
        expm(&(&self.fl * x))
    }

    pub fn upper_exponent_flow(&self, x: T) -> Result<DMatrix<T>> {
        expm(&(&self.fu * x))
    }
}

/// Open interval `(ρ⁻, −ρ⁺)` of admissible transform arguments.
pub fn admissible_interval<T: Scalar>(fp: &FirstPassage<T>) -> (T, T) {
    (fp.down.rho, -fp.up.rho)
}

fn margin<T: Scalar>(rho: T) -> T {
    T::tol(ALPHA_MARGIN) * (T::one() + rho.abs())
}

fn check_alpha<T: Scalar>(fp: &FirstPassage<T>, alpha: T) -> Result<()> {
    let (lo, hi) = admissible_interval(fp);
    let lo_ok = fp.down.n_phases() == 0 || alpha > lo + margin(lo);
    let hi_ok = fp.up.n_phases() == 0 || alpha < hi - margin(hi);
    if !(lo_ok && hi_ok) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} is outside the admissible interval ({lo}, {hi})"
        )));
    }
    Ok(())
}

fn shifted_inverse<T: Scalar>(pair: &PassagePair<T>, shift: T, what: &'static str) -> Result<DMatrix<T>> {
    let n = pair.n_phases();
    linalg::inverse(&(&pair.lambda + DMatrix::identity(n, n) * shift), what)
}

/// Reusable passage data of one model, strip and killing rate.
#[derive(Debug, Clone)]
pub struct LocalTimeSolver<T: Scalar> {
    strip: TwoBarrier<T>,
}

impl<T: Scalar> LocalTimeSolver<T> {
    pub fn new(model: &MmbmModel<T>, b: T, q: T) -> Result<Self> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("buffer size must be finite and > 0, got {b}")));
        }
        if q == T::zero() && model.has_zero_drift() {
            return Err(Error::ZeroDrift(
                "local-time transforms are undefined for q = 0 with zero drift",
            ));
        }
        let fp = FirstPassage::new(model, q)?;
        Ok(Self {
            strip: TwoBarrier::new(fp, b)?,
        })
    }

    pub fn passage(&self) -> &FirstPassage<T> {
        &self.strip.fp
    }

    pub fn admissible_interval(&self) -> (T, T) {
        admissible_interval(&self.strip.fp)
    }

    fn k_matrices(&self) -> (&DMatrix<T>, &DMatrix<T>) {
        match &self.strip.kernel {
            Kernel::Transient { kp, km } => (kp, km),
            Kernel::ZeroDrift { .. } => unreachable!("solver is built with transient kernels"),
        }
    }

    /// `(Mᴸ, Mᵁ)` at start level `x0`.
    fn m_matrices(
        &self,
        x0: T,
        inv_down: &DMatrix<T>,
        inv_up: &DMatrix<T>,
    ) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
        let tb = &self.strip;
        let fp = &tb.fp;
        let (kp, km) = self.k_matrices();
        let down = &fp.down.pi * inv_down * fp.down.level_transition(x0)?;
        let up = &fp.up.pi * inv_up * fp.up.level_transition(tb.width - x0)?;
        let ml = (&down + &up * &tb.pi_mp * &tb.exp_down) * km;
        let mu = (&up + &down * &tb.pi_pm * &tb.exp_up) * kp;
        Ok((ml, mu, down, up))
    }

    pub fn transform(&self, x0: T, alpha: T) -> Result<LocalTimeTransform<T>> {
        let tb = &self.strip;
        let fp = &tb.fp;
        if !(x0 >= T::zero() && x0 <= tb.width) {
            return Err(Error::InvalidArgument(format!("x0 = {x0} outside [0, {}]", tb.width)));
        }
        check_alpha(fp, alpha)?;
        let inv_down = shifted_inverse(&fp.down, -alpha, "Lambda- - alpha I")?;
        let inv_up = shifted_inverse(&fp.up, alpha, "Lambda+ + alpha I")?;
        let (ml, mu, rhs_l, rhs_u) = self.m_matrices(x0, &inv_down, &inv_up)?;

        let residual_l = &ml - &mu * &tb.pi_mp * &tb.exp_down - &rhs_l;
        let residual_u = &mu - &ml * &tb.pi_pm * &tb.exp_up - &rhs_u;
        let residual = linalg::max_abs(&residual_l).max(linalg::max_abs(&residual_u));
        let scale = T::one() + linalg::max_abs(&ml).max(linalg::max_abs(&mu));
        if !(residual <= T::tol(BLOCK_RESIDUAL_TOL) * scale) {
            return Err(Error::Residual {
                what: "local-time block system",
                residual: residual.as_f64(),
                tolerance: (T::tol(BLOCK_RESIDUAL_TOL) * scale).as_f64(),
            });
        }

        let (ml0, _, _, _) = self.m_matrices(T::zero(), &inv_down, &inv_up)?;
        let (_, mub, _, _) = self.m_matrices(tb.width, &inv_down, &inv_up)?;
        let fl = linalg::inverse(&select_rows(&ml0, &fp.classes.e_minus), "restricted M^L")?;
        let fu = linalg::inverse(&select_rows(&mub, &fp.classes.e_plus), "restricted M^U")?;
        let k_l = perron_or_empty(&fl)?;
        let k_u = perron_or_empty(&fu)?;
        for (k, what) in [(k_l, "Perron eigenvalue k^L"), (k_u, "Perron eigenvalue k^U")] {
            if !(k < T::zero()) {
                return Err(Error::Residual {
                    what,
                    residual: k.as_f64(),
                    tolerance: 0.0,
                });
            }
        }
        Ok(LocalTimeTransform {
            alpha,
            q: fp.q,
            x0,
            b: tb.width,
            init_l: &ml * &fl,
            init_u: &mu * &fu,
            ml,
            mu,
            fl,
            fu,
            k_l,
            k_u,
            residual,
            lower_phases: fp.classes.e_minus.clone(),
            upper_phases: fp.classes.e_plus.clone(),
        })
    }
}

fn perron_or_empty<T: Scalar>(m: &DMatrix<T>) -> Result<T> {
    if m.nrows() == 0 {
        return Ok(T::min_value().unwrap_or_else(|| -T::one() / T::default_epsilon()));
    }
    perron_eigenvalue(m)
}

/// Transforms at the inverse local times for a start at `x0 ∈ [0, B]`.
pub fn localtime_transform<T: Scalar>(
    model: &MmbmModel<T>,
    b: T,
    x0: T,
    q: T,
    alpha: T,
) -> Result<LocalTimeTransform<T>> {
    LocalTimeSolver::new(model, b, q)?.transform(x0, alpha)
}

/// `E_B[e^{αU(τᴸ₀) − qτᴸ₀}; J(τᴸ₀)]` (`N × N⁻`): the transform of the overflow
/// accumulated during a busy period started full.
///
/// For models with every `σᵢ² > 0` the closed form
/// `(Λ⁻−α)⁻¹(Λ⁺+Λ⁻)(e^{−BΛ⁻}(Λ⁺+α) + (Λ⁻−α)e^{BΛ⁺})⁻¹(Λ⁻−α)` is used;
/// otherwise the initial transform of [`localtime_transform`] at `x0 = B`.
pub fn busy_period_transform<T: Scalar>(model: &MmbmModel<T>, b: T, q: T, alpha: T) -> Result<DMatrix<T>> {
    let solver = LocalTimeSolver::new(model, b, q)?;
    if !model.is_fully_diffusive() {
        return Ok(solver.transform(b, alpha)?.init_l);
    }
    let fp = solver.passage();
    check_alpha(fp, alpha)?;
    let n = model.n_states();
    let id = DMatrix::<T>::identity(n, n);
    let (lp, lm) = (&fp.up.lambda, &fp.down.lambda);
    let lm_a = lm - &id * alpha;
    let lp_a = lp + &id * alpha;
    let mid = expm(&(lm * -b))? * &lp_a + &lm_a * expm(&(lp * b))?;
    let left = linalg::inverse(&lm_a, "Lambda- - alpha I")?;
    Ok(left * (lp + lm) * linalg::inverse(&mid, "busy-period kernel")? * lm_a)
}

/// Long-run unused capacity and overflow per phase.
#[derive(Debug, Clone)]
pub struct OverflowRates<T: Scalar> {
    /// `κᴸπᴸ` over `E⁻`.
    pub unused: DVector<T>,
    /// `κᵁπᵁ` over `E⁺`.
    pub overflow: DVector<T>,
    pub kappa_l: T,
    pub kappa_u: T,
    pub pi_l: DVector<T>,
    pub pi_u: DVector<T>,
    pub lower_phases: Vec<usize>,
    pub upper_phases: Vec<usize>,
    /// `|κᵁ − κᴸ − κ|`.
    pub balance_error: T,
}

impl<T: Scalar> OverflowRates<T> {
    /// Per-state vectors of length `N` (zero outside the phase class).
    pub fn unused_by_state(&self, n: usize) -> DVector<T> {
        scatter(&self.unused, &self.lower_phases, n)
    }

    pub fn overflow_by_state(&self, n: usize) -> DVector<T> {
        scatter(&self.overflow, &self.upper_phases, n)
    }
}

fn scatter<T: Scalar>(v: &DVector<T>, idx: &[usize], n: usize) -> DVector<T> {
    let mut out = DVector::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = v[k];
    }
    out
}

/// Stationary vector of the recurrent level chain `Λ`, after removing
/// rounding noise (negative off-diagonals, non-zero row sums).
fn level_stationary<T: Scalar>(lambda: &DMatrix<T>) -> Result<DVector<T>> {
    let n = lambda.nrows();
    let scale = linalg::norm_inf(lambda).max(T::one());
    let tol = T::tol(1e-9) * scale;
    let mut g = lambda.clone();
    for i in 0..n {
        let mut off = T::zero();
        for j in 0..n {
            if i != j {
                if g[(i, j)] < -tol {
                    return Err(Error::Residual {
                        what: "level generator off-diagonal sign",
                        residual: g[(i, j)].as_f64(),
                        tolerance: tol.as_f64(),
                    });
                }
                g[(i, j)] = g[(i, j)].max(T::zero());
                off += g[(i, j)];
            }
        }
        g[(i, i)] = -off;
    }
    stationary_of_generator(&g)
}

/// `(κᴸπᴸ, κᵁπᵁ)` for `κ ≠ 0`, from the linear system
/// `(κᴸπᴸ, κᵁπᵁ)[[I, −Π⁺₋e^{BΛ⁺}], [−Π⁻₊e^{BΛ⁻}, I]] = κ(0, π⁺)` (κ > 0) or
/// `−κ(π⁻, 0)` (κ < 0).
pub fn overflow_rates<T: Scalar>(model: &MmbmModel<T>, b: T) -> Result<OverflowRates<T>> {
    if model.has_zero_drift() {
        return Err(Error::ZeroDrift(
            "overflow rates with zero drift need an extra equation (not supported)",
        ));
    }
    let solver = LocalTimeSolver::new(model, b, T::zero())?;
    let tb = &solver.strip;
    let fp = &tb.fp;
    let kappa = model.asymptotic_drift();
    let (nm, np) = (fp.down.n_phases(), fp.up.n_phases());
    let m = nm + np;
    let mut sys = DMatrix::<T>::identity(m, m);
    sys.view_mut((0, nm), (nm, np)).copy_from(&-(&tb.pi_pm * &tb.exp_up));
    sys.view_mut((nm, 0), (np, nm)).copy_from(&-(&tb.pi_mp * &tb.exp_down));
    let mut rhs = DMatrix::<T>::zeros(1, m);
    if kappa > T::zero() {
        let pi = level_stationary(&fp.up.lambda)?;
        rhs.view_mut((0, nm), (1, np)).copy_from(&(pi.transpose() * kappa));
    } else {
        let pi = level_stationary(&fp.down.lambda)?;
        rhs.view_mut((0, 0), (1, nm)).copy_from(&(pi.transpose() * -kappa));
    }
    let x = linalg::solve_right(&rhs, &sys, "overflow-rate system")?;
    let unused: DVector<T> = x.columns(0, nm).transpose().column(0).into_owned();
    let overflow: DVector<T> = x.columns(nm, np).transpose().column(0).into_owned();
    let kappa_l = unused.sum();
    let kappa_u = overflow.sum();
    let normalize = |v: &DVector<T>, k: T| if k > T::zero() { v / k } else { v.clone() };
    let balance_error = (kappa_u - kappa_l - kappa).abs();
    let scale = T::one() + kappa_u.abs() + kappa_l.abs();
    if !(balance_error <= T::tol(1e-9) * scale) {
        return Err(Error::Residual {
            what: "overflow balance kappa^U - kappa^L = kappa",
            residual: balance_error.as_f64(),
            tolerance: (T::tol(1e-9) * scale).as_f64(),
        });
    }
    Ok(OverflowRates {
        pi_l: normalize(&unused, kappa_l),
        pi_u: normalize(&overflow, kappa_u),
        unused,
        overflow,
        kappa_l,
        kappa_u,
        lower_phases: fp.classes.e_minus.clone(),
        upper_phases: fp.classes.e_plus.clone(),
        balance_error,
    })
}

/// `(−qMᴸ(0), −qMᵁ(0))` at start `x0`: every row tends to `(κᴸπᴸ, κᵁπᵁ)` as
/// `q ↓ 0`.
pub fn overflow_limit<T: Scalar>(model: &MmbmModel<T>, b: T, x0: T, q: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if !(q > T::zero()) {
        return Err(Error::InvalidArgument(format!("limit route needs q > 0, got {q}")));
    }
    let lt = localtime_transform(model, b, x0, q, T::zero())?;
    Ok((lt.ml * -q, lt.mu * -q))
}

/// Scalar Brownian motion with unit variance: closed forms.
pub mod brownian {
    use crate::{Error, Result, Scalar};

    /// `γ = √(μ² + 2q)`.
    pub fn gamma<T: Scalar>(mu: T, q: T) -> T {
        (mu * mu + T::lit(2.0) * q).sqrt()
    }

    pub fn lambda_up<T: Scalar>(mu: T, q: T) -> T {
        mu - gamma(mu, q)
    }

    pub fn lambda_down<T: Scalar>(mu: T, q: T) -> T {
        -mu - gamma(mu, q)
    }

    /// `sinh(Bγ)/γ`, continuous at `γ = 0`.
    fn sinhc<T: Scalar>(b: T, g: T) -> T {
        let z = b * g;
        if z.abs() < T::lit(1e-4) {
            b * (T::one() + z * z / T::lit(6.0))
        } else {
            z.sinh() / g
        }
    }

    /// `γ coth(Bγ)`, continuous at `γ = 0`.
    fn gcoth<T: Scalar>(b: T, g: T) -> T {
        (b * g).cosh() / sinhc(b, g)
    }

    fn check_b<T: Scalar>(b: T) -> Result<()> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("buffer size must be finite and > 0, got {b}")));
        }
        Ok(())
    }

    /// `E_B[e^{αU(τᴸ₀) − qτᴸ₀}] = e^{−Bμ}/(cosh(Bγ) − (μ+α) sinh(Bγ)/γ)`, valid
    /// for `α` below the pole (in particular every `α ≤ 0` when `q > 0`).
    pub fn busy_period<T: Scalar>(mu: T, b: T, q: T, alpha: T) -> Result<T> {
        check_b(b)?;
        let g = gamma(mu, q);
        let den = (b * g).cosh() - (mu + alpha) * sinhc(b, g);
        if !(den > T::zero()) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} is beyond the pole")));
        }
        Ok((-b * mu).exp() / den)
    }

    /// Williams' formula `E_0[e^{−αL(τᵁ₀) − qτᵁ₀}] = e^{Bμ}/(cosh(Bγ) + (μ+α) sinh(Bγ)/γ)`;
    /// `1/(1 + αB)` when `μ = q = 0`.
    pub fn williams<T: Scalar>(mu: T, b: T, q: T, alpha: T) -> Result<T> {
        check_b(b)?;
        let g = gamma(mu, q);
        let den = (b * g).cosh() + (mu + alpha) * sinhc(b, g);
        if !(den > T::zero()) {
            return Err(Error::InvalidArgument(format!("alpha = {alpha} is beyond the pole")));
        }
        Ok((b * mu).exp() / den)
    }

    /// `Fᴸ(α, q) = 2(½α² + μα − q)/(γ coth(Bγ) − (μ+α))`.
    pub fn exponent_lower<T: Scalar>(mu: T, b: T, q: T, alpha: T) -> Result<T> {
        check_b(b)?;
        let g = gamma(mu, q);
        let num = T::lit(2.0) * (T::lit(0.5) * alpha * alpha + mu * alpha - q);
        Ok(num / (gcoth(b, g) - (mu + alpha)))
    }

    /// `(jump rate, jump-size rate)` of the compound Poisson process
    /// `x ↦ U(τᴸₓ)`: `2μ/(1 − e^{−2μB})` and `2μ/(e^{2μB} − 1)`, both `1/B`
    /// at `μ = 0`.
    pub fn overflow_process<T: Scalar>(mu: T, b: T) -> Result<(T, T)> {
        check_b(b)?;
        let two_mu_b = T::lit(2.0) * mu * b;
        if two_mu_b.abs() < T::lit(1e-8) {
            // Second-order expansion around μ = 0.
            let r = T::one() / b;
            return Ok((r + mu, r - mu));
        }
        let rate = T::lit(2.0) * mu / -(-two_mu_b).exp_m1();
        let size = T::lit(2.0) * mu / two_mu_b.exp_m1();
        Ok((rate, size))
    }

    /// Long-run `(κᴸ, κᵁ)` = `(μ/(e^{2μB} − 1), μ/(1 − e^{−2μB}))`.
    pub fn local_time_rates<T: Scalar>(mu: T, b: T) -> Result<(T, T)> {
        let (rate, size) = overflow_process(mu, b)?;
        let half = T::lit(0.5);
        Ok((size * half, rate * half))
    }
}
