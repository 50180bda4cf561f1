//! Stationary and exponential-epoch laws of the reflection of `X` into
//! `[0, B]`.
//!
//! Everything is assembled from the two-barrier exit matrices
//!
//! * `C(a, b)`: `P(τ⁺_a < τ⁻_b, J(τ⁺_a))`, `N × N⁺`,
//! * `D(a, b)`: `P(τ⁻_b < τ⁺_a, J(τ⁻_b))`, `N × N⁻`,
//!
//! which solve the pair of strong-Markov equations
//! `C = Π⁺e^{aΛ⁺} − D Π⁺₋e^{(a+b)Λ⁺}` and `D = Π⁻e^{bΛ⁻} − C Π⁻₊e^{(a+b)Λ⁻}`.
//! When `κ ≠ 0` (or `q > 0`) this system is uniquely solvable via
//! `K± = (I − …)⁻¹`. With zero drift at `q = 0` one equation is missing and is
//! supplied by the martingale identity `C(a1₊ + h₊) + D(−b1₋ + h₋) = h`, where
//! `Qh + μ = 0`.
//!
//! The stationary law of `W` given `J` equals the probability that the
//! *time-reversed* process exits `[x − B, x)` through the top, so the public
//! functions below compute the passage matrices of the reversed model and
//! answer for the caller's model.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{self, expm, ones, spectral_radius};
use crate::model::MmbmModel;
use crate::passage::FirstPassage;
use crate::{Error, Result, Scalar};

/// Default number of evenly spaced levels (including `0` and `B`).
pub const DEFAULT_GRID: usize = 201;
/// Tolerance on the residual of the exit-matrix system.
pub const CROSSING_RESIDUAL_TOL: f64 = 1e-9;
/// Required gap between the spectral radius of `Π⁻₊e^{BΛ⁻}Π⁺₋e^{BΛ⁺}` and 1.
pub const TRANSIENCE_GAP: f64 = 1e-12;

/// The strip `[0, B]` and an initial level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripSpec<T: Scalar> {
    pub b: T,
    pub x0: T,
}

impl<T: Scalar> StripSpec<T> {
    pub fn new(b: T, x0: T) -> Result<Self> {
        check_width(b)?;
        if !(x0 >= T::zero() && x0 <= b) {
            return Err(Error::InvalidArgument(format!("x0 = {x0} is outside [0, {b}]")));
        }
        Ok(Self { b, x0 })
    }

    /// Strip started at the lower barrier.
    pub fn bottom(b: T) -> Result<Self> {
        Self::new(b, T::zero())
    }
}

fn check_width<T: Scalar>(b: T) -> Result<()> {
    if !(b > T::zero()) || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("buffer size must be finite and > 0, got {b}")));
    }
    Ok(())
}

/// Exit matrices of the interval `(-b, a)` started at `0`.
#[derive(Debug, Clone)]
pub struct CrossingMatrices<T: Scalar> {
    pub a: T,
    pub b: T,
    pub q: T,
    /// `N × N⁺`: exit through the top, with the phase at exit.
    pub c: DMatrix<T>,
    /// `N × N⁻`: exit through the bottom.
    pub d: DMatrix<T>,
    /// `(I − Π⁻₊e^{(a+b)Λ⁻}Π⁺₋e^{(a+b)Λ⁺})⁻¹`; absent in the zero-drift case.
    pub kp: Option<DMatrix<T>>,
    pub km: Option<DMatrix<T>>,
    /// Residual of the defining linear system.
    pub residual: T,
}

impl<T: Scalar> CrossingMatrices<T> {
    /// `C·1 + D·1`: probability of leaving the interval (before killing).
    pub fn exit_probability(&self) -> DVector<T> {
        self.c.column_sum() + self.d.column_sum()
    }
}

/// `C(a, b)` and `D(a, b)` for `κ ≠ 0` or `q > 0`.
pub fn crossing_matrices<T: Scalar>(
    model: &MmbmModel<T>,
    q: T,
    a: T,
    b: T,
) -> Result<CrossingMatrices<T>> {
    check_interval(a, b)?;
    let fp = FirstPassage::new(model, q)?;
    TwoBarrier::new(fp, a + b)?.crossing(a)
}

/// `C(a, b)` and `D(a, b)` at `q = 0` for a model with zero drift.
pub fn crossing_matrices_zero_drift<T: Scalar>(
    model: &MmbmModel<T>,
    a: T,
    b: T,
) -> Result<CrossingMatrices<T>> {
    check_interval(a, b)?;
    let fp = FirstPassage::zero_drift(model)?;
    TwoBarrier::zero_drift(fp, model, a + b)?.crossing(a)
}

fn check_interval<T: Scalar>(a: T, b: T) -> Result<()> {
    if !(a >= T::zero() && b >= T::zero() && a + b > T::zero()) || !(a + b).is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need a, b >= 0 and a + b > 0, got a = {a}, b = {b}"
        )));
    }
    Ok(())
}

/// Passage data for intervals of a fixed width `w`.
///
/// `crossing(x)` returns `C(x, w − x)` and `D(x, w − x)`.
#[derive(Debug, Clone)]
pub(crate) struct TwoBarrier<T: Scalar> {
    pub fp: FirstPassage<T>,
    pub width: T,
    /// `Π⁺₋` and `Π⁻₊`.
    pub pi_pm: DMatrix<T>,
    pub pi_mp: DMatrix<T>,
    /// `e^{wΛ⁺}`, `e^{wΛ⁻}`.
    pub exp_up: DMatrix<T>,
    pub exp_down: DMatrix<T>,
    pub kernel: Kernel<T>,
}

#[derive(Debug, Clone)]
pub(crate) enum Kernel<T: Scalar> {
    Transient { kp: DMatrix<T>, km: DMatrix<T> },
    /// Zero drift: `h` with `(Q − 1πᵀ)h = −μ`.
    ZeroDrift { h: DVector<T> },
}

impl<T: Scalar> TwoBarrier<T> {
    pub fn new(fp: FirstPassage<T>, width: T) -> Result<Self> {
        let mut tb = Self::bare(fp, width)?;
        let (kp, km) = k_matrices(&tb.pi_pm, &tb.pi_mp, &tb.exp_up, &tb.exp_down)?;
        tb.kernel = Kernel::Transient { kp, km };
        Ok(tb)
    }

    pub fn zero_drift(fp: FirstPassage<T>, model: &MmbmModel<T>, width: T) -> Result<Self> {
        let mut tb = Self::bare(fp, width)?;
        tb.kernel = Kernel::ZeroDrift { h: drift_potential(model)? };
        Ok(tb)
    }

    fn bare(fp: FirstPassage<T>, width: T) -> Result<Self> {
        let exp_up = fp.up.level_transition(width)?;
        let exp_down = fp.down.level_transition(width)?;
        Ok(Self {
            pi_pm: fp.pi_up_from_minus(),
            pi_mp: fp.pi_down_from_plus(),
            fp,
            width,
            exp_up,
            exp_down,
            kernel: Kernel::ZeroDrift { h: DVector::zeros(0) },
        })
    }

    fn n(&self) -> usize {
        self.fp.classes.n_states
    }

    /// `(Π⁺e^{xΛ⁺}, Π⁻e^{(w−x)Λ⁻})`.
    fn direct_terms(&self, x: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let up = self.fp.up.crossing_probability(x)?;
        let down = self.fp.down.crossing_probability(self.width - x)?;
        Ok((up, down))
    }

    pub fn crossing(&self, x: T) -> Result<CrossingMatrices<T>> {
        if !(x >= T::zero() && x <= self.width) {
            return Err(Error::InvalidArgument(format!("level {x} outside [0, {}]", self.width)));
        }
        let (up, down) = self.direct_terms(x)?;
        let p_plus = &self.pi_pm * &self.exp_up;
        let p_minus = &self.pi_mp * &self.exp_down;
        let (c, d, kp, km) = match &self.kernel {
            Kernel::Transient { kp, km } => {
                let c = (&up - &down * &p_plus) * kp;
                let d = (&down - &up * &p_minus) * km;
                (c, d, Some(kp.clone()), Some(km.clone()))
            }
            Kernel::ZeroDrift { h } => {
                let g = self.closing_column(x, h);
                let (c, d) = self.solve_augmented(&up, &down, &g, h, &p_plus, &p_minus)?;
                (c, d, None, None)
            }
        };
        let mut residual = norm_inf_pair(&(&c + &d * &p_plus - &up), &(&d + &c * &p_minus - &down));
        if let Kernel::ZeroDrift { h } = &self.kernel {
            let g = self.closing_column(x, h);
            let lhs = stack_apply(&c, &d, &g);
            residual = residual.max((lhs - h).amax());
        }
        let scale = T::one() + linalg::max_abs(&up).max(linalg::max_abs(&down));
        if !(residual <= T::tol(CROSSING_RESIDUAL_TOL) * scale) {
            return Err(Error::Residual {
                what: "two-barrier exit system",
                residual: residual.as_f64(),
                tolerance: (T::tol(CROSSING_RESIDUAL_TOL) * scale).as_f64(),
            });
        }
        Ok(CrossingMatrices {
            a: x,
            b: self.width - x,
            q: self.fp.q,
            c,
            d,
            kp,
            km,
            residual,
        })
    }

    /// `[x1₊ + h₊; −(w − x)1₋ + h₋]`.
    fn closing_column(&self, x: T, h: &DVector<T>) -> DVector<T> {
        let cls = &self.fp.classes;
        let b = self.width - x;
        let top = cls.e_plus.iter().map(|&i| x + h[i]);
        let bottom = cls.e_minus.iter().map(|&i| h[i] - b);
        DVector::from_iterator(cls.n_plus() + cls.n_minus(), top.chain(bottom))
    }

    /// Least-squares solve of `[C D]·[[I, P₋],[P₊, I] | g] = [R₊, R₋ | h]`.
    fn solve_augmented(
        &self,
        r_plus: &DMatrix<T>,
        r_minus: &DMatrix<T>,
        g: &DVector<T>,
        h: &DVector<T>,
        p_plus: &DMatrix<T>,
        p_minus: &DMatrix<T>,
    ) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let (np, nm) = (p_minus.nrows(), p_plus.nrows());
        let m = np + nm;
        let mut sys = DMatrix::zeros(m, m + 1);
        sys.view_mut((0, 0), (np, np)).fill_with_identity();
        sys.view_mut((0, np), (np, nm)).copy_from(p_minus);
        sys.view_mut((np, 0), (nm, np)).copy_from(p_plus);
        sys.view_mut((np, np), (nm, nm)).fill_with_identity();
        sys.column_mut(m).copy_from(g);
        let mut rhs = DMatrix::zeros(self.n(), m + 1);
        rhs.view_mut((0, 0), (self.n(), np)).copy_from(r_plus);
        rhs.view_mut((0, np), (self.n(), nm)).copy_from(r_minus);
        rhs.column_mut(m).copy_from(h);
        let x = least_squares_right(&rhs, &sys, "zero-drift exit system")?;
        Ok((x.columns(0, np).into_owned(), x.columns(np, nm).into_owned()))
    }

    /// Derivatives in `x` of `C(x, w−x)` and `D(x, w−x)`.
    pub fn crossing_derivative(&self, x: T, at: &CrossingMatrices<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let (up, down) = self.direct_terms(x)?;
        let dup = &up * &self.fp.up.lambda;
        let ddown = -(&down * &self.fp.down.lambda);
        let p_plus = &self.pi_pm * &self.exp_up;
        let p_minus = &self.pi_mp * &self.exp_down;
        match &self.kernel {
            Kernel::Transient { kp, km } => {
                let c = (&dup - &ddown * &p_plus) * kp;
                let d = (&ddown - &dup * &p_minus) * km;
                Ok((c, d))
            }
            Kernel::ZeroDrift { h } => {
                let g = self.closing_column(x, h);
                let rhs = -at.exit_probability();
                self.solve_augmented(&dup, &ddown, &g, &rhs, &p_plus, &p_minus)
            }
        }
    }
}

fn stack_apply<T: Scalar>(c: &DMatrix<T>, d: &DMatrix<T>, g: &DVector<T>) -> DVector<T> {
    let np = c.ncols();
    c * g.rows(0, np) + d * g.rows(np, d.ncols())
}

fn norm_inf_pair<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    linalg::max_abs(a).max(linalg::max_abs(b))
}

/// Solves `X A = B` in the least-squares sense for a full-row-rank `A`.
fn least_squares_right<T: Scalar>(b: &DMatrix<T>, a: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let at = a.transpose();
    let svd = nalgebra::linalg::SVD::try_new(at, true, true, T::default_epsilon(), 0)
        .ok_or(Error::NoConvergence(what))?;
    let smax = svd.singular_values.iter().fold(T::zero(), |m, s| m.max(*s));
    let smin = svd.singular_values.iter().fold(smax, |m, s| m.min(*s));
    if !(smin > smax / T::lit(linalg::MAX_CONDITION)) {
        return Err(Error::IllConditioned {
            what,
            cond: (smax / smin).as_f64(),
        });
    }
    let xt = svd
        .solve(&b.transpose(), T::zero())
        .map_err(|_| Error::Singular(what))?;
    Ok(xt.transpose())
}

/// `K⁺ = (I − Π⁻₊e^{wΛ⁻}Π⁺₋e^{wΛ⁺})⁻¹` and `K⁻ = (I − Π⁺₋e^{wΛ⁺}Π⁻₊e^{wΛ⁻})⁻¹`.
fn k_matrices<T: Scalar>(
    pi_pm: &DMatrix<T>,
    pi_mp: &DMatrix<T>,
    exp_up: &DMatrix<T>,
    exp_down: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let a = pi_mp * exp_down; // N⁺ × N⁻
    let b = pi_pm * exp_up; // N⁻ × N⁺
    let loop_plus = &a * &b;
    let loop_minus = &b * &a;
    let limit = T::one() - T::tol(TRANSIENCE_GAP);
    for m in [&loop_plus, &loop_minus] {
        let r = spectral_radius(m)?;
        if !(r < limit) {
            return Err(Error::Singular(
                "two-barrier loop is not transient (K± undefined; zero drift at q = 0?)",
            ));
        }
    }
    let np = loop_plus.nrows();
    let nm = loop_minus.nrows();
    let kp = linalg::inverse(&(DMatrix::identity(np, np) - loop_plus), "K+")?;
    let km = linalg::inverse(&(DMatrix::identity(nm, nm) - loop_minus), "K-")?;
    Ok((kp, km))
}

/// `h` with `Qh = −μ` and `πᵀh = 0`.
fn drift_potential<T: Scalar>(model: &MmbmModel<T>) -> Result<DVector<T>> {
    let n = model.n_states();
    let pi = model.stationary();
    let a = model.generator() - DMatrix::from_fn(n, n, |_, j| pi[j]);
    let rhs = DMatrix::from_column_slice(n, 1, (-model.drift()).as_slice());
    Ok(linalg::solve(&a, &rhs, "Q - 1 pi^T")?.column(0).into_owned())
}

/// Whose law a [`ReflectedLaw`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perspective {
    /// The reflection of the model passed in.
    Model,
    /// The reflection of its time reversal.
    TimeReversed,
}

/// Per-state stationary law of `W` given `J`, tabulated on a grid.
///
/// Matrices are `levels × N`; column `i` is conditional on `J = i`.
#[derive(Debug, Clone)]
pub struct ReflectedLaw<T: Scalar> {
    pub b: T,
    pub grid: Vec<T>,
    /// `P(W ≥ x | J)`, with `P(W ≥ 0) = 1`.
    pub survival: DMatrix<T>,
    /// `P(W ≤ x | J)`, with `P(W ≤ B) = 1`.
    pub cdf: DMatrix<T>,
    /// Density of the absolutely continuous part on `(0, B)`.
    pub density: DMatrix<T>,
    pub mass0: DVector<T>,
    pub mass_b: DVector<T>,
    pub perspective: Perspective,
}

/// Evaluator for the stationary law at arbitrary levels.
#[derive(Debug, Clone)]
pub struct Stationary<T: Scalar> {
    strip: TwoBarrier<T>,
    perspective: Perspective,
    mass0: DVector<T>,
    mass_b: DVector<T>,
}

impl<T: Scalar> Stationary<T> {
    /// Stationary law of the reflection of `model` into `[0, b]`.
    pub fn new(model: &MmbmModel<T>, b: T) -> Result<Self> {
        Self::with_perspective(model, b, Perspective::Model)
    }

    /// With [`Perspective::TimeReversed`] the passage matrices of `model`
    /// itself are used and the result is the law of the reversed process.
    pub fn with_perspective(model: &MmbmModel<T>, b: T, perspective: Perspective) -> Result<Self> {
        check_width(b)?;
        let source = match perspective {
            Perspective::Model => model.time_reverse(),
            Perspective::TimeReversed => model.clone(),
        };
        let strip = if source.has_zero_drift() {
            TwoBarrier::zero_drift(FirstPassage::zero_drift(&source)?, &source, b)?
        } else {
            TwoBarrier::new(FirstPassage::new(&source, T::zero())?, b)?
        };
        let mut out = Self {
            strip,
            perspective,
            mass0: DVector::zeros(0),
            mass_b: DVector::zeros(0),
        };
        out.mass0 = out.strip.crossing(T::zero())?.d.column_sum();
        out.mass_b = out.strip.crossing(b)?.c.column_sum();
        if let Kernel::Transient { kp, km } = &out.strip.kernel {
            // Closed forms for the atoms; equal to the x = 0, B limits above.
            let tb = &out.strip;
            let n = tb.n();
            let (np, nm) = (tb.pi_mp.nrows(), tb.pi_pm.nrows());
            out.mass0 = (&tb.fp.down.pi - &tb.fp.up.pi * &tb.pi_mp) * &tb.exp_down * km * ones::<T>(nm);
            out.mass_b = (&tb.fp.up.pi - &tb.fp.down.pi * &tb.pi_pm) * &tb.exp_up * kp * ones::<T>(np);
            debug_assert_eq!(out.mass0.len(), n);
        }
        Ok(out)
    }

    pub fn b(&self) -> T {
        self.strip.width
    }

    pub fn n_states(&self) -> usize {
        self.strip.n()
    }

    pub fn is_zero_drift(&self) -> bool {
        matches!(self.strip.kernel, Kernel::ZeroDrift { .. })
    }

    fn check_level(&self, x: T) -> Result<()> {
        if !(x >= T::zero() && x <= self.b()) {
            return Err(Error::InvalidArgument(format!("level {x} outside [0, {}]", self.b())));
        }
        Ok(())
    }

    /// `P(W ≥ x | J)`.
    pub fn survival(&self, x: T) -> Result<DVector<T>> {
        self.check_level(x)?;
        if x == T::zero() {
            return Ok(ones(self.n_states()));
        }
        Ok(self.strip.crossing(x)?.c.column_sum())
    }

    /// `P(W ≤ x | J)` from the coupled (sign-flipped) representation.
    pub fn cdf(&self, x: T) -> Result<DVector<T>> {
        self.check_level(x)?;
        if x == self.b() {
            return Ok(ones(self.n_states()));
        }
        Ok(self.strip.crossing(x)?.d.column_sum())
    }

    /// Density of `W` given `J` at an interior level.
    pub fn density(&self, x: T) -> Result<DVector<T>> {
        self.check_level(x)?;
        let at = self.strip.crossing(x)?;
        let (dc, _) = self.strip.crossing_derivative(x, &at)?;
        Ok(-dc.column_sum())
    }

    pub fn mass0(&self) -> &DVector<T> {
        &self.mass0
    }

    pub fn mass_b(&self) -> &DVector<T> {
        &self.mass_b
    }

    /// Tabulates on `n ≥ 2` evenly spaced levels including `0` and `B`.
    pub fn tabulate(&self, n: usize) -> Result<ReflectedLaw<T>> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 levels, got {n}")));
        }
        let b = self.b();
        let step = b / T::from_usize_lossy(n - 1);
        let grid: Vec<T> = (0..n)
            .map(|k| if k == n - 1 { b } else { step * T::from_usize_lossy(k) })
            .collect();
        self.tabulate_at(&grid)
    }

    pub fn tabulate_at(&self, grid: &[T]) -> Result<ReflectedLaw<T>> {
        let n = self.n_states();
        let mut survival = DMatrix::zeros(grid.len(), n);
        let mut cdf = DMatrix::zeros(grid.len(), n);
        let mut density = DMatrix::zeros(grid.len(), n);
        for (k, &x) in grid.iter().enumerate() {
            survival.row_mut(k).copy_from(&self.survival(x)?.transpose());
            cdf.row_mut(k).copy_from(&self.cdf(x)?.transpose());
            density.row_mut(k).copy_from(&self.density(x)?.transpose());
        }
        Ok(ReflectedLaw {
            b: self.b(),
            grid: grid.to_vec(),
            survival,
            cdf,
            density,
            mass0: self.mass0.clone(),
            mass_b: self.mass_b.clone(),
            perspective: self.perspective,
        })
    }
}

/// Stationary law of the reflection of `model` into `[0, b]` on `grid`
/// evenly spaced levels.
pub fn stationary_law<T: Scalar>(model: &MmbmModel<T>, b: T, grid: usize) -> Result<ReflectedLaw<T>> {
    Stationary::new(model, b)?.tabulate(grid)
}

/// Stationary density for a model with every `σᵢ² > 0`, in the closed form
/// `−(e^{xΛ̂⁺}Λ̂⁺ + e^{(B−x)Λ̂⁻}Λ̂⁻e^{BΛ̂⁺})(I − e^{BΛ̂⁻}e^{BΛ̂⁺})⁻¹1`, where hats
/// refer to the time-reversed model.
pub fn rogers_density<T: Scalar>(model: &MmbmModel<T>, b: T, x: T) -> Result<DVector<T>> {
    check_width(b)?;
    if !model.is_fully_diffusive() {
        return Err(Error::InvalidArgument(
            "closed-form density needs every variance > 0".into(),
        ));
    }
    if !(x >= T::zero() && x <= b) {
        return Err(Error::InvalidArgument(format!("level {x} outside [0, {b}]")));
    }
    let fp = FirstPassage::new(&model.time_reverse(), T::zero())?;
    let (lp, lm) = (&fp.up.lambda, &fp.down.lambda);
    let n = model.n_states();
    let ebp = expm(&(lp * b))?;
    let ebm = expm(&(lm * b))?;
    let k = linalg::inverse(&(DMatrix::identity(n, n) - &ebm * &ebp), "I - e^{BL-}e^{BL+}")?;
    let lhs = expm(&(lp * x))? * lp + expm(&(lm * (b - x)))? * lm * &ebp;
    Ok(-(lhs * k * ones::<T>(n)))
}

/// Where the reflected process starts for [`exp_epoch_law`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Bottom,
    Top,
}

impl std::str::FromStr for Start {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bottom" | "0" => Ok(Start::Bottom),
            "top" | "B" => Ok(Start::Top),
            _ => Err(Error::InvalidArgument(format!("unknown start '{s}' (bottom|top)"))),
        }
    }
}

/// Joint law of `(W(e_q), J(e_q))` for a start at a barrier.
#[derive(Debug, Clone)]
pub struct ExpEpoch<T: Scalar> {
    start: Start,
    q: T,
    pi: DVector<T>,
    /// `q(qI − Q)⁻¹` of the caller's model.
    occupation: DMatrix<T>,
    /// `q[(qI − Q̂)⁻¹]` restricted to rows in `E⁺` of the model actually
    /// fed to the strip (the reversed model, negated for top starts).
    exit_occupation: DMatrix<T>,
    strip: TwoBarrier<T>,
}

impl<T: Scalar> ExpEpoch<T> {
    pub fn new(model: &MmbmModel<T>, b: T, q: T, start: Start) -> Result<Self> {
        check_width(b)?;
        if !(q > T::zero()) || !q.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "exponential epoch needs a finite q > 0, got {q}"
            )));
        }
        let n = model.n_states();
        let resolvent = |m: &MmbmModel<T>| -> Result<DMatrix<T>> {
            let a = DMatrix::identity(n, n) * q - m.generator();
            Ok(linalg::inverse(&a, "qI - Q")? * q)
        };
        let base = match start {
            Start::Bottom => model.clone(),
            Start::Top => model.negated(),
        };
        let rev = base.time_reverse();
        let fp = FirstPassage::new(&rev, q)?;
        let exit_occupation = crate::model::select_rows(&resolvent(&rev)?, &fp.classes.e_plus);
        Ok(Self {
            start,
            q,
            pi: model.stationary().clone(),
            occupation: resolvent(model)?,
            exit_occupation,
            strip: TwoBarrier::new(fp, b)?,
        })
    }

    pub fn q(&self) -> T {
        self.q
    }

    /// `P(J(e_q) = j | J(0) = i)`.
    pub fn occupation(&self) -> &DMatrix<T> {
        &self.occupation
    }

    /// Bottom-start law `P_i(W(e_q) ≥ y, J(e_q) = j)` of the strip model,
    /// taken as the right limit at `y = 0`.
    fn survival_from_bottom(&self, y: T) -> Result<DMatrix<T>> {
        let c = self.strip.crossing(y)?.c;
        let g = c * &self.exit_occupation;
        let n = g.nrows();
        Ok(DMatrix::from_fn(n, n, |i, j| g[(j, i)] * self.pi[j] / self.pi[i]))
    }

    /// `P_i(W(e_q) ≥ x, J(e_q) = j)`; at `x = 0` this is `P_i(J(e_q) = j)`.
    pub fn survival(&self, x: T) -> Result<DMatrix<T>> {
        let b = self.strip.width;
        if !(x >= T::zero() && x <= b) {
            return Err(Error::InvalidArgument(format!("level {x} outside [0, {b}]")));
        }
        if x == T::zero() {
            return Ok(self.occupation.clone());
        }
        match self.start {
            Start::Bottom => self.survival_from_bottom(x),
            Start::Top => Ok(&self.occupation - self.survival_from_bottom(b - x)?),
        }
    }
}

/// `P_i(W(e_q) ≥ x, J(e_q) = j)` for the reflection started at a barrier.
pub fn exp_epoch_law<T: Scalar>(
    model: &MmbmModel<T>,
    b: T,
    q: T,
    start: Start,
    x: T,
) -> Result<DMatrix<T>> {
    ExpEpoch::new(model, b, q, start)?.survival(x)
}
