//! First-passage matrices `(Π±, Λ±)`.
//!
//! For the upward passage times `τ⁺ₓ = inf{t : X(t) > x}` the background
//! state observed at `τ⁺ₓ` is a (possibly killed) Markov chain on `E⁺` in the
//! level variable `x`, with generator `Λ⁺`, and
//! `P(J(τ⁺ₓ) = j | J(0) = i) = (Π⁺ e^{Λ⁺x})ᵢⱼ`. Downward passage is the same
//! object for `-X`.
//!
//! Both pairs are built from the roots of `F(s)` in the left half plane: with
//! `V` the matrix of their null vectors and `Γ` the matching (real block)
//! diagonal, `Λ = V_d Γ V_d⁻¹` and `Π = V V_d⁻¹`, where `V_d` keeps the rows of
//! the direction's phase class. The upward pair is the downward pair of the
//! model with negated drifts.

use nalgebra::{Complex, DMatrix};

use crate::linalg::{self, eigenpairs_with, expm, norm_inf, ZeroRoot, MAX_CONDITION};
use crate::model::{select_rows, MmbmModel, PhaseClasses, Sign};
use crate::{Error, Result, Scalar};

/// Bound on the relative residual of the matrix quadratic equation.
pub const PASSAGE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn sign(self) -> Sign {
        match self {
            Direction::Up => Sign::Plus,
            Direction::Down => Sign::Minus,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "up" | "+" => Ok(Direction::Up),
            "down" | "-" => Ok(Direction::Down),
            _ => Err(Error::InvalidArgument(format!("unknown direction '{s}'"))),
        }
    }
}

/// `(Π, Λ)` for one direction and killing rate.
#[derive(Debug, Clone)]
pub struct PassagePair<T: Scalar> {
    pub direction: Direction,
    pub q: T,
    /// Indices of the direction's phase class, in model order.
    pub phases: Vec<usize>,
    /// `N × N_d`: `P_i(J(τ_0) = j)`.
    pub pi: DMatrix<T>,
    /// `N_d × N_d` generator of the level-indexed chain.
    pub lambda: DMatrix<T>,
    /// Perron eigenvalue of `lambda`; the most negative finite value when
    /// the class is empty.
    pub rho: T,
    /// 1-norm condition estimate of `V_d`.
    pub condition: T,
}

impl<T: Scalar> PassagePair<T> {
    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    /// `P(J(τₓ))` = `Π e^{Λx}`.
    pub fn crossing_probability(&self, x: T) -> Result<DMatrix<T>> {
        if !(x >= T::zero()) {
            return Err(Error::InvalidArgument(format!("level must be >= 0, got {x}")));
        }
        if x == T::zero() {
            return Ok(self.pi.clone());
        }
        Ok(&self.pi * expm(&(&self.lambda * x))?)
    }

    /// `e^{Λx}`.
    pub fn level_transition(&self, x: T) -> Result<DMatrix<T>> {
        expm(&(&self.lambda * x))
    }

    /// `‖½Δσ²ΠΛ² ∓ ΔμΠΛ + (Q − qI)Π‖∞` (minus sign for the upward pair).
    pub fn residual(&self, model: &MmbmModel<T>) -> T {
        let pl = &self.pi * &self.lambda;
        let pll = &pl * &self.lambda;
        let n = model.n_states();
        let sign = match self.direction {
            Direction::Up => -T::one(),
            Direction::Down => T::one(),
        };
        let mut r = (model.generator() - DMatrix::identity(n, n) * self.q) * &self.pi;
        for i in 0..n {
            let hv = model.variance()[i] * T::lit(0.5);
            let mu = model.drift()[i] * sign;
            for j in 0..self.n_phases() {
                r[(i, j)] += hv * pll[(i, j)] + mu * pl[(i, j)];
            }
        }
        norm_inf(&r)
    }
}

/// `(Π, Λ)` of `model` for killing rate `q` in the given direction.
///
/// At `q = 0` the zero root joins the direction that is recurrent: downward
/// when `κ < 0`, upward when `κ > 0`. Zero drift at `q = 0` is rejected.
pub fn passage_matrices<T: Scalar>(
    model: &MmbmModel<T>,
    q: T,
    direction: Direction,
) -> Result<PassagePair<T>> {
    passage_with(model, q, direction, ZeroRoot::Simple)
}

pub(crate) fn passage_with<T: Scalar>(
    model: &MmbmModel<T>,
    q: T,
    direction: Direction,
    policy: ZeroRoot,
) -> Result<PassagePair<T>> {
    match direction {
        Direction::Down => {
            let mut pair = downward(model, q, policy)?;
            pair.direction = Direction::Down;
            Ok(pair)
        }
        Direction::Up => {
            let mut pair = downward(&model.negated(), q, policy)?;
            pair.direction = Direction::Up;
            Ok(pair)
        }
    }
}

fn downward<T: Scalar>(model: &MmbmModel<T>, q: T, policy: ZeroRoot) -> Result<PassagePair<T>> {
    let cls = model.validate()?;
    let phases = cls.e_minus.clone();
    let n = model.n_states();
    let nd = phases.len();
    let spectrum = eigenpairs_with(model, q, policy)?;

    let recurrent = q == T::zero() && (model.has_zero_drift() || model.asymptotic_drift() < T::zero());
    let mut zero_taken = false;
    let mut columns: Vec<nalgebra::DVector<T>> = Vec::with_capacity(nd);
    let mut gamma = DMatrix::zeros(nd, nd);
    let mut rho = T::min_value().unwrap_or_else(|| -T::one() / T::default_epsilon());
    for (s, v) in spectrum.roots.iter().zip(&spectrum.vectors) {
        let is_zero = s.re == T::zero() && s.im == T::zero();
        let take = if is_zero {
            recurrent && !std::mem::replace(&mut zero_taken, true)
        } else {
            s.re < T::zero() && s.im >= T::zero()
        };
        if !take {
            continue;
        }
        let k = columns.len();
        if k + if s.im > T::zero() { 2 } else { 1 } > nd {
            return Err(Error::NoConvergence("root count for passage matrices"));
        }
        rho = rho.max(s.re);
        if s.im > T::zero() {
            columns.push(v.map(|z| z.re));
            columns.push(v.map(|z| z.im));
            gamma[(k, k)] = s.re;
            gamma[(k, k + 1)] = s.im;
            gamma[(k + 1, k)] = -s.im;
            gamma[(k + 1, k + 1)] = s.re;
        } else {
            columns.push(v.map(|z| z.re));
            gamma[(k, k)] = s.re;
        }
    }
    if columns.len() != nd {
        return Err(Error::NoConvergence("root count for passage matrices"));
    }
    let v = if nd == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    let vd = select_rows(&v, &phases);
    let condition = linalg::condition_number(&vd);
    if !(condition <= T::lit(MAX_CONDITION)) {
        return Err(Error::IllConditioned {
            what: "passage eigenvector block",
            cond: condition.as_f64(),
        });
    }
    let vd_inv = linalg::inverse(&vd, "passage eigenvector block")?;
    let lambda = &vd * gamma * &vd_inv;
    let mut pi = v * vd_inv;
    for (k, &i) in phases.iter().enumerate() {
        for j in 0..nd {
            pi[(i, j)] = if j == k { T::one() } else { T::zero() };
        }
    }
    let pair = PassagePair {
        direction: Direction::Down,
        q,
        phases,
        pi,
        lambda,
        rho,
        condition,
    };
    let scale = residual_scale(model, &pair);
    let res = pair.residual(model);
    if !(res <= T::tol(PASSAGE_RESIDUAL_TOL) * scale) {
        return Err(Error::Residual {
            what: "first-passage quadratic equation",
            residual: res.as_f64(),
            tolerance: (T::tol(PASSAGE_RESIDUAL_TOL) * scale).as_f64(),
        });
    }
    Ok(pair)
}

fn residual_scale<T: Scalar>(model: &MmbmModel<T>, pair: &PassagePair<T>) -> T {
    let l = norm_inf(&pair.lambda);
    let hv = model.variance().iter().fold(T::zero(), |m, x| m.max(*x)) * T::lit(0.5);
    let mu = model.drift().iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let n = model.n_states();
    let q = norm_inf(&(model.generator() - DMatrix::identity(n, n) * pair.q));
    (hv * l * l + mu * l + q).max(T::one())
}

/// Rightmost eigenvalue (largest real part) of `Λ`.
pub fn perron_eigenvalue<T: Scalar>(lambda: &DMatrix<T>) -> Result<T> {
    let ev = linalg::eigenvalues(lambda)?;
    ev.iter()
        .map(|z: &Complex<T>| z.re)
        .reduce(|a, b| a.max(b))
        .ok_or_else(|| Error::Dimension("Perron eigenvalue of an empty matrix".into()))
}

/// Both passage pairs of one model at one killing rate.
#[derive(Debug, Clone)]
pub struct FirstPassage<T: Scalar> {
    pub q: T,
    pub up: PassagePair<T>,
    pub down: PassagePair<T>,
    pub classes: PhaseClasses,
}

impl<T: Scalar> FirstPassage<T> {
    pub fn new(model: &MmbmModel<T>, q: T) -> Result<Self> {
        Self::with_policy(model, q, ZeroRoot::Simple)
    }

    /// Pairs at `q = 0` for a model with zero asymptotic drift; both
    /// directions are then recurrent and share the zero root.
    pub fn zero_drift(model: &MmbmModel<T>) -> Result<Self> {
        if !model.has_zero_drift() {
            return Err(Error::NonZeroDrift(model.asymptotic_drift().as_f64()));
        }
        Self::with_policy(model, T::zero(), ZeroRoot::SharedDouble)
    }

    fn with_policy(model: &MmbmModel<T>, q: T, policy: ZeroRoot) -> Result<Self> {
        Ok(Self {
            q,
            up: passage_with(model, q, Direction::Up, policy)?,
            down: passage_with(model, q, Direction::Down, policy)?,
            classes: model.validate()?,
        })
    }

    pub fn get(&self, direction: Direction) -> &PassagePair<T> {
        match direction {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        }
    }

    /// `Π⁺₋`: rows of `Π⁺` indexed by `E⁻` (`N⁻ × N⁺`).
    pub fn pi_up_from_minus(&self) -> DMatrix<T> {
        select_rows(&self.up.pi, &self.classes.e_minus)
    }

    /// `Π⁻₊`: rows of `Π⁻` indexed by `E⁺` (`N⁺ × N⁻`).
    pub fn pi_down_from_plus(&self) -> DMatrix<T> {
        select_rows(&self.down.pi, &self.classes.e_plus)
    }
}
