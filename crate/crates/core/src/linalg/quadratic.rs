//! Roots and null vectors of the matrix polynomial
//! `F(s) = ½Δσ² s² + Δμ s + (Q − qI)`.
//!
//! States with zero variance contribute degree one (or zero when the drift
//! also vanishes), so the polynomial is linearized on the deflated pencil:
//! frozen states are eliminated by a Schur complement, diffusive states
//! contribute two companion coordinates and pure-drift states one. The
//! resulting standard eigenproblem has exactly `deg det F` eigenvalues.

use nalgebra::{ComplexField, Complex, DMatrix, DVector};

use super::{eigenvalues, inverse, norm_inf};
use crate::model::MmbmModel;
use crate::{Error, Result, Scalar};

/// Relative separation below which roots are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-6;
/// `|Re s| ≤ ZERO_TOL·(1+|s|)` classifies a root as having zero real part.
pub const ZERO_TOL: f64 = 1e-9;
/// Pair residual bound `‖F(s)v‖∞ ≤ RESIDUAL_TOL·max(1, ‖F(s)‖∞)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// How the zero root at `q = 0` is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroRoot {
    /// Exactly one zero root; zero asymptotic drift is an error.
    Simple,
    /// Zero drift allowed: the zero root is double with the single vector `1`.
    SharedDouble,
}

/// `F(s)` for one model and killing rate.
#[derive(Debug, Clone)]
pub struct QuadraticPencil<T: Scalar> {
    pub half_variance: DVector<T>,
    pub drift: DVector<T>,
    pub shifted_generator: DMatrix<T>,
}

impl<T: Scalar> QuadraticPencil<T> {
    pub fn new(model: &MmbmModel<T>, q: T) -> Self {
        let n = model.n_states();
        Self {
            half_variance: model.variance() * T::lit(0.5),
            drift: model.drift().clone(),
            shifted_generator: model.generator() - DMatrix::identity(n, n) * q,
        }
    }

    pub fn n(&self) -> usize {
        self.drift.len()
    }

    pub fn eval(&self, s: Complex<T>) -> DMatrix<Complex<T>> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            let mut z = Complex::new(self.shifted_generator[(i, j)], T::zero());
            if i == j {
                z += s * s * self.half_variance[i] + s * self.drift[i];
            }
            z
        })
    }

    pub fn eval_real(&self, s: T) -> DMatrix<T> {
        let mut f = self.shifted_generator.clone();
        for i in 0..self.n() {
            f[(i, i)] += self.half_variance[i] * s * s + self.drift[i] * s;
        }
        f
    }

    pub fn derivative(&self, s: Complex<T>) -> DMatrix<Complex<T>> {
        let two = T::lit(2.0);
        DMatrix::from_fn(self.n(), self.n(), |i, j| {
            if i == j {
                s * (self.half_variance[i] * two) + Complex::new(self.drift[i], T::zero())
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
    }

    /// Bound on `‖F(s)‖∞` depending only on `|s|`.
    pub fn norm_bound(&self, modulus: T) -> T {
        let hv = self.half_variance.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let mu = self.drift.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        hv * modulus * modulus + mu * modulus + norm_inf(&self.shifted_generator)
    }

    /// `‖F(s)v‖∞`.
    pub fn residual(&self, s: Complex<T>, v: &DVector<Complex<T>>) -> T {
        (self.eval(s) * v)
            .iter()
            .fold(T::zero(), |m, z| m.max(z.modulus()))
    }

    /// `‖F(s)v‖∞ / max(1, ‖F(s)‖∞)`.
    pub fn relative_residual(&self, s: Complex<T>, v: &DVector<Complex<T>>) -> T {
        self.residual(s, v) / self.norm_bound(s.modulus()).max(T::one())
    }
}

/// Roots `s_k` of `det F(s)` with unit null vectors `v_k`.
///
/// Complex roots come in conjugate pairs with conjugate vectors; roots are
/// listed with multiplicity, sorted by real then imaginary part.
#[derive(Debug, Clone)]
pub struct SpectralData<T: Scalar> {
    pub roots: Vec<Complex<T>>,
    pub vectors: Vec<DVector<Complex<T>>>,
    /// `false` for roots whose algebraic multiplicity exceeds the number of
    /// independent vectors (only the double zero root under zero drift).
    pub semisimple: Vec<bool>,
    /// Largest relative pair residual.
    pub max_residual: T,
}

impl<T: Scalar> SpectralData<T> {
    pub fn degree(&self) -> usize {
        self.roots.len()
    }

    fn is_zero(s: &Complex<T>) -> bool {
        s.re.abs() <= T::tol(ZERO_TOL) * (T::one() + s.modulus())
    }

    pub fn count_negative(&self) -> usize {
        self.roots.iter().filter(|s| !Self::is_zero(s) && s.re < T::zero()).count()
    }

    pub fn count_positive(&self) -> usize {
        self.roots.iter().filter(|s| !Self::is_zero(s) && s.re > T::zero()).count()
    }

    pub fn count_zero(&self) -> usize {
        self.roots.iter().filter(|s| Self::is_zero(s)).count()
    }
}

/// All roots and vectors of `F(s)` for `q ≥ 0`.
///
/// At `q = 0` the model must have non-zero asymptotic drift, in which case
/// `s = 0` is a simple root with vector `1/√N`. Clustered roots must be
/// semisimple; defective clusters are rejected.
pub fn quadratic_eigenpairs<T: Scalar>(model: &MmbmModel<T>, q: T) -> Result<SpectralData<T>> {
    eigenpairs_with(model, q, ZeroRoot::Simple)
}

pub(crate) fn eigenpairs_with<T: Scalar>(
    model: &MmbmModel<T>,
    q: T,
    policy: ZeroRoot,
) -> Result<SpectralData<T>> {
    if !(q >= T::zero()) || !q.is_finite() {
        return Err(Error::InvalidArgument(format!("killing rate must be >= 0, got {q}")));
    }
    model.validate()?;
    let pencil = QuadraticPencil::new(model, q);
    let companion = linearize(model, &pencil)?;
    let mut raw = eigenvalues(&companion)?;

    let mut roots = Vec::with_capacity(raw.len());
    let mut vectors = Vec::with_capacity(raw.len());
    let mut semisimple = Vec::with_capacity(raw.len());

    if q == T::zero() {
        let zero_drift = model.has_zero_drift();
        let needed = match (zero_drift, policy) {
            (true, ZeroRoot::Simple) => {
                return Err(Error::ZeroDrift("det F has a double root at 0"))
            }
            (true, ZeroRoot::SharedDouble) => 2,
            (false, _) => 1,
        };
        raw.sort_by(|a, b| a.modulus().partial_cmp(&b.modulus()).unwrap());
        let scale = T::one() + norm_inf(&companion);
        for s in raw.iter().take(needed) {
            if s.modulus() > T::tol(1e-5) * scale {
                return Err(Error::NoConvergence("zero root of F at q = 0"));
            }
        }
        raw.drain(..needed);
        let n = model.n_states();
        let ones = DVector::from_element(n, Complex::new(T::one() / T::from_usize_lossy(n).sqrt(), T::zero()));
        for _ in 0..needed {
            roots.push(Complex::new(T::zero(), T::zero()));
            vectors.push(ones.clone());
            semisimple.push(needed == 1);
        }
    }
    // For q > 0, F is nonsingular on the imaginary axis and the small root
    // sits near q/κ, so only a rounding-level real part is suspicious there.
    let axis_tol = if q == T::zero() {
        None
    } else {
        Some(T::lit(1e3) * eps::<T>() * (T::one() + norm_inf(&companion)))
    };
    let on_axis = |s: &Complex<T>| match axis_tol {
        None => SpectralData::is_zero(s),
        Some(tol) => s.re.abs() <= tol,
    };
    if raw.iter().any(on_axis) {
        return Err(Error::NoConvergence(
            "root classification: unexpected root on the imaginary axis",
        ));
    }

    let (real, complex) = split_conjugates(&raw)?;
    for cluster in clusters(real) {
        let (rs, vs) = real_cluster(&pencil, &cluster)?;
        for (s, v) in rs.into_iter().zip(vs) {
            roots.push(Complex::new(s, T::zero()));
            vectors.push(v.map(|x| Complex::new(x, T::zero())));
            semisimple.push(true);
        }
    }
    for cluster in complex_clusters(complex) {
        let (rs, vs) = complex_cluster(&pencil, &cluster)?;
        for (s, v) in rs.into_iter().zip(vs) {
            roots.push(s.conj());
            vectors.push(v.map(|z| z.conj()));
            roots.push(s);
            vectors.push(v);
            semisimple.extend([true, true]);
        }
    }

    let mut max_residual = T::zero();
    for (s, v) in roots.iter().zip(&vectors) {
        let r = pencil.relative_residual(*s, v);
        if !(r <= T::tol(RESIDUAL_TOL)) {
            return Err(Error::Residual {
                what: "quadratic eigenpair",
                residual: r.as_f64(),
                tolerance: T::tol(RESIDUAL_TOL).as_f64(),
            });
        }
        max_residual = max_residual.max(r);
    }

    let mut order: Vec<usize> = (0..roots.len()).collect();
    order.sort_by(|&a, &b| {
        (roots[a].re, roots[a].im)
            .partial_cmp(&(roots[b].re, roots[b].im))
            .unwrap()
    });
    Ok(SpectralData {
        roots: order.iter().map(|&k| roots[k]).collect(),
        vectors: order.iter().map(|&k| vectors[k].clone()).collect(),
        semisimple: order.iter().map(|&k| semisimple[k]).collect(),
        max_residual,
    })
}

/// Companion matrix on coordinates `[v_D, s·v_D, v_F]` after eliminating
/// frozen states.
fn linearize<T: Scalar>(model: &MmbmModel<T>, pencil: &QuadraticPencil<T>) -> Result<DMatrix<T>> {
    let n = model.n_states();
    let (mut diff, mut fluid, mut frozen) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        if model.variance()[i] > T::zero() {
            diff.push(i);
        } else if model.drift()[i] != T::zero() {
            fluid.push(i);
        } else {
            frozen.push(i);
        }
    }
    let active: Vec<usize> = diff.iter().chain(&fluid).copied().collect();
    let s = &pencil.shifted_generator;
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| s[(rows[i], cols[j])])
    };
    let mut r = block(&active, &active);
    if !frozen.is_empty() {
        let zz = inverse(&block(&frozen, &frozen), "frozen-state block")?;
        r -= block(&active, &frozen) * zz * block(&frozen, &active);
    }

    let (d, f) = (diff.len(), fluid.len());
    let m = 2 * d + f;
    let mut l = DMatrix::zeros(m, m);
    let two = T::lit(2.0);
    for (a, &i) in diff.iter().enumerate() {
        l[(a, d + a)] = T::one();
        let c = two / model.variance()[i];
        l[(d + a, d + a)] = -c * model.drift()[i];
        for b in 0..d {
            l[(d + a, b)] = -c * r[(a, b)];
        }
        for k in 0..f {
            l[(d + a, 2 * d + k)] = -c * r[(a, d + k)];
        }
    }
    for (k, &i) in fluid.iter().enumerate() {
        let c = T::one() / model.drift()[i];
        for b in 0..d {
            l[(2 * d + k, b)] = -c * r[(d + k, b)];
        }
        for k2 in 0..f {
            l[(2 * d + k, 2 * d + k2)] = -c * r[(d + k, d + k2)];
        }
    }
    Ok(l)
}

/// Separates real roots from conjugate pairs, keeping the member with
/// positive imaginary part. Pairs with negligible imaginary part are returned
/// as two real roots.
fn split_conjugates<T: Scalar>(raw: &[Complex<T>]) -> Result<(Vec<T>, Vec<Complex<T>>)> {
    let mut real = Vec::new();
    let mut upper = Vec::new();
    let mut lower = 0usize;
    for s in raw {
        let tiny = s.im.abs() <= T::lit(CLUSTER_TOL) * (T::one() + s.modulus());
        if s.im == T::zero() || tiny {
            real.push(s.re);
        } else if s.im > T::zero() {
            upper.push(*s);
        } else {
            lower += 1;
        }
    }
    if lower != upper.len() {
        return Err(Error::NoConvergence("conjugate pairing of roots"));
    }
    real.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((real, upper))
}

fn clusters<T: Scalar>(sorted: Vec<T>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for s in sorted {
        match out.last_mut() {
            Some(c) if (s - *c.last().unwrap()).abs() <= T::lit(CLUSTER_TOL) * (T::one() + s.abs()) => {
                c.push(s)
            }
            _ => out.push(vec![s]),
        }
    }
    out
}

fn complex_clusters<T: Scalar>(roots: Vec<Complex<T>>) -> Vec<Vec<Complex<T>>> {
    let mut out: Vec<Vec<Complex<T>>> = Vec::new();
    'outer: for s in roots {
        for c in out.iter_mut() {
            if c.iter()
                .any(|t| (s - t).modulus() <= T::lit(CLUSTER_TOL) * (T::one() + s.modulus()))
            {
                c.push(s);
                continue 'outer;
            }
        }
        out.push(vec![s]);
    }
    out
}

fn eps<T: Scalar>() -> T {
    T::default_epsilon()
}

/// Right singular vectors for the `k` smallest singular values, plus those
/// singular values (ascending).
fn null_space<N>(f: DMatrix<N>, k: usize) -> Result<(Vec<DVector<N>>, Vec<N::RealField>)>
where
    N: ComplexField,
    N::RealField: Scalar,
{
    let n = f.ncols();
    let svd = nalgebra::linalg::SVD::try_new(f, false, true, eps::<N::RealField>(), 0)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut vs = Vec::with_capacity(k);
    let mut sv = Vec::with_capacity(k);
    for idx in (n - k..n).rev() {
        vs.push(v_t.row(idx).adjoint());
        sv.push(svd.singular_values[idx]);
    }
    Ok((vs, sv))
}

fn smallest_triplet<T: Scalar>(
    f: DMatrix<Complex<T>>,
) -> Result<(DVector<Complex<T>>, DVector<Complex<T>>)> {
    let n = f.ncols();
    let svd = nalgebra::linalg::SVD::try_new(f, true, true, T::default_epsilon(), 0)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let u = svd.u.expect("left vectors").column(n - 1).into_owned();
    let v = svd.v_t.expect("right vectors").row(n - 1).adjoint();
    Ok((u, v))
}

/// Newton correction `s ← s − uᴴF(s)v / uᴴF'(s)v` with the smallest singular
/// triplet of `F(s)`; keeps the iterate with the smallest residual.
fn refine<T: Scalar>(pencil: &QuadraticPencil<T>, s0: Complex<T>, real: bool) -> Result<Complex<T>> {
    let mut s = s0;
    let mut best = (s0, smallest_sigma(pencil, s0)?);
    for _ in 0..4 {
        let (u, v) = smallest_triplet(pencil.eval(s))?;
        let num = u.dotc(&(pencil.eval(s) * &v));
        let den = u.dotc(&(pencil.derivative(s) * &v));
        if den.modulus() == T::zero() {
            break;
        }
        let mut step = num / den;
        if real {
            step.im = T::zero();
        }
        s -= step;
        let sigma = smallest_sigma(pencil, s)?;
        if sigma < best.1 {
            best = (s, sigma);
        }
        if step.modulus() <= T::default_epsilon() * T::lit(4.0) * (T::one() + s.modulus()) {
            break;
        }
    }
    Ok(best.0)
}

fn smallest_sigma<T: Scalar>(pencil: &QuadraticPencil<T>, s: Complex<T>) -> Result<T> {
    let svd = nalgebra::linalg::SVD::try_new(pencil.eval(s), false, false, T::default_epsilon(), 0)
        .ok_or(Error::NoConvergence("singular values"))?;
    Ok(svd.singular_values.iter().fold(T::max_value().unwrap_or_else(T::one), |m, x| m.min(*x)))
}

fn real_cluster<T: Scalar>(
    pencil: &QuadraticPencil<T>,
    cluster: &[T],
) -> Result<(Vec<T>, Vec<DVector<T>>)> {
    let k = cluster.len();
    if k == 1 {
        let s = refine(pencil, Complex::new(cluster[0], T::zero()), true)?.re;
        let (vs, _) = null_space(pencil.eval_real(s), 1)?;
        return Ok((vec![s], vs));
    }
    let center = cluster.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(k);
    let (vs, sv) = null_space(pencil.eval_real(center), k)?;
    check_semisimple(pencil, Complex::new(center, T::zero()), &sv)?;
    Ok((vec![center; k], vs))
}

fn complex_cluster<T: Scalar>(
    pencil: &QuadraticPencil<T>,
    cluster: &[Complex<T>],
) -> Result<(Vec<Complex<T>>, Vec<DVector<Complex<T>>>)> {
    let k = cluster.len();
    let (roots, vs) = if k == 1 {
        let s = refine(pencil, cluster[0], false)?;
        let (vs, _) = null_space(pencil.eval(s), 1)?;
        (vec![s], vs)
    } else {
        let center = cluster.iter().fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
            / Complex::new(T::from_usize_lossy(k), T::zero());
        let (vs, sv) = null_space(pencil.eval(center), k)?;
        check_semisimple(pencil, center, &sv)?;
        (vec![center; k], vs)
    };
    Ok((roots, vs.into_iter().map(normalize_phase).collect()))
}

fn check_semisimple<T: Scalar>(pencil: &QuadraticPencil<T>, s: Complex<T>, sv: &[T]) -> Result<()> {
    let largest_small = sv.iter().fold(T::zero(), |m, x| m.max(*x));
    if largest_small > T::tol(1e-7) * pencil.norm_bound(s.modulus()).max(T::one()) {
        return Err(Error::DefectiveSpectrum(format!("{} {:+}i", s.re, s.im)));
    }
    Ok(())
}

/// Rotates so the largest-modulus component is real and positive.
fn normalize_phase<T: Scalar>(v: DVector<Complex<T>>) -> DVector<Complex<T>> {
    let (mut best, mut idx) = (T::zero(), 0);
    for (i, z) in v.iter().enumerate() {
        if z.modulus() > best {
            best = z.modulus();
            idx = i;
        }
    }
    let phase = v[idx] / Complex::new(v[idx].modulus(), T::zero());
    let norm = v.norm();
    v.map(|z| z / phase / Complex::new(norm, T::zero()))
}
