//! Monte Carlo simulation of the reflected MMBM.
//!
//! Phase switches are drawn exactly (exponential holding times from `Q`) and
//! each time step is split at switch epochs, so every piece of a step uses the
//! parameters of one phase. Within a piece `ΔX ~ N(μᵢh, σᵢ²h)`.
//!
//! Two reflection schemes are provided:
//!
//! * [`Scheme::Euler`]: clip the end point, `W' = min(B, max(0, W + ΔX))`, with
//!   the clipped amounts added to `L` and `U`.
//! * [`Scheme::BridgeCorrected`] (default): the minimum and maximum of the
//!   Brownian bridge between the end points are sampled exactly, and the
//!   pushing needed to keep the bridge inside `[0, B]` is added to `L` and `U`.
//!   For a piece that touches only one barrier this is the exact Skorokhod
//!   increment, which removes the `O(√dt)` bias of the clipped scheme.
//!
//! In both cases `W = x0 + X + L − U` holds up to rounding after every piece.
//!
//! Replication `r` draws from the ChaCha8 stream `r` of the configured seed,
//! so results do not depend on thread scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::passage::Direction;
use crate::reflection::StripSpec;
use crate::{Error, Model, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scheme {
    Euler,
    #[default]
    BridgeCorrected,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "bridge" => Ok(Scheme::BridgeCorrected),
            _ => Err(Error::InvalidArgument(format!("unknown scheme '{s}' (euler|bridge)"))),
        }
    }
}

/// Quantity targeted by a simulation run (used by the CLI).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Path,
    Passage,
    Stationary,
    Overflow,
    ExpEpoch,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(Estimator::Path),
            "passage" => Ok(Estimator::Passage),
            "stationary" => Ok(Estimator::Stationary),
            "overflow" => Ok(Estimator::Overflow),
            "exp-epoch" => Ok(Estimator::ExpEpoch),
            _ => Err(Error::InvalidArgument(format!(
                "unknown estimator '{s}' (path|passage|stationary|overflow|exp-epoch)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    /// Time horizon of each replication (for passage estimates: the cut-off
    /// after which a path counts as never crossing).
    pub horizon: f64,
    pub replications: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Fraction of each stationary run discarded as burn-in.
    pub burn_in: f64,
    /// Batches per replication for batch-means standard errors.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, replications: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            replications,
            seed,
            scheme: Scheme::default(),
            burn_in: 0.1,
            batches: 20,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// `1e-3·min(1, B²/max σᵢ², B/max |μᵢ|)`.
    pub fn default_dt(model: &Model, b: f64) -> f64 {
        let s2 = model.variance().amax();
        let mu = model.drift().amax();
        let mut scale: f64 = 1.0;
        if s2 > 0.0 {
            scale = scale.min(b * b / s2);
        }
        if mu > 0.0 {
            scale = scale.min(b / mu);
        }
        1e-3 * scale
    }

    fn check(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidArgument(format!("burn-in fraction {} not in [0, 1)", self.burn_in)));
        }
        if self.batches < 2 {
            return Err(Error::InvalidArgument("need at least two batches".into()));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Sample path, recorded at step ends and at phase-switch epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathRecord {
    pub x0: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub j: Vec<usize>,
    pub w: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|W − (x0 + X + L − U)|` along the path.
    pub fn skorokhod_defect(&self) -> f64 {
        (0..self.len())
            .map(|k| (self.w[k] - (self.x0 + self.x[k] + self.l[k] - self.u[k])).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-phase parameters and switching law.
struct Engine {
    mu: Vec<f64>,
    sd: Vec<f64>,
    var: Vec<f64>,
    rate: Vec<f64>,
    /// Cumulative jump probabilities to the other states.
    jumps: Vec<Vec<(usize, f64)>>,
    pi: Vec<f64>,
    scheme: Scheme,
}

#[derive(Debug, Clone, Copy)]
struct State {
    t: f64,
    next_switch: f64,
    j: usize,
    x: f64,
    w: f64,
    l: f64,
    u: f64,
}

/// One constant-phase piece of a step.
#[derive(Debug, Clone, Copy)]
struct Piece {
    phase: usize,
    dl: f64,
    du: f64,
}

impl Engine {
    fn new(model: &Model, scheme: Scheme) -> Result<Self> {
        model.validate()?;
        let n = model.n_states();
        let q = model.generator();
        let mut jumps = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        for i in 0..n {
            let r = -q[(i, i)];
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in (0..n).filter(|&j| j != i && q[(i, j)] > 0.0) {
                acc += q[(i, j)] / r;
                row.push((j, acc));
            }
            if let Some(last) = row.last_mut() {
                last.1 = 1.0;
            }
            rate.push(r);
            jumps.push(row);
        }
        Ok(Self {
            mu: model.drift().iter().copied().collect(),
            sd: model.variance().iter().map(|v| v.sqrt()).collect(),
            var: model.variance().iter().copied().collect(),
            rate,
            jumps,
            pi: model.stationary().iter().copied().collect(),
            scheme,
        })
    }

    fn holding<R: Rng>(&self, j: usize, rng: &mut R) -> f64 {
        if self.rate[j] > 0.0 {
            let e: f64 = rng.sample(Exp1);
            e / self.rate[j]
        } else {
            f64::INFINITY
        }
    }

    fn pick(cum: &[(usize, f64)], u: f64) -> usize {
        cum.iter().find(|(_, c)| u < *c).unwrap_or(cum.last().unwrap()).0
    }

    fn stationary_phase<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.pi.len() - 1
    }

    fn start<R: Rng>(&self, j: usize, w: f64, rng: &mut R) -> State {
        State {
            t: 0.0,
            next_switch: self.holding(j, rng),
            j,
            x: 0.0,
            w,
            l: 0.0,
            u: 0.0,
        }
    }

    fn switch<R: Rng>(&self, st: &mut State, rng: &mut R) {
        let u: f64 = rng.random();
        st.j = Self::pick(&self.jumps[st.j], u);
        st.next_switch = st.t + self.holding(st.j, rng);
    }

    fn increment<R: Rng>(&self, j: usize, h: f64, rng: &mut R) -> f64 {
        let z: f64 = if self.sd[j] > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        self.mu[j] * h + self.sd[j] * h.sqrt() * z
    }

    /// Reflected piece of length `h` in the current phase.
    fn reflected_piece<R: Rng>(&self, st: &mut State, h: f64, b: f64, rng: &mut R) -> Piece {
        let j = st.j;
        let dx = self.increment(j, h, rng);
        let w = st.w;
        let (mut dl, mut du) = match self.scheme {
            Scheme::Euler => ((-(w + dx)).max(0.0), (w + dx - b).max(0.0)),
            Scheme::BridgeCorrected => {
                let lo = self.bridge_min(j, h, dx, w, rng);
                let hi = self.bridge_max(j, h, dx, b - w, rng);
                ((-(w + lo)).max(0.0), (w + hi - b).max(0.0))
            }
        };
        let mut y = w + dx + dl - du;
        if y < 0.0 {
            dl -= y;
            y = 0.0;
        } else if y > b {
            du += y - b;
            y = b;
        }
        st.x += dx;
        st.w = y;
        st.l += dl;
        st.u += du;
        Piece { phase: j, dl, du }
    }

    /// Minimum of the bridge from 0 to `dx` over `h`. Skipped (returning
    /// `min(0, dx)`) when reaching below `-room` has probability under `e⁻⁴⁰`.
    fn bridge_min<R: Rng>(&self, j: usize, h: f64, dx: f64, room: f64, rng: &mut R) -> f64 {
        let v = self.var[j] * h;
        let floor = dx.min(0.0);
        if v == 0.0 {
            return floor;
        }
        // For room + dx > 0: P(min < -room | dx) = exp(-2 room (room + dx) / v).
        if room + dx > 0.0 && 2.0 * room * (room + dx) / v > 40.0 {
            return floor;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        0.5 * (dx - (dx * dx - 2.0 * v * u.ln()).sqrt())
    }

    fn bridge_max<R: Rng>(&self, j: usize, h: f64, dx: f64, room: f64, rng: &mut R) -> f64 {
        -self.bridge_min(j, h, -dx, room, rng)
    }

    /// Advances the reflected state by `h`, splitting at phase switches.
    fn advance<R: Rng>(
        &self,
        st: &mut State,
        h: f64,
        b: f64,
        rng: &mut R,
        mut on_piece: impl FnMut(&State, Piece, bool),
    ) {
        let end = st.t + h;
        loop {
            if st.next_switch < end {
                let len = st.next_switch - st.t;
                let p = self.reflected_piece(st, len, b, rng);
                st.t = st.next_switch;
                self.switch(st, rng);
                on_piece(st, p, true);
            } else {
                let len = end - st.t;
                let p = self.reflected_piece(st, len, b, rng);
                st.t = end;
                on_piece(st, p, false);
                return;
            }
        }
    }
}

fn check_strip(strip: &StripSpec<f64>) -> Result<()> {
    StripSpec::new(strip.b, strip.x0).map(|_| ())
}

fn check_state(model: &Model, j: usize) -> Result<()> {
    if j >= model.n_states() {
        return Err(Error::InvalidArgument(format!(
            "initial state {j} out of range (model has {} states)",
            model.n_states()
        )));
    }
    Ok(())
}

/// One reflected path on `[0, horizon]` from `(x0, j0)` (replication 0).
pub fn simulate_path(model: &Model, strip: &StripSpec<f64>, j0: usize, config: &SimConfig) -> Result<PathRecord> {
    config.check()?;
    check_strip(strip)?;
    check_state(model, j0)?;
    let engine = Engine::new(model, config.scheme)?;
    let mut rng = config.rng(0);
    let mut st = engine.start(j0, strip.x0, &mut rng);
    let mut rec = PathRecord {
        x0: strip.x0,
        ..Default::default()
    };
    let push = |rec: &mut PathRecord, st: &State| {
        rec.times.push(st.t);
        rec.x.push(st.x);
        rec.j.push(st.j);
        rec.w.push(st.w);
        rec.l.push(st.l);
        rec.u.push(st.u);
    };
    push(&mut rec, &st);
    let steps = (config.horizon / config.dt).ceil() as usize;
    for k in 0..steps {
        let h = config.dt.min(config.horizon - config.dt * k as f64);
        if h <= 0.0 {
            break;
        }
        engine.advance(&mut st, h, strip.b, &mut rng, |s, _, _| push(&mut rec, s));
    }
    Ok(rec)
}

/// Point estimate with standard errors, entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

impl Estimate {
    /// Largest `|value − reference| / se` (entries with `se = 0` must match
    /// to `1e-12`, otherwise count as infinitely many SEs).
    pub fn max_z(&self, reference: &DMatrix<f64>) -> f64 {
        let mut z: f64 = 0.0;
        for k in 0..self.value.len() {
            let d = (self.value[k] - reference[k]).abs();
            z = z.max(if self.se[k] > 0.0 {
                d / self.se[k]
            } else if d <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            });
        }
        z
    }
}

fn binomial(counts: &DMatrix<f64>, n: f64) -> Estimate {
    let value = counts / n;
    let se = value.map(|p| (p * (1.0 - p) / n).sqrt());
    Estimate { value, se }
}

/// `P_i(τₓ < e_q, J(τₓ) = j)` for the free (unreflected) process, laid out
/// like [`crate::passage::PassagePair::crossing_probability`] (columns over
/// the phase class of the direction).
///
/// Every start state gets `replications` paths; a path that has not crossed
/// by `horizon` counts as not crossing. `q = 0` means no killing.
pub fn estimate_passage(model: &Model, q: f64, x: f64, direction: Direction, config: &SimConfig) -> Result<Estimate> {
    config.check()?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("passage level must be > 0, got {x}")));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("killing rate must be >= 0, got {q}")));
    }
    let n = model.n_states();
    let engine = Engine::new(model, config.scheme)?;
    let sign = match direction {
        Direction::Up => 1.0,
        Direction::Down => -1.0,
    };
    let reps = config.replications;
    let outcomes: Vec<Option<usize>> = (0..n * reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.rng(r as u64);
            let i = r / reps;
            let clock = if q > 0.0 {
                let e: f64 = rng.sample(Exp1);
                (e / q).min(config.horizon)
            } else {
                config.horizon
            };
            passage_run(&engine, i, sign * x, sign, clock, config.dt, &mut rng)
        })
        .collect();
    let class = model.phase_classes();
    let cols = class.get(direction.sign());
    let mut counts = DMatrix::zeros(n, cols.len());
    for (r, o) in outcomes.iter().enumerate() {
        if let Some(j) = o {
            // A crossing happens in a phase that can move that way.
            let c = cols.iter().position(|k| k == j).expect("crossing phase outside its class");
            counts[(r / reps, c)] += 1.0;
        }
    }
    Ok(binomial(&counts, reps as f64))
}

/// Phase at the first crossing of `level` by `X` (free process) before `clock`.
fn passage_run<R: Rng>(
    engine: &Engine,
    j0: usize,
    level: f64,
    sign: f64,
    clock: f64,
    dt: f64,
    rng: &mut R,
) -> Option<usize> {
    let mut st = engine.start(j0, 0.0, rng);
    // Work with Y = sign·X so that the target is always an upward crossing.
    let target = sign * level;
    let mut y = 0.0;
    while st.t < clock {
        let end = (st.t + dt).min(clock);
        let (len, switching) = if st.next_switch < end {
            (st.next_switch - st.t, true)
        } else {
            (end - st.t, false)
        };
        let j = st.j;
        let dy = sign * engine.increment(j, len, rng);
        let crossed = match engine.scheme {
            Scheme::Euler => y + dy > target,
            Scheme::BridgeCorrected => {
                let room = target - y;
                let hi = -engine.bridge_min(j, len, -dy, room, rng);
                y + hi > target
            }
        };
        if crossed {
            return Some(j);
        }
        y += dy;
        if switching {
            st.t = st.next_switch;
            engine.switch(&mut st, rng);
        } else {
            st.t = end;
        }
    }
    None
}

/// Per-state stationary CDF `P(W ≤ x | J = i)` at the given levels; rows are
/// levels, columns states. Standard errors from batch means.
pub fn estimate_stationary(model: &Model, strip: &StripSpec<f64>, levels: &[f64], config: &SimConfig) -> Result<Estimate> {
    let runs = stationary_runs(model, strip, config, |engine, st, rng, h, b, acc: &mut StationaryAcc| {
        engine.advance(st, h, b, rng, |_, _, _| {});
        acc.record(st.j, st.w);
    }, || StationaryAcc::new(model.n_states(), levels))?;
    let n = model.n_states();
    let nb = runs.len();
    let mut value: DMatrix<f64> = DMatrix::zeros(levels.len(), n);
    let mut sq: DMatrix<f64> = DMatrix::zeros(levels.len(), n);
    let mut used: DMatrix<f64> = DMatrix::zeros(levels.len(), n);
    for acc in &runs {
        let cdf = acc.cdf();
        for i in 0..n {
            if acc.visits[i] == 0.0 {
                continue;
            }
            for k in 0..levels.len() {
                value[(k, i)] += cdf[(k, i)];
                sq[(k, i)] += cdf[(k, i)] * cdf[(k, i)];
                used[(k, i)] += 1.0;
            }
        }
    }
    let mean = value.component_div(&used);
    let var = (sq.component_div(&used) - mean.component_mul(&mean)).map(|v: f64| v.max(0.0));
    let se = DMatrix::from_fn(levels.len(), n, |k, i| {
        let m = used[(k, i)];
        (var[(k, i)] * m / (m - 1.0) / m).sqrt()
    });
    let _ = nb;
    Ok(Estimate { value: mean, se })
}

struct StationaryAcc {
    levels: Vec<f64>,
    /// `hist[i][k]`: samples in phase `i` with `levels[k-1] < W ≤ levels[k]`.
    hist: Vec<Vec<f64>>,
    visits: Vec<f64>,
}

impl StationaryAcc {
    fn new(n: usize, levels: &[f64]) -> Self {
        Self {
            levels: levels.to_vec(),
            hist: vec![vec![0.0; levels.len() + 1]; n],
            visits: vec![0.0; n],
        }
    }

    fn record(&mut self, j: usize, w: f64) {
        let k = self.levels.partition_point(|&x| x < w);
        self.hist[j][k] += 1.0;
        self.visits[j] += 1.0;
    }

    fn cdf(&self) -> DMatrix<f64> {
        let n = self.hist.len();
        DMatrix::from_fn(self.levels.len(), n, |k, i| {
            let below: f64 = self.hist[i][..=k].iter().sum();
            if self.visits[i] > 0.0 {
                below / self.visits[i]
            } else {
                0.0
            }
        })
    }
}

/// Runs `replications` long reflected paths from `(x0, J ~ π)`, discards the
/// burn-in, and returns one accumulator per batch (in deterministic order).
fn stationary_runs<A: Send>(
    model: &Model,
    strip: &StripSpec<f64>,
    config: &SimConfig,
    step: impl Fn(&Engine, &mut State, &mut ChaCha8Rng, f64, f64, &mut A) + Sync,
    fresh: impl Fn() -> A + Sync,
) -> Result<Vec<A>> {
    config.check()?;
    check_strip(strip)?;
    let engine = Engine::new(model, config.scheme)?;
    let steps = (config.horizon / config.dt).round().max(1.0) as usize;
    let burn = (steps as f64 * config.burn_in).round() as usize;
    let per_batch = ((steps - burn) / config.batches).max(1);
    let runs: Vec<Vec<A>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.rng(r as u64);
            let j0 = engine.stationary_phase(&mut rng);
            let mut st = engine.start(j0, strip.x0, &mut rng);
            let mut sink = fresh();
            for _ in 0..burn {
                step(&engine, &mut st, &mut rng, config.dt, strip.b, &mut sink);
            }
            (0..config.batches)
                .map(|_| {
                    let mut acc = fresh();
                    for _ in 0..per_batch {
                        step(&engine, &mut st, &mut rng, config.dt, strip.b, &mut acc);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(runs.into_iter().flatten().collect())
}

/// Long-run `L(t)/t` and `U(t)/t` split by the phase active while pushing.
#[derive(Debug, Clone, PartialEq)]
pub struct OverflowEstimate {
    /// Per state (length `N`).
    pub unused: DVector<f64>,
    pub unused_se: DVector<f64>,
    pub overflow: DVector<f64>,
    pub overflow_se: DVector<f64>,
    pub kappa_l: f64,
    pub kappa_l_se: f64,
    pub kappa_u: f64,
    pub kappa_u_se: f64,
}

struct PushAcc {
    l: Vec<f64>,
    u: Vec<f64>,
    time: f64,
}

pub fn estimate_overflow(model: &Model, strip: &StripSpec<f64>, config: &SimConfig) -> Result<OverflowEstimate> {
    let n = model.n_states();
    let runs = stationary_runs(
        model,
        strip,
        config,
        |engine, st, rng, h, b, acc: &mut PushAcc| {
            engine.advance(st, h, b, rng, |_, p, _| {
                acc.l[p.phase] += p.dl;
                acc.u[p.phase] += p.du;
            });
            acc.time += h;
        },
        || PushAcc {
            l: vec![0.0; n],
            u: vec![0.0; n],
            time: 0.0,
        },
    )?;
    let m = runs.len() as f64;
    let stats = |f: &dyn Fn(&PushAcc) -> f64| -> (f64, f64) {
        let xs: Vec<f64> = runs.iter().map(|a| f(a) / a.time).collect();
        mean_se(&xs, m)
    };
    let mut unused = DVector::zeros(n);
    let mut unused_se = DVector::zeros(n);
    let mut overflow = DVector::zeros(n);
    let mut overflow_se = DVector::zeros(n);
    for i in 0..n {
        (unused[i], unused_se[i]) = stats(&|a| a.l[i]);
        (overflow[i], overflow_se[i]) = stats(&|a| a.u[i]);
    }
    let (kappa_l, kappa_l_se) = stats(&|a| a.l.iter().sum());
    let (kappa_u, kappa_u_se) = stats(&|a| a.u.iter().sum());
    Ok(OverflowEstimate {
        unused,
        unused_se,
        overflow,
        overflow_se,
        kappa_l,
        kappa_l_se,
        kappa_u,
        kappa_u_se,
    })
}

fn mean_se(xs: &[f64], m: f64) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Law of the reflected process at an independent exponential time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEstimate {
    /// One `N × N` estimate of `P_i(W(e_q) ≥ x, J(e_q) = j)` per level.
    pub survival: Vec<Estimate>,
    /// `E_i[L(e_q)]` and `E_i[U(e_q)]` per start state (`N × 1`).
    pub local_time_l: Estimate,
    pub local_time_u: Estimate,
}

/// Paths from `(strip.x0, i)` for every state `i`, each stopped at its own
/// `e_q`.
pub fn estimate_exp_epoch(
    model: &Model,
    strip: &StripSpec<f64>,
    q: f64,
    levels: &[f64],
    config: &SimConfig,
) -> Result<EpochEstimate> {
    config.check()?;
    check_strip(strip)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponential epoch needs q > 0, got {q}")));
    }
    let n = model.n_states();
    let engine = Engine::new(model, config.scheme)?;
    let reps = config.replications;
    let ends: Vec<State> = (0..n * reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.rng(r as u64);
            let e: f64 = rng.sample(Exp1);
            let clock = e / q;
            let mut st = engine.start(r / reps, strip.x0, &mut rng);
            while st.t < clock {
                let h = config.dt.min(clock - st.t);
                engine.advance(&mut st, h, strip.b, &mut rng, |_, _, _| {});
            }
            st
        })
        .collect();
    let nr = reps as f64;
    let survival = levels
        .iter()
        .map(|&x| {
            let mut counts = DMatrix::zeros(n, n);
            for (r, st) in ends.iter().enumerate() {
                if st.w >= x {
                    counts[(r / reps, st.j)] += 1.0;
                }
            }
            binomial(&counts, nr)
        })
        .collect();
    let moments = |f: &dyn Fn(&State) -> f64| {
        let mut value = DMatrix::zeros(n, 1);
        let mut se = DMatrix::zeros(n, 1);
        for i in 0..n {
            let xs: Vec<f64> = ends[i * reps..(i + 1) * reps].iter().map(f).collect();
            (value[(i, 0)], se[(i, 0)]) = mean_se(&xs, nr);
        }
        Estimate { value, se }
    };
    Ok(EpochEstimate {
        survival,
        local_time_l: moments(&|s| s.l),
        local_time_u: moments(&|s| s.u),
    })
}

/// Jump structure of `x ↦ U(τᴸₓ)`: overflow accumulated during each
/// excursion from the lower barrier that reaches the upper one.
#[derive(Debug, Clone, PartialEq)]
pub struct OverflowProcessEstimate {
    pub jumps: usize,
    /// Jumps per unit of lower local time.
    pub jump_rate: f64,
    pub jump_rate_se: f64,
    /// Reciprocal mean jump size.
    pub size_rate: f64,
    pub size_rate_se: f64,
    pub local_time: f64,
}

pub fn estimate_overflow_process(model: &Model, b: f64, config: &SimConfig) -> Result<OverflowProcessEstimate> {
    config.check()?;
    let strip = StripSpec::bottom(b)?;
    let engine = Engine::new(model, config.scheme)?;
    let per_rep: Vec<(f64, Vec<f64>)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = config.rng(r as u64);
            let j0 = engine.stationary_phase(&mut rng);
            let mut st = engine.start(j0, strip.x0, &mut rng);
            let mut sizes = Vec::new();
            let mut open: Option<f64> = None;
            let steps = (config.horizon / config.dt).round() as usize;
            for _ in 0..steps {
                engine.advance(&mut st, config.dt, b, &mut rng, |_, p, _| {
                    if p.dl > 0.0 {
                        if let Some(s) = open.take() {
                            sizes.push(s);
                        }
                    }
                    if p.du > 0.0 {
                        *open.get_or_insert(0.0) += p.du;
                    }
                });
            }
            (st.l, sizes)
        })
        .collect();
    let local_time: f64 = per_rep.iter().map(|r| r.0).sum();
    let sizes: Vec<f64> = per_rep.into_iter().flat_map(|r| r.1).collect();
    let k = sizes.len();
    if k < 2 || local_time <= 0.0 {
        return Err(Error::InvalidArgument(
            "too few completed overflow jumps; increase the horizon".into(),
        ));
    }
    let kf = k as f64;
    let jump_rate = kf / local_time;
    let (mean, se_mean) = mean_se(&sizes, kf);
    Ok(OverflowProcessEstimate {
        jumps: k,
        jump_rate,
        jump_rate_se: jump_rate / kf.sqrt(),
        size_rate: 1.0 / mean,
        size_rate_se: se_mean / (mean * mean),
        local_time,
    })
}
