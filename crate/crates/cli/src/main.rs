//! `mmbm`: analytic and Monte Carlo quantities of a reflected MMBM.
//!
//! Every subcommand reads a JSON model document and writes CSV to standard
//! output. Exit codes: 0 success, 1 bad input, 2 numerical failure,
//! 3 validation failure. `THREADS` optionally caps the simulation thread pool.

mod doc;
mod out;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmbm::linalg::{condition_number, MAX_CONDITION};
use mmbm::localtime::{overflow_rates, LocalTimeSolver, BLOCK_RESIDUAL_TOL};
use mmbm::passage::{Direction, FirstPassage, PASSAGE_RESIDUAL_TOL};
use mmbm::reflection::{crossing_matrices, crossing_matrices_zero_drift, ExpEpoch, Start, Stationary, CROSSING_RESIDUAL_TOL};
use mmbm::simulate::{self, Estimator, Scheme, SimConfig};
use mmbm::{Error, ErrorKind, Matrix, Model};

use doc::{LoadError, Loaded};
use out::{Cell, Csv};

#[derive(Debug, Parser)]
#[command(name = "mmbm", version, about = "Markov-modulated Brownian motion reflected into [0, B]")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArg {
    /// JSON model document.
    model: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// First-passage probabilities P_i(τ_x < e_q, J(τ_x) = j) of the free process.
    Passage {
        #[command(flatten)]
        file: ModelArg,
        #[arg(long)]
        q: Option<f64>,
        /// up | down
        #[arg(long, default_value = "up")]
        direction: Direction,
        /// Comma-separated levels x ≥ 0.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        levels: Vec<f64>,
    },
    /// Stationary law of W given J on a uniform grid over [0, B].
    Stationary {
        #[command(flatten)]
        file: ModelArg,
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
    /// Joint law P_i(W(e_q) ≥ x, J(e_q) = j) from a barrier start.
    ExpEpoch {
        #[command(flatten)]
        file: ModelArg,
        #[arg(long)]
        q: Option<f64>,
        /// bottom | top
        #[arg(long, default_value = "bottom")]
        start: Start,
        /// Comma-separated levels in [0, B]; default 11 equally spaced.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Local-time transforms Mᴸ, Mᵁ, Fᴸ, Fᵁ and their Perron eigenvalues.
    Localtime {
        #[command(flatten)]
        file: ModelArg,
        #[arg(long)]
        q: Option<f64>,
        /// Comma-separated α values inside the admissible interval.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        alpha_grid: Vec<f64>,
        /// Start level; defaults to the document's x0.
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Long-run unused capacity and overflow rates per phase.
    Overflow {
        #[command(flatten)]
        file: ModelArg,
    },
    /// Monte Carlo estimates with standard errors.
    Simulate(SimulateArgs),
    /// Numerical self-checks; exit code 3 if any fails.
    Validate {
        #[command(flatten)]
        file: ModelArg,
        #[arg(long)]
        q: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    file: ModelArg,
    /// Time step; default 1e-3·min(1, B²/max σ², B/max |μ|).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    horizon: f64,
    /// Replications; default 1 for path/stationary/overflow, 1000 otherwise.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// path | passage | stationary | overflow | exp-epoch
    #[arg(long, default_value = "stationary")]
    estimator: Estimator,
    /// euler | bridge
    #[arg(long, default_value = "bridge")]
    scheme: Scheme,
    /// Killing rate for passage and exp-epoch.
    #[arg(long)]
    q: Option<f64>,
    /// Passage direction.
    #[arg(long, default_value = "up")]
    direction: Direction,
    /// Passage level.
    #[arg(long, default_value_t = 1.0)]
    x: f64,
    /// Levels for stationary / exp-epoch; default B·k/10, k = 1..9.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Initial state for the path estimator (index).
    #[arg(long, default_value_t = 0)]
    state: usize,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
    Validation,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.kind() {
            ErrorKind::Input => Failure::Input(e.to_string()),
            ErrorKind::Numerical => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Model(inner) => inner.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("cannot write output: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = std::env::var("THREADS").ok().and_then(|t| t.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation) => {
            eprintln!("validation failed");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Passage { file, q, direction, levels } => {
            let l = doc::load(&file.model)?;
            passage(&l, killing(q, &l)?, direction, &levels)
        }
        Command::Stationary { file, grid } => stationary(&doc::load(&file.model)?, grid),
        Command::ExpEpoch { file, q, start, levels } => {
            let l = doc::load(&file.model)?;
            let levels = levels.unwrap_or_else(|| uniform(l.strip.b, 11));
            exp_epoch(&l, killing(q, &l)?, start, &levels)
        }
        Command::Localtime { file, q, alpha_grid, x0 } => {
            let l = doc::load(&file.model)?;
            localtime(&l, killing(q, &l)?, &alpha_grid, x0.unwrap_or(l.strip.x0))
        }
        Command::Overflow { file } => overflow(&doc::load(&file.model)?),
        Command::Simulate(args) => {
            let l = doc::load(&args.file.model)?;
            simulate_cmd(&l, &args)
        }
        Command::Validate { file, q } => {
            let l = doc::load(&file.model)?;
            validate(&l, killing(q, &l)?)
        }
    }
}

/// `--q`, else the document's `q`, else 0.
fn killing(flag: Option<f64>, l: &Loaded) -> Result<f64, Failure> {
    let q = flag.or(l.q).unwrap_or(0.0);
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Failure::Input(format!("--q must be a finite number >= 0, got {q}")));
    }
    Ok(q)
}

fn uniform(b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| if k + 1 == n { b } else { b * k as f64 / (n - 1) as f64 }).collect()
}

fn labels(m: &Model, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| m.labels()[i].clone()).collect()
}

fn passage(l: &Loaded, q: f64, direction: Direction, levels: &[f64]) -> Outcome {
    let m = &l.model;
    let fp = FirstPassage::new(m, q)?;
    let pair = fp.get(direction);
    let cols = labels(m, pair.phases.as_slice());
    let mut csv = Csv::new(&["state_i", "state_j", "x", "probability"]);
    for &x in levels {
        let p = pair.crossing_probability(x)?;
        for i in 0..m.n_states() {
            for (c, lab) in cols.iter().enumerate() {
                csv.row(&[(&m.labels()[i]).into(), lab.into(), x.into(), p[(i, c)].into()]);
            }
        }
    }
    Ok(csv.finish()?)
}

fn stationary(l: &Loaded, grid: usize) -> Outcome {
    if grid < 2 {
        return Err(Failure::Input(format!("--grid must be at least 2, got {grid}")));
    }
    let m = &l.model;
    let law = Stationary::new(m, l.strip.b)?.tabulate(grid)?;
    let mut csv = Csv::new(&["state", "x", "survival", "cdf", "density", "mass0", "massB"]);
    for i in 0..m.n_states() {
        for (k, &x) in law.grid.iter().enumerate() {
            csv.row(&[
                (&m.labels()[i]).into(),
                x.into(),
                law.survival[(k, i)].into(),
                law.cdf[(k, i)].into(),
                law.density[(k, i)].into(),
                law.mass0[i].into(),
                law.mass_b[i].into(),
            ]);
        }
    }
    Ok(csv.finish()?)
}

fn exp_epoch(l: &Loaded, q: f64, start: Start, levels: &[f64]) -> Outcome {
    let m = &l.model;
    let ep = ExpEpoch::new(m, l.strip.b, q, start)?;
    let mut csv = Csv::new(&["start_state", "state", "x", "survival"]);
    for &x in levels {
        let s = ep.survival(x)?;
        write_joint(&mut csv, m, x, &s, None);
    }
    Ok(csv.finish()?)
}

fn write_joint(csv: &mut Csv, m: &Model, x: f64, value: &Matrix, se: Option<&Matrix>) {
    for i in 0..m.n_states() {
        for j in 0..m.n_states() {
            let mut cells: Vec<Cell> = vec![(&m.labels()[i]).into(), (&m.labels()[j]).into(), x.into(), value[(i, j)].into()];
            if let Some(se) = se {
                cells.push(se[(i, j)].into());
            }
            csv.row(&cells);
        }
    }
}

fn localtime(l: &Loaded, q: f64, alphas: &[f64], x0: f64) -> Outcome {
    let m = &l.model;
    let solver = LocalTimeSolver::new(m, l.strip.b, q)?;
    let lower = labels(m, &solver.passage().classes.e_minus);
    let upper = labels(m, &solver.passage().classes.e_plus);
    let states = m.labels().to_vec();
    let mut csv = Csv::new(&["alpha", "matrix", "row", "col", "value"]);
    for &alpha in alphas {
        let lt = solver.transform(x0, alpha)?;
        let blocks: [(&str, &Matrix, &[String], &[String]); 4] = [
            ("ML", &lt.ml, &states, &lower),
            ("MU", &lt.mu, &states, &upper),
            ("FL", &lt.fl, &lower, &lower),
            ("FU", &lt.fu, &upper, &upper),
        ];
        for (name, mat, rows, cols) in blocks {
            for (i, r) in rows.iter().enumerate() {
                for (j, c) in cols.iter().enumerate() {
                    csv.row(&[alpha.into(), name.into(), r.into(), c.into(), mat[(i, j)].into()]);
                }
            }
        }
        csv.row(&[alpha.into(), "kL".into(), Cell::Empty, Cell::Empty, lt.k_l.into()]);
        csv.row(&[alpha.into(), "kU".into(), Cell::Empty, Cell::Empty, lt.k_u.into()]);
    }
    Ok(csv.finish()?)
}

fn overflow(l: &Loaded) -> Outcome {
    let m = &l.model;
    let n = m.n_states();
    let r = overflow_rates(m, l.strip.b)?;
    let (unused, over) = (r.unused_by_state(n), r.overflow_by_state(n));
    let mut csv = Csv::new(&["phase", "unused_rate", "overflow_rate"]);
    for i in 0..n {
        csv.row(&[(&m.labels()[i]).into(), unused[i].into(), over[i].into()]);
    }
    Ok(csv.finish()?)
}

fn simulate_cmd(l: &Loaded, a: &SimulateArgs) -> Outcome {
    let m = &l.model;
    let b = l.strip.b;
    let long_run = matches!(a.estimator, Estimator::Path | Estimator::Stationary | Estimator::Overflow);
    let reps = a.reps.unwrap_or(if long_run { 1 } else { 1000 });
    let dt = a.dt.unwrap_or_else(|| SimConfig::default_dt(m, b));
    let cfg = SimConfig::new(dt, a.horizon, reps, a.seed)?.with_scheme(a.scheme);
    let levels = a.levels.clone().unwrap_or_else(|| (1..10).map(|k| b * k as f64 / 10.0).collect());
    match a.estimator {
        Estimator::Path => {
            let rec = simulate::simulate_path(m, &l.strip, a.state, &cfg)?;
            let mut csv = Csv::new(&["t", "x", "state", "w", "l", "u"]);
            for k in 0..rec.len() {
                csv.row(&[
                    rec.times[k].into(),
                    rec.x[k].into(),
                    (&m.labels()[rec.j[k]]).into(),
                    rec.w[k].into(),
                    rec.l[k].into(),
                    rec.u[k].into(),
                ]);
            }
            Ok(csv.finish()?)
        }
        Estimator::Passage => {
            let q = killing(a.q, l)?;
            let est = simulate::estimate_passage(m, q, a.x, a.direction, &cfg)?;
            let cls = m.phase_classes();
            let cols = labels(m, cls.get(a.direction.sign()));
            let mut csv = Csv::new(&["state_i", "state_j", "x", "estimate", "se"]);
            for i in 0..m.n_states() {
                for (c, lab) in cols.iter().enumerate() {
                    csv.row(&[
                        (&m.labels()[i]).into(),
                        lab.into(),
                        a.x.into(),
                        est.value[(i, c)].into(),
                        est.se[(i, c)].into(),
                    ]);
                }
            }
            Ok(csv.finish()?)
        }
        Estimator::Stationary => {
            let est = simulate::estimate_stationary(m, &l.strip, &levels, &cfg)?;
            let mut csv = Csv::new(&["state", "x", "cdf", "se"]);
            for i in 0..m.n_states() {
                for (k, &x) in levels.iter().enumerate() {
                    csv.row(&[(&m.labels()[i]).into(), x.into(), est.value[(k, i)].into(), est.se[(k, i)].into()]);
                }
            }
            Ok(csv.finish()?)
        }
        Estimator::Overflow => {
            let est = simulate::estimate_overflow(m, &l.strip, &cfg)?;
            let mut csv = Csv::new(&["phase", "unused_rate", "unused_se", "overflow_rate", "overflow_se"]);
            for i in 0..m.n_states() {
                csv.row(&[
                    (&m.labels()[i]).into(),
                    est.unused[i].into(),
                    est.unused_se[i].into(),
                    est.overflow[i].into(),
                    est.overflow_se[i].into(),
                ]);
            }
            Ok(csv.finish()?)
        }
        Estimator::ExpEpoch => {
            let q = killing(a.q, l)?;
            let est = simulate::estimate_exp_epoch(m, &l.strip, q, &levels, &cfg)?;
            let mut csv = Csv::new(&["start_state", "state", "x", "survival", "se"]);
            for (k, &x) in levels.iter().enumerate() {
                let e = &est.survival[k];
                write_joint(&mut csv, m, x, &e.value, Some(&e.se));
            }
            Ok(csv.finish()?)
        }
    }
}

struct Check {
    name: String,
    value: f64,
    tolerance: f64,
    /// `None`: not applicable for this model.
    pass: Option<bool>,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: Some(value <= tolerance),
        }
    }

    fn skipped(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: f64::NAN,
            tolerance: f64::NAN,
            pass: None,
        }
    }

    fn failed(name: &str, tolerance: f64, why: &Error) -> Self {
        eprintln!("{name}: {why}");
        Self {
            name: name.to_string(),
            value: f64::INFINITY,
            tolerance,
            pass: Some(false),
        }
    }
}

fn validate(l: &Loaded, q: f64) -> Outcome {
    let m = &l.model;
    let b = l.strip.b;
    let x0 = l.strip.x0;
    let zero_drift = q == 0.0 && m.has_zero_drift();
    let mut checks = Vec::new();

    // Quadratic matrix equation for both passage pairs.
    let fp = if zero_drift { FirstPassage::zero_drift(m) } else { FirstPassage::new(m, q) };
    match &fp {
        Ok(fp) => {
            for (name, d) in [("passage_residual_up", Direction::Up), ("passage_residual_down", Direction::Down)] {
                let scale = 1.0 + fp.get(d).lambda.amax().powi(2);
                checks.push(Check::at_most(name, fp.get(d).residual(m) / scale, PASSAGE_RESIDUAL_TOL));
            }
        }
        Err(e) => checks.push(Check::failed("passage_residual", PASSAGE_RESIDUAL_TOL, e)),
    }

    // Block system of the local-time transforms, mid-interval α.
    if zero_drift {
        checks.push(Check::skipped("block_residual"));
    } else {
        let block = LocalTimeSolver::new(m, b, q).and_then(|s| {
            let (lo, hi) = s.admissible_interval();
            let (lo, hi) = (lo.max(-10.0), hi.min(10.0));
            s.transform(x0, 0.5 * (lo + hi))
        });
        match block {
            Ok(lt) => {
                checks.push(Check::at_most("block_residual", lt.residual, BLOCK_RESIDUAL_TOL));
                checks.push(Check::at_most("perron_kL_negative", lt.k_l, 0.0));
                checks.push(Check::at_most("perron_kU_negative", lt.k_u, 0.0));
            }
            Err(e) => checks.push(Check::failed("block_residual", BLOCK_RESIDUAL_TOL, &e)),
        }
    }

    // Complementarity of the stationary survival and distribution functions.
    match Stationary::new(m, b) {
        Ok(st) => {
            let worst = (1..100).try_fold(0.0f64, |worst, k| {
                let x = b * (k as f64 / 100.0);
                let total = st.survival(x)? + st.cdf(x)?;
                Ok::<_, Error>(total.iter().fold(worst, |w, v| w.max((v - 1.0).abs())))
            });
            match worst {
                Ok(w) => checks.push(Check::at_most("complementarity", w, 1e-9)),
                Err(e) => checks.push(Check::failed("complementarity", 1e-9, &e)),
            }
        }
        Err(e) => checks.push(Check::failed("complementarity", 1e-9, &e)),
    }

    // Two-barrier exit matrices and the conditioning of K±.
    let (up, down) = (b - x0, x0);
    let crossing = if zero_drift {
        crossing_matrices_zero_drift(m, up, down)
    } else {
        crossing_matrices(m, q, up, down)
    };
    match crossing {
        Ok(cm) => {
            checks.push(Check::at_most("crossing_residual", cm.residual, CROSSING_RESIDUAL_TOL));
            for (name, k) in [("condition_K_plus", &cm.kp), ("condition_K_minus", &cm.km)] {
                match k {
                    Some(k) => checks.push(Check::at_most(name, condition_number(k), MAX_CONDITION)),
                    None => checks.push(Check::skipped(name)),
                }
            }
        }
        Err(e) => checks.push(Check::failed("crossing_residual", CROSSING_RESIDUAL_TOL, &e)),
    }

    let mut csv = Csv::new(&["check", "value", "tolerance", "status"]);
    for c in &checks {
        let status = match c.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "skip",
        };
        let cell = |v: f64| if v.is_nan() { Cell::Empty } else { Cell::Real(v) };
        csv.row(&[c.name.as_str().into(), cell(c.value), cell(c.tolerance), status.into()]);
    }
    csv.finish()?;
    if checks.iter().any(|c| c.pass == Some(false)) {
        return Err(Failure::Validation);
    }
    Ok(())
}
