//! `ssvm`: simulate data, fit sparse SVMs, trace regularization paths, run
//! the replicated benchmark and dump convergence diagnostics.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sparse_svm::adaptive::{Penalty, TwoStep, TwoStepConfig, DEFAULT_SCAD_A};
use sparse_svm::benchmark::{run_benchmark, BenchConfig, BenchMethod};
use sparse_svm::data::{
    build_signed_design, load_dataset, make_partition, write_csv, DataFormat, Dataset,
};
use sparse_svm::engine::{dist_monitor, Engine, FitOutput};
use sparse_svm::selection::{
    lambda_grid, select_by_cv, select_by_svmic, Method, PathOptions, SelectionRule,
    DEFAULT_MIN_RATIO, DEFAULT_N_LAMBDA,
};
use sparse_svm::synthetic::{generate, SimSpec};
use sparse_svm::{par, PenaltyWeights, Result, SolverConfig, SvmError, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "ssvm",
    version,
    about = "Sparse linear SVMs by feature-split ADMM"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SSVM_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of feature blocks G.
    #[arg(long, global = true)]
    blocks: Option<usize>,
    #[arg(long, global = true)]
    phi: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true, value_enum)]
    variant: Option<Variant>,
    #[arg(long, global = true, value_enum, default_value_t = Penalty::L1)]
    penalty: Penalty,
    #[arg(long, global = true, default_value_t = 1.0)]
    upsilon: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_SCAD_A)]
    scad_a: f64,
    /// Output file (a directory for `simulate`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic train/test pair and its true coefficients.
    Simulate(SimArgs),
    /// Fit at a single penalty level and write the model as JSON.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: f64,
    },
    /// Fit a warm-started path and select a penalty level.
    Path {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = SelectionRule::Svmic)]
        select: SelectionRule,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = DEFAULT_N_LAMBDA)]
        n_lambda: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_RATIO)]
        min_ratio: f64,
        /// Explicit decreasing grid, overriding --n-lambda/--min-ratio.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Replicated simulation study with SVMIC_H selection.
    Benchmark {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Comma-separated subset of l1-cd, l1-prox, two-step-cd, two-step-prox.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "l1-cd,l1-prox,two-step-cd,two-step-prox"
        )]
        methods: Vec<String>,
        /// Add the exact LP baseline (small instances only).
        #[arg(long)]
        with_oracle: bool,
        #[arg(long)]
        n_lambda: Option<usize>,
        #[arg(long)]
        min_ratio: Option<f64>,
    },
    /// Per-iteration residuals, objective and distance to the final iterate.
    Convergence {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: f64,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset path (CSV with the label first, or sparse `label idx:val`).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    format: Option<DataFormat>,
    /// Feature count for sparse files whose trailing columns are empty.
    #[arg(long)]
    n_features: Option<usize>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 3000)]
    p: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    /// 0-based indices of the active features.
    #[arg(long, value_delimiter = ',', default_value = "50,1000,1500,2000")]
    active: Vec<usize>,
    #[arg(long, default_value_t = 1.1)]
    signal: f64,
    /// Test-set size; defaults to n.
    #[arg(long)]
    n_test: Option<usize>,
}

impl SimArgs {
    fn spec(&self, seed: u64) -> SimSpec {
        SimSpec {
            n: self.n,
            p: self.p,
            rho: self.rho,
            active_set: self.active.clone(),
            signal: self.signal,
            seed,
            n_test: self.n_test.unwrap_or(self.n),
        }
    }
}

impl Global {
    fn solver(&self, base: SolverConfig) -> SolverConfig {
        SolverConfig {
            phi: self.phi.unwrap_or(base.phi),
            theta: self.theta.unwrap_or(base.theta),
            tol: self.tol.unwrap_or(base.tol),
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            variant: self.variant.unwrap_or(base.variant),
            ..base
        }
    }

    fn two_step(&self, solver: SolverConfig) -> TwoStepConfig {
        TwoStepConfig {
            upsilon: self.upsilon,
            scad_a: self.scad_a,
            ..TwoStepConfig::new(solver)
        }
    }

    fn method(&self, solver: &SolverConfig) -> Method {
        match self.penalty {
            Penalty::L1 => Method::L1,
            Penalty::Scad => Method::TwoStep(Box::new(self.two_step(solver.clone()))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(SvmError::Config("--threads must be positive".into()));
        }
        if self.blocks == Some(0) {
            return Err(SvmError::Config("--blocks must be positive".into()));
        }
        self.two_step(self.solver(SolverConfig::default()))
            .validate()
    }
}

#[derive(Serialize)]
struct Truth<'a> {
    spec: &'a SimSpec,
    beta_star: Vec<(usize, f64)>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &SvmError) -> u8 {
    if e.is_data_error() {
        2
    } else if matches!(e, SvmError::Config(_)) {
        1
    } else {
        3
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    g.validate()?;
    if let Some(t) = g.threads {
        par::init_threads(t).map_err(SvmError::Config)?;
    }
    match &cli.command {
        Command::Simulate(sim) => simulate(g, sim),
        Command::Fit { data, lambda } => fit(g, data, *lambda),
        Command::Path {
            data,
            select,
            folds,
            n_lambda,
            min_ratio,
            lambdas,
        } => path(
            g,
            data,
            *select,
            *folds,
            *n_lambda,
            *min_ratio,
            lambdas.as_deref(),
        ),
        Command::Benchmark {
            sim,
            reps,
            methods,
            with_oracle,
            n_lambda,
            min_ratio,
        } => benchmark(g, sim, *reps, methods, *with_oracle, *n_lambda, *min_ratio),
        Command::Convergence { data, lambda } => convergence(g, data, *lambda),
    }
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let format = args
        .format
        .unwrap_or_else(|| DataFormat::from_path(&args.data));
    load_dataset(&args.data, format, args.n_features)
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SvmError::Config(format!(
            "--lambda must be finite and non-negative, got {lambda}"
        )))
    }
}

fn simulate(g: &Global, sim: &SimArgs) -> Result<()> {
    let spec = sim.spec(g.seed);
    spec.validate()?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let (train, test, beta) = generate(&spec)?;
    write_csv(&train, BufWriter::new(File::create(dir.join("train.csv"))?))?;
    write_csv(&test, BufWriter::new(File::create(dir.join("test.csv"))?))?;
    let truth = Truth {
        spec: &spec,
        beta_star: beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, b)| (j, *b))
            .collect(),
    };
    fs::write(
        dir.join("truth.json"),
        serde_json::to_string_pretty(&truth)? + "\n",
    )?;
    eprintln!(
        "wrote train.csv, test.csv and truth.json to {}",
        dir.display()
    );
    Ok(())
}

fn fit(g: &Global, data: &DataArgs, lambda: f64) -> Result<()> {
    check_lambda(lambda)?;
    let d = load(data)?;
    let part = make_partition(d.n_features(), g.blocks.unwrap_or(1))?;
    let design = build_signed_design(&d, &part)?;
    let solver = g.solver(SolverConfig::default());
    let out: FitOutput = match g.penalty {
        Penalty::L1 => Engine::new(&design, solver)?.fit(
            &PenaltyWeights::ones(d.n_features()),
            lambda,
            None,
        )?,
        Penalty::Scad => {
            TwoStep::new(&design, g.two_step(solver))?
                .fit(lambda, None)?
                .fit
        }
    };
    let r = &out.result;
    let mut w = output(g.out.as_deref())?;
    writeln!(w, "{}", r.to_json()?)?;
    w.flush()?;
    eprintln!(
        "objective {:.10} iterations {} support {} converged {}",
        r.objective,
        r.iterations,
        r.support.len(),
        r.converged
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn path(
    g: &Global,
    data: &DataArgs,
    select: SelectionRule,
    folds: usize,
    n_lambda: usize,
    min_ratio: f64,
    lambdas: Option<&[f64]>,
) -> Result<()> {
    let d = load(data)?;
    let part = make_partition(d.n_features(), g.blocks.unwrap_or(1))?;
    let design = build_signed_design(&d, &part)?;
    let grid = match lambdas {
        Some(l) => {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(SvmError::Config(
                    "--lambdas must be positive and finite".into(),
                ));
            }
            l.to_vec()
        }
        None => lambda_grid(&design, n_lambda, min_ratio)?,
    };
    let solver = g.solver(SolverConfig::default());
    let method = g.method(&solver);
    let res = match select {
        SelectionRule::Svmic => {
            select_by_svmic(&d, &design, &grid, &solver, &method, PathOptions::default())?
        }
        SelectionRule::Cv => select_by_cv(&d, &design, &grid, folds, &solver, &method, g.seed)?,
    };
    let mut w = output(g.out.as_deref())?;
    w.write_all(res.to_jsonl()?.as_bytes())?;
    w.flush()?;
    let s = res.summary();
    eprintln!(
        "selected lambda {} by {} (score {}), support {}",
        s.selected_lambda,
        s.rule,
        s.score,
        res.selected_fit().support.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn benchmark(
    g: &Global,
    sim: &SimArgs,
    reps: usize,
    methods: &[String],
    with_oracle: bool,
    n_lambda: Option<usize>,
    min_ratio: Option<f64>,
) -> Result<()> {
    let spec = sim.spec(g.seed);
    spec.validate()?;
    let mut list = methods
        .iter()
        .map(|m| m.parse::<BenchMethod>())
        .collect::<Result<Vec<_>>>()?;
    if with_oracle && !list.contains(&BenchMethod::Lp) {
        list.push(BenchMethod::Lp);
    }
    let base = BenchConfig::default();
    let cfg = BenchConfig {
        solver: g.solver(base.solver.clone()),
        blocks: g.blocks.unwrap_or(base.blocks),
        n_lambda: n_lambda.unwrap_or(base.n_lambda),
        min_ratio: min_ratio.unwrap_or(base.min_ratio),
        upsilon: g.upsilon,
        scad_a: g.scad_a,
        ..base
    };
    let res = run_benchmark(&spec, reps, &list, &cfg)?;
    let mut w = output(g.out.as_deref())?;
    w.write_all(res.to_csv()?.as_bytes())?;
    w.flush()?;
    eprint!("{}", res.to_table());
    Ok(())
}

fn convergence(g: &Global, data: &DataArgs, lambda: f64) -> Result<()> {
    check_lambda(lambda)?;
    let d = load(data)?;
    let part = make_partition(d.n_features(), g.blocks.unwrap_or(1))?;
    let design = build_signed_design(&d, &part)?;
    let base = g.solver(SolverConfig::default());
    let solver = SolverConfig {
        snapshot_every: Some(1),
        snapshot_cap: base.max_iter,
        ..base
    };
    let engine = Engine::new(&design, solver.clone())?;
    let out = engine.fit(&PenaltyWeights::ones(d.n_features()), lambda, None)?;
    let dist = dist_monitor(
        &out.snapshots,
        &out.state,
        &design,
        engine.etas(),
        solver.phi,
        solver.theta,
    )?;
    let mut w = csv::Writer::from_writer(output(g.out.as_deref())?);
    w.write_record(["iter", "primal", "dual", "objective", "dist"])?;
    for (k, (rec, dk)) in out.result.history.iter().zip(&dist).enumerate() {
        w.write_record([
            (k + 1).to_string(),
            rec.primal.to_string(),
            rec.dual.to_string(),
            rec.objective.to_string(),
            dk.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "iterations {} converged {} objective {}",
        out.result.iterations, out.result.converged, out.result.objective
    );
    Ok(())
}
