//! Replicated simulation study: generate, fit each method along a path,
//! select by SVMIC_H, evaluate, aggregate.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::adaptive::TwoStepConfig;
use crate::data::{
    build_signed_design, make_partition, Dataset, PenaltyWeights, SolverConfig, Variant,
};
use crate::engine::FitResult;
use crate::error::{Result, SvmError};
use crate::lp::oracle_fit;
use crate::par::{map_range, Execution};
use crate::selection::{
    argmin_first, fit_path, lambda_grid, svmic_h, svmic_stop_len, Method, PathOptions, SvmicStop,
};
use crate::synthetic::{evaluate, generate, Metrics, MetricsRow, SimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchMethod {
    L1Cd,
    L1Prox,
    TwoStepCd,
    TwoStepProx,
    Lp,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 5] = [
        BenchMethod::L1Cd,
        BenchMethod::L1Prox,
        BenchMethod::TwoStepCd,
        BenchMethod::TwoStepProx,
        BenchMethod::Lp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::L1Cd => "l1-cd",
            BenchMethod::L1Prox => "l1-prox",
            BenchMethod::TwoStepCd => "two-step-cd",
            BenchMethod::TwoStepProx => "two-step-prox",
            BenchMethod::Lp => "lp",
        }
    }
}

impl std::fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchMethod {
    type Err = SvmError;
    fn from_str(s: &str) -> Result<Self> {
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SvmError::Config(format!("unknown method '{s}'")))
    }
}

/// Solver settings for the study. The defaults trade the library's tight
/// tolerance for a small penalty parameter and a single inner sweep, which
/// reach the same selected models far faster on wide designs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub solver: SolverConfig,
    pub blocks: usize,
    pub n_lambda: usize,
    pub min_ratio: f64,
    pub upsilon: f64,
    pub scad_a: f64,
    /// Stop a path once this many consecutive fits cannot win on SVMIC_H.
    pub patience: Option<usize>,
    /// Parallelism across replications.
    pub execution: Execution,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            solver: SolverConfig {
                phi: 0.01,
                inner_sweeps: 1,
                tol: 1e-4,
                ..SolverConfig::default()
            },
            blocks: 4,
            n_lambda: 30,
            min_ratio: 0.05,
            upsilon: 1.0,
            scad_a: crate::adaptive::DEFAULT_SCAD_A,
            patience: Some(3),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRuns {
    pub method: BenchMethod,
    /// One row per replication, NaN for failures.
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: BenchMethod,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub reps: usize,
    pub runs: Vec<MethodRuns>,
}

impl BenchmarkResult {
    pub fn runs_for(&self, m: BenchMethod) -> Option<&MethodRuns> {
        self.runs.iter().find(|r| r.method == m)
    }

    /// Mean and standard error over successful replications.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for run in &self.runs {
            for (k, metric) in MetricsRow::NAMES.iter().enumerate() {
                let vals: Vec<f64> = run
                    .rows
                    .iter()
                    .map(|r| r.values()[k])
                    .filter(|v| !v.is_nan())
                    .collect();
                let (mean, stderr) = mean_stderr(&vals);
                out.push(SummaryRow {
                    method: run.method,
                    metric,
                    mean,
                    stderr,
                });
            }
        }
        out
    }

    pub fn mean(&self, m: BenchMethod, metric: &str) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|r| r.method == m && r.metric == metric)
            .map(|r| r.mean)
    }

    /// `method,metric,mean,stderr`, with a `failures` count per method.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "metric", "mean", "stderr"])?;
        let summary = self.summary();
        for run in &self.runs {
            for row in summary.iter().filter(|r| r.method == run.method) {
                w.write_record([
                    run.method.name(),
                    row.metric,
                    &row.mean.to_string(),
                    &row.stderr.to_string(),
                ])?;
            }
            w.write_record([
                run.method.name(),
                "failures",
                &run.failures.len().to_string(),
                "0",
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| SvmError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_table(&self) -> String {
        let summary = self.summary();
        let mut s = String::new();
        let _ = write!(s, "{:<14}", "method");
        for m in MetricsRow::NAMES {
            let _ = write!(s, " {:>20}", m);
        }
        let _ = writeln!(s, " {:>8}", "failed");
        for run in &self.runs {
            let _ = write!(s, "{:<14}", run.method.name());
            for row in summary.iter().filter(|r| r.method == run.method) {
                let _ = write!(s, " {:>20}", format!("{:.4} ({:.4})", row.mean, row.stderr));
            }
            let _ = writeln!(s, " {:>8}", run.failures.len());
        }
        s
    }
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let k = v.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

/// Run `reps` replications with seeds `spec.seed + r`.
pub fn run_benchmark(
    spec: &SimSpec,
    reps: usize,
    methods: &[BenchMethod],
    cfg: &BenchConfig,
) -> Result<BenchmarkResult> {
    if reps == 0 {
        return Err(SvmError::Config("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(SvmError::Config("no methods requested".into()));
    }
    spec.validate()?;
    cfg.solver.validate()?;
    let per_rep = map_range(cfg.execution, reps, |r| {
        let rspec = SimSpec {
            seed: spec.seed.wrapping_add(r as u64),
            ..spec.clone()
        };
        replicate(&rspec, methods, cfg)
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let runs = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut rows = Vec::with_capacity(reps);
            let mut failures = Vec::new();
            for (r, outcome) in per_rep.iter().enumerate() {
                match &outcome[k] {
                    Ok(m) => rows.push(m.as_row()),
                    Err(e) => {
                        log::warn!("{method} replication {r} failed: {e}");
                        rows.push(Metrics::failed());
                        failures.push((r, e.clone()));
                    }
                }
            }
            MethodRuns {
                method,
                rows,
                failures,
            }
        })
        .collect();
    Ok(BenchmarkResult { reps, runs })
}

type Outcome = std::result::Result<Metrics, String>;

/// One replication: every requested method on the same data. Method-level
/// failures are captured, generation failures propagate.
fn replicate(spec: &SimSpec, methods: &[BenchMethod], cfg: &BenchConfig) -> Result<Vec<Outcome>> {
    let (train, test, beta) = generate(spec)?;
    let part = make_partition(spec.p, cfg.blocks.min(spec.p))?;
    let design = build_signed_design(&train, &part)?;
    let grid = lambda_grid(&design, cfg.n_lambda, cfg.min_ratio)?;
    let stop = cfg.patience.map(|patience| SvmicStop {
        data: &train,
        patience,
    });
    let opts = PathOptions {
        warm_start: true,
        stop,
    };

    // The l1 path coincides with the first stage of the two-step path when
    // both use the same variant and upsilon is one, so it is shared.
    let mut outcomes: Vec<Option<Outcome>> = vec![None; methods.len()];
    for variant in [Variant::Cd, Variant::Prox] {
        let wanted = |m: BenchMethod| methods.iter().position(|&x| x == m);
        let (l1, ts) = match variant {
            Variant::Cd => (wanted(BenchMethod::L1Cd), wanted(BenchMethod::TwoStepCd)),
            Variant::Prox => (
                wanted(BenchMethod::L1Prox),
                wanted(BenchMethod::TwoStepProx),
            ),
        };
        if l1.is_none() && ts.is_none() {
            continue;
        }
        let solver = SolverConfig {
            variant,
            ..cfg.solver.clone()
        };
        let mut shared: Option<Outcome> = None;
        if let Some(k) = ts {
            let ts_cfg = TwoStepConfig {
                upsilon: cfg.upsilon,
                scad_a: cfg.scad_a,
                ..TwoStepConfig::new(solver.clone())
            };
            let path = fit_path(
                &design,
                &grid,
                &solver,
                &Method::TwoStep(Box::new(ts_cfg)),
                opts,
            );
            if l1.is_some() && cfg.upsilon == 1.0 {
                shared = Some(match &path {
                    Ok(fits) => {
                        let stage_one = fits
                            .iter()
                            .map(|f| (**f.stage_one.as_ref().expect("two-step fit")).clone());
                        select_and_evaluate(
                            truncate(stage_one.collect(), stop),
                            &train,
                            &test,
                            &beta,
                            &spec.active_set,
                        )
                    }
                    Err(e) => Err(e.to_string()),
                });
            }
            outcomes[k] = Some(select_and_evaluate(
                path,
                &train,
                &test,
                &beta,
                &spec.active_set,
            ));
        }
        if let Some(k) = l1 {
            outcomes[k] = Some(shared.unwrap_or_else(|| {
                let fits = fit_path(&design, &grid, &solver, &Method::L1, opts);
                select_and_evaluate(fits, &train, &test, &beta, &spec.active_set)
            }));
        }
    }
    if let Some(k) = methods.iter().position(|&m| m == BenchMethod::Lp) {
        let fits = grid
            .iter()
            .map(|&l| oracle_fit(&train, &PenaltyWeights::ones(spec.p), l))
            .collect::<Result<Vec<_>>>();
        outcomes[k] = Some(select_and_evaluate(
            fits,
            &train,
            &test,
            &beta,
            &spec.active_set,
        ));
    }
    Ok(outcomes
        .into_iter()
        .map(|o| o.expect("every method handled"))
        .collect())
}

fn truncate(fits: Vec<FitResult>, stop: Option<SvmicStop<'_>>) -> Result<Vec<FitResult>> {
    let mut fits = fits;
    if let Some(rule) = stop {
        let len = svmic_stop_len(&fits, rule)?;
        fits.truncate(len);
    }
    Ok(fits)
}

fn select_and_evaluate(
    fits: Result<Vec<FitResult>>,
    train: &Dataset,
    test: &Dataset,
    beta: &[f64],
    active: &[usize],
) -> Outcome {
    let run = || -> Result<Metrics> {
        let fits = fits?;
        let scores = fits
            .iter()
            .map(|f| svmic_h(f, train))
            .collect::<Result<Vec<_>>>()?;
        let best = argmin_first(&scores).ok_or(SvmError::EmptyTrajectory)?;
        evaluate(&fits[best], test, beta, active)
    };
    run().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> SimSpec {
        SimSpec {
            n: 60,
            p: 40,
            rho: 0.4,
            active_set: vec![2, 10, 20, 30],
            signal: 1.5,
            seed,
            n_test: 200,
        }
    }

    #[test]
    fn stderr_arithmetic() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[1.0]).1.is_nan());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in BenchMethod::ALL {
            assert_eq!(m.name().parse::<BenchMethod>().unwrap(), m);
        }
        assert!("lasso".parse::<BenchMethod>().is_err());
    }

    #[test]
    fn shared_l1_path_matches_standalone() {
        let cfg = BenchConfig::default();
        let both = run_benchmark(
            &small_spec(3),
            2,
            &[BenchMethod::L1Cd, BenchMethod::TwoStepCd],
            &cfg,
        )
        .unwrap();
        let alone = run_benchmark(&small_spec(3), 2, &[BenchMethod::L1Cd], &cfg).unwrap();
        assert_eq!(both.runs[0].rows, alone.runs[0].rows);
    }

    #[test]
    fn oracle_failure_is_recorded() {
        let cfg = BenchConfig::default();
        let spec = SimSpec {
            n: 200,
            p: 150,
            ..small_spec(1)
        };
        let res = run_benchmark(&spec, 1, &[BenchMethod::Lp], &cfg).unwrap();
        assert_eq!(res.runs[0].failures.len(), 1);
        assert!(res.runs[0].rows[0].test_error.is_nan());
        assert!(res.to_csv().unwrap().contains("lp,failures,1,0"));
    }

    #[test]
    fn oracle_runs_on_small_instances() {
        let cfg = BenchConfig {
            n_lambda: 5,
            min_ratio: 0.2,
            ..BenchConfig::default()
        };
        let spec = SimSpec {
            n: 30,
            p: 8,
            active_set: vec![0, 3],
            ..small_spec(2)
        };
        let res = run_benchmark(&spec, 1, &[BenchMethod::Lp, BenchMethod::L1Cd], &cfg).unwrap();
        assert!(res.runs.iter().all(|r| r.failures.is_empty()));
    }

    #[test]
    fn csv_layout() {
        let res = run_benchmark(
            &small_spec(5),
            1,
            &[BenchMethod::L1Cd],
            &BenchConfig::default(),
        )
        .unwrap();
        let csv = res.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,metric,mean,stderr");
        assert_eq!(lines.len(), 1 + 4 + 1);
        assert!(lines[1].starts_with("l1-cd,test_error,") && lines[1].ends_with(",NaN"));
    }
}
