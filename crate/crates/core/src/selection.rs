//! Regularization paths with warm starts, the SVMIC_H information criterion
//! and stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{TwoStep, TwoStepConfig};
use crate::data::{
    build_signed_design, hinge_sum, make_partition, Dataset, PenaltyWeights, SignedDesign,
    SolverConfig,
};
use crate::engine::{AdmmState, Engine, FitResult};
use crate::error::{Result, SvmError};
use crate::par::map_range;
use crate::synthetic::misclassification;

pub const DEFAULT_N_LAMBDA: usize = 100;
pub const DEFAULT_MIN_RATIO: f64 = 0.01;

/// `max_j |(1/n) sum_i y_i x_ij|`: the zero-slope subgradient bound with the
/// intercept held at zero.
pub fn lambda_max(design: &SignedDesign) -> Result<f64> {
    let n = design.n_samples() as f64;
    let mut best = 0.0f64;
    for blk in design.blocks() {
        for j in 0..blk.width() {
            let s: f64 = blk.column(j).iter().sum();
            best = best.max((s / n).abs());
        }
    }
    if best == 0.0 {
        return Err(SvmError::Dimension(
            "design has no signal: lambda_max is zero".into(),
        ));
    }
    Ok(best)
}

/// `n_lambda` log-spaced values from `lambda_max` down to `min_ratio * lambda_max`.
pub fn lambda_grid(design: &SignedDesign, n_lambda: usize, min_ratio: f64) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(SvmError::Config("n_lambda must be at least 2".into()));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(SvmError::Config("min_ratio must lie in (0, 1)".into()));
    }
    let top = lambda_max(design)?;
    let last = (n_lambda - 1) as f64;
    Ok((0..n_lambda)
        .map(|k| top * min_ratio.powf(k as f64 / last))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    L1,
    TwoStep(Box<TwoStepConfig>),
}

/// SVMIC_H: `sum_i hinge_i + log(log n) |support| log n`.
pub fn svmic_h(fit: &FitResult, d: &Dataset) -> Result<f64> {
    let n = d.n_samples();
    if n <= 2 {
        return Err(SvmError::Undefined(format!(
            "SVMIC_H needs n >= 3, got n = {n}"
        )));
    }
    if fit.beta_plus.len() != d.n_features() {
        return Err(SvmError::Dimension("fit and dataset disagree on p".into()));
    }
    Ok(hinge_sum(d, fit.beta0, &fit.beta_plus) + svmic_penalty(n, fit.support.len()))
}

fn svmic_penalty(n: usize, support: usize) -> f64 {
    let ln = (n as f64).ln();
    ln.ln() * support as f64 * ln
}

/// Index of the smallest score; ties go to the earliest (largest lambda).
pub fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s < scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Truncate a descending path once SVMIC_H can no longer improve: stop after
/// `patience` consecutive fits whose support penalty alone exceeds the best
/// score seen so far.
#[derive(Debug, Clone, Copy)]
pub struct SvmicStop<'d> {
    pub data: &'d Dataset,
    pub patience: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PathOptions<'d> {
    pub warm_start: bool,
    pub stop: Option<SvmicStop<'d>>,
}

impl Default for PathOptions<'_> {
    fn default() -> Self {
        PathOptions {
            warm_start: true,
            stop: None,
        }
    }
}

/// Fits along a descending grid, each warm-started from the previous fit's
/// full state. Cold-start paths evaluate every point independently.
pub fn fit_path(
    design: &SignedDesign,
    grid: &[f64],
    cfg: &SolverConfig,
    method: &Method,
    opts: PathOptions<'_>,
) -> Result<Vec<FitResult>> {
    if grid.is_empty() {
        return Err(SvmError::Config("empty lambda grid".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SvmError::Config(
            "lambda grid must be strictly decreasing".into(),
        ));
    }
    let p = design.n_features();
    let ones = PenaltyWeights::ones(p);
    #[allow(clippy::large_enum_variant)]
    enum Solver<'a> {
        L1(Engine<'a>),
        TwoStep(TwoStep<'a>),
    }
    let solver = match method {
        Method::L1 => Solver::L1(Engine::new(design, cfg.clone())?),
        Method::TwoStep(ts) => Solver::TwoStep(TwoStep::new(design, (**ts).clone())?),
    };
    let solve = |lambda: f64, init: Option<AdmmState>| -> Result<(FitResult, AdmmState)> {
        match &solver {
            Solver::L1(e) => {
                let out = e.fit(&ones, lambda, init)?;
                Ok((out.result, out.state))
            }
            Solver::TwoStep(t) => {
                let out = t.fit(lambda, init)?;
                Ok((out.fit.result, out.stage1_state))
            }
        }
    };

    if !opts.warm_start {
        let fits = map_range(cfg.execution, grid.len(), |k| {
            solve(grid[k], None).map(|r| r.0)
        });
        return fits.into_iter().collect();
    }

    let mut fits = Vec::with_capacity(grid.len());
    let mut state: Option<AdmmState> = None;
    let mut tracker = opts.stop.map(DominanceTracker::new);
    for &lambda in grid {
        let (fit, next) = solve(lambda, state.take())?;
        state = Some(next);
        let stop = match tracker.as_mut() {
            Some(t) => t.observe(&fit)?,
            None => false,
        };
        fits.push(fit);
        if stop {
            break;
        }
    }
    Ok(fits)
}

/// Length of the prefix of a descending path that the SVMIC_H early stop
/// would have produced.
pub fn svmic_stop_len(fits: &[FitResult], rule: SvmicStop<'_>) -> Result<usize> {
    let mut tracker = DominanceTracker::new(rule);
    for (k, fit) in fits.iter().enumerate() {
        if tracker.observe(fit)? {
            return Ok(k + 1);
        }
    }
    Ok(fits.len())
}

struct DominanceTracker<'d> {
    rule: SvmicStop<'d>,
    best: f64,
    best_stage_one: f64,
    strikes: usize,
}

impl<'d> DominanceTracker<'d> {
    fn new(rule: SvmicStop<'d>) -> Self {
        DominanceTracker {
            rule,
            best: f64::INFINITY,
            best_stage_one: f64::INFINITY,
            strikes: 0,
        }
    }

    fn observe(&mut self, fit: &FitResult) -> Result<bool> {
        let n = self.rule.data.n_samples();
        let score = svmic_h(fit, self.rule.data)?;
        self.best = self.best.min(score);
        let mut dominated = svmic_penalty(n, fit.support.len()) > self.best;
        if let Some(s1) = &fit.stage_one {
            let s = svmic_h(s1, self.rule.data)?;
            self.best_stage_one = self.best_stage_one.min(s);
            dominated &= svmic_penalty(n, s1.support.len()) > self.best_stage_one;
        }
        self.strikes = if dominated { self.strikes + 1 } else { 0 };
        Ok(self.strikes >= self.rule.patience.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelectionRule {
    Svmic,
    Cv,
}

impl std::fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectionRule::Svmic => "svmic",
            SelectionRule::Cv => "cv",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub scores: Vec<f64>,
    pub selected: usize,
    pub rule: SelectionRule,
}

impl PathResult {
    pub fn selected_fit(&self) -> &FitResult {
        &self.fits[self.selected]
    }

    pub fn summary(&self) -> PathSummary {
        PathSummary {
            selected_lambda: self.lambdas[self.selected],
            rule: self.rule,
            score: self.scores[self.selected],
        }
    }

    /// One model document per line, then the summary record.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for fit in &self.fits {
            out.push_str(&serde_json::to_string(&fit.to_doc())?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary())?);
        out.push('\n');
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub selected_lambda: f64,
    pub rule: SelectionRule,
    pub score: f64,
}

/// Path plus SVMIC_H selection on the training data.
pub fn select_by_svmic(
    d: &Dataset,
    design: &SignedDesign,
    grid: &[f64],
    cfg: &SolverConfig,
    method: &Method,
    opts: PathOptions<'_>,
) -> Result<PathResult> {
    let fits = fit_path(design, grid, cfg, method, opts)?;
    let scores = fits
        .iter()
        .map(|f| svmic_h(f, d))
        .collect::<Result<Vec<_>>>()?;
    let selected = argmin_first(&scores).expect("non-empty path");
    Ok(PathResult {
        lambdas: grid[..fits.len()].to_vec(),
        fits,
        scores,
        selected,
        rule: SelectionRule::Svmic,
    })
}

/// Stratified fold labels: each class is shuffled with the seeded generator
/// and dealt round-robin into `k` folds.
pub fn stratified_folds(y: &[f64], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [-1.0, 1.0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = (offset + r) % k;
        }
        // continue dealing where the previous class stopped
        offset = (offset + y.iter().filter(|&&v| v == class).count()) % k;
    }
    fold
}

/// Per-lambda mean held-out misclassification over `k` stratified folds.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    d: &Dataset,
    blocks: usize,
    grid: &[f64],
    k: usize,
    cfg: &SolverConfig,
    method: &Method,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = d.n_samples();
    if k < 2 || n < k {
        return Err(SvmError::Config(format!(
            "need 2 <= k <= n, got k = {k}, n = {n}"
        )));
    }
    let folds = stratified_folds(d.y().as_slice().expect("contiguous labels"), k, seed);
    let part = make_partition(d.n_features(), blocks)?;
    let per_fold = map_range(cfg.execution, k, |f| -> Result<Vec<f64>> {
        let train_idx: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let train = d.subset(&train_idx);
        let test = d.subset(&test_idx);
        for (name, part) in [("training", &train), ("held-out", &test)] {
            let pos = part.y().iter().filter(|&&v| v > 0.0).count();
            if pos == 0 || pos == part.n_samples() {
                log::warn!("fold {f}: {name} part contains a single class");
            }
        }
        let design = build_signed_design(&train, &part)?;
        let fits = fit_path(&design, grid, cfg, method, PathOptions::default())?;
        Ok(fits
            .iter()
            .map(|fit| misclassification(&test, fit.beta0, &fit.beta_plus))
            .collect())
    });
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|l| per_fold.iter().map(|e| e[l]).sum::<f64>() / k as f64)
        .collect())
}

/// Path on the full data with the lambda chosen by cross-validation.
#[allow(clippy::too_many_arguments)]
pub fn select_by_cv(
    d: &Dataset,
    design: &SignedDesign,
    grid: &[f64],
    k: usize,
    cfg: &SolverConfig,
    method: &Method,
    seed: u64,
) -> Result<PathResult> {
    let scores = cross_validate(d, design.n_blocks(), grid, k, cfg, method, seed)?;
    let fits = fit_path(design, grid, cfg, method, PathOptions::default())?;
    let selected = argmin_first(&scores).expect("non-empty grid");
    Ok(PathResult {
        lambdas: grid.to_vec(),
        fits,
        scores,
        selected,
        rule: SelectionRule::Cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use rand::Rng;

    fn design(d: &Dataset, g: usize) -> SignedDesign {
        build_signed_design(d, &make_partition(d.n_features(), g).unwrap()).unwrap()
    }

    #[test]
    fn lambda_max_perfect_correlation() {
        let y = array![1.0, -1.0, -1.0, 1.0, 1.0];
        let x = y.clone().insert_axis(ndarray::Axis(1));
        let d = Dataset::new(x, y).unwrap();
        assert_eq!(lambda_max(&design(&d, 1)).unwrap(), 1.0);
    }

    #[test]
    fn lambda_max_zero_design_errors() {
        let d = Dataset::new(Array2::zeros((3, 2)), array![1.0, -1.0, 1.0]).unwrap();
        assert!(lambda_max(&design(&d, 1)).is_err());
    }

    #[test]
    fn grid_log_spacing() {
        let y = array![1.0, -1.0];
        let d = Dataset::new(y.clone().insert_axis(ndarray::Axis(1)), y).unwrap();
        let g = lambda_grid(&design(&d, 1), 3, 0.01).unwrap();
        let want = [1.0, 0.1, 0.01];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{g:?}");
        }
        assert!(lambda_grid(&design(&d, 1), 1, 0.01).is_err());
        assert!(lambda_grid(&design(&d, 1), 5, 1.0).is_err());
    }

    fn dummy_fit(beta0: f64, beta: Vec<f64>) -> FitResult {
        FitResult {
            lambda: 0.1,
            beta0,
            support: crate::engine::support_of(&beta, 1e-6),
            beta_plus: beta,
            iterations: 0,
            converged: true,
            objective: 0.0,
            history: vec![],
            stage_one: None,
        }
    }

    #[test]
    fn svmic_examples() {
        // margins >= 1 and empty support
        let d = Dataset::new(array![[1.0], [-1.0], [2.0]], array![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(svmic_h(&dummy_fit(1.0, vec![0.0]), &d).unwrap(), 0.0);

        let n = 300.0f64;
        let want = 10.0 + n.ln().ln() * 4.0 * n.ln();
        assert!((want - 49.73).abs() < 0.01, "{want}");
        assert!((svmic_penalty(300, 4) + 10.0 - want).abs() < 1e-12);

        // A spurious zero-effect feature only adds penalty.
        let d = Dataset::new(
            array![[1.0, 0.0], [-1.0, 0.0], [0.5, 0.0]],
            array![1.0, -1.0, 1.0],
        )
        .unwrap();
        let a = svmic_h(&dummy_fit(0.0, vec![1.0, 0.0]), &d).unwrap();
        let b = svmic_h(&dummy_fit(0.0, vec![1.0, 0.3]), &d).unwrap();
        assert!(b > a);

        let d2 = Dataset::new(array![[1.0], [-1.0]], array![1.0, -1.0]).unwrap();
        assert!(matches!(
            svmic_h(&dummy_fit(0.0, vec![0.0]), &d2),
            Err(SvmError::Undefined(_))
        ));
    }

    #[test]
    fn argmin_prefers_earliest() {
        assert_eq!(argmin_first(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(argmin_first(&[]), None);
    }

    #[test]
    fn folds_are_stratified_and_deterministic() {
        let y: Vec<f64> = (0..40)
            .map(|i| if i % 4 == 0 { 1.0 } else { -1.0 })
            .collect();
        let a = stratified_folds(&y, 5, 7);
        assert_eq!(a, stratified_folds(&y, 5, 7));
        for f in 0..5 {
            let members: Vec<usize> = (0..40).filter(|&i| a[i] == f).collect();
            assert_eq!(members.len(), 8);
            assert_eq!(members.iter().filter(|&&i| y[i] > 0.0).count(), 2);
        }
    }

    #[test]
    fn single_point_path_equals_single_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((30, 6), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(30, |i| if x[[i, 0]] > 0.0 { 1.0 } else { -1.0 });
        let d = Dataset::new(x, y).unwrap();
        let a = design(&d, 2);
        let cfg = SolverConfig::default();
        let path = fit_path(&a, &[0.05], &cfg, &Method::L1, PathOptions::default()).unwrap();
        let single =
            crate::engine::fit_weighted_l1_svm(&a, &PenaltyWeights::ones(6), 0.05, &cfg, None)
                .unwrap();
        assert_eq!(path[0], single.result);
    }

    #[test]
    fn non_decreasing_grid_rejected() {
        let d = Dataset::new(array![[1.0], [-1.0]], array![1.0, -1.0]).unwrap();
        let a = design(&d, 1);
        assert!(fit_path(
            &a,
            &[0.1, 0.2],
            &SolverConfig::default(),
            &Method::L1,
            PathOptions::default()
        )
        .is_err());
    }

    #[test]
    fn cv_separable_data_has_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 40;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let base: f64 = rng.gen_range(-0.3..0.3);
            if j == 0 {
                if i % 2 == 0 {
                    2.0 + base
                } else {
                    -2.0 + base
                }
            } else {
                base
            }
        });
        let y = Array1::from_shape_fn(n, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let d = Dataset::new(x, y).unwrap();
        let grid = [0.2, 0.1, 0.05];
        let errs =
            cross_validate(&d, 1, &grid, 5, &SolverConfig::default(), &Method::L1, 1).unwrap();
        assert!(errs.iter().all(|&e| e == 0.0), "{errs:?}");
        let again =
            cross_validate(&d, 1, &grid, 5, &SolverConfig::default(), &Method::L1, 1).unwrap();
        assert_eq!(errs, again);
    }
}
