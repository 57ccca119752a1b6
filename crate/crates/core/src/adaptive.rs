//! Two-step adaptively weighted l1 SVM: an l1 fit at level `upsilon * lambda`,
//! then one weighted-l1 refit with `alpha_j = P'_lambda(|beta_j|) / lambda`
//! computed from the first stage (one-step local linear approximation).

use crate::data::{PenaltyWeights, SignedDesign, SolverConfig};
use crate::engine::{AdmmState, Engine, FitOutput};
use crate::error::{Result, SvmError};

/// Folded-concave penalty used to derive the second-stage weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Penalty {
    L1,
    Scad,
}

pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepConfig {
    /// Scales the first-stage penalty to `upsilon * lambda`.
    pub upsilon: f64,
    pub scad_a: f64,
    pub stage1: SolverConfig,
    pub stage2: SolverConfig,
    /// Recompute the weights from the current iterate before every stage-two
    /// iteration instead of holding them fixed.
    pub reweight_every_iter: bool,
}

impl TwoStepConfig {
    pub fn new(cfg: SolverConfig) -> Self {
        TwoStepConfig {
            upsilon: 1.0,
            scad_a: DEFAULT_SCAD_A,
            stage1: cfg.clone(),
            stage2: cfg,
            reweight_every_iter: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon > 0.0 && self.upsilon.is_finite()) {
            return Err(SvmError::Config("upsilon must be positive".into()));
        }
        if !(self.scad_a > 2.0) {
            return Err(SvmError::Config("scad_a must exceed 2".into()));
        }
        self.stage1.validate()?;
        self.stage2.validate()
    }
}

/// SCAD derivative `P'(t) = lambda 1{t <= lambda} + (a lambda - t)_+ / (a - 1) 1{t > lambda}`.
pub fn scad_derivative(t: f64, lambda: f64, a: f64) -> f64 {
    if t <= lambda {
        lambda
    } else {
        (a * lambda - t).max(0.0) / (a - 1.0)
    }
}

/// Per-feature weights `P'(|beta_j|) / lambda`, each in `[0, 1]`.
pub fn scad_weights(beta: &[f64], lambda: f64, a: f64) -> PenaltyWeights {
    let alpha = beta
        .iter()
        .map(|b| scad_derivative(b.abs(), lambda, a) / lambda)
        .collect();
    PenaltyWeights::new(alpha).expect("SCAD weights are finite and non-negative")
}

/// Engines for both stages, reusable across a path of penalty levels.
#[derive(Debug, Clone)]
pub struct TwoStep<'a> {
    cfg: TwoStepConfig,
    stage1: Engine<'a>,
    stage2: Engine<'a>,
}

#[derive(Debug, Clone)]
pub struct TwoStepOutput {
    /// Stage-two fit, with the stage-one fit attached as `stage_one`.
    pub fit: FitOutput,
    /// Final stage-one state, for warm-starting the next stage-one solve.
    pub stage1_state: AdmmState,
}

impl<'a> TwoStep<'a> {
    pub fn new(design: &'a SignedDesign, cfg: TwoStepConfig) -> Result<Self> {
        cfg.validate()?;
        let stage1 = Engine::new(design, cfg.stage1.clone())?;
        let stage2 = if cfg.stage2 == cfg.stage1 {
            stage1.clone()
        } else {
            Engine::new(design, cfg.stage2.clone())?
        };
        Ok(TwoStep {
            cfg,
            stage1,
            stage2,
        })
    }

    pub fn config(&self) -> &TwoStepConfig {
        &self.cfg
    }

    pub fn fit(&self, lambda: f64, init: Option<AdmmState>) -> Result<TwoStepOutput> {
        if !(lambda > 0.0) {
            return Err(SvmError::Config("two-step fit needs lambda > 0".into()));
        }
        let p = self.stage1.design().n_features();
        let first = self
            .stage1
            .fit(&PenaltyWeights::ones(p), self.cfg.upsilon * lambda, init)?;
        let weights = scad_weights(&first.result.beta_plus, lambda, self.cfg.scad_a);
        let a = self.cfg.scad_a;
        let mut second = if self.cfg.reweight_every_iter {
            let reweight = move |s: &AdmmState| scad_weights(&s.beta_plus(), lambda, a);
            self.stage2
                .fit_with(&weights, lambda, Some(first.state.clone()), Some(reweight))?
        } else {
            self.stage2
                .fit(&weights, lambda, Some(first.state.clone()))?
        };
        second.result.stage_one = Some(Box::new(first.result));
        Ok(TwoStepOutput {
            fit: second,
            stage1_state: first.state,
        })
    }
}

/// One-shot two-step fit.
pub fn two_step_fit(
    design: &SignedDesign,
    lambda: f64,
    cfg: &TwoStepConfig,
) -> Result<TwoStepOutput> {
    TwoStep::new(design, cfg.clone())?.fit(lambda, None)
}
