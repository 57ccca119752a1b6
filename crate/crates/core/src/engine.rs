//! Symmetric Gauss-Seidel semi-proximal ADMM for the feature-split problem
//!
//! ```text
//! min  sum_g lambda ||alpha_g o beta_g||_1 + (1/n) 1'(z)_+
//! s.t. z + sum_g omega_g + y beta0 = 1,   A_g beta_g = omega_g  (g = 1..G)
//! ```
//!
//! One iteration runs `beta -> omega(k+1/2) -> z -> omega(k+1) -> gamma`.
//! The `beta_g` updates are independent given `(z, omega, gamma)` and run as a
//! data-parallel map over blocks; every cross-block sum is reduced in block
//! order so results do not depend on scheduling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::{PenaltyWeights, SignedDesign, SolverConfig, Variant};
use crate::error::{Result, SvmError};
use crate::par::{map_mut, map_range};
use crate::subsolvers::{cd_in_place, estimate_eta, prox_step_in_place, BlockContext};

/// All primal and dual iterates, plus the cached products `A_g beta_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub beta0: f64,
    pub beta: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
    pub gamma0: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub abeta: Vec<Vec<f64>>,
    pub iter: usize,
}

impl AdmmState {
    /// Cold start: every variable zero.
    pub fn zeros(design: &SignedDesign) -> Self {
        let n = design.n_samples();
        let g = design.n_blocks();
        AdmmState {
            beta0: 0.0,
            beta: design
                .blocks()
                .iter()
                .map(|b| vec![0.0; b.width()])
                .collect(),
            z: vec![0.0; n],
            omega: vec![vec![0.0; n]; g],
            gamma0: vec![0.0; n],
            gamma: vec![vec![0.0; n]; g],
            abeta: vec![vec![0.0; n]; g],
            iter: 0,
        }
    }

    pub fn check_conforms(&self, design: &SignedDesign) -> Result<()> {
        let n = design.n_samples();
        let ok = self.z.len() == n
            && self.gamma0.len() == n
            && self.beta.len() == design.n_blocks()
            && self.omega.len() == design.n_blocks()
            && self.gamma.len() == design.n_blocks()
            && self.abeta.len() == design.n_blocks()
            && self
                .beta
                .iter()
                .zip(design.blocks())
                .all(|(b, blk)| b.len() == blk.width())
            && self
                .omega
                .iter()
                .chain(&self.gamma)
                .chain(&self.abeta)
                .all(|v| v.len() == n);
        if ok {
            Ok(())
        } else {
            Err(SvmError::Dimension(
                "initial state does not conform to the design".into(),
            ))
        }
    }

    /// Concatenated slope coefficients.
    pub fn beta_plus(&self) -> Vec<f64> {
        self.beta.iter().flatten().copied().collect()
    }

    /// Recompute every `A_g beta_g` from scratch.
    pub fn refresh_products(&mut self, design: &SignedDesign) {
        for ((blk, b), ab) in design
            .blocks()
            .iter()
            .zip(&self.beta)
            .zip(self.abeta.iter_mut())
        {
            blk.mul_vec_into(b, ab);
        }
    }

    fn is_finite(&self) -> bool {
        self.beta0.is_finite()
            && self.z.iter().chain(&self.gamma0).all(|v| v.is_finite())
            && self.beta.iter().flatten().all(|v| v.is_finite())
            && self
                .omega
                .iter()
                .chain(&self.gamma)
                .flatten()
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

/// Converged (or best) coefficients and run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub lambda: f64,
    pub beta0: f64,
    pub beta_plus: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub history: Vec<IterRecord>,
    pub support: Vec<usize>,
    /// First-stage fit when this result came out of the two-step procedure.
    pub stage_one: Option<Box<FitResult>>,
}

/// Wire format of a fitted model; `coef` lists the non-zero coefficients as
/// `[index, value]` pairs with 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub lambda: f64,
    pub intercept: f64,
    pub coef: Vec<(usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl ModelDoc {
    pub fn dense_coefficients(&self, p: usize) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; p];
        for &(j, v) in &self.coef {
            *beta.get_mut(j).ok_or_else(|| {
                SvmError::Dimension(format!(
                    "coefficient index {j} out of range for {p} features"
                ))
            })? = v;
        }
        Ok(beta)
    }
}

impl FitResult {
    pub fn to_doc(&self) -> ModelDoc {
        ModelDoc {
            lambda: self.lambda,
            intercept: self.beta0,
            coef: self
                .beta_plus
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect(),
            iterations: self.iterations,
            converged: self.converged,
            objective: self.objective,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn final_residuals(&self) -> Option<(f64, f64)> {
        self.history.last().map(|r| (r.primal, r.dual))
    }
}

pub fn support_of(beta: &[f64], eps: f64) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > eps)
        .map(|(j, _)| j)
        .collect()
}

/// Iterate snapshot kept for the convergence-rate diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    pub beta0: f64,
    pub beta: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub z_prev: Vec<f64>,
}

/// Result of one engine run: the public fit, the final state for warm
/// starts, and any recorded snapshots (oldest first).
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub result: FitResult,
    pub state: AdmmState,
    pub snapshots: Vec<Snapshot>,
}

// ---------------------------------------------------------------------------
// Individual update steps.

/// `beta0 = (1/n) y'(1 - z - sum_g omega_g - gamma0 / phi)`.
pub fn update_intercept(state: &AdmmState, design: &SignedDesign, cfg: &SolverConfig) -> f64 {
    let y = design.a0();
    let n = y.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut t = 1.0 - state.z[i] - state.gamma0[i] / cfg.phi;
        for om in &state.omega {
            t -= om[i];
        }
        acc += y[i] * t;
    }
    acc / n as f64
}

/// Prox of `t * (.)_+` evaluated at `v`.
#[inline]
pub fn hinge_prox(v: f64, t: f64) -> f64 {
    (v - t).max(0.0) - (-v).max(0.0)
}

/// `z = prox_{(1/(n phi)) (.)_+}(1 - y beta0 - sum_g omega_g - gamma0 / phi)`,
/// reading `beta0` and `omega` from the state.
pub fn update_z(state: &AdmmState, design: &SignedDesign, cfg: &SolverConfig) -> Vec<f64> {
    let y = design.a0();
    let n = y.len();
    let t = 1.0 / (n as f64 * cfg.phi);
    (0..n)
        .map(|i| {
            let mut v = 1.0 - y[i] * state.beta0 - state.gamma0[i] / cfg.phi;
            for om in &state.omega {
                v -= om[i];
            }
            hinge_prox(v, t)
        })
        .collect()
}

/// Exact minimizer over all `omega_g` jointly, given `beta`, the supplied
/// `z`, and the multipliers:
///
/// ```text
/// c       = (y beta0 + z - 1 + sum_g A_g beta_g - sum_g (gamma0 - gamma_g)/phi) / (G + 1)
/// omega_g = A_g beta_g - (gamma0 - gamma_g)/phi - c
/// ```
///
/// Pass `z^k` for the half step and `z^{k+1}` for the full step.
pub fn update_omega(
    state: &AdmmState,
    design: &SignedDesign,
    cfg: &SolverConfig,
    z: &[f64],
) -> Vec<Vec<f64>> {
    let y = design.a0();
    let n = y.len();
    let g_count = state.abeta.len();
    let inv = 1.0 / (g_count as f64 + 1.0);
    let phi = cfg.phi;
    let mut c = vec![0.0; n];
    for i in 0..n {
        let mut acc = y[i] * state.beta0 + z[i] - 1.0;
        for g in 0..g_count {
            acc += state.abeta[g][i] - (state.gamma0[i] - state.gamma[g][i]) / phi;
        }
        c[i] = acc * inv;
    }
    (0..g_count)
        .map(|g| {
            (0..n)
                .map(|i| state.abeta[g][i] - (state.gamma0[i] - state.gamma[g][i]) / phi - c[i])
                .collect()
        })
        .collect()
}

/// `r1 = y beta0 + z + sum_g omega_g - 1`.
pub fn aggregate_residual(state: &AdmmState, design: &SignedDesign) -> Vec<f64> {
    let y = design.a0();
    (0..y.len())
        .map(|i| {
            let mut r = y[i] * state.beta0 + state.z[i] - 1.0;
            for om in &state.omega {
                r += om[i];
            }
            r
        })
        .collect()
}

/// Dual ascent: `gamma0 += theta phi r1`, `gamma_g += theta phi (A_g beta_g - omega_g)`.
pub fn update_multipliers(
    state: &AdmmState,
    design: &SignedDesign,
    cfg: &SolverConfig,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let step = cfg.theta * cfg.phi;
    let r1 = aggregate_residual(state, design);
    let gamma0 = state
        .gamma0
        .iter()
        .zip(&r1)
        .map(|(g, r)| g + step * r)
        .collect();
    let gamma = state
        .gamma
        .iter()
        .zip(&state.abeta)
        .zip(&state.omega)
        .map(|((gg, ab), om)| {
            gg.iter()
                .zip(ab)
                .zip(om)
                .map(|((g, a), o)| g + step * (a - o))
                .collect()
        })
        .collect();
    (gamma0, gamma)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Scaled primal and dual residuals after a completed iteration.
///
/// `primal = max(|r1|, max_g |A_g beta_g - omega_g|) / sqrt(n)`,
/// `dual = phi * max(|z - z_prev|, max_g |omega_g - omega_g_prev|) / sqrt(n)`.
pub fn residuals(
    state: &AdmmState,
    design: &SignedDesign,
    z_prev: &[f64],
    omega_prev: &[Vec<f64>],
    phi: f64,
) -> (f64, f64) {
    let sqrt_n = (design.n_samples() as f64).sqrt();
    let mut primal = norm2(&aggregate_residual(state, design));
    for (ab, om) in state.abeta.iter().zip(&state.omega) {
        primal = primal.max(diff_norm2(ab, om));
    }
    let mut dual = diff_norm2(&state.z, z_prev);
    for (om, prev) in state.omega.iter().zip(omega_prev) {
        dual = dual.max(diff_norm2(om, prev));
    }
    (primal / sqrt_n, phi * dual / sqrt_n)
}

// ---------------------------------------------------------------------------
// Driver.

/// Engine bound to a design and configuration. Holds the per-block proximal
/// constants so a path of fits estimates them only once.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    design: &'a SignedDesign,
    cfg: SolverConfig,
    etas: Option<Vec<f64>>,
}

impl<'a> Engine<'a> {
    pub fn new(design: &'a SignedDesign, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let etas = match cfg.variant {
            Variant::Prox => Some(map_range(cfg.execution, design.n_blocks(), |g| {
                estimate_eta(&design.blocks()[g], cfg.phi, cfg.eta_safety)
            })),
            Variant::Cd => None,
        };
        Ok(Engine { design, cfg, etas })
    }

    pub fn design(&self) -> &'a SignedDesign {
        self.design
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn etas(&self) -> Option<&[f64]> {
        self.etas.as_deref()
    }

    /// Solve at one penalty level, optionally warm-started from `init`.
    pub fn fit(
        &self,
        w: &PenaltyWeights,
        lambda: f64,
        init: Option<AdmmState>,
    ) -> Result<FitOutput> {
        self.fit_with(w, lambda, init, None::<fn(&AdmmState) -> PenaltyWeights>)
    }

    /// As [`Engine::fit`], but when `reweight` is given it is called before
    /// every iteration to recompute the penalty weights from the current
    /// iterate.
    pub fn fit_with<F>(
        &self,
        w: &PenaltyWeights,
        lambda: f64,
        init: Option<AdmmState>,
        reweight: Option<F>,
    ) -> Result<FitOutput>
    where
        F: Fn(&AdmmState) -> PenaltyWeights,
    {
        let design = self.design;
        let cfg = &self.cfg;
        let p = design.n_features();
        if w.len() != p {
            return Err(SvmError::Dimension(format!(
                "{} weights for {p} features",
                w.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SvmError::Config(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        let mut state = match init {
            Some(s) => {
                s.check_conforms(design)?;
                let mut s = s;
                s.refresh_products(design);
                s
            }
            None => AdmmState::zeros(design),
        };
        if reweight.is_none() {
            if let Some(out) = self.null_model(w, lambda) {
                return Ok(out);
            }
        }
        let mut weights = w.clone();
        let mut history = Vec::new();
        let mut snapshots: VecDeque<Snapshot> = VecDeque::new();
        let mut best: Option<(f64, f64, Vec<Vec<f64>>)> = None;
        let mut converged = false;
        let mut iterations = 0;

        for _ in 0..cfg.max_iter {
            if let Some(f) = reweight.as_ref() {
                weights = f(&state);
            }
            let z_prev = state.z.clone();
            let omega_prev = state.omega.clone();

            self.step(&mut state, &weights, lambda)?;
            iterations += 1;
            state.iter += 1;

            let (primal, dual) = residuals(&state, design, &z_prev, &omega_prev, cfg.phi);
            let objective = design.objective(&weights, lambda, state.beta0, &state.beta);
            if !(primal.is_finite() && dual.is_finite() && objective.is_finite())
                || !state.is_finite()
            {
                return Err(SvmError::NonFinite { iter: state.iter });
            }
            history.push(IterRecord {
                primal,
                dual,
                objective,
            });
            if best.as_ref().is_none_or(|b| objective < b.0) {
                best = Some((objective, state.beta0, state.beta.clone()));
            }
            if let Some(every) = cfg.snapshot_every {
                if state.iter % every == 0 {
                    if snapshots.len() == cfg.snapshot_cap {
                        snapshots.pop_front();
                    }
                    snapshots.push_back(Snapshot {
                        iter: state.iter,
                        beta0: state.beta0,
                        beta: state.beta.clone(),
                        z: state.z.clone(),
                        z_prev,
                    });
                }
            }
            if primal <= cfg.tol && dual <= cfg.tol {
                converged = true;
                break;
            }
        }

        let (beta0, beta) = if converged || iterations == 0 {
            (state.beta0, state.beta.clone())
        } else {
            let (_, b0, b) = best.expect("at least one iteration ran");
            (b0, b)
        };
        let beta_plus: Vec<f64> = beta.iter().flatten().copied().collect();
        let objective = design.objective(&weights, lambda, beta0, &beta);
        let result = FitResult {
            lambda,
            beta0,
            support: support_of(&beta_plus, cfg.support_eps),
            beta_plus,
            iterations,
            converged,
            objective,
            history,
            stage_one: None,
        };
        Ok(FitOutput {
            result,
            state,
            snapshots: snapshots.into(),
        })
    }

    /// With balanced labels and `|mean_i A_ij| <= lambda alpha_j` for every
    /// feature, `beta = 0, beta0 = 0` satisfies the optimality conditions
    /// with every hinge active. The objective is flat around this point at
    /// the boundary, so it is returned directly as the sparsest minimizer,
    /// together with its exact multipliers `gamma = -1/n`.
    fn null_model(&self, w: &PenaltyWeights, lambda: f64) -> Option<FitOutput> {
        let design = self.design;
        if design.a0().iter().sum::<f64>() != 0.0 {
            return None;
        }
        let n = design.n_samples() as f64;
        let mut j = 0;
        for blk in design.blocks() {
            for c in 0..blk.width() {
                let mean = blk.column(c).iter().sum::<f64>() / n;
                if mean.abs() > lambda * w.alpha()[j] {
                    return None;
                }
                j += 1;
            }
        }
        let mut state = AdmmState::zeros(design);
        state.z.iter_mut().for_each(|v| *v = 1.0);
        state.gamma0.iter_mut().for_each(|v| *v = -1.0 / n);
        state.gamma = vec![state.gamma0.clone(); design.n_blocks()];
        let objective = design.objective(w, lambda, 0.0, &state.beta);
        let result = FitResult {
            lambda,
            beta0: 0.0,
            beta_plus: vec![0.0; design.n_features()],
            iterations: 0,
            converged: true,
            objective,
            history: Vec::new(),
            support: Vec::new(),
            stage_one: None,
        };
        Some(FitOutput {
            result,
            state,
            snapshots: Vec::new(),
        })
    }

    /// One full sweep of the update cycle, mutating `state` in place.
    pub fn step(&self, state: &mut AdmmState, w: &PenaltyWeights, lambda: f64) -> Result<()> {
        let design = self.design;
        let cfg = &self.cfg;
        state.beta0 = update_intercept(state, design, cfg);
        self.update_blocks(state, w, lambda)?;
        state.omega = update_omega(state, design, cfg, &state.z);
        state.z = update_z(state, design, cfg);
        state.omega = update_omega(state, design, cfg, &state.z);
        let (g0, g) = update_multipliers(state, design, cfg);
        state.gamma0 = g0;
        state.gamma = g;
        Ok(())
    }

    fn update_blocks(&self, state: &mut AdmmState, w: &PenaltyWeights, lambda: f64) -> Result<()> {
        let design = self.design;
        let cfg = &self.cfg;
        let omega = &state.omega;
        let gamma = &state.gamma;
        let mut pairs: Vec<(&mut Vec<f64>, &mut Vec<f64>)> =
            state.beta.iter_mut().zip(state.abeta.iter_mut()).collect();
        let outcomes = map_mut(
            cfg.execution,
            &mut pairs,
            |g, (beta, abeta)| -> Result<()> {
                let blk = &design.blocks()[g];
                let target: Vec<f64> = omega[g]
                    .iter()
                    .zip(&gamma[g])
                    .map(|(o, c)| o - c / cfg.phi)
                    .collect();
                let ctx = BlockContext {
                    block: blk,
                    target: &target,
                    weights: &w.alpha()[blk.offset()..blk.offset() + blk.width()],
                    lambda,
                    phi: cfg.phi,
                    eta: self.etas.as_ref().map(|e| e[g]),
                };
                let mut scratch: Vec<f64> = target
                    .iter()
                    .zip(abeta.iter())
                    .map(|(v, a)| v - a)
                    .collect();
                match cfg.variant {
                    Variant::Cd => {
                        cd_in_place(&ctx, beta, &mut scratch, cfg.inner_sweeps, cfg.inner_tol);
                    }
                    Variant::Prox => prox_step_in_place(&ctx, beta, abeta, &mut scratch)?,
                }
                blk.mul_vec_into(beta, abeta);
                Ok(())
            },
        );
        outcomes.into_iter().collect()
    }
}

/// One-shot convenience wrapper around [`Engine`].
pub fn fit_weighted_l1_svm(
    design: &SignedDesign,
    w: &PenaltyWeights,
    lambda: f64,
    cfg: &SolverConfig,
    init: Option<AdmmState>,
) -> Result<FitOutput> {
    Engine::new(design, cfg.clone())?.fit(w, lambda, init)
}

// ---------------------------------------------------------------------------
// Convergence-rate diagnostic.

/// Weight `d1` on the aggregate-residual term of the distance measure.
pub const DIST_D1: f64 = 0.25;

/// `m1 = 1 + d1 - d1 theta - (1 - d1) min(theta, 1/theta)`.
pub fn dist_m1(theta: f64, d1: f64) -> f64 {
    1.0 + d1 - d1 * theta - (1.0 - d1) * theta.min(1.0 / theta)
}

/// Lyapunov-style distance of each snapshot to a reference iterate.
///
/// The proximal seminorms `|d|^2_T = eta_g |d|^2 - phi |A_g d|^2` are used when
/// `etas` is given (prox variant); the intercept and the exact CD update carry
/// no proximal term. The seminorm sum is weighted by 2.
pub fn dist_monitor(
    trajectory: &[Snapshot],
    reference: &AdmmState,
    design: &SignedDesign,
    etas: Option<&[f64]>,
    phi: f64,
    theta: f64,
) -> Result<Vec<f64>> {
    if trajectory.is_empty() {
        return Err(SvmError::EmptyTrajectory);
    }
    let g_count = design.n_blocks();
    let gp1 = g_count as f64 + 1.0;
    let m1 = dist_m1(theta, DIST_D1);
    let y = design.a0();
    let n = y.len();
    Ok(trajectory
        .iter()
        .map(|snap| {
            let d0 = snap.beta0 - reference.beta0;
            let mut parts: Vec<Vec<f64>> = Vec::with_capacity(g_count + 1);
            parts.push(y.iter().map(|v| v * d0).collect());
            let mut semi = 0.0;
            for (g, blk) in design.blocks().iter().enumerate() {
                let d: Vec<f64> = snap.beta[g]
                    .iter()
                    .zip(&reference.beta[g])
                    .map(|(a, b)| a - b)
                    .collect();
                let u = blk.mul_vec(&d);
                if let Some(e) = etas {
                    let dd: f64 = d.iter().map(|x| x * x).sum();
                    let uu: f64 = u.iter().map(|x| x * x).sum();
                    semi += e[g] * dd - phi * uu;
                }
                parts.push(u);
            }
            let mut total = vec![0.0; n];
            for u in &parts {
                for (t, v) in total.iter_mut().zip(u) {
                    *t += v;
                }
            }
            let mut spread = 0.0;
            for u in &parts {
                spread += u
                    .iter()
                    .zip(&total)
                    .map(|(a, t)| (a - t / gp1).powi(2))
                    .sum::<f64>();
            }
            let dz2: f64 = snap
                .z
                .iter()
                .zip(&reference.z)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let step2: f64 = snap
                .z
                .iter()
                .zip(&snap.z_prev)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let agg2: f64 = total
                .iter()
                .zip(snap.z.iter().zip(&reference.z))
                .map(|(t, (a, b))| (t + a - b).powi(2))
                .sum();
            spread + 2.0 * semi + dz2 + g_count as f64 / gp1 * step2 + m1 / gp1 * agg2
        })
        .collect())
}
