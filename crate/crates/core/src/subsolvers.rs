//! Per-block coefficient updates.
//!
//! Each block solves (exactly or by one linearized step)
//!
//! ```text
//! min_b  lambda * ||alpha_g o b||_1 + (phi / 2) * ||A_g b - v||^2,   v = omega_g - gamma_g / phi
//! ```
//!
//! The coordinate-descent variant cycles through columns keeping the residual
//! `v - A_g b` up to date; the proximal variant majorizes the quadratic with
//! `eta_g * I`, where `eta_g > phi * lambda_max(A_g' A_g)`.

use crate::data::{axpy, dot, Block};
use crate::error::{Result, SvmError};

/// `sign(a) * max(|a| - kappa, 0)`.
#[inline]
pub fn soft_threshold(a: f64, kappa: f64) -> f64 {
    if a > kappa {
        a - kappa
    } else if a < -kappa {
        a + kappa
    } else {
        0.0
    }
}

/// Everything a block update needs, borrowed from the engine state.
#[derive(Debug, Clone, Copy)]
pub struct BlockContext<'a> {
    pub block: &'a Block,
    /// `omega_g - gamma_g / phi`.
    pub target: &'a [f64],
    pub weights: &'a [f64],
    pub lambda: f64,
    pub phi: f64,
    /// Proximal constant; required by the prox variant only.
    pub eta: Option<f64>,
}

impl BlockContext<'_> {
    /// Value of the block subproblem at `beta`.
    pub fn subproblem_value(&self, beta: &[f64]) -> f64 {
        let ab = self.block.mul_vec(beta);
        let quad: f64 = ab
            .iter()
            .zip(self.target)
            .map(|(a, v)| (a - v) * (a - v))
            .sum();
        let pen: f64 = self
            .weights
            .iter()
            .zip(beta)
            .map(|(w, b)| w * b.abs())
            .sum();
        self.lambda * pen + 0.5 * self.phi * quad
    }
}

/// One linearized proximal step:
/// `b <- S(b - (phi / eta) A'(A b - v), lambda * alpha / eta)`.
pub fn update_beta_prox(ctx: &BlockContext<'_>, beta: &[f64]) -> Result<Vec<f64>> {
    let mut out = beta.to_vec();
    let ab = ctx.block.mul_vec(beta);
    let mut scratch = vec![0.0; ctx.block.n_rows()];
    prox_step_in_place(ctx, &mut out, &ab, &mut scratch)?;
    Ok(out)
}

/// In-place prox step given the cached product `ab = A_g beta`.
pub(crate) fn prox_step_in_place(
    ctx: &BlockContext<'_>,
    beta: &mut [f64],
    ab: &[f64],
    resid: &mut [f64],
) -> Result<()> {
    let eta = ctx
        .eta
        .filter(|e| *e > 0.0)
        .ok_or_else(|| SvmError::Config("prox update requires eta_g".into()))?;
    for ((r, a), v) in resid.iter_mut().zip(ab).zip(ctx.target) {
        *r = a - v;
    }
    let step = ctx.phi / eta;
    let shrink = ctx.lambda / eta;
    for (j, b) in beta.iter_mut().enumerate() {
        let grad = dot(ctx.block.column(j), resid);
        *b = soft_threshold(*b - step * grad, ctx.weights[j] * shrink);
    }
    Ok(())
}

/// Cyclic coordinate descent; returns the updated block coefficients.
pub fn update_beta_cd(
    ctx: &BlockContext<'_>,
    beta: &[f64],
    sweeps: usize,
    inner_tol: f64,
) -> Vec<f64> {
    let mut out = beta.to_vec();
    let ab = ctx.block.mul_vec(beta);
    let mut resid: Vec<f64> = ctx.target.iter().zip(&ab).map(|(v, a)| v - a).collect();
    cd_in_place(ctx, &mut out, &mut resid, sweeps, inner_tol);
    out
}

/// CD with a caller-supplied residual `r = v - A_g beta`, kept current on
/// return. Returns the number of sweeps performed.
pub(crate) fn cd_in_place(
    ctx: &BlockContext<'_>,
    beta: &mut [f64],
    resid: &mut [f64],
    sweeps: usize,
    inner_tol: f64,
) -> usize {
    let norms = ctx.block.col_sq_norms();
    let mut done = 0;
    for _ in 0..sweeps {
        done += 1;
        let mut max_change = 0.0f64;
        for j in 0..beta.len() {
            let nrm = norms[j];
            let old = beta[j];
            if nrm <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = ctx.block.column(j);
            let z = old + dot(col, resid) / nrm;
            let new = soft_threshold(z, ctx.lambda * ctx.weights[j] / (ctx.phi * nrm));
            let delta = new - old;
            if delta != 0.0 {
                axpy(-delta, col, resid);
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < inner_tol {
            break;
        }
    }
    done
}

const POWER_MAX_ITER: usize = 200;
const POWER_RTOL: f64 = 1e-8;

/// Largest eigenvalue of `A' A` by power iteration on matrix-vector products.
pub fn lambda_max_ata(block: &Block) -> f64 {
    let p = block.width();
    let n = block.n_rows();
    // Deterministic start with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..p)
        .map(|j| 1.0 + 0.5 * ((j as f64) * 0.7548776662).sin())
        .collect();
    let nrm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut w = vec![0.0; n];
    let mut u = vec![0.0; p];
    let mut prev = 0.0;
    let mut rq = 0.0;
    for _ in 0..POWER_MAX_ITER {
        block.mul_vec_into(&v, &mut w);
        block.tmul_vec_into(&w, &mut u);
        rq = dot(&v, &u);
        let un = dot(&u, &u).sqrt();
        if un == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi = ui / un);
        if rq > 0.0 && ((rq - prev) / rq).abs() < POWER_RTOL {
            break;
        }
        prev = rq;
    }
    rq
}

/// `eta_g = safety * phi * lambda_max(A_g' A_g)`, floored at machine epsilon
/// for an all-zero block.
pub fn estimate_eta(block: &Block, phi: f64, safety: f64) -> f64 {
    let lm = lambda_max_ata(block).max(f64::EPSILON);
    safety * phi * lm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_signed_design, make_partition, Dataset};
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    fn block_of(x: Array2<f64>) -> Block {
        let n = x.nrows();
        let p = x.ncols();
        let d = Dataset::new(x, Array1::ones(n)).unwrap();
        build_signed_design(&d, &make_partition(p, 1).unwrap())
            .unwrap()
            .blocks()[0]
            .clone()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        for a in [-2.5, 0.0, 1e-300, 7.0] {
            assert_eq!(soft_threshold(a, 0.0), a);
        }
    }

    proptest! {
        #[test]
        fn soft_threshold_properties(a in -1e3f64..1e3, b in -1e3f64..1e3, k in 0f64..50.0) {
            prop_assert_eq!(soft_threshold(-a, k), -soft_threshold(a, k));
            prop_assert!((soft_threshold(a, k) - soft_threshold(b, k)).abs() <= (a - b).abs() + 1e-12);
            prop_assert!(soft_threshold(a, k).abs() <= a.abs());
        }
    }

    #[test]
    fn prox_zero_matrix_is_identity() {
        let blk = block_of(Array2::zeros((3, 2)));
        let ctx = BlockContext {
            block: &blk,
            target: &[1.0, -1.0, 2.0],
            weights: &[1.0, 1.0],
            lambda: 0.0,
            phi: 1.0,
            eta: Some(1.0),
        };
        assert_eq!(
            update_beta_prox(&ctx, &[0.3, -0.2]).unwrap(),
            vec![0.3, -0.2]
        );
    }

    #[test]
    fn prox_single_column() {
        let blk = block_of(array![[1.0]]);
        let mut ctx = BlockContext {
            block: &blk,
            target: &[1.0],
            weights: &[1.0],
            lambda: 0.0,
            phi: 1.0,
            eta: Some(1.01),
        };
        let b = update_beta_prox(&ctx, &[0.0]).unwrap();
        assert!((b[0] - 1.0 / 1.01).abs() < 1e-15);
        assert!((b[0] - 0.9901).abs() < 1e-4);
        ctx.lambda = 2.0;
        assert_eq!(update_beta_prox(&ctx, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn prox_requires_eta() {
        let blk = block_of(array![[1.0]]);
        let ctx = BlockContext {
            block: &blk,
            target: &[1.0],
            weights: &[1.0],
            lambda: 0.0,
            phi: 1.0,
            eta: None,
        };
        assert!(update_beta_prox(&ctx, &[0.0]).is_err());
    }

    #[test]
    fn cd_single_column_least_squares() {
        let blk = block_of(array![[1.0], [0.0]]);
        let ctx = BlockContext {
            block: &blk,
            target: &[1.0, 0.0],
            weights: &[1.0],
            lambda: 0.0,
            phi: 1.0,
            eta: None,
        };
        assert_eq!(update_beta_cd(&ctx, &[0.0], 1, 1e-12), vec![1.0]);
    }

    #[test]
    fn cd_orthogonal_columns_match_closed_form() {
        // Orthogonal columns: each coordinate solves independently,
        // b_j = S(a_j'v / |a_j|^2, lambda * alpha_j / (phi |a_j|^2)).
        let x = array![
            [2.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, -3.0],
            [0.0, 0.0, 1.0]
        ];
        let blk = block_of(x.clone());
        let v = [1.5, -0.7, 2.0, 0.4];
        let w = [1.0, 0.5, 2.0];
        let (lambda, phi) = (0.3, 0.8);
        let ctx = BlockContext {
            block: &blk,
            target: &v,
            weights: &w,
            lambda,
            phi,
            eta: None,
        };
        let b = update_beta_cd(&ctx, &[0.0; 3], 1, 1e-14);
        for j in 0..3 {
            let col = x.column(j);
            let nrm: f64 = col.dot(&col);
            let atv: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
            let want = soft_threshold(atv / nrm, lambda * w[j] / (phi * nrm));
            assert!((b[j] - want).abs() < 1e-15, "coord {j}: {} vs {want}", b[j]);
        }
    }

    #[test]
    fn cd_large_lambda_zeroes() {
        let blk = block_of(array![[1.0, 2.0], [3.0, -1.0]]);
        let ctx = BlockContext {
            block: &blk,
            target: &[1.0, 1.0],
            weights: &[1.0, 1.0],
            lambda: 1e6,
            phi: 1.0,
            eta: None,
        };
        assert_eq!(update_beta_cd(&ctx, &[0.5, -0.5], 1, 1e-12), vec![0.0, 0.0]);
    }

    #[test]
    fn cd_zero_column_forced_to_zero() {
        let blk = block_of(array![[0.0, 1.0], [0.0, 1.0]]);
        let ctx = BlockContext {
            block: &blk,
            target: &[1.0, 1.0],
            weights: &[1.0, 1.0],
            lambda: 0.0,
            phi: 1.0,
            eta: None,
        };
        let b = update_beta_cd(&ctx, &[3.0, 0.0], 5, 1e-12);
        assert_eq!(b[0], 0.0);
        assert!((b[1] - 1.0).abs() < 1e-14);
    }

    fn rand_block(seed: u64, n: usize, p: usize) -> (Array2<f64>, Block) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        (x.clone(), block_of(x))
    }

    #[test]
    fn eta_examples() {
        let unit = block_of(array![[0.6], [0.8]]);
        assert!((estimate_eta(&unit, 1.0, 1.01) - 1.01).abs() < 1e-12);
        let diag = block_of(array![[2.0, 0.0], [0.0, 1.0]]);
        assert!((estimate_eta(&diag, 1.0, 1.01) - 4.04).abs() < 1e-7);
        assert!((estimate_eta(&diag, 2.5, 1.01) - 4.04 * 2.5).abs() < 2e-7);
        let zero = block_of(Array2::zeros((3, 2)));
        assert_eq!(estimate_eta(&zero, 1.0, 1.01), 1.01 * f64::EPSILON);
    }

    #[test]
    fn power_iteration_matches_eigensolver() {
        let (x, blk) = rand_block(11, 20, 8);
        let m = nalgebra::DMatrix::from_fn(20, 8, |i, j| x[[i, j]]);
        let ata = m.transpose() * &m;
        let eig = ata.symmetric_eigen();
        let want = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let got = lambda_max_ata(&blk);
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn prox_step_does_not_increase_majorized_objective(seed in 0u64..10_000, lambda in 0.0f64..0.5) {
            let (_, blk) = rand_block(seed, 12, 5);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let v: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b0: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = vec![1.0; 5];
            let phi = 1.3;
            let eta = estimate_eta(&blk, phi, 1.01);
            let ctx = BlockContext { block: &blk, target: &v, weights: &w, lambda, phi, eta: Some(eta) };
            let b1 = update_beta_prox(&ctx, &b0).unwrap();
            // Majorized value: F(b) + 1/2 ||b - b0||^2_T with T = eta I - phi A'A.
            let major = |b: &[f64]| {
                let d: Vec<f64> = b.iter().zip(&b0).map(|(a, c)| a - c).collect();
                let ad = blk.mul_vec(&d);
                let t = eta * d.iter().map(|x| x * x).sum::<f64>() - phi * ad.iter().map(|x| x * x).sum::<f64>();
                ctx.subproblem_value(b) + 0.5 * t
            };
            prop_assert!(major(&b1) <= major(&b0) + 1e-10);
            prop_assert!(ctx.subproblem_value(&b1) <= ctx.subproblem_value(&b0) + 1e-10);
        }

        #[test]
        fn cd_and_prox_share_fixed_points(seed in 0u64..10_000) {
            let (_, blk) = rand_block(seed, 15, 6);
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let v: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (lambda, phi) = (0.4, 1.0);
            let ctx = BlockContext { block: &blk, target: &v, weights: &w, lambda, phi, eta: Some(estimate_eta(&blk, phi, 1.01)) };
            let b = update_beta_cd(&ctx, &[0.0; 6], 10_000, 1e-14);
            // Per-coordinate optimality: 0 in lambda alpha_j d|b_j| + phi a_j'(A b - v).
            let ab = blk.mul_vec(&b);
            let r: Vec<f64> = ab.iter().zip(&v).map(|(a, t)| a - t).collect();
            for j in 0..6 {
                let g = phi * dot(blk.column(j), &r);
                let k = lambda * w[j];
                if b[j] != 0.0 {
                    prop_assert!((g + k * b[j].signum()).abs() < 1e-8);
                } else {
                    prop_assert!(g.abs() <= k + 1e-8);
                }
            }
            // The CD minimizer is a fixed point of the prox map too.
            let bp = update_beta_prox(&ctx, &b).unwrap();
            for j in 0..6 {
                prop_assert!((bp[j] - b[j]).abs() < 1e-8);
            }
        }
    }
}
