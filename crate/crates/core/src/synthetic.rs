//! Simulation study: AR(1)-correlated Gaussian features, probit labels, the
//! four evaluation metrics and a replication harness.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::engine::FitResult;
use crate::error::{Result, SvmError};

/// Configuration of one synthetic experiment. Active indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub active_set: Vec<usize>,
    pub signal: f64,
    pub seed: u64,
    pub n_test: usize,
}

impl SimSpec {
    /// The `n = 300, p = 3000` design with four active features.
    pub fn table_one(seed: u64) -> Self {
        SimSpec {
            n: 300,
            p: 3000,
            rho: 0.4,
            active_set: vec![50, 1000, 1500, 2000],
            signal: 1.1,
            seed,
            n_test: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.n_test == 0 {
            return Err(SvmError::Config("n, p and n_test must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SvmError::Config(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if let Some(&j) = self.active_set.iter().find(|&&j| j >= self.p) {
            return Err(SvmError::Config(format!(
                "active index {j} out of range for p = {}",
                self.p
            )));
        }
        let mut sorted = self.active_set.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.active_set.len() {
            return Err(SvmError::Config("active indices must be distinct".into()));
        }
        if !self.signal.is_finite() {
            return Err(SvmError::Config("signal must be finite".into()));
        }
        Ok(())
    }

    pub fn beta_star(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.p];
        for &j in &self.active_set {
            b[j] = self.signal;
        }
        b
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Rows drawn by the AR(1) recursion `x_1 ~ N(0,1)`,
/// `x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j`, which realizes
/// `cov(x_i, x_j) = rho^|i-j|` exactly. Labels are `+1` with probability
/// `Phi(x' beta)`.
fn draw(rng: &mut ChaCha8Rng, n: usize, p: usize, rho: f64, beta: &[f64]) -> Dataset {
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[[i, 0]] = prev;
        for j in 1..p {
            let e: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * e;
            x[[i, j]] = prev;
        }
        let eta: f64 = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, b)| b * x[[i, j]])
            .sum();
        let u: f64 = rng.gen();
        y[i] = if u < normal_cdf(eta) { 1.0 } else { -1.0 };
    }
    Dataset::new(x, y).expect("generated data is well formed")
}

/// Generate `(train, test, beta_star)`. Train and test use separate streams of
/// the same seeded ChaCha generator.
pub fn generate(spec: &SimSpec) -> Result<(Dataset, Dataset, Vec<f64>)> {
    spec.validate()?;
    let beta = spec.beta_star();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let train = draw(&mut rng, spec.n, spec.p, spec.rho, &beta);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let test = draw(&mut rng, spec.n_test, spec.p, spec.rho, &beta);
    Ok((train, test, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub test_error: f64,
    pub signal: usize,
    pub noise: usize,
    pub aac: f64,
}

impl Metrics {
    pub fn failed() -> MetricsRow {
        MetricsRow {
            test_error: f64::NAN,
            signal: f64::NAN,
            noise: f64::NAN,
            aac: f64::NAN,
        }
    }

    pub fn as_row(&self) -> MetricsRow {
        MetricsRow {
            test_error: self.test_error,
            signal: self.signal as f64,
            noise: self.noise as f64,
            aac: self.aac,
        }
    }
}

/// Metrics as floats, so failed replications can carry NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub test_error: f64,
    pub signal: f64,
    pub noise: f64,
    pub aac: f64,
}

impl MetricsRow {
    pub const NAMES: [&'static str; 4] = ["test_error", "signal", "noise", "aac"];

    pub fn values(&self) -> [f64; 4] {
        [self.test_error, self.signal, self.noise, self.aac]
    }
}

/// Predicted label `sign(b0 + x' beta)`, with exact zero mapped to `+1`.
pub fn predict_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn misclassification(d: &Dataset, beta0: f64, beta_plus: &[f64]) -> f64 {
    let s = d.decision(beta0, ndarray::ArrayView1::from(beta_plus));
    let wrong = s
        .iter()
        .zip(d.y().iter())
        .filter(|(s, y)| predict_label(**s) != **y)
        .count();
    wrong as f64 / d.n_samples() as f64
}

/// Absolute sample correlation; 0 when either side has no variance.
pub fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).abs().min(1.0)
}

pub fn evaluate(
    fit: &FitResult,
    test: &Dataset,
    beta_star: &[f64],
    active_set: &[usize],
) -> Result<Metrics> {
    let p = test.n_features();
    if fit.beta_plus.len() != p || beta_star.len() != p {
        return Err(SvmError::Dimension(
            "fit, truth and test set disagree on p".into(),
        ));
    }
    let test_error = misclassification(test, fit.beta0, &fit.beta_plus);
    let signal = fit
        .support
        .iter()
        .filter(|j| active_set.contains(j))
        .count();
    let noise = fit.support.len() - signal;
    let truth = test.x().dot(&Array1::from(beta_star.to_vec()));
    let est = test.x().dot(&Array1::from(fit.beta_plus.clone()));
    let aac = abs_correlation(truth.as_slice().unwrap(), est.as_slice().unwrap());
    Ok(Metrics {
        test_error,
        signal,
        noise,
        aac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_corr(d: &Dataset, a: usize, b: usize) -> f64 {
        let x = d.x();
        let ca: Vec<f64> = x.column(a).to_vec();
        let cb: Vec<f64> = x.column(b).to_vec();
        let s = abs_correlation(&ca, &cb);
        // sign matters for the lag tests
        let ma = ca.iter().sum::<f64>() / ca.len() as f64;
        let mb = cb.iter().sum::<f64>() / cb.len() as f64;
        let cov: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        s * cov.signum()
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let q = normal_cdf(1.959963984540054);
        assert!((q - 0.975).abs() < 1e-10, "{q:e}");
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-10);
    }

    #[test]
    fn independent_columns_when_rho_zero() {
        let spec = SimSpec {
            n: 500,
            p: 8,
            rho: 0.0,
            active_set: vec![],
            signal: 0.0,
            seed: 1,
            n_test: 10,
        };
        let (train, _, _) = generate(&spec).unwrap();
        for a in 0..8 {
            for b in (a + 1)..8 {
                assert!(col_corr(&train, a, b).abs() < 0.15);
            }
        }
    }

    #[test]
    fn lag_one_correlation() {
        let spec = SimSpec {
            n: 500,
            p: 30,
            rho: 0.4,
            active_set: vec![],
            signal: 0.0,
            seed: 2,
            n_test: 10,
        };
        let (train, _, _) = generate(&spec).unwrap();
        let lag1: f64 = (0..29).map(|j| col_corr(&train, j, j + 1)).sum::<f64>() / 29.0;
        assert!((lag1 - 0.4).abs() < 0.05, "{lag1}");
    }

    #[test]
    fn lag_k_correlation_large_n() {
        let spec = SimSpec {
            n: 2000,
            p: 40,
            rho: 0.4,
            active_set: vec![],
            signal: 0.0,
            seed: 3,
            n_test: 10,
        };
        let (train, _, _) = generate(&spec).unwrap();
        for k in 1..=3 {
            let est: f64 = (0..(40 - k))
                .map(|j| col_corr(&train, j, j + k))
                .sum::<f64>()
                / (40 - k) as f64;
            assert!((est - 0.4f64.powi(k as i32)).abs() < 0.03, "lag {k}: {est}");
        }
    }

    #[test]
    fn null_signal_balances_labels() {
        let spec = SimSpec {
            n: 2000,
            p: 5,
            rho: 0.4,
            active_set: vec![],
            signal: 0.0,
            seed: 4,
            n_test: 10,
        };
        let (train, _, _) = generate(&spec).unwrap();
        let mean = train.y().mean().unwrap();
        assert!(mean.abs() < 0.07, "{mean}");
    }

    #[test]
    fn deterministic_generation() {
        let spec = SimSpec {
            n: 20,
            p: 50,
            rho: 0.4,
            active_set: vec![3, 7],
            signal: 1.1,
            seed: 9,
            n_test: 15,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.0.x().row(0), a.1.x().row(0));
    }

    #[test]
    fn spec_validation() {
        let mut spec = SimSpec::table_one(1);
        assert!(spec.validate().is_ok());
        spec.active_set = vec![99_999];
        assert!(spec.validate().is_err());
        spec.active_set = vec![];
        spec.rho = 1.0;
        assert!(spec.validate().is_err());
    }

    fn fit_with(beta0: f64, beta: Vec<f64>) -> FitResult {
        FitResult {
            lambda: 0.1,
            beta0,
            support: crate::engine::support_of(&beta, 1e-6),
            beta_plus: beta,
            iterations: 1,
            converged: true,
            objective: 0.0,
            history: vec![],
            stage_one: None,
        }
    }

    #[test]
    fn perfect_recovery_metrics() {
        let spec = SimSpec {
            n: 50,
            p: 100,
            rho: 0.4,
            active_set: vec![5, 20, 60, 90],
            signal: 1.1,
            seed: 5,
            n_test: 200,
        };
        let (_, test, bstar) = generate(&spec).unwrap();
        let m = evaluate(
            &fit_with(0.0, bstar.clone()),
            &test,
            &bstar,
            &spec.active_set,
        )
        .unwrap();
        assert_eq!(m.signal, 4);
        assert_eq!(m.noise, 0);
        assert!((m.aac - 1.0).abs() < 1e-12);
        let doubled: Vec<f64> = bstar.iter().map(|b| 2.0 * b).collect();
        let m2 = evaluate(&fit_with(0.0, doubled), &test, &bstar, &spec.active_set).unwrap();
        assert!((m2.aac - 1.0).abs() < 1e-12);
        assert_eq!(m2.test_error, m.test_error);
    }

    #[test]
    fn signal_noise_set_arithmetic() {
        let spec = SimSpec {
            n: 10,
            p: 2100,
            rho: 0.4,
            active_set: vec![50, 1000, 1500, 2000],
            signal: 1.1,
            seed: 6,
            n_test: 10,
        };
        let (_, test, bstar) = generate(&spec).unwrap();
        let mut b = vec![0.0; 2100];
        b[50] = 0.5;
        b[77] = -0.2;
        let m = evaluate(&fit_with(0.0, b), &test, &bstar, &spec.active_set).unwrap();
        assert_eq!((m.signal, m.noise), (1, 1));
    }

    #[test]
    fn zero_estimate_has_zero_aac() {
        let spec = SimSpec {
            n: 10,
            p: 20,
            rho: 0.4,
            active_set: vec![1],
            signal: 1.1,
            seed: 6,
            n_test: 30,
        };
        let (_, test, bstar) = generate(&spec).unwrap();
        let m = evaluate(
            &fit_with(0.2, vec![0.0; 20]),
            &test,
            &bstar,
            &spec.active_set,
        )
        .unwrap();
        assert_eq!(m.aac, 0.0);
    }
}
