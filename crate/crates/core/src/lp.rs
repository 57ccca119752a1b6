//! Exact reference solver for tiny instances: the weighted l1 SVM as a linear
//! program, solved by a dense two-phase simplex with Bland's rule.

use ndarray::Array2;

use crate::data::{objective, Dataset, PenaltyWeights};
use crate::engine::{support_of, FitResult};
use crate::error::{Result, SvmError};

pub const SIZE_GUARD: usize = 400;
pub const PIVOT_CAP: usize = 1_000_000;
const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

/// Variable layout `[xi (n), u (p), v (p), b+, b-]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpLayout {
    pub n: usize,
    pub p: usize,
}

impl LpLayout {
    pub fn n_vars(&self) -> usize {
        self.n + 2 * self.p + 2
    }
    pub fn xi(&self, i: usize) -> usize {
        i
    }
    pub fn u(&self, j: usize) -> usize {
        self.n + j
    }
    pub fn v(&self, j: usize) -> usize {
        self.n + self.p + j
    }
    pub fn b_plus(&self) -> usize {
        self.n + 2 * self.p
    }
    pub fn b_minus(&self) -> usize {
        self.n + 2 * self.p + 1
    }
}

/// `minimize c'w  subject to  M w >= b,  w >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLP {
    pub c: Vec<f64>,
    pub m: Array2<f64>,
    pub b: Vec<f64>,
    pub layout: Option<LpLayout>,
}

impl StandardLP {
    pub fn new(c: Vec<f64>, m: Array2<f64>, b: Vec<f64>) -> Result<Self> {
        if m.ncols() != c.len() || m.nrows() != b.len() {
            return Err(SvmError::Dimension(format!(
                "LP dimensions disagree: c {}, M {}x{}, b {}",
                c.len(),
                m.nrows(),
                m.ncols(),
                b.len()
            )));
        }
        if b.iter().chain(&c).chain(m.iter()).any(|v| !v.is_finite()) {
            return Err(SvmError::Dimension("LP data must be finite".into()));
        }
        Ok(StandardLP {
            c,
            m,
            b,
            layout: None,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.b.len()
    }
}

pub fn build_lp(d: &Dataset, w: &PenaltyWeights, lambda: f64) -> Result<StandardLP> {
    let (n, p) = (d.n_samples(), d.n_features());
    if w.len() != p {
        return Err(SvmError::Dimension(format!(
            "{} weights for {p} features",
            w.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SvmError::Config(
            "lambda must be finite and non-negative".into(),
        ));
    }
    let layout = LpLayout { n, p };
    let vars = layout.n_vars();
    if vars > SIZE_GUARD {
        return Err(SvmError::OracleSizeGuard {
            vars,
            guard: SIZE_GUARD,
        });
    }
    let mut c = vec![0.0; vars];
    for i in 0..n {
        c[layout.xi(i)] = 1.0 / n as f64;
    }
    for (j, a) in w.alpha().iter().enumerate() {
        c[layout.u(j)] = lambda * a;
        c[layout.v(j)] = lambda * a;
    }
    let mut m = Array2::zeros((n, vars));
    let (x, y) = (d.x(), d.y());
    for i in 0..n {
        m[[i, layout.xi(i)]] = 1.0;
        for j in 0..p {
            let s = y[i] * x[[i, j]];
            m[[i, layout.u(j)]] = s;
            m[[i, layout.v(j)]] = -s;
        }
        m[[i, layout.b_plus()]] = y[i];
        m[[i, layout.b_minus()]] = -y[i];
    }
    let mut lp = StandardLP::new(c, m, vec![1.0; n])?;
    lp.layout = Some(layout);
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub w: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
    /// Basic column per row of the final tableau (original variables only).
    pub basis: Vec<usize>,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows followed by the objective row; rhs is the last column.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let piv = self.t[pr * w + pc];
        for v in &mut self.t[pr * w..(pr + 1) * w] {
            *v /= piv;
        }
        let prow: Vec<f64> = self.t[pr * w..(pr + 1) * w].to_vec();
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.t[r * w + pc];
            if f != 0.0 {
                for (v, q) in self.t[r * w..(r + 1) * w].iter_mut().zip(&prow) {
                    *v -= f * q;
                }
                self.t[r * w + pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
        self.pivots += 1;
    }

    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        self.t[obj..].iter_mut().for_each(|v| *v = 0.0);
        self.t[obj..obj + cost.len()].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = self.t[obj + self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    self.t[obj + c] -= cb * self.t[r * w + c];
                }
            }
        }
    }

    /// Bland's rule over the columns `0..allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        loop {
            let entering = (0..allowed).find(|&c| self.at(self.rows, c) < -PIVOT_EPS);
            let Some(pc) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    }
                }
            }
            let Some((pr, _)) = leave else {
                return Err(SvmError::Simplex("objective unbounded below".into()));
            };
            if self.pivots >= PIVOT_CAP {
                return Err(SvmError::Simplex(format!("pivot cap {PIVOT_CAP} exceeded")));
            }
            self.pivot(pr, pc);
        }
    }
}

/// Two-phase dense simplex. Surplus variables turn `M w >= b` into
/// equalities; phase one drives one artificial per row to zero.
pub fn simplex_solve(lp: &StandardLP) -> Result<LpSolution> {
    let (m, k) = (lp.n_constraints(), lp.n_vars());
    let cols = k + m + m;
    let width = cols + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for r in 0..m {
        let sign = if lp.b[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..k {
            t[r * width + c] = sign * lp.m[[r, c]];
        }
        t[r * width + k + r] = -sign;
        t[r * width + k + m + r] = 1.0;
        t[r * width + cols] = sign * lp.b[r];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (k + m..k + 2 * m).collect(),
        pivots: 0,
    };

    let mut phase1 = vec![0.0; cols];
    phase1[k + m..].iter_mut().for_each(|v| *v = 1.0);
    tab.set_objective(&phase1);
    tab.optimize(k + m)?;
    let infeas = -tab.rhs(m);
    if infeas > FEAS_EPS * (1.0 + lp.b.iter().map(|v| v.abs()).sum::<f64>()) {
        return Err(SvmError::Simplex(format!(
            "infeasible (phase-one value {infeas:e})"
        )));
    }
    // Pivot zero-level artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= k + m {
            if let Some(c) = (0..k + m).find(|&c| tab.at(r, c).abs() > PIVOT_EPS) {
                tab.pivot(r, c);
            }
        }
    }

    let mut cost = lp.c.clone();
    cost.resize(cols, 0.0);
    tab.set_objective(&cost);
    tab.optimize(k + m)?;

    let mut w = vec![0.0; k];
    for r in 0..m {
        let c = tab.basis[r];
        if c < k {
            w[c] = tab.rhs(r).max(0.0);
        }
    }
    let value = lp.c.iter().zip(&w).map(|(a, b)| a * b).sum();
    let basis = tab.basis.iter().copied().filter(|&c| c < k).collect();
    Ok(LpSolution {
        w,
        value,
        pivots: tab.pivots,
        basis,
    })
}

/// Solve the LP and map back to `(beta0, beta_plus)`. The recomputed
/// penalized objective must agree with the LP value.
pub fn oracle_fit(d: &Dataset, w: &PenaltyWeights, lambda: f64) -> Result<FitResult> {
    let lp = build_lp(d, w, lambda)?;
    let layout = lp.layout.expect("built from data");
    let sol = simplex_solve(&lp)?;
    let beta_plus: Vec<f64> = (0..layout.p)
        .map(|j| sol.w[layout.u(j)] - sol.w[layout.v(j)])
        .collect();
    let beta0 = sol.w[layout.b_plus()] - sol.w[layout.b_minus()];
    let obj = objective(d, w, lambda, beta0, &beta_plus)?;
    if (obj - sol.value).abs() > 1e-9 * obj.abs().max(1.0) {
        return Err(SvmError::Simplex(format!(
            "LP value {} disagrees with objective {obj}",
            sol.value
        )));
    }
    Ok(FitResult {
        lambda,
        beta0,
        support: support_of(&beta_plus, 1e-6),
        beta_plus,
        iterations: sol.pivots,
        converged: true,
        objective: obj,
        history: Vec::new(),
        stage_one: None,
    })
}
