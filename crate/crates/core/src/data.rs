//! Problem representation: datasets, column partitions, the signed design
//! `A = [y, A_1, ..., A_G]`, penalty weights and solver settings.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvmError};
use crate::par::Execution;

/// Labelled samples. `x` is `n x p`, labels are exactly `-1.0` or `+1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 || p == 0 {
            return Err(SvmError::Dimension(format!(
                "dataset must be non-empty, got {n}x{p}"
            )));
        }
        if y.len() != n {
            return Err(SvmError::Dimension(format!(
                "{} labels for {n} rows",
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(SvmError::InvalidLabel {
                line: 0,
                value: bad.to_string(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::Dimension(
                "feature matrix contains non-finite values".into(),
            ));
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Decision values `b0 + x_i' beta` for every row.
    pub fn decision(&self, beta0: f64, beta_plus: ArrayView1<f64>) -> Array1<f64> {
        let mut s = self.x.dot(&beta_plus);
        s += beta0;
        s
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select(ndarray::Axis(0), idx);
        let y = self.y.select(ndarray::Axis(0), idx);
        Dataset { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Sparse,
}

impl DataFormat {
    /// Guess from the file extension; anything but `.csv` is treated as sparse.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Sparse,
        }
    }
}

fn parse_label(raw: &str, line: usize) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| SvmError::InvalidLabel {
        line,
        value: raw.to_string(),
    })?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(SvmError::InvalidLabel {
            line,
            value: raw.to_string(),
        })
    }
}

/// Read a dataset from disk. `n_features` only matters for the sparse
/// format, where it widens the matrix beyond the largest index seen.
pub fn load_dataset(path: &Path, format: DataFormat, n_features: Option<usize>) -> Result<Dataset> {
    let file = File::open(path)?;
    match format {
        DataFormat::Csv => parse_csv(file),
        DataFormat::Sparse => parse_sparse(BufReader::new(file), n_features),
    }
}

/// Write `y,x1,...,xp` with a header row; values use shortest round-trip
/// formatting so a reload reproduces the data exactly.
pub fn write_csv<W: std::io::Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.n_features()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(d.n_features() + 1);
    for (row, y) in d.x().outer_iter().zip(d.y()) {
        rec.clear();
        rec.push(format!("{}", *y as i64));
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with an optional header row; first column is the label.
pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 1;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        // Header: first line whose label field is not numeric.
        if labels.is_empty()
            && width.is_none()
            && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err())
        {
            width = Some(rec.len());
            continue;
        }
        if rec.len() < 2 {
            return Err(SvmError::Parse {
                line,
                msg: "expected a label and at least one feature".into(),
            });
        }
        match width {
            Some(w) if w != rec.len() => {
                return Err(SvmError::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => width = Some(rec.len()),
        }
        labels.push(parse_label(&rec[0], line)?);
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| SvmError::Parse {
                line,
                msg: format!("non-numeric feature {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(SvmError::Parse {
                    line,
                    msg: format!("non-finite feature {field:?}"),
                });
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(SvmError::EmptyFile);
    }
    let n = labels.len();
    let p = values.len() / n;
    let x =
        Array2::from_shape_vec((n, p), values).map_err(|e| SvmError::Dimension(e.to_string()))?;
    Dataset::new(x, Array1::from(labels))
}

/// `<label> <idx>:<value> ...`, 1-based strictly increasing indices.
pub fn parse_sparse<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or(""), lineno)?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| SvmError::Parse {
                line: lineno,
                msg: format!("malformed entry {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| SvmError::Parse {
                line: lineno,
                msg: format!("bad index in {tok:?}"),
            })?;
            let val: f64 = val.parse().map_err(|_| SvmError::Parse {
                line: lineno,
                msg: format!("non-numeric value in {tok:?}"),
            })?;
            if idx == 0 || idx <= last {
                return Err(SvmError::Parse {
                    line: lineno,
                    msg: "indices must be 1-based and strictly increasing".into(),
                });
            }
            if !val.is_finite() {
                return Err(SvmError::Parse {
                    line: lineno,
                    msg: format!("non-finite value in {tok:?}"),
                });
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        max_idx = max_idx.max(last);
        labels.push(label);
        rows.push(entries);
    }
    if labels.is_empty() {
        return Err(SvmError::EmptyFile);
    }
    let p = match n_features {
        Some(p) if p < max_idx => {
            return Err(SvmError::Dimension(format!(
                "feature index {max_idx} exceeds declared width {p}"
            )))
        }
        Some(p) => p,
        None => max_idx,
    };
    if p == 0 {
        return Err(SvmError::Dimension("no features present".into()));
    }
    let mut x = Array2::zeros((labels.len(), p));
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            x[[i, j]] = v;
        }
    }
    Dataset::new(x, Array1::from(labels))
}

/// Contiguous column ranges `[boundaries[g], boundaries[g + 1])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    boundaries: Vec<usize>,
}

impl BlockPartition {
    /// `g` near-equal contiguous blocks; the first `p % g` get one extra column.
    pub fn even(p: usize, g: usize) -> Result<Self> {
        if g < 1 || g > p {
            return Err(SvmError::Partition(format!(
                "need 1 <= G <= p, got G={g}, p={p}"
            )));
        }
        let base = p / g;
        let extra = p % g;
        let mut boundaries = Vec::with_capacity(g + 1);
        boundaries.push(0);
        let mut acc = 0;
        for b in 0..g {
            acc += base + usize::from(b < extra);
            boundaries.push(acc);
        }
        Ok(BlockPartition { boundaries })
    }

    pub fn from_boundaries(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(SvmError::Partition(
                "boundaries must start at 0 and hold at least two entries".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SvmError::Partition(
                "boundaries must be strictly increasing".into(),
            ));
        }
        Ok(BlockPartition { boundaries })
    }

    pub fn n_blocks(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn width(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.boundaries[g]..self.boundaries[g + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }
}

/// Convenience wrapper matching the CLI's `--blocks` flag.
pub fn make_partition(p: usize, g: usize) -> Result<BlockPartition> {
    BlockPartition::even(p, g)
}

/// One column block `A_g` of the signed design, stored column-major.
#[derive(Debug, Clone)]
pub struct Block {
    offset: usize,
    n: usize,
    width: usize,
    data: Vec<f64>,
    col_sq_norms: Vec<f64>,
}

impl Block {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn col_sq_norms(&self) -> &[f64] {
        &self.col_sq_norms
    }

    /// `out = A_g beta`, skipping zero coefficients.
    pub fn mul_vec_into(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                axpy(b, self.column(j), out);
            }
        }
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(beta, &mut out);
        out
    }

    /// `out = A_g' r`.
    pub fn tmul_vec_into(&self, r: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.column(j), r);
        }
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.width), |(i, j)| self.data[j * self.n + i])
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `A = [A_0, A_1, ..., A_G]` where `A_0 = y` and row `i` of the blocks is `y_i x_i'`.
#[derive(Debug, Clone)]
pub struct SignedDesign {
    a0: Vec<f64>,
    blocks: Vec<Block>,
    partition: BlockPartition,
}

impl SignedDesign {
    pub fn a0(&self) -> &[f64] {
        &self.a0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn n_samples(&self) -> usize {
        self.a0.len()
    }

    pub fn n_features(&self) -> usize {
        self.partition.width()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Global column `j` of the signed design (excluding `A_0`).
    pub fn column(&self, j: usize) -> &[f64] {
        let g = self.partition.boundaries.partition_point(|&b| b <= j) - 1;
        self.blocks[g].column(j - self.partition.boundaries[g])
    }

    /// Recover `X` by un-signing the rows.
    pub fn unsigned(&self) -> Array2<f64> {
        let n = self.n_samples();
        let mut x = Array2::zeros((n, self.n_features()));
        for blk in &self.blocks {
            for j in 0..blk.width {
                let col = blk.column(j);
                for i in 0..n {
                    x[[i, blk.offset + j]] = col[i] / self.a0[i];
                }
            }
        }
        x
    }

    /// Split a full coefficient vector into per-block slices.
    pub fn split_coefficients(&self, beta_plus: &[f64]) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| beta_plus[b.offset..b.offset + b.width].to_vec())
            .collect()
    }

    /// Signed margins `y_i (b0 + x_i' beta)` for block-wise coefficients.
    pub fn margins(&self, beta0: f64, beta: &[Vec<f64>]) -> Vec<f64> {
        let mut m: Vec<f64> = self.a0.iter().map(|&y| y * beta0).collect();
        for (blk, bg) in self.blocks.iter().zip(beta) {
            for (j, &b) in bg.iter().enumerate() {
                if b != 0.0 {
                    axpy(b, blk.column(j), &mut m);
                }
            }
        }
        m
    }

    /// Penalized hinge objective evaluated through the signed design.
    pub fn objective(&self, w: &PenaltyWeights, lambda: f64, beta0: f64, beta: &[Vec<f64>]) -> f64 {
        let m = self.margins(beta0, beta);
        let hinge: f64 =
            m.iter().map(|&mi| (1.0 - mi).max(0.0)).sum::<f64>() / self.n_samples() as f64;
        let mut pen = 0.0;
        for (blk, bg) in self.blocks.iter().zip(beta) {
            let a = &w.alpha()[blk.offset..blk.offset + blk.width];
            pen += a.iter().zip(bg).map(|(a, b)| a * b.abs()).sum::<f64>();
        }
        hinge + lambda * pen
    }
}

pub fn build_signed_design(d: &Dataset, part: &BlockPartition) -> Result<SignedDesign> {
    let (n, p) = d.x.dim();
    if part.width() != p {
        return Err(SvmError::Partition(format!(
            "partition spans {} columns but data has {p}",
            part.width()
        )));
    }
    let blocks = (0..part.n_blocks())
        .map(|g| {
            let range = part.range(g);
            let width = range.len();
            let mut data = Vec::with_capacity(n * width);
            let mut col_sq_norms = Vec::with_capacity(width);
            for j in range.clone() {
                let col = d.x.column(j);
                let start = data.len();
                data.extend(col.iter().zip(d.y.iter()).map(|(x, y)| x * y));
                col_sq_norms.push(data[start..].iter().map(|v| v * v).sum());
            }
            Block {
                offset: range.start,
                n,
                width,
                data,
                col_sq_norms,
            }
        })
        .collect();
    Ok(SignedDesign {
        a0: d.y.to_vec(),
        blocks,
        partition: part.clone(),
    })
}

/// Non-negative per-feature penalty weights; the intercept is never weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights {
    alpha: Vec<f64>,
}

impl PenaltyWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(SvmError::Config(
                "penalty weights must be finite and non-negative".into(),
            ));
        }
        Ok(PenaltyWeights { alpha })
    }

    pub fn ones(p: usize) -> Self {
        PenaltyWeights {
            alpha: vec![1.0; p],
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Coordinate descent on each block's lasso subproblem.
    Cd,
    /// One linearized proximal step per block.
    Prox,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cd => "cd",
            Variant::Prox => "prox",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty.
    pub phi: f64,
    /// Dual step length, in `(0, (1 + sqrt 5) / 2]`.
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub inner_sweeps: usize,
    pub inner_tol: f64,
    pub eta_safety: f64,
    pub variant: Variant,
    pub support_eps: f64,
    pub execution: Execution,
    /// Record iterate snapshots for the distance monitor every this many iterations.
    pub snapshot_every: Option<usize>,
    pub snapshot_cap: usize,
}

pub const GOLDEN_THETA: f64 = 1.618;

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            phi: 1.0,
            theta: GOLDEN_THETA,
            tol: 1e-6,
            max_iter: 20_000,
            inner_sweeps: 10,
            inner_tol: 1e-8,
            eta_safety: 1.01,
            variant: Variant::Cd,
            support_eps: 1e-6,
            execution: Execution::default(),
            snapshot_every: None,
            snapshot_cap: 500,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvmError::Config(m.to_string()));
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return bad("phi must be positive");
        }
        if !(self.theta > 0.0 && self.theta <= 1.6181) {
            return bad("theta must lie in (0, 1.6181]");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 || self.inner_sweeps == 0 {
            return bad("max_iter and inner_sweeps must be positive");
        }
        if !(self.inner_tol > 0.0) {
            return bad("inner_tol must be positive");
        }
        if !(self.eta_safety > 1.0) {
            return bad("eta_safety must exceed 1");
        }
        if !(self.support_eps >= 0.0) {
            return bad("support_eps must be non-negative");
        }
        if self.snapshot_every == Some(0) || self.snapshot_cap == 0 {
            return bad("snapshot interval and cap must be positive");
        }
        Ok(())
    }
}

/// `(1/n) sum_i (1 - y_i x_i' beta - y_i b0)_+ + lambda sum_j alpha_j |beta_j|`.
pub fn objective(
    d: &Dataset,
    w: &PenaltyWeights,
    lambda: f64,
    beta0: f64,
    beta_plus: &[f64],
) -> Result<f64> {
    let p = d.n_features();
    if beta_plus.len() != p || w.len() != p {
        return Err(SvmError::Dimension(format!(
            "expected {p} coefficients and weights, got {} and {}",
            beta_plus.len(),
            w.len()
        )));
    }
    Ok(hinge_sum(d, beta0, beta_plus) / d.n_samples() as f64 + lambda * weighted_l1(w, beta_plus))
}

/// Unscaled hinge sum `sum_i (1 - y_i (b0 + x_i' beta))_+`.
pub fn hinge_sum(d: &Dataset, beta0: f64, beta_plus: &[f64]) -> f64 {
    let s = d.decision(beta0, ArrayView1::from(beta_plus));
    s.iter()
        .zip(d.y.iter())
        .map(|(s, y)| (1.0 - y * s).max(0.0))
        .sum()
}

pub(crate) fn weighted_l1(w: &PenaltyWeights, beta: &[f64]) -> f64 {
    w.alpha.iter().zip(beta).map(|(a, b)| a * b.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_with_header() {
        let d = parse_csv("y,f1\n1,2.0\n-1,-2.0".as_bytes()).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.y(), &array![1.0, -1.0]);
        assert_eq!(d.x(), &array![[2.0], [-2.0]]);
    }

    #[test]
    fn csv_maps_zero_labels() {
        let d = parse_csv("0,1.5,2\n1,0,0\n".as_bytes()).unwrap();
        assert_eq!(d.y(), &array![-1.0, 1.0]);
    }

    #[test]
    fn csv_rejects_label_two() {
        let err = parse_csv("y,f1\n2,1.0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("invalid label"), "{err}");
    }

    #[test]
    fn csv_rejects_non_numeric_feature() {
        let err = parse_csv("1,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SvmError::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_empty() {
        assert!(matches!(parse_csv("".as_bytes()), Err(SvmError::EmptyFile)));
        assert!(matches!(
            parse_csv("y,f1\n".as_bytes()),
            Err(SvmError::EmptyFile)
        ));
    }

    #[test]
    fn sparse_line_is_densified() {
        let d = parse_sparse("+1 3:0.5".as_bytes(), Some(4)).unwrap();
        assert_eq!(d.x(), &array![[0.0, 0.0, 0.5, 0.0]]);
        assert_eq!(d.y(), &array![1.0]);
    }

    #[test]
    fn sparse_rejects_unordered_indices() {
        assert!(parse_sparse("1 3:1 2:1".as_bytes(), None).is_err());
        assert!(parse_sparse("1 0:1".as_bytes(), None).is_err());
        assert!(parse_sparse("1 2:x".as_bytes(), None).is_err());
    }

    #[test]
    fn sparse_infers_width() {
        let d = parse_sparse("1 2:1\n-1 5:2 # comment\n".as_bytes(), None).unwrap();
        assert_eq!(d.n_features(), 5);
        assert_eq!(d.x()[[1, 4]], 2.0);
    }

    #[test]
    fn partition_sizes() {
        assert_eq!(make_partition(6, 2).unwrap().sizes(), vec![3, 3]);
        assert_eq!(make_partition(7, 3).unwrap().sizes(), vec![3, 2, 2]);
        assert!(make_partition(4, 5).is_err());
        assert!(make_partition(4, 0).is_err());
    }

    #[test]
    fn signed_design_one_by_one() {
        let d = Dataset::new(array![[2.0]], array![-1.0]).unwrap();
        let a = build_signed_design(&d, &make_partition(1, 1).unwrap()).unwrap();
        assert_eq!(a.a0(), &[-1.0]);
        assert_eq!(a.blocks()[0].to_array(), array![[-2.0]]);
        assert_eq!(a.blocks()[0].col_sq_norms(), &[4.0]);
    }

    #[test]
    fn signed_design_identity_signing() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let d = Dataset::new(x.clone(), array![1.0, 1.0]).unwrap();
        let a = build_signed_design(&d, &make_partition(3, 2).unwrap()).unwrap();
        assert_eq!(a.blocks()[0].to_array(), x.slice(ndarray::s![.., 0..2]));
        assert_eq!(a.blocks()[1].to_array(), x.slice(ndarray::s![.., 2..3]));
    }

    #[test]
    fn signed_design_width_mismatch() {
        let d = Dataset::new(array![[1.0, 2.0]], array![1.0]).unwrap();
        assert!(build_signed_design(&d, &make_partition(3, 1).unwrap()).is_err());
    }

    #[test]
    fn objective_at_zero_is_one() {
        let d = Dataset::new(
            array![[1.0, -3.0], [0.2, 4.0], [7.0, 1.0]],
            array![1.0, -1.0, -1.0],
        )
        .unwrap();
        let v = objective(&d, &PenaltyWeights::ones(2), 0.7, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn objective_symmetric_pair() {
        let d = Dataset::new(array![[1.0], [-1.0]], array![1.0, -1.0]).unwrap();
        let v = objective(&d, &PenaltyWeights::ones(1), 0.5, 0.0, &[1.0]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn objective_separated_is_pure_penalty() {
        let d = Dataset::new(array![[3.0, 0.0], [-2.0, 1.0]], array![1.0, -1.0]).unwrap();
        let w = PenaltyWeights::new(vec![2.0, 1.0]).unwrap();
        let v = objective(&d, &w, 0.1, 0.0, &[1.0, -0.5]).unwrap();
        // margins: 3, 2.5 -> hinge 0
        assert!((v - 0.1 * (2.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn objective_dimension_mismatch() {
        let d = Dataset::new(array![[1.0]], array![1.0]).unwrap();
        assert!(objective(&d, &PenaltyWeights::ones(2), 0.1, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let cfg = SolverConfig {
            theta: 1.7,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            eta_safety: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let d = Dataset::new(array![[0.1, -2.5e-17], [1.0 / 3.0, 7.0]], array![1.0, -1.0]).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), d);
    }
}
