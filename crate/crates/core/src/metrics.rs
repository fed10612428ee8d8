//! Imputation quality metrics: masked RMSE/MAE, Gaussian-kernel MMD and a histogram
//! estimate of the mutual information between data and missingness pattern.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Mask, MaskedDataset, Standardizer};
use crate::error::{MiriError, Result};
use crate::linalg::Matrix;

/// Largest dimension for which [`mi_plugin`] is computed.
pub const MAX_MI_DIMS: usize = 4;

/// Points per sample used for the median-distance bandwidth.
const BANDWIDTH_SUBSAMPLE: usize = 500;

fn masked_errors<'a>(
    imputed: &'a Matrix,
    truth: &'a Matrix,
    mask: &'a Mask,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if imputed.shape() != truth.shape() || mask.shape() != truth.shape() {
        return Err(MiriError::shape(
            format!("imputed, truth and mask of shape {:?}", truth.shape()),
            format!("{:?} and {:?}", imputed.shape(), mask.shape()),
        ));
    }
    if mask.is_fully_observed() {
        return Err(MiriError::Metric("no masked cells to evaluate".into()));
    }
    Ok(imputed
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .zip(mask.as_slice())
        .filter(|(_, &o)| !o)
        .map(|((a, b), _)| a - b))
}

/// Root mean squared error over the cells with `mask = 0`.
pub fn rmse_masked(imputed: &Matrix, truth: &Matrix, mask: &Mask) -> Result<f64> {
    let (sum, count) = masked_errors(imputed, truth, mask)?.fold((0.0, 0usize), |(s, c), e| (s + e * e, c + 1));
    Ok((sum / count as f64).sqrt())
}

/// Mean absolute error over the cells with `mask = 0`.
pub fn mae_masked(imputed: &Matrix, truth: &Matrix, mask: &Mask) -> Result<f64> {
    let (sum, count) = masked_errors(imputed, truth, mask)?.fold((0.0, 0usize), |(s, c), e| (s + e.abs(), c + 1));
    Ok(sum / count as f64)
}

/// Like [`rmse_masked`] but normalized by every cell of the matrix, observed cells counting as
/// zero error. This equals `√(missing fraction) · rmse_masked`.
pub fn rmse_per_entry(imputed: &Matrix, truth: &Matrix, mask: &Mask) -> Result<f64> {
    let sum: f64 = masked_errors(imputed, truth, mask)?.map(|e| e * e).sum();
    Ok((sum / (truth.rows() * truth.cols()) as f64).sqrt())
}

/// Like [`mae_masked`] but normalized by every cell of the matrix.
pub fn mae_per_entry(imputed: &Matrix, truth: &Matrix, mask: &Mask) -> Result<f64> {
    let sum: f64 = masked_errors(imputed, truth, mask)?.map(f64::abs).sum();
    Ok(sum / (truth.rows() * truth.cols()) as f64)
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn strided_rows(m: &Matrix, cap: usize) -> Vec<&[f64]> {
    let n = m.rows();
    if n <= cap {
        return m.iter_rows().collect();
    }
    (0..cap).map(|k| m.row(k * n / cap)).collect()
}

/// Median pairwise Euclidean distance over the pooled samples. Samples larger than 500 rows
/// are thinned to 500 evenly strided rows first. Returns 0 when all pooled points coincide.
pub fn median_bandwidth(a: &Matrix, b: &Matrix) -> f64 {
    let mut pts = strided_rows(a, BANDWIDTH_SUBSAMPLE);
    pts.extend(strided_rows(b, BANDWIDTH_SUBSAMPLE));
    let mut dists = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            dists.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        return median;
    }
    // Mostly duplicated points: fall back to the mean of the nonzero distances.
    let nonzero: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if nonzero.is_empty() {
        0.0
    } else {
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    }
}

/// `Σ_{i,j} k(x_i, x_j)` using symmetry.
fn within_sum(x: &Matrix, gamma: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let xi = x.row(i);
        let mut acc = 1.0;
        for j in i + 1..x.rows() {
            acc += 2.0 * (-gamma * sq_dist(xi, x.row(j))).exp();
        }
        total += acc;
    }
    total
}

/// `Σ_{i,j} k(x_i, y_j)`. For equal sizes the terms are grouped like [`within_sum`], so
/// identical samples give bit-identical within and between sums.
fn between_sum(x: &Matrix, y: &Matrix, gamma: f64) -> f64 {
    let mut total = 0.0;
    if x.rows() == y.rows() {
        for i in 0..x.rows() {
            let (xi, yi) = (x.row(i), y.row(i));
            let mut acc = (-gamma * sq_dist(xi, yi)).exp();
            for j in i + 1..x.rows() {
                acc += (-gamma * sq_dist(xi, y.row(j))).exp() + (-gamma * sq_dist(x.row(j), yi)).exp();
            }
            total += acc;
        }
    } else {
        for xi in x.iter_rows() {
            total += y.iter_rows().map(|yj| (-gamma * sq_dist(xi, yj)).exp()).sum::<f64>();
        }
    }
    total
}

/// Biased (V-statistic) maximum mean discrepancy with kernel `exp(−‖x−y‖² / (2σ²))`, returned
/// as `√max(MMD², 0)`. `σ` defaults to [`median_bandwidth`].
pub fn mmd_rbf(a: &Matrix, b: &Matrix, bandwidth: Option<f64>) -> Result<f64> {
    if a.rows() < 2 || b.rows() < 2 {
        return Err(MiriError::Metric("MMD needs at least two rows per sample".into()));
    }
    if a.cols() != b.cols() {
        return Err(MiriError::shape(format!("{} columns", a.cols()), format!("{}", b.cols())));
    }
    let sigma = match bandwidth {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(MiriError::Metric(format!("bandwidth must be positive, got {s}"))),
        None => median_bandwidth(a, b),
    };
    if sigma == 0.0 {
        // Every pooled point is identical.
        return Ok(0.0);
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let (n1, n2) = (a.rows() as f64, b.rows() as f64);
    let t_aa = within_sum(a, gamma) / (n1 * n1);
    let t_bb = within_sum(b, gamma) / (n2 * n2);
    let t_ab = between_sum(a, b, gamma) / (n1 * n2);
    Ok((t_aa + t_bb - 2.0 * t_ab).max(0.0).sqrt())
}

/// Plug-in estimate of `I(X; M)` in nats.
///
/// `M` is the row's observation pattern. Each dimension of `X` is cut into `bins` equal-width
/// bins over its range in `x`; empty cells contribute nothing. The result is clipped below at 0.
pub fn mi_plugin(x: &Matrix, mask: &Mask, bins: usize) -> Result<f64> {
    let (n, d) = x.shape();
    if mask.shape() != (n, d) {
        return Err(MiriError::shape(format!("mask of shape {:?}", (n, d)), format!("{:?}", mask.shape())));
    }
    if bins < 2 {
        return Err(MiriError::Metric(format!("need at least 2 bins, got {bins}")));
    }
    if d > MAX_MI_DIMS {
        return Err(MiriError::Metric(format!(
            "histogram MI is limited to {MAX_MI_DIMS} dimensions, data has {d}"
        )));
    }
    if n == 0 || !x.is_finite() {
        return Err(MiriError::Metric("MI needs a non-empty finite matrix".into()));
    }

    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let col = x.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect();
    let cell_of = |row: &[f64]| -> usize {
        row.iter().zip(&ranges).fold(0usize, |acc, (&v, &(lo, hi))| {
            let b = if hi > lo {
                (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
            } else {
                0
            };
            acc * bins + b.min(bins - 1)
        })
    };

    let mut joint: HashMap<(usize, u64), u64> = HashMap::new();
    let mut cells: HashMap<usize, u64> = HashMap::new();
    let mut patterns: HashMap<u64, u64> = HashMap::new();
    for i in 0..n {
        let c = cell_of(x.row(i));
        let p = mask.pattern(i);
        *joint.entry((c, p)).or_default() += 1;
        *cells.entry(c).or_default() += 1;
        *patterns.entry(p).or_default() += 1;
    }
    if patterns.len() == 1 {
        return Ok(0.0);
    }
    let total = n as f64;
    // Sum in a fixed order so the estimate does not depend on hash iteration order.
    let mut entries: Vec<_> = joint.into_iter().collect();
    entries.sort_unstable();
    let mi: f64 = entries
        .into_iter()
        .map(|((c, p), n_cp)| {
            let ratio = (n_cp as f64 * total) / (cells[&c] as f64 * patterns[&p] as f64);
            n_cp as f64 / total * ratio.ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// All evaluation metrics for one imputed matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Over masked cells, in the units of the inputs.
    pub rmse: f64,
    pub mae: f64,
    /// Masked-cell errors averaged over every cell of the matrix.
    pub rmse_per_entry: f64,
    pub mae_per_entry: f64,
    /// Between the full imputed and true matrices, both standardized with the observed-entry
    /// statistics.
    pub mmd: f64,
    /// Histogram MI between standardized imputed data and mask; absent above
    /// [`MAX_MI_DIMS`] features.
    pub mi: Option<f64>,
    pub masked_cells: usize,
    pub rows: usize,
}

impl MetricsReport {
    /// One `key = value` line per metric.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rmse = {}", self.rmse);
        let _ = writeln!(s, "mae = {}", self.mae);
        let _ = writeln!(s, "rmse_per_entry = {}", self.rmse_per_entry);
        let _ = writeln!(s, "mae_per_entry = {}", self.mae_per_entry);
        let _ = writeln!(s, "mmd = {}", self.mmd);
        if let Some(mi) = self.mi {
            let _ = writeln!(s, "mi = {mi}");
        }
        let _ = writeln!(s, "masked_cells = {}", self.masked_cells);
        let _ = writeln!(s, "rows = {}", self.rows);
        s
    }
}

/// Scores `imputed` against `truth` on the cells hidden by `mask`.
pub fn evaluate(imputed: &Matrix, truth: &Matrix, mask: &Mask, mi_bins: usize) -> Result<MetricsReport> {
    let rmse = rmse_masked(imputed, truth, mask)?;
    let mae = mae_masked(imputed, truth, mask)?;
    let rmse_pe = rmse_per_entry(imputed, truth, mask)?;
    let mae_pe = mae_per_entry(imputed, truth, mask)?;
    let st = Standardizer::fit(&MaskedDataset::new(truth.clone(), mask.clone())?)?;
    let zi = st.transform(imputed)?;
    let zt = st.transform(truth)?;
    let mmd = mmd_rbf(&zi, &zt, None)?;
    let mi = if truth.cols() <= MAX_MI_DIMS {
        Some(mi_plugin(&zi, mask, mi_bins)?)
    } else {
        None
    };
    Ok(MetricsReport {
        rmse,
        mae,
        rmse_per_entry: rmse_pe,
        mae_per_entry: mae_pe,
        mmd,
        mi,
        masked_cells: mask.missing_count(),
        rows: truth.rows(),
    })
}
