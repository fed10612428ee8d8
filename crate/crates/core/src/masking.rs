//! Synthetic missingness masks (MCAR, MAR, MNAR) for benchmarking.
//!
//! MAR and MNAR masks use a logistic link with unit slope on column-standardized data. The
//! intercept is found by bisection so the expected missing fraction over all cells equals the
//! requested rate.

use serde::{Deserialize, Serialize};

use crate::data::{moments, Mask, MaskedDataset};
use crate::error::{MiriError, Result};
use crate::linalg::Matrix;
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub mechanism: Mechanism,
    /// Target fraction of missing cells, in `(0, 1)`.
    pub rate: f64,
    /// Fraction of features kept fully observed and used as MAR predictors.
    pub cond_fraction: f64,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            mechanism: Mechanism::Mcar,
            rate: 0.3,
            cond_fraction: 0.5,
            seed: 0,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        if !(self.cond_fraction > 0.0 && self.cond_fraction <= 1.0) {
            return Err(MiriError::Config(format!(
                "conditioning fraction must lie in (0, 1], got {}",
                self.cond_fraction
            )));
        }
        Ok(())
    }

    /// Draws a mask for `x_true` using the `seed` field.
    pub fn generate(&self, x_true: &Matrix) -> Result<Mask> {
        self.validate()?;
        let mut rng = RngState::new(self.seed);
        match self.mechanism {
            Mechanism::Mcar => gen_mcar(x_true.rows(), x_true.cols(), self.rate, &mut rng),
            Mechanism::Mar => gen_mar(x_true, self.rate, self.cond_fraction, &mut rng),
            Mechanism::Mnar => gen_mnar(x_true, self.rate, &mut rng),
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(MiriError::Config(format!(
            "missing rate must lie in (0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Each cell independently missing with probability `rate`.
pub fn gen_mcar(n: usize, d: usize, rate: f64, rng: &mut RngState) -> Result<Mask> {
    check_rate(rate)?;
    Ok(Mask::from_fn(n, d, |_, _| rng.next_uniform() >= rate))
}

/// A random `cond_fraction` of the features stays observed; every other cell of row `i` is
/// missing with probability `sigmoid(s_i + b)`, where `s_i` is the sum of the row's
/// standardized conditioning values divided by `√k`.
pub fn gen_mar(x_true: &Matrix, rate: f64, cond_fraction: f64, rng: &mut RngState) -> Result<Mask> {
    check_rate(rate)?;
    let (n, d) = x_true.shape();
    if d < 2 {
        return Err(MiriError::Config("MAR masking needs at least two features".into()));
    }
    if !(cond_fraction > 0.0 && cond_fraction <= 1.0) {
        return Err(MiriError::Config(format!(
            "conditioning fraction must lie in (0, 1], got {cond_fraction}"
        )));
    }
    ensure_complete(x_true)?;
    let k = ((cond_fraction * d as f64).round() as usize).clamp(1, d - 1);
    let maskable_fraction = (d - k) as f64 / d as f64;
    if rate >= maskable_fraction {
        return Err(MiriError::Config(format!(
            "rate {rate} is infeasible when only {} of {d} features may be masked",
            d - k
        )));
    }

    let mut conditioning = vec![false; d];
    for j in rng.sample_indices(d, k) {
        conditioning[j] = true;
    }
    let z = standardize_columns(x_true);
    let scale = (k as f64).sqrt();
    let scores: Vec<f64> = (0..n)
        .map(|i| (0..d).filter(|&j| conditioning[j]).map(|j| z[(i, j)]).sum::<f64>() / scale)
        .collect();
    // Every maskable cell of a row shares its probability, so matching the row mean suffices.
    let intercept = calibrate(&scores, rate / maskable_fraction)?;

    let mut observed = Vec::with_capacity(n * d);
    for &s in &scores {
        let p = sigmoid(s + intercept);
        for &cond in &conditioning {
            let u = rng.next_uniform();
            observed.push(cond || u >= p);
        }
    }
    Mask::from_vec(n, d, observed)
}

/// Self-masking: cell `(i, j)` is missing with probability `sigmoid(z_ij + b)`, `z` being the
/// column-standardized value, so larger values go missing more often.
pub fn gen_mnar(x_true: &Matrix, rate: f64, rng: &mut RngState) -> Result<Mask> {
    check_rate(rate)?;
    ensure_complete(x_true)?;
    let z = standardize_columns(x_true);
    let intercept = calibrate(z.as_slice(), rate)?;
    Ok(Mask::from_fn(x_true.rows(), x_true.cols(), |i, j| {
        rng.next_uniform() >= sigmoid(z[(i, j)] + intercept)
    }))
}

/// Hides the unobserved cells of `x_true`. The caller keeps `x_true` for evaluation.
pub fn apply_mask(x_true: &Matrix, mask: &Mask) -> Result<MaskedDataset> {
    MaskedDataset::new(x_true.clone(), mask.clone())
}

fn ensure_complete(x: &Matrix) -> Result<()> {
    if x.rows() == 0 || !x.is_finite() {
        return Err(MiriError::Config(
            "mask generation needs a non-empty, fully observed matrix".into(),
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn standardize_columns(x: &Matrix) -> Matrix {
    let stats: Vec<(f64, f64)> = (0..x.cols()).map(|j| moments(&x.column(j))).collect();
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let (m, s) = stats[j];
        if s > 0.0 {
            (x[(i, j)] - m) / s
        } else {
            0.0
        }
    })
}

/// Intercept `b` with `mean_i sigmoid(scores_i + b) = target`, by bisection.
fn calibrate(scores: &[f64], target: f64) -> Result<f64> {
    let mean_p = |b: f64| scores.iter().map(|&s| sigmoid(s + b)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(mean_p(lo) < target && target < mean_p(hi)) {
        return Err(MiriError::Config(format!(
            "cannot calibrate a logistic mask to rate {target}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
