//! Isotropic Gaussian mixtures for synthetic benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{MiriError, Result};
use crate::linalg::Matrix;
use crate::rng::RngState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianMixture {
    pub n: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component standard deviation, shared by every coordinate.
    pub stds: Vec<f64>,
}

impl Default for GaussianMixture {
    /// Two equally weighted clusters `N([−2,−2], 0.5²I)` and `N([2,2], 0.5²I)`, 6000 rows.
    fn default() -> Self {
        GaussianMixture {
            n: 6000,
            weights: vec![0.5, 0.5],
            means: vec![vec![-2.0, -2.0], vec![2.0, 2.0]],
            stds: vec![0.5, 0.5],
        }
    }
}

impl GaussianMixture {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        let fail = |m: String| Err(MiriError::Config(m));
        if k == 0 || self.means.len() != k || self.stds.len() != k {
            return fail(format!(
                "mixture needs matching weights, means and stds (got {}, {}, {})",
                k,
                self.means.len(),
                self.stds.len()
            ));
        }
        if self.n == 0 {
            return fail("mixture sample size must be positive".into());
        }
        let d = self.dim();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return fail("component means must share a positive dimension".into());
        }
        if self.weights.iter().any(|&w| w.is_nan() || w < 0.0) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail(format!("weights must be non-negative and sum to 1, got {:?}", self.weights));
        }
        if self.stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return fail(format!("standard deviations must be positive, got {:?}", self.stds));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return fail("component means must be finite".into());
        }
        Ok(())
    }

    /// `n` rows and the component each row was drawn from.
    pub fn sample(&self, rng: &mut RngState) -> Result<(Matrix, Vec<usize>)> {
        self.validate()?;
        let d = self.dim();
        let mut data = Vec::with_capacity(self.n * d);
        let mut labels = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let u = rng.next_uniform();
            let mut acc = 0.0;
            let mut c = self.weights.len() - 1;
            for (k, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    c = k;
                    break;
                }
            }
            for j in 0..d {
                data.push(self.means[c][j] + self.stds[c] * rng.next_normal());
            }
            labels.push(c);
        }
        Ok((Matrix::from_vec(self.n, d, data)?, labels))
    }
}
