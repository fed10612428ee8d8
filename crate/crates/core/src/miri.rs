//! The outer imputation loop: standardize, fill, then alternate velocity training and
//! re-imputation for a fixed number of iterations.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{initial_impute, standardize, ImputationState, InitStrategy, MaskedDataset};
use crate::error::{MiriError, Result};
use crate::flow::{impute_once, train_velocity, VelocityModel};
use crate::linalg::Matrix;
use crate::metrics::{mae_masked, mi_plugin, mmd_rbf, rmse_masked, MAX_MI_DIMS};
use crate::nn::Activation;
use crate::rng::RngState;

/// Hyperparameters of one imputation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiriConfig {
    /// Outer iterations.
    pub iterations: usize,
    /// Optimizer steps per iteration.
    pub steps: usize,
    pub batch_size: usize,
    pub euler_steps: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub init: InitStrategy,
    pub seed: u64,
    /// Continue from the previous iteration's network instead of a fresh one.
    pub warm_start: bool,
    /// Bins per dimension for the MI diagnostic.
    pub mi_bins: usize,
}

impl Default for MiriConfig {
    fn default() -> Self {
        MiriConfig {
            iterations: 10,
            steps: 2000,
            batch_size: 256,
            euler_steps: 100,
            hidden: vec![128, 128, 128],
            activation: Activation::Silu,
            learning_rate: 1e-3,
            init: InitStrategy::Normal,
            seed: 0,
            warm_start: false,
            mi_bins: 8,
        }
    }
}

impl MiriConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(MiriError::Config(m));
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.steps == 0 {
            return fail("steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.euler_steps == 0 {
            return fail("euler_steps must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return fail(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.mi_bins < 2 {
            return fail(format!("mi_bins must be at least 2, got {}", self.mi_bins));
        }
        Ok(())
    }

    pub fn validate_for(&self, ds: &MaskedDataset) -> Result<()> {
        self.validate()?;
        if self.batch_size > ds.rows() {
            return Err(MiriError::Config(format!(
                "batch_size {} exceeds the {} rows of the dataset",
                self.batch_size,
                ds.rows()
            )));
        }
        Ok(())
    }
}

/// Diagnostics of the state after one iteration (iteration 0 is the initial fill). Metrics are
/// in standardized space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean training loss over the last tenth of the optimizer steps.
    pub loss: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub mmd: Option<f64>,
    pub mi: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsTrace {
    /// Diagnostics of the initial fill.
    pub initial: Option<IterationRecord>,
    /// One record per completed iteration, in order.
    pub records: Vec<IterationRecord>,
}

impl DiagnosticsTrace {
    /// Initial record followed by the per-iteration records.
    pub fn all(&self) -> impl Iterator<Item = &IterationRecord> {
        self.initial.iter().chain(&self.records)
    }

    pub fn series(&self, f: impl Fn(&IterationRecord) -> Option<f64>) -> Vec<(usize, f64)> {
        self.all().filter_map(|r| f(r).map(|v| (r.iteration, v))).collect()
    }

    /// CSV with header `iteration,loss,rmse,mae,mmd,mi`; unavailable values are `NaN`.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(s, "# {line}");
            }
        }
        s.push_str("iteration,loss,rmse,mae,mmd,mi\n");
        let cell = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        for r in self.all() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iteration,
                cell(r.loss),
                cell(r.rmse),
                cell(r.mae),
                cell(r.mmd),
                cell(r.mi)
            );
        }
        s
    }
}

/// Result of a run: the final state in the original units and its diagnostics.
#[derive(Clone, Debug)]
pub struct MiriOutput {
    pub state: ImputationState,
    pub trace: DiagnosticsTrace,
}

impl MiriOutput {
    pub fn imputed(&self) -> &Matrix {
        self.state.x()
    }
}

pub fn run_miri(ds: &MaskedDataset, cfg: &MiriConfig, ground_truth: Option<&Matrix>) -> Result<MiriOutput> {
    run_miri_observed(ds, cfg, ground_truth, |_| {})
}

/// [`run_miri`], calling `observe` with the standardized state after the initial fill and after
/// every iteration.
pub fn run_miri_observed(
    ds: &MaskedDataset,
    cfg: &MiriConfig,
    ground_truth: Option<&Matrix>,
    mut observe: impl FnMut(&ImputationState),
) -> Result<MiriOutput> {
    cfg.validate_for(ds)?;
    if let Some(t) = ground_truth {
        t.ensure_shape(ds.rows(), ds.cols(), "ground truth")?;
        if !t.is_finite() {
            return Err(MiriError::Config("ground truth must be fully observed".into()));
        }
    }
    let mut rng = RngState::new(cfg.seed);
    let (sds, standardizer) = standardize(ds)?;
    let truth = ground_truth.map(|t| standardizer.transform(t)).transpose()?;

    let mut state = initial_impute(&sds, cfg.init, &mut rng)?;
    observe(&state);
    let mut trace = DiagnosticsTrace {
        initial: Some(diagnostics(&state, truth.as_ref(), None, cfg)?),
        records: Vec::with_capacity(cfg.iterations),
    };

    let nothing_missing = ds.mask().is_fully_observed();
    let mut previous: Option<VelocityModel> = None;
    for t in 1..=cfg.iterations {
        let annotate = |e: MiriError| MiriError::Iteration {
            iteration: t,
            source: Box::new(e),
        };
        let loss = if nothing_missing {
            state = state.advance(state.x()).map_err(annotate)?;
            None
        } else {
            let warm = if cfg.warm_start { previous.as_ref() } else { None };
            let trained = train_velocity(&state, cfg, &mut rng, warm).map_err(annotate)?;
            state = impute_once(&state, &trained.model, cfg.euler_steps).map_err(annotate)?;
            let tail = (trained.losses.len() / 10).max(1);
            let recent = &trained.losses[trained.losses.len() - tail..];
            previous = Some(trained.model);
            Some(recent.iter().sum::<f64>() / recent.len() as f64)
        };
        observe(&state);
        trace
            .records
            .push(diagnostics(&state, truth.as_ref(), loss, cfg).map_err(annotate)?);
    }

    // Observed cells come straight from the input so they survive the round trip bit for bit.
    let values = standardizer.inverse(state.x())?;
    let mask = ds.mask();
    let x = Matrix::from_fn(ds.rows(), ds.cols(), |i, j| {
        if mask.is_observed(i, j) {
            ds.raw()[(i, j)]
        } else {
            values[(i, j)]
        }
    });
    let state = state.remap(x, ds.raw().clone())?;
    Ok(MiriOutput { state, trace })
}

fn diagnostics(
    state: &ImputationState,
    truth: Option<&Matrix>,
    loss: Option<f64>,
    cfg: &MiriConfig,
) -> Result<IterationRecord> {
    let x = state.x();
    let mask = state.mask();
    let (rmse, mae, mmd) = match truth {
        Some(t) => {
            let (rmse, mae) = if mask.is_fully_observed() {
                (0.0, 0.0)
            } else {
                (rmse_masked(x, t, mask)?, mae_masked(x, t, mask)?)
            };
            let mmd = if x.rows() >= 2 { Some(mmd_rbf(x, t, None)?) } else { None };
            (Some(rmse), Some(mae), mmd)
        }
        None => (None, None, None),
    };
    let mi = if x.cols() <= MAX_MI_DIMS {
        Some(mi_plugin(x, mask, cfg.mi_bins)?)
    } else {
        None
    };
    Ok(IterationRecord {
        iteration: state.iteration(),
        loss,
        rmse,
        mae,
        mmd,
        mi,
    })
}

/// `k` independent runs with seeds `cfg.seed, cfg.seed + 1, ...`. Runs execute on the current
/// rayon pool.
pub fn run_multiple(
    ds: &MaskedDataset,
    cfg: &MiriConfig,
    ground_truth: Option<&Matrix>,
    k: usize,
) -> Result<Vec<MiriOutput>> {
    if k == 0 {
        return Err(MiriError::Config("need at least one imputation".into()));
    }
    (0..k as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = MiriConfig {
                seed: cfg.seed.wrapping_add(r),
                ..cfg.clone()
            };
            run_miri(ds, &cfg, ground_truth)
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn trend_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Mask;

    fn small_cfg() -> MiriConfig {
        MiriConfig {
            iterations: 2,
            steps: 30,
            batch_size: 16,
            euler_steps: 5,
            hidden: vec![8],
            ..MiriConfig::default()
        }
    }

    fn dataset(seed: u64) -> (Matrix, MaskedDataset) {
        let mut rng = RngState::new(seed);
        let x = Matrix::from_vec(60, 2, rng.normal(120)).unwrap();
        let mask = Mask::from_fn(60, 2, |i, j| (i + 2 * j) % 5 != 0);
        let ds = MaskedDataset::new(x.clone(), mask).unwrap();
        (x, ds)
    }

    #[test]
    fn config_validation() {
        let (_, ds) = dataset(0);
        assert!(MiriConfig::default().validate().is_ok());
        for bad in [
            MiriConfig { iterations: 0, ..small_cfg() },
            MiriConfig { steps: 0, ..small_cfg() },
            MiriConfig { euler_steps: 0, ..small_cfg() },
            MiriConfig { batch_size: 61, ..small_cfg() },
            MiriConfig { learning_rate: -1.0, ..small_cfg() },
        ] {
            assert!(matches!(run_miri(&ds, &bad, None), Err(MiriError::Config(_))));
        }
    }

    #[test]
    fn observed_cells_survive_bitwise() {
        let (x, ds) = dataset(1);
        let out = run_miri(&ds, &small_cfg(), Some(&x)).unwrap();
        for i in 0..60 {
            for j in 0..2 {
                if ds.mask().is_observed(i, j) {
                    assert_eq!(out.imputed()[(i, j)].to_bits(), x[(i, j)].to_bits());
                }
            }
        }
        assert!(out.imputed().is_finite());
        assert_eq!(out.trace.records.len(), 2);
        assert_eq!(out.trace.initial.as_ref().unwrap().iteration, 0);
        assert!(out.trace.records.iter().all(|r| r.loss.is_some() && r.mmd.is_some()));
    }

    #[test]
    fn fully_observed_input_is_returned() {
        let mut rng = RngState::new(2);
        let x = Matrix::from_vec(30, 2, rng.normal(60)).unwrap();
        let ds = MaskedDataset::new(x.clone(), Mask::all_observed(30, 2)).unwrap();
        let cfg = MiriConfig { iterations: 3, ..small_cfg() };
        let out = run_miri(&ds, &cfg, Some(&x)).unwrap();
        assert_eq!(out.imputed(), &x);
        assert_eq!(out.trace.records.len(), 3);
        assert!(out.trace.records.iter().all(|r| r.rmse == Some(0.0) && r.mi == Some(0.0)));
    }

    #[test]
    fn identical_seed_is_deterministic() {
        let (x, ds) = dataset(3);
        let a = run_miri(&ds, &small_cfg(), Some(&x)).unwrap();
        let b = run_miri(&ds, &small_cfg(), Some(&x)).unwrap();
        assert_eq!(a.imputed(), b.imputed());
        assert_eq!(a.trace.to_csv(None), b.trace.to_csv(None));
    }

    #[test]
    fn multiple_imputation_seeds() {
        let (x, ds) = dataset(4);
        let runs = run_multiple(&ds, &small_cfg(), Some(&x), 2).unwrap();
        let single = run_miri(&ds, &small_cfg(), Some(&x)).unwrap();
        assert_eq!(runs[0].imputed(), single.imputed());
        assert_ne!(runs[0].imputed(), runs[1].imputed());
        assert!(run_multiple(&ds, &small_cfg(), None, 0).is_err());
    }

    #[test]
    fn warm_start_runs() {
        let (_, ds) = dataset(5);
        let cfg = MiriConfig { warm_start: true, ..small_cfg() };
        let out = run_miri(&ds, &cfg, None).unwrap();
        assert!(out.trace.records.iter().all(|r| r.rmse.is_none() && r.mi.is_some()));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = DiagnosticsTrace {
            initial: Some(IterationRecord { iteration: 0, loss: None, rmse: Some(1.0), mae: Some(0.5), mmd: Some(0.2), mi: Some(0.1) }),
            records: vec![IterationRecord { iteration: 1, loss: Some(0.9), rmse: Some(0.8), mae: Some(0.4), mmd: Some(0.05), mi: Some(0.01) }],
        };
        assert_eq!(
            trace.to_csv(Some("seed=1")),
            "# seed=1\niteration,loss,rmse,mae,mmd,mi\n0,NaN,1,0.5,0.2,0.1\n1,0.9,0.8,0.4,0.05,0.01\n"
        );
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<(usize, f64)> = (0..5).map(|i| (i, 3.0 - 0.5 * i as f64)).collect();
        assert!((trend_slope(&pts) + 0.5).abs() < 1e-12);
    }
}
