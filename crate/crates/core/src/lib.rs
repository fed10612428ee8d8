//! Missing-data imputation by mutual-information-reducing iterations.
//!
//! Each outer iteration trains a mask-conditioned rectified-flow velocity field on the
//! current imputed data, then re-imputes the missing cells by integrating the field with the
//! observed coordinates held fixed. Repeating this drives the imputed data towards
//! independence from its missingness pattern.
//!
//! ```no_run
//! use miri_core::{load_csv, run_miri, CsvOptions, MiriConfig};
//!
//! let ds = load_csv("observed.csv".as_ref(), &CsvOptions::default())?;
//! let out = run_miri(&ds, &MiriConfig::default(), None)?;
//! println!("{:?}", out.imputed());
//! # Ok::<(), miri_core::MiriError>(())
//! ```

pub mod data;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod linalg;
pub mod masking;
pub mod metrics;
pub mod miri;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synth;

pub use data::{
    initial_impute, load_csv, parse_csv, read_csv, render_csv, standardize, write_csv, CsvOptions, CsvTable,
    ImputationState, InitStrategy, Mask, MaskedDataset, Standardizer, MISSING,
};
pub use error::{MiriError, Result};
pub use experiment::{ToyExperiment, ToyRun};
pub use flow::{
    draw_flow_batch, euler_solve, impute_once, train_velocity, velocity_input, FlowBatch, VelocityField, VelocityModel,
};
pub use linalg::Matrix;
pub use masking::{apply_mask, gen_mar, gen_mcar, gen_mnar, MaskSpec, Mechanism};
pub use metrics::{evaluate, mae_masked, mi_plugin, mmd_rbf, rmse_masked, MetricsReport};
pub use miri::{run_miri, run_miri_observed, run_multiple, DiagnosticsTrace, IterationRecord, MiriConfig, MiriOutput};
pub use nn::{Activation, MlpParams};
pub use optim::{adam_step, OptimizerState};
pub use rng::RngState;
pub use synth::GaussianMixture;
