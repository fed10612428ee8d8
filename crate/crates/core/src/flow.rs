//! Mask-conditioned rectified flow: training pairs, the velocity regression, and the projected
//! Euler integration that moves only the missing coordinates.
//!
//! The velocity network sees a `4d + 1` vector per row, laid out as
//!
//! ```text
//! [ (1-m)⊙x_τ | m⊙x₀ | m⊙x₁ | m | τ ]
//! ```
//!
//! During training `x₀` and `x₁` are independent rows of the current imputed data; during
//! imputation both conditioning slots carry the row's observed values.

use std::io::{BufRead, Write};

use crate::data::{ImputationState, Mask};
use crate::error::{MiriError, Result};
use crate::linalg::Matrix;
use crate::miri::MiriConfig;
use crate::nn::{Activation, MlpParams};
use crate::optim::{adam_step, OptimizerState};
use crate::rng::RngState;

/// Rows integrated together by [`euler_solve`].
const SOLVE_CHUNK: usize = 1024;

/// Anything that maps a batch of `4d + 1` conditioned inputs to `d` velocities.
pub trait VelocityField {
    fn data_dim(&self) -> usize;

    fn predict(&self, inputs: &Matrix) -> Result<Matrix>;
}

/// Width of the conditioned input for `d` features.
pub fn input_dim(d: usize) -> usize {
    4 * d + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    params: MlpParams,
    dim: usize,
}

impl VelocityModel {
    pub fn new(params: MlpParams) -> Result<Self> {
        let dim = params.output_dim();
        if params.input_dim() != input_dim(dim) {
            return Err(MiriError::shape(
                format!("network input of width {} for {dim} features", input_dim(dim)),
                format!("width {}", params.input_dim()),
            ));
        }
        Ok(VelocityModel { params, dim })
    }

    pub fn init(dim: usize, hidden: &[usize], activation: Activation, rng: &mut RngState) -> Result<Self> {
        let mut sizes = vec![input_dim(dim)];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        Self::new(MlpParams::init(&sizes, activation, rng)?)
    }

    pub fn params(&self) -> &MlpParams {
        &self.params
    }

    /// Text checkpoint: a `miri-velocity 1` line, `activation <name>`, `sizes <w0> <w1> ...`,
    /// `params <count>`, then one parameter per line in [`MlpParams::chunks`] order.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "miri-velocity 1")?;
        writeln!(w, "activation {}", self.params.activation().name())?;
        let sizes: Vec<String> = self.params.sizes().iter().map(usize::to_string).collect();
        writeln!(w, "sizes {}", sizes.join(" "))?;
        writeln!(w, "params {}", self.params.num_params())?;
        for v in self.params.chunks().flatten() {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: impl BufRead) -> Result<Self> {
        let bad = |msg: &str| MiriError::Checkpoint(msg.to_string());
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("truncated checkpoint"))?
                .map_err(|e| MiriError::Checkpoint(e.to_string()))
        };
        if next()?.trim() != "miri-velocity 1" {
            return Err(bad("unrecognized checkpoint header"));
        }
        let act_line = next()?;
        let activation = act_line
            .strip_prefix("activation ")
            .and_then(|a| Activation::from_name(a.trim()))
            .ok_or_else(|| bad("bad activation line"))?;
        let sizes_line = next()?;
        let sizes: Vec<usize> = sizes_line
            .strip_prefix("sizes ")
            .ok_or_else(|| bad("bad sizes line"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad layer width")))
            .collect::<Result<_>>()?;
        let count: usize = next()?
            .strip_prefix("params ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad("bad params line"))?;
        let mut flat = Vec::with_capacity(count);
        for _ in 0..count {
            flat.push(next()?.trim().parse::<f64>().map_err(|_| bad("bad parameter value"))?);
        }
        Self::new(MlpParams::from_flat(&sizes, activation, &flat)?)
    }
}

impl VelocityField for VelocityModel {
    fn data_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        self.params.forward(inputs)
    }
}

/// Writes the conditioned input for one row into `out` (length `4d + 1`).
pub fn write_velocity_input(
    x_tau: &[f64],
    x0: &[f64],
    x1: &[f64],
    mask: &[bool],
    tau: f64,
    out: &mut [f64],
) {
    let d = mask.len();
    debug_assert!(x_tau.len() == d && x0.len() == d && x1.len() == d && out.len() == 4 * d + 1);
    for j in 0..d {
        let observed = mask[j];
        out[j] = if observed { 0.0 } else { x_tau[j] };
        out[d + j] = if observed { x0[j] } else { 0.0 };
        out[2 * d + j] = if observed { x1[j] } else { 0.0 };
        out[3 * d + j] = if observed { 1.0 } else { 0.0 };
    }
    out[4 * d] = tau;
}

pub fn velocity_input(x_tau: &[f64], x0: &[f64], x1: &[f64], mask: &[bool], tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; input_dim(mask.len())];
    write_velocity_input(x_tau, x0, x1, mask, tau, &mut out);
    out
}

/// One minibatch of training pairs.
#[derive(Clone, Debug)]
pub struct FlowBatch {
    pub x0: Matrix,
    pub m0: Mask,
    pub x1: Matrix,
    pub tau: Vec<f64>,
    pub x_tau: Matrix,
    /// Regression target `x₁ − x₀`.
    pub y: Matrix,
}

impl FlowBatch {
    /// Builds the batch from explicit endpoints and times.
    pub fn from_parts(x0: Matrix, m0: Mask, x1: Matrix, tau: Vec<f64>) -> Result<Self> {
        let (b, d) = x0.shape();
        x1.ensure_shape(b, d, "x1")?;
        if m0.shape() != (b, d) || tau.len() != b {
            return Err(MiriError::shape(format!("{b} mask rows and times"), "mismatched batch"));
        }
        let x_tau = Matrix::from_fn(b, d, |i, j| (1.0 - tau[i]) * x0[(i, j)] + tau[i] * x1[(i, j)]);
        let y = Matrix::from_fn(b, d, |i, j| x1[(i, j)] - x0[(i, j)]);
        Ok(FlowBatch {
            x0,
            m0,
            x1,
            tau,
            x_tau,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Network inputs, one conditioned row per pair.
    pub fn inputs(&self) -> Matrix {
        let d = self.x0.cols();
        let width = input_dim(d);
        let mut data = vec![0.0; self.len() * width];
        for (i, out) in data.chunks_exact_mut(width).enumerate() {
            write_velocity_input(
                self.x_tau.row(i),
                self.x0.row(i),
                self.x1.row(i),
                self.m0.row(i),
                self.tau[i],
                out,
            );
        }
        Matrix::from_vec(self.len(), width, data).expect("width matches")
    }
}

/// Draws `(x₀, m₀)` jointly from the state and `x₁` from an independent shuffle of the same
/// rows, with one `τ ~ U(0, 1)` per pair.
pub fn draw_flow_batch(state: &ImputationState, batch_size: usize, rng: &mut RngState) -> Result<FlowBatch> {
    let n = state.rows();
    if batch_size == 0 || batch_size > n {
        return Err(MiriError::Config(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    let src = rng.sample_indices(n, batch_size);
    let dst = rng.sample_indices(n, batch_size);
    let tau = rng.uniform(batch_size);
    let d = state.cols();
    let mut observed = Vec::with_capacity(batch_size * d);
    for &i in &src {
        observed.extend_from_slice(state.mask().row(i));
    }
    FlowBatch::from_parts(
        state.x().select_rows(&src),
        Mask::from_vec(batch_size, d, observed)?,
        state.x().select_rows(&dst),
        tau,
    )
}

/// A trained velocity network with its per-step training losses.
#[derive(Clone, Debug)]
pub struct TrainedVelocity {
    pub model: VelocityModel,
    pub losses: Vec<f64>,
}

/// Fits the velocity network for `cfg.steps` Adam steps on batches of `cfg.batch_size` pairs.
/// Starts from `warm_start` when given, otherwise from a fresh initialization.
pub fn train_velocity(
    state: &ImputationState,
    cfg: &MiriConfig,
    rng: &mut RngState,
    warm_start: Option<&VelocityModel>,
) -> Result<TrainedVelocity> {
    if !state.x().is_finite() {
        return Err(MiriError::Training {
            step: 0,
            message: "imputed data contains non-finite values".into(),
        });
    }
    let d = state.cols();
    let mut model = match warm_start {
        Some(m) if m.data_dim() == d => m.clone(),
        _ => VelocityModel::init(d, &cfg.hidden, cfg.activation, rng)?,
    };
    let mut opt = OptimizerState::new(&model.params, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let batch = draw_flow_batch(state, cfg.batch_size, rng)?;
        let (loss, grads) = model.params.loss_grad(&batch.inputs(), &batch.y)?;
        if !loss.is_finite() {
            return Err(MiriError::Training {
                step,
                message: format!("loss is {loss}"),
            });
        }
        adam_step(&mut model.params, &grads, &mut opt).map_err(|e| match e {
            MiriError::Training { message, .. } => MiriError::Training { step, message },
            other => other,
        })?;
        losses.push(loss);
    }
    Ok(TrainedVelocity { model, losses })
}

/// Integrates `dz/dτ = (1−m)⊙v(z, m⊙x₀, m⊙x₀, m, τ)` from `z = x_init` over `steps` Euler
/// steps, evaluating the field at `τ = k/steps` for `k = 1..=steps`. Observed coordinates and
/// complete rows are returned untouched.
pub fn euler_solve(model: &impl VelocityField, x_init: &Matrix, mask: &Mask, steps: usize) -> Result<Matrix> {
    let (n, d) = x_init.shape();
    if steps == 0 {
        return Err(MiriError::Config("Euler solver needs at least one step".into()));
    }
    if mask.shape() != (n, d) {
        return Err(MiriError::shape(format!("mask of shape {:?}", (n, d)), format!("{:?}", mask.shape())));
    }
    if model.data_dim() != d {
        return Err(MiriError::shape(
            format!("velocity field over {d} features"),
            format!("{} features", model.data_dim()),
        ));
    }
    if !x_init.is_finite() {
        return Err(MiriError::Solver { step: 0 });
    }

    let mut out = x_init.clone();
    let active: Vec<usize> = (0..n).filter(|&i| !mask.row_is_complete(i)).collect();
    let h = 1.0 / steps as f64;
    let width = input_dim(d);
    for rows in active.chunks(SOLVE_CHUNK) {
        let cond = x_init.select_rows(rows);
        let mut z = cond.clone();
        let mut inputs = Matrix::zeros(rows.len(), width);
        for k in 1..=steps {
            let tau = k as f64 / steps as f64;
            for (r, &i) in rows.iter().enumerate() {
                let m = mask.row(i);
                write_velocity_input(z.row(r), cond.row(r), cond.row(r), m, tau, inputs.row_mut(r));
            }
            let v = model.predict(&inputs)?;
            for (r, &i) in rows.iter().enumerate() {
                let m = mask.row(i);
                let vr = v.row(r);
                for (j, zj) in z.row_mut(r).iter_mut().enumerate() {
                    if !m[j] {
                        *zj += h * vr[j];
                    }
                }
            }
            if !z.is_finite() {
                return Err(MiriError::Solver { step: k });
            }
        }
        for (r, &i) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(z.row(r));
        }
    }
    Ok(out)
}

/// One imputation sweep: integrate from the current values and keep the result in the missing
/// cells only.
pub fn impute_once(state: &ImputationState, model: &impl VelocityField, steps: usize) -> Result<ImputationState> {
    let z = euler_solve(model, state.x(), state.mask(), steps)?;
    state.advance(&z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{initial_impute, InitStrategy, MaskedDataset};

    #[test]
    fn input_layout_all_observed() {
        let v = velocity_input(&[9.0, 9.0], &[1.0, 2.0], &[3.0, 4.0], &[true, true], 0.25);
        assert_eq!(v, vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 1.0, 1.0, 0.25]);
    }

    #[test]
    fn input_layout_all_missing() {
        let v = velocity_input(&[7.0, 8.0], &[1.0, 2.0], &[3.0, 4.0], &[false, false], 0.75);
        assert_eq!(v, vec![7.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.75]);
    }

    #[test]
    fn input_layout_hand_example() {
        let v = velocity_input(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0], &[true, false], 0.5);
        assert_eq!(v, vec![0.0, 2.0, 3.0, 0.0, 5.0, 0.0, 1.0, 0.0, 0.5]);
    }

    #[test]
    fn interpolation_endpoints() {
        let x0 = Matrix::from_rows(&[[0.1, -0.3], [2.5, 1.0]]);
        let x1 = Matrix::from_rows(&[[1.7, 0.9], [-4.0, 3.3]]);
        let b = FlowBatch::from_parts(x0.clone(), Mask::all_observed(2, 2), x1.clone(), vec![0.0, 1.0]).unwrap();
        assert_eq!(b.x_tau.row(0), x0.row(0));
        assert_eq!(b.x_tau.row(1), x1.row(1));
        assert_eq!(b.y.row(1), &[-6.5, 3.3 - 1.0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngState::new(3);
        let m = VelocityModel::init(3, &[8, 5], Activation::Silu, &mut rng).unwrap();
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = VelocityModel::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(m, back);
        assert!(VelocityModel::read_checkpoint(&b"miri-velocity 2\n"[..]).is_err());
        let truncated = &buf[..buf.len() / 2];
        assert!(VelocityModel::read_checkpoint(truncated).is_err());
    }

    #[test]
    fn model_rejects_wrong_input_width() {
        let p = MlpParams::zeros(&[5, 4, 2], Activation::Silu).unwrap();
        assert!(VelocityModel::new(p).is_err());
    }

    #[test]
    fn batch_size_bounds() {
        let ds = MaskedDataset::new(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]), Mask::all_observed(2, 2)).unwrap();
        let st = initial_impute(&ds, InitStrategy::Normal, &mut RngState::new(0)).unwrap();
        let mut rng = RngState::new(0);
        assert!(draw_flow_batch(&st, 3, &mut rng).is_err());
        assert!(draw_flow_batch(&st, 0, &mut rng).is_err());
        let b = draw_flow_batch(&st, 2, &mut rng).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.tau.iter().all(|t| (0.0..1.0).contains(t)));
    }
}
