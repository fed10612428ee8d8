//! Partially observed datasets, standardization and the initial fill that starts the
//! imputation iterations.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MiriError, Result};
use crate::linalg::Matrix;
use crate::rng::RngState;

/// Marker stored in a raw observation buffer where a value is missing. The [`Mask`] is the
/// source of truth; this value only keeps missing cells from looking like data.
pub const MISSING: f64 = f64::NAN;

/// Binary missingness mask, `true` = observed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            observed: vec![true; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != rows * cols {
            return Err(MiriError::shape(
                format!("{} mask entries", rows * cols),
                format!("{}", observed.len()),
            ));
        }
        Ok(Mask {
            rows,
            cols,
            observed,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut observed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                observed.push(f(i, j));
            }
        }
        Mask {
            rows,
            cols,
            observed,
        }
    }

    /// Reads a 0/1 matrix; any other value is rejected.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let mut observed = Vec::with_capacity(m.rows() * m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m[(i, j)];
                observed.push(if v == 1.0 {
                    true
                } else if v == 0.0 {
                    false
                } else {
                    return Err(MiriError::Parse {
                        row: i + 1,
                        column: j + 1,
                        message: format!("mask entry {v} is not 0 or 1"),
                    });
                });
            }
        }
        Ok(Mask {
            rows: m.rows(),
            cols: m.cols(),
            observed,
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            if self.is_observed(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[bool] {
        &self.observed[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.observed.len().max(1) as f64
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn row_is_complete(&self, i: usize) -> bool {
        self.row(i).iter().all(|&o| o)
    }

    /// Observation pattern of row `i` as a bit set (bit `j` set = feature `j` observed).
    /// Only meaningful for up to 64 features.
    pub fn pattern(&self, i: usize) -> u64 {
        self.row(i)
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &o)| if o { acc | (1 << j) } else { acc })
    }
}

/// Observed values plus mask. Missing cells of `raw` hold [`MISSING`].
#[derive(Clone, Debug)]
pub struct MaskedDataset {
    raw: Matrix,
    mask: Mask,
    feature_names: Option<Vec<String>>,
    standardized: bool,
}

impl MaskedDataset {
    /// Builds a dataset from a value buffer and mask. Values under a zero mask entry are
    /// discarded; observed values must be finite.
    pub fn new(values: Matrix, mask: Mask) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(MiriError::shape(
                format!("mask of shape {:?}", values.shape()),
                format!("{:?}", mask.shape()),
            ));
        }
        if values.rows() == 0 || values.cols() == 0 {
            return Err(MiriError::Format("dataset has no rows or no columns".into()));
        }
        let mut raw = values;
        for i in 0..raw.rows() {
            for j in 0..raw.cols() {
                if mask.is_observed(i, j) {
                    if !raw[(i, j)].is_finite() {
                        return Err(MiriError::Parse {
                            row: i + 1,
                            column: j + 1,
                            message: "observed value is not finite".into(),
                        });
                    }
                } else {
                    raw[(i, j)] = MISSING;
                }
            }
        }
        Ok(MaskedDataset {
            raw,
            mask,
            feature_names: None,
            standardized: false,
        })
    }

    pub fn with_feature_names(mut self, names: Option<Vec<String>>) -> Result<Self> {
        if let Some(n) = &names {
            if n.len() != self.cols() {
                return Err(MiriError::shape(
                    format!("{} feature names", self.cols()),
                    format!("{}", n.len()),
                ));
            }
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn raw(&self) -> &Matrix {
        &self.raw
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn feature_label(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => names[j].clone(),
            None => format!("column {}", j + 1),
        }
    }

    pub fn rows(&self) -> usize {
        self.raw.rows()
    }

    pub fn cols(&self) -> usize {
        self.raw.cols()
    }

    /// Whether observed values were produced by [`standardize`] (per-feature mean 0, std 1).
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        (0..self.rows())
            .filter(|&i| self.mask.is_observed(i, j))
            .map(|i| self.raw[(i, j)])
            .collect()
    }
}

/// Per-feature affine map to zero mean, unit (population) standard deviation, with moments
/// taken over observed entries only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &MaskedDataset) -> Result<Self> {
        let mut means = Vec::with_capacity(ds.cols());
        let mut stds = Vec::with_capacity(ds.cols());
        for j in 0..ds.cols() {
            let col = ds.observed_column(j);
            if col.len() < 2 {
                return Err(MiriError::Preprocess {
                    feature: ds.feature_label(j),
                    message: format!("{} observed entries, need at least 2", col.len()),
                });
            }
            let (mean, std) = moments(&col);
            if std.is_nan() || std <= 0.0 || std.is_infinite() {
                return Err(MiriError::Preprocess {
                    feature: ds.feature_label(j),
                    message: "observed entries have zero spread".into(),
                });
            }
            means.push(mean);
            stds.push(std);
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        x.ensure_shape(x.rows(), self.dim(), "matrix")?;
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.stds[j]
        }))
    }

    pub fn inverse(&self, z: &Matrix) -> Result<Matrix> {
        z.ensure_shape(z.rows(), self.dim(), "matrix")?;
        Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| {
            z[(i, j)] * self.stds[j] + self.means[j]
        }))
    }
}

/// Mean and population standard deviation, two-pass.
pub(crate) fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes observed entries feature by feature. Missing cells stay missing.
pub fn standardize(ds: &MaskedDataset) -> Result<(MaskedDataset, Standardizer)> {
    let st = Standardizer::fit(ds)?;
    let raw = st.transform(ds.raw())?;
    let mut out = MaskedDataset::new(raw, ds.mask.clone())?.with_feature_names(ds.feature_names.clone())?;
    out.standardized = true;
    Ok((out, st))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// iid `N(0, 1)` draws.
    #[default]
    Normal,
    /// iid `U(0, 1)` draws.
    Uniform,
    /// Per-feature mean of the observed entries.
    Mean,
}

/// A fully filled data matrix together with the mask and the pinned observations it must
/// agree with.
#[derive(Clone, Debug)]
pub struct ImputationState {
    x: Matrix,
    mask: Arc<Mask>,
    pinned: Arc<Matrix>,
    iteration: usize,
}

impl ImputationState {
    /// Fills the missing cells of `ds` with `fill`; observed cells are copied verbatim.
    pub fn from_fill(ds: &MaskedDataset, fill: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut fill = fill;
        let mask = ds.mask();
        let x = Matrix::from_fn(ds.rows(), ds.cols(), |i, j| {
            if mask.is_observed(i, j) {
                ds.raw()[(i, j)]
            } else {
                fill(i, j)
            }
        });
        if !x.is_finite() {
            return Err(MiriError::Config("initial fill produced non-finite values".into()));
        }
        Ok(ImputationState {
            x,
            mask: Arc::new(ds.mask().clone()),
            pinned: Arc::new(ds.raw().clone()),
            iteration: 0,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn into_x(self) -> Matrix {
        self.x
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// The observations, [`MISSING`] where unobserved.
    pub fn pinned(&self) -> &Matrix {
        &self.pinned
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }

    /// Successor state with new values in the missing cells. `update` supplies a full matrix;
    /// its observed cells are ignored and the pinned values are kept instead.
    pub fn advance(&self, update: &Matrix) -> Result<Self> {
        update.ensure_shape(self.rows(), self.cols(), "update")?;
        let x = Matrix::from_fn(self.rows(), self.cols(), |i, j| {
            if self.mask.is_observed(i, j) {
                self.pinned[(i, j)]
            } else {
                update[(i, j)]
            }
        });
        if !x.is_finite() {
            return Err(MiriError::Solver { step: 0 });
        }
        Ok(ImputationState {
            x,
            mask: Arc::clone(&self.mask),
            pinned: Arc::clone(&self.pinned),
            iteration: self.iteration + 1,
        })
    }

    /// Same mask and iteration count with new values and pinned observations, e.g. when
    /// leaving standardized space.
    pub fn remap(&self, x: Matrix, pinned: Matrix) -> Result<Self> {
        x.ensure_shape(self.rows(), self.cols(), "state")?;
        pinned.ensure_shape(self.rows(), self.cols(), "pinned")?;
        let state = ImputationState {
            x,
            mask: Arc::clone(&self.mask),
            pinned: Arc::new(pinned),
            iteration: self.iteration,
        };
        if !state.pinning_holds() {
            return Err(MiriError::shape(
                "observed cells equal to the pinned values",
                "a state that disagrees with them",
            ));
        }
        Ok(state)
    }

    /// `x ⊙ mask == pinned ⊙ mask`, compared bit for bit.
    pub fn pinning_holds(&self) -> bool {
        let cols = self.cols();
        self.x
            .as_slice()
            .iter()
            .zip(self.pinned.as_slice())
            .enumerate()
            .all(|(k, (a, b))| !self.mask.is_observed(k / cols, k % cols) || a.to_bits() == b.to_bits())
    }
}

/// Fills every missing cell according to `strategy`.
///
/// With [`InitStrategy::Mean`] on a standardized dataset the fill is exactly `0.0`.
pub fn initial_impute(
    ds: &MaskedDataset,
    strategy: InitStrategy,
    rng: &mut RngState,
) -> Result<ImputationState> {
    match strategy {
        InitStrategy::Normal => ImputationState::from_fill(ds, |_, _| rng.next_normal()),
        InitStrategy::Uniform => ImputationState::from_fill(ds, |_, _| rng.next_uniform()),
        InitStrategy::Mean => {
            let means: Vec<f64> = if ds.is_standardized() {
                vec![0.0; ds.cols()]
            } else {
                (0..ds.cols())
                    .map(|j| {
                        let col = ds.observed_column(j);
                        if col.is_empty() {
                            0.0
                        } else {
                            col.iter().sum::<f64>() / col.len() as f64
                        }
                    })
                    .collect()
            };
            ImputationState::from_fill(ds, |_, j| means[j])
        }
    }
}

// ---------------------------------------------------------------------------------------------
// CSV

/// How a CSV file is read and written.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    /// Token for a missing value. Empty fields are always treated as missing.
    pub missing_token: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            missing_token: "NaN".into(),
        }
    }
}

/// A parsed numeric table.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub values: Matrix,
    pub mask: Mask,
}

impl CsvTable {
    pub fn into_dataset(self) -> Result<MaskedDataset> {
        MaskedDataset::new(self.values, self.mask)?.with_feature_names(self.header)
    }

    /// The table as a fully observed matrix; fails on the first missing cell.
    pub fn into_complete(self) -> Result<Matrix> {
        if let Some(k) = self.mask.as_slice().iter().position(|&o| !o) {
            let cols = self.mask.cols();
            return Err(MiriError::Parse {
                row: k / cols + 1,
                column: k % cols + 1,
                message: "missing value in a table that must be complete".into(),
            });
        }
        Ok(self.values)
    }
}

fn is_missing(field: &str, opts: &CsvOptions) -> bool {
    let f = field.trim();
    f.is_empty() || f == opts.missing_token || f.eq_ignore_ascii_case("nan")
}

/// Parses a comma-separated numeric table. Lines starting with `#` are comments. The first
/// record is a header when none of its fields is numeric or missing.
pub fn parse_csv(reader: impl Read, opts: &CsvOptions) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut rows = 0;
    for (k, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| MiriError::Format(e.to_string()))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if k == 0
            && record
                .iter()
                .all(|f| f.parse::<f64>().is_err() && !is_missing(f, opts))
        {
            header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(MiriError::Parse {
                row: line,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if is_missing(field, opts) {
                values.push(MISSING);
                observed.push(false);
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    values.push(v);
                    observed.push(true);
                }
                _ => {
                    return Err(MiriError::Parse {
                        row: line,
                        column: j + 1,
                        message: format!("`{field}` is not a number or the missing token"),
                    })
                }
            }
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(MiriError::Format("file contains no data rows".into()));
    }
    Ok(CsvTable {
        header,
        values: Matrix::from_vec(rows, cols, values)?,
        mask: Mask::from_vec(rows, cols, observed)?,
    })
}

pub fn read_csv(path: &Path, opts: &CsvOptions) -> Result<CsvTable> {
    let file = std::fs::File::open(path).map_err(|source| MiriError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv(std::io::BufReader::new(file), opts)
}

/// Reads a dataset in which missing cells hold the missing token (or are empty).
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<MaskedDataset> {
    read_csv(path, opts)?.into_dataset()
}

/// Renders a table. Cells where `mask` is unobserved are written as the missing token; values
/// use the shortest representation that parses back to the same `f64`.
pub fn render_csv(
    values: &Matrix,
    mask: Option<&Mask>,
    header: Option<&[String]>,
    comment: Option<&str>,
    opts: &CsvOptions,
) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    if let Some(h) = header {
        let _ = writeln!(out, "{}", h.join(","));
    }
    for i in 0..values.rows() {
        for j in 0..values.cols() {
            if j > 0 {
                out.push(',');
            }
            if mask.is_some_and(|m| !m.is_observed(i, j)) {
                out.push_str(&opts.missing_token);
            } else {
                let _ = write!(out, "{}", values[(i, j)]);
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `ds` in the layout it was read from.
pub fn write_csv(w: &mut impl Write, ds: &MaskedDataset, comment: Option<&str>, opts: &CsvOptions) -> std::io::Result<()> {
    w.write_all(render_csv(ds.raw(), Some(ds.mask()), ds.feature_names(), comment, opts).as_bytes())
}
