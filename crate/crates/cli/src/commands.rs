//! The subcommands, each writing its files into an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use miri_core::experiment::{mean_std, TOY_REFERENCE};
use miri_core::{
    apply_mask, evaluate, read_csv, render_csv, run_miri, CsvTable, Mask, MaskSpec, MaskedDataset, Matrix,
    MetricsReport, MiriConfig, RngState, ToyExperiment,
};
use rayon::prelude::*;

use crate::config::{MetricToggles, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, with_header, write_atomic, Provenance};

pub const TRUTH: &str = "truth.csv";
pub const MASK: &str = "mask.csv";
pub const OBSERVED: &str = "observed.csv";
pub const IMPUTED: &str = "imputed.csv";
pub const TRACE: &str = "trace.csv";
pub const METRICS: &str = "metrics.txt";
pub const SUMMARY: &str = "summary.txt";

/// A resolved configuration with the seed of this run.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig, seed: Option<u64>) -> Self {
        let seed = seed.unwrap_or(cfg.seed);
        let hash = cfg.hash();
        Context { cfg, seed, hash }
    }

    fn provenance(&self, command: &'static str) -> Provenance {
        Provenance {
            command,
            seed: self.seed,
            config_hash: self.hash.clone(),
        }
    }

    fn with_seed(&self, seed: u64) -> Self {
        Context { seed, ..self.clone() }
    }
}

pub fn read_table(path: &Path, ctx: &Context) -> Result<CsvTable, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("input file not found: {}", path.display())));
    }
    Ok(read_csv(path, &ctx.cfg.data)?)
}

/// A table that must have no missing cells.
pub fn read_complete(path: &Path, ctx: &Context) -> Result<(Matrix, Option<Vec<String>>), CliError> {
    let table = read_table(path, ctx)?;
    let header = table.header.clone();
    let values = table
        .into_complete()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((values, header))
}

fn default_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// Samples the configured mixture into `truth.csv`.
pub fn synth(ctx: &Context, out: &Path) -> Result<Matrix, CliError> {
    ctx.cfg.synth.validate()?;
    let (data_seed, _, _) = ToyExperiment::seeds(ctx.seed);
    let (x, _) = ctx.cfg.synth.sample(&mut RngState::new(data_seed))?;
    ensure_dir(out)?;
    let comment = ctx.provenance("synth").comment();
    let text = render_csv(&x, None, Some(&default_header(x.cols())), Some(&comment), &ctx.cfg.data);
    write_atomic(&out.join(TRUTH), &text)?;
    Ok(x)
}

/// Hides cells of `truth`, writing the 0/1 mask and the observed table with missing tokens.
pub fn mask(ctx: &Context, truth: &Matrix, header: Option<Vec<String>>, out: &Path) -> Result<MaskedDataset, CliError> {
    let (_, mask_seed, _) = ToyExperiment::seeds(ctx.seed);
    let spec = MaskSpec {
        seed: mask_seed,
        ..ctx.cfg.mask.clone()
    };
    spec.validate()?;
    let m = spec.generate(truth)?;
    let header = header.unwrap_or_else(|| default_header(truth.cols()));
    let ds = apply_mask(truth, &m)?.with_feature_names(Some(header.clone()))?;
    ensure_dir(out)?;
    let comment = ctx.provenance("mask").comment();
    let opts = &ctx.cfg.data;
    write_atomic(&out.join(MASK), &render_csv(&m.to_matrix(), None, Some(&header), Some(&comment), opts))?;
    write_atomic(
        &out.join(OBSERVED),
        &render_csv(ds.raw(), Some(ds.mask()), Some(&header), Some(&comment), opts),
    )?;
    Ok(ds)
}

/// Runs the imputer and writes `imputed.csv`, `trace.csv` and, given the truth, `metrics.txt`.
/// Returns the metrics when they were computed.
pub fn impute(ctx: &Context, ds: &MaskedDataset, truth: Option<&Matrix>, out: &Path) -> Result<Option<MetricsReport>, CliError> {
    let (_, _, miri_seed) = ToyExperiment::seeds(ctx.seed);
    let cfg = MiriConfig {
        seed: miri_seed,
        ..ctx.cfg.miri.clone()
    };
    if let Some(t) = truth {
        if t.shape() != (ds.rows(), ds.cols()) {
            return Err(CliError::Usage(format!(
                "truth has shape {:?}, data has {:?}",
                t.shape(),
                (ds.rows(), ds.cols())
            )));
        }
    }
    let output = run_miri(ds, &cfg, truth)?;
    let report = match truth {
        Some(t) if !ds.mask().is_fully_observed() => Some(evaluate(output.imputed(), t, ds.mask(), cfg.mi_bins)?),
        _ => None,
    };

    ensure_dir(out)?;
    let prov = ctx.provenance("impute");
    let comment = prov.comment();
    let header = ds.feature_names().map(<[String]>::to_vec);
    write_atomic(
        &out.join(IMPUTED),
        &render_csv(output.imputed(), None, header.as_deref(), Some(&comment), &ctx.cfg.data),
    )?;
    write_atomic(&out.join(TRACE), &output.trace.to_csv(Some(&comment)))?;
    if let Some(r) = &report {
        write_atomic(&out.join(METRICS), &with_header(&prov, &record(r, &ctx.cfg.metrics)))?;
    }
    Ok(report)
}

/// Scores an imputed table; writes `metrics.txt` when `out` is given.
pub fn eval(
    ctx: &Context,
    imputed: &Matrix,
    truth: &Matrix,
    mask: &Mask,
    out: Option<&Path>,
) -> Result<MetricsReport, CliError> {
    let report = evaluate(imputed, truth, mask, ctx.cfg.miri.mi_bins)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(
            &dir.join(METRICS),
            &with_header(&ctx.provenance("eval"), &record(&report, &ctx.cfg.metrics)),
        )?;
    }
    Ok(report)
}

/// `key = value` lines, without the metrics switched off in the configuration.
pub fn record(report: &MetricsReport, toggles: &MetricToggles) -> String {
    let mut r = report.clone();
    if !toggles.mi {
        r.mi = None;
    }
    r.to_record()
        .lines()
        .filter(|l| toggles.mmd || !l.starts_with("mmd "))
        .fold(String::new(), |mut s, l| {
            s.push_str(l);
            s.push('\n');
            s
        })
}

/// Per-seed outputs land in `out/seed-<s>/`.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Runs synth, mask, impute and eval for every seed and returns the summary table.
pub fn repro_toy(ctx: &Context, seeds: &[u64], out: &Path) -> Result<String, CliError> {
    if seeds.is_empty() {
        return Err(CliError::Usage("need at least one seed".into()));
    }
    ensure_dir(out)?;
    let reports = seeds
        .par_iter()
        .map(|&s| {
            let ctx = ctx.with_seed(s);
            let dir = seed_dir(out, s);
            let truth = synth(&ctx, &dir)?;
            let ds = mask(&ctx, &truth, None, &dir)?;
            impute(&ctx, &ds, Some(&truth), &dir)?
                .ok_or_else(|| CliError::Usage("mask hides no cells; nothing to evaluate".into()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let table = summary_table(seeds, &reports);
    write_atomic(&out.join(SUMMARY), &with_header(&ctx.provenance("repro-toy"), &table))?;
    Ok(table)
}

type Column = (&'static str, fn(&MetricsReport) -> Option<f64>);

const COLUMNS: [Column; 6] = [
    ("rmse_per_entry", |r| Some(r.rmse_per_entry)),
    ("mae_per_entry", |r| Some(r.mae_per_entry)),
    ("mmd", |r| Some(r.mmd)),
    ("rmse", |r| Some(r.rmse)),
    ("mae", |r| Some(r.mae)),
    ("mi", |r| r.mi),
];

/// One row per seed, then the mean, the standard deviation (two or more seeds) and the
/// reference values.
pub fn summary_table(seeds: &[u64], reports: &[MetricsReport]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "seed");
    for (name, _) in COLUMNS {
        let _ = write!(s, " {name:>15}");
    }
    s.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    for (seed, r) in seeds.iter().zip(reports) {
        let _ = write!(s, "{seed:<10}");
        for (_, f) in COLUMNS {
            let _ = write!(s, " {:>15}", cell(f(r)));
        }
        s.push('\n');
    }
    let stats: Vec<Option<(f64, f64)>> = COLUMNS
        .iter()
        .map(|(_, f)| {
            let xs: Option<Vec<f64>> = reports.iter().map(f).collect();
            xs.map(|xs| mean_std(&xs))
        })
        .collect();
    let _ = write!(s, "{:<10}", "mean");
    for st in &stats {
        let _ = write!(s, " {:>15}", cell(st.map(|p| p.0)));
    }
    s.push('\n');
    if reports.len() > 1 {
        let _ = write!(s, "{:<10}", "std");
        for st in &stats {
            let _ = write!(s, " {:>15}", cell(st.map(|p| p.1)));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<10}", "reference");
    for (name, _) in COLUMNS {
        let text = TOY_REFERENCE
            .iter()
            .find(|(k, _, _)| *k == name)
            .map_or_else(|| "-".to_string(), |(_, m, sd)| format!("{m}±{sd}"));
        let _ = write!(s, " {text:>15}");
    }
    s.push('\n');
    s
}
