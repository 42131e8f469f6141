//! The four experiment commands, as library functions.
//!
//! Files written per training run: `config.toml` (the effective config),
//! `trace.csv` (per-iteration losses), and `snapshot_NNNNNN.ckpt` generator
//! checkpoints including iteration 0 (initialization) and the final
//! iteration. Sweeps add an `aggregate.csv` with one evaluation row per
//! seed plus a summary row whose metric cells hold `median|min|max` over
//! the completed runs. All CSVs have a header row, a fixed column order,
//! and LF line endings.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use dan_core::adversaries::GeneratorNet;
use dan_core::analysis::{AnalysisError, CollapseStudy};
use dan_core::data::{sample_mixture, sample_noise, MixtureSpec};
use dan_core::evaluation::{evaluate, mmd2_rbf, median_pairwise_distance, EvalError, EvalReport};
use dan_core::nn::{load_checkpoint, Activation, MlpNet, NnError};
use dan_core::rng::{stream, Stream};
use dan_core::tensor::Tensor;
use dan_core::training::{run_training, TrainError, TrainRun};

use crate::config::{
    read_experiment_file, read_sweep_file, ConfigError, ExperimentConfig, SweepSpec,
};
use crate::profiles;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Process exit code: 1 for validation problems, 2 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Train(TrainError::Validation(_)) => 1,
            CliError::Nn(_) | CliError::Eval(_) | CliError::Analysis(_) => 1,
            CliError::Train(_) | CliError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Resolve `--config`: a built-in profile name or a file path. Returns the
/// config plus a short stem used to name output directories.
pub fn resolve_config(spec: &str) -> Result<(ExperimentConfig, String), CliError> {
    if let Some(cfg) = profiles::builtin(spec) {
        return Ok((cfg, spec.to_string()));
    }
    let path = Path::new(spec);
    let cfg = read_experiment_file(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    Ok((cfg, stem))
}

/// Output root: `--out`, else `DAN_LAB_OUT`, else `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(env) = std::env::var("DAN_LAB_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("runs")
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn snapshot_filename(iteration: usize) -> String {
    format!("snapshot_{iteration:06}.ckpt")
}

/// Iteration encoded in a snapshot filename, 0 when absent.
pub fn iteration_from_filename(path: &Path) -> usize {
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let digits: String = stem.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().unwrap_or(0)
}

pub struct TrainArtifacts {
    pub run_dir: PathBuf,
    pub trace_path: PathBuf,
    pub snapshot_paths: Vec<(usize, PathBuf)>,
    pub run: TrainRun,
}

/// Train one experiment and write its artifacts under
/// `<out_root>/<stem>-s<seed>/`. On abort the partial trace and snapshots
/// are still written before the error propagates.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    stem: &str,
    out_root: &Path,
) -> Result<TrainArtifacts, CliError> {
    let mixture = cfg.validate()?;
    let run_dir = out_root.join(format!("{stem}-s{}", cfg.train.seed));
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    write_text(&run_dir.join("config.toml"), &cfg.to_toml())?;

    let result = run_training(&cfg.train, &cfg.networks, &mixture, &cfg.noise);
    let (trace, snapshots, run) = match result {
        Ok(run) => (run.trace.clone(), run.snapshots.clone(), Some(run)),
        Err(TrainError::Aborted(abort)) => {
            let trace = abort.trace.clone();
            let snapshots = abort.snapshots.clone();
            write_trace_and_snapshots(&run_dir, &trace, &snapshots)?;
            return Err(CliError::Train(TrainError::Aborted(abort)));
        }
        Err(other) => return Err(CliError::Train(other)),
    };
    let snapshot_paths = write_trace_and_snapshots(&run_dir, &trace, &snapshots)?;
    Ok(TrainArtifacts {
        trace_path: run_dir.join("trace.csv"),
        run_dir,
        snapshot_paths,
        run: run.expect("ok branch"),
    })
}

fn write_trace_and_snapshots(
    run_dir: &Path,
    trace: &dan_core::training::LossTrace,
    snapshots: &[dan_core::training::Snapshot],
) -> Result<Vec<(usize, PathBuf)>, CliError> {
    let mut csv = String::from(dan_core::training::LossTrace::csv_header());
    csv.push('\n');
    for row in trace.csv_rows() {
        csv.push_str(&row);
        csv.push('\n');
    }
    write_text(&run_dir.join("trace.csv"), &csv)?;
    let mut paths = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let path = run_dir.join(snapshot_filename(snap.iteration));
        fs::write(&path, &snap.bytes).map_err(io_err(&path))?;
        paths.push((snap.iteration, path));
    }
    Ok(paths)
}

/// Build a generator shaped like the config's and load checkpoint bytes
/// into it.
pub fn generator_from_checkpoint(
    cfg: &ExperimentConfig,
    bytes: &[u8],
) -> Result<(GeneratorNet, u64), CliError> {
    let net = MlpNet::init(
        &cfg.networks.generator,
        Activation::Relu,
        cfg.networks.generator_out,
        0,
    )?;
    let generator = GeneratorNet::new(net);
    let meta = load_checkpoint(&generator.param_store(), bytes)?;
    Ok((generator, meta.seed))
}

/// Sample the generator and score it against the config's target mixture.
/// Real reference draws (for MMD) and evaluation noise come from dedicated
/// streams of `seed`.
pub fn evaluate_generator(
    generator: &GeneratorNet,
    cfg: &ExperimentConfig,
    mixture: &MixtureSpec,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport, CliError> {
    let mut noise_rng = stream(seed, Stream::EvalNoise);
    let noise = sample_noise(&cfg.noise, n_samples, &mut noise_rng);
    let points = generator.generate(&noise)?.detach();
    let mut data_rng = stream(seed, Stream::EvalData);
    let (real, _) = sample_mixture(mixture, n_samples, &mut data_rng);
    let report = evaluate(&points, Some(&real), mixture, &cfg.eval.settings())?;
    Ok(report)
}

/// Evaluate a checkpoint file; returns the report and its CSV row.
pub fn cmd_eval(
    checkpoint: &Path,
    cfg: &ExperimentConfig,
    n_samples: usize,
) -> Result<(EvalReport, String), CliError> {
    if n_samples == 0 {
        return Err(CliError::Usage("--n-samples must be at least 1".into()));
    }
    let mixture = cfg.validate()?;
    let bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
    let (generator, ckpt_seed) = generator_from_checkpoint(cfg, &bytes)?;
    let report = evaluate_generator(&generator, cfg, &mixture, n_samples, ckpt_seed)?;
    let run_id = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let iteration = iteration_from_filename(checkpoint);
    let row = report.csv_row(&run_id, ckpt_seed, iteration);
    Ok((report, row))
}

/// Run the 1-D weighting study of the config's `[analysis]` section and
/// write the curve CSV. The final `summary` row carries the per-region
/// maxima of `|weight|` and their ratio in the `p_x`, `p_g` and `d_star`
/// columns.
pub fn cmd_analyze(
    cfg: &ExperimentConfig,
    stem: &str,
    out_root: &Path,
) -> Result<(PathBuf, CollapseStudy), CliError> {
    cfg.validate()?;
    let study = cfg.analysis.clone().ok_or_else(|| {
        CliError::Usage(format!(
            "config `{stem}` has no [analysis] section; try the bimodal-1d profile"
        ))
    })?;
    let curve = study.curve()?;
    let maxima = study.region_maxima(&curve);
    fs::create_dir_all(out_root).map_err(io_err(out_root))?;
    let path = out_root.join(format!("{stem}-weighting.csv"));
    let mut csv = String::from(dan_core::analysis::WeightingCurve::csv_header());
    csv.push('\n');
    for row in curve.csv_rows() {
        csv.push_str(&row);
        csv.push('\n');
    }
    csv.push_str(&format!(
        "summary,{},{},{},,\n",
        maxima.approach_max, maxima.missing_max, maxima.ratio
    ));
    write_text(&path, &csv)?;
    Ok((path, study))
}

/// One row of a sweep's aggregate.
pub struct SweepRow {
    pub seed: u64,
    pub iteration: usize,
    pub report: Option<EvalReport>,
    /// "ok" or "abort: <reason>".
    pub status: String,
    pub run_dir: PathBuf,
}

pub struct SweepOutcome {
    pub sweep_dir: PathBuf,
    pub aggregate_path: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Train and evaluate every seed of the sweep, `parallelism` runs at a
/// time, then write the aggregate CSV. Aborted runs get a status row; the
/// summary is computed over completed runs only.
pub fn cmd_sweep(
    spec: &SweepSpec,
    base_cfg: &ExperimentConfig,
    stem: &str,
    out_root: &Path,
) -> Result<SweepOutcome, CliError> {
    spec.validate()?;
    base_cfg.validate()?;
    let sweep_dir = out_root.join(format!("{stem}-sweep"));
    fs::create_dir_all(&sweep_dir).map_err(io_err(&sweep_dir))?;

    let configs: Vec<(u64, ExperimentConfig)> = spec
        .seeds
        .iter()
        .map(|&seed| {
            let mut cfg = base_cfg.clone();
            cfg.train.seed = seed;
            if let Some(o) = spec.overrides.iter().find(|o| o.seed == seed) {
                o.apply(&mut cfg.train);
            }
            (seed, cfg)
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .expect("thread pool");
    let rows: Vec<SweepRow> = pool.install(|| {
        configs
            .par_iter()
            .map(|(seed, cfg)| sweep_one(*seed, cfg, stem, &sweep_dir))
            .collect()
    });

    let aggregate_path = sweep_dir.join("aggregate.csv");
    let mut csv = String::from(EvalReport::csv_header());
    csv.push_str(",status\n");
    for row in &rows {
        match &row.report {
            Some(report) => {
                let run_id = format!("{stem}-s{}", row.seed);
                csv.push_str(&report.csv_row(&run_id, row.seed, row.iteration));
                csv.push(',');
                csv.push_str(&row.status);
                csv.push('\n');
            }
            None => {
                csv.push_str(&format!(
                    "{stem}-s{seed},{seed},,,,,,,{status}\n",
                    seed = row.seed,
                    status = row.status
                ));
            }
        }
    }
    csv.push_str(&summary_row(&rows));
    write_text(&aggregate_path, &csv)?;

    Ok(SweepOutcome {
        sweep_dir,
        aggregate_path,
        rows,
    })
}

fn sweep_one(seed: u64, cfg: &ExperimentConfig, stem: &str, sweep_dir: &Path) -> SweepRow {
    match cmd_train(cfg, stem, sweep_dir) {
        Ok(artifacts) => {
            let run_dir = artifacts.run_dir.clone();
            let iteration = artifacts.run.state.iteration();
            let mixture = cfg.data.resolve().expect("validated");
            match evaluate_generator(
                &artifacts.run.state.generator,
                cfg,
                &mixture,
                cfg.eval.n_samples,
                seed,
            ) {
                Ok(report) => SweepRow {
                    seed,
                    iteration,
                    report: Some(report),
                    status: "ok".into(),
                    run_dir,
                },
                Err(e) => SweepRow {
                    seed,
                    iteration,
                    report: None,
                    status: format!("abort: eval failed: {e}"),
                    run_dir,
                },
            }
        }
        Err(e) => SweepRow {
            seed,
            iteration: 0,
            report: None,
            status: format!("abort: {e}").replace('\n', " "),
            run_dir: sweep_dir.join(format!("{stem}-s{seed}")),
        },
    }
}

fn median_min_max(values: &mut Vec<f64>) -> String {
    if values.is_empty() {
        return String::new();
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = values[0];
    let max = values[values.len() - 1];
    let mid = values.len() / 2;
    let median = if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    };
    format!("{median}|{min}|{max}")
}

/// The aggregate's summary row: per-metric `median|min|max` over completed
/// runs, a pure function of the per-run rows.
pub fn summary_row(rows: &[SweepRow]) -> String {
    let reports: Vec<&EvalReport> = rows.iter().filter_map(|r| r.report.as_ref()).collect();
    let col = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
        let mut values: Vec<f64> = reports.iter().filter_map(|r| f(r)).collect();
        median_min_max(&mut values)
    };
    let modes = col(&|r| Some(r.modes_captured as f64));
    let entropy = col(&|r| Some(r.entropy));
    let tv = col(&|r| Some(r.tv_to_target));
    let hq = col(&|r| Some(r.hq_fraction));
    let mmd = col(&|r| r.mmd2);
    format!(
        "summary,,,{modes},{entropy},{tv},{hq},{mmd},ok:{}/{}\n",
        reports.len(),
        rows.len()
    )
}

/// Parse a metric cell of the summary row back into (median, min, max).
pub fn parse_summary_cell(cell: &str) -> Option<(f64, f64, f64)> {
    let mut parts = cell.split('|').map(str::parse::<f64>);
    match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(a)), Some(Ok(b)), Some(Ok(c))) => Some((a, b, c)),
        _ => None,
    }
}

/// Resolve a sweep's base config: profile name, or a path relative to the
/// sweep file's directory.
pub fn resolve_sweep_base(
    spec: &SweepSpec,
    sweep_path: &Path,
) -> Result<(ExperimentConfig, String), CliError> {
    if let Some(cfg) = profiles::builtin(&spec.base) {
        return Ok((cfg, spec.base.clone()));
    }
    let base_path = sweep_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&spec.base);
    let cfg = read_experiment_file(&base_path)?;
    let stem = base_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into());
    Ok((cfg, stem))
}

/// Entry point for the `sweep` subcommand.
pub fn run_sweep_file(
    sweep_path: &Path,
    parallelism_override: Option<usize>,
    out_root: &Path,
) -> Result<SweepOutcome, CliError> {
    let mut spec = read_sweep_file(sweep_path)?;
    if let Some(p) = parallelism_override {
        spec.parallelism = p;
    }
    let (base_cfg, stem) = resolve_sweep_base(&spec, sweep_path)?;
    cmd_sweep(&spec, &base_cfg, &stem, out_root)
}

/// MMD between a checkpoint's generator output and fresh real draws, used
/// to compare early and late snapshots of one run.
pub fn snapshot_mmd(
    cfg: &ExperimentConfig,
    mixture: &MixtureSpec,
    snapshot_bytes: &[u8],
    n_samples: usize,
    seed: u64,
) -> Result<f64, CliError> {
    let (generator, _) = generator_from_checkpoint(cfg, snapshot_bytes)?;
    let mut noise_rng = stream(seed, Stream::EvalNoise);
    let noise = sample_noise(&cfg.noise, n_samples, &mut noise_rng);
    let points = generator.generate(&noise)?.detach();
    let mut data_rng = stream(seed, Stream::EvalData);
    let (real, _) = sample_mixture(mixture, n_samples, &mut data_rng);
    let bw = match cfg.eval.mmd_bandwidth {
        Some(b) => b,
        None => median_pairwise_distance(&real),
    };
    Ok(mmd2_rbf(&points, &real, bw)?)
}

/// Convenience for tests: tensors of generated points from a checkpoint.
pub fn sample_checkpoint(
    cfg: &ExperimentConfig,
    snapshot_bytes: &[u8],
    n_samples: usize,
    seed: u64,
) -> Result<Tensor, CliError> {
    let (generator, _) = generator_from_checkpoint(cfg, snapshot_bytes)?;
    let mut noise_rng = stream(seed, Stream::EvalNoise);
    let noise = sample_noise(&cfg.noise, n_samples, &mut noise_rng);
    Ok(generator.generate(&noise)?.detach())
}
