//! The subcommands behind the `ssi3d` binary.
//!
//! Each command takes a resolved [`RunConfig`]. Argument validation happens
//! before any data is read, and output files are only created once the inputs
//! have loaded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{
    prepare, prepare_split, NormalizationStats, PipelineConfig, PreparedData, Split,
};
use crate::error::{Error, Result};
use crate::layers::Padding;
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, Arch, LayerSpec, Model, ModelSpec};
use crate::synth::{generate_corpus, CorpusSummary};
use crate::train::{train_with, TrainConfig, TrainHistory};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const STATS_FILE: &str = "stats.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_ECHO_FILE: &str = "resolved_config.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

const EVAL_BATCH: usize = 100;

pub fn metrics_file(split: Split) -> String {
    format!("{split}_metrics.txt")
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn synth(cfg: &RunConfig) -> Result<CorpusSummary> {
    let out = cfg.require_out()?;
    let synth_cfg = cfg.synth_config()?;
    let summary = generate_corpus(&synth_cfg, out)?;
    println!(
        "wrote {} sequences ({}x{}, {} frames) and {}",
        summary.manifest.entries.len(),
        synth_cfg.height,
        synth_cfg.width,
        synth_cfg.frames,
        summary.manifest_path.display()
    );
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: TrainHistory,
    pub dev: MetricsReport,
    pub test: Option<MetricsReport>,
}

fn fit_and_report(
    spec: ModelSpec,
    seed: u64,
    tc: &TrainConfig,
    data: &PreparedData,
    label: &str,
    with_test: bool,
) -> Result<TrainOutcome> {
    let model = Model::<f32>::build(spec, seed)?;
    let (mut model, history) = train_with(model, &data.train, &data.dev, tc, |r| {
        eprintln!(
            "[{label}] epoch {} train_mse={:.6} dev_mse={:.6} lr={}",
            r.epoch, r.train_mse, r.dev_mse, r.learning_rate
        )
    })?;
    let dev = evaluate(&mut model, &data.dev, Split::Dev, EVAL_BATCH)?;
    let test = if with_test {
        Some(evaluate(&mut model, &data.test, Split::Test, EVAL_BATCH)?)
    } else {
        None
    };
    Ok(TrainOutcome {
        model,
        history,
        dev,
        test,
    })
}

fn write_run(out: &Path, outcome: &TrainOutcome, stats: &NormalizationStats) -> Result<()> {
    save_checkpoint(&outcome.model, &out.join(CHECKPOINT_FILE))?;
    stats.save(&out.join(STATS_FILE))?;
    outcome.history.write_csv(&out.join(HISTORY_FILE))?;
    write_file(
        &out.join(metrics_file(outcome.dev.split)),
        &outcome.dev.render(),
    )?;
    if let Some(test) = &outcome.test {
        write_file(&out.join(metrics_file(test.split)), &test.render())?;
    }
    Ok(())
}

fn shape_string(dims: &[usize]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("({})", parts.join(","))
}

/// Fits normalization on train, trains the configured model, and writes the
/// checkpoint, stats, history and dev report into the output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let spec = cfg.model_spec()?;
    let tc = cfg.train_config()?;
    let manifest = cfg.require_manifest()?;
    let out = cfg.require_out()?;

    let data = prepare(manifest, &PipelineConfig::for_spec(&spec), None)?;
    println!("input_shape={}", shape_string(&spec.input_shape));
    println!("params={}", spec.param_count()?);

    let mut resolved = cfg.clone();
    resolved.s = spec.stride;
    resolved.mode = spec.temporal_mode;
    create_dir(out)?;
    resolved.save(&out.join(CONFIG_ECHO_FILE))?;

    let outcome = fit_and_report(spec, cfg.seed, &tc, &data, &cfg.model.to_string(), false)?;
    write_run(out, &outcome, &data.stats)?;
    print!("{}", outcome.dev.render());
    Ok(outcome)
}

/// Evaluates a checkpoint on one split using the stats written at training time.
pub fn eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let ckpt = cfg
        .checkpoint
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| o.join(CHECKPOINT_FILE)))
        .ok_or_else(|| Error::Usage("eval needs --checkpoint or --out".into()))?;
    let manifest = cfg.require_manifest()?;
    let run_dir = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
    let stats_path = cfg
        .stats
        .clone()
        .unwrap_or_else(|| run_dir.join(STATS_FILE));

    let mut model: Model<f32> = load_checkpoint(&ckpt)?;
    let stats = NormalizationStats::load(&stats_path)?;
    let data = prepare_split(
        manifest,
        cfg.split,
        &PipelineConfig::for_spec(&model.spec),
        &stats,
    )?;
    let report = evaluate(&mut model, &data, cfg.split, EVAL_BATCH)?;

    let out = cfg.out.clone().unwrap_or(run_dir);
    create_dir(&out)?;
    write_file(&out.join(metrics_file(cfg.split)), &report.render())?;
    print!("{}", report.render());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: Arch,
    pub s: Option<usize>,
    pub param_count: Option<usize>,
    pub result: std::result::Result<(f64, f64, f64), String>,
}

impl SweepRow {
    pub fn dev_mse(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.0)
    }

    fn csv_line(&self) -> String {
        let s = self.s.map(|s| s.to_string()).unwrap_or_default();
        let params = self.param_count.map(|p| p.to_string()).unwrap_or_default();
        match &self.result {
            Ok((dev, test, r2)) => format!(
                "{},{s},{dev:.17e},{test:.17e},{r2:.17e},{params},ok",
                self.model
            ),
            Err(msg) => {
                let clean: String = msg
                    .chars()
                    .map(|c| if c == ',' || c == '\n' { ';' } else { c })
                    .collect();
                format!("{},{s},,,,{params},error: {clean}", self.model)
            }
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("model,s,dev_mse,test_mse,mean_r2,param_count,status\n");
    for row in rows {
        let _ = writeln!(out, "{}", row.csv_line());
    }
    out
}

struct SweepJob {
    model: Arch,
    s: Option<usize>,
    spec: Result<ModelSpec>,
    dir: PathBuf,
}

fn sweep_run(cfg: &RunConfig, tc: &TrainConfig, job: SweepJob) -> SweepRow {
    let SweepJob {
        model,
        s,
        spec,
        dir: run_dir,
    } = job;
    let param_count = spec.as_ref().ok().and_then(|s| s.param_count().ok());
    let result = spec
        .and_then(|spec| {
            let manifest = cfg.require_manifest()?;
            let data = prepare(manifest, &PipelineConfig::for_spec(&spec), None)?;
            let label = match spec.stride {
                Some(s) => format!("{} s={s}", spec.arch),
                None => spec.arch.to_string(),
            };
            let outcome = fit_and_report(spec, cfg.seed, tc, &data, &label, true)?;
            create_dir(&run_dir)?;
            write_run(&run_dir, &outcome, &data.stats)?;
            let test = outcome.test.expect("sweep runs evaluate test");
            Ok((outcome.dev.mse, test.mse, test.mean_r2))
        })
        .map_err(|e| e.to_string());
    SweepRow {
        model,
        s,
        param_count,
        result,
    }
}

/// Trains one cnn3d per stride in `s_values` and one cnn2d baseline with the
/// same seed and training settings, writing `sweep.csv` and one run directory
/// per model.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.s_values.is_empty() {
        return Err(Error::Usage(
            "sweep needs at least one stride in s_values".into(),
        ));
    }
    if cfg.s.is_some() {
        return Err(Error::Usage(
            "sweep takes strides from --s-values, not --s".into(),
        ));
    }
    let tc = cfg.train_config()?;
    let manifest = cfg.require_manifest()?;
    let out = cfg.require_out()?;
    if !manifest.is_file() {
        return Err(Error::io(
            manifest,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        ));
    }

    create_dir(out)?;
    cfg.save(&out.join(CONFIG_ECHO_FILE))?;

    let mut jobs: Vec<SweepJob> = cfg
        .s_values
        .iter()
        .map(|&s| SweepJob {
            model: Arch::Cnn3d,
            s: Some(s),
            spec: cfg.cnn3d_spec(s),
            dir: out.join(format!("cnn3d_s{s}")),
        })
        .collect();
    jobs.push(SweepJob {
        model: Arch::Cnn2d,
        s: None,
        spec: Ok(ModelSpec::cnn2d(cfg.scale())),
        dir: out.join("cnn2d"),
    });

    let rows: Vec<SweepRow> = if cfg.parallel {
        jobs.into_par_iter()
            .map(|job| sweep_run(cfg, &tc, job))
            .collect()
    } else {
        jobs.into_iter()
            .map(|job| sweep_run(cfg, &tc, job))
            .collect()
    };
    let csv = sweep_csv(&rows);
    write_file(&out.join(SWEEP_FILE), &csv)?;
    print!("{csv}");
    Ok(rows)
}

fn padding_str(p: &[Padding; 3]) -> String {
    let parts: Vec<&str> = p
        .iter()
        .map(|p| match p {
            Padding::Same => "same",
            Padding::Valid => "valid",
        })
        .collect();
    parts.join("/")
}

fn triple(v: &[usize; 3]) -> String {
    format!("({},{},{})", v[0], v[1], v[2])
}

/// Per-layer audit table ending in a `total_params=` line.
pub fn params_table(spec: &ModelSpec) -> Result<String> {
    let rows = spec.summarize()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model={} scale={:?} input={}",
        spec.arch,
        spec.scale,
        shape_string(&spec.input_shape)
    );
    let _ = writeln!(
        out,
        "{:<3} {:<10} {:<18} {:<12} {:<10} {:<17} {:>10}",
        "#", "layer", "output", "kernel", "strides", "padding", "params"
    );
    for r in &rows {
        let (kernel, strides, padding) = match &r.spec {
            LayerSpec::Conv(c) => (
                triple(&c.kernel),
                triple(&c.strides),
                padding_str(&c.padding),
            ),
            LayerSpec::MaxPool { pool } => {
                (triple(pool), triple(pool), "valid/valid/valid".to_string())
            }
            _ => ("-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<3} {:<10} {:<18} {:<12} {:<10} {:<17} {:>10}",
            r.index,
            r.spec.kind(),
            shape_string(&r.output_shape),
            kernel,
            strides,
            padding,
            r.params
        );
    }
    let total: usize = rows.iter().map(|r| r.params).sum();
    let _ = writeln!(out, "total_params={total}");
    Ok(out)
}

pub fn params(cfg: &RunConfig) -> Result<usize> {
    let spec = cfg.model_spec()?;
    let table = params_table(&spec)?;
    print!("{table}");
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_file(&out.join("params.txt"), &table)?;
    }
    spec.param_count()
}
