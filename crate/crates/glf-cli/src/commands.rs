//! The five subcommands: train, eval, gradcheck, toy-constraints, sweep.

use std::path::{Path, PathBuf};
use std::time::Instant;

use glf_core::eval::MetricsReport;
use glf_core::loss::suite::{gradcheck_suite, GradCheckReport, DEFAULT_TOLERANCE};
use glf_core::loss::{AligningKind, ConstrainingKind};
use glf_core::model::{Checkpoint, CHECKPOINT_VERSION};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report;
use crate::runner::{
    build_dataset, init_models, quick_knn, run_training, EpochStats, TrainedModels,
};

pub const RECORD_FORMAT_VERSION: u32 = 1;

/// Everything one training run produced.
pub struct RunRecord {
    pub format_version: u32,
    pub config_echo: String,
    pub config_hash: String,
    pub epoch_losses: Vec<EpochStats>,
    pub metrics: MetricsReport,
    pub wall_clock_secs: f64,
    pub checkpoint_path: PathBuf,
    pub losses_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn checkpoint_from(models: &TrainedModels, cfg: &ExperimentConfig, step: u64) -> Checkpoint {
    let mut blocks = models.encoder.named_tensors("encoder");
    blocks.extend(models.head.named_tensors("head"));
    blocks.extend(models.predictor.named_tensors("predictor"));
    Checkpoint {
        format_version: CHECKPOINT_VERSION,
        spec_echo: cfg.write_echo(),
        seed: cfg.seeds.model,
        step,
        blocks,
    }
}

fn models_from_checkpoint(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> CliResult<TrainedModels> {
    let mut models = init_models(cfg)?;
    for (params, prefix) in [
        (&mut models.encoder, "encoder"),
        (&mut models.head, "head"),
        (&mut models.predictor, "predictor"),
    ] {
        let mut flat = Vec::new();
        for (name, current) in params.named_tensors(prefix) {
            let block = ckpt.block(&name).ok_or_else(|| {
                CliError::Config(format!("checkpoint is missing parameter block '{name}'"))
            })?;
            if block.shape() != current.shape() {
                return Err(CliError::Config(format!(
                    "checkpoint block '{name}' has shape {:?}, config expects {:?}",
                    block.shape(),
                    current.shape()
                )));
            }
            flat.push(block.clone());
        }
        params.set_from_flat(&flat).map_err(CliError::Core)?;
    }
    Ok(models)
}

/// Pretrain, evaluate, and write the run artifacts (config echo, per-epoch
/// loss log, metrics table, checkpoint) under the config's output directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<RunRecord> {
    let started = Instant::now();
    let dataset = build_dataset(cfg)?;
    let (models, stats, steps) = run_training(cfg, &dataset, |_, _| Ok(()))?;
    let metrics = crate::runner::evaluate_models(cfg, &dataset, &models)?;

    let out = &cfg.output_dir;
    let hash = cfg.hash();
    let echo_path = out.join("config.echo.cfg");
    let losses_path = out.join("losses.csv");
    let metrics_path = out.join("metrics.csv");
    let checkpoint_path = out.join("checkpoint.glfc");
    report::write_file(&echo_path, &cfg.write_echo())?;
    report::write_losses(&losses_path, &hash, &stats)?;
    report::write_metrics(&metrics_path, &hash, &metrics)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out.display().to_string(), e))?;
    checkpoint_from(&models, cfg, steps)
        .save(&checkpoint_path)
        .map_err(CliError::Core)?;

    Ok(RunRecord {
        format_version: RECORD_FORMAT_VERSION,
        config_echo: cfg.write_echo(),
        config_hash: hash,
        epoch_losses: stats,
        metrics,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        checkpoint_path,
        losses_path,
        metrics_path,
    })
}

/// Evaluate a checkpoint against the config's dataset; writes metrics.csv.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> CliResult<MetricsReport> {
    let ckpt = Checkpoint::load(checkpoint).map_err(CliError::Core)?;
    let models = models_from_checkpoint(cfg, &ckpt)?;
    let dataset = build_dataset(cfg)?;
    if dataset.dim() != cfg.encoder.input_dim() {
        return Err(CliError::Config(format!(
            "checkpoint encoder expects dim {}, dataset has {}",
            cfg.encoder.input_dim(),
            dataset.dim()
        )));
    }
    let metrics = crate::runner::evaluate_models(cfg, &dataset, &models)?;
    let metrics_path = cfg.output_dir.join("metrics.csv");
    report::write_metrics(&metrics_path, &cfg.hash(), &metrics)?;
    Ok(metrics)
}

/// The finite-difference verification suite; fails (exit 3) if any loss
/// exceeds the tolerance.
pub fn cmd_gradcheck(n_seeds: u64) -> CliResult<Vec<GradCheckReport>> {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let reports = gradcheck_suite(&seeds, DEFAULT_TOLERANCE).map_err(CliError::Core)?;
    for r in &reports {
        println!(
            "{:<28} max_rel_err {:>12.3e}  {}",
            r.name,
            r.max_rel_err,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "gradcheck: {} losses, {} seeds, {:.2}s",
        reports.len(),
        n_seeds,
        started.elapsed().as_secs_f64()
    );
    let failing: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.as_str())
        .collect();
    if failing.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::GradcheckFailed(failing.join(", ")))
    }
}

pub const TOY_CONSTRAINTS: [(&str, ConstrainingKind); 6] = [
    ("uniform_sphere", ConstrainingKind::UniformSphere),
    ("uniform_cube", ConstrainingKind::UniformCube),
    ("gauss_full", ConstrainingKind::GaussFull),
    ("gauss_identity", ConstrainingKind::GaussIdentity),
    ("gauss_mixture", ConstrainingKind::GaussMixture),
    ("adc", ConstrainingKind::Adc),
];

pub struct ToyTable {
    /// `accuracies[c][e]` = constraint c, epoch e.
    pub accuracies: Vec<Vec<f64>>,
    pub path: PathBuf,
}

/// Trains align_only plus each constraint on the same dataset and seeds,
/// recording per-epoch 5-NN accuracy per constraint.
pub fn cmd_toy_constraints(cfg: &ExperimentConfig) -> CliResult<ToyTable> {
    let pool = thread_pool()?;
    let results: Vec<CliResult<Vec<f64>>> = pool.install(|| {
        use rayon::prelude::*;
        // Tensors carry a (single-threaded) tape handle, so each worker
        // rebuilds the deterministic dataset locally instead of sharing it.
        TOY_CONSTRAINTS
            .par_iter()
            .map(|&(_, kind)| {
                let mut sub = cfg.clone();
                sub.aligning.kind = AligningKind::AlignOnly;
                sub.constraining.kind = kind;
                sub.epochs = cfg.toy.epochs;
                let dataset = build_dataset(&sub)?;
                let mut curve = Vec::with_capacity(sub.epochs);
                let subsample = cfg.toy.knn_train_subsample;
                run_training(&sub, &dataset, |_, models| {
                    curve.push(quick_knn(&sub, &dataset, models, subsample)?);
                    Ok(())
                })?;
                Ok(curve)
            })
            .collect()
    });
    let mut accuracies = Vec::with_capacity(TOY_CONSTRAINTS.len());
    for r in results {
        accuracies.push(r?);
    }

    let hash = cfg.hash();
    let mut out = String::from("config_hash,epoch");
    for (name, _) in TOY_CONSTRAINTS {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for epoch in 0..cfg.toy.epochs {
        out.push_str(&format!("{hash},{epoch}"));
        for curve in &accuracies {
            out.push(',');
            out.push_str(&curve[epoch].to_string());
        }
        out.push('\n');
    }
    let path = cfg.output_dir.join("toy_constraints.csv");
    report::write_file(&path, &out)?;
    Ok(ToyTable { accuracies, path })
}

pub struct SweepCell {
    pub nu: f64,
    pub upsilon: f64,
    pub hash: String,
    pub metrics: MetricsReport,
}

/// Cross-product sweep over (ν, υ); completed cells (metrics.csv present)
/// are skipped, so an interrupted sweep resumes to the identical table.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<(Vec<SweepCell>, PathBuf)> {
    let pool = thread_pool()?;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for &nu in &cfg.sweep.nu_grid {
        for &ups in &cfg.sweep.upsilon_grid {
            cells.push((nu, ups));
        }
    }
    let results: Vec<CliResult<SweepCell>> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(nu, upsilon)| {
                let mut sub = cfg.clone();
                sub.constraining.kind = ConstrainingKind::Adc;
                sub.constraining.nu = nu;
                sub.constraining.upsilon = upsilon;
                sub.output_dir = cfg
                    .output_dir
                    .join("cells")
                    .join(format!("nu_{nu}_ups_{upsilon}"));
                let metrics_path = sub.output_dir.join("metrics.csv");
                if metrics_path.exists() {
                    let (hash, metrics) = report::read_metrics(&metrics_path)?;
                    return Ok(SweepCell {
                        nu,
                        upsilon,
                        hash,
                        metrics,
                    });
                }
                let record = cmd_train(&sub)?;
                Ok(SweepCell {
                    nu,
                    upsilon,
                    hash: record.config_hash,
                    metrics: record.metrics,
                })
            })
            .collect()
    });
    let mut done = Vec::with_capacity(results.len());
    for r in results {
        done.push(r?);
    }
    done.sort_by(|a, b| {
        a.nu.total_cmp(&b.nu)
            .then(a.upsilon.total_cmp(&b.upsilon))
    });

    let mut out = String::from("config_hash,nu,upsilon,");
    out.push_str(&MetricsReport::FIELD_NAMES.join(","));
    out.push('\n');
    for cell in &done {
        out.push_str(&format!("{},{},{}", cell.hash, cell.nu, cell.upsilon));
        for v in cell.metrics.values() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let path = cfg.output_dir.join("sweep.csv");
    report::write_file(&path, &out)?;
    Ok((done, path))
}

/// Worker pool for multi-run commands; GLF_THREADS caps the parallel cells.
fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GLF_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("GLF_THREADS: cannot parse '{v}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("failed to build worker pool: {e}")))
}
