//! Dataset/model assembly, the training loop, and checkpoint-level
//! evaluation.

use glf_core::autodiff::{Tape, Tensor};
use glf_core::data::{batch_iterator, generate, load_numeric_file, Dataset};
use glf_core::eval::{
    alignment_uniformity, conditional_variance, intra_compactness, knn_classify, linear_probe,
    mean_classifier_ce, separability, MetricsReport,
};
use glf_core::loss::{
    align_only, barlow_twins, build_anchor_contexts, constraint_baseline, info_nce,
    simsiam_align, total_objective, AligningKind, BaselineKind, ConstrainingKind, LossBreakdown,
};
use glf_core::model::{
    init_mlp, CosineSchedule, MlpParams, MlpVars, OptimizerState, PriorEncoder,
};
use glf_core::rng::{mix_seq, rng_from};
use glf_core::Error as CoreError;

use rand::seq::SliceRandom;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};

const SEED_LANE_ENCODER: u64 = 0x01;
const SEED_LANE_HEAD: u64 = 0x02;
const SEED_LANE_PREDICTOR: u64 = 0x03;
const SEED_LANE_SPLIT: u64 = 0x10;
const SEED_LANE_EVAL_AUG: u64 = 0x11;

#[derive(Clone)]
pub struct TrainedModels {
    pub encoder: MlpParams,
    pub head: MlpParams,
    pub predictor: MlpParams,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean: LossBreakdown,
}

pub fn build_dataset(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    match cfg.dataset_with_seed() {
        DatasetConfig::Synthetic(spec) => Ok(generate(&spec)?),
        DatasetConfig::File { path, format } => Ok(load_numeric_file(&path, format)?),
    }
}

pub fn init_models(cfg: &ExperimentConfig) -> CliResult<TrainedModels> {
    Ok(TrainedModels {
        encoder: init_mlp(&cfg.encoder, mix_seq(&[cfg.seeds.model, SEED_LANE_ENCODER]))?,
        head: init_mlp(&cfg.head, mix_seq(&[cfg.seeds.model, SEED_LANE_HEAD]))?,
        predictor: init_mlp(&cfg.predictor, mix_seq(&[cfg.seeds.model, SEED_LANE_PREDICTOR]))?,
    })
}

pub fn build_prior(cfg: &ExperimentConfig, input_dim: usize) -> CliResult<PriorEncoder> {
    Ok(PriorEncoder::from_spec(&cfg.prior, input_dim)?)
}

fn batches_per_epoch(dataset_len: usize, batch_size: usize) -> usize {
    let full = dataset_len / batch_size;
    let tail = dataset_len % batch_size;
    full + usize::from(tail >= glf_core::data::MIN_BATCH)
}

struct StepVars {
    encoder: MlpVars,
    head: MlpVars,
    predictor: Option<MlpVars>,
}

impl StepVars {
    fn flat(&self) -> Vec<Tensor> {
        let mut out = self.encoder.flat();
        out.extend(self.head.flat());
        if let Some(p) = &self.predictor {
            out.extend(p.flat());
        }
        out
    }
}

fn one_step(
    cfg: &ExperimentConfig,
    models: &TrainedModels,
    prior: &PriorEncoder,
    view1: &Tensor,
    view2: &Tensor,
) -> Result<(Tape, StepVars, Tensor, LossBreakdown), CoreError> {
    let tape = Tape::new();
    let vars = StepVars {
        encoder: models.encoder.watch(&tape),
        head: models.head.watch(&tape),
        predictor: (cfg.aligning.kind == AligningKind::SimSiam)
            .then(|| models.predictor.watch(&tape)),
    };
    let h1 = vars.encoder.forward(view1)?;
    let h2 = vars.encoder.forward(view2)?;
    let p1 = vars.head.forward(&h1)?;
    let p2 = vars.head.forward(&h2)?;

    let l_ctr = match cfg.aligning.kind {
        AligningKind::InfoNce => info_nce(&p1, &p2, cfg.aligning.tau)?,
        AligningKind::AlignOnly => align_only(&p1, &p2, cfg.aligning.tau)?,
        AligningKind::BarlowTwins => barlow_twins(&p1, &p2, cfg.aligning.lambda_bt)?,
        AligningKind::SimSiam => {
            let pred = vars.predictor.as_ref().expect("predictor watched for simsiam");
            let q1 = pred.forward(&p1)?;
            let q2 = pred.forward(&p2)?;
            simsiam_align(&q1, &q2, &p1.detach(), &p2.detach())?
        }
    };

    let spec = &cfg.constraining;
    let (total, breakdown) = match spec.kind {
        ConstrainingKind::None => {
            total_objective(&l_ctr, None, None, 0.0, 0.0, spec.lpm_variant)?
        }
        ConstrainingKind::Dcm | ConstrainingKind::Lpm | ConstrainingKind::Adc => {
            let (nu, upsilon) = spec.effective_weights();
            if nu == 0.0 && upsilon == 0.0 {
                total_objective(&l_ctr, None, None, 0.0, 0.0, spec.lpm_variant)?
            } else {
                let z = Tensor::concat_rows(&[&p1, &p2])?;
                let prior_in = Tensor::concat_rows(&[&view1.detach(), &view2.detach()])?;
                let z_pre = prior.forward(&prior_in)?;
                let contexts = build_anchor_contexts(&z, &z_pre, &spec.adc)?;
                total_objective(&l_ctr, Some(&contexts), Some(&z), nu, upsilon, spec.lpm_variant)?
            }
        }
        baseline => {
            let kind = match baseline {
                ConstrainingKind::UniformSphere => BaselineKind::UniformSphere,
                ConstrainingKind::UniformCube => BaselineKind::UniformCube,
                ConstrainingKind::GaussFull => BaselineKind::GaussFull,
                ConstrainingKind::GaussIdentity => BaselineKind::GaussIdentity,
                ConstrainingKind::GaussMixture => BaselineKind::GaussMixture,
                _ => unreachable!(),
            };
            let z = Tensor::concat_rows(&[&p1, &p2])?;
            let (constraint, _aux) = constraint_baseline(kind, &z, &spec.baseline)?;
            let value = constraint.scalar()?;
            // ν doubles as the generic constraining weight for the baselines.
            let total = if spec.nu == 0.0 {
                l_ctr.clone()
            } else {
                l_ctr.add(&constraint.mul_scalar(spec.nu)?)?
            };
            let bd = LossBreakdown {
                l_ctr: l_ctr.scalar()?,
                l_dcm: value,
                l_lpm: 0.0,
                total: total.scalar()?,
            };
            (total, bd)
        }
    };
    Ok((tape, vars, total, breakdown))
}

/// Pretrains encoder + head (and predictor for simsiam). `on_epoch` fires
/// after every epoch with the current models; epoch indices start at 0.
pub fn run_training(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    mut on_epoch: impl FnMut(usize, &TrainedModels) -> CliResult<()>,
) -> CliResult<(TrainedModels, Vec<EpochStats>, u64)> {
    let mut models = init_models(cfg)?;
    let prior = build_prior(cfg, dataset.dim())?;
    if dataset.dim() != cfg.encoder.input_dim() {
        return Err(CliError::Config(format!(
            "encoder.widths: input width {} does not match dataset dim {}",
            cfg.encoder.input_dim(),
            dataset.dim()
        )));
    }

    let steps_per_epoch = batches_per_epoch(dataset.len(), cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let schedule = CosineSchedule::new(
        cfg.optimizer.lr_initial,
        cfg.optimizer.lr_final,
        total_steps.max(1),
    )
    .map_err(CliError::Core)?;

    let uses_predictor = cfg.aligning.kind == AligningKind::SimSiam;
    let mut master: Vec<Tensor> = collect_master(&models, uses_predictor);
    let mut opt = OptimizerState::new(
        schedule,
        cfg.optimizer.momentum,
        cfg.optimizer.weight_decay,
        &master,
    )
    .map_err(CliError::Core)?;

    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epoch_seed = mix_seq(&[cfg.seeds.train, epoch as u64]);
        let batches = batch_iterator(dataset, cfg.batch_size, epoch_seed, &cfg.augment)?;
        let mut acc = LossBreakdown {
            l_ctr: 0.0,
            l_dcm: 0.0,
            l_lpm: 0.0,
            total: 0.0,
        };
        for (batch_idx, batch) in batches.iter().enumerate() {
            let (view1, view2) = batch.views();
            let step = one_step(cfg, &models, &prior, view1, view2).and_then(|r| {
                let (tape, vars, total, bd) = r;
                let grads = tape.backward(&total)?;
                let flat_vars = vars.flat();
                let mut grad_tensors = Vec::with_capacity(flat_vars.len());
                for v in &flat_vars {
                    grad_tensors.push(grads.wrt(v)?);
                }
                Ok((grad_tensors, bd))
            });
            let (grad_tensors, bd) = step.map_err(|e| match e {
                CoreError::NonFinite { .. } => CliError::Divergence {
                    epoch,
                    batch: batch_idx,
                    source: e,
                },
                other => CliError::Core(other),
            })?;
            opt.sgd_step(&mut master, &grad_tensors)
                .map_err(CliError::Core)?;
            scatter_master(&mut models, &master, uses_predictor)?;
            acc.l_ctr += bd.l_ctr;
            acc.l_dcm += bd.l_dcm;
            acc.l_lpm += bd.l_lpm;
            acc.total += bd.total;
        }
        let count = batches.len().max(1) as f64;
        stats.push(EpochStats {
            epoch,
            mean: LossBreakdown {
                l_ctr: acc.l_ctr / count,
                l_dcm: acc.l_dcm / count,
                l_lpm: acc.l_lpm / count,
                total: acc.total / count,
            },
        });
        on_epoch(epoch, &models)?;
    }
    Ok((models, stats, (opt.step_count()) as u64))
}

fn collect_master(models: &TrainedModels, with_predictor: bool) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = models
        .encoder
        .named_tensors("encoder")
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    out.extend(models.head.named_tensors("head").into_iter().map(|(_, t)| t));
    if with_predictor {
        out.extend(
            models
                .predictor
                .named_tensors("predictor")
                .into_iter()
                .map(|(_, t)| t),
        );
    }
    out
}

fn scatter_master(
    models: &mut TrainedModels,
    master: &[Tensor],
    with_predictor: bool,
) -> CliResult<()> {
    let enc_n = models.encoder.layers.len() * 2;
    let head_n = models.head.layers.len() * 2;
    models
        .encoder
        .set_from_flat(&master[..enc_n])
        .map_err(CliError::Core)?;
    models
        .head
        .set_from_flat(&master[enc_n..enc_n + head_n])
        .map_err(CliError::Core)?;
    if with_predictor {
        models
            .predictor
            .set_from_flat(&master[enc_n + head_n..])
            .map_err(CliError::Core)?;
    }
    Ok(())
}

/// Deterministic stratified split: per class, a seeded shuffle sends the
/// first `ceil(fraction·n_c)` samples to the test side.
pub fn split_indices(
    labels: &[usize],
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in by_class {
        idx.shuffle(&mut rng_from(&[seed, label as u64]));
        let n_test = ((idx.len() as f64 * test_fraction).ceil() as usize)
            .clamp(1, idx.len().saturating_sub(1).max(1));
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub fn gather_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let d = t.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
    }
    Tensor::matrix(data, idx.len(), d).expect("gathered rows are finite")
}

fn encode_features(cfg: &ExperimentConfig, models: &TrainedModels, x: &Tensor) -> CliResult<Tensor> {
    let h = models.encoder.forward(x).map_err(CliError::Core)?;
    if cfg.eval.use_head {
        Ok(models.head.forward(&h).map_err(CliError::Core)?)
    } else {
        Ok(h)
    }
}

/// The full metric report on frozen features: probe + 5-NN on the stratified
/// split, distribution metrics on the test side, alignment/uniformity on one
/// seeded augmentation pass over the test ancestors.
pub fn evaluate_models(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    models: &TrainedModels,
) -> CliResult<MetricsReport> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluation requires a labeled dataset".into()))?;
    let (train_idx, test_idx) = split_indices(
        labels,
        cfg.eval.test_fraction,
        mix_seq(&[cfg.seeds.data, SEED_LANE_SPLIT]),
    );
    let feats = encode_features(cfg, models, &dataset.features)?;
    let train_feats = gather_rows(&feats, &train_idx);
    let test_feats = gather_rows(&feats, &test_idx);
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();

    let linear_acc = linear_probe(
        &train_feats,
        &train_labels,
        &test_feats,
        &test_labels,
        &cfg.probe,
    )
    .map_err(CliError::Core)?;
    let knn_acc = knn_classify(
        &train_feats,
        &train_labels,
        &test_feats,
        &test_labels,
        cfg.eval.knn_k,
        cfg.eval.knn_metric,
    )
    .map_err(CliError::Core)?;
    let mean_ce = mean_classifier_ce(&test_feats, &test_labels).map_err(CliError::Core)?;
    let cond_variance = conditional_variance(&test_feats, &test_labels).map_err(CliError::Core)?;
    let compact = intra_compactness(&test_feats, &test_labels).map_err(CliError::Core)?;
    let separ = separability(&test_feats, &test_labels).map_err(CliError::Core)?;

    // Alignment/uniformity over one augmentation pass on the test ancestors.
    let d = dataset.dim();
    let mut v1 = Vec::with_capacity(test_idx.len() * d);
    let mut v2 = Vec::with_capacity(test_idx.len() * d);
    for (slot, &i) in test_idx.iter().enumerate() {
        let mut rng = rng_from(&[cfg.seeds.data, SEED_LANE_EVAL_AUG, slot as u64]);
        let (a, b) = glf_core::data::augment_pair(dataset.feature_row(i), &cfg.augment, &mut rng);
        v1.extend(a);
        v2.extend(b);
    }
    let e1 = encode_features(
        cfg,
        models,
        &Tensor::matrix(v1, test_idx.len(), d).map_err(CliError::Core)?,
    )?;
    let e2 = encode_features(
        cfg,
        models,
        &Tensor::matrix(v2, test_idx.len(), d).map_err(CliError::Core)?,
    )?;
    // Drop pairs where either view encodes to a zero row (cannot normalize).
    let keep: Vec<usize> = (0..test_idx.len())
        .filter(|&i| row_norm(&e1, i) > 0.0 && row_norm(&e2, i) > 0.0)
        .collect();
    let (alignment, uniformity) = if keep.len() >= 2 {
        let n1 = gather_rows(&e1, &keep).normalize_rows().map_err(CliError::Core)?;
        let n2 = gather_rows(&e2, &keep).normalize_rows().map_err(CliError::Core)?;
        alignment_uniformity(&n1, &n2).map_err(CliError::Core)?
    } else {
        (0.0, 0.0)
    };

    let report = MetricsReport {
        linear_acc,
        knn_acc,
        mean_ce,
        cond_variance,
        intra_compactness: compact,
        inter_separability: separ,
        alignment,
        uniformity,
    };
    report.validate().map_err(CliError::Core)?;
    Ok(report)
}

fn row_norm(t: &Tensor, i: usize) -> f64 {
    let d = t.cols();
    t.data()[i * d..(i + 1) * d]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
}

/// 5-NN accuracy on encoder features over the standard split, with the train
/// side optionally subsampled; the per-epoch probe of the constraint study.
pub fn quick_knn(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    models: &TrainedModels,
    train_subsample: usize,
) -> CliResult<f64> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluation requires a labeled dataset".into()))?;
    let (train_idx, test_idx) = split_indices(
        labels,
        cfg.eval.test_fraction,
        mix_seq(&[cfg.seeds.data, SEED_LANE_SPLIT]),
    );
    let take = train_subsample.min(train_idx.len()).max(cfg.eval.knn_k);
    // Deterministic spread across classes: stride through the sorted split.
    let stride = (train_idx.len() / take).max(1);
    let sub: Vec<usize> = train_idx.iter().step_by(stride).take(take).copied().collect();
    let feats = encode_features(cfg, models, &dataset.features)?;
    let train_feats = gather_rows(&feats, &sub);
    let test_feats = gather_rows(&feats, &test_idx);
    let train_labels: Vec<usize> = sub.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    Ok(knn_classify(
        &train_feats,
        &train_labels,
        &test_feats,
        &test_labels,
        cfg.eval.knn_k,
        cfg.eval.knn_metric,
    )
    .map_err(CliError::Core)?)
}
