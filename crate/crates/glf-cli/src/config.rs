//! Flat, typed key-value experiment configuration.
//!
//! The format is one `section.key = value` pair per line, `#` comments,
//! diff-friendly for sweep generation. `write_echo` emits every key in a
//! fixed canonical order; parsing an echo reproduces the identical config
//! (closure property used by the reproducibility contracts).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use glf_core::data::{AugmentationSpec, FileFormat, SyntheticKind, SyntheticSpec};
use glf_core::eval::{KnnMetric, ProbeConfig};
use glf_core::loss::{
    AligningKind, AligningPartSpec, ConstrainingKind, ConstrainingPartSpec, LpmVariant,
};
use glf_core::model::{Activation, FinalActivation, MlpSpec, PriorEncoderSpec, PriorKind};
use glf_core::stats::TForm;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    File { path: PathBuf, format: FileFormat },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub data: u64,
    pub model: u64,
    pub train: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub knn_k: usize,
    pub knn_metric: KnnMetric,
    /// Evaluate on projection-head output instead of encoder output.
    pub use_head: bool,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub epochs: usize,
    /// Training-side subsample for the per-epoch 5-NN probe.
    pub knn_train_subsample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub nu_grid: Vec<f64>,
    pub upsilon_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub augment: AugmentationSpec,
    pub encoder: MlpSpec,
    pub head: MlpSpec,
    pub predictor: MlpSpec,
    pub prior: PriorEncoderSpec,
    pub aligning: AligningPartSpec,
    pub constraining: ConstrainingPartSpec,
    /// Concentration for the `concentrated` LPM variant; carried separately
    /// so the key applies regardless of ordering against `lpm_variant`.
    pub lpm_c: f64,
    pub optimizer: OptimConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    pub probe: ProbeConfig,
    pub eval: EvalConfig,
    pub toy: ToyConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic(SyntheticSpec {
                kind: SyntheticKind::Blobs,
                n_classes: 4,
                dim: 32,
                samples_per_class: 500,
                class_separation: 6.0,
                spread: 1.0,
                seed: 0, // overwritten by seeds.data at build time
            }),
            augment: AugmentationSpec {
                noise_sigma: 0.2,
                dropout_p: 0.0,
                scale_min: 0.97,
                scale_max: 1.03,
            },
            encoder: MlpSpec::new(vec![32, 64, 32], Activation::Relu, FinalActivation::None),
            head: MlpSpec::new(vec![32, 64, 8], Activation::Relu, FinalActivation::L2Normalize),
            predictor: MlpSpec::new(vec![8, 8], Activation::Relu, FinalActivation::None),
            prior: PriorEncoderSpec::identity(),
            aligning: AligningPartSpec::default(),
            constraining: ConstrainingPartSpec::default(),
            lpm_c: 32.0,
            optimizer: OptimConfig {
                lr_initial: 0.05,
                lr_final: 1e-4,
                momentum: 0.9,
                weight_decay: 5e-6,
            },
            epochs: 200,
            batch_size: 64,
            seeds: Seeds {
                data: 1,
                model: 2,
                train: 3,
            },
            output_dir: PathBuf::from("runs/default"),
            probe: ProbeConfig::default(),
            eval: EvalConfig {
                knn_k: 5,
                knn_metric: KnnMetric::Euclidean,
                use_head: false,
                test_fraction: 0.2,
            },
            toy: ToyConfig {
                epochs: 40,
                knn_train_subsample: 500,
            },
            sweep: SweepConfig {
                nu_grid: paper_grid(),
                upsilon_grid: paper_grid(),
            },
        }
    }
}

/// The seven-point log grid used by the sensitivity sweep.
pub fn paper_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::from_str_source(&text)
    }

    pub fn from_str_source(text: &str) -> CliResult<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut pairs = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> CliResult<()> {
        let bad = |what: &str| CliError::Config(format!("{key}: cannot parse '{value}' as {what}"));
        macro_rules! num {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad($what))?
            };
        }
        match key {
            "dataset.kind" => match value {
                "blobs" | "moons" | "rings" => {
                    let kind = match value {
                        "blobs" => SyntheticKind::Blobs,
                        "moons" => SyntheticKind::Moons,
                        _ => SyntheticKind::Rings,
                    };
                    match &mut self.dataset {
                        DatasetConfig::Synthetic(s) => s.kind = kind,
                        file => {
                            let mut spec = default_synthetic();
                            spec.kind = kind;
                            *file = DatasetConfig::Synthetic(spec);
                        }
                    }
                }
                "file" => {
                    if !matches!(self.dataset, DatasetConfig::File { .. }) {
                        self.dataset = DatasetConfig::File {
                            path: PathBuf::new(),
                            format: FileFormat::DelimitedText,
                        };
                    }
                }
                _ => return Err(bad("one of blobs|moons|rings|file")),
            },
            "dataset.n_classes" => self.synthetic_mut(key)?.n_classes = num!(usize, "an integer"),
            "dataset.dim" => self.synthetic_mut(key)?.dim = num!(usize, "an integer"),
            "dataset.samples_per_class" => {
                self.synthetic_mut(key)?.samples_per_class = num!(usize, "an integer")
            }
            "dataset.class_separation" => {
                self.synthetic_mut(key)?.class_separation = num!(f64, "a number")
            }
            "dataset.spread" => self.synthetic_mut(key)?.spread = num!(f64, "a number"),
            "dataset.path" => match &mut self.dataset {
                DatasetConfig::File { path, .. } => *path = PathBuf::from(value),
                _ => return Err(CliError::Config(format!("{key}: set dataset.kind = file first"))),
            },
            "dataset.format" => match &mut self.dataset {
                DatasetConfig::File { format, .. } => {
                    *format = match value {
                        "delimited_text" => FileFormat::DelimitedText,
                        "raw_f64" => FileFormat::RawF64,
                        _ => return Err(bad("delimited_text|raw_f64")),
                    }
                }
                _ => return Err(CliError::Config(format!("{key}: set dataset.kind = file first"))),
            },
            "augment.noise_sigma" => self.augment.noise_sigma = num!(f64, "a number"),
            "augment.dropout_p" => self.augment.dropout_p = num!(f64, "a number"),
            "augment.scale_min" => self.augment.scale_min = num!(f64, "a number"),
            "augment.scale_max" => self.augment.scale_max = num!(f64, "a number"),
            "encoder.widths" => self.encoder.layer_widths = parse_widths(key, value)?,
            "encoder.activation" => self.encoder.activation = parse_activation(key, value)?,
            "encoder.final_activation" => {
                self.encoder.final_activation = parse_final_activation(key, value)?
            }
            "head.widths" => self.head.layer_widths = parse_widths(key, value)?,
            "head.activation" => self.head.activation = parse_activation(key, value)?,
            "head.final_activation" => {
                self.head.final_activation = parse_final_activation(key, value)?
            }
            "predictor.widths" => self.predictor.layer_widths = parse_widths(key, value)?,
            "predictor.activation" => self.predictor.activation = parse_activation(key, value)?,
            "predictor.final_activation" => {
                self.predictor.final_activation = parse_final_activation(key, value)?
            }
            "prior.kind" => {
                self.prior.kind = match value {
                    "identity" => PriorKind::Identity,
                    "random_projection" => PriorKind::RandomProjection,
                    "file" => PriorKind::File,
                    _ => return Err(bad("identity|random_projection|file")),
                }
            }
            "prior.seed" => self.prior.seed = num!(u64, "an integer"),
            "prior.path" => self.prior.path = value.to_string(),
            "prior.output_dim" => self.prior.output_dim = num!(usize, "an integer"),
            "aligning.kind" => {
                self.aligning.kind = match value {
                    "info_nce" => AligningKind::InfoNce,
                    "align_only" => AligningKind::AlignOnly,
                    "simsiam" => AligningKind::SimSiam,
                    "barlow_twins" => AligningKind::BarlowTwins,
                    _ => return Err(bad("info_nce|align_only|simsiam|barlow_twins")),
                }
            }
            "aligning.tau" => self.aligning.tau = num!(f64, "a number"),
            "aligning.lambda_bt" => self.aligning.lambda_bt = num!(f64, "a number"),
            "constraining.kind" => {
                self.constraining.kind = match value {
                    "none" => ConstrainingKind::None,
                    "dcm" => ConstrainingKind::Dcm,
                    "lpm" => ConstrainingKind::Lpm,
                    "adc" => ConstrainingKind::Adc,
                    "uniform_sphere" => ConstrainingKind::UniformSphere,
                    "uniform_cube" => ConstrainingKind::UniformCube,
                    "gauss_full" => ConstrainingKind::GaussFull,
                    "gauss_identity" => ConstrainingKind::GaussIdentity,
                    "gauss_mixture" => ConstrainingKind::GaussMixture,
                    _ => {
                        return Err(bad(
                            "none|dcm|lpm|adc|uniform_sphere|uniform_cube|gauss_full|gauss_identity|gauss_mixture",
                        ))
                    }
                }
            }
            "constraining.rho" => self.constraining.adc.rho = num!(f64, "a number"),
            "constraining.lambda_shrink" => {
                self.constraining.adc.lambda_shrink = num!(f64, "a number")
            }
            "constraining.nu" => self.constraining.nu = num!(f64, "a number"),
            "constraining.upsilon" => self.constraining.upsilon = num!(f64, "a number"),
            "constraining.eps_entropy" => {
                self.constraining.adc.eps_entropy = num!(f64, "a number")
            }
            "constraining.lpm_variant" => {
                self.constraining.lpm_variant = match value {
                    "shifted" => LpmVariant::Shifted,
                    "literal" => LpmVariant::Literal,
                    "concentrated" => LpmVariant::Concentrated(self.lpm_c),
                    _ => return Err(bad("shifted|literal|concentrated")),
                }
            }
            "constraining.lpm_c" => {
                self.lpm_c = num!(f64, "a number");
                if let LpmVariant::Concentrated(ref mut cur) = self.constraining.lpm_variant {
                    *cur = self.lpm_c;
                }
            }
            "constraining.t_form" => {
                self.constraining.adc.t_form = match value {
                    "standard" => TForm::Standard,
                    "paper_literal" | "paper-literal" => TForm::PaperLiteral,
                    _ => return Err(bad("standard|paper_literal")),
                }
            }
            "constraining.dbscan_eps" => {
                self.constraining.baseline.dbscan_eps = num!(f64, "a number")
            }
            "constraining.dbscan_min_pts" => {
                self.constraining.baseline.dbscan_min_pts = num!(usize, "an integer")
            }
            "constraining.kernel_t" => self.constraining.baseline.kernel_t = num!(f64, "a number"),
            "optimizer.lr_initial" => self.optimizer.lr_initial = num!(f64, "a number"),
            "optimizer.lr_final" => self.optimizer.lr_final = num!(f64, "a number"),
            "optimizer.momentum" => self.optimizer.momentum = num!(f64, "a number"),
            "optimizer.weight_decay" => self.optimizer.weight_decay = num!(f64, "a number"),
            "epochs" => self.epochs = num!(usize, "an integer"),
            "batch_size" => self.batch_size = num!(usize, "an integer"),
            "seeds.data" => self.seeds.data = num!(u64, "an integer"),
            "seeds.model" => self.seeds.model = num!(u64, "an integer"),
            "seeds.train" => self.seeds.train = num!(u64, "an integer"),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "probe.epochs" => self.probe.epochs = num!(usize, "an integer"),
            "probe.momentum" => self.probe.momentum = num!(f64, "a number"),
            "probe.weight_decay" => self.probe.weight_decay = num!(f64, "a number"),
            "probe.lr_initial" => self.probe.lr_initial = num!(f64, "a number"),
            "probe.lr_final" => self.probe.lr_final = num!(f64, "a number"),
            "eval.knn_k" => self.eval.knn_k = num!(usize, "an integer"),
            "eval.knn_metric" => {
                self.eval.knn_metric = match value {
                    "euclidean" => KnnMetric::Euclidean,
                    "cosine" => KnnMetric::Cosine,
                    _ => return Err(bad("euclidean|cosine")),
                }
            }
            "eval.use_head" => self.eval.use_head = parse_bool(key, value)?,
            "eval.test_fraction" => self.eval.test_fraction = num!(f64, "a number"),
            "toy.epochs" => self.toy.epochs = num!(usize, "an integer"),
            "toy.knn_train_subsample" => {
                self.toy.knn_train_subsample = num!(usize, "an integer")
            }
            "sweep.nu_grid" => self.sweep.nu_grid = parse_grid(key, value)?,
            "sweep.upsilon_grid" => self.sweep.upsilon_grid = parse_grid(key, value)?,
            _ => return Err(CliError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    fn synthetic_mut(&mut self, key: &str) -> CliResult<&mut SyntheticSpec> {
        match &mut self.dataset {
            DatasetConfig::Synthetic(s) => Ok(s),
            _ => Err(CliError::Config(format!(
                "{key}: only valid for synthetic dataset kinds"
            ))),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let field = |name: &str, e: glf_core::Error| CliError::Config(format!("{name}: {e}"));
        match &self.dataset {
            DatasetConfig::Synthetic(s) => s.validate().map_err(|e| field("dataset", e))?,
            DatasetConfig::File { path, .. } => {
                if path.as_os_str().is_empty() {
                    return Err(CliError::Config("dataset.path: missing file path".into()));
                }
            }
        }
        self.augment.validate().map_err(|e| field("augment", e))?;
        self.encoder.validate().map_err(|e| field("encoder", e))?;
        self.head.validate().map_err(|e| field("head", e))?;
        self.predictor.validate().map_err(|e| field("predictor", e))?;
        self.aligning.validate().map_err(|e| field("aligning", e))?;
        self.constraining
            .validate()
            .map_err(|e| field("constraining", e))?;
        self.probe.validate().map_err(|e| field("probe", e))?;
        if let DatasetConfig::Synthetic(s) = &self.dataset {
            if self.encoder.input_dim() != s.dim {
                return Err(CliError::Config(format!(
                    "encoder.widths: input width {} does not match dataset.dim {}",
                    self.encoder.input_dim(),
                    s.dim
                )));
            }
        }
        if self.head.input_dim() != self.encoder.output_dim() {
            return Err(CliError::Config(format!(
                "head.widths: input width {} does not match encoder output {}",
                self.head.input_dim(),
                self.encoder.output_dim()
            )));
        }
        if self.aligning.kind == AligningKind::SimSiam
            && (self.predictor.input_dim() != self.head.output_dim()
                || self.predictor.output_dim() != self.head.output_dim())
        {
            return Err(CliError::Config(format!(
                "predictor.widths: simsiam predictor must map {d} -> {d}",
                d = self.head.output_dim()
            )));
        }
        if self.batch_size < 3 {
            return Err(CliError::Config("batch_size: must be at least 3".into()));
        }
        if self.optimizer.lr_initial <= 0.0 || self.optimizer.lr_final <= 0.0 {
            return Err(CliError::Config(
                "optimizer: learning rates must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(CliError::Config(
                "optimizer.momentum: must lie in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) || self.eval.test_fraction == 0.0 {
            return Err(CliError::Config(
                "eval.test_fraction: must lie in (0, 1)".into(),
            ));
        }
        if self.eval.knn_k == 0 {
            return Err(CliError::Config("eval.knn_k: must be at least 1".into()));
        }
        if self.sweep.nu_grid.is_empty() || self.sweep.upsilon_grid.is_empty() {
            return Err(CliError::Config("sweep: grids must be non-empty".into()));
        }
        Ok(())
    }

    /// Canonical echo: every key, fixed order, shortest round-trip floats.
    pub fn write_echo(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                push(
                    "dataset.kind",
                    match s.kind {
                        SyntheticKind::Blobs => "blobs",
                        SyntheticKind::Moons => "moons",
                        SyntheticKind::Rings => "rings",
                    }
                    .into(),
                );
                push("dataset.n_classes", s.n_classes.to_string());
                push("dataset.dim", s.dim.to_string());
                push("dataset.samples_per_class", s.samples_per_class.to_string());
                push("dataset.class_separation", s.class_separation.to_string());
                push("dataset.spread", s.spread.to_string());
            }
            DatasetConfig::File { path, format } => {
                push("dataset.kind", "file".into());
                push("dataset.path", path.display().to_string());
                push(
                    "dataset.format",
                    match format {
                        FileFormat::DelimitedText => "delimited_text",
                        FileFormat::RawF64 => "raw_f64",
                    }
                    .into(),
                );
            }
        }
        push("augment.noise_sigma", self.augment.noise_sigma.to_string());
        push("augment.dropout_p", self.augment.dropout_p.to_string());
        push("augment.scale_min", self.augment.scale_min.to_string());
        push("augment.scale_max", self.augment.scale_max.to_string());
        for (prefix, mlp) in [
            ("encoder", &self.encoder),
            ("head", &self.head),
            ("predictor", &self.predictor),
        ] {
            push(&format!("{prefix}.widths"), widths_string(&mlp.layer_widths));
            push(
                &format!("{prefix}.activation"),
                match mlp.activation {
                    Activation::Relu => "relu",
                    Activation::Tanh => "tanh",
                }
                .into(),
            );
            push(
                &format!("{prefix}.final_activation"),
                match mlp.final_activation {
                    FinalActivation::None => "none",
                    FinalActivation::L2Normalize => "l2_normalize",
                }
                .into(),
            );
        }
        push(
            "prior.kind",
            match self.prior.kind {
                PriorKind::Identity => "identity",
                PriorKind::RandomProjection => "random_projection",
                PriorKind::File => "file",
            }
            .into(),
        );
        push("prior.seed", self.prior.seed.to_string());
        push("prior.path", self.prior.path.clone());
        push("prior.output_dim", self.prior.output_dim.to_string());
        push(
            "aligning.kind",
            match self.aligning.kind {
                AligningKind::InfoNce => "info_nce",
                AligningKind::AlignOnly => "align_only",
                AligningKind::SimSiam => "simsiam",
                AligningKind::BarlowTwins => "barlow_twins",
            }
            .into(),
        );
        push("aligning.tau", self.aligning.tau.to_string());
        push("aligning.lambda_bt", self.aligning.lambda_bt.to_string());
        push(
            "constraining.kind",
            match self.constraining.kind {
                ConstrainingKind::None => "none",
                ConstrainingKind::Dcm => "dcm",
                ConstrainingKind::Lpm => "lpm",
                ConstrainingKind::Adc => "adc",
                ConstrainingKind::UniformSphere => "uniform_sphere",
                ConstrainingKind::UniformCube => "uniform_cube",
                ConstrainingKind::GaussFull => "gauss_full",
                ConstrainingKind::GaussIdentity => "gauss_identity",
                ConstrainingKind::GaussMixture => "gauss_mixture",
            }
            .into(),
        );
        push("constraining.rho", self.constraining.adc.rho.to_string());
        push(
            "constraining.lambda_shrink",
            self.constraining.adc.lambda_shrink.to_string(),
        );
        push("constraining.nu", self.constraining.nu.to_string());
        push("constraining.upsilon", self.constraining.upsilon.to_string());
        push(
            "constraining.eps_entropy",
            self.constraining.adc.eps_entropy.to_string(),
        );
        let (variant, c) = match self.constraining.lpm_variant {
            LpmVariant::Shifted => ("shifted", self.lpm_c),
            LpmVariant::Literal => ("literal", self.lpm_c),
            LpmVariant::Concentrated(c) => ("concentrated", c),
        };
        push("constraining.lpm_variant", variant.into());
        push("constraining.lpm_c", c.to_string());
        push(
            "constraining.t_form",
            match self.constraining.adc.t_form {
                TForm::Standard => "standard",
                TForm::PaperLiteral => "paper_literal",
            }
            .into(),
        );
        push(
            "constraining.dbscan_eps",
            self.constraining.baseline.dbscan_eps.to_string(),
        );
        push(
            "constraining.dbscan_min_pts",
            self.constraining.baseline.dbscan_min_pts.to_string(),
        );
        push(
            "constraining.kernel_t",
            self.constraining.baseline.kernel_t.to_string(),
        );
        push("optimizer.lr_initial", self.optimizer.lr_initial.to_string());
        push("optimizer.lr_final", self.optimizer.lr_final.to_string());
        push("optimizer.momentum", self.optimizer.momentum.to_string());
        push(
            "optimizer.weight_decay",
            self.optimizer.weight_decay.to_string(),
        );
        push("epochs", self.epochs.to_string());
        push("batch_size", self.batch_size.to_string());
        push("seeds.data", self.seeds.data.to_string());
        push("seeds.model", self.seeds.model.to_string());
        push("seeds.train", self.seeds.train.to_string());
        push("output_dir", self.output_dir.display().to_string());
        push("probe.epochs", self.probe.epochs.to_string());
        push("probe.momentum", self.probe.momentum.to_string());
        push("probe.weight_decay", self.probe.weight_decay.to_string());
        push("probe.lr_initial", self.probe.lr_initial.to_string());
        push("probe.lr_final", self.probe.lr_final.to_string());
        push("eval.knn_k", self.eval.knn_k.to_string());
        push(
            "eval.knn_metric",
            match self.eval.knn_metric {
                KnnMetric::Euclidean => "euclidean",
                KnnMetric::Cosine => "cosine",
            }
            .into(),
        );
        push("eval.use_head", self.eval.use_head.to_string());
        push("eval.test_fraction", self.eval.test_fraction.to_string());
        push("toy.epochs", self.toy.epochs.to_string());
        push(
            "toy.knn_train_subsample",
            self.toy.knn_train_subsample.to_string(),
        );
        push("sweep.nu_grid", grid_string(&self.sweep.nu_grid));
        push("sweep.upsilon_grid", grid_string(&self.sweep.upsilon_grid));
        out
    }

    /// FNV-1a over the canonical echo, as a 16-hex-digit string.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.write_echo().as_bytes()))
    }

    /// The synthetic spec with the data seed substituted in, or the loaded
    /// file description.
    pub fn dataset_with_seed(&self) -> DatasetConfig {
        match &self.dataset {
            DatasetConfig::Synthetic(s) => {
                let mut s = s.clone();
                s.seed = self.seeds.data;
                DatasetConfig::Synthetic(s)
            }
            file => file.clone(),
        }
    }

    /// The effective LPM variant (resolving a pending `lpm_c`).
    pub fn lpm_variant(&self) -> LpmVariant {
        self.constraining.lpm_variant
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn default_synthetic() -> SyntheticSpec {
    match ExperimentConfig::default().dataset {
        DatasetConfig::Synthetic(s) => s,
        _ => unreachable!(),
    }
}

fn widths_string(widths: &[usize]) -> String {
    widths
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn grid_string(grid: &[f64]) -> String {
    grid.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_widths(key: &str, value: &str) -> CliResult<Vec<usize>> {
    value
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("{key}: expected comma-separated widths")))
}

fn parse_grid(key: &str, value: &str) -> CliResult<Vec<f64>> {
    value
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("{key}: expected comma-separated numbers")))
}

fn parse_activation(key: &str, value: &str) -> CliResult<Activation> {
    match value {
        "relu" => Ok(Activation::Relu),
        "tanh" => Ok(Activation::Tanh),
        _ => Err(CliError::Config(format!("{key}: expected relu|tanh"))),
    }
}

fn parse_final_activation(key: &str, value: &str) -> CliResult<FinalActivation> {
    match value {
        "none" => Ok(FinalActivation::None),
        "l2_normalize" => Ok(FinalActivation::L2Normalize),
        _ => Err(CliError::Config(format!("{key}: expected none|l2_normalize"))),
    }
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true|false"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.constraining.kind = ConstrainingKind::Adc;
        cfg.constraining.nu = 0.125;
        cfg.seeds.train = 99;
        let echo = cfg.write_echo();
        let re = ExperimentConfig::from_str_source(&echo).unwrap();
        assert_eq!(cfg, re);
        assert_eq!(cfg.hash(), re.hash());
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = ExperimentConfig::from_str_source("nonsense.key = 1").unwrap_err();
        assert!(err.to_string().contains("nonsense.key"), "{err}");
    }

    #[test]
    fn bad_value_names_the_field() {
        let err = ExperimentConfig::from_str_source("epochs = soon").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn cross_field_validation() {
        let err =
            ExperimentConfig::from_str_source("encoder.widths = 16,8\n").unwrap_err();
        assert!(err.to_string().contains("dataset.dim"), "{err}");
    }

    #[test]
    fn default_sweep_grid_is_the_seven_point_log_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sweep.nu_grid.len(), 7);
        assert_eq!(cfg.sweep.nu_grid[0], 1e-3);
        assert_eq!(cfg.sweep.nu_grid[6], 1e3);
    }
}
