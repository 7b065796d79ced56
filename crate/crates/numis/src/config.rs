//! Run configuration: a line-oriented `key = value` file shared by all
//! subcommands, with CLI flags overriding file values.

use crate::error::{Error, Result};
use crate::preprocess::Layout;
use crate::saliency::Fill;
use crate::synth::{SynthSpec, DEFAULT_CONCEPTS};
use crate::train::{MonitorSeries, TrainConfig};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyPreset {
    Paper,
    Mini,
}

impl TopologyPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(TopologyPreset::Paper),
            "mini" => Ok(TopologyPreset::Mini),
            other => Err(Error::Config(format!("unknown topology preset {other:?}"))),
        }
    }

    pub fn input_side(&self) -> usize {
        match self {
            TopologyPreset::Paper => 300,
            TopologyPreset::Mini => 100,
        }
    }
}

/// How occlusion windows are filled, as written in the config file:
/// `mean` (training-set per-channel mean) or `constant:<v>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillSpec {
    DatasetMean,
    Constant(f32),
}

impl FillSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(FillSpec::DatasetMean);
        }
        if let Some(v) = s.strip_prefix("constant:") {
            let v: f32 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad constant fill {v:?}")))?;
            return Ok(FillSpec::Constant(v));
        }
        Err(Error::Config(format!(
            "fill must be \"mean\" or \"constant:<v>\", got {s:?}"
        )))
    }

    /// Resolve to a concrete fill, computing the dataset mean lazily.
    pub fn resolve(&self, mean: impl FnOnce() -> Result<Fill>) -> Result<Fill> {
        match self {
            FillSpec::Constant(v) => Ok(Fill::Constant(*v)),
            FillSpec::DatasetMean => mean(),
        }
    }
}

/// Merged view of all stage configurations.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub concepts: Vec<String>,
    pub concept: Option<String>,

    // synth
    pub synth_n_samples: usize,
    pub synth_positive_rate: f64,
    pub synth_label_noise_rate: f64,
    pub synth_image_side: usize,
    pub synth_format: String,

    // dataset
    pub split_ratios: (f64, f64, f64),
    pub balance: bool,
    pub layout: Layout,

    // training
    pub batch_size: usize,
    pub max_epochs: usize,
    pub loss_threshold: f64,
    pub patience: usize,
    pub lr: f32,
    pub monitor: MonitorSeries,
    pub topology: TopologyPreset,
    pub literal_final_relu: bool,
    pub literal_output_dropout: bool,

    // saliency
    pub saliency_kernels: Vec<usize>,
    pub saliency_stride: Option<usize>,
    pub saliency_fill: FillSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: PathBuf::from("runs/out"),
            corpus_dir: None,
            lexicon: None,
            jobs: None,
            concepts: DEFAULT_CONCEPTS.iter().map(|s| s.to_string()).collect(),
            concept: None,
            synth_n_samples: 1000,
            synth_positive_rate: 0.3,
            synth_label_noise_rate: 0.0,
            synth_image_side: 100,
            synth_format: "ppm".to_string(),
            split_ratios: (0.70, 0.15, 0.15),
            balance: true,
            layout: Layout::Single,
            batch_size: 24,
            max_epochs: 200,
            loss_threshold: 0.001,
            patience: 30,
            lr: 1e-4,
            monitor: MonitorSeries::TrainLoss,
            topology: TopologyPreset::Mini,
            literal_final_relu: false,
            literal_output_dropout: false,
            saliency_kernels: vec![32, 48, 64],
            saliency_stride: None,
            saliency_fill: FillSpec::DatasetMean,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = RunConfig::default();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected \"key = value\", got {line:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_num = |k: &str, v: &str| Error::Config(format!("bad number for {k}: {v:?}"));
        match key {
            "seed" => self.seed = Some(value.parse().map_err(|_| bad_num(key, value))?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "corpus_dir" => self.corpus_dir = Some(PathBuf::from(value)),
            "lexicon" => self.lexicon = Some(PathBuf::from(value)),
            "jobs" => self.jobs = Some(value.parse().map_err(|_| bad_num(key, value))?),
            "concepts" => {
                self.concepts = value
                    .split(',')
                    .map(|s| s.trim().to_lowercase())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "concept" => self.concept = Some(value.to_lowercase()),
            "synth.n_samples" => {
                self.synth_n_samples = value.parse().map_err(|_| bad_num(key, value))?
            }
            "synth.positive_rate" => {
                self.synth_positive_rate = value.parse().map_err(|_| bad_num(key, value))?
            }
            "synth.label_noise_rate" => {
                self.synth_label_noise_rate = value.parse().map_err(|_| bad_num(key, value))?
            }
            "synth.image_side" => {
                self.synth_image_side = value.parse().map_err(|_| bad_num(key, value))?
            }
            "synth.format" => self.synth_format = value.to_string(),
            "split.train" => self.split_ratios.0 = value.parse().map_err(|_| bad_num(key, value))?,
            "split.val" => self.split_ratios.1 = value.parse().map_err(|_| bad_num(key, value))?,
            "split.test" => self.split_ratios.2 = value.parse().map_err(|_| bad_num(key, value))?,
            "split.balance" => self.balance = parse_bool(key, value)?,
            "layout" => self.layout = Layout::parse(value)?,
            "train.batch_size" => self.batch_size = value.parse().map_err(|_| bad_num(key, value))?,
            "train.max_epochs" => self.max_epochs = value.parse().map_err(|_| bad_num(key, value))?,
            "train.loss_threshold" => {
                self.loss_threshold = value.parse().map_err(|_| bad_num(key, value))?
            }
            "train.patience" => self.patience = value.parse().map_err(|_| bad_num(key, value))?,
            "train.lr" => self.lr = value.parse().map_err(|_| bad_num(key, value))?,
            "train.monitor" => {
                self.monitor = match value {
                    "train_loss" => MonitorSeries::TrainLoss,
                    "val_loss" => MonitorSeries::ValLoss,
                    other => {
                        return Err(Error::Config(format!("unknown monitor series {other:?}")))
                    }
                }
            }
            "topology" => self.topology = TopologyPreset::parse(value)?,
            "topology.literal_final_relu" => self.literal_final_relu = parse_bool(key, value)?,
            "topology.literal_output_dropout" => {
                self.literal_output_dropout = parse_bool(key, value)?
            }
            "saliency.kernels" => {
                self.saliency_kernels = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad_num(key, s)))
                    .collect::<Result<_>>()?;
            }
            "saliency.stride" => {
                let v: usize = value.parse().map_err(|_| bad_num(key, value))?;
                self.saliency_stride = if v == 0 { None } else { Some(v) };
            }
            "saliency.fill" => self.saliency_fill = FillSpec::parse(value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("seed is required for synth".into()))?;
        Ok(SynthSpec {
            n_samples: self.synth_n_samples,
            concepts: self.concepts.clone(),
            positive_rate: self.synth_positive_rate,
            label_noise_rate: self.synth_label_noise_rate,
            image_side: self.synth_image_side,
            seed,
            format: self.synth_format.clone(),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("seed is required for train".into()))?;
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            loss_threshold: self.loss_threshold,
            patience: self.patience,
            lr: self.lr,
            seed,
            monitor: self.monitor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The concepts a per-concept command operates on: `concept` if set,
    /// otherwise all configured concepts.
    pub fn selected_concepts(&self) -> Vec<String> {
        match &self.concept {
            Some(c) => vec![c.clone()],
            None => self.concepts.clone(),
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("bad boolean for {key}: {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# a comment\n\
             seed = 7\n\
             out_dir = runs/exp1\n\
             synth.n_samples = 500\n\
             train.lr = 0.0005\n\
             topology = paper\n\
             saliency.kernels = 11, 16, 21\n\
             saliency.fill = constant:0.5\n",
        )
        .unwrap();
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.out_dir, PathBuf::from("runs/exp1"));
        assert_eq!(cfg.synth_n_samples, 500);
        assert!((cfg.lr - 5e-4).abs() < 1e-9);
        assert_eq!(cfg.topology, TopologyPreset::Paper);
        assert_eq!(cfg.saliency_kernels, vec![11, 16, 21]);
        assert_eq!(cfg.saliency_fill, FillSpec::Constant(0.5));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("trian.lr", "0.1"), Err(Error::Config(_))));
    }

    #[test]
    fn seed_required_for_training() {
        let cfg = RunConfig::default();
        assert!(cfg.train_config().is_err());
        let mut cfg = cfg;
        cfg.set("seed", "3").unwrap();
        assert!(cfg.train_config().is_ok());
    }

    #[test]
    fn fill_spec_forms() {
        assert_eq!(FillSpec::parse("mean").unwrap(), FillSpec::DatasetMean);
        assert_eq!(
            FillSpec::parse("constant:0.25").unwrap(),
            FillSpec::Constant(0.25)
        );
        assert!(FillSpec::parse("avg").is_err());
    }
}
