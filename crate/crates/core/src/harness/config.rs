//! Experiment configuration, read from TOML with every field defaulted.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::avgnoise::{AvgConfig, Paradigm};
use crate::error::{Error, Result};
use crate::lifter::LifterConfig;
use crate::metrics::{ProtocolKind, Selection, DEFAULT_PCK_THRESHOLD_MM};
use crate::sampler::{Layer, NoiseKind, NoiseStrategy};
use crate::synthgen::{DatasetConfig, DatasetFiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Existing directory with `train.jsonl` and `test.jsonl`; when set, `[dataset]` is not used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub lifter: LifterConfig,
    pub avg: AvgConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub strategies: Vec<NoiseKind>,
    pub layers: Vec<Layer>,
    pub alphas: Vec<f64>,
    pub samples: Vec<usize>,
    pub paradigms: Vec<Paradigm>,
    /// Each seed trains its own variance networks and draws its own hypotheses.
    pub seeds: Vec<u64>,
    pub protocols: Vec<ProtocolKind>,
    pub selections: Vec<Selection>,
    pub pck_threshold_mm: f64,
    /// Evaluate only the first N test samples; 0 means all.
    pub test_limit: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            strategies: NoiseKind::ALL.to_vec(),
            layers: vec![Layer::PreSample, Layer::PostSample],
            alphas: vec![0.005],
            samples: vec![1, 5, 10, 50, 200],
            paradigms: vec![Paradigm::Independent, Paradigm::Shared],
            seeds: vec![0, 1, 2],
            protocols: vec![ProtocolKind::P1, ProtocolKind::P2],
            selections: vec![Selection::PBest, Selection::JBest],
            pck_threshold_mm: DEFAULT_PCK_THRESHOLD_MM,
            test_limit: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Test samples written to each hypothesis export file.
    pub export_samples: usize,
    /// Hypotheses per exported sample.
    pub export_hypotheses: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/reference"),
            export_samples: 8,
            export_hypotheses: 10,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_dir: None,
            dataset: DatasetConfig::default(),
            lifter: LifterConfig::default(),
            avg: AvgConfig::default(),
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Config(format!("at least one {what} is required")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.eval;
        nonempty(&e.strategies, "strategy")?;
        nonempty(&e.layers, "layer")?;
        nonempty(&e.alphas, "alpha")?;
        nonempty(&e.samples, "sample count")?;
        nonempty(&e.seeds, "seed")?;
        nonempty(&e.protocols, "protocol")?;
        nonempty(&e.selections, "selection")?;
        if e.strategies.iter().any(|k| k.uses_avg()) {
            nonempty(&e.paradigms, "paradigm")?;
        }
        for &alpha in &e.alphas {
            NoiseStrategy::new(NoiseKind::NoAdapted, alpha, Layer::PreSample)?;
        }
        if e.samples.contains(&0) {
            return Err(Error::Config("sample counts must be >= 1".into()));
        }
        if !(e.pck_threshold_mm.is_finite() && e.pck_threshold_mm > 0.0) {
            return Err(Error::Config(format!(
                "pck_threshold_mm must be positive, got {}",
                e.pck_threshold_mm
            )));
        }
        match &self.dataset_dir {
            Some(dir) => {
                let files = DatasetFiles::in_dir(dir);
                for path in [&files.train, &files.test] {
                    if !path.is_file() {
                        return Err(Error::Config(format!(
                            "dataset file {} does not exist",
                            path.display()
                        )));
                    }
                }
            }
            None => {
                self.dataset.split_counts()?;
                self.dataset.noise_profile()?;
            }
        }
        if self.lifter.batch_size == 0 || self.avg.batch_size == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_samples(&self) -> usize {
        self.eval.samples.iter().copied().max().unwrap_or(1)
    }
}
