//! Shared fixtures for the integration tests.

#![allow(dead_code)]

use mhlift::harness::ExperimentConfig;

/// A pipeline small enough to run end to end in a few seconds.
pub const SMALL_CONFIG: &str = r#"
[dataset]
count = 660
seed = 3

[lifter]
hidden_dim = 32
block_count = 1
epochs = 4
batch_size = 64

[avg]
hidden_dim = 16
epochs = 3
batch_size = 64
decay_epoch = 2

[eval]
strategies = ["no_adapted", "sample_joints_adapted"]
layers = ["pre"]
samples = [1, 5]
paradigms = ["independent"]
seeds = [0, 1, 2]
test_limit = 20

[output]
export_samples = 2
export_hypotheses = 3
"#;

pub fn small_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL_CONFIG).unwrap()
}
