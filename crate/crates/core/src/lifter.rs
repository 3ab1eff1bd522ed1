//! Single-hypothesis 2D-to-3D lifter: a residual MLP from the detected 2D
//! pose (2V) to root-relative 3D joints (3V, mm), trained with a mean L1 loss.
//!
//! Training standardizes inputs per coordinate and targets by one global
//! scale; both affine maps are folded into the network afterwards, so a
//! stored lifter is a plain [`Network`] from raw 2D to millimetres.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::nn::{self, FitConfig, NetSpec, Network, Objective};
use crate::pose::{root_center, Pose2D, Pose3D};
use crate::synthgen::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifterConfig {
    pub hidden_dim: usize,
    pub block_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_epoch: Option<usize>,
    pub decay_factor: f64,
    pub seed: u64,
}

impl Default for LifterConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            block_count: 2,
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            decay_epoch: Some(150),
            decay_factor: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifterModel {
    network: Network,
    pub dataset_hash: String,
    pub epochs: usize,
    /// Mean L1 training loss per epoch, mm.
    pub loss_history: Vec<f64>,
}

/// `(n, 2V)` matrix of detected 2D poses.
pub fn input_matrix(dataset: &Dataset) -> Array2<f64> {
    let cols = 2 * dataset.joint_count();
    let flat: Vec<f64> = dataset
        .records
        .iter()
        .flat_map(|r| r.detected_pose2d.as_slice().iter().copied())
        .collect();
    Array2::from_shape_vec((dataset.len(), cols), flat).expect("validated record shapes")
}

/// `(n, 3V)` matrix of ground-truth 3D poses.
pub fn target_matrix(dataset: &Dataset) -> Array2<f64> {
    let cols = 3 * dataset.joint_count();
    let flat: Vec<f64> = dataset
        .records
        .iter()
        .flat_map(|r| r.gt_pose3d.as_slice().iter().copied())
        .collect();
    Array2::from_shape_vec((dataset.len(), cols), flat).expect("validated record shapes")
}

/// Per-column mean and standard deviation; zero deviations are replaced by 1.
pub(crate) fn column_stats(x: &ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean.to_vec(), std.to_vec())
}

pub fn train_lifter(train: &Dataset, config: &LifterConfig) -> Result<LifterModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let v = train.joint_count();
    let x = input_matrix(train);
    let y = target_matrix(train);

    let (in_mean, in_std) = column_stats(&x.view());
    let out_mean = y.mean_axis(Axis(0)).expect("non-empty");
    let centered = &y - &out_mean;
    let out_scale = centered.std(0.0).max(1e-12);
    let x_norm =
        (&x - &ndarray::Array1::from(in_mean.clone())) / &ndarray::Array1::from(in_std.clone());
    let y_norm = centered / out_scale;

    let spec = NetSpec::residual(2 * v, 3 * v, config.hidden_dim, config.block_count);
    let mut network = Network::init(spec, config.seed)?;
    let fit_config = FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        decay_epoch: config.decay_epoch,
        decay_factor: config.decay_factor,
        seed: config.seed,
    };
    let history = nn::fit(
        &mut network,
        x_norm.view(),
        y_norm.view(),
        Objective::L1,
        &fit_config,
    )?;
    network.fold_input_normalization(&in_mean, &in_std)?;
    network.fold_output_affine(out_scale, out_mean.as_slice().expect("contiguous"))?;
    network.freeze();

    Ok(LifterModel {
        network,
        dataset_hash: train.content_hash.clone(),
        epochs: config.epochs,
        loss_history: history.into_iter().map(|l| l * out_scale).collect(),
    })
}

impl LifterModel {
    /// Wraps an existing network; the lifter is always frozen.
    pub fn from_network(mut network: Network, dataset_hash: String) -> Result<Self> {
        let spec = network.spec();
        if spec.input_dim % 2 != 0
            || spec.output_dim % 3 != 0
            || spec.input_dim / 2 != spec.output_dim / 3
        {
            return Err(Error::Config(format!(
                "lifter network must map 2V inputs to 3V outputs, got {} -> {}",
                spec.input_dim, spec.output_dim
            )));
        }
        network.freeze();
        Ok(Self {
            network,
            dataset_hash,
            epochs: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn joint_count(&self) -> usize {
        self.network.spec().input_dim / 2
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    pub fn lift(&self, pose2d: &Pose2D) -> Result<Pose3D> {
        pose2d.expect_joints(self.joint_count())?;
        root_center(&self.network.forward(pose2d.as_slice())?)
    }

    /// Lifts each row of a `(n, 2V)` matrix.
    pub fn lift_rows(&self, rows: ArrayView2<f64>) -> Result<Vec<Pose3D>> {
        if rows.ncols() != 2 * self.joint_count() {
            return Err(Error::JointCountMismatch {
                expected: self.joint_count(),
                found: rows.ncols() / 2,
            });
        }
        let out = self.network.forward_batch(rows)?;
        out.rows()
            .into_iter()
            .map(|r| root_center(r.as_slice().expect("contiguous row")))
            .collect()
    }

    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("role".to_string(), "lifter".to_string()),
            ("dataset_hash".to_string(), self.dataset_hash.clone()),
            ("epochs".to_string(), self.epochs.to_string()),
            (
                "final_loss_mm".to_string(),
                self.final_loss().map_or("nan".into(), |l| format!("{l:e}")),
            ),
        ])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        nn::encode_checkpoint(&self.network, &self.meta())
    }

    /// SHA-256 of the checkpoint bytes.
    pub fn hash(&self) -> String {
        io::sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }

    /// Loads a lifter checkpoint; the loss history is not stored, only the final value.
    pub fn load(path: &Path) -> Result<Self> {
        let (network, meta) = nn::load_checkpoint_with_meta(path)?;
        if meta.get("role").map(String::as_str) != Some("lifter") {
            return Err(Error::Checkpoint(format!(
                "{} is not a lifter checkpoint",
                path.display()
            )));
        }
        let mut model = Self::from_network(
            network,
            meta.get("dataset_hash").cloned().unwrap_or_default(),
        )?;
        model.epochs = meta.get("epochs").and_then(|e| e.parse().ok()).unwrap_or(0);
        if let Some(l) = meta.get("final_loss_mm").and_then(|l| l.parse().ok()) {
            model.loss_history = vec![l];
        }
        Ok(model)
    }

    /// `epoch,loss` CSV of the per-epoch training loss in mm.
    pub fn training_log_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.loss_history.iter().enumerate() {
            writeln!(out, "{},{:e}", e + 1, l).expect("write to string");
        }
        out
    }
}

/// Per-coordinate mean of the training targets, root-centered.
pub fn mean_pose(train: &Dataset) -> Result<Pose3D> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let y = target_matrix(train);
    root_center(
        y.mean_axis(Axis(0))
            .expect("non-empty")
            .as_slice()
            .expect("contiguous"),
    )
}
