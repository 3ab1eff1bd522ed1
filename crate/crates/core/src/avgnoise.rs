//! Weakly supervised adaptive noise learning.
//!
//! The frozen lifter's per-joint Euclidean error on each training sample,
//! divided by the dataset-wide mean error `C`, is the pseudo-label for the
//! variance network. Labels therefore average exactly one. The variance
//! network maps a 2D pose to one value per joint and is fit to the labels
//! with a mean squared error; the lifter never changes.
//!
//! Two paradigms exist. `Independent` trains its own residual MLP.
//! `Shared` reuses the lifter's first hidden layer (frozen) as an encoder and
//! trains only a linear head from those features to V outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lifter::{column_stats, input_matrix, LifterModel};
use crate::nn::{self, FitConfig, NetSpec, Network, Objective};
use crate::pose::{Pose2D, VarianceVector};
use crate::synthgen::Dataset;

pub const PSEUDO_LABEL_FORMAT_VERSION: u32 = 1;
/// Smallest admissible normalization constant, mm.
pub const MIN_NORMALIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    /// One label vector per training sample, in dataset order.
    pub labels: Vec<VarianceVector>,
    /// Mean per-joint lifter error over the training set, mm.
    pub normalization: f64,
    pub dataset_hash: String,
    pub lifter_hash: String,
}

impl PseudoLabelSet {
    pub fn joint_count(&self) -> usize {
        self.labels.first().map_or(0, VarianceVector::len)
    }

    /// Mean over all samples and joints; one by construction.
    pub fn grand_mean(&self) -> f64 {
        let total: f64 = self.labels.iter().flat_map(|l| l.as_slice()).sum();
        total / (self.labels.len() * self.joint_count()) as f64
    }

    /// Per-joint mean label over the set.
    pub fn joint_means(&self) -> Result<VarianceVector> {
        let v = self.joint_count();
        let mut sums = vec![0.0; v];
        for l in &self.labels {
            sums.iter_mut().zip(l.as_slice()).for_each(|(s, x)| *s += x);
        }
        VarianceVector::new(
            sums.into_iter()
                .map(|s| s / self.labels.len() as f64)
                .collect(),
        )
    }

    fn matrix(&self) -> Array2<f64> {
        let flat: Vec<f64> = self
            .labels
            .iter()
            .flat_map(|l| l.as_slice().iter().copied())
            .collect();
        Array2::from_shape_vec((self.labels.len(), self.joint_count()), flat)
            .expect("uniform label length")
    }

    /// Cache file: a JSON header line `{"version","dataset_hash","lifter_hash","C","count","V"}`
    /// followed by one comma-separated row of V labels per sample.
    pub fn to_text(&self) -> String {
        let header = serde_json::json!({
            "version": PSEUDO_LABEL_FORMAT_VERSION,
            "dataset_hash": self.dataset_hash,
            "lifter_hash": self.lifter_hash,
            "C": self.normalization,
            "count": self.labels.len(),
            "V": self.joint_count(),
        });
        let mut out = header.to_string();
        out.push('\n');
        for l in &self.labels {
            let row: Vec<String> = l.as_slice().iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{}", row.join(",")).expect("write to string");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::dataset(path, reason);
        let mut lines = text.lines();
        let header: serde_json::Value =
            serde_json::from_str(lines.next().ok_or_else(|| bad("empty file".into()))?)
                .map_err(|e| bad(format!("header: {e}")))?;
        if header["version"].as_u64() != Some(PSEUDO_LABEL_FORMAT_VERSION as u64) {
            return Err(bad(format!("unsupported version {}", header["version"])));
        }
        let field = |k: &str| {
            header[k]
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        let (count, v) = (field("count")?, field("V")?);
        let normalization = header["C"]
            .as_f64()
            .ok_or_else(|| bad("missing `C`".into()))?;
        let labels = lines
            .map(|line| {
                let row = line
                    .split(',')
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|e| bad(format!("label `{x}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != v {
                    return Err(bad(format!("row has {} labels, expected {v}", row.len())));
                }
                VarianceVector::new(row)
            })
            .collect::<Result<Vec<_>>>()?;
        if labels.len() != count {
            return Err(bad(format!(
                "header declares {count} rows, found {}",
                labels.len()
            )));
        }
        let text_field = |k: &str| {
            header[k]
                .as_str()
                .map(String::from)
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        Ok(Self {
            labels,
            normalization,
            dataset_hash: text_field("dataset_hash")?,
            lifter_hash: text_field("lifter_hash")?,
        })
    }
}

/// Normalized per-joint lifter errors over a training set.
pub fn compute_pseudo_labels(lifter: &LifterModel, train: &Dataset) -> Result<PseudoLabelSet> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !lifter.network().is_frozen() {
        return Err(Error::InvalidArgument(
            "pseudo-labels require a frozen lifter".into(),
        ));
    }
    let v = lifter.joint_count();
    if train.joint_count() != v {
        return Err(Error::JointCountMismatch {
            expected: v,
            found: train.joint_count(),
        });
    }
    let predictions = lifter.lift_rows(input_matrix(train).view())?;
    let distances: Vec<Vec<f64>> = predictions
        .iter()
        .zip(&train.records)
        .map(|(pred, r)| crate::metrics::joint_errors(pred, &r.gt_pose3d))
        .collect::<Result<_>>()?;

    let (normalization, labels) = normalize_errors(distances)?;
    Ok(PseudoLabelSet {
        labels,
        normalization,
        dataset_hash: train.content_hash.clone(),
        lifter_hash: lifter.hash(),
    })
}

/// Divides per-sample, per-joint errors by their grand mean `C`; returns `(C, labels)`.
pub fn normalize_errors(distances: Vec<Vec<f64>>) -> Result<(f64, Vec<VarianceVector>)> {
    let v = distances.first().map_or(0, Vec::len);
    if v == 0 || distances.iter().any(|d| d.len() != v) {
        return Err(Error::InvalidArgument(
            "error rows must be non-empty and of equal length".into(),
        ));
    }
    // fixed summation order keeps C independent of how predictions were produced
    let total: f64 = distances.iter().flatten().sum();
    let normalization = total / (distances.len() * v) as f64;
    if !(normalization >= MIN_NORMALIZATION) {
        return Err(Error::DegenerateLabels(normalization));
    }
    let labels = distances
        .into_iter()
        .map(|d| VarianceVector::new(d.into_iter().map(|x| x / normalization).collect()))
        .collect::<Result<_>>()?;
    Ok((normalization, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Independent,
    Shared,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Independent => "independent",
            Paradigm::Shared => "shared",
        }
    }
}

impl std::str::FromStr for Paradigm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Paradigm::Independent),
            "shared" => Ok(Paradigm::Shared),
            other => Err(Error::InvalidArgument(format!(
                "unknown paradigm `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvgConfig {
    pub hidden_dim: usize,
    pub block_count: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_epoch: Option<usize>,
    pub decay_factor: f64,
}

impl Default for AvgConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            block_count: 1,
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-3,
            decay_epoch: Some(20),
            decay_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgModel {
    paradigm: Paradigm,
    /// Trainable part: the whole network (independent) or the mapping head (shared).
    network: Network,
    /// Frozen first hidden layer of the lifter, shared paradigm only.
    encoder: Option<Network>,
    pub lifter_hash: Option<String>,
    pub loss_history: Vec<f64>,
}

/// The lifter's stem as a standalone frozen network producing its first hidden activations.
fn lifter_encoder(lifter: &LifterModel) -> Result<Network> {
    let net = lifter.network();
    let stem = &net.layers()[0];
    let (fan_in, fan_out) = stem.weight.dim();
    if net.layers().len() < 2 {
        return Err(Error::Config(
            "shared paradigm needs a lifter with a hidden layer".into(),
        ));
    }
    let params: Vec<f64> = stem
        .weight
        .iter()
        .chain(stem.bias.iter())
        .copied()
        .collect();
    let mut encoder = Network::from_params(NetSpec::linear(fan_in, fan_out), &params)?;
    encoder.freeze();
    Ok(encoder)
}

fn encode(encoder: &Network, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(encoder
        .forward_batch(x)?
        .mapv(|z| if z < 0.0 { 0.0 } else { z }))
}

/// Fits the variance network to pseudo-labels. The lifter is only read.
pub fn train_avg(
    train: &Dataset,
    pseudo: &PseudoLabelSet,
    config: &AvgConfig,
    paradigm: Paradigm,
    lifter: Option<&LifterModel>,
    seed: u64,
) -> Result<AvgModel> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pseudo.labels.len() != train.len() || pseudo.dataset_hash != train.content_hash {
        return Err(Error::InvalidArgument(
            "pseudo-labels were computed on a different dataset".into(),
        ));
    }
    let v = train.joint_count();
    if pseudo.joint_count() != v {
        return Err(Error::JointCountMismatch {
            expected: v,
            found: pseudo.joint_count(),
        });
    }
    if let Some(l) = lifter {
        if !l.network().is_frozen() {
            return Err(Error::InvalidArgument("lifter must be frozen".into()));
        }
    }
    let x = input_matrix(train);
    let targets = pseudo.matrix();
    let fit_config = |seed| FitConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        decay_epoch: config.decay_epoch,
        decay_factor: config.decay_factor,
        seed,
    };

    match paradigm {
        Paradigm::Independent => {
            let (mean, std) = column_stats(&x.view());
            let x_norm = (&x - &Array1::from(mean.clone())) / &Array1::from(std.clone());
            let mut network = Network::init(
                NetSpec::residual(2 * v, v, config.hidden_dim, config.block_count),
                seed,
            )?;
            let history = nn::fit(
                &mut network,
                x_norm.view(),
                targets.view(),
                Objective::Mse,
                &fit_config(seed),
            )?;
            network.fold_input_normalization(&mean, &std)?;
            network.freeze();
            Ok(AvgModel {
                paradigm,
                network,
                encoder: None,
                lifter_hash: lifter.map(LifterModel::hash),
                loss_history: history,
            })
        }
        Paradigm::Shared => {
            let lifter = lifter.ok_or_else(|| {
                Error::InvalidArgument("shared paradigm requires the lifter".into())
            })?;
            let encoder = lifter_encoder(lifter)?;
            let features = encode(&encoder, x.view())?;
            let mut head = Network::init(NetSpec::linear(features.ncols(), v), seed)?;
            let history = nn::fit(
                &mut head,
                features.view(),
                targets.view(),
                Objective::Mse,
                &fit_config(seed),
            )?;
            head.freeze();
            Ok(AvgModel {
                paradigm,
                network: head,
                encoder: Some(encoder),
                lifter_hash: Some(lifter.hash()),
                loss_history: history,
            })
        }
    }
}

impl AvgModel {
    /// Wraps a `2V -> V` network as a frozen independent-paradigm model.
    pub fn from_network(mut network: Network) -> Result<Self> {
        let spec = network.spec();
        if spec.input_dim != 2 * spec.output_dim {
            return Err(Error::Config(format!(
                "variance network must map 2V inputs to V outputs, got {} -> {}",
                spec.input_dim, spec.output_dim
            )));
        }
        network.freeze();
        Ok(Self {
            paradigm: Paradigm::Independent,
            network,
            encoder: None,
            lifter_hash: None,
            loss_history: Vec::new(),
        })
    }

    pub fn paradigm(&self) -> Paradigm {
        self.paradigm
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn joint_count(&self) -> usize {
        self.network.spec().output_dim
    }

    /// Parameters that were trained (excludes the shared lifter encoder).
    pub fn trainable_param_count(&self) -> usize {
        self.network.param_count()
    }

    fn input_dim(&self) -> usize {
        self.encoder
            .as_ref()
            .unwrap_or(&self.network)
            .spec()
            .input_dim
    }

    /// Raw per-joint output for every row of a `(n, 2V)` matrix.
    pub fn predict_rows(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.input_dim() {
            return Err(Error::JointCountMismatch {
                expected: self.input_dim() / 2,
                found: rows.ncols() / 2,
            });
        }
        match &self.encoder {
            None => self.network.forward_batch(rows),
            Some(encoder) => self.network.forward_batch(encode(encoder, rows)?.view()),
        }
    }

    /// Raw (unclamped) per-joint sigmas for one pose.
    pub fn predict_variance(&self, pose2d: &Pose2D) -> Result<VarianceVector> {
        pose2d.expect_joints(self.input_dim() / 2)?;
        let row = ArrayView2::from_shape((1, pose2d.as_slice().len()), pose2d.as_slice())
            .expect("row view");
        let out = self.predict_rows(row)?;
        VarianceVector::raw(out.row(0).to_vec())
    }

    pub fn mse(&self, train: &Dataset, pseudo: &PseudoLabelSet) -> Result<f64> {
        let pred = self.predict_rows(input_matrix(train).view())?;
        Ok((pred - pseudo.matrix())
            .mapv(|d| d * d)
            .mean()
            .unwrap_or(0.0))
    }

    /// Checkpoint bytes: the trainable network with the paradigm tag; shared
    /// models append the encoder as a second checkpoint after a length-prefixed split.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = BTreeMap::from([
            ("role".to_string(), "avg".to_string()),
            ("paradigm".to_string(), self.paradigm.as_str().to_string()),
        ]);
        if let Some(h) = &self.lifter_hash {
            meta.insert("lifter_hash".into(), h.clone());
        }
        let main = nn::encode_checkpoint(&self.network, &meta);
        let mut out = Vec::with_capacity(main.len() + 8);
        out.extend_from_slice(&(main.len() as u64).to_le_bytes());
        out.extend_from_slice(&main);
        if let Some(encoder) = &self.encoder {
            out.extend_from_slice(&nn::encode_checkpoint(encoder, &BTreeMap::new()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Checkpoint("truncated AVG file".into()))?;
        let len = u64::from_le_bytes(len_bytes) as usize;
        let main = bytes
            .get(8..8 + len)
            .ok_or_else(|| Error::Checkpoint("truncated AVG file".into()))?;
        let (mut network, meta) = nn::decode_checkpoint(main)?;
        if meta.get("role").map(String::as_str) != Some("avg") {
            return Err(Error::Checkpoint("not an AVG checkpoint".into()));
        }
        let paradigm: Paradigm = meta
            .get("paradigm")
            .ok_or_else(|| Error::Checkpoint("missing paradigm tag".into()))?
            .parse()
            .map_err(|e: Error| Error::Checkpoint(e.to_string()))?;
        let rest = &bytes[8 + len..];
        let encoder = match paradigm {
            Paradigm::Independent if rest.is_empty() => None,
            Paradigm::Shared if !rest.is_empty() => {
                let (mut enc, _) = nn::decode_checkpoint(rest)?;
                enc.freeze();
                if enc.spec().output_dim != network.spec().input_dim {
                    return Err(Error::Checkpoint(
                        "encoder width does not match head".into(),
                    ));
                }
                Some(enc)
            }
            _ => {
                return Err(Error::Checkpoint(
                    "encoder section does not match paradigm".into(),
                ))
            }
        };
        network.freeze();
        Ok(Self {
            paradigm,
            network,
            encoder,
            lifter_hash: meta.get("lifter_hash").cloned(),
            loss_history: Vec::new(),
        })
    }

    pub fn hash(&self) -> String {
        io::sha256_hex(&self.to_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Closed-form KL divergence between zero-mean Gaussians with standard
/// deviations `sigma` (model) and `sigma_hat` (prior):
/// `0.5 * (ln(sigma_hat^2 / sigma^2) + sigma^2 / sigma_hat^2 - 1)`.
pub fn kl_gaussian(sigma: f64, sigma_hat: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma_hat > 0.0 && sigma.is_finite() && sigma_hat.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "KL needs positive sigmas, got {sigma} and {sigma_hat}"
        )));
    }
    let ratio = sigma / sigma_hat;
    Ok(0.5 * ((1.0 / (ratio * ratio)).ln() + ratio * ratio - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifter::{train_lifter, LifterConfig};
    use crate::pose::Pose3D;
    use crate::synthgen::{synthesize, DatasetConfig, DatasetHeader, DatasetRecord};
    use proptest::prelude::*;

    fn tiny_lifter(train: &Dataset) -> LifterModel {
        let config = LifterConfig {
            hidden_dim: 32,
            block_count: 1,
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            decay_epoch: None,
            decay_factor: 1.0,
            seed: 1,
        };
        train_lifter(train, &config).unwrap()
    }

    fn tiny_avg() -> AvgConfig {
        AvgConfig {
            hidden_dim: 16,
            block_count: 1,
            epochs: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            decay_epoch: None,
            decay_factor: 1.0,
        }
    }

    fn data(count: usize, seed: u64) -> Dataset {
        synthesize(&DatasetConfig {
            count,
            seed,
            split: [1, 0],
            ..DatasetConfig::default()
        })
        .unwrap()
        .0
    }

    /// Two-joint records whose non-root joint sits `d` mm from the root, and a lifter that outputs zeros.
    fn offset_case(distances: &[f64]) -> (LifterModel, Dataset) {
        let lifter = LifterModel::from_network(
            Network::zeros(NetSpec::residual(4, 6, 4, 0)).unwrap(),
            String::new(),
        )
        .unwrap();
        let records: Vec<DatasetRecord> = distances
            .iter()
            .enumerate()
            .map(|(i, &d)| DatasetRecord {
                sample_id: i as u64,
                gt_pose3d: Pose3D::from_flat(vec![0.0, 0.0, 0.0, 0.0, d, 0.0]).unwrap(),
                clean_pose2d: Pose2D::from_flat(vec![0.0; 4]).unwrap(),
                detected_pose2d: Pose2D::from_flat(vec![0.0; 4]).unwrap(),
                occlusion_mask: vec![false; 2],
            })
            .collect();
        let header = DatasetHeader {
            format_version: 1,
            joint_count: 2,
            skeleton_id: "t".into(),
            count: records.len(),
            mm_per_unit: 1.0,
        };
        (lifter, Dataset::from_records(header, records).unwrap())
    }

    #[test]
    fn normalization_arithmetic() {
        let (c, labels) = normalize_errors(vec![vec![2.0], vec![4.0]]).unwrap();
        assert_eq!(c, 3.0);
        assert_eq!(labels[0].as_slice(), &[2.0 / 3.0]);
        assert_eq!(labels[1].as_slice(), &[4.0 / 3.0]);
    }

    #[test]
    fn pseudo_labels_from_lifter_errors() {
        let (lifter, data) = offset_case(&[2.0, 4.0]);
        let labels = compute_pseudo_labels(&lifter, &data).unwrap();
        // root errors are zero, so C = (0 + 2 + 0 + 4) / 4
        assert_eq!(labels.normalization, 1.5);
        assert_eq!(labels.labels[0].as_slice(), &[0.0, 2.0 / 1.5]);
        assert_eq!(labels.labels[1].as_slice(), &[0.0, 4.0 / 1.5]);
        assert!((labels.grand_mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_lifter_is_degenerate() {
        let (lifter, data) = offset_case(&[0.0, 0.0]);
        assert!(matches!(
            compute_pseudo_labels(&lifter, &data),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn labels_average_one_on_generated_data() {
        for seed in 0..3 {
            let train = data(300, seed);
            let labels = compute_pseudo_labels(&tiny_lifter(&train), &train).unwrap();
            assert!((labels.grand_mean() - 1.0).abs() < 1e-9);
            assert!((labels.joint_means().unwrap().mean() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn label_cache_round_trip() {
        let train = data(40, 2);
        let labels = compute_pseudo_labels(&tiny_lifter(&train), &train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        labels.save(&path).unwrap();
        assert_eq!(PseudoLabelSet::load(&path).unwrap(), labels);
    }

    #[test]
    fn training_leaves_lifter_untouched_and_is_deterministic() {
        let train = data(200, 4);
        let lifter = tiny_lifter(&train);
        let before = lifter.to_bytes();
        let labels = compute_pseudo_labels(&lifter, &train).unwrap();
        for paradigm in [Paradigm::Independent, Paradigm::Shared] {
            let a = train_avg(&train, &labels, &tiny_avg(), paradigm, Some(&lifter), 9).unwrap();
            let b = train_avg(&train, &labels, &tiny_avg(), paradigm, Some(&lifter), 9).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            assert_eq!(lifter.to_bytes(), before);
        }
    }

    #[test]
    fn shared_requires_lifter() {
        let train = data(50, 5);
        let lifter = tiny_lifter(&train);
        let labels = compute_pseudo_labels(&lifter, &train).unwrap();
        assert!(train_avg(&train, &labels, &tiny_avg(), Paradigm::Shared, None, 0).is_err());
    }

    #[test]
    fn shared_head_is_the_only_new_parameter_block() {
        let train = data(50, 6);
        let lifter = tiny_lifter(&train);
        let labels = compute_pseudo_labels(&lifter, &train).unwrap();
        let shared = train_avg(
            &train,
            &labels,
            &tiny_avg(),
            Paradigm::Shared,
            Some(&lifter),
            0,
        )
        .unwrap();
        let hidden = lifter.network().spec().hidden_dim;
        assert_eq!(shared.trainable_param_count(), hidden * 16 + 16);
    }

    #[test]
    fn linear_teacher_is_learned() {
        // labels that are an exact linear function of the 2D input
        let mut train = data(400, 7);
        let v = train.joint_count();
        let weights: Vec<f64> = (0..2 * v)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1)
            .collect();
        let labels: Vec<VarianceVector> = train
            .records
            .iter()
            .map(|r| {
                let x = r.detected_pose2d.as_slice();
                let base: f64 = x.iter().zip(&weights).map(|(a, w)| a * w).sum();
                VarianceVector::new((0..v).map(|j| 1.0 + base + 0.5 * x[2 * j]).collect()).unwrap()
            })
            .collect();
        train.content_hash = "linear".into();
        let pseudo = PseudoLabelSet {
            labels,
            normalization: 1.0,
            dataset_hash: "linear".into(),
            lifter_hash: String::new(),
        };
        let config = AvgConfig {
            hidden_dim: 64,
            block_count: 1,
            epochs: 1000,
            batch_size: 32,
            learning_rate: 3e-3,
            decay_epoch: Some(700),
            decay_factor: 0.1,
        };
        let avg = train_avg(&train, &pseudo, &config, Paradigm::Independent, None, 3).unwrap();
        let mse = avg.mse(&train, &pseudo).unwrap();
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn prediction_is_pure_and_survives_round_trip() {
        let train = data(60, 8);
        let lifter = tiny_lifter(&train);
        let labels = compute_pseudo_labels(&lifter, &train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for paradigm in [Paradigm::Independent, Paradigm::Shared] {
            let avg = train_avg(&train, &labels, &tiny_avg(), paradigm, Some(&lifter), 1).unwrap();
            let x = &train.records[0].detected_pose2d;
            let a = avg.predict_variance(x).unwrap();
            assert_eq!(a, avg.predict_variance(x).unwrap());
            assert_eq!(a.len(), 16);
            let path = dir.path().join(format!("{}.avg", paradigm.as_str()));
            avg.save(&path).unwrap();
            let loaded = AvgModel::load(&path).unwrap();
            assert_eq!(loaded.paradigm(), paradigm);
            let b = loaded.predict_variance(x).unwrap();
            assert!(a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(u, w)| u.to_bits() == w.to_bits()));
            assert!(avg
                .predict_variance(&Pose2D::from_flat(vec![0.0; 4]).unwrap())
                .is_err());
        }
    }

    /// Direct transcription of `0.5 * [log((s_hat / s)^2) + s^2 / s_hat^2 - 1]`.
    fn kl_reference(s: f64, s_hat: f64) -> f64 {
        0.5 * (((s_hat / s).powi(2)).ln() + s.powi(2) / s_hat.powi(2) - 1.0)
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_gaussian(1.3, 1.3).unwrap(), 0.0);
        let (a, b) = (
            kl_gaussian(1.0, 2.0).unwrap(),
            kl_gaussian(2.0, 1.0).unwrap(),
        );
        assert_ne!(a, b);
        assert!((a - kl_reference(1.0, 2.0)).abs() < 1e-15);
        assert!((b - kl_reference(2.0, 1.0)).abs() < 1e-15);
        assert!(kl_gaussian(0.0, 1.0).is_err());
        assert!(kl_gaussian(1.0, -1.0).is_err());
    }

    #[test]
    fn kl_minimum_is_at_the_prior() {
        for &s_hat in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            let grid: Vec<f64> = (1..=800).map(|i| i as f64 * 0.01).collect();
            let values: Vec<f64> = grid
                .iter()
                .map(|&s| kl_gaussian(s, s_hat).unwrap())
                .collect();
            for w in grid.windows(2).zip(values.windows(2)) {
                let ((s0, s1), (k0, k1)) = ((w.0[0], w.0[1]), (w.1[0], w.1[1]));
                if s1 <= s_hat {
                    assert!(k1 < k0, "not decreasing below {s_hat} at {s0}");
                } else if s0 >= s_hat {
                    assert!(k1 > k0, "not increasing above {s_hat} at {s0}");
                }
            }
            assert!(values.iter().all(|&k| k >= 0.0));
        }
    }

    proptest! {
        #[test]
        fn kl_zero_only_on_diagonal(s in 0.05f64..10.0, t in 0.05f64..10.0) {
            let k = kl_gaussian(s, t).unwrap();
            if s == t { prop_assert_eq!(k, 0.0) } else { prop_assert!(k > 0.0) }
        }
    }
}
