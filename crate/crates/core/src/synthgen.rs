//! Seeded synthetic benchmark: forward-kinematics pose sampling, pinhole
//! projection, heteroscedastic 2D detector noise, and the line-delimited
//! dataset file format.
//!
//! # Dataset file format
//!
//! UTF-8 text, one JSON object per line. The first line is the header:
//!
//! ```text
//! {"format_version":1,"V":16,"skeleton_id":"<hex>","count":N,"mm_per_unit":2500.0}
//! ```
//!
//! followed by exactly `count` record lines with fields in this order:
//!
//! ```text
//! {"sample_id":u64,"gt3d":[3V f64, mm],"clean2d":[2V f64],"det2d":[2V f64],"occl":[V bool]}
//! ```
//!
//! Coordinates are flattened joint-major (`x0,y0,z0,x1,...`). Floats are
//! written in shortest round-trip form, so loading reproduces every value
//! bit-exactly. `mm_per_unit` is `subject_distance / focal`, the factor that
//! converts a normalized 2D offset at the subject's depth into millimetres.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pose::{Pose2D, Pose3D, Skeleton};
use crate::rng::{self, Rng, Stream};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    /// Normalized focal length.
    pub focal: f64,
    pub principal: [f64; 2],
    /// Distance from the camera centre to the skeleton root along the optical axis, mm.
    pub subject_distance: f64,
}

impl Camera {
    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::Config(format!(
                "camera focal must be > 0, got {}",
                self.focal
            )));
        }
        if !self.principal.iter().all(|c| c.is_finite()) {
            return Err(Error::Config(
                "camera principal point must be finite".into(),
            ));
        }
        let reach = skeleton.max_reach();
        if !(self.subject_distance > reach) {
            return Err(Error::Config(format!(
                "subject distance {} mm must exceed skeleton reach {reach} mm",
                self.subject_distance
            )));
        }
        Ok(())
    }

    /// Millimetres spanned by one normalized image unit at the subject's depth.
    pub fn mm_per_unit(&self) -> f64 {
        self.subject_distance / self.focal
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            focal: 2.0,
            principal: [0.0, 0.0],
            subject_distance: 5000.0,
        }
    }
}

/// Per-joint Euler angle ranges `[min, max]` in radians about the X, Y and Z
/// axes. Entry 0 is the global body orientation; entry `j > 0` rotates the
/// bone ending at joint `j` relative to its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub ranges: Vec<[[f64; 2]; 3]>,
}

impl JointLimits {
    pub fn human16() -> Self {
        use std::f64::consts::PI;
        const STILL: [[f64; 2]; 3] = [[-0.1, 0.1], [-0.1, 0.1], [-0.1, 0.1]];
        let ranges = vec![
            [[-0.3, 0.3], [-PI, PI], [-0.2, 0.2]],   // body orientation
            STILL,                                   // r_hip
            [[-1.6, 0.4], [-0.3, 0.3], [-0.4, 0.4]], // r thigh
            [[0.0, 2.0], [0.0, 0.0], [0.0, 0.0]],    // r shin
            STILL,                                   // l_hip
            [[-1.6, 0.4], [-0.3, 0.3], [-0.4, 0.4]], // l thigh
            [[0.0, 2.0], [0.0, 0.0], [0.0, 0.0]],    // l shin
            [[-0.2, 0.6], [-0.4, 0.4], [-0.3, 0.3]], // spine
            [[-0.2, 0.3], [-0.3, 0.3], [-0.2, 0.2]], // thorax
            [[-0.4, 0.5], [-0.5, 0.5], [-0.3, 0.3]], // head
            STILL,                                   // l_shoulder
            [[-2.5, 0.6], [-0.5, 0.5], [-1.6, 0.2]], // l upper arm
            [[-2.2, 0.0], [-0.2, 0.2], [-0.2, 0.2]], // l forearm
            STILL,                                   // r_shoulder
            [[-2.5, 0.6], [-0.5, 0.5], [-0.2, 1.6]], // r upper arm
            [[-2.2, 0.0], [-0.2, 0.2], [-0.2, 0.2]], // r forearm
        ];
        Self { ranges }
    }

    /// All ranges collapsed to zero width at zero: the skeleton's rest pose.
    pub fn rest(joint_count: usize) -> Self {
        Self {
            ranges: vec![[[0.0; 2]; 3]; joint_count],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Per-joint baseline detector noise std, normalized image units.
    pub base_sigma: Vec<f64>,
    pub occlusion_prob: f64,
    pub occlusion_multiplier: f64,
    /// Joint groups that are occluded together.
    pub limb_groups: Vec<Vec<usize>>,
}

impl NoiseProfile {
    pub fn uniform(joint_count: usize, base_sigma: f64) -> Self {
        Self {
            base_sigma: vec![base_sigma; joint_count],
            occlusion_prob: 0.0,
            occlusion_multiplier: 1.0,
            limb_groups: Vec::new(),
        }
    }

    /// Left arm, right arm, left leg, right leg of [`Skeleton::human16`].
    pub fn human16_limb_groups() -> Vec<Vec<usize>> {
        vec![
            vec![10, 11, 12],
            vec![13, 14, 15],
            vec![4, 5, 6],
            vec![1, 2, 3],
        ]
    }

    pub fn validate(&self, joint_count: usize) -> Result<()> {
        if self.base_sigma.len() != joint_count {
            return Err(Error::JointCountMismatch {
                expected: joint_count,
                found: self.base_sigma.len(),
            });
        }
        if !self.base_sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(Error::Config(
                "noise base_sigma must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Config(format!(
                "occlusion_prob {} outside [0, 1]",
                self.occlusion_prob
            )));
        }
        if !(self.occlusion_multiplier.is_finite() && self.occlusion_multiplier >= 1.0) {
            return Err(Error::Config(format!(
                "occlusion_multiplier {} must be >= 1",
                self.occlusion_multiplier
            )));
        }
        if let Some(j) = self
            .limb_groups
            .iter()
            .flatten()
            .find(|&&j| j >= joint_count)
        {
            return Err(Error::Config(format!(
                "limb group references joint {j} of {joint_count}"
            )));
        }
        Ok(())
    }
}

fn draw_angle(rng: &mut Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    lo + u * (hi - lo)
}

/// Samples a root-relative pose by forward kinematics over random joint rotations.
pub fn sample_pose(skeleton: &Skeleton, limits: &JointLimits, rng: &mut Rng) -> Result<Pose3D> {
    let v = skeleton.joint_count();
    if limits.ranges.is_empty() {
        return Err(Error::Config("joint limits are empty".into()));
    }
    if limits.ranges.len() != v {
        return Err(Error::Config(format!(
            "joint limits cover {} joints, skeleton has {v}",
            limits.ranges.len()
        )));
    }
    if let Some(j) = limits.ranges.iter().position(|r| {
        r.iter()
            .any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo <= hi))
    }) {
        return Err(Error::Config(format!("invalid angle range for joint {j}")));
    }

    let mut frames: Vec<Rotation3<f64>> = Vec::with_capacity(v);
    let mut positions: Vec<Vector3<f64>> = Vec::with_capacity(v);
    for j in 0..v {
        let [rx, ry, rz] = limits.ranges[j];
        let local = Rotation3::from_euler_angles(
            draw_angle(rng, rx),
            draw_angle(rng, ry),
            draw_angle(rng, rz),
        );
        match skeleton.parent(j) {
            None => {
                frames.push(local);
                positions.push(Vector3::zeros());
            }
            Some(p) => {
                let frame = frames[p] * local;
                let dir = Vector3::from(skeleton.rest_direction(j));
                positions.push(positions[p] + frame * dir * skeleton.bone_length(j));
                frames.push(frame);
            }
        }
    }
    Pose3D::from_flat(positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect())
}

/// Pinhole projection of a root-relative pose whose root sits on the optical
/// axis at `camera.subject_distance`.
pub fn project(pose: &Pose3D, camera: &Camera) -> Result<Pose2D> {
    let mut out = Vec::with_capacity(pose.joint_count() * 2);
    for j in 0..pose.joint_count() {
        let [x, y, z] = pose.joint(j);
        let depth = z + camera.subject_distance;
        if !(depth > 0.0) {
            return Err(Error::Projection { joint: j, depth });
        }
        out.push(camera.focal * x / depth + camera.principal[0]);
        out.push(camera.focal * y / depth + camera.principal[1]);
    }
    Pose2D::from_flat(out)
}

/// Adds per-coordinate Gaussian detector noise; occluded limb groups get
/// their joints' std multiplied by `occlusion_multiplier`.
pub fn corrupt_2d(
    pose: &Pose2D,
    profile: &NoiseProfile,
    rng: &mut Rng,
) -> Result<(Pose2D, Vec<bool>)> {
    let v = pose.joint_count();
    profile.validate(v)?;
    let mut mask = vec![false; v];
    for group in &profile.limb_groups {
        let occluded = rng.random::<f64>() < profile.occlusion_prob;
        if occluded {
            group.iter().for_each(|&j| mask[j] = true);
        }
    }
    let mut coords = pose.as_slice().to_vec();
    for j in 0..v {
        let sigma = profile.base_sigma[j]
            * if mask[j] {
                profile.occlusion_multiplier
            } else {
                1.0
            };
        for c in &mut coords[2 * j..2 * j + 2] {
            let z: f64 = StandardNormal.sample(rng);
            *c += sigma * z;
        }
    }
    Ok((Pose2D::from_flat(coords)?, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub sample_id: u64,
    #[serde(rename = "gt3d")]
    pub gt_pose3d: Pose3D,
    #[serde(rename = "clean2d")]
    pub clean_pose2d: Pose2D,
    #[serde(rename = "det2d")]
    pub detected_pose2d: Pose2D,
    #[serde(rename = "occl")]
    pub occlusion_mask: Vec<bool>,
}

impl DatasetRecord {
    fn joint_counts(&self) -> [usize; 4] {
        [
            self.gt_pose3d.joint_count(),
            self.clean_pose2d.joint_count(),
            self.detected_pose2d.joint_count(),
            self.occlusion_mask.len(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    #[serde(rename = "V")]
    pub joint_count: usize,
    pub skeleton_id: String,
    pub count: usize,
    pub mm_per_unit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
    /// SHA-256 of the file bytes.
    pub content_hash: String,
}

impl Dataset {
    pub fn joint_count(&self) -> usize {
        self.header.joint_count
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds an in-memory dataset, hashing its serialized form.
    pub fn from_records(header: DatasetHeader, records: Vec<DatasetRecord>) -> Result<Self> {
        let text = encode_dataset(&header, &records)?;
        let content_hash = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(Self {
            header,
            records,
            content_hash,
        })
    }
}

/// Noise settings for [`DatasetConfig`]; per-joint baselines are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub base_sigma: f64,
    pub occlusion_prob: f64,
    pub occlusion_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Built-in skeleton name; only `human16` exists.
    pub skeleton: String,
    pub camera: Camera,
    pub noise: NoiseConfig,
    /// Total sample count P across both splits.
    pub count: usize,
    pub seed: u64,
    /// Relative train:test weights.
    pub split: [u32; 2],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            base_sigma: 0.005,
            occlusion_prob: 0.3,
            occlusion_multiplier: 4.0,
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            skeleton: "human16".into(),
            camera: Camera::default(),
            noise: NoiseConfig::default(),
            count: 22_000,
            seed: 0,
            split: [10, 1],
        }
    }
}

impl DatasetConfig {
    pub fn skeleton(&self) -> Result<Skeleton> {
        match self.skeleton.as_str() {
            "human16" => Ok(Skeleton::human16()),
            other => Err(Error::Config(format!("unknown skeleton `{other}`"))),
        }
    }

    pub fn limits(&self) -> Result<JointLimits> {
        self.skeleton().map(|_| JointLimits::human16())
    }

    pub fn noise_profile(&self) -> Result<NoiseProfile> {
        let skeleton = self.skeleton()?;
        let profile = NoiseProfile {
            base_sigma: vec![self.noise.base_sigma; skeleton.joint_count()],
            occlusion_prob: self.noise.occlusion_prob,
            occlusion_multiplier: self.noise.occlusion_multiplier,
            limb_groups: NoiseProfile::human16_limb_groups(),
        };
        profile.validate(skeleton.joint_count())?;
        Ok(profile)
    }

    /// `(train, test)` sample counts.
    pub fn split_counts(&self) -> Result<(usize, usize)> {
        if self.count < 1 {
            return Err(Error::Config("dataset count must be >= 1".into()));
        }
        let [a, b] = self.split;
        if a + b == 0 {
            return Err(Error::Config("split weights must not both be zero".into()));
        }
        let train = self.count * a as usize / (a + b) as usize;
        Ok((train, self.count - train))
    }
}

fn synthesize_record(
    config: &DatasetConfig,
    skeleton: &Skeleton,
    limits: &JointLimits,
    profile: &NoiseProfile,
    sample_id: u64,
) -> Result<DatasetRecord> {
    let mut pose_rng = rng::keyed(config.seed, Stream::Pose, sample_id, 0);
    let mut noise_rng = rng::keyed(config.seed, Stream::DetectorNoise, sample_id, 0);
    let gt = sample_pose(skeleton, limits, &mut pose_rng)?;
    let clean = project(&gt, &config.camera)?;
    let (detected, mask) = corrupt_2d(&clean, profile, &mut noise_rng)?;
    Ok(DatasetRecord {
        sample_id,
        gt_pose3d: gt,
        clean_pose2d: clean,
        detected_pose2d: detected,
        occlusion_mask: mask,
    })
}

/// Generates the `(train, test)` splits in memory.
pub fn synthesize(config: &DatasetConfig) -> Result<(Dataset, Dataset)> {
    let skeleton = config.skeleton()?;
    config.camera.validate(&skeleton)?;
    let limits = config.limits()?;
    let profile = config.noise_profile()?;
    let (n_train, n_test) = config.split_counts()?;

    let records = (0..config.count as u64)
        .map(|id| synthesize_record(config, &skeleton, &limits, &profile, id))
        .collect::<Result<Vec<_>>>()?;
    let mut train = records;
    let test = train.split_off(n_train);
    debug_assert_eq!(test.len(), n_test);

    let header = |count| DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        joint_count: skeleton.joint_count(),
        skeleton_id: skeleton.id(),
        count,
        mm_per_unit: config.camera.mm_per_unit(),
    };
    Ok((
        Dataset::from_records(header(n_train), train)?,
        Dataset::from_records(header(n_test), test)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train: dir.join("train.jsonl"),
            test: dir.join("test.jsonl"),
        }
    }
}

/// Writes `train.jsonl` and `test.jsonl` into `dir`.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetFiles> {
    let (train, test) = synthesize(config)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);
    write_dataset(&train, &files.train)?;
    write_dataset(&test, &files.test)?;
    Ok(files)
}

fn encode_dataset(header: &DatasetHeader, records: &[DatasetRecord]) -> Result<String> {
    let to_json =
        |e: serde_json::Error| Error::InvalidArgument(format!("dataset serialization: {e}"));
    let mut out = serde_json::to_string(header).map_err(to_json)?;
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(to_json)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let text = encode_dataset(&dataset.header, &dataset.records)?;
    crate::io::write_atomic(path, text.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text =
        std::str::from_utf8(&bytes).map_err(|e| Error::dataset(path, format!("not UTF-8: {e}")))?;
    let mut lines = text.lines();
    let header: DatasetHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::dataset(path, "empty file"))?,
    )
    .map_err(|e| Error::dataset(path, format!("header: {e}")))?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::dataset(
            path,
            format!(
                "format version {} (expected {DATASET_FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    let v = header.joint_count;
    let mut records = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let record: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| Error::dataset(path, format!("record {i}: {e}")))?;
        if let Some(found) = record.joint_counts().into_iter().find(|&n| n != v) {
            return Err(Error::dataset(
                path,
                format!("record {i}: V mismatch (header {v}, record {found})"),
            ));
        }
        records.push(record);
    }
    if records.len() != header.count {
        return Err(Error::dataset(
            path,
            format!(
                "header declares {} records, found {}",
                header.count,
                records.len()
            ),
        ));
    }
    Ok(Dataset {
        header,
        records,
        content_hash: hex::encode(Sha256::digest(&bytes)),
    })
}
