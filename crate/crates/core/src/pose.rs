//! Domain types shared by every stage: skeletons, 2D/3D poses, hypothesis
//! sets and per-joint variance vectors.
//!
//! Units: 3D coordinates are millimetres in the camera frame, root-relative.
//! 2D coordinates are normalized image units where the longer image side maps
//! to `[-1, 1]`. The root joint is always index 0.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Parent index of the root joint.
pub const ROOT_PARENT: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    parents: Vec<usize>,
    /// Unit direction of each bone in its parent's frame at rest; entry 0 unused.
    rest_directions: Vec<[f64; 3]>,
    /// Length of the bone ending at each joint; entry 0 is unused and stored as 0.
    bone_lengths: Vec<f64>,
    joint_names: Vec<String>,
}

impl Skeleton {
    pub fn new(
        parents: Vec<usize>,
        bone_lengths: Vec<f64>,
        rest_directions: Vec<[f64; 3]>,
        joint_names: Vec<String>,
    ) -> Result<Self> {
        let v = parents.len();
        if v < 2 {
            return Err(Error::InvalidSkeleton(format!(
                "need at least 2 joints, got {v}"
            )));
        }
        if bone_lengths.len() != v || joint_names.len() != v || rest_directions.len() != v {
            return Err(Error::InvalidSkeleton(format!(
                "parents ({v}), bone_lengths ({}) and joint_names ({}) disagree",
                bone_lengths.len(),
                joint_names.len()
            )));
        }
        if parents[0] != ROOT_PARENT {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, &p) in parents.iter().enumerate().skip(1) {
            // parents precede children, which rules out cycles and forests
            if p >= j {
                return Err(Error::InvalidSkeleton(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )));
            }
            let len = bone_lengths[j];
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "bone ending at joint {j} has length {len}"
                )));
            }
        }
        let mut rest_directions = rest_directions;
        for (j, d) in rest_directions.iter_mut().enumerate().skip(1) {
            let norm = d.iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::InvalidSkeleton(format!(
                    "rest direction of joint {j} is degenerate"
                )));
            }
            d.iter_mut().for_each(|c| *c /= norm);
        }
        Ok(Self {
            parents,
            rest_directions,
            bone_lengths,
            joint_names,
        })
    }

    /// 16-joint body: pelvis root, legs, spine, head and arms, lengths in mm.
    ///
    /// Camera-frame axes: X right, Y down, Z away from the camera. At rest the
    /// body stands upright with arms hanging and its left side towards +X.
    pub fn human16() -> Self {
        const DOWN: [f64; 3] = [0.0, 1.0, 0.0];
        const UP: [f64; 3] = [0.0, -1.0, 0.0];
        const LEFT: [f64; 3] = [1.0, 0.0, 0.0];
        const RIGHT: [f64; 3] = [-1.0, 0.0, 0.0];
        let spec: [(&str, usize, f64, [f64; 3]); 16] = [
            ("pelvis", ROOT_PARENT, 0.0, [0.0; 3]),
            ("r_hip", 0, 130.0, RIGHT),
            ("r_knee", 1, 450.0, DOWN),
            ("r_ankle", 2, 440.0, DOWN),
            ("l_hip", 0, 130.0, LEFT),
            ("l_knee", 4, 450.0, DOWN),
            ("l_ankle", 5, 440.0, DOWN),
            ("spine", 0, 230.0, UP),
            ("thorax", 7, 250.0, UP),
            ("head", 8, 200.0, UP),
            ("l_shoulder", 8, 150.0, LEFT),
            ("l_elbow", 10, 280.0, DOWN),
            ("l_wrist", 11, 250.0, DOWN),
            ("r_shoulder", 8, 150.0, RIGHT),
            ("r_elbow", 13, 280.0, DOWN),
            ("r_wrist", 14, 250.0, DOWN),
        ];
        Self::new(
            spec.iter().map(|s| s.1).collect(),
            spec.iter().map(|s| s.2).collect(),
            spec.iter().map(|s| s.3).collect(),
            spec.iter().map(|s| s.0.to_string()).collect(),
        )
        .expect("built-in skeleton is valid")
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        match self.parents[joint] {
            ROOT_PARENT => None,
            p => Some(p),
        }
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn bone_length(&self, joint: usize) -> f64 {
        self.bone_lengths[joint]
    }

    pub fn rest_direction(&self, joint: usize) -> [f64; 3] {
        self.rest_directions[joint]
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    /// Upper bound on the distance of any joint from the root.
    pub fn max_reach(&self) -> f64 {
        let mut reach = vec![0.0; self.joint_count()];
        for j in 1..self.joint_count() {
            reach[j] = reach[self.parents[j]] + self.bone_lengths[j];
        }
        reach.into_iter().fold(0.0, f64::max)
    }

    /// Content hash identifying the skeleton definition.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("skeleton serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::InvalidPose(format!(
            "non-finite coordinate at index {i}"
        ))),
        None => Ok(()),
    }
}

/// V joints as `(u, v)` pairs, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pose2D(Vec<f64>);

impl Pose2D {
    pub fn from_flat(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::InvalidPose(format!(
                "2D pose needs 2V coordinates, got {}",
                coords.len()
            )));
        }
        check_finite(&coords)?;
        Ok(Self(coords))
    }

    pub fn joint_count(&self) -> usize {
        self.0.len() / 2
    }

    pub fn joint(&self, j: usize) -> [f64; 2] {
        [self.0[2 * j], self.0[2 * j + 1]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn expect_joints(&self, v: usize) -> Result<()> {
        if self.joint_count() != v {
            return Err(Error::JointCountMismatch {
                expected: v,
                found: self.joint_count(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Pose2D {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_flat(v)
    }
}

impl From<Pose2D> for Vec<f64> {
    fn from(p: Pose2D) -> Self {
        p.0
    }
}

/// V joints as `(X, Y, Z)` triples in millimetres, stored flat.
///
/// Constructed values are only guaranteed finite; use [`root_center`] or
/// [`Pose3D::root_relative`] to obtain the root-at-origin form that lifters
/// and metrics work with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pose3D(Vec<f64>);

impl Pose3D {
    pub fn from_flat(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 3 != 0 {
            return Err(Error::InvalidPose(format!(
                "3D pose needs 3V coordinates, got {}",
                coords.len()
            )));
        }
        check_finite(&coords)?;
        Ok(Self(coords))
    }

    pub fn from_joints(joints: &[[f64; 3]]) -> Result<Self> {
        Self::from_flat(joints.iter().flatten().copied().collect())
    }

    /// Builds a pose and moves its root to the origin.
    pub fn root_relative(coords: Vec<f64>) -> Result<Self> {
        root_center(&coords)
    }

    pub fn joint_count(&self) -> usize {
        self.0.len() / 3
    }

    pub fn joint(&self, j: usize) -> [f64; 3] {
        [self.0[3 * j], self.0[3 * j + 1], self.0[3 * j + 2]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_root_centered(&self) -> bool {
        self.0[..3].iter().all(|&c| c == 0.0)
    }

    pub fn expect_joints(&self, v: usize) -> Result<()> {
        if self.joint_count() != v {
            return Err(Error::JointCountMismatch {
                expected: v,
                found: self.joint_count(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Pose3D {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_flat(v)
    }
}

impl From<Pose3D> for Vec<f64> {
    fn from(p: Pose3D) -> Self {
        p.0
    }
}

/// Translates raw 3V coordinates so joint 0 sits at the origin.
pub fn root_center(coords: &[f64]) -> Result<Pose3D> {
    if coords.is_empty() || coords.len() % 3 != 0 {
        return Err(Error::InvalidPose(format!(
            "3D pose needs 3V coordinates, got {}",
            coords.len()
        )));
    }
    check_finite(coords)?;
    let root = [coords[0], coords[1], coords[2]];
    let centered = coords
        .iter()
        .enumerate()
        .map(|(i, &c)| c - root[i % 3])
        .collect();
    Ok(Pose3D(centered))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    source_sample_id: u64,
    hypotheses: Vec<Pose3D>,
}

impl HypothesisSet {
    pub fn new(source_sample_id: u64, hypotheses: Vec<Pose3D>) -> Result<Self> {
        let first = hypotheses.first().ok_or(Error::EmptyHypothesisSet)?;
        let v = first.joint_count();
        for h in &hypotheses {
            h.expect_joints(v)?;
        }
        Ok(Self {
            source_sample_id,
            hypotheses,
        })
    }

    pub fn source_sample_id(&self) -> u64 {
        self.source_sample_id
    }

    pub fn hypotheses(&self) -> &[Pose3D] {
        &self.hypotheses
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.hypotheses[0].joint_count()
    }

    /// The first `s` hypotheses as their own set.
    pub fn prefix(&self, s: usize) -> Result<Self> {
        Self::new(
            self.source_sample_id,
            self.hypotheses.iter().take(s).cloned().collect(),
        )
    }
}

/// Per-joint standard deviations (dimensionless).
///
/// Raw network output may be negative; the non-negativity invariant applies to
/// pseudo-labels and adjusted sigmas, which are built with [`VarianceVector::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceVector(Vec<f64>);

impl VarianceVector {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidVariance("empty variance vector".into()));
        }
        if let Some((j, s)) = sigmas
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
        {
            return Err(Error::InvalidVariance(format!("sigma[{j}] = {s}")));
        }
        Ok(Self(sigmas))
    }

    /// Unvalidated sign: finite values only. Used for raw AVG output.
    pub fn raw(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidVariance("empty variance vector".into()));
        }
        check_finite(&sigmas).map_err(|e| Error::InvalidVariance(e.to_string()))?;
        Ok(Self(sigmas))
    }

    pub fn ones(v: usize) -> Self {
        Self(vec![1.0; v])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(p: &[f64], a: usize, b: usize) -> f64 {
        (0..3)
            .map(|k| (p[3 * a + k] - p[3 * b + k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn rooted_pose_is_unchanged() {
        let raw = vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0, -4.0, 5.0, 6.5];
        assert_eq!(root_center(&raw).unwrap().as_slice(), raw.as_slice());
    }

    #[test]
    fn translation_is_removed() {
        let raw = vec![1.0, -2.0, 0.5, 3.0, 2.0, 3.0, -4.0, 5.0, 6.5];
        let shifted: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &c)| c + [10.0, 20.0, 30.0][i % 3])
            .collect();
        let a = root_center(&raw).unwrap();
        let b = root_center(&shifted).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.is_root_centered());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            root_center(&[0.0, f64::NAN, 0.0]),
            Err(Error::InvalidPose(_))
        ));
        assert!(Pose2D::from_flat(vec![0.0, f64::INFINITY]).is_err());
        assert!(Pose3D::from_flat(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn mismatched_hypotheses_rejected() {
        let a = Pose3D::from_flat(vec![0.0; 6]).unwrap();
        let b = Pose3D::from_flat(vec![0.0; 9]).unwrap();
        assert!(matches!(
            HypothesisSet::new(0, vec![a, b]),
            Err(Error::JointCountMismatch { .. })
        ));
        assert!(matches!(
            HypothesisSet::new(0, vec![]),
            Err(Error::EmptyHypothesisSet)
        ));
    }

    #[test]
    fn skeleton_validation() {
        let d = [1.0, 0.0, 0.0];
        assert!(Skeleton::new(vec![ROOT_PARENT], vec![0.0], vec![d], vec!["a".into()]).is_err());
        assert!(Skeleton::new(
            vec![ROOT_PARENT, 0],
            vec![0.0, -1.0],
            vec![d; 2],
            vec!["a".into(); 2]
        )
        .is_err());
        assert!(Skeleton::new(
            vec![ROOT_PARENT, 2, 0],
            vec![0.0, 1.0, 1.0],
            vec![d; 3],
            vec!["a".into(); 3]
        )
        .is_err());
        assert!(Skeleton::new(
            vec![ROOT_PARENT, 0],
            vec![0.0, 1.0],
            vec![[0.0; 3]; 2],
            vec!["a".into(); 2]
        )
        .is_err());
        let s = Skeleton::human16();
        assert_eq!(s.joint_count(), 16);
        assert_eq!(s.id(), Skeleton::human16().id());
    }

    #[test]
    fn variance_vector_rejects_negative() {
        assert!(VarianceVector::new(vec![1.0, -0.1]).is_err());
        assert!(VarianceVector::raw(vec![1.0, -0.1]).is_ok());
    }

    proptest! {
        #[test]
        fn root_center_preserves_distances_and_is_idempotent(
            coords in prop::collection::vec(-2000.0f64..2000.0, 3 * 6)
        ) {
            let once = root_center(&coords).unwrap();
            let twice = root_center(once.as_slice()).unwrap();
            prop_assert_eq!(&once, &twice);
            for a in 0..6 {
                for b in 0..6 {
                    prop_assert!((dist(&coords, a, b) - dist(once.as_slice(), a, b)).abs() < 1e-9);
                }
            }
        }
    }
}
