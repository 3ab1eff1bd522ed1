//! Pose-error metrics: MPJPE, similarity-Procrustes alignment (protocol #2),
//! best-hypothesis (P-Best) and per-joint best (J-Best) selection, and PCK.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{HypothesisSet, Pose3D};

pub const DEFAULT_PCK_THRESHOLD_MM: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Root-relative, no alignment.
    P1,
    /// Similarity Procrustes alignment before scoring.
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    PBest,
    JBest,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::P1 => "p1",
            ProtocolKind::P2 => "p2",
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(ProtocolKind::P1),
            "p2" => Ok(ProtocolKind::P2),
            other => Err(Error::InvalidArgument(format!(
                "unknown protocol `{other}`"
            ))),
        }
    }
}

impl Selection {
    pub fn as_str(self) -> &'static str {
        match self {
            Selection::PBest => "pbest",
            Selection::JBest => "jbest",
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "pbest" => Ok(Selection::PBest),
            "jbest" => Ok(Selection::JBest),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub kind: ProtocolKind,
    pub selection: Selection,
    pub pck_threshold_mm: f64,
}

impl EvalProtocol {
    pub fn new(kind: ProtocolKind, selection: Selection) -> Self {
        Self {
            kind,
            selection,
            pck_threshold_mm: DEFAULT_PCK_THRESHOLD_MM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pck_threshold_mm.is_finite() && self.pck_threshold_mm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "PCK threshold must be > 0, got {}",
                self.pck_threshold_mm
            )));
        }
        Ok(())
    }
}

fn joint_distance(a: &Pose3D, b: &Pose3D, j: usize) -> f64 {
    let (p, q) = (a.joint(j), b.joint(j));
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Euclidean error of every joint.
pub fn joint_errors(pred: &Pose3D, gt: &Pose3D) -> Result<Vec<f64>> {
    pred.expect_joints(gt.joint_count())?;
    Ok((0..gt.joint_count())
        .map(|j| joint_distance(pred, gt, j))
        .collect())
}

/// Mean per-joint position error, mm.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    let errors = joint_errors(pred, gt)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

fn centroid_and_centered(pose: &Pose3D) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let v = pose.joint_count();
    let points: Vec<Vector3<f64>> = (0..v).map(|j| Vector3::from(pose.joint(j))).collect();
    let centroid = points.iter().sum::<Vector3<f64>>() / v as f64;
    (centroid, points.into_iter().map(|p| p - centroid).collect())
}

/// Aligns `pred` onto `gt` with the least-squares similarity transform
/// `s R pred + t` (proper rotation, positive scale).
pub fn procrustes_align(pred: &Pose3D, gt: &Pose3D) -> Result<Pose3D> {
    pred.expect_joints(gt.joint_count())?;
    let (mu_p, p) = centroid_and_centered(pred);
    let (mu_g, g) = centroid_and_centered(gt);
    let norm_p: f64 = p.iter().map(|x| x.norm_squared()).sum();
    let norm_g: f64 = g.iter().map(|x| x.norm_squared()).sum();
    if !(norm_p > 1e-18 && norm_g > 1e-18) {
        return Err(Error::Alignment("all joints coincide".into()));
    }

    let cross: Matrix3<f64> = g.iter().zip(&p).map(|(gi, pi)| gi * pi.transpose()).sum();
    let svd = cross.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 1e-12 * sv[0]) {
        return Err(Error::Alignment(
            "cross-covariance is rank deficient (collinear joints)".into(),
        ));
    }

    let d = if (u * v_t).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    // flip the direction belonging to the smallest singular value
    let smallest = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("3 values");
    let mut correction = Matrix3::identity();
    correction[(smallest, smallest)] = d;
    let rotation = u * correction * v_t;
    let trace: f64 = (0..3)
        .map(|i| correction[(i, i)] * svd.singular_values[i])
        .sum();
    let scale = trace / norm_p;
    let translation = mu_g - scale * rotation * mu_p;

    let aligned: Vec<f64> = (0..pred.joint_count())
        .flat_map(|j| {
            let q = scale * rotation * Vector3::from(pred.joint(j)) + translation;
            [q.x, q.y, q.z]
        })
        .collect();
    Pose3D::from_flat(aligned)
}

/// Per-hypothesis, per-joint errors under one protocol, computed once and
/// reused for every prefix length and selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisErrors {
    /// `errors[h][j]`.
    errors: Vec<Vec<f64>>,
}

impl HypothesisErrors {
    pub fn compute(hyps: &HypothesisSet, gt: &Pose3D, kind: ProtocolKind) -> Result<Self> {
        let errors = hyps
            .hypotheses()
            .iter()
            .map(|h| match kind {
                ProtocolKind::P1 => joint_errors(h, gt),
                ProtocolKind::P2 => joint_errors(&procrustes_align(h, gt)?, gt),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { errors })
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    fn check_prefix(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.errors.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix {s} of {} hypotheses",
                self.errors.len()
            )));
        }
        Ok(())
    }

    pub fn mpjpe_of(&self, h: usize) -> f64 {
        self.errors[h].iter().sum::<f64>() / self.errors[h].len() as f64
    }

    /// `(index, error)` of the best of the first `s` hypotheses; ties go to the lowest index.
    pub fn best(&self, s: usize) -> Result<(usize, f64)> {
        self.check_prefix(s)?;
        let mut best = (0, self.mpjpe_of(0));
        for h in 1..s {
            let e = self.mpjpe_of(h);
            if e < best.1 {
                best = (h, e);
            }
        }
        Ok(best)
    }

    pub fn p_best(&self, s: usize) -> Result<f64> {
        self.best(s).map(|(_, e)| e)
    }

    pub fn j_best(&self, s: usize) -> Result<f64> {
        self.check_prefix(s)?;
        let v = self.errors[0].len();
        let total: f64 = (0..v)
            .map(|j| {
                self.errors[..s]
                    .iter()
                    .map(|e| e[j])
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        Ok(total / v as f64)
    }

    pub fn select(&self, s: usize, selection: Selection) -> Result<f64> {
        match selection {
            Selection::PBest => self.p_best(s),
            Selection::JBest => self.j_best(s),
        }
    }

    /// Fraction of the best hypothesis' joints with error strictly below `threshold`.
    pub fn pck(&self, s: usize, threshold: f64) -> Result<f64> {
        let (h, _) = self.best(s)?;
        let hits = self.errors[h].iter().filter(|&&e| e < threshold).count();
        Ok(hits as f64 / self.errors[h].len() as f64)
    }
}

/// Best-hypothesis MPJPE (P-Best).
pub fn min_mpjpe(hyps: &HypothesisSet, gt: &Pose3D, kind: ProtocolKind) -> Result<f64> {
    HypothesisErrors::compute(hyps, gt, kind)?.p_best(hyps.len())
}

/// Index and error of the best hypothesis.
pub fn best_hypothesis(
    hyps: &HypothesisSet,
    gt: &Pose3D,
    kind: ProtocolKind,
) -> Result<(usize, f64)> {
    HypothesisErrors::compute(hyps, gt, kind)?.best(hyps.len())
}

/// Per-joint minimum over hypotheses, averaged over joints (protocol #1).
pub fn j_best_mpjpe(hyps: &HypothesisSet, gt: &Pose3D) -> Result<f64> {
    HypothesisErrors::compute(hyps, gt, ProtocolKind::P1)?.j_best(hyps.len())
}

/// Protocol-and-selection dispatch.
pub fn evaluate(hyps: &HypothesisSet, gt: &Pose3D, protocol: &EvalProtocol) -> Result<f64> {
    HypothesisErrors::compute(hyps, gt, protocol.kind)?.select(hyps.len(), protocol.selection)
}

/// PCK of the protocol-#1 best hypothesis.
pub fn pck(hyps: &HypothesisSet, gt: &Pose3D, protocol: &EvalProtocol) -> Result<f64> {
    protocol.validate()?;
    HypothesisErrors::compute(hyps, gt, ProtocolKind::P1)?
        .pck(hyps.len(), protocol.pck_threshold_mm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use rand::Rng as _;

    fn random_pose(rng: &mut rng::Rng, v: usize) -> Pose3D {
        let coords: Vec<f64> = (0..3 * v)
            .map(|_| rng.random_range(-800.0..800.0))
            .collect();
        Pose3D::root_relative(coords).unwrap()
    }

    fn set(hyps: Vec<Pose3D>) -> HypothesisSet {
        HypothesisSet::new(0, hyps).unwrap()
    }

    #[test]
    fn mpjpe_basics() {
        let mut r = rng::keyed(0, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 16);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);

        let mut shifted = gt.as_slice().to_vec();
        shifted[3 * 5 + 1] += 3.0;
        let shifted = Pose3D::from_flat(shifted).unwrap();
        assert!((mpjpe(&shifted, &gt).unwrap() - 3.0 / 16.0).abs() < 1e-12);

        let short = Pose3D::from_flat(vec![0.0; 9]).unwrap();
        assert!(matches!(
            mpjpe(&short, &gt),
            Err(Error::JointCountMismatch { .. })
        ));
    }

    #[test]
    fn mpjpe_matches_scalar_oracle() {
        let mut r = rng::keyed(1, Stream::Test, 0, 0);
        for _ in 0..50 {
            let (a, b) = (random_pose(&mut r, 16), random_pose(&mut r, 16));
            let mut total = 0.0;
            for j in 0..16 {
                let mut sq = 0.0;
                for k in 0..3 {
                    let d = a.as_slice()[3 * j + k] - b.as_slice()[3 * j + k];
                    sq += d * d;
                }
                total += sq.sqrt();
            }
            assert!((mpjpe(&a, &b).unwrap() - total / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn procrustes_undoes_similarity() {
        let mut r = rng::keyed(2, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 16);
        let angle = 30f64.to_radians();
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), angle);
        let moved: Vec<f64> = (0..16)
            .flat_map(|j| {
                let q = 1.2 * (rot * Vector3::from(gt.joint(j))) + Vector3::new(5.0, 5.0, 5.0);
                [q.x, q.y, q.z]
            })
            .collect();
        let aligned = procrustes_align(&Pose3D::from_flat(moved).unwrap(), &gt).unwrap();
        assert!(mpjpe(&aligned, &gt).unwrap() < 1e-9);

        let same = procrustes_align(&gt, &gt).unwrap();
        for (a, b) in same.as_slice().iter().zip(gt.as_slice()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn procrustes_handles_reflection() {
        let mut r = rng::keyed(3, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 10);
        let mirrored: Vec<f64> = gt
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &c)| if i % 3 == 0 { -c } else { c })
            .collect();
        let aligned = procrustes_align(&Pose3D::from_flat(mirrored).unwrap(), &gt).unwrap();
        // a proper rotation cannot undo a mirror image, but alignment never hurts
        assert!(mpjpe(&aligned, &gt).unwrap() > 1e-3);
        let (_, centered) = centroid_and_centered(&aligned);
        assert!(centered.iter().all(|p| p.iter().all(|c| c.is_finite())));
    }

    #[test]
    fn procrustes_rejects_degenerate_poses() {
        let coincident = Pose3D::from_flat(vec![1.0; 12]).unwrap();
        let ok =
            Pose3D::from_joints(&[[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
                .unwrap();
        assert!(matches!(
            procrustes_align(&coincident, &ok),
            Err(Error::Alignment(_))
        ));
        let collinear =
            Pose3D::from_joints(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
                .unwrap();
        assert!(matches!(
            procrustes_align(&collinear, &ok),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn selection_rules() {
        let mut r = rng::keyed(4, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 16);
        let other = random_pose(&mut r, 16);
        let single = set(vec![other.clone()]);
        assert_eq!(
            min_mpjpe(&single, &gt, ProtocolKind::P1).unwrap(),
            mpjpe(&other, &gt).unwrap()
        );
        assert_eq!(
            j_best_mpjpe(&single, &gt).unwrap(),
            mpjpe(&other, &gt).unwrap()
        );
        assert_eq!(
            min_mpjpe(&set(vec![other.clone(), gt.clone()]), &gt, ProtocolKind::P1).unwrap(),
            0.0
        );

        // each hypothesis is perfect on a disjoint half of the joints
        let (mut a, mut b) = (gt.as_slice().to_vec(), gt.as_slice().to_vec());
        for j in 1..16 {
            let target = if j < 8 { &mut a } else { &mut b };
            target[3 * j] += 50.0;
        }
        let halves = set(vec![
            Pose3D::from_flat(a).unwrap(),
            Pose3D::from_flat(b).unwrap(),
        ]);
        assert_eq!(j_best_mpjpe(&halves, &gt).unwrap(), 0.0);
        assert!(min_mpjpe(&halves, &gt, ProtocolKind::P1).unwrap() > 0.0);
    }

    #[test]
    fn min_mpjpe_is_brute_force_minimum() {
        let mut r = rng::keyed(5, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 16);
        let hyps: Vec<Pose3D> = (0..10).map(|_| random_pose(&mut r, 16)).collect();
        let brute = hyps
            .iter()
            .map(|h| mpjpe(h, &gt).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_mpjpe(&set(hyps), &gt, ProtocolKind::P1).unwrap(), brute);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mut r = rng::keyed(6, Stream::Test, 0, 0);
        let gt = random_pose(&mut r, 8);
        let a = random_pose(&mut r, 8);
        let b = random_pose(&mut r, 8);
        let (idx, _) = best_hypothesis(
            &set(vec![b.clone(), a.clone(), a.clone()]),
            &gt,
            ProtocolKind::P1,
        )
        .unwrap();
        let expected = if mpjpe(&a, &gt).unwrap() < mpjpe(&b, &gt).unwrap() {
            1
        } else {
            0
        };
        assert_eq!(idx, expected);
    }

    #[test]
    fn pck_counts_joints_below_threshold() {
        let gt = Pose3D::from_flat(vec![0.0; 48]).unwrap();
        let protocol = EvalProtocol::new(ProtocolKind::P1, Selection::PBest);
        assert_eq!(pck(&set(vec![gt.clone()]), &gt, &protocol).unwrap(), 1.0);

        let far = Pose3D::from_flat(vec![200.0; 48]).unwrap();
        assert_eq!(pck(&set(vec![far]), &gt, &protocol).unwrap(), 0.0);

        let mut half = vec![0.0; 48];
        for j in 8..16 {
            half[3 * j] = 160.0;
        }
        let half = Pose3D::from_flat(half).unwrap();
        assert_eq!(pck(&set(vec![half]), &gt, &protocol).unwrap(), 0.5);

        // exactly at the threshold counts as incorrect
        let mut edge = vec![0.0; 48];
        edge[3] = 150.0;
        let edge = Pose3D::from_flat(edge).unwrap();
        assert_eq!(pck(&set(vec![edge]), &gt, &protocol).unwrap(), 15.0 / 16.0);
    }

    #[test]
    fn prefixes_are_validated() {
        let gt = Pose3D::from_flat(vec![0.0; 6]).unwrap();
        let errs =
            HypothesisErrors::compute(&set(vec![gt.clone()]), &gt, ProtocolKind::P1).unwrap();
        assert!(errs.p_best(0).is_err());
        assert!(errs.p_best(2).is_err());
    }
}
