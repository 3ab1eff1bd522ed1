//! Hypothesis generation: one 2D pose in, S root-centered 3D poses out.
//!
//! Raw sigmas come from the chosen [`NoiseKind`], are clamped and scaled by
//! [`adjust_sigma`], and drive independent Gaussian noise either on the 2D
//! input before lifting ([`Layer::PreSample`]) or on the single lifted pose
//! ([`Layer::PostSample`]).
//!
//! Hypothesis `h` of sample `id` always draws from the substream keyed by
//! `(seed, id, h)`, so the first S hypotheses of a larger set are exactly the
//! set generated with S, and all kinds share the same underlying draws.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::avgnoise::{AvgModel, PseudoLabelSet};
use crate::error::{Error, Result};
use crate::io;
use crate::lifter::LifterModel;
use crate::pose::{HypothesisSet, Pose2D, Pose3D, VarianceVector};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    NoAdapted,
    JointsAdapted,
    SampleAdapted,
    SampleJointsAdapted,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::NoAdapted,
        NoiseKind::JointsAdapted,
        NoiseKind::SampleAdapted,
        NoiseKind::SampleJointsAdapted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::NoAdapted => "no_adapted",
            NoiseKind::JointsAdapted => "joints_adapted",
            NoiseKind::SampleAdapted => "sample_adapted",
            NoiseKind::SampleJointsAdapted => "sample_joints_adapted",
        }
    }

    /// Whether the kind reads the variance network.
    pub fn uses_avg(self) -> bool {
        matches!(
            self,
            NoiseKind::SampleAdapted | NoiseKind::SampleJointsAdapted
        )
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "no_adapted" | "na" => Ok(NoiseKind::NoAdapted),
            "joints_adapted" | "ja" => Ok(NoiseKind::JointsAdapted),
            "sample_adapted" | "sa" => Ok(NoiseKind::SampleAdapted),
            "sample_joints_adapted" | "sja" => Ok(NoiseKind::SampleJointsAdapted),
            _ => Err(Error::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "pre", alias = "pre_sample")]
    PreSample,
    #[serde(rename = "post", alias = "post_sample")]
    PostSample,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::PreSample => "pre",
            Layer::PostSample => "post",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pre" | "pre_sample" => Ok(Layer::PreSample),
            "post" | "post_sample" => Ok(Layer::PostSample),
            _ => Err(Error::Config(format!("unknown layer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStrategy {
    pub kind: NoiseKind,
    pub alpha: f64,
    pub layer: Layer,
}

impl NoiseStrategy {
    pub fn new(kind: NoiseKind, alpha: f64, layer: Layer) -> Result<Self> {
        let s = Self { kind, alpha, layer };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Training-set mean pseudo-label per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPrior(VarianceVector);

impl JointPrior {
    pub fn new(sigmas: VarianceVector) -> Result<Self> {
        let mean = sigmas.mean();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidVariance(format!(
                "joint prior must average 1, got {mean}"
            )));
        }
        Ok(Self(sigmas))
    }

    pub fn from_labels(pseudo: &PseudoLabelSet) -> Result<Self> {
        Self::new(pseudo.joint_means()?)
    }

    pub fn sigmas(&self) -> &VarianceVector {
        &self.0
    }
}

/// Which random substreams a hypothesis set draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub seed: u64,
    pub sample_id: u64,
}

/// `alpha * max(sigma_v, 1)` per joint.
pub fn adjust_sigma(raw: &VarianceVector, alpha: f64) -> Result<VarianceVector> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    VarianceVector::new(raw.as_slice().iter().map(|&s| alpha * s.max(1.0)).collect())
}

/// Raw sigma for a kind. `avg_output` is the variance network's output for
/// this pose; `prior` the per-joint training mean.
pub fn raw_sigma(
    kind: NoiseKind,
    v: usize,
    avg_output: Option<&[f64]>,
    prior: Option<&JointPrior>,
) -> Result<VarianceVector> {
    let avg = || {
        let out = avg_output
            .ok_or_else(|| Error::InvalidArgument(format!("{kind} needs the variance network")))?;
        if out.len() != v {
            return Err(Error::JointCountMismatch {
                expected: v,
                found: out.len(),
            });
        }
        Ok(out)
    };
    match kind {
        NoiseKind::NoAdapted => Ok(VarianceVector::ones(v)),
        NoiseKind::JointsAdapted => {
            let prior = prior.ok_or_else(|| {
                Error::InvalidArgument("joints_adapted needs the joint prior".into())
            })?;
            if prior.sigmas().len() != v {
                return Err(Error::JointCountMismatch {
                    expected: v,
                    found: prior.sigmas().len(),
                });
            }
            Ok(prior.sigmas().clone())
        }
        NoiseKind::SampleAdapted => {
            let out = avg()?;
            let mean = out.iter().sum::<f64>() / v as f64;
            VarianceVector::raw(vec![mean; v])
        }
        NoiseKind::SampleJointsAdapted => VarianceVector::raw(avg()?.to_vec()),
    }
}

fn check_count(s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::InvalidArgument(
            "hypothesis count must be >= 1".into(),
        ));
    }
    Ok(())
}

/// `(S, 2V)` matrix of noisy copies of `pose2d`.
fn amplified_rows(
    pose2d: &Pose2D,
    sigma_tilde: &VarianceVector,
    s: usize,
    key: SampleKey,
) -> Result<Array2<f64>> {
    check_count(s)?;
    let v = pose2d.joint_count();
    if sigma_tilde.len() != v {
        return Err(Error::JointCountMismatch {
            expected: v,
            found: sigma_tilde.len(),
        });
    }
    let x = pose2d.as_slice();
    let sigma = sigma_tilde.as_slice();
    let mut rows = Array2::zeros((s, 2 * v));
    for (h, mut row) in rows.rows_mut().into_iter().enumerate() {
        let mut rng = rng::keyed(key.seed, Stream::Hypothesis, key.sample_id, h as u64);
        for (c, out) in row.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *out = x[c] + sigma[c / 2] * z;
        }
    }
    Ok(rows)
}

/// S noisy copies of the input, independent N(0, sigma_v^2) per coordinate.
pub fn amplify_2d(
    pose2d: &Pose2D,
    sigma_tilde: &VarianceVector,
    s: usize,
    key: SampleKey,
) -> Result<Vec<Pose2D>> {
    let rows = amplified_rows(pose2d, sigma_tilde, s, key)?;
    rows.rows()
        .into_iter()
        .map(|r| Pose2D::from_flat(r.to_vec()))
        .collect()
}

/// Output of one hypothesis draw, with the intermediate quantities kept for export.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses {
    pub set: HypothesisSet,
    pub sigma_tilde: VarianceVector,
    /// Perturbed 2D inputs, pre-sample layer only.
    pub samples_2d: Option<Array2<f64>>,
}

/// Frozen models bound together for sampling.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    lifter: &'a LifterModel,
    avg: Option<&'a AvgModel>,
    prior: Option<&'a JointPrior>,
    /// mm per normalized 2D unit, used by the post-sample layer.
    mm_per_unit: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(
        lifter: &'a LifterModel,
        avg: Option<&'a AvgModel>,
        prior: Option<&'a JointPrior>,
        mm_per_unit: f64,
    ) -> Result<Self> {
        let v = lifter.joint_count();
        if let Some(a) = avg {
            if a.joint_count() != v {
                return Err(Error::JointCountMismatch {
                    expected: v,
                    found: a.joint_count(),
                });
            }
        }
        if let Some(p) = prior {
            if p.sigmas().len() != v {
                return Err(Error::JointCountMismatch {
                    expected: v,
                    found: p.sigmas().len(),
                });
            }
        }
        if !(mm_per_unit.is_finite() && mm_per_unit > 0.0) {
            return Err(Error::Config(format!(
                "mm_per_unit must be positive, got {mm_per_unit}"
            )));
        }
        Ok(Self {
            lifter,
            avg,
            prior,
            mm_per_unit,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.lifter.joint_count()
    }

    /// Variance network output for a batch of poses, or `None` without a network.
    pub fn avg_rows(&self, rows: ArrayView2<f64>) -> Result<Option<Array2<f64>>> {
        self.avg.map(|a| a.predict_rows(rows)).transpose()
    }

    pub fn raw_sigma(&self, kind: NoiseKind, pose2d: &Pose2D) -> Result<VarianceVector> {
        pose2d.expect_joints(self.joint_count())?;
        let out = match (kind.uses_avg(), self.avg) {
            (true, Some(avg)) => Some(avg.predict_variance(pose2d)?),
            _ => None,
        };
        raw_sigma(
            kind,
            self.joint_count(),
            out.as_ref().map(VarianceVector::as_slice),
            self.prior,
        )
    }

    pub fn generate(
        &self,
        pose2d: &Pose2D,
        strategy: &NoiseStrategy,
        s: usize,
        key: SampleKey,
    ) -> Result<Hypotheses> {
        let raw = self.raw_sigma(strategy.kind, pose2d)?;
        self.generate_from_raw(pose2d, &raw, strategy, s, key)
    }

    /// As [`Sampler::generate`] with the raw sigma already computed.
    pub fn generate_from_raw(
        &self,
        pose2d: &Pose2D,
        raw: &VarianceVector,
        strategy: &NoiseStrategy,
        s: usize,
        key: SampleKey,
    ) -> Result<Hypotheses> {
        strategy.validate()?;
        check_count(s)?;
        let v = self.joint_count();
        pose2d.expect_joints(v)?;
        if raw.len() != v {
            return Err(Error::JointCountMismatch {
                expected: v,
                found: raw.len(),
            });
        }
        let sigma_tilde = adjust_sigma(raw, strategy.alpha)?;
        match strategy.layer {
            Layer::PreSample => {
                let rows = amplified_rows(pose2d, &sigma_tilde, s, key)?;
                let set = HypothesisSet::new(key.sample_id, self.lifter.lift_rows(rows.view())?)?;
                Ok(Hypotheses {
                    set,
                    sigma_tilde,
                    samples_2d: Some(rows),
                })
            }
            Layer::PostSample => {
                let base = self.lifter.lift(pose2d)?;
                let set = HypothesisSet::new(
                    key.sample_id,
                    self.post_sample(&base, &sigma_tilde, s, key)?,
                )?;
                Ok(Hypotheses {
                    set,
                    sigma_tilde,
                    samples_2d: None,
                })
            }
        }
    }

    /// 3D noise at `sigma_v * mm_per_unit` on every coordinate of the non-root joints.
    fn post_sample(
        &self,
        base: &Pose3D,
        sigma_tilde: &VarianceVector,
        s: usize,
        key: SampleKey,
    ) -> Result<Vec<Pose3D>> {
        let sigma = sigma_tilde.as_slice();
        (0..s)
            .map(|h| {
                let mut rng = rng::keyed(key.seed, Stream::Hypothesis, key.sample_id, h as u64);
                let mut coords = base.as_slice().to_vec();
                for (c, out) in coords.iter_mut().enumerate().skip(3) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *out += sigma[c / 3] * self.mm_per_unit * z;
                }
                Pose3D::from_flat(coords)
            })
            .collect()
    }
}

pub fn generate_hypotheses(
    lifter: &LifterModel,
    avg: Option<&AvgModel>,
    prior: Option<&JointPrior>,
    pose2d: &Pose2D,
    strategy: &NoiseStrategy,
    s: usize,
    key: SampleKey,
    mm_per_unit: f64,
) -> Result<HypothesisSet> {
    Ok(Sampler::new(lifter, avg, prior, mm_per_unit)?
        .generate(pose2d, strategy, s, key)?
        .set)
}

/// One exported sample: input, sigmas, perturbed inputs and hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub sample_id: u64,
    pub strategy: NoiseKind,
    pub layer: Layer,
    pub alpha: f64,
    pub input2d: Pose2D,
    pub sigma_tilde: VarianceVector,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples2d: Vec<Pose2D>,
    pub hypotheses: Vec<Pose3D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt3d: Option<Pose3D>,
}

impl HypothesisRecord {
    pub fn new(
        input2d: &Pose2D,
        strategy: &NoiseStrategy,
        h: Hypotheses,
        gt3d: Option<Pose3D>,
    ) -> Result<Self> {
        let samples2d = match h.samples_2d {
            Some(rows) => rows
                .rows()
                .into_iter()
                .map(|r| Pose2D::from_flat(r.to_vec()))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            sample_id: h.set.source_sample_id(),
            strategy: strategy.kind,
            layer: strategy.layer,
            alpha: strategy.alpha,
            input2d: input2d.clone(),
            sigma_tilde: h.sigma_tilde,
            samples2d,
            hypotheses: h.set.hypotheses().to_vec(),
            gt3d,
        })
    }
}

/// JSON lines, one record per sample.
pub fn write_hypotheses(path: &Path, records: &[HypothesisRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::dataset(path, e.to_string()))?;
        buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    io::write_atomic(path, &buf)
}

pub fn read_hypotheses(path: &Path) -> Result<Vec<HypothesisRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::dataset(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{NetSpec, Network};

    fn key(sample_id: u64) -> SampleKey {
        SampleKey {
            seed: 11,
            sample_id,
        }
    }

    /// Lifter whose output depends on its input through a fixed random residual MLP.
    fn lifter(v: usize) -> LifterModel {
        let net = Network::init(NetSpec::residual(2 * v, 3 * v, 16, 1), 4).unwrap();
        LifterModel::from_network(net, "test".into()).unwrap()
    }

    /// Variance network that outputs `value` at every joint regardless of input.
    fn constant_avg(v: usize, value: f64) -> AvgModel {
        let params: Vec<f64> = std::iter::repeat_n(0.0, 2 * v * v)
            .chain(std::iter::repeat_n(value, v))
            .collect();
        let net = Network::from_params(NetSpec::linear(2 * v, v), &params).unwrap();
        AvgModel::from_network(net).unwrap()
    }

    fn pose(v: usize) -> Pose2D {
        Pose2D::from_flat((0..2 * v).map(|i| (i as f64 * 0.37).sin() * 0.3).collect()).unwrap()
    }

    #[test]
    fn adjust_sigma_examples() {
        let out = |s: f64, a: f64| {
            adjust_sigma(&VarianceVector::raw(vec![s]).unwrap(), a)
                .unwrap()
                .as_slice()[0]
        };
        assert_eq!(out(0.5, 0.01), 0.01);
        assert_eq!(out(2.0, 0.01), 0.02);
        assert_eq!(out(-3.0, 0.005), 0.005);
        assert!(adjust_sigma(&VarianceVector::ones(2), 0.0).is_err());
    }

    #[test]
    fn zero_sigma_gives_identical_copies() {
        let x = pose(3);
        let copies =
            amplify_2d(&x, &VarianceVector::new(vec![0.0; 3]).unwrap(), 5, key(0)).unwrap();
        assert_eq!(copies.len(), 5);
        assert!(copies.iter().all(|c| c == &x));
    }

    #[test]
    fn amplification_is_deterministic_and_nested() {
        let x = pose(4);
        let sigma = VarianceVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = amplify_2d(&x, &sigma, 10, key(3)).unwrap();
        assert_eq!(a, amplify_2d(&x, &sigma, 10, key(3)).unwrap());
        assert_eq!(&a[..4], &amplify_2d(&x, &sigma, 4, key(3)).unwrap()[..]);
        assert_ne!(a, amplify_2d(&x, &sigma, 10, key(4)).unwrap());
        assert!(amplify_2d(&x, &sigma, 0, key(3)).is_err());
    }

    #[test]
    fn amplification_moments() {
        let x = Pose2D::from_flat(vec![0.25, -0.5]).unwrap();
        let sigma = 0.03;
        let n = 100_000;
        let draws = amplify_2d(&x, &VarianceVector::new(vec![sigma]).unwrap(), n, key(9)).unwrap();
        let du: Vec<f64> = draws.iter().map(|p| p.as_slice()[0] - 0.25).collect();
        let dv: Vec<f64> = draws.iter().map(|p| p.as_slice()[1] + 0.5).collect();
        let mean = |d: &[f64]| d.iter().sum::<f64>() / n as f64;
        let (mu, mv) = (mean(&du), mean(&dv));
        let var =
            |d: &[f64], m: f64| d.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (su, sv) = (var(&du, mu).sqrt(), var(&dv, mv).sqrt());
        assert!((su / sigma - 1.0).abs() < 0.02, "std u {su}");
        assert!((sv / sigma - 1.0).abs() < 0.02, "std v {sv}");
        let cov = du
            .iter()
            .zip(&dv)
            .map(|(a, b)| (a - mu) * (b - mv))
            .sum::<f64>()
            / (n - 1) as f64;
        let rho = cov / (su * sv);
        assert!(rho.abs() < 0.01, "rho {rho}");
    }

    #[test]
    fn tiny_alpha_collapses_to_single_lift() {
        let l = lifter(3);
        let avg = constant_avg(3, 2.5);
        let x = pose(3);
        let strategy =
            NoiseStrategy::new(NoiseKind::SampleJointsAdapted, 1e-300, Layer::PreSample).unwrap();
        let set =
            generate_hypotheses(&l, Some(&avg), None, &x, &strategy, 1, key(0), 2500.0).unwrap();
        assert_eq!(set.hypotheses()[0], l.lift(&x).unwrap());
    }

    #[test]
    fn shape_contract_for_every_strategy() {
        let l = lifter(4);
        let avg = constant_avg(4, 1.7);
        let prior =
            JointPrior::new(VarianceVector::new(vec![0.5, 1.5, 1.0, 1.0]).unwrap()).unwrap();
        let sampler = Sampler::new(&l, Some(&avg), Some(&prior), 2500.0).unwrap();
        for kind in NoiseKind::ALL {
            for layer in [Layer::PreSample, Layer::PostSample] {
                let strategy = NoiseStrategy::new(kind, 0.01, layer).unwrap();
                let h = sampler.generate(&pose(4), &strategy, 7, key(2)).unwrap();
                assert_eq!(h.set.len(), 7);
                assert_eq!(h.set.source_sample_id(), 2);
                assert!(h.set.hypotheses().iter().all(Pose3D::is_root_centered));
                assert_eq!(h.samples_2d.is_some(), layer == Layer::PreSample);
            }
        }
        let strategy = NoiseStrategy::new(NoiseKind::NoAdapted, 0.01, Layer::PreSample).unwrap();
        assert!(sampler.generate(&pose(4), &strategy, 0, key(2)).is_err());
        assert!(matches!(
            sampler.generate(&pose(3), &strategy, 2, key(2)),
            Err(Error::JointCountMismatch { .. })
        ));
    }

    #[test]
    fn no_adapted_sigma_is_alpha() {
        let l = lifter(3);
        let sampler = Sampler::new(&l, None, None, 2500.0).unwrap();
        let strategy = NoiseStrategy::new(NoiseKind::NoAdapted, 0.005, Layer::PreSample).unwrap();
        let h = sampler.generate(&pose(3), &strategy, 2, key(0)).unwrap();
        assert_eq!(h.sigma_tilde.as_slice(), &[0.005; 3]);
        assert_eq!(
            sampler.raw_sigma(NoiseKind::NoAdapted, &pose(3)).unwrap(),
            VarianceVector::ones(3)
        );
    }

    #[test]
    fn missing_models_are_reported() {
        let l = lifter(3);
        let sampler = Sampler::new(&l, None, None, 2500.0).unwrap();
        assert!(sampler
            .raw_sigma(NoiseKind::JointsAdapted, &pose(3))
            .is_err());
        assert!(sampler
            .raw_sigma(NoiseKind::SampleAdapted, &pose(3))
            .is_err());
        assert!(Sampler::new(&l, Some(&constant_avg(4, 1.0)), None, 2500.0).is_err());
        assert!(JointPrior::new(VarianceVector::new(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn sample_kinds_share_per_sample_mean() {
        let out = [0.2, 3.0, 1.9, -0.4];
        let sa = raw_sigma(NoiseKind::SampleAdapted, 4, Some(&out), None).unwrap();
        let sja = raw_sigma(NoiseKind::SampleJointsAdapted, 4, Some(&out), None).unwrap();
        assert!((sa.mean() - sja.mean()).abs() < 1e-15);
        assert!(sa.as_slice().iter().all(|&s| s == sa.as_slice()[0]));
    }

    #[test]
    fn strategies_coincide_at_fixed_point() {
        let l = lifter(4);
        let avg = constant_avg(4, 1.0);
        let prior = JointPrior::new(VarianceVector::ones(4)).unwrap();
        let sampler = Sampler::new(&l, Some(&avg), Some(&prior), 2500.0).unwrap();
        for layer in [Layer::PreSample, Layer::PostSample] {
            let sets: Vec<_> = NoiseKind::ALL
                .iter()
                .map(|&k| {
                    sampler
                        .generate(
                            &pose(4),
                            &NoiseStrategy::new(k, 0.01, layer).unwrap(),
                            6,
                            key(5),
                        )
                        .unwrap()
                        .set
                })
                .collect();
            assert!(sets.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn post_sample_with_zero_sigma_copies_the_lift() {
        let l = lifter(3);
        let sampler = Sampler::new(&l, None, None, 2500.0).unwrap();
        let x = pose(3);
        let strategy = NoiseStrategy::new(NoiseKind::NoAdapted, 1e-300, Layer::PostSample).unwrap();
        let h = sampler.generate(&x, &strategy, 4, key(1)).unwrap();
        let lifted = l.lift(&x).unwrap();
        assert!(h.set.hypotheses().iter().all(|p| p == &lifted));
    }

    #[test]
    fn post_sample_noise_scale_is_in_mm() {
        let l = lifter(2);
        let sampler = Sampler::new(&l, None, None, 2500.0).unwrap();
        let x = pose(2);
        let strategy = NoiseStrategy::new(NoiseKind::NoAdapted, 0.01, Layer::PostSample).unwrap();
        let n = 20_000;
        let h = sampler.generate(&x, &strategy, n, key(1)).unwrap();
        let base = l.lift(&x).unwrap();
        let d: Vec<f64> = h
            .set
            .hypotheses()
            .iter()
            .map(|p| p.as_slice()[3] - base.as_slice()[3])
            .collect();
        let std = (d.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt();
        assert!((std / 25.0 - 1.0).abs() < 0.03, "std {std}");
    }

    #[test]
    fn export_round_trip() {
        let l = lifter(3);
        let sampler = Sampler::new(&l, None, None, 2500.0).unwrap();
        let x = pose(3);
        let strategy = NoiseStrategy::new(NoiseKind::NoAdapted, 0.01, Layer::PreSample).unwrap();
        let h = sampler.generate(&x, &strategy, 3, key(8)).unwrap();
        let record = HypothesisRecord::new(&x, &strategy, h, None).unwrap();
        assert_eq!(record.samples2d.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        write_hypotheses(&path, &[record.clone(), record.clone()]).unwrap();
        assert_eq!(
            read_hypotheses(&path).unwrap(),
            vec![record.clone(), record]
        );
    }

    #[test]
    fn names_parse() {
        for k in NoiseKind::ALL {
            assert_eq!(k.as_str().parse::<NoiseKind>().unwrap(), k);
        }
        assert_eq!(
            "SJA".parse::<NoiseKind>().unwrap(),
            NoiseKind::SampleJointsAdapted
        );
        assert_eq!("post".parse::<Layer>().unwrap(), Layer::PostSample);
        assert!("both".parse::<Layer>().is_err());
    }
}
