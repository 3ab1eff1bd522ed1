use proptest::prelude::*;

use mhlift::avgnoise::{kl_gaussian, normalize_errors};
use mhlift::metrics::{
    joint_errors, min_mpjpe, procrustes_align, HypothesisErrors, ProtocolKind, Selection,
};
use mhlift::nn::{NetSpec, Network};
use mhlift::pose::{root_center, HypothesisSet, Pose2D, Pose3D, VarianceVector};
use mhlift::sampler::{adjust_sigma, amplify_2d, SampleKey};

fn pose(v: usize) -> impl Strategy<Value = Pose3D> {
    prop::collection::vec(-800.0f64..800.0, 3 * v).prop_map(|c| root_center(&c).unwrap())
}

fn instance() -> impl Strategy<Value = (Pose3D, Vec<Pose3D>)> {
    (3usize..18, 1usize..8).prop_flat_map(|(v, s)| (pose(v), prop::collection::vec(pose(v), s)))
}

fn squared(p: &Pose3D, gt: &Pose3D) -> f64 {
    joint_errors(p, gt).unwrap().iter().map(|e| e * e).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn adjusted_sigma_is_alpha_times_clamped(
        raw in prop::collection::vec(-5.0f64..5.0, 1..20),
        alpha in 1e-4f64..1.0,
    ) {
        let out = adjust_sigma(&VarianceVector::raw(raw.clone()).unwrap(), alpha).unwrap();
        for (r, o) in raw.iter().zip(out.as_slice()) {
            prop_assert_eq!(*o, alpha * r.max(1.0));
            prop_assert!(*o >= alpha);
        }
    }

    #[test]
    fn jbest_never_exceeds_pbest((gt, hyps) in instance()) {
        let set = HypothesisSet::new(0, hyps).unwrap();
        for kind in [ProtocolKind::P1, ProtocolKind::P2] {
            let e = HypothesisErrors::compute(&set, &gt, kind).unwrap();
            for s in 1..=set.len() {
                let j = e.select(s, Selection::JBest).unwrap();
                let p = e.select(s, Selection::PBest).unwrap();
                prop_assert!(j <= p + 1e-12);
            }
        }
    }

    #[test]
    fn min_mpjpe_ignores_hypothesis_order((gt, mut hyps) in instance(), rotate in 0usize..8) {
        let a = min_mpjpe(&HypothesisSet::new(0, hyps.clone()).unwrap(), &gt, ProtocolKind::P1).unwrap();
        let k = rotate % hyps.len();
        hyps.rotate_left(k);
        hyps.reverse();
        let b = min_mpjpe(&HypothesisSet::new(0, hyps).unwrap(), &gt, ProtocolKind::P1).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn alignment_never_increases_squared_error((gt, hyps) in instance()) {
        for h in &hyps {
            let aligned = procrustes_align(h, &gt).unwrap();
            let before = squared(h, &gt);
            prop_assert!(squared(&aligned, &gt) <= before + 1e-9 * before.max(1.0));
        }
    }

    #[test]
    fn metrics_are_pure((gt, hyps) in instance()) {
        let set = HypothesisSet::new(0, hyps).unwrap();
        let before = set.clone();
        let a = HypothesisErrors::compute(&set, &gt, ProtocolKind::P2).unwrap();
        let b = HypothesisErrors::compute(&set, &gt, ProtocolKind::P2).unwrap();
        prop_assert_eq!(a.p_best(set.len()).unwrap(), b.p_best(set.len()).unwrap());
        prop_assert_eq!(set, before);
    }

    #[test]
    fn normalized_labels_average_one(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..500.0, 16), 1..40),
    ) {
        prop_assume!(rows.iter().flatten().sum::<f64>() > 1e-6);
        let (c, labels) = normalize_errors(rows.clone()).unwrap();
        prop_assert!(c > 0.0);
        let n = (rows.len() * 16) as f64;
        let mean = labels.iter().flat_map(|l| l.as_slice()).sum::<f64>() / n;
        prop_assert!((mean - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn kl_grows_away_from_its_minimum(target in 0.1f64..5.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(far - near > 1e-6);
        prop_assert_eq!(kl_gaussian(target, target).unwrap(), 0.0);
        let up = |d: f64| kl_gaussian(target + d, target).unwrap();
        prop_assert!(up(near) < up(far));
        let down = |d: f64| kl_gaussian(target * (-d).exp(), target).unwrap();
        prop_assert!(down(near) < down(far));
    }

    #[test]
    fn smaller_draws_are_prefixes_of_larger(
        coords in prop::collection::vec(-1.0f64..1.0, 32),
        sigma in 0.001f64..0.1,
        small in 1usize..20,
        extra in 0usize..40,
        sample_id in 0u64..1000,
    ) {
        let p = Pose2D::from_flat(coords).unwrap();
        let s = VarianceVector::new(vec![sigma; 16]).unwrap();
        let key = SampleKey { seed: 9, sample_id };
        let a = amplify_2d(&p, &s, small, key).unwrap();
        let b = amplify_2d(&p, &s, small + extra, key).unwrap();
        prop_assert_eq!(&a[..], &b[..small]);
    }

    #[test]
    fn forward_does_not_mutate(seed in 0u64..500, input in prop::collection::vec(-2.0f64..2.0, 8)) {
        let net = Network::init(NetSpec::residual(8, 6, 16, 2), seed).unwrap();
        let params = net.params();
        let a = net.forward(&input).unwrap();
        let b = net.forward(&input).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(net.params(), params);
    }
}
