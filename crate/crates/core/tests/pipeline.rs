use std::fs;

use mhlift::harness::{read_results, Metric, Pipeline};
use mhlift::metrics::{ProtocolKind, Selection};
use mhlift::sampler::{JointPrior, Layer, NoiseKind, NoiseStrategy, Sampler};

mod common;
use common::small_config;

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(), dir.path()).unwrap();
    let out = p.run().unwrap();

    // 2 strategies x 2 S x 3 seeds for each protocol/selection pair
    for protocol in [ProtocolKind::P1, ProtocolKind::P2] {
        for selection in [Selection::PBest, Selection::JBest] {
            let n = out
                .results
                .iter()
                .filter(|r| {
                    r.metric == Metric::Mpjpe && r.protocol == protocol && r.selection == selection
                })
                .count();
            assert_eq!(n, 12, "{protocol:?} {selection:?}");
        }
    }
    let pck = out
        .results
        .iter()
        .filter(|r| r.metric == Metric::Pck)
        .count();
    assert_eq!(pck, 12);
    assert!(out
        .results
        .iter()
        .all(|r| r.value.is_finite() && r.value >= 0.0));
    assert_eq!(read_results(&p.results_path()).unwrap(), out.results);

    for name in [
        "results.csv",
        "timing.csv",
        "manifest.json",
        "logs/lifter.csv",
        "logs/avg-independent-seed0.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let exports: Vec<_> = fs::read_dir(dir.path().join("exports")).unwrap().collect();
    assert_eq!(exports.len(), 2);
    assert!(!out.tables.is_empty());
    for table in &out.tables {
        assert!(dir
            .path()
            .join("tables")
            .join(format!("{}.csv", table.request.name))
            .is_file());
    }
}

#[test]
fn rerun_reuses_cached_stages() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(), dir.path()).unwrap();
    let first = p.run().unwrap();
    let cached: Vec<_> = fs::read_dir(p.cache_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let stamps: Vec<_> = cached
        .iter()
        .map(|f| fs::metadata(f).unwrap().modified().unwrap())
        .collect();

    fs::remove_file(p.results_path()).unwrap();
    let second = p.run().unwrap();
    assert_eq!(first.results, second.results);
    for (f, t) in cached.iter().zip(&stamps) {
        assert_eq!(
            fs::metadata(f).unwrap().modified().unwrap(),
            *t,
            "{} was rewritten",
            f.display()
        );
    }
}

#[test]
fn changing_the_lifter_invalidates_downstream_caches() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config();
    config.eval.seeds = vec![0];
    let a = Pipeline::new(config.clone(), dir.path())
        .unwrap()
        .run()
        .unwrap();
    config.lifter.epochs += 1;
    let b = Pipeline::new(config, dir.path()).unwrap().run().unwrap();
    assert_eq!(a.manifest.dataset_hash, b.manifest.dataset_hash);
    assert_ne!(a.manifest.lifter_hash, b.manifest.lifter_hash);
    assert_ne!(a.manifest.avg[0].hash, b.manifest.avg[0].hash);
}

#[test]
fn throughput_scales_with_hypothesis_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(small_config(), dir.path()).unwrap();
    let data = p.data().unwrap();
    let lifter = p.lifter(&data).unwrap();
    let labels = p.pseudo_labels(&data, &lifter).unwrap();
    let prior = JointPrior::from_labels(&labels).unwrap();
    let sampler = Sampler::new(&lifter, None, Some(&prior), data.mm_per_unit()).unwrap();
    let strategy = NoiseStrategy::new(NoiseKind::JointsAdapted, 0.005, Layer::PreSample).unwrap();
    let poses: Vec<_> = data
        .test
        .records
        .iter()
        .map(|r| r.detected_pose2d.clone())
        .collect();
    let rows =
        mhlift::harness::throughput_report(&sampler, &poses, &strategy, &[1, 50], 40, 3).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.trial_seconds.len(), 3);
        assert!(r.samples_per_second > 0.0);
        assert!(
            (r.hypotheses_per_second - r.samples_per_second * r.samples as f64).abs()
                < 1e-6 * r.hypotheses_per_second
        );
    }
    assert!(rows[0].samples_per_second > rows[1].samples_per_second);
}
