//! Stage graph: data, lifter, pseudo-labels, variance networks, evaluation.
//!
//! Every stage output lives under `<out>/cache` at a path derived from a hash
//! of its inputs and configuration, and is written atomically. A stage whose
//! file exists is loaded instead of recomputed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::results::{
    self, AblationTable, Metric, ResultRow, RowSpec, TableRequest, NO_HASH, NO_PARADIGM,
};
use crate::avgnoise::{self, AvgModel, Paradigm, PseudoLabelSet};
use crate::error::{Error, Result};
use crate::io;
use crate::lifter::{self, LifterModel};
use crate::metrics::{HypothesisErrors, ProtocolKind, Selection};
use crate::sampler::{
    self, HypothesisRecord, JointPrior, Layer, NoiseKind, NoiseStrategy, SampleKey, Sampler,
};
use crate::synthgen::{self, Dataset, DatasetFiles};

pub const STAGE_DATA: &str = "gen-data";
pub const STAGE_LIFTER: &str = "train-lifter";
pub const STAGE_LABELS: &str = "pseudo-labels";
pub const STAGE_AVG: &str = "train-avg";
pub const STAGE_EVAL: &str = "eval";
pub const STAGE_EXPORT: &str = "export-hypotheses";
pub const STAGE_ABLATE: &str = "ablate";

fn short_hash(parts: &[&str]) -> String {
    io::sha256_hex(parts.join("\n").as_bytes())[..16].to_string()
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config serializes")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

impl Data {
    pub fn mm_per_unit(&self) -> f64 {
        self.test.header.mm_per_unit
    }
}

/// Frozen models for one evaluation seed.
#[derive(Debug, Clone)]
pub struct SeedModels {
    pub seed: u64,
    pub avg: Vec<(Paradigm, AvgModel)>,
}

/// One evaluated configuration: a strategy with the variance network it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub strategy: NoiseStrategy,
    pub paradigm: Option<Paradigm>,
}

impl Variant {
    pub fn paradigm_name(&self) -> &'static str {
        self.paradigm.map_or(NO_PARADIGM, Paradigm::as_str)
    }

    pub fn file_stem(&self, seed: u64) -> String {
        format!(
            "{}-{}-{}-a{}-seed{seed}",
            self.strategy.kind,
            self.strategy.layer,
            self.paradigm_name(),
            self.strategy.alpha
        )
    }
}

/// Wall-clock cost of one variant evaluation; kept apart from the deterministic results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub seed: u64,
    pub strategy: NoiseKind,
    pub layer: Layer,
    pub alpha: f64,
    pub paradigm: String,
    pub samples: usize,
    pub test_samples: usize,
    pub seconds: f64,
    pub hypotheses_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_hash: String,
    pub test_hash: String,
    pub lifter_hash: String,
    pub labels_normalization_mm: f64,
    pub avg: Vec<ManifestAvg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestAvg {
    pub seed: u64,
    pub paradigm: Paradigm,
    pub hash: String,
    pub trainable_params: usize,
    pub final_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub results: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub tables: Vec<AblationTable>,
    pub manifest: Manifest,
}

pub struct Pipeline {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            out: out.into(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.out.join("cache")
    }

    pub fn results_path(&self) -> PathBuf {
        self.out.join("results.csv")
    }

    pub fn timing_path(&self) -> PathBuf {
        self.out.join("timing.csv")
    }

    pub fn data(&self) -> Result<Data> {
        self.data_inner().map_err(|e| e.in_stage(STAGE_DATA))
    }

    fn data_inner(&self) -> Result<Data> {
        let dir = match &self.config.dataset_dir {
            Some(dir) => dir.clone(),
            None => {
                let dir = self.cache_dir().join(format!(
                    "data-{}",
                    short_hash(&[&json(&self.config.dataset)])
                ));
                let files = DatasetFiles::in_dir(&dir);
                if !(files.train.is_file() && files.test.is_file()) {
                    synthgen::generate_dataset(&self.config.dataset, &dir)?;
                }
                dir
            }
        };
        let files = DatasetFiles::in_dir(&dir);
        let data = Data {
            train: synthgen::load_dataset(&files.train)?,
            test: synthgen::load_dataset(&files.test)?,
        };
        if data.train.joint_count() != data.test.joint_count() {
            return Err(Error::JointCountMismatch {
                expected: data.train.joint_count(),
                found: data.test.joint_count(),
            });
        }
        Ok(data)
    }

    pub fn lifter(&self, data: &Data) -> Result<LifterModel> {
        self.lifter_inner(data)
            .map_err(|e| e.in_stage(STAGE_LIFTER))
    }

    fn lifter_inner(&self, data: &Data) -> Result<LifterModel> {
        let key = short_hash(&[&data.train.content_hash, &json(&self.config.lifter)]);
        let ckpt = self.cache_dir().join(format!("lifter-{key}.ckpt"));
        let log = self.cache_dir().join(format!("lifter-{key}.csv"));
        let model = if ckpt.is_file() && log.is_file() {
            let model = LifterModel::load(&ckpt)?;
            if model.dataset_hash != data.train.content_hash {
                return Err(Error::Checkpoint(format!(
                    "{} was trained on a different dataset",
                    ckpt.display()
                )));
            }
            model
        } else {
            let model = lifter::train_lifter(&data.train, &self.config.lifter)?;
            io::write_atomic(&log, model.training_log_csv().as_bytes())?;
            model.save(&ckpt)?;
            model
        };
        copy_file(&log, &self.out.join("logs").join("lifter.csv"))?;
        Ok(model)
    }

    pub fn pseudo_labels(&self, data: &Data, lifter: &LifterModel) -> Result<PseudoLabelSet> {
        self.labels_inner(data, lifter)
            .map_err(|e| e.in_stage(STAGE_LABELS))
    }

    fn labels_inner(&self, data: &Data, lifter: &LifterModel) -> Result<PseudoLabelSet> {
        let lifter_hash = lifter.hash();
        let path = self.cache_dir().join(format!(
            "labels-{}.txt",
            short_hash(&[&data.train.content_hash, &lifter_hash])
        ));
        if path.is_file() {
            let labels = PseudoLabelSet::load(&path)?;
            if labels.dataset_hash != data.train.content_hash || labels.lifter_hash != lifter_hash {
                return Err(Error::Checkpoint(format!(
                    "{} does not match the current dataset and lifter",
                    path.display()
                )));
            }
            return Ok(labels);
        }
        let labels = avgnoise::compute_pseudo_labels(lifter, &data.train)?;
        labels.save(&path)?;
        Ok(labels)
    }

    pub fn avg(
        &self,
        data: &Data,
        lifter: &LifterModel,
        labels: &PseudoLabelSet,
        paradigm: Paradigm,
        seed: u64,
    ) -> Result<AvgModel> {
        self.avg_inner(data, lifter, labels, paradigm, seed)
            .map_err(|e| e.in_stage(STAGE_AVG))
    }

    fn avg_inner(
        &self,
        data: &Data,
        lifter: &LifterModel,
        labels: &PseudoLabelSet,
        paradigm: Paradigm,
        seed: u64,
    ) -> Result<AvgModel> {
        let key = short_hash(&[
            &data.train.content_hash,
            &labels.lifter_hash,
            &json(&self.config.avg),
            paradigm.as_str(),
            &seed.to_string(),
        ]);
        let ckpt = self.cache_dir().join(format!("avg-{key}.ckpt"));
        let log = self.cache_dir().join(format!("avg-{key}.csv"));
        let model = if ckpt.is_file() && log.is_file() {
            let model = AvgModel::load(&ckpt)?;
            if model.paradigm() != paradigm {
                return Err(Error::Checkpoint(format!(
                    "{} holds a {} model",
                    ckpt.display(),
                    model.paradigm().as_str()
                )));
            }
            model
        } else {
            let model = avgnoise::train_avg(
                &data.train,
                labels,
                &self.config.avg,
                paradigm,
                Some(lifter),
                seed,
            )?;
            io::write_atomic(&log, loss_log_csv(&model.loss_history).as_bytes())?;
            model.save(&ckpt)?;
            model
        };
        copy_file(
            &log,
            &self
                .out
                .join("logs")
                .join(format!("avg-{}-seed{seed}.csv", paradigm.as_str())),
        )?;
        Ok(model)
    }

    fn paradigms_needed(&self) -> Vec<Paradigm> {
        if self.config.eval.strategies.iter().any(|k| k.uses_avg()) {
            self.config.eval.paradigms.clone()
        } else {
            Vec::new()
        }
    }

    pub fn seed_models(
        &self,
        data: &Data,
        lifter: &LifterModel,
        labels: &PseudoLabelSet,
        seed: u64,
    ) -> Result<SeedModels> {
        let avg = self
            .paradigms_needed()
            .into_iter()
            .map(|p| Ok((p, self.avg(data, lifter, labels, p, seed)?)))
            .collect::<Result<_>>()?;
        Ok(SeedModels { seed, avg })
    }

    /// Every configured combination of strategy, layer, alpha and paradigm.
    pub fn variants(&self) -> Vec<Variant> {
        let eval = &self.config.eval;
        let mut out = Vec::new();
        for &alpha in &eval.alphas {
            for &layer in &eval.layers {
                for &kind in &eval.strategies {
                    let strategy = NoiseStrategy { kind, alpha, layer };
                    if kind.uses_avg() {
                        out.extend(eval.paradigms.iter().map(|&p| Variant {
                            strategy,
                            paradigm: Some(p),
                        }));
                    } else {
                        out.push(Variant {
                            strategy,
                            paradigm: None,
                        });
                    }
                }
            }
        }
        out
    }

    fn test_slice<'a>(&self, data: &'a Data) -> &'a [synthgen::DatasetRecord] {
        let limit = self.config.eval.test_limit;
        let n = if limit == 0 {
            data.test.len()
        } else {
            limit.min(data.test.len())
        };
        &data.test.records[..n]
    }

    pub fn evaluate(
        &self,
        data: &Data,
        lifter: &LifterModel,
        prior: &JointPrior,
        models: &SeedModels,
    ) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
        self.evaluate_inner(data, lifter, prior, models)
            .map_err(|e| e.in_stage(STAGE_EVAL))
    }

    fn evaluate_inner(
        &self,
        data: &Data,
        lifter: &LifterModel,
        prior: &JointPrior,
        models: &SeedModels,
    ) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
        let eval = &self.config.eval;
        let records = self.test_slice(data);
        let inputs = input_rows(records, lifter.joint_count());
        let lifter_hash = lifter.hash();
        let mut rows = Vec::new();
        let mut timings = Vec::new();
        for variant in self.variants() {
            let avg = variant.paradigm.map(|p| find_avg(models, p)).transpose()?;
            let sampler = Sampler::new(lifter, avg, Some(prior), data.mm_per_unit())?;
            let avg_out = if variant.strategy.kind.uses_avg() {
                sampler.avg_rows(inputs.view())?
            } else {
                None
            };
            let start = Instant::now();
            let values = evaluate_variant(
                &sampler,
                records,
                avg_out.as_ref(),
                prior,
                &variant.strategy,
                models.seed,
                eval,
            )?;
            let seconds = start.elapsed().as_secs_f64();
            let avg_hash = avg.map_or(NO_HASH.to_string(), AvgModel::hash);
            for (protocol, selection, metric, samples, value) in values {
                rows.push(ResultRow {
                    seed: models.seed,
                    strategy: variant.strategy.kind,
                    layer: variant.strategy.layer,
                    alpha: variant.strategy.alpha,
                    samples,
                    paradigm: variant.paradigm_name().to_string(),
                    protocol,
                    selection,
                    metric,
                    value,
                    dataset_hash: data.train.content_hash.clone(),
                    lifter_hash: lifter_hash.clone(),
                    avg_hash: avg_hash.clone(),
                });
            }
            let smax = self.config.max_samples();
            timings.push(TimingRow {
                seed: models.seed,
                strategy: variant.strategy.kind,
                layer: variant.strategy.layer,
                alpha: variant.strategy.alpha,
                paradigm: variant.paradigm_name().to_string(),
                samples: smax,
                test_samples: records.len(),
                seconds,
                hypotheses_per_second: (records.len() * smax) as f64 / seconds.max(1e-9),
            });
        }
        Ok((rows, timings))
    }

    /// Writes hypotheses for the first test samples under every variant, first seed and alpha only.
    pub fn export(
        &self,
        data: &Data,
        lifter: &LifterModel,
        prior: &JointPrior,
        models: &SeedModels,
    ) -> Result<Vec<PathBuf>> {
        self.export_inner(data, lifter, prior, models)
            .map_err(|e| e.in_stage(STAGE_EXPORT))
    }

    fn export_inner(
        &self,
        data: &Data,
        lifter: &LifterModel,
        prior: &JointPrior,
        models: &SeedModels,
    ) -> Result<Vec<PathBuf>> {
        let out = &self.config.output;
        let n = out.export_samples.min(data.test.len());
        let alpha = self.config.eval.alphas[0];
        let mut paths = Vec::new();
        for variant in self
            .variants()
            .into_iter()
            .filter(|v| v.strategy.alpha == alpha)
        {
            let avg = variant.paradigm.map(|p| find_avg(models, p)).transpose()?;
            let sampler = Sampler::new(lifter, avg, Some(prior), data.mm_per_unit())?;
            let records = data.test.records[..n]
                .iter()
                .map(|r| {
                    let key = SampleKey {
                        seed: models.seed,
                        sample_id: r.sample_id,
                    };
                    let h = sampler.generate(
                        &r.detected_pose2d,
                        &variant.strategy,
                        out.export_hypotheses.max(1),
                        key,
                    )?;
                    HypothesisRecord::new(
                        &r.detected_pose2d,
                        &variant.strategy,
                        h,
                        Some(r.gt_pose3d.clone()),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let path = self
                .out
                .join("exports")
                .join(format!("{}.jsonl", variant.file_stem(models.seed)));
            sampler::write_hypotheses(&path, &records)?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Runs every stage and writes results, timings, tables, logs, exports and the manifest.
    pub fn run(&self) -> Result<RunOutputs> {
        let data = self.data()?;
        let lifter = self.lifter(&data)?;
        let labels = self.pseudo_labels(&data, &lifter)?;
        let prior = JointPrior::from_labels(&labels).map_err(|e| e.in_stage(STAGE_LABELS))?;
        let mut results = Vec::new();
        let mut timings = Vec::new();
        let mut manifest_avg = Vec::new();
        for (i, &seed) in self.config.eval.seeds.iter().enumerate() {
            let models = self.seed_models(&data, &lifter, &labels, seed)?;
            for (paradigm, model) in &models.avg {
                manifest_avg.push(ManifestAvg {
                    seed,
                    paradigm: *paradigm,
                    hash: model.hash(),
                    trainable_params: model.trainable_param_count(),
                    final_mse: model.loss_history.last().copied(),
                });
            }
            if i == 0 {
                self.export(&data, &lifter, &prior, &models)?;
            }
            let (rows, t) = self.evaluate(&data, &lifter, &prior, &models)?;
            results.extend(rows);
            timings.extend(t);
        }
        results::write_results(&self.results_path(), &results)
            .map_err(|e| e.in_stage(STAGE_EVAL))?;
        write_timings(&self.timing_path(), &timings).map_err(|e| e.in_stage(STAGE_EVAL))?;
        let manifest = Manifest {
            dataset_hash: data.train.content_hash.clone(),
            test_hash: data.test.content_hash.clone(),
            lifter_hash: lifter.hash(),
            labels_normalization_mm: labels.normalization,
            avg: manifest_avg,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        io::write_atomic(&self.out.join("manifest.json"), text.as_bytes())?;
        let tables = self.write_tables(&results)?;
        Ok(RunOutputs {
            results,
            timings,
            tables,
            manifest,
        })
    }

    /// Standard tables from the configured matrix.
    pub fn table_requests(&self) -> Vec<TableRequest> {
        standard_tables(&self.config)
    }

    pub fn write_tables(&self, results: &[ResultRow]) -> Result<Vec<AblationTable>> {
        let inner = || -> Result<Vec<AblationTable>> {
            let tables = self
                .table_requests()
                .iter()
                .map(|r| results::ablation_table(results, r))
                .collect::<Result<Vec<_>>>()?;
            let dir = self.out.join("tables");
            for t in &tables {
                io::write_atomic(
                    &dir.join(format!("{}.txt", t.request.name)),
                    t.to_string().as_bytes(),
                )?;
                io::write_atomic(
                    &dir.join(format!("{}.csv", t.request.name)),
                    t.to_csv().as_bytes(),
                )?;
            }
            Ok(tables)
        };
        inner().map_err(|e| e.in_stage(STAGE_ABLATE))
    }
}

fn find_avg(models: &SeedModels, paradigm: Paradigm) -> Result<&AvgModel> {
    models
        .avg
        .iter()
        .find(|(p, _)| *p == paradigm)
        .map(|(_, m)| m)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no {} variance network for seed {}",
                paradigm.as_str(),
                models.seed
            ))
        })
}

fn input_rows(records: &[synthgen::DatasetRecord], v: usize) -> Array2<f64> {
    let flat: Vec<f64> = records
        .iter()
        .flat_map(|r| r.detected_pose2d.as_slice().iter().copied())
        .collect();
    Array2::from_shape_vec((records.len(), 2 * v), flat).expect("validated record shapes")
}

type Measurement = (ProtocolKind, Selection, Metric, usize, f64);

/// Sample-averaged metrics for one variant. Hypotheses are generated once at
/// the largest S and every smaller S scores a prefix.
fn evaluate_variant(
    sampler: &Sampler<'_>,
    records: &[synthgen::DatasetRecord],
    avg_out: Option<&Array2<f64>>,
    prior: &JointPrior,
    strategy: &NoiseStrategy,
    seed: u64,
    eval: &super::config::EvalConfig,
) -> Result<Vec<Measurement>> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let smax = eval
        .samples
        .iter()
        .copied()
        .max()
        .expect("validated non-empty");
    let v = sampler.joint_count();
    let mut layout: Vec<(ProtocolKind, Selection, Metric, usize)> = Vec::new();
    for &protocol in &eval.protocols {
        for &selection in &eval.selections {
            layout.extend(
                eval.samples
                    .iter()
                    .map(|&s| (protocol, selection, Metric::Mpjpe, s)),
            );
        }
        if protocol == ProtocolKind::P1 {
            layout.extend(
                eval.samples
                    .iter()
                    .map(|&s| (protocol, Selection::PBest, Metric::Pck, s)),
            );
        }
    }
    let per_sample: Vec<Vec<f64>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let out_row = avg_out.map(|a| a.row(i).to_vec());
            let raw = sampler::raw_sigma(strategy.kind, v, out_row.as_deref(), Some(prior))?;
            let key = SampleKey {
                seed,
                sample_id: r.sample_id,
            };
            let h = sampler.generate_from_raw(&r.detected_pose2d, &raw, strategy, smax, key)?;
            let mut values = Vec::with_capacity(layout.len());
            for &protocol in &eval.protocols {
                let errors = HypothesisErrors::compute(&h.set, &r.gt_pose3d, protocol)?;
                for &selection in &eval.selections {
                    for &s in &eval.samples {
                        values.push(errors.select(s, selection)?);
                    }
                }
                if protocol == ProtocolKind::P1 {
                    for &s in &eval.samples {
                        values.push(errors.pck(s, eval.pck_threshold_mm)?);
                    }
                }
            }
            Ok(values)
        })
        .collect::<Result<_>>()?;
    let n = per_sample.len() as f64;
    Ok(layout
        .into_iter()
        .enumerate()
        .map(|(k, (p, s, m, samples))| {
            (
                p,
                s,
                m,
                samples,
                per_sample.iter().map(|vals| vals[k]).sum::<f64>() / n,
            )
        })
        .collect())
}

fn loss_log_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{:e}\n", e + 1, l));
    }
    out
}

fn copy_file(from: &Path, to: &Path) -> Result<()> {
    let bytes = fs::read(from).map_err(|e| Error::io(from, e))?;
    io::write_atomic(to, &bytes)
}

pub fn write_timings(path: &Path, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("timing serialization: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("timing serialization: {e}")))?;
    io::write_atomic(path, &bytes)
}

/// Strategy, layer and paradigm tables over the configured S list, first alpha, P1 best-hypothesis error.
pub fn standard_tables(config: &ExperimentConfig) -> Vec<TableRequest> {
    let eval = &config.eval;
    let alpha = eval.alphas[0];
    let layer = if eval.layers.contains(&Layer::PreSample) {
        Layer::PreSample
    } else {
        eval.layers[0]
    };
    let paradigm_of = |k: NoiseKind, p: Option<Paradigm>| -> String {
        if k.uses_avg() {
            p.or_else(|| eval.paradigms.first().copied())
                .map_or(NO_PARADIGM, Paradigm::as_str)
                .to_string()
        } else {
            NO_PARADIGM.to_string()
        }
    };
    let base = |name: &str, title: &str, rows: Vec<RowSpec>, metric: Metric| TableRequest {
        name: name.into(),
        title: title.into(),
        rows,
        samples: eval.samples.clone(),
        seeds: eval.seeds.clone(),
        alpha,
        protocol: ProtocolKind::P1,
        selection: Selection::PBest,
        metric,
    };
    let strategy_rows: Vec<RowSpec> = eval
        .strategies
        .iter()
        .map(|&k| RowSpec {
            label: k.as_str().into(),
            strategy: k,
            layer,
            paradigm: paradigm_of(k, None),
        })
        .collect();
    let mut tables = vec![
        base(
            "strategies",
            "Noise strategy ablation",
            strategy_rows.clone(),
            Metric::Mpjpe,
        ),
        base(
            "strategies_pck",
            "Noise strategy ablation, PCK",
            strategy_rows,
            Metric::Pck,
        ),
    ];
    let focus = if eval.strategies.contains(&NoiseKind::SampleJointsAdapted) {
        NoiseKind::SampleJointsAdapted
    } else {
        *eval.strategies.last().expect("validated non-empty")
    };
    if eval.layers.len() > 1 {
        let rows = eval
            .layers
            .iter()
            .map(|&l| RowSpec {
                label: l.as_str().into(),
                strategy: focus,
                layer: l,
                paradigm: paradigm_of(focus, None),
            })
            .collect();
        tables.push(base(
            "layers",
            &format!("Noise layer ablation, {focus}"),
            rows,
            Metric::Mpjpe,
        ));
    }
    if focus.uses_avg() && eval.paradigms.len() > 1 {
        let rows = eval
            .paradigms
            .iter()
            .map(|&p| RowSpec {
                label: p.as_str().into(),
                strategy: focus,
                layer,
                paradigm: p.as_str().into(),
            })
            .collect();
        tables.push(base(
            "paradigms",
            &format!("Variance network paradigm, {focus}"),
            rows,
            Metric::Mpjpe,
        ));
    }
    if !eval.protocols.contains(&ProtocolKind::P1) {
        return Vec::new();
    }
    let pbest = eval.selections.contains(&Selection::PBest);
    tables.retain(|t| pbest || t.metric == Metric::Pck);
    tables
}
