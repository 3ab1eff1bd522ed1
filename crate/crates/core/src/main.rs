use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mhlift::avgnoise::Paradigm;
use mhlift::harness::pipeline::{self, STAGE_ABLATE};
use mhlift::harness::throughput::{self, throughput_csv, MIN_SAMPLES, TRIALS};
use mhlift::harness::{read_results, write_results, ExperimentConfig, Pipeline};
use mhlift::io;
use mhlift::metrics::{ProtocolKind, Selection};
use mhlift::sampler::{JointPrior, Layer, NoiseKind, NoiseStrategy, Sampler};
use mhlift::Result;

#[derive(Parser)]
#[command(
    name = "mhlift",
    version,
    about = "Multi-hypothesis 3D pose lifting with learned adaptive noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or reuse) the synthetic train/test split.
    GenData,
    /// Train (or reuse) the single-hypothesis lifter.
    TrainLifter,
    /// Compute (or reuse) the normalized per-joint error labels.
    PseudoLabels,
    /// Train (or reuse) the variance networks for every seed and paradigm.
    TrainAvg,
    /// Evaluate the strategy matrix and write results.csv.
    Eval,
    /// Build the ablation tables from an existing results.csv.
    Ablate,
    /// Measure hypotheses per second for each S.
    Throughput {
        /// Inputs per trial.
        #[arg(long, default_value_t = MIN_SAMPLES)]
        count: usize,
        #[arg(long, default_value_t = TRIALS)]
        trials: usize,
    },
    /// Write hypothesis sets for the first test samples.
    ExportHypotheses,
    /// Print the effective configuration with all defaults filled in.
    ShowConfig,
    /// Run every stage, then evaluate and tabulate.
    Run,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Evaluate this seed only.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',')]
    strategy: Vec<NoiseKind>,
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Hypothesis counts S.
    #[arg(long, global = true, value_delimiter = ',')]
    samples: Vec<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    layer: Vec<Layer>,
    #[arg(long, global = true, value_delimiter = ',')]
    paradigm: Vec<Paradigm>,
    #[arg(long, global = true, value_delimiter = ',')]
    protocol: Vec<ProtocolKind>,
    #[arg(long, global = true, value_delimiter = ',')]
    selection: Vec<Selection>,
}

fn replace<T>(target: &mut Vec<T>, given: Vec<T>) {
    if !given.is_empty() {
        *target = given;
    }
}

fn effective_config(common: Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let eval = &mut config.eval;
    if let Some(seed) = common.seed {
        eval.seeds = vec![seed];
    }
    replace(&mut eval.strategies, common.strategy);
    replace(&mut eval.alphas, common.alpha);
    replace(&mut eval.samples, common.samples);
    replace(&mut eval.layers, common.layer);
    replace(&mut eval.paradigms, common.paradigm);
    replace(&mut eval.protocols, common.protocol);
    replace(&mut eval.selections, common.selection);
    config.validate()?;
    let out = common.out.unwrap_or_else(|| config.output.dir.clone());
    Ok((config, out))
}

fn execute(cli: Cli) -> Result<()> {
    let (config, out) = effective_config(cli.common).map_err(|e| e.in_stage("config"))?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let p = Pipeline::new(config, out)?;
    match cli.command {
        Command::ShowConfig => unreachable!("handled above"),
        Command::GenData => {
            let data = p.data()?;
            println!(
                "train: {} samples, hash {}",
                data.train.len(),
                data.train.content_hash
            );
            println!(
                "test:  {} samples, hash {}",
                data.test.len(),
                data.test.content_hash
            );
        }
        Command::TrainLifter => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            println!(
                "lifter {} final L1 loss {:.3} mm",
                lifter.hash(),
                lifter.final_loss().unwrap_or(f64::NAN)
            );
        }
        Command::PseudoLabels => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            let labels = p.pseudo_labels(&data, &lifter)?;
            println!(
                "normalization C = {:.4} mm over {} samples",
                labels.normalization,
                labels.labels.len()
            );
        }
        Command::TrainAvg => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            let labels = p.pseudo_labels(&data, &lifter)?;
            for &seed in &p.config().eval.seeds {
                for (paradigm, model) in p.seed_models(&data, &lifter, &labels, seed)?.avg {
                    let mse = model.loss_history.last().copied().unwrap_or(f64::NAN);
                    println!(
                        "seed {seed} {:<11} {} final mse {mse:.5}",
                        paradigm.as_str(),
                        model.hash()
                    );
                }
            }
        }
        Command::Eval => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            let labels = p.pseudo_labels(&data, &lifter)?;
            let prior = JointPrior::from_labels(&labels)?;
            let (mut rows, mut timings) = (Vec::new(), Vec::new());
            for &seed in &p.config().eval.seeds {
                let models = p.seed_models(&data, &lifter, &labels, seed)?;
                let (r, t) = p.evaluate(&data, &lifter, &prior, &models)?;
                rows.extend(r);
                timings.extend(t);
            }
            write_results(&p.results_path(), &rows)?;
            pipeline::write_timings(&p.timing_path(), &timings)?;
            println!(
                "{} result rows written to {}",
                rows.len(),
                p.results_path().display()
            );
        }
        Command::Ablate => {
            let rows = read_results(&p.results_path()).map_err(|e| e.in_stage(STAGE_ABLATE))?;
            for table in p.write_tables(&rows)? {
                println!("{table}");
            }
        }
        Command::Throughput { count, trials } => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            let labels = p.pseudo_labels(&data, &lifter)?;
            let prior = JointPrior::from_labels(&labels)?;
            let eval = &p.config().eval;
            let models = p.seed_models(&data, &lifter, &labels, eval.seeds[0])?;
            let kind = eval.strategies[0];
            let avg = if kind.uses_avg() {
                models.avg.first().map(|(_, m)| m)
            } else {
                None
            };
            let sampler = Sampler::new(&lifter, avg, Some(&prior), data.mm_per_unit())?;
            let strategy = NoiseStrategy::new(kind, eval.alphas[0], eval.layers[0])?;
            let poses: Vec<_> = data
                .test
                .records
                .iter()
                .map(|r| r.detected_pose2d.clone())
                .collect();
            let rows = throughput::throughput_report(
                &sampler,
                &poses,
                &strategy,
                &eval.samples,
                count,
                trials,
            )?;
            let csv = throughput_csv(&rows);
            io::write_atomic(&p.out_dir().join("throughput.csv"), csv.as_bytes())?;
            print!("{csv}");
        }
        Command::ExportHypotheses => {
            let data = p.data()?;
            let lifter = p.lifter(&data)?;
            let labels = p.pseudo_labels(&data, &lifter)?;
            let prior = JointPrior::from_labels(&labels)?;
            let models = p.seed_models(&data, &lifter, &labels, p.config().eval.seeds[0])?;
            for path in p.export(&data, &lifter, &prior, &models)? {
                println!("{}", path.display());
            }
        }
        Command::Run => {
            let outputs = p.run()?;
            for table in &outputs.tables {
                println!("{table}");
            }
            println!(
                "{} result rows written to {}",
                outputs.results.len(),
                p.results_path().display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
