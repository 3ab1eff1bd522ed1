//! Wall-clock hypothesis throughput, measured on a single thread.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose2D;
use crate::sampler::{NoiseStrategy, SampleKey, Sampler};

pub const MIN_SAMPLES: usize = 1000;
pub const TRIALS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub samples: usize,
    /// Input poses processed per second, median over trials.
    pub samples_per_second: f64,
    pub hypotheses_per_second: f64,
    pub trial_seconds: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times full hypothesis generation for `count` inputs (cycling through
/// `poses`) at each S, `trials` times, and reports the median trial.
pub fn throughput_report(
    sampler: &Sampler<'_>,
    poses: &[Pose2D],
    strategy: &NoiseStrategy,
    samples: &[usize],
    count: usize,
    trials: usize,
) -> Result<Vec<ThroughputRow>> {
    if poses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if count == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "throughput needs at least one sample and one trial".into(),
        ));
    }
    samples
        .iter()
        .map(|&s| {
            let mut times = Vec::with_capacity(trials);
            for trial in 0..trials {
                let start = Instant::now();
                for i in 0..count {
                    let key = SampleKey {
                        seed: trial as u64,
                        sample_id: i as u64,
                    };
                    std::hint::black_box(sampler.generate(
                        &poses[i % poses.len()],
                        strategy,
                        s,
                        key,
                    )?);
                }
                times.push(start.elapsed().as_secs_f64());
            }
            let trial_seconds = times.clone();
            let t = median(&mut times).max(1e-12);
            Ok(ThroughputRow {
                samples: s,
                samples_per_second: count as f64 / t,
                hypotheses_per_second: (count * s) as f64 / t,
                trial_seconds,
            })
        })
        .collect()
}

pub fn throughput_csv(rows: &[ThroughputRow]) -> String {
    let mut out = String::from("samples,samples_per_second,hypotheses_per_second\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.3},{:.3}\n",
            r.samples, r.samples_per_second, r.hypotheses_per_second
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
