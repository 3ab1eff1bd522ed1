//! Result rows, their CSV form, and seed-averaged ablation tables.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{ProtocolKind, Selection};
use crate::sampler::{Layer, NoiseKind};

/// Paradigm column value for strategies that do not read the variance network.
pub const NO_PARADIGM: &str = "none";
/// Hash column value when no variance network was involved.
pub const NO_HASH: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Millimetres.
    Mpjpe,
    /// Fraction of joints under the threshold.
    Pck,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mpjpe => "mpjpe",
            Metric::Pck => "pck",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub strategy: NoiseKind,
    pub layer: Layer,
    pub alpha: f64,
    pub samples: usize,
    pub paradigm: String,
    pub protocol: ProtocolKind,
    pub selection: Selection,
    pub metric: Metric,
    pub value: f64,
    pub dataset_hash: String,
    pub lifter_hash: String,
    pub avg_hash: String,
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("result serialization: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("result serialization: {e}")))
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    io::write_atomic(path, &results_csv(rows)?)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::dataset(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::dataset(path, e.to_string())))
        .collect()
}

/// One table row: a strategy under a fixed layer and paradigm.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpec {
    pub label: String,
    pub strategy: NoiseKind,
    pub layer: Layer,
    pub paradigm: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRequest {
    pub name: String,
    pub title: String,
    pub rows: Vec<RowSpec>,
    pub samples: Vec<usize>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub protocol: ProtocolKind,
    pub selection: Selection,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub request: TableRequest,
    /// `cells[row][column]`, columns follow `request.samples`.
    pub cells: Vec<Vec<Cell>>,
}

type CellKey<'a> = (NoiseKind, Layer, &'a str, usize, u64);

/// Seed-averaged strategy-by-S matrix; any absent `(row, S, seed)` is an error.
pub fn ablation_table(results: &[ResultRow], request: &TableRequest) -> Result<AblationTable> {
    let mut index: BTreeMap<CellKey<'_>, f64> = BTreeMap::new();
    for r in results.iter().filter(|r| {
        r.alpha == request.alpha
            && r.protocol == request.protocol
            && r.selection == request.selection
            && r.metric == request.metric
    }) {
        let key = (r.strategy, r.layer, r.paradigm.as_str(), r.samples, r.seed);
        if index.insert(key, r.value).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate result for {} {} {} S={} seed={}",
                r.strategy, r.layer, r.paradigm, r.samples, r.seed
            )));
        }
    }
    let mut missing = Vec::new();
    let mut cells = Vec::with_capacity(request.rows.len());
    for spec in &request.rows {
        let mut row = Vec::with_capacity(request.samples.len());
        for &s in &request.samples {
            let mut per_seed = Vec::with_capacity(request.seeds.len());
            for &seed in &request.seeds {
                match index.get(&(spec.strategy, spec.layer, spec.paradigm.as_str(), s, seed)) {
                    Some(&v) => per_seed.push((seed, v)),
                    None => missing.push(format!("({}, S={s}, seed={seed})", spec.label)),
                }
            }
            let mean = per_seed.iter().map(|(_, v)| v).sum::<f64>() / per_seed.len().max(1) as f64;
            row.push(Cell { mean, per_seed });
        }
        cells.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing.join(", ")));
    }
    Ok(AblationTable {
        request: request.clone(),
        cells,
    })
}

impl AblationTable {
    pub fn cell(&self, label: &str, samples: usize) -> Option<&Cell> {
        let r = self.request.rows.iter().position(|s| s.label == label)?;
        let c = self.request.samples.iter().position(|&s| s == samples)?;
        Some(&self.cells[r][c])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,row,samples,mean,per_seed\n");
        for (spec, row) in self.request.rows.iter().zip(&self.cells) {
            for (s, cell) in self.request.samples.iter().zip(row) {
                let per_seed: Vec<String> = cell
                    .per_seed
                    .iter()
                    .map(|(seed, v)| format!("{seed}:{v}"))
                    .collect();
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    self.request.name,
                    spec.label,
                    s,
                    cell.mean,
                    per_seed.join(";")
                )
                .expect("write to string");
            }
        }
        out
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let req = &self.request;
        let seeds: Vec<String> = req.seeds.iter().map(u64::to_string).collect();
        writeln!(
            f,
            "{} ({} {} {}, alpha={}, mean over seeds {})",
            req.title,
            req.protocol.as_str(),
            req.selection.as_str(),
            req.metric.as_str(),
            req.alpha,
            seeds.join(",")
        )?;
        let width = req
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max(8);
        write!(f, "{:width$}", "")?;
        for s in &req.samples {
            write!(f, " {:>10}", format!("S={s}"))?;
        }
        writeln!(f)?;
        for (spec, row) in req.rows.iter().zip(&self.cells) {
            write!(f, "{:width$}", spec.label)?;
            for cell in row {
                match req.metric {
                    Metric::Mpjpe => write!(f, " {:>10.2}", cell.mean)?,
                    Metric::Pck => write!(f, " {:>10.4}", cell.mean)?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
