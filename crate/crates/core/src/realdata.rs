//! Replay of recorded p-value streams grouped into dependent batches.
//!
//! Input is a CSV with header columns `pvalue` and `batch_id`. Rows sharing
//! a batch id must be adjacent; each batch is treated as mutually
//! dependent, which gives lags `0, 1, ..., n - 1` inside a batch of size `n`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conflict::{ConflictTopology, LagSequence};
use crate::engine::{Algorithm, EngineParams};
use crate::gamma::GammaSequence;
use crate::harness::{run_stream, RunOptions};
use crate::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;

pub const DEFAULT_ALGORITHMS: [Algorithm; 3] = [
    Algorithm::SaffronConstLambda,
    Algorithm::LordPlusPlus,
    Algorithm::AlphaSpending,
];

#[derive(Debug, Clone, PartialEq)]
pub struct RealDataStream {
    pub pvalues: Vec<f64>,
    pub batch_ids: Vec<String>,
    batch_sizes: Vec<usize>,
}

impl RealDataStream {
    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    pub fn batch_sizes(&self) -> &[usize] {
        &self.batch_sizes
    }

    pub fn lags(&self) -> LagSequence {
        LagSequence::from_batches(&self.batch_sizes)
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    pvalue: f64,
    batch_id: String,
}

pub fn ingest_reader<R: Read>(input: R) -> Result<RealDataStream> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut pvalues = Vec::new();
    let mut batch_ids: Vec<String> = Vec::new();
    let mut batch_sizes: Vec<usize> = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Input(format!("line {line}: {e}")))?;
        if !(0.0..=1.0).contains(&row.pvalue) {
            return Err(Error::Input(format!(
                "line {line}: p-value {} outside [0, 1]",
                row.pvalue
            )));
        }
        if batch_ids.last() == Some(&row.batch_id) {
            *batch_sizes.last_mut().expect("non-empty") += 1;
        } else {
            if !seen.insert(row.batch_id.clone()) {
                return Err(Error::Input(format!(
                    "line {line}: batch '{}' is not contiguous",
                    row.batch_id
                )));
            }
            batch_sizes.push(1);
        }
        pvalues.push(row.pvalue);
        batch_ids.push(row.batch_id);
    }
    Ok(RealDataStream {
        pvalues,
        batch_ids,
        batch_sizes,
    })
}

pub fn ingest_pvalues(path: &Path) -> Result<RealDataStream> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    ingest_reader(file)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealDataRow {
    pub algo: String,
    pub alpha: f64,
    pub rejections: usize,
    pub n_tests: usize,
}

/// Rejection counts for every `(algorithm, alpha)` under the stream's
/// lagged conflict structure.
pub fn run_real_data(
    stream: &RealDataStream,
    algorithms: &[Algorithm],
    alpha_grid: &[f64],
    lambda: f64,
    gamma: &GammaSequence,
) -> Result<Vec<RealDataRow>> {
    let topology = Arc::new(ConflictTopology::lagged(stream.lags()));
    let mut rows = Vec::new();
    for &alg in algorithms {
        for &alpha in alpha_grid {
            let params = EngineParams::new(alg, alpha).with_lambda(lambda);
            let run = run_stream(
                params,
                gamma.clone(),
                topology.clone(),
                &stream.pvalues,
                None,
                RunOptions {
                    check: true,
                    ..RunOptions::default()
                },
            )?;
            rows.push(RealDataRow {
                algo: alg.to_string(),
                alpha,
                rejections: run.rejections(),
                n_tests: stream.len(),
            });
        }
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(out: W, rows: &[RealDataRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
