//! Tabular benchmarks: `(genotype, train seed) -> accuracy curve`.
//!
//! Persisted as JSON lines, one record per pair:
//!
//! ```text
//! {"genotype": "T-012012", "seed": 0, "curve": [0.25, 0.5], "final": 0.5}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::net::{gen_dataset, NetworkParams, Splits, TrainConfig};
use crate::space::{Genotype, SearchSpaceSpec};
use crate::{Error, Result};

/// Dataset used by every benchmark.
pub const DATASET_SEED: u64 = 0;
pub const N_TRAIN: usize = 512;
pub const N_TEST: usize = 512;
/// Init seeds of benchmark networks start here, away from the view seeds.
pub const BENCH_INIT_OFFSET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub genotype: Genotype,
    pub seed: u64,
    pub curve: Vec<f64>,
    pub final_acc: f64,
}

#[derive(Deserialize)]
struct RawRecord {
    genotype: String,
    seed: u64,
    curve: Vec<f64>,
    #[serde(rename = "final")]
    final_acc: f64,
}

impl BenchRecord {
    pub fn to_json_line(&self) -> String {
        let mut s = format!("{{\"genotype\": \"{}\", \"seed\": {}, \"curve\": [", self.genotype, self.seed);
        for (i, v) in self.curve.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            write!(s, "{}", json_f64(*v)).expect("string write");
        }
        write!(s, "], \"final\": {}}}", json_f64(self.final_acc)).expect("string write");
        s
    }

    pub fn from_json_line(line: &str) -> Result<BenchRecord> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            path: "<benchmark line>".into(),
            reason: e.to_string(),
        })?;
        Ok(BenchRecord {
            genotype: Genotype::parse(&raw.genotype)?,
            seed: raw.seed,
            curve: raw.curve,
            final_acc: raw.final_acc,
        })
    }
}

/// Shortest round-trip form, always with a decimal point or exponent.
fn json_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TabularBenchmark {
    pub records: BTreeMap<(Genotype, u64), BenchRecord>,
}

impl TabularBenchmark {
    pub fn insert(&mut self, r: BenchRecord) {
        self.records.insert((r.genotype.clone(), r.seed), r);
    }

    pub fn get(&self, g: &Genotype, seed: u64) -> Option<&BenchRecord> {
        self.records.get(&(g.clone(), seed))
    }

    pub fn final_accuracy(&self, g: &Genotype, seed: u64) -> Option<f64> {
        self.get(g, seed).map(|r| r.final_acc)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads a JSON-lines file. Blank lines are skipped; duplicate keys are an error.
    pub fn read(path: &Path) -> Result<TabularBenchmark> {
        let f = fs::File::open(path)?;
        let mut bench = TabularBenchmark::default();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r = BenchRecord::from_json_line(&line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", n + 1),
            })?;
            let key = (r.genotype.clone(), r.seed);
            if bench.records.contains_key(&key) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("duplicate record {} seed {}", key.0, key.1),
                });
            }
            bench.records.insert(key, r);
        }
        Ok(bench)
    }
}

/// Trains one benchmark cell: init seed `BENCH_INIT_OFFSET + seed`, train seed `seed`.
pub fn train_record(
    space: &SearchSpaceSpec,
    g: &Genotype,
    seed: u64,
    data: &Splits,
    epochs: usize,
) -> Result<BenchRecord> {
    let p = NetworkParams::instantiate(space, g, BENCH_INIT_OFFSET + seed)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let out = p.train(data, &cfg)?;
    Ok(BenchRecord {
        genotype: g.clone(),
        seed,
        final_acc: out.curve.final_test_accuracy(),
        curve: out.curve.per_epoch,
    })
}

pub fn bench_dataset() -> Splits {
    gen_dataset(DATASET_SEED, N_TRAIN, N_TEST)
}
