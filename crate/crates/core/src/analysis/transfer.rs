//! Accuracy prediction across search spaces.
//!
//! The target side is only reachable through [`EvalOnly`], which scores
//! finished predictions and never exposes target accuracies to the fit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;

use super::forest::{forest_fit, forest_predict, ForestConfig};
use super::metrics::{kendall_tau_b, pearson};
use super::stats::permutation_p;
use crate::rng::{derive_seed, hash_str, rng_for};
use crate::space::{Family, Genotype};
use crate::surrogate::AccuracyTable;
use crate::{Error, Result};

/// Share of the space held out when source and target coincide.
pub const WITHIN_HOLDOUT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Direction {
    pub source: Family,
    pub target: Family,
}

impl Direction {
    pub fn within(self) -> bool {
        self.source == self.target
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source.name(), self.target.name())
    }
}

/// Scoring handle over a target benchmark.
pub struct EvalOnly<'a> {
    table: &'a AccuracyTable,
}

impl<'a> EvalOnly<'a> {
    pub fn new(table: &'a AccuracyTable) -> Self {
        EvalOnly { table }
    }

    pub fn family(&self) -> Family {
        self.table.space.family()
    }

    pub fn genotypes(&self) -> &[Genotype] {
        self.table.genotypes()
    }

    fn truth(&self, preds: &[(Genotype, f64)]) -> Vec<f64> {
        preds.iter().map(|(g, _)| self.table.accuracy(g)).collect()
    }

    /// `(pearson, kendall_tau)`; an undefined correlation scores 0.
    pub fn score(&self, preds: &[(Genotype, f64)]) -> (f64, f64) {
        let p: Vec<f64> = preds.iter().map(|r| r.1).collect();
        let t = self.truth(preds);
        (pearson(&p, &t).unwrap_or(0.0), kendall_tau_b(&p, &t).unwrap_or(0.0))
    }

    /// Permutation p-value of the mean Pearson correlation over runs, each
    /// permutation relabeling the target accuracies the same way in all runs.
    pub fn mean_pearson_p(&self, runs: &[Vec<(Genotype, f64)>], n_perm: usize, seed: u64) -> Result<f64> {
        let genos: Vec<Genotype> = {
            let mut g: Vec<Genotype> = runs.iter().flatten().map(|r| r.0.clone()).collect();
            g.sort();
            g.dedup();
            g
        };
        let pos: BTreeMap<&Genotype, usize> = genos.iter().enumerate().map(|(i, g)| (g, i)).collect();
        let acc: Vec<f64> = genos.iter().map(|g| self.table.accuracy(g)).collect();
        permutation_p(genos.len(), n_perm, seed, |perm| {
            let mut total = 0.0;
            for run in runs {
                let p: Vec<f64> = run.iter().map(|r| r.1).collect();
                let t: Vec<f64> = run
                    .iter()
                    .map(|r| {
                        let i = pos[&r.0];
                        acc[perm.map_or(i, |q| q[i])]
                    })
                    .collect();
                total += pearson(&p, &t).unwrap_or(0.0);
            }
            Ok(total / runs.len() as f64)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferRun {
    pub seed: u64,
    pub pearson: f64,
    pub kendall_tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferReport {
    pub direction: Direction,
    pub runs: Vec<TransferRun>,
    /// Permutation p-value of the mean Pearson correlation.
    pub pearson_p: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (m, 0.0);
    }
    let var = v.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

impl TransferReport {
    pub fn pearson(&self) -> (f64, f64) {
        mean_std(self.runs.iter().map(|r| r.pearson))
    }

    pub fn kendall(&self) -> (f64, f64) {
        mean_std(self.runs.iter().map(|r| r.kendall_tau))
    }

    /// Per-seed rows, then `mean` and `std` rows, for a
    /// `direction,seed,pearson,kendall_tau` table.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.runs {
            writeln!(s, "{},{},{:.6},{:.6}", self.direction, r.seed, r.pearson, r.kendall_tau).expect("string write");
        }
        let (pm, ps) = self.pearson();
        let (km, ks) = self.kendall();
        writeln!(s, "{},mean,{pm:.6},{km:.6}", self.direction).expect("string write");
        writeln!(s, "{},std,{ps:.6},{ks:.6}", self.direction).expect("string write");
        s
    }
}

/// Source side of a transfer: embeddings and known accuracies.
pub struct Source<'a> {
    pub embeddings: &'a BTreeMap<Genotype, Vec<f64>>,
    pub table: &'a AccuracyTable,
}

/// Fits a forest on the source and scores its predictions on the target.
///
/// Across spaces the forest sees the whole source space. Within one space
/// each seed holds out half of it and predicts that half.
pub fn transfer_experiment(
    src: &Source<'_>,
    tgt_embeddings: &BTreeMap<Genotype, Vec<f64>>,
    tgt: &EvalOnly<'_>,
    seeds: &[u64],
    forest: ForestConfig,
    n_perm: usize,
) -> Result<TransferReport> {
    let direction = Direction {
        source: src.table.space.family(),
        target: tgt.family(),
    };
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("transfer needs at least one seed".into()));
    }
    for (emb, genos) in [(src.embeddings, src.table.genotypes()), (tgt_embeddings, tgt.genotypes())] {
        if let Some(g) = genos.iter().find(|g| !emb.contains_key(*g)) {
            return Err(Error::Missing(format!("embedding for {g}")));
        }
    }
    let dim = |m: &BTreeMap<Genotype, Vec<f64>>| m.values().next().map_or(0, Vec::len);
    if dim(src.embeddings) != dim(tgt_embeddings) {
        return Err(Error::ShapeMismatch {
            expected: format!("embedding dim {}", dim(src.embeddings)),
            got: format!("{}", dim(tgt_embeddings)),
        });
    }
    let tag = hash_str(&direction.to_string());
    let mut runs = Vec::with_capacity(seeds.len());
    let mut all_preds = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (train, test): (Vec<Genotype>, Vec<Genotype>) = if direction.within() {
            let mut order = src.table.genotypes().to_vec();
            order.shuffle(&mut rng_for("transfer.split", &[tag, seed]));
            let n_test = ((order.len() as f64) * WITHIN_HOLDOUT).round() as usize;
            let (te, tr) = order.split_at(n_test);
            let mut te = te.to_vec();
            te.sort();
            (tr.to_vec(), te)
        } else {
            (src.table.genotypes().to_vec(), tgt.genotypes().to_vec())
        };
        let x: Vec<Vec<f64>> = train.iter().map(|g| src.embeddings[g].clone()).collect();
        let y: Vec<f64> = train.iter().map(|g| src.table.accuracy(g)).collect();
        let model = forest_fit(&x, &y, forest, derive_seed("transfer.forest", &[tag, seed]))?;
        let xt: Vec<Vec<f64>> = test.iter().map(|g| tgt_embeddings[g].clone()).collect();
        let preds: Vec<(Genotype, f64)> = test.into_iter().zip(forest_predict(&model, &xt)?).collect();
        let (pearson, kendall_tau) = tgt.score(&preds);
        runs.push(TransferRun {
            seed,
            pearson,
            kendall_tau,
        });
        all_preds.push(preds);
    }
    let pearson_p = tgt.mean_pearson_p(&all_preds, n_perm, derive_seed("transfer.perm", &[tag]))?;
    Ok(TransferReport {
        direction,
        runs,
        pearson_p,
    })
}

/// All four directions between two spaces, in the order
/// `a->a, a->b, b->a, b->b`.
pub fn transfer_all(
    a: &Source<'_>,
    b: &Source<'_>,
    seeds: &[u64],
    forest: ForestConfig,
    n_perm: usize,
) -> Result<Vec<TransferReport>> {
    let mut out = Vec::with_capacity(4);
    for (s, t) in [(a, a), (a, b), (b, a), (b, b)] {
        out.push(transfer_experiment(s, t.embeddings, &EvalOnly::new(t.table), seeds, forest, n_perm)?);
    }
    Ok(out)
}
