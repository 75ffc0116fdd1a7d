//! Accuracy prediction from embeddings within one space.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::forest::{forest_fit, forest_predict, ForestConfig};
use super::metrics::{kendall_tau_b, pearson};
use crate::rng::{derive_seed, rng_for};
use crate::space::Genotype;
use crate::surrogate::AccuracyTable;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveReport {
    pub seed: u64,
    pub n_train: usize,
    pub pearson: f64,
    pub kendall_tau: f64,
    /// Held-out genotypes with their `(prediction, accuracy)`.
    pub held_out: Vec<(Genotype, f64, f64)>,
}

impl PredictiveReport {
    pub fn predictions(&self) -> Vec<f64> {
        self.held_out.iter().map(|r| r.1).collect()
    }

    pub fn truth(&self) -> Vec<f64> {
        self.held_out.iter().map(|r| r.2).collect()
    }
}

/// Fits a forest on `n_train` random genotypes and scores the remainder.
pub fn predictive_power(
    embeddings: &BTreeMap<Genotype, Vec<f64>>,
    table: &AccuracyTable,
    n_train: usize,
    forest: ForestConfig,
    seed: u64,
) -> Result<PredictiveReport> {
    let mut order = table.genotypes().to_vec();
    if let Some(g) = order.iter().find(|g| !embeddings.contains_key(*g)) {
        return Err(Error::Missing(format!("embedding for {g}")));
    }
    if n_train < 2 || n_train + 2 > order.len() {
        return Err(Error::InsufficientData(format!(
            "need 2 <= n_train <= {} for a held-out set, got {n_train}",
            order.len().saturating_sub(2)
        )));
    }
    order.shuffle(&mut rng_for("predict.split", &[seed]));
    let (train, test) = order.split_at(n_train);
    let x: Vec<Vec<f64>> = train.iter().map(|g| embeddings[g].clone()).collect();
    let y: Vec<f64> = train.iter().map(|g| table.accuracy(g)).collect();
    let model = forest_fit(&x, &y, forest, derive_seed("predict.forest", &[seed]))?;
    let mut test = test.to_vec();
    test.sort();
    let xt: Vec<Vec<f64>> = test.iter().map(|g| embeddings[g].clone()).collect();
    let pred = forest_predict(&model, &xt)?;
    let truth: Vec<f64> = test.iter().map(|g| table.accuracy(g)).collect();
    Ok(PredictiveReport {
        seed,
        n_train,
        pearson: pearson(&pred, &truth).unwrap_or(0.0),
        kendall_tau: kendall_tau_b(&pred, &truth).unwrap_or(0.0),
        held_out: test.into_iter().zip(pred).zip(truth).map(|((g, p), t)| (g, p, t)).collect(),
    })
}
