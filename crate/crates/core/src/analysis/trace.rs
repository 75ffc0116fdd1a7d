//! Embedding movement during network training.

use nalgebra::DMatrix;

use crate::encoder::{EncoderParams, Embedding, Origin};
use crate::jacobian::{epdjm_for, ProbeSet};
use crate::net::{NetworkParams, OutputReduce};
use crate::Result;

/// Embedding of the network at every checkpoint, in epoch order.
pub fn evolution_trace(
    enc: &EncoderParams,
    net: &NetworkParams,
    checkpoints: &[Vec<DMatrix<f64>>],
    probes: &ProbeSet,
    k: usize,
    normalized: bool,
    reduce: OutputReduce,
) -> Result<Vec<Embedding>> {
    checkpoints
        .iter()
        .enumerate()
        .map(|(epoch, w)| {
            let p = net.with_weights(w.clone())?;
            let (e, _) = epdjm_for(&p, probes, k, normalized, reduce)?;
            let mut emb = enc.encode(&e)?;
            emb.origin = Origin::Epoch(epoch);
            Ok(emb)
        })
        .collect()
}

/// Mean step length `|emb(t+1) - emb(t)|` over traces, for steps starting in `epochs`.
pub fn mean_displacement(traces: &[Vec<Embedding>], epochs: std::ops::Range<usize>) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in traces {
        for e in epochs.clone() {
            if e + 1 >= t.len() {
                break;
            }
            let d: f64 = t[e + 1].values.iter().zip(&t[e].values).map(|(a, b)| (a - b).powi(2)).sum();
            total += d.sqrt();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
