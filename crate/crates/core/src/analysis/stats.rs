//! Exact significance tests.

use rand::seq::SliceRandom;

use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// Median difference greater than zero.
    Greater,
    TwoSided,
}

/// Exact Wilcoxon signed-rank test of paired differences `x - y`.
///
/// Zero differences are dropped, tied magnitudes get midranks, and the null
/// distribution of the positive rank sum is enumerated over all sign flips.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alt: Alternative) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let mut d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if d.is_empty() {
        return Ok(1.0);
    }
    d.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    // doubled midranks are integers
    let n = d.len();
    let mut ranks2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        for r in &mut ranks2[i..=j] {
            *r = i + j + 2;
        }
        i = j + 1;
    }
    let w2: usize = d.iter().zip(&ranks2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total: usize = ranks2.iter().sum();
    // counts[s] = number of sign patterns whose doubled positive sum is s
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &r in &ranks2 {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(n as i32);
    let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
    let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
    Ok(match alt {
        Alternative::Greater => upper,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    })
}

/// One-sided permutation p-value `(1 + #{stat(perm) >= observed}) / (1 + n_perm)`.
///
/// `stat` receives a permutation of `0..n` to apply to the labels.
pub fn permutation_p(
    n: usize,
    n_perm: usize,
    seed: u64,
    stat: impl Fn(Option<&[usize]>) -> Result<f64>,
) -> Result<f64> {
    let observed = stat(None)?;
    let mut rng = rng_for("stats.permutation", &[seed]);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        // undefined statistics on a permutation count as not exceeding
        if let Ok(s) = stat(Some(&perm)) {
            if s >= observed {
                hits += 1;
            }
        }
    }
    Ok((1 + hits) as f64 / (1 + n_perm) as f64)
}
