//! Correlation coefficients.

use std::cmp::Ordering;

use crate::{Error, Result};

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(format!("correlation needs n >= 2, got {}", a.len())));
    }
    Ok(())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Sum of `t (t - 1) / 2` over runs of equal values in a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort counting inversions.
fn sort_count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count_swaps(&mut v[..mid], &mut buf[..mid]) + sort_count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tie-adjusted Kendall rank correlation in `O(n log n)`.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFiniteInput);
    }
    let n = a.len() as u64;
    let n0 = n * (n - 1) / 2;
    // `+ 0.0` turns -0.0 into 0.0 so the total order keeps ties together
    let mut pairs: Vec<(f64, f64)> = a.iter().zip(b).map(|(x, y)| (x + 0.0, y + 0.0)).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let ta = tied_pairs(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let tab = tied_pairs(&pairs);
    let mut bs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; bs.len()];
    let swaps = sort_count_swaps(&mut bs, &mut buf);
    let tb = tied_pairs(&bs);
    let denom = (((n0 - ta) as f64) * ((n0 - tb) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    // concordant - discordant = n0 - ta - tb + tab - 2 * discordant
    let num = n0 as f64 - ta as f64 - tb as f64 + tab as f64 - 2.0 * swaps as f64;
    Ok((num / denom).clamp(-1.0, 1.0))
}

/// `O(n^2)` pair count, the reference for [`kendall_tau_b`].
pub fn kendall_tau_b_naive(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    let (mut s, mut ta, mut tb, mut n0) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in 0..i {
            n0 += 1;
            let ca = a[i].partial_cmp(&a[j]).ok_or(Error::NonFiniteInput)?;
            let cb = b[i].partial_cmp(&b[j]).ok_or(Error::NonFiniteInput)?;
            if ca == Ordering::Equal {
                ta += 1;
            }
            if cb == Ordering::Equal {
                tb += 1;
            }
            if ca != Ordering::Equal && cb != Ordering::Equal {
                s += if ca == cb { 1 } else { -1 };
            }
        }
    }
    let denom = (((n0 - ta) as f64) * ((n0 - tb) as f64)).sqrt();
    if denom == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(s as f64 / denom)
}

/// Coefficient of determination of `pred` against `truth`.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check(truth, pred)?;
    let m = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - m) * (y - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
