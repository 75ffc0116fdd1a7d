//! Exact-oracle measurements shared by the core tests and the acceptance run.
//!
//! Each function returns the worst error it saw so callers choose how to report.

#![allow(dead_code)]

use cenas_core::analysis::{kendall_tau_b, pearson};
use cenas_core::encoder::{batch_loss, nt_xent, EncoderShape};
use cenas_core::jacobian::{normalize_psv, project};
use cenas_core::rng::rng_for;
use cenas_core::surrogate::{expected_improvement, gp_fit, matern52, LengthscalePolicy};
use cenas_core::{Edjm, EncoderParams, Epdjm, Family, NetworkParams, OutputReduce, SearchSpaceSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gauss(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_net(i: u64) -> NetworkParams {
    let family = if i % 2 == 0 { Family::Topology } else { Family::Size };
    let space = SearchSpaceSpec::standard(family);
    let g = space.sample_random(1000 + i);
    NetworkParams::instantiate(&space, &g, i).expect("valid genotype")
}

/// Worst relative error of `forward(x)` against `J_full(x) x` over `n` draws.
pub fn local_linearity(n: u64) -> f64 {
    let mut rng = rng_for("oracle.linearity", &[]);
    let mut worst = 0.0f64;
    for i in 0..n {
        let p = random_net(i);
        let x = gauss(&mut rng, p.input_dim());
        let f = DVector::from_vec(p.forward(&x).unwrap());
        let jx = p.full_jacobian(&x).unwrap() * DVector::from_column_slice(&x);
        let scale = f.norm().max(f64::MIN_POSITIVE);
        worst = worst.max((f - jx).norm() / scale);
    }
    worst
}

fn l1_output(p: &NetworkParams, x: &[f64]) -> f64 {
    p.forward(x).unwrap().iter().map(|v| v.abs()).sum()
}

/// Worst relative error of the analytic data Jacobian against central
/// differences with step `h`, at `n` points whose activation margin keeps
/// every probe inside one linear region.
pub fn jacobian_vs_fd(n: usize, h: f64) -> f64 {
    let mut rng = rng_for("oracle.jacobian", &[]);
    let mut worst = 0.0f64;
    let mut found = 0;
    let mut i = 0u64;
    while found < n {
        i += 1;
        let p = random_net(i);
        let x = gauss(&mut rng, p.input_dim());
        if p.activation_margin(&x).unwrap() < 1e-3 {
            continue;
        }
        found += 1;
        let j = p.data_jacobian(&x, OutputReduce::L1).unwrap();
        let fd: Vec<f64> = (0..x.len())
            .map(|d| {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[d] += h;
                down[d] -= h;
                (l1_output(&p, &up) - l1_output(&p, &down)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = j.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = j.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(if norm > 0.0 { diff / norm } else { diff });
    }
    worst
}

#[derive(Debug, Default)]
pub struct SvdOracle {
    /// |reconstruction error - tail formula|, relative to the squared Frobenius norm.
    pub reconstruction: f64,
    /// |top singular value of a normalized EPDJM - 1|.
    pub normalized_top: f64,
    /// Relative change of pairwise row distances under full-rank projection.
    pub distances: f64,
}

pub fn svd_oracle(trials: u64) -> SvdOracle {
    let mut out = SvdOracle::default();
    let mut rng = rng_for("oracle.svd", &[]);
    for t in 0..trials {
        let (m, d) = (32, 16);
        let x = DMatrix::from_vec(m, d, gauss(&mut rng, m * d)) * (1.0 + t as f64);
        let e = Edjm::from_matrix(x.clone());
        let total = x.norm_squared();
        let (_, full) = project(&e, d).unwrap();
        for k in 1..=d {
            let (p, f) = project(&e, k).unwrap();
            let recon = &p.matrix * f.v.transpose();
            let err = (&x - recon).norm_squared();
            let tail: f64 = full.sigma[k..].iter().map(|s| s * s).sum();
            out.reconstruction = out.reconstruction.max((err - tail).abs() / total);
            let n = normalize_psv(&p, &f).unwrap();
            let top = n.matrix.clone().singular_values().max();
            out.normalized_top = out.normalized_top.max((top - 1.0).abs());
        }
        let (p, _) = project(&e, d).unwrap();
        for i in 0..m {
            for j in 0..i {
                let a = (x.row(i) - x.row(j)).norm();
                let b = (p.matrix.row(i) - p.matrix.row(j)).norm();
                out.distances = out.distances.max((a - b).abs() / a);
            }
        }
    }
    out
}

/// NT-Xent on two identical, mutually orthogonal pairs at temperature 1.
pub fn nt_xent_orthogonal_pairs() -> f64 {
    let proj = DMatrix::from_column_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    nt_xent(&proj, 1.0).unwrap().0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error of analytic gradients against central differences:
/// the loss with respect to projections, and the full encoder loss with
/// respect to every parameter.
pub fn encoder_gradients_vs_fd() -> f64 {
    let mut rng = rng_for("oracle.encoder", &[]);
    let mut worst = 0.0f64;
    let h = 1e-6;

    let mut proj = DMatrix::from_vec(5, 6, gauss(&mut rng, 30));
    for mut c in proj.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let (_, g) = nt_xent(&proj, 0.5).unwrap();
    for i in 0..proj.len() {
        let (mut up, mut down) = (proj.clone(), proj.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (nt_xent(&up, 0.5).unwrap().0 - nt_xent(&down, 0.5).unwrap().0) / (2.0 * h);
        worst = worst.max(rel(g[i], fd));
    }

    let shape = EncoderShape {
        k: 4,
        hidden: 16,
        d_embed: 8,
        d_proj: 6,
    };
    let mut enc = EncoderParams::init(shape, 3);
    for t in &mut enc.tensors {
        for v in t.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += 0.1 * z;
        }
    }
    let views: Vec<Epdjm> = (0..6)
        .map(|i| Epdjm {
            matrix: DMatrix::from_vec(5 + i, 4, gauss(&mut rng, (5 + i) * 4)),
            normalized: false,
            provenance: None,
        })
        .collect();
    let refs: Vec<&Epdjm> = views.iter().collect();
    let (_, grads) = batch_loss(&enc, &refs, 0.1).unwrap();
    for t in 0..enc.tensors.len() {
        for i in 0..enc.tensors[t].len() {
            let mut up = enc.clone();
            up.tensors[t][i] += h;
            let mut down = enc.clone();
            down.tensors[t][i] -= h;
            let fd = (batch_loss(&up, &refs, 0.1).unwrap().0 - batch_loss(&down, &refs, 0.1).unwrap().0) / (2.0 * h);
            worst = worst.max(rel(grads[t][i], fd));
        }
    }
    worst
}

#[derive(Debug, Default)]
pub struct GpOracle {
    pub mean: f64,
    pub variance: f64,
}

/// Posterior against an LU solve of the same kernel system, over `problems` draws.
pub fn gp_vs_dense(problems: u64) -> GpOracle {
    let mut out = GpOracle::default();
    let mut rng = rng_for("oracle.gp", &[]);
    for p in 0..problems {
        let n = 4 + (p as usize % 12);
        let d = 1 + (p as usize % 4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| 0.5 + 0.1 * rng.random::<f64>()).collect();
        let policy = if p % 2 == 0 {
            LengthscalePolicy::Median
        } else {
            LengthscalePolicy::Fixed(0.3)
        };
        let gp = gp_fit(&x, &y, policy).unwrap();
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52(&x[i], &x[j], gp.lengthscale, gp.signal_var) + if i == j { gp.noise + gp.jitter } else { 0.0 }
        });
        let lu = k.clone().full_piv_lu();
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - gp.y_mean) / gp.y_std));
        let alpha = lu.solve(&ys).unwrap();
        for _ in 0..5 {
            let xs: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let ks = DVector::from_iterator(n, x.iter().map(|xi| matern52(xi, &xs, gp.lengthscale, gp.signal_var)));
            let mean = gp.y_mean + gp.y_std * ks.dot(&alpha);
            let var = gp.y_std.powi(2) * (gp.signal_var - ks.dot(&lu.solve(&ks).unwrap())).max(0.0);
            let (m, v) = gp.posterior(&xs);
            out.mean = out.mean.max((m - mean).abs());
            out.variance = out.variance.max((v - var).abs());
        }
    }
    out
}

/// Standard normal CDF by composite Simpson integration of the density.
fn phi_integrated(z: f64) -> f64 {
    let steps = 20_000;
    let h = z / steps as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..steps {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

#[derive(Debug, Default)]
pub struct EiOracle {
    /// Worst absolute difference from the closed form.
    pub closed_form: f64,
    /// Worst |EI - MC mean| in units of the MC standard error.
    pub mc_sigmas: f64,
}

pub fn ei_oracle(samples: usize) -> EiOracle {
    let mut out = EiOracle::default();
    let mut rng = rng_for("oracle.ei", &[]);
    for &(mean, var, best) in &[(0.7, 0.01, 0.72), (0.5, 0.04, 0.4), (0.6, 1e-4, 0.615), (0.0, 1.0, 0.0), (1.0, 0.25, 1.8)] {
        let ei = expected_improvement(mean, var, best);
        let s: f64 = f64::sqrt(var);
        let z = (mean - best) / s;
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let closed = (mean - best) * phi_integrated(z) + s * pdf;
        out.closed_form = out.closed_form.max((ei - closed).abs());
        let draws: Vec<f64> = (0..samples)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (mean + s * e - best).max(0.0)
            })
            .collect();
        let m = draws.iter().sum::<f64>() / samples as f64;
        let sd = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples as f64 - 1.0)).sqrt();
        let se = sd / (samples as f64).sqrt();
        out.mc_sigmas = out.mc_sigmas.max((ei - m).abs() / se);
    }
    out
}

fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn brute_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let (mut c, mut d, mut ta, mut tb) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (sa, sb) = ((a[i] - a[j]).signum(), (b[i] - b[j]).signum());
            let (ea, eb) = (a[i] == a[j], b[i] == b[j]);
            match (ea, eb) {
                (true, true) => {}
                (true, false) => ta += 1.0,
                (false, true) => tb += 1.0,
                (false, false) if sa == sb => c += 1.0,
                _ => d += 1.0,
            }
        }
    }
    (c - d) / ((c + d + ta) * (c + d + tb)).sqrt()
}

/// Worst `(pearson, tau_b)` differences from `O(n^2)` formulas over 100
/// vectors, half of them rounded to force ties.
pub fn metrics_vs_brute_force() -> (f64, f64) {
    let mut rng = rng_for("oracle.metrics", &[]);
    let (mut wp, mut wt) = (0.0f64, 0.0f64);
    for t in 0..100 {
        let n = 5 + t % 60;
        let mut a = gauss(&mut rng, n);
        let noise = gauss(&mut rng, n);
        let mut b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
        if t % 2 == 1 {
            a.iter_mut().for_each(|x| *x = x.round());
            b.iter_mut().for_each(|x| *x = (2.0 * *x).round());
        }
        wp = wp.max((pearson(&a, &b).unwrap() - brute_pearson(&a, &b)).abs());
        wt = wt.max((kendall_tau_b(&a, &b).unwrap() - brute_tau_b(&a, &b)).abs());
    }
    (wp, wt)
}
