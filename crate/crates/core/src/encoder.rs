//! Contrastive DeepSets encoder over EPDJM rows.
//!
//! Each row goes through a shared bias-free ReLU MLP `phi` (k -> h -> h), rows
//! are averaged, and `rho` (h -> h ReLU -> d_embed, with biases) produces the
//! embedding. A bias-free linear head maps embeddings to unit-norm
//! projections used only by the NT-Xent loss. Views are different
//! initializations of one architecture.
//!
//! The row mean uses correctly rounded summation, so encoding is bit-exactly
//! invariant to row order and to duplicating every row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::jacobian::{epdjm_for, psv_score, Epdjm, ProbeSet};
use crate::net::{NetworkParams, OutputReduce};
use crate::rng::rng_for;
use crate::space::{Genotype, SearchSpaceSpec};
use crate::store;
use crate::sum::fsum;
use crate::{Error, Result};

const PHI1: usize = 0;
const PHI2: usize = 1;
const RHO1: usize = 2;
const RHO1_B: usize = 3;
const RHO2: usize = 4;
const RHO2_B: usize = 5;
const HEAD: usize = 6;
pub const TENSOR_NAMES: [&str; 7] = ["phi1", "phi2", "rho1", "rho1_bias", "rho2", "rho2_bias", "head"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderShape {
    pub k: usize,
    pub hidden: usize,
    pub d_embed: usize,
    pub d_proj: usize,
}

impl EncoderShape {
    fn tensor_shapes(&self) -> [(usize, usize); 7] {
        [
            (self.hidden, self.k),
            (self.hidden, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, 1),
            (self.d_embed, self.hidden),
            (self.d_embed, 1),
            (self.d_proj, self.d_embed),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub shape: EncoderShape,
    /// In [`TENSOR_NAMES`] order; biases are column vectors.
    pub tensors: Vec<DMatrix<f64>>,
    pub seed: u64,
}

/// Where an embedding came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Init(u64),
    Epoch(usize),
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub genotype: Option<Genotype>,
    pub origin: Origin,
}

struct Forward {
    x: DMatrix<f64>,
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
    blocks: Vec<(usize, usize)>,
    pooled: DMatrix<f64>,
    r1: DMatrix<f64>,
    emb: DMatrix<f64>,
    z: DMatrix<f64>,
    norms: Vec<f64>,
    proj: DMatrix<f64>,
}

impl EncoderParams {
    pub fn init(shape: EncoderShape, seed: u64) -> Self {
        let mut rng = rng_for("encoder.init", &[seed]);
        let tensors = shape
            .tensor_shapes()
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                if i == RHO1_B || i == RHO2_B {
                    return DMatrix::zeros(r, c);
                }
                let scale = (2.0 / c as f64).sqrt();
                DMatrix::from_fn(r, c, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
            })
            .collect();
        EncoderParams { shape, tensors, seed }
    }

    pub fn from_tensors(shape: EncoderShape, tensors: Vec<DMatrix<f64>>, seed: u64) -> Result<Self> {
        let want = shape.tensor_shapes();
        if tensors.len() != want.len() || tensors.iter().zip(&want).any(|(t, w)| t.shape() != *w) {
            return Err(Error::ShapeMismatch {
                expected: format!("{want:?}"),
                got: format!("{:?}", tensors.iter().map(|t| t.shape()).collect::<Vec<_>>()),
            });
        }
        Ok(EncoderParams { shape, tensors, seed })
    }

    fn check(&self, e: &Epdjm) -> Result<()> {
        if e.k() != self.shape.k || e.rows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("non-empty m x {} EPDJM", self.shape.k),
                got: format!("{}x{}", e.rows(), e.k()),
            });
        }
        Ok(())
    }

    fn forward(&self, views: &[&Epdjm]) -> Forward {
        let rows: usize = views.iter().map(|v| v.rows()).sum();
        let mut x = DMatrix::zeros(rows, self.shape.k);
        let mut blocks = Vec::with_capacity(views.len());
        let mut at = 0;
        for v in views {
            x.rows_mut(at, v.rows()).copy_from(&v.matrix);
            blocks.push((at, v.rows()));
            at += v.rows();
        }
        let t = &self.tensors;
        let mut h1 = &x * t[PHI1].transpose();
        h1.apply(|v| *v = v.max(0.0));
        let mut h2 = &h1 * t[PHI2].transpose();
        h2.apply(|v| *v = v.max(0.0));

        let pooled = DMatrix::from_fn(self.shape.hidden, views.len(), |j, b| {
            let (start, len) = blocks[b];
            fsum((start..start + len).map(|r| h2[(r, j)])) / len as f64
        });
        let mut r1 = &t[RHO1] * &pooled;
        for mut col in r1.column_iter_mut() {
            col += t[RHO1_B].column(0);
            col.apply(|v| *v = v.max(0.0));
        }
        let mut emb = &t[RHO2] * &r1;
        for mut col in emb.column_iter_mut() {
            col += t[RHO2_B].column(0);
        }
        let z = &t[HEAD] * &emb;
        let norms: Vec<f64> = z.column_iter().map(|c| c.norm()).collect();
        let mut proj = z.clone();
        for (mut col, &n) in proj.column_iter_mut().zip(&norms) {
            if n > 0.0 {
                col /= n;
            }
        }
        Forward {
            x,
            h1,
            h2,
            blocks,
            pooled,
            r1,
            emb,
            z,
            norms,
            proj,
        }
    }

    /// Gradients of all tensors given the gradient at the unit projections.
    fn backward(&self, f: &Forward, dproj: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let t = &self.tensors;
        let mut dz = DMatrix::zeros(f.z.nrows(), f.z.ncols());
        for b in 0..f.z.ncols() {
            let p = f.proj.column(b);
            let dp = dproj.column(b);
            let dot = p.dot(&dp);
            dz.set_column(b, &((dp - p * dot) / f.norms[b]));
        }
        let d_head = &dz * f.emb.transpose();
        let demb = t[HEAD].tr_mul(&dz);
        let d_rho2 = &demb * f.r1.transpose();
        let d_rho2_b = DMatrix::from_column_slice(demb.nrows(), 1, demb.column_sum().as_slice());
        let mut dr1 = t[RHO2].tr_mul(&demb);
        dr1.zip_apply(&f.r1, |g, a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let d_rho1 = &dr1 * f.pooled.transpose();
        let d_rho1_b = DMatrix::from_column_slice(dr1.nrows(), 1, dr1.column_sum().as_slice());
        let dpooled = t[RHO1].tr_mul(&dr1);

        let mut dh2 = DMatrix::zeros(f.h2.nrows(), f.h2.ncols());
        for (b, &(start, len)) in f.blocks.iter().enumerate() {
            let g = dpooled.column(b) / len as f64;
            for r in start..start + len {
                for j in 0..g.len() {
                    if f.h2[(r, j)] > 0.0 {
                        dh2[(r, j)] = g[j];
                    }
                }
            }
        }
        let d_phi2 = dh2.tr_mul(&f.h1);
        let mut dh1 = &dh2 * &t[PHI2];
        dh1.zip_apply(&f.h1, |g, a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let d_phi1 = dh1.tr_mul(&f.x);
        vec![d_phi1, d_phi2, d_rho1, d_rho1_b, d_rho2, d_rho2_b, d_head]
    }

    /// `rho(mean_rows(phi(row)))`, the pre-head embedding.
    pub fn encode(&self, e: &Epdjm) -> Result<Embedding> {
        self.check(e)?;
        let f = self.forward(&[e]);
        let (genotype, origin) = match &e.provenance {
            Some(p) => (Some(p.genotype.clone()), Origin::Init(p.init_seed)),
            None => (None, Origin::Unknown),
        };
        Ok(Embedding {
            values: f.emb.column(0).iter().copied().collect(),
            genotype,
            origin,
        })
    }

    /// Embeddings of many EPDJMs in one pass; values match [`Self::encode`] bit for bit.
    pub fn encode_many(&self, es: &[&Epdjm]) -> Result<Vec<Vec<f64>>> {
        for e in es {
            self.check(e)?;
        }
        if es.is_empty() {
            return Ok(Vec::new());
        }
        let f = self.forward(es);
        Ok(f.emb.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    /// Linear head followed by L2 normalization.
    pub fn project_head(&self, emb: &[f64]) -> Result<Vec<f64>> {
        if emb.len() != self.shape.d_embed {
            return Err(Error::ShapeMismatch {
                expected: format!("embedding of length {}", self.shape.d_embed),
                got: format!("length {}", emb.len()),
            });
        }
        let z = &self.tensors[HEAD] * DVector::from_column_slice(emb);
        let n = z.norm();
        if !(n > 0.0) {
            return Err(Error::DegenerateProjection);
        }
        Ok((z / n).iter().copied().collect())
    }

    /// Writes one EPDJ file per tensor and a `manifest.txt`.
    pub fn save(&self, dir: &Path, extra_manifest: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        manifest.push_str(extra_manifest);
        let s = &self.shape;
        writeln!(manifest, "k={}\nhidden={}\nd_embed={}\nd_proj={}\nseed={}", s.k, s.hidden, s.d_embed, s.d_proj, self.seed)
            .expect("string write");
        for (name, t) in TENSOR_NAMES.iter().zip(&self.tensors) {
            writeln!(manifest, "tensor {name} {}x{} {name}.epdj", t.nrows(), t.ncols()).expect("string write");
            store::write_matrix(&dir.join(format!("{name}.epdj")), t, false)?;
        }
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let text = fs::read_to_string(&manifest_path)?;
        let field = |key: &str| -> Result<u64> {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{key}=")))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format {
                    path: manifest_path.clone(),
                    reason: format!("missing {key}"),
                })
        };
        let shape = EncoderShape {
            k: field("k")? as usize,
            hidden: field("hidden")? as usize,
            d_embed: field("d_embed")? as usize,
            d_proj: field("d_proj")? as usize,
        };
        let tensors = TENSOR_NAMES
            .iter()
            .map(|name| store::read_matrix(&dir.join(format!("{name}.epdj"))).map(|(m, _)| m))
            .collect::<Result<Vec<_>>>()?;
        EncoderParams::from_tensors(shape, tensors, field("seed")?)
    }
}

/// NT-Xent over `2N` projections (columns), pairs `(2i, 2i+1)`. Returns the
/// mean loss over all anchors and its gradient with respect to each column.
pub fn nt_xent(proj: &DMatrix<f64>, temperature: f64) -> Result<(f64, DMatrix<f64>)> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidTemperature(temperature));
    }
    let n2 = proj.ncols();
    if n2 < 4 || n2 % 2 != 0 {
        return Err(Error::InsufficientData(format!(
            "NT-Xent needs an even number of at least 4 projections, got {n2}"
        )));
    }
    let sim = proj.tr_mul(proj) / temperature;
    // dL/dS, rows are anchors
    let mut ds = DMatrix::zeros(n2, n2);
    let mut loss = 0.0;
    for a in 0..n2 {
        let pos = a ^ 1;
        let max = (0..n2).filter(|&k| k != a).map(|k| sim[(a, k)]).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for k in 0..n2 {
            if k != a {
                let e = (sim[(a, k)] - max).exp();
                ds[(a, k)] = e;
                denom += e;
            }
        }
        loss += -(sim[(a, pos)] - max) + denom.ln();
        for k in 0..n2 {
            if k != a {
                ds[(a, k)] /= denom;
            }
        }
        ds[(a, pos)] -= 1.0;
    }
    let scale = 1.0 / n2 as f64;
    ds *= scale;
    let sym = &ds + ds.transpose();
    let grad = proj * sym / temperature;
    Ok((loss * scale, grad))
}

/// Precomputed EPDJM views, keyed by genotype.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewStore {
    pub views: BTreeMap<Genotype, Vec<Epdjm>>,
    pub n_views: usize,
    pub k: usize,
    pub normalized: bool,
    pub probe_seed: u64,
    pub reduce: OutputReduce,
    /// Genotypes dropped because their Jacobians vanish.
    pub degenerate: Vec<Genotype>,
}

impl ViewStore {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn genotypes(&self) -> Vec<Genotype> {
        self.views.keys().cloned().collect()
    }

    /// Union of two stores built with identical settings.
    pub fn merge(mut self, other: ViewStore) -> Result<ViewStore> {
        if (self.n_views, self.k, self.normalized, self.probe_seed, self.reduce)
            != (other.n_views, other.k, other.normalized, other.probe_seed, other.reduce)
        {
            return Err(Error::InvalidConfig("cannot merge view stores with different settings".into()));
        }
        self.views.extend(other.views);
        self.degenerate.extend(other.degenerate);
        self.degenerate.sort();
        Ok(self)
    }
}

/// EPDJMs of every genotype for init seeds `0..n_views`. Runs on the current
/// rayon pool; output order does not depend on the pool size.
pub fn precompute_views(
    space: &SearchSpaceSpec,
    probes: &ProbeSet,
    k: usize,
    n_views: usize,
    normalized: bool,
    reduce: OutputReduce,
) -> Result<ViewStore> {
    let genotypes = space.enumerate();
    let computed: Vec<Result<Option<Vec<Epdjm>>>> = genotypes
        .par_iter()
        .map(|g| {
            let mut views = Vec::with_capacity(n_views);
            for seed in 0..n_views as u64 {
                let p = NetworkParams::instantiate(space, g, seed)?;
                match epdjm_for(&p, probes, k, normalized, reduce) {
                    Ok((_, f)) if psv_score(&f) == 0.0 => return Ok(None),
                    Ok((e, _)) => views.push(e),
                    Err(Error::DegenerateArchitecture(_)) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(views))
        })
        .collect();
    let mut store = ViewStore {
        views: BTreeMap::new(),
        n_views,
        k,
        normalized,
        probe_seed: probes.seed,
        reduce,
        degenerate: Vec::new(),
    };
    for (g, r) in genotypes.into_iter().zip(computed) {
        match r? {
            Some(v) => {
                store.views.insert(g, v);
            }
            None => store.degenerate.push(g),
        }
    }
    Ok(store)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub batch_size: usize,
    pub n_views: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub k: usize,
    pub hidden: usize,
    pub d_embed: usize,
    pub d_proj: usize,
}

/// Batch size used at full scale.
pub const FULL_SCALE_BATCH_SIZE: usize = 512;

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.1,
            batch_size: 64,
            n_views: 4,
            steps: 400,
            lr: 1e-3,
            seed: 0,
            k: 8,
            hidden: 64,
            d_embed: 32,
            d_proj: 32,
        }
    }
}

impl ContrastiveConfig {
    pub fn shape(&self) -> EncoderShape {
        EncoderShape {
            k: self.k,
            hidden: self.hidden,
            d_embed: self.d_embed,
            d_proj: self.d_proj,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        if self.batch_size < 2 || self.n_views < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch_size and n_views must be at least 2, got {} and {}",
                self.batch_size, self.n_views
            )));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[DMatrix<f64>], lr: f64) -> Self {
        let zeros: Vec<_> = params.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [DMatrix<f64>], grads: &[DMatrix<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// The two views of each sampled genotype for one training step, in pair order.
fn sample_batch<'a>(entries: &[&'a Vec<Epdjm>], cfg: &ContrastiveConfig, step: usize) -> Vec<&'a Epdjm> {
    let mut rng = rng_for("encoder.batch", &[cfg.seed, step as u64]);
    let chosen = rand::seq::index::sample(&mut rng, entries.len(), cfg.batch_size);
    let mut batch = Vec::with_capacity(2 * cfg.batch_size);
    for i in chosen.iter() {
        let views = entries[i];
        let pair = rand::seq::index::sample(&mut rng, views.len(), 2);
        batch.push(&views[pair.index(0)]);
        batch.push(&views[pair.index(1)]);
    }
    batch
}

/// Loss and tensor gradients for one batch of paired views.
pub fn batch_loss(enc: &EncoderParams, views: &[&Epdjm], temperature: f64) -> Result<(f64, Vec<DMatrix<f64>>)> {
    let f = enc.forward(views);
    if f.norms.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::DegenerateProjection);
    }
    let (loss, dproj) = nt_xent(&f.proj, temperature)?;
    Ok((loss, enc.backward(&f, &dproj)))
}

pub struct TrainedEncoder {
    pub params: EncoderParams,
    pub loss_trace: Vec<f64>,
}

/// Adam on NT-Xent. Each step samples `batch_size` genotypes without
/// replacement and two distinct views of each.
pub fn train_encoder(store: &ViewStore, cfg: &ContrastiveConfig) -> Result<TrainedEncoder> {
    cfg.validate()?;
    if store.len() < cfg.batch_size {
        return Err(Error::InsufficientData(format!(
            "view store has {} genotypes, batch needs {}",
            store.len(),
            cfg.batch_size
        )));
    }
    if store.k != cfg.k {
        return Err(Error::ShapeMismatch {
            expected: format!("k = {}", cfg.k),
            got: format!("k = {}", store.k),
        });
    }
    let entries: Vec<&Vec<Epdjm>> = store.views.values().collect();
    if entries.iter().any(|v| v.len() < 2) {
        return Err(Error::InsufficientData("every genotype needs two views".into()));
    }
    let mut enc = EncoderParams::init(cfg.shape(), cfg.seed);
    let mut adam = Adam::new(&enc.tensors, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = sample_batch(&entries, cfg, step);
        let (loss, grads) = batch_loss(&enc, &batch, cfg.temperature).map_err(|e| match e {
            Error::DegenerateProjection => Error::NonFiniteLoss { step },
            other => other,
        })?;
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteLoss { step });
        }
        trace.push(loss);
        adam.step(&mut enc.tensors, &grads);
    }
    Ok(TrainedEncoder {
        params: enc,
        loss_trace: trace,
    })
}
