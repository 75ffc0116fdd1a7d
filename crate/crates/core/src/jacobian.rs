//! Extended data Jacobian matrices and their low-rank projection.
//!
//! An EDJM stacks one data Jacobian per probe input (rows = probes). The
//! projected matrix (EPDJM) holds each row's coordinates on the top-k right
//! singular vectors, `X V1 = U1 S1`. The SVD runs on the small
//! `input_dim x input_dim` Gram matrix `X^T X`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::net::{Dataset, NetworkParams, OutputReduce};
use crate::rng::rng_for;
use crate::space::Genotype;
use crate::{Error, Result};

/// Default number of probe inputs.
pub const DEFAULT_PROBES: usize = 32;
/// Default projection rank.
pub const DEFAULT_K: usize = 8;
/// Projection rank used at full scale; only usable when inputs are that wide.
pub const FULL_SCALE_K: usize = 256;

/// Probe inputs shared by every network in an experiment. Rows are dataset rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSet {
    pub inputs: DMatrix<f64>,
    pub seed: u64,
}

impl ProbeSet {
    /// Draws `m` distinct rows of `train`.
    pub fn draw(train: &Dataset, m: usize, seed: u64) -> Result<ProbeSet> {
        if m == 0 || m > train.len() {
            return Err(Error::InsufficientData(format!(
                "cannot draw {m} probes from {} rows",
                train.len()
            )));
        }
        let mut rng = rng_for("jacobian.probes", &[seed]);
        let idx = rand::seq::index::sample(&mut rng, train.len(), m).into_vec();
        let inputs = DMatrix::from_fn(m, train.inputs.ncols(), |r, c| train.inputs[(idx[r], c)]);
        Ok(ProbeSet { inputs, seed })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub genotype: Genotype,
    pub init_seed: u64,
    pub probe_seed: u64,
    pub reduce: OutputReduce,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edjm {
    pub matrix: DMatrix<f64>,
    pub provenance: Option<Provenance>,
}

impl Edjm {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        Edjm {
            matrix,
            provenance: None,
        }
    }
}

/// Top-k factors: `u` is m x k, `v` is d x k, `sigma` descending.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epdjm {
    pub matrix: DMatrix<f64>,
    pub normalized: bool,
    pub provenance: Option<Provenance>,
}

impl Epdjm {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn k(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Row `i` is the data Jacobian of `p` at probe `i`.
pub fn assemble_edjm(p: &NetworkParams, probes: &ProbeSet, reduce: OutputReduce) -> Result<Edjm> {
    if probes.is_empty() {
        return Err(Error::InsufficientData("empty probe set".into()));
    }
    let jt = p.data_jacobians(&probes.inputs.transpose(), reduce);
    if let Some(bad) = jt.column_iter().position(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteJacobian { probe: bad });
    }
    Ok(Edjm {
        matrix: jt.transpose(),
        provenance: Some(Provenance {
            genotype: p.genotype.clone(),
            init_seed: p.init_seed,
            probe_seed: probes.seed,
            reduce,
        }),
    })
}

/// Full right-singular system of `x` from `eig(x^T x)`: singular values
/// descending and `V` with the sign convention applied.
fn right_singular(x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let gram = x.tr_mul(x);
    let eig = SymmetricEigen::new(gram);
    let d = x.ncols();
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps ties in solver order, which is itself deterministic
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sigma = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    let mut v = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    fix_signs(&mut v);
    (sigma, v)
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Projects EDJM rows onto the top-`k` right singular vectors.
pub fn project(e: &Edjm, k: usize) -> Result<(Epdjm, SvdFactors)> {
    let x = &e.matrix;
    let max = x.nrows().min(x.ncols());
    if k == 0 || k > max {
        return Err(Error::ProjectionRank { k, max });
    }
    let (sigma, v) = right_singular(x);
    let v1 = v.columns(0, k).into_owned();
    let scores = x * &v1;
    let sigma: Vec<f64> = sigma[..k].to_vec();
    let mut u = scores.clone();
    for (j, mut col) in u.column_iter_mut().enumerate() {
        if sigma[j] > 0.0 {
            col /= sigma[j];
        } else {
            col.fill(0.0);
        }
    }
    Ok((
        Epdjm {
            matrix: scores,
            normalized: false,
            provenance: e.provenance.clone(),
        },
        SvdFactors { u, sigma, v: v1 },
    ))
}

/// Divides every entry by the principal singular value. Already-normalized
/// inputs are returned unchanged.
pub fn normalize_psv(e: &Epdjm, factors: &SvdFactors) -> Result<Epdjm> {
    if e.normalized {
        return Ok(e.clone());
    }
    let s1 = psv_score(factors);
    if !(s1 > 0.0) {
        let name = e
            .provenance
            .as_ref()
            .map(|p| p.genotype.to_string())
            .unwrap_or_else(|| "<unnamed>".into());
        return Err(Error::DegenerateArchitecture(name));
    }
    Ok(Epdjm {
        matrix: &e.matrix / s1,
        normalized: true,
        provenance: e.provenance.clone(),
    })
}

/// Principal singular value of the EDJM.
pub fn psv_score(factors: &SvdFactors) -> f64 {
    factors.sigma.first().copied().unwrap_or(0.0)
}

/// Convenience: EDJM on `probes`, projection, optional normalization.
pub fn epdjm_for(
    p: &NetworkParams,
    probes: &ProbeSet,
    k: usize,
    normalized: bool,
    reduce: OutputReduce,
) -> Result<(Epdjm, SvdFactors)> {
    let e = assemble_edjm(p, probes, reduce)?;
    let (proj, factors) = project(&e, k)?;
    if normalized {
        Ok((normalize_psv(&proj, &factors)?, factors))
    } else {
        Ok((proj, factors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gen_dataset;
    use crate::space::SearchSpaceSpec;
    use nalgebra::dmatrix;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_for("test.matrix", &[seed]);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_probe_edjm_is_the_jacobian() {
        let data = gen_dataset(0, 64, 1);
        let probes = ProbeSet::draw(&data.train, 1, 4).unwrap();
        let t = SearchSpaceSpec::topology();
        let p = NetworkParams::instantiate(&t, &t.sample_random(2), 1).unwrap();
        let e = assemble_edjm(&p, &probes, OutputReduce::L1).unwrap();
        assert_eq!(e.matrix.shape(), (1, 16));
        let x: Vec<f64> = probes.inputs.row(0).iter().copied().collect();
        let j = p.data_jacobian(&x, OutputReduce::L1).unwrap();
        assert_eq!(e.matrix.row(0).iter().copied().collect::<Vec<_>>(), j);
    }

    #[test]
    fn probe_permutation_permutes_rows() {
        let data = gen_dataset(0, 64, 1);
        let probes = ProbeSet::draw(&data.train, 8, 4).unwrap();
        let perm = [3, 1, 7, 0, 2, 6, 5, 4];
        let permuted = ProbeSet {
            inputs: DMatrix::from_fn(8, 16, |r, c| probes.inputs[(perm[r], c)]),
            seed: probes.seed,
        };
        let t = SearchSpaceSpec::topology();
        let p = NetworkParams::instantiate(&t, &t.sample_random(5), 0).unwrap();
        let a = assemble_edjm(&p, &probes, OutputReduce::L1).unwrap();
        let b = assemble_edjm(&p, &permuted, OutputReduce::L1).unwrap();
        for (r, &src) in perm.iter().enumerate() {
            assert_eq!(b.matrix.row(r), a.matrix.row(src));
        }
    }

    #[test]
    fn zero_cell_and_linear_edge_differ() {
        let data = gen_dataset(0, 64, 1);
        let probes = ProbeSet::draw(&data.train, 32, 0).unwrap();
        let t = SearchSpaceSpec::topology();
        let a = NetworkParams::instantiate(&t, &Genotype::parse("T-000000").unwrap(), 0).unwrap();
        let b = NetworkParams::instantiate(&t, &Genotype::parse("T-000002").unwrap(), 0).unwrap();
        let ea = assemble_edjm(&a, &probes, OutputReduce::L1).unwrap();
        let eb = assemble_edjm(&b, &probes, OutputReduce::L1).unwrap();
        assert!((ea.matrix - eb.matrix).norm() > 0.0);
    }

    #[test]
    fn rank_one_capture() {
        let u = DMatrix::from_fn(6, 1, |r, _| r as f64 - 2.5);
        let v = DMatrix::from_fn(1, 4, |_, c| [0.5, -1.0, 2.0, 0.25][c]);
        let e = Edjm::from_matrix(&u * &v);
        let (p, _) = project(&e, 1).unwrap();
        for i in 0..6 {
            assert!((p.matrix.row(i).norm() - e.matrix.row(i).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_projection_is_an_isometry() {
        let e = Edjm::from_matrix(random_matrix(32, 16, 1));
        let (p, _) = project(&e, 16).unwrap();
        for i in 0..32 {
            for j in 0..i {
                let a = (e.matrix.row(i) - e.matrix.row(j)).norm();
                let b = (p.matrix.row(i) - p.matrix.row(j)).norm();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_checks() {
        let e = Edjm::from_matrix(random_matrix(4, 16, 1));
        assert!(matches!(project(&e, 0), Err(Error::ProjectionRank { .. })));
        assert!(matches!(project(&e, 5), Err(Error::ProjectionRank { k: 5, max: 4 })));
        assert!(project(&e, 4).is_ok());
    }

    #[test]
    fn sign_convention() {
        let (_, f) = project(&Edjm::from_matrix(random_matrix(32, 16, 2)), 8).unwrap();
        for col in f.v.column_iter() {
            let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
        let neg = Edjm::from_matrix(-random_matrix(32, 16, 2));
        let (_, g) = project(&neg, 8).unwrap();
        assert!((f.v - g.v).norm() < 1e-12);
    }

    #[test]
    fn normalization() {
        let e = Edjm::from_matrix(random_matrix(32, 16, 3));
        let (p, f) = project(&e, 8).unwrap();
        let n = normalize_psv(&p, &f).unwrap();
        assert!(n.normalized);
        let top = n.matrix.singular_values().max();
        assert!((top - 1.0).abs() < 1e-9);
        assert_eq!(normalize_psv(&n, &f).unwrap(), n);

        let scaled = Edjm::from_matrix(&e.matrix * 3.0);
        let (p3, f3) = project(&scaled, 8).unwrap();
        let n3 = normalize_psv(&p3, &f3).unwrap();
        assert!((n3.matrix - &n.matrix).abs().max() < 1e-12);
    }

    #[test]
    fn degenerate_normalization() {
        let e = Edjm::from_matrix(DMatrix::zeros(8, 16));
        let (p, f) = project(&e, 4).unwrap();
        assert!(matches!(normalize_psv(&p, &f), Err(Error::DegenerateArchitecture(_))));
    }

    #[test]
    fn psv_homogeneity() {
        let (_, f) = project(&Edjm::from_matrix(dmatrix![1.0, 0.0; 0.0, 1.0]), 2).unwrap();
        assert!((psv_score(&f) - 1.0).abs() < 1e-12);
        let x = random_matrix(10, 16, 9);
        let (_, a) = project(&Edjm::from_matrix(x.clone()), 3).unwrap();
        let (_, b) = project(&Edjm::from_matrix(x * 2.5), 3).unwrap();
        assert!((psv_score(&b) - 2.5 * psv_score(&a)).abs() < 1e-12);
    }
}
