//! Two-dimensional PCA projection for plots.

use nalgebra::DMatrix;

use crate::jacobian::fix_signs;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    /// Share of total variance captured by each of the two axes.
    pub explained: [f64; 2],
}

pub fn pca2d(rows: &[Vec<f64>]) -> Result<Pca2d> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("pca2d needs n >= 3, got {n}")));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::ShapeMismatch {
            expected: format!("rows of length {d} > 0"),
            got: "ragged or empty rows".into(),
        });
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut v = DMatrix::zeros(d, 2);
    let mut explained = [0.0; 2];
    for (c, &i) in order.iter().take(2).enumerate() {
        v.set_column(c, &vt.row(i).transpose());
        explained[c] = svd.singular_values[i].powi(2) / total;
    }
    fix_signs(&mut v);
    let p = &x * &v;
    Ok(Pca2d {
        coords: (0..n).map(|i| [p[(i, 0)], p[(i, 1)]]).collect(),
        explained,
    })
}
