//! Random-forest regression.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 2,
            max_depth: 12,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    pub dim: usize,
    pub seed: u64,
    pub config: ForestConfig,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
    split_at: usize,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    fn best_on_feature(&self, idx: &mut [usize], f: usize, parent_score: f64) -> Option<Best> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut left = 0.0;
        let mut best: Option<Best> = None;
        for i in 1..n {
            left += self.y[idx[i - 1]];
            if i < self.cfg.min_leaf || n - i < self.cfg.min_leaf {
                continue;
            }
            let (lo, hi) = (x[idx[i - 1]][f], x[idx[i]][f]);
            if lo >= hi {
                continue;
            }
            let right = total - left;
            let score = left * left / i as f64 + right * right / (n - i) as f64;
            let gain = score - parent_score;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mid = 0.5 * (lo + hi);
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Best {
                    gain,
                    feature: f,
                    threshold,
                    split_at: i,
                });
            }
        }
        best
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut crate::rng::Rng) -> usize {
        let n = idx.len();
        let ys = idx.iter().map(|&i| self.y[i]);
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_leaf || lo == hi {
            return self.leaf(idx);
        }
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent_score = total * total / n as f64;
        let tol = 1e-12 * sse.max(f64::MIN_POSITIVE);

        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let mut best: Option<Best> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(b) = self.best_on_feature(idx, f, parent_score) {
                if b.gain > tol && best.as_ref().is_none_or(|cur| b.gain > cur.gain) {
                    best = Some(b);
                }
            }
        }
        let Some(b) = best else {
            return self.leaf(idx);
        };
        let x = self.x;
        idx.sort_by(|&p, &q| x[p][b.feature].total_cmp(&x[q][b.feature]).then(p.cmp(&q)));
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        let (l, r) = idx.split_at_mut(b.split_at);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left,
            right,
        };
        at
    }
}

fn row_cmp(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> std::cmp::Ordering {
    for (p, q) in a.0.iter().zip(&b.0) {
        let c = p.total_cmp(q);
        if c.is_ne() {
            return c;
        }
    }
    a.1.total_cmp(&b.1)
}

/// Fits the forest. Rows are put in a canonical order first, so the model
/// does not depend on the order they were given in.
pub fn forest_fit(x: &[Vec<f64>], y: &[f64], cfg: ForestConfig, seed: u64) -> Result<ForestModel> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::InsufficientData("forest needs at least one row".into()));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("rows of length {dim} > 0"),
            got: "ragged or empty rows".into(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if cfg.n_trees == 0 || cfg.min_leaf == 0 {
        return Err(Error::InvalidConfig("forest needs n_trees >= 1 and min_leaf >= 1".into()));
    }
    let mut rows: Vec<(Vec<f64>, f64)> = x.iter().cloned().zip(y.iter().copied()).collect();
    rows.sort_by(row_cmp);
    let (cx, cy): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
    let mtry = cfg.max_features.unwrap_or(dim.div_ceil(3)).clamp(1, dim);
    let n = cx.len();

    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for("forest.tree", &[seed, t as u64]);
            let mut idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x: &cx,
                y: &cy,
                cfg,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        trees,
        dim,
        seed,
        config: cfg,
    })
}

pub fn forest_predict(m: &ForestModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    x.iter()
        .map(|r| {
            if r.len() != m.dim {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}", m.dim),
                    got: format!("{}", r.len()),
                });
            }
            Ok(m.trees.iter().map(|t| t.predict(r)).sum::<f64>() / m.trees.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::metrics::r_squared;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_for("test.cloud", &[seed]);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn constant_target() {
        let x = cloud(40, 3, 0);
        let m = forest_fit(&x, &[0.7; 40], ForestConfig::default(), 1).unwrap();
        for p in forest_predict(&m, &cloud(10, 3, 9)).unwrap() {
            assert!((p - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn single_full_tree_interpolates() {
        let x = cloud(50, 4, 1);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[2]).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            min_leaf: 1,
            max_depth: usize::MAX,
            bootstrap: false,
            max_features: None,
        };
        let m = forest_fit(&x, &y, cfg, 0).unwrap();
        for (p, t) in forest_predict(&m, &x).unwrap().iter().zip(&y) {
            assert_eq!(p, t);
        }
    }

    #[test]
    fn planted_linear_signal() {
        let x = cloud(1000, 6, 2);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let m = forest_fit(&x[..500], &y[..500], ForestConfig::default(), 3).unwrap();
        let r2 = r_squared(&y[500..], &forest_predict(&m, &x[500..]).unwrap()).unwrap();
        assert!(r2 >= 0.8, "r2 {r2}");
    }

    #[test]
    fn invariant_to_row_order() {
        let x = cloud(60, 3, 4);
        let y: Vec<f64> = x.iter().map(|r| r[1].sin()).collect();
        let a = forest_fit(&x, &y, ForestConfig::default(), 5).unwrap();
        let mut order: Vec<usize> = (0..60).collect();
        order.shuffle(&mut rng_for("test.order", &[0]));
        let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let b = forest_fit(&xs, &ys, ForestConfig::default(), 5).unwrap();
        let q = cloud(20, 3, 6);
        assert_eq!(forest_predict(&a, &q).unwrap(), forest_predict(&b, &q).unwrap());
    }

    #[test]
    fn errors() {
        assert!(forest_fit(&[], &[], ForestConfig::default(), 0).is_err());
        let m = forest_fit(&cloud(5, 2, 0), &[1.0, 2.0, 3.0, 4.0, 5.0], ForestConfig::default(), 0).unwrap();
        assert!(forest_predict(&m, &[vec![1.0]]).is_err());
    }
}
