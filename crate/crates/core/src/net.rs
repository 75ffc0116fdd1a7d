//! Bias-free ReLU networks built from genotypes.
//!
//! Every genotype compiles to a small DAG whose nodes are sums of incoming
//! terms; a term is either the identity or a linear map optionally followed
//! by ReLU. With no biases anywhere each network is positively homogeneous
//! and, inside an activation region, exactly `f(x) = J(x) x`.
//!
//! Topology networks: input map (ReLU), then `cell_stack_count` residual
//! cells, then a linear output map. Inside a cell node 0 is the cell input,
//! node `j` sums its incoming edge ops, and the cell emits `input + node[n-1]`,
//! so an all-Zero cell is the identity. Size networks: a chain of ReLU
//! layers followed by a linear output map.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{hash_str, rng_for};
use crate::space::{EdgeOp, Genotype, Layout, SearchSpaceSpec};
use crate::{Error, Result};

/// How the output vector is reduced to a scalar before differentiating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputReduce {
    /// `sum_o |f_o(x)|`
    #[default]
    L1,
    /// `sum_o f_o(x)`
    Sum,
}

impl OutputReduce {
    pub fn name(self) -> &'static str {
        match self {
            OutputReduce::L1 => "l1",
            OutputReduce::Sum => "sum",
        }
    }
}

impl FromStr for OutputReduce {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(OutputReduce::L1),
            "sum" => Ok(OutputReduce::Sum),
            other => Err(Error::InvalidConfig(format!("unknown output_reduce {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Term {
    Identity { src: usize },
    Linear { src: usize, weight: usize, relu: bool },
}

#[derive(Clone, Debug, PartialEq)]
struct Graph {
    widths: Vec<usize>,
    /// `terms[i]` feed node `i`; node 0 is the input, the last node the output.
    terms: Vec<Vec<Term>>,
    /// (rows, cols) per weight matrix.
    shapes: Vec<(usize, usize)>,
}

impl Graph {
    fn push_node(&mut self, width: usize, terms: Vec<Term>) -> usize {
        self.widths.push(width);
        self.terms.push(terms);
        self.widths.len() - 1
    }

    fn linear(&mut self, src: usize, out: usize, relu: bool) -> Term {
        let weight = self.shapes.len();
        self.shapes.push((out, self.widths[src]));
        Term::Linear { src, weight, relu }
    }

    fn compile(space: &SearchSpaceSpec, g: &Genotype) -> Result<Graph> {
        if !space.contains(g) {
            return Err(Error::MalformedGenotype(g.to_string()));
        }
        let mut graph = Graph {
            widths: vec![space.input_dim],
            terms: vec![Vec::new()],
            shapes: Vec::new(),
        };
        let mut h = 0;
        match &space.layout {
            Layout::Topology(t) => {
                let term = graph.linear(0, t.width, true);
                h = graph.push_node(t.width, vec![term]);
                let edges = space.edges();
                for _ in 0..t.cell_stack_count {
                    let mut nodes = vec![h];
                    for to in 1..t.n_nodes {
                        let mut terms = Vec::new();
                        for (gene, &(from, target)) in g.genes.iter().zip(&edges) {
                            if target != to {
                                continue;
                            }
                            let src = nodes[from];
                            match t.edge_ops[usize::from(*gene)] {
                                EdgeOp::Zero => {}
                                EdgeOp::Identity => terms.push(Term::Identity { src }),
                                EdgeOp::LinearRelu => terms.push(graph.linear(src, t.width, true)),
                            }
                        }
                        nodes.push(graph.push_node(t.width, terms));
                    }
                    let last = *nodes.last().expect("cell has nodes");
                    let skip = if last == h {
                        vec![Term::Identity { src: h }]
                    } else {
                        vec![Term::Identity { src: h }, Term::Identity { src: last }]
                    };
                    h = graph.push_node(t.width, skip);
                }
            }
            Layout::Size(s) => {
                for &gene in &g.genes {
                    let w = s.width_choices[usize::from(gene)];
                    let term = graph.linear(h, w, true);
                    h = graph.push_node(w, vec![term]);
                }
            }
        }
        let out = graph.linear(h, space.n_classes, false);
        graph.push_node(space.n_classes, vec![out]);
        Ok(graph)
    }
}

/// Per-node values and per-term pre-activations of one batched forward pass.
/// Columns are samples.
struct Tape {
    values: Vec<DMatrix<f64>>,
    pre: Vec<Vec<Option<DMatrix<f64>>>>,
}

/// Seeded weights of one instantiated network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub genotype: Genotype,
    pub init_seed: u64,
    pub weights: Vec<DMatrix<f64>>,
    graph: Graph,
}

impl NetworkParams {
    /// He-initialized weights, `N(0, 2 / fan_in)` per matrix.
    pub fn instantiate(space: &SearchSpaceSpec, g: &Genotype, init_seed: u64) -> Result<Self> {
        let graph = Graph::compile(space, g)?;
        let mut rng = rng_for("net.init", &[hash_str(&g.to_string()), init_seed]);
        let weights = graph
            .shapes
            .iter()
            .map(|&(r, c)| {
                let scale = (2.0 / c as f64).sqrt();
                DMatrix::from_fn(r, c, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * scale
                })
            })
            .collect();
        Ok(NetworkParams {
            genotype: g.clone(),
            init_seed,
            weights,
            graph,
        })
    }

    /// Builds a network with explicit weights, in the order [`Self::weight_shapes`] reports.
    pub fn from_weights(
        space: &SearchSpaceSpec,
        g: &Genotype,
        weights: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let graph = Graph::compile(space, g)?;
        check_shapes(&graph.shapes, &weights)?;
        Ok(NetworkParams {
            genotype: g.clone(),
            init_seed: 0,
            weights,
            graph,
        })
    }

    /// Same architecture, new weights (e.g. a training checkpoint).
    pub fn with_weights(&self, weights: Vec<DMatrix<f64>>) -> Result<Self> {
        check_shapes(&self.graph.shapes, &weights)?;
        Ok(NetworkParams {
            weights,
            ..self.clone()
        })
    }

    pub fn weight_shapes(&self) -> &[(usize, usize)] {
        &self.graph.shapes
    }

    pub fn input_dim(&self) -> usize {
        self.graph.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.graph.widths.last().expect("graph has an output")
    }

    pub fn n_params(&self) -> usize {
        self.graph.shapes.iter().map(|(r, c)| r * c).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input of length {}", self.input_dim()),
                got: format!("length {}", x.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    fn run(&self, x: &DMatrix<f64>) -> Tape {
        let n = x.ncols();
        let mut values: Vec<DMatrix<f64>> = Vec::with_capacity(self.graph.widths.len());
        let mut pre = Vec::with_capacity(self.graph.widths.len());
        values.push(x.clone());
        pre.push(Vec::new());
        for i in 1..self.graph.widths.len() {
            let mut acc = DMatrix::zeros(self.graph.widths[i], n);
            let mut node_pre = Vec::with_capacity(self.graph.terms[i].len());
            for term in &self.graph.terms[i] {
                match *term {
                    Term::Identity { src } => {
                        acc += &values[src];
                        node_pre.push(None);
                    }
                    Term::Linear { src, weight, relu } => {
                        let z = &self.weights[weight] * &values[src];
                        if relu {
                            acc.zip_apply(&z, |a, b| *a += b.max(0.0));
                            node_pre.push(Some(z));
                        } else {
                            acc += &z;
                            node_pre.push(None);
                        }
                    }
                }
            }
            values.push(acc);
            pre.push(node_pre);
        }
        Tape { values, pre }
    }

    /// Reverse pass. Returns the input gradient and, if requested, weight gradients.
    /// ReLU derivative at an exactly zero pre-activation is taken as 0.
    fn backward(
        &self,
        tape: &Tape,
        grad_out: DMatrix<f64>,
        want_weights: bool,
    ) -> (DMatrix<f64>, Option<Vec<DMatrix<f64>>>) {
        let n_nodes = self.graph.widths.len();
        let n = grad_out.ncols();
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; n_nodes];
        grads[n_nodes - 1] = Some(grad_out);
        let mut wgrads = want_weights.then(|| {
            self.graph
                .shapes
                .iter()
                .map(|&(r, c)| DMatrix::zeros(r, c))
                .collect::<Vec<_>>()
        });
        for i in (1..n_nodes).rev() {
            let Some(g) = grads[i].take() else { continue };
            for (t, term) in self.graph.terms[i].iter().enumerate() {
                let (src, contrib) = match *term {
                    Term::Identity { src } => (src, g.clone()),
                    Term::Linear { src, weight, relu } => {
                        let gz = if relu {
                            let z = tape.pre[i][t].as_ref().expect("relu pre-activation");
                            g.zip_map(z, |a, b| if b > 0.0 { a } else { 0.0 })
                        } else {
                            g.clone()
                        };
                        if let Some(w) = wgrads.as_mut() {
                            w[weight] += &gz * tape.values[src].transpose();
                        }
                        (src, self.weights[weight].tr_mul(&gz))
                    }
                };
                match grads[src].as_mut() {
                    Some(acc) => *acc += contrib,
                    None => grads[src] = Some(contrib),
                }
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| DMatrix::zeros(self.input_dim(), n));
        (input, wgrads)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let out = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x));
        Ok(out.as_slice().to_vec())
    }

    /// Logits for a batch given as columns.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.run(x).values.pop().expect("output node")
    }

    /// Gradient of the reduced output, `d reduce(f(x)) / dx`.
    pub fn data_jacobian(&self, x: &[f64], reduce: OutputReduce) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let j = self.data_jacobians(&DMatrix::from_column_slice(x.len(), 1, x), reduce);
        Ok(j.as_slice().to_vec())
    }

    /// Column `i` is the data Jacobian at column `i` of `x`.
    pub fn data_jacobians(&self, x: &DMatrix<f64>, reduce: OutputReduce) -> DMatrix<f64> {
        let tape = self.run(x);
        let out = tape.values.last().expect("output node");
        let seed = match reduce {
            OutputReduce::L1 => out.map(sign),
            OutputReduce::Sum => DMatrix::from_element(out.nrows(), out.ncols(), 1.0),
        };
        self.backward(&tape, seed, false).0
    }

    /// Jacobian of the full output vector, `n_classes x input_dim`.
    pub fn full_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let c = self.output_dim();
        let xs = DMatrix::from_fn(x.len(), c, |r, _| x[r]);
        let tape = self.run(&xs);
        let (jt, _) = self.backward(&tape, DMatrix::identity(c, c), false);
        Ok(jt.transpose())
    }

    /// Smallest non-zero |pre-activation| or |output| at `x`. Exact zeros only
    /// arise from inputs that are identically zero around `x`, so they do not
    /// bound the linear region.
    pub fn activation_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let tape = self.run(&DMatrix::from_column_slice(x.len(), 1, x));
        let mut margin = f64::INFINITY;
        let outs = tape.values.last().expect("output node").iter();
        let pres = tape.pre.iter().flatten().flatten().flat_map(|m| m.iter());
        for &v in outs.chain(pres) {
            if v != 0.0 {
                margin = margin.min(v.abs());
            }
        }
        Ok(margin)
    }

    /// Trains with momentum SGD on softmax cross-entropy. A checkpoint is kept
    /// before the first epoch and after every epoch.
    pub fn train(&self, data: &Splits, cfg: &TrainConfig) -> Result<TrainOutcome> {
        cfg.validate()?;
        let train = &data.train;
        let xt = train.inputs.transpose();
        let n = train.len();
        let steps_per_epoch = n.div_ceil(cfg.batch_size);
        let total_steps = (cfg.epochs * steps_per_epoch).max(1);
        let mut net = self.clone();
        let mut velocity: Vec<DMatrix<f64>> = net
            .graph
            .shapes
            .iter()
            .map(|&(r, c)| DMatrix::zeros(r, c))
            .collect();
        let mut checkpoints = vec![net.weights.clone()];
        let mut curve = Vec::with_capacity(cfg.epochs.max(1));
        let mut order: Vec<usize> = (0..n).collect();
        let mut step = 0;

        if cfg.epochs == 0 {
            curve.push(test_accuracy(&net, &data.test));
        }
        for epoch in 0..cfg.epochs {
            let mut rng = rng_for("net.train", &[cfg.seed, epoch as u64]);
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let x = DMatrix::from_fn(xt.nrows(), batch.len(), |r, c| xt[(r, batch[c])]);
                let tape = net.run(&x);
                let logits = tape.values.last().expect("output node");
                let (loss, grad) = softmax_xent(logits, batch.iter().map(|&i| train.labels[i]));
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                let (_, wgrads) = net.backward(&tape, grad, true);
                let lr = cfg.lr
                    * 0.5
                    * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos());
                for ((w, v), g) in net
                    .weights
                    .iter_mut()
                    .zip(velocity.iter_mut())
                    .zip(wgrads.expect("weight gradients"))
                {
                    *v *= cfg.momentum;
                    *v += g;
                    *w -= &*v * lr;
                }
                step += 1;
            }
            if net.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch });
            }
            checkpoints.push(net.weights.clone());
            curve.push(test_accuracy(&net, &data.test));
        }
        Ok(TrainOutcome {
            params: net,
            curve: AccuracyCurve { per_epoch: curve },
            checkpoints,
        })
    }
}

fn check_shapes(shapes: &[(usize, usize)], weights: &[DMatrix<f64>]) -> Result<()> {
    let got: Vec<(usize, usize)> = weights.iter().map(|w| w.shape()).collect();
    if got != shapes {
        return Err(Error::ShapeMismatch {
            expected: format!("{shapes:?}"),
            got: format!("{got:?}"),
        });
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean cross-entropy over columns and its gradient with respect to the logits.
fn softmax_xent(logits: &DMatrix<f64>, labels: impl Iterator<Item = usize>) -> (f64, DMatrix<f64>) {
    let b = logits.ncols() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut col, label) in grad.column_iter_mut().zip(labels) {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let z = col.sum();
        loss -= (col[label] / z).ln();
        col /= z;
        col[label] -= 1.0;
        col /= b;
    }
    (loss / b, grad)
}

fn argmax(col: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in col.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Fraction of samples whose argmax logit (ties to the lowest class) matches the label.
pub fn test_accuracy(p: &NetworkParams, d: &Dataset) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let logits = p.forward_batch(&d.inputs.transpose());
    let correct = logits
        .column_iter()
        .zip(&d.labels)
        .filter(|(col, &label)| argmax(col.iter().copied()) == label)
        .count();
    correct as f64 / d.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Rows of `inputs` are unit-norm samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub split: Split,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Seed of the teacher network that labels every generated dataset.
pub const TEACHER_SEED: u64 = 648;
const TEACHER_WIDTH: usize = 32;

/// Bias-free 16 -> 32 -> 32 -> 4 ReLU teacher.
pub fn teacher() -> NetworkParams {
    let space = SearchSpaceSpec {
        layout: Layout::Size(crate::space::SizeSpec {
            n_layers: 2,
            width_choices: vec![TEACHER_WIDTH],
        }),
        input_dim: crate::space::INPUT_DIM,
        n_classes: crate::space::N_CLASSES,
    };
    let g = Genotype::new(crate::space::Family::Size, vec![0, 0]);
    NetworkParams::instantiate(&space, &g, TEACHER_SEED).expect("teacher genotype is valid")
}

/// Inputs uniform on the unit sphere, labelled by the teacher's argmax.
pub fn gen_dataset(seed: u64, n_train: usize, n_test: usize) -> Splits {
    let teacher = teacher();
    let d = teacher.input_dim();
    let mut rng = rng_for("net.dataset", &[seed]);
    let mut make = |n: usize, split: Split| {
        let mut inputs = DMatrix::zeros(n, d);
        for i in 0..n {
            let v: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let v = &v / v.norm();
            inputs.set_row(i, &v.transpose());
        }
        let logits = teacher.forward_batch(&inputs.transpose());
        let labels = logits
            .column_iter()
            .map(|c| argmax(c.iter().copied()))
            .collect();
        Dataset {
            inputs,
            labels,
            split,
            seed,
        }
    };
    let train = make(n_train, Split::Train);
    let test = make(n_test, Split::Test);
    Splits { train, test }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 128,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "train config needs lr > 0 and batch_size >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Test accuracy after each epoch. A zero-epoch run holds the initial accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyCurve {
    pub per_epoch: Vec<f64>,
}

impl AccuracyCurve {
    pub fn final_test_accuracy(&self) -> f64 {
        *self.per_epoch.last().expect("curve is never empty")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub curve: AccuracyCurve,
    /// Weights before training, then after each epoch.
    pub checkpoints: Vec<Vec<DMatrix<f64>>>,
}
