//! Black-box search over embeddings.
//!
//! GP regression with a Matern-5/2 kernel (median-heuristic lengthscale, unit
//! signal variance, fixed noise), Expected Improvement for maximization, and
//! three search loops over a tabular accuracy table: SMBO, random search and
//! aging evolution. All loops share the same seeded initial design.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::benchmark::TabularBenchmark;
use crate::rng::rng_for;
use crate::space::{Genotype, SearchSpaceSpec};
use crate::{Error, Result};

/// Observation noise, in standardized units.
pub const NOISE: f64 = 1e-4;
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `s2 (1 + sqrt5 r / l + 5 r^2 / (3 l^2)) exp(-sqrt5 r / l)`.
pub fn matern52_r(r: f64, lengthscale: f64, signal_var: f64) -> f64 {
    let a = 5f64.sqrt() * r / lengthscale;
    signal_var * (1.0 + a + a * a / 3.0) * (-a).exp()
}

pub fn matern52(x1: &[f64], x2: &[f64], lengthscale: f64, signal_var: f64) -> f64 {
    matern52_r(euclidean(x1, x2), lengthscale, signal_var)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LengthscalePolicy {
    /// Median pairwise distance of the training inputs (1 if that is 0).
    Median,
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct GpState {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise: f64,
    pub jitter: f64,
    /// Lower-triangular factor of `K + (noise + jitter) I`.
    pub factor: DMatrix<f64>,
    alpha: DVector<f64>,
}

pub fn median_pairwise_distance(x: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in 0..i {
            d.push(euclidean(&x[i], &x[j]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}

pub fn gp_fit(x: &[Vec<f64>], y: &[f64], policy: LengthscalePolicy) -> Result<GpState> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("GP needs n >= 2 matching rows, got {n} and {}", y.len())));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidConfig("GP inputs must be finite rows of equal length".into()));
    }
    let lengthscale = match policy {
        LengthscalePolicy::Median => {
            let m = median_pairwise_distance(x);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
        LengthscalePolicy::Fixed(l) => l,
    };
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let y_std = if std < 1e-12 { 1.0 } else { std };
    let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));
    let signal_var = 1.0;
    let k = DMatrix::from_fn(n, n, |i, j| matern52(&x[i], &x[j], lengthscale, signal_var));

    let mut jitter = JITTER_START;
    loop {
        let mut kn = k.clone();
        for i in 0..n {
            kn[(i, i)] += NOISE + jitter;
        }
        if let Some(ch) = Cholesky::new(kn) {
            let alpha = ch.solve(&ys);
            return Ok(GpState {
                x: x.to_vec(),
                y: y.to_vec(),
                y_mean,
                y_std,
                lengthscale,
                signal_var,
                noise: NOISE,
                jitter,
                factor: ch.l(),
                alpha,
            });
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::Factorization);
        }
    }
}

impl GpState {
    /// Posterior `(mean, variance)` in the accuracy units of `y`.
    pub fn posterior(&self, xs: &[f64]) -> (f64, f64) {
        let (m, v) = self.posterior_standardized(xs);
        (self.y_mean + self.y_std * m, self.y_std * self.y_std * v)
    }

    pub fn posterior_standardized(&self, xs: &[f64]) -> (f64, f64) {
        let kstar = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(xi, xs, self.lengthscale, self.signal_var)),
        );
        let mean = kstar.dot(&self.alpha);
        let v = self
            .factor
            .solve_lower_triangular(&kstar)
            .expect("factor has a positive diagonal");
        let mut var = self.signal_var - v.dot(&v);
        if var < 0.0 {
            var = 0.0;
        }
        (mean, var)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement over `best` for maximization.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sigma;
    (sigma * (z * normal_cdf(z) + normal_pdf(z))).max(0.0)
}

/// Final accuracy per genotype at one training seed, plus the space it came from.
#[derive(Clone, Debug)]
pub struct AccuracyTable {
    pub space: SearchSpaceSpec,
    genotypes: Vec<Genotype>,
    accuracy: HashMap<Genotype, f64>,
}

impl AccuracyTable {
    pub fn from_benchmark(space: &SearchSpaceSpec, bench: &TabularBenchmark, seed: u64) -> Result<Self> {
        let genotypes = space.enumerate();
        let mut accuracy = HashMap::with_capacity(genotypes.len());
        for g in &genotypes {
            let a = bench
                .final_accuracy(g, seed)
                .ok_or_else(|| Error::Missing(format!("benchmark record {g} seed {seed}")))?;
            accuracy.insert(g.clone(), a);
        }
        Ok(AccuracyTable {
            space: space.clone(),
            genotypes,
            accuracy,
        })
    }

    pub fn from_fn(space: &SearchSpaceSpec, f: impl Fn(&Genotype) -> f64) -> Self {
        let genotypes = space.enumerate();
        let accuracy = genotypes.iter().map(|g| (g.clone(), f(g))).collect();
        AccuracyTable {
            space: space.clone(),
            genotypes,
            accuracy,
        }
    }

    /// The table restricted to genotypes for which `keep` holds.
    pub fn restrict(&self, keep: impl Fn(&Genotype) -> bool) -> AccuracyTable {
        let genotypes: Vec<Genotype> = self.genotypes.iter().filter(|g| keep(g)).cloned().collect();
        let accuracy = genotypes.iter().map(|g| (g.clone(), self.accuracy[g])).collect();
        AccuracyTable {
            space: self.space.clone(),
            genotypes,
            accuracy,
        }
    }

    /// Genotypes in canonical (sorted) order.
    pub fn genotypes(&self) -> &[Genotype] {
        &self.genotypes
    }

    pub fn contains(&self, g: &Genotype) -> bool {
        self.accuracy.contains_key(g)
    }

    pub fn accuracy(&self, g: &Genotype) -> f64 {
        self.accuracy[g]
    }

    pub fn len(&self) -> usize {
        self.genotypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genotypes.is_empty()
    }

    pub fn best(&self) -> f64 {
        self.accuracy.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchStep {
    pub step: usize,
    pub genotype: Genotype,
    pub accuracy: f64,
    pub best_so_far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SearchMethod {
    Smbo,
    Random,
    Evolution,
}

impl SearchMethod {
    pub fn name(self) -> &'static str {
        match self {
            SearchMethod::Smbo => "smbo",
            SearchMethod::Random => "random",
            SearchMethod::Evolution => "evolution",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchLog {
    pub method: String,
    pub seed: u64,
    pub steps: Vec<SearchStep>,
}

impl SearchLog {
    fn new(method: &str, seed: u64) -> Self {
        SearchLog {
            method: method.to_string(),
            seed,
            steps: Vec::new(),
        }
    }

    fn record(&mut self, g: Genotype, accuracy: f64) {
        let best = self.steps.last().map_or(accuracy, |s| s.best_so_far.max(accuracy));
        self.steps.push(SearchStep {
            step: self.steps.len(),
            genotype: g,
            accuracy,
            best_so_far: best,
        });
    }

    /// Best accuracy after `evals` evaluations.
    pub fn best_after(&self, evals: usize) -> f64 {
        self.steps[evals.min(self.steps.len()) - 1].best_so_far
    }

    pub fn best_curve(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.best_so_far).collect()
    }

    /// `step,genotype,accuracy,best_so_far`, accuracies with 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,genotype,accuracy,best_so_far\n");
        for r in &self.steps {
            writeln!(s, "{},{},{:.6},{:.6}", r.step, r.genotype, r.accuracy, r.best_so_far).expect("string write");
        }
        s
    }

    pub fn from_csv(method: &str, seed: u64, text: &str) -> Result<SearchLog> {
        let bad = |reason: String| Error::Format {
            path: format!("<{method} log, seed {seed}>").into(),
            reason,
        };
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        if lines.next() != Some("step,genotype,accuracy,best_so_far") {
            return Err(bad("missing header".into()));
        }
        let mut steps = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("bad row {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            steps.push(SearchStep {
                step: f[0].parse().map_err(|e| bad(format!("{e}")))?,
                genotype: Genotype::parse(f[1])?,
                accuracy: num(f[2])?,
                best_so_far: num(f[3])?,
            });
        }
        Ok(SearchLog {
            method: method.to_string(),
            seed,
            steps,
        })
    }
}

fn check_budget(table: &AccuracyTable, budget: usize) -> Result<()> {
    if budget == 0 || budget > table.len() {
        return Err(Error::BudgetExceedsSpace {
            budget,
            size: table.len(),
        });
    }
    Ok(())
}

/// Seeded permutation shared by all methods as their initial design.
fn initial_order(table: &AccuracyTable, seed: u64) -> Vec<Genotype> {
    let mut order = table.genotypes().to_vec();
    order.shuffle(&mut rng_for("search.init", &[seed]));
    order
}

/// Uniform sampling without replacement.
pub fn random_search(table: &AccuracyTable, budget: usize, seed: u64) -> Result<SearchLog> {
    check_budget(table, budget)?;
    let mut log = SearchLog::new(SearchMethod::Random.name(), seed);
    for g in initial_order(table, seed).into_iter().take(budget) {
        let a = table.accuracy(&g);
        log.record(g, a);
    }
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmboConfig {
    pub n_candidates: usize,
    pub n_init: usize,
}

impl Default for SmboConfig {
    fn default() -> Self {
        SmboConfig {
            n_candidates: 20,
            n_init: 5,
        }
    }
}

/// GP-EI search: `n_init` random evaluations, then each step fits a GP to all
/// observations and evaluates the EI-best of `n_candidates` unevaluated
/// genotypes drawn uniformly. EI ties go to the lowest genotype string.
pub fn smbo_search(
    table: &AccuracyTable,
    embeddings: &BTreeMap<Genotype, Vec<f64>>,
    budget: usize,
    cfg: SmboConfig,
    seed: u64,
) -> Result<SearchLog> {
    check_budget(table, budget)?;
    if let Some(g) = table.genotypes().iter().find(|g| !embeddings.contains_key(g)) {
        return Err(Error::Missing(format!("embedding for {g}")));
    }
    let mut log = SearchLog::new(SearchMethod::Smbo.name(), seed);
    let mut evaluated: BTreeSet<Genotype> = BTreeSet::new();
    for g in initial_order(table, seed).into_iter().take(cfg.n_init.min(budget)) {
        evaluated.insert(g.clone());
        let a = table.accuracy(&g);
        log.record(g, a);
    }
    while log.steps.len() < budget {
        let step = log.steps.len() as u64;
        let xs: Vec<Vec<f64>> = log.steps.iter().map(|s| embeddings[&s.genotype].clone()).collect();
        let ys: Vec<f64> = log.steps.iter().map(|s| s.accuracy).collect();
        let gp = gp_fit(&xs, &ys, LengthscalePolicy::Median)?;
        let best = log.steps.last().expect("initial design").best_so_far;

        let pool: Vec<&Genotype> = table.genotypes().iter().filter(|g| !evaluated.contains(*g)).collect();
        let mut rng = rng_for("search.smbo", &[seed, step]);
        let take = cfg.n_candidates.min(pool.len());
        let picks = rand::seq::index::sample(&mut rng, pool.len(), take);
        let mut choice: Option<(f64, &Genotype)> = None;
        for i in picks.iter() {
            let g = pool[i];
            let (m, v) = gp.posterior(&embeddings[g]);
            let ei = expected_improvement(m, v, best);
            choice = match choice {
                Some((best_ei, bg)) if best_ei > ei || (best_ei == ei && bg < g) => Some((best_ei, bg)),
                _ => Some((ei, g)),
            };
        }
        let g = choice.expect("pool is non-empty while budget remains").1.clone();
        evaluated.insert(g.clone());
        let a = table.accuracy(&g);
        log.record(g, a);
    }
    Ok(log)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub population: usize,
    pub sample: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population: 20,
            sample: 10,
        }
    }
}

/// Mutation attempts before falling back to a random unevaluated genotype.
const MAX_MUTATION_TRIES: u64 = 100;

/// Aging (regularized) evolution. A child that was already evaluated, or is
/// missing from the table, is re-mutated so no genotype is evaluated twice.
pub fn aging_evolution(
    table: &AccuracyTable,
    budget: usize,
    cfg: EvolutionConfig,
    seed: u64,
) -> Result<SearchLog> {
    check_budget(table, budget)?;
    if budget < cfg.population || cfg.sample == 0 || cfg.sample > cfg.population {
        return Err(Error::InvalidConfig(format!(
            "evolution needs sample <= population <= budget, got {cfg:?} with budget {budget}"
        )));
    }
    let space = &table.space;
    let mut log = SearchLog::new(SearchMethod::Evolution.name(), seed);
    let mut evaluated: BTreeSet<Genotype> = BTreeSet::new();
    let mut population: VecDeque<(Genotype, f64)> = VecDeque::with_capacity(cfg.population);
    for g in initial_order(table, seed).into_iter().take(cfg.population) {
        let a = table.accuracy(&g);
        evaluated.insert(g.clone());
        population.push_back((g.clone(), a));
        log.record(g, a);
    }
    while log.steps.len() < budget {
        let step = log.steps.len() as u64;
        let mut rng = rng_for("search.evolution", &[seed, step]);
        let contenders = rand::seq::index::sample(&mut rng, population.len(), cfg.sample);
        let parent = contenders
            .iter()
            .map(|i| &population[i])
            .fold(None::<&(Genotype, f64)>, |best, c| match best {
                Some(b) if b.1 > c.1 || (b.1 == c.1 && b.0 < c.0) => Some(b),
                _ => Some(c),
            })
            .expect("sample is non-empty")
            .0
            .clone();
        let mut child = None;
        for attempt in 0..MAX_MUTATION_TRIES {
            let c = space.mutate(&parent, crate::rng::derive_seed("search.mutate", &[seed, step, attempt]));
            if table.contains(&c) && !evaluated.contains(&c) {
                child = Some(c);
                break;
            }
        }
        let child = match child {
            Some(c) => c,
            None => {
                let pool: Vec<&Genotype> = table.genotypes().iter().filter(|g| !evaluated.contains(*g)).collect();
                let i = rand::seq::index::sample(&mut rng, pool.len(), 1).index(0);
                pool[i].clone()
            }
        };
        let a = table.accuracy(&child);
        evaluated.insert(child.clone());
        population.push_back((child.clone(), a));
        population.pop_front();
        log.record(child, a);
    }
    Ok(log)
}
