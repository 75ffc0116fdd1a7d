//! Search-space families and genotypes.
//!
//! Two families are supported. A topology space stacks a residual DAG cell
//! whose edges each choose an operation; a size space is a chain of
//! ReLU layers whose widths are chosen per position. Genotypes print as a
//! family letter, a dash, and one digit per gene: `T-012012`, `S-01210`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    Topology,
    Size,
}

impl Family {
    pub fn letter(self) -> char {
        match self {
            Family::Topology => 'T',
            Family::Size => 'S',
        }
    }

    pub fn from_letter(c: char) -> Option<Family> {
        match c {
            'T' => Some(Family::Topology),
            'S' => Some(Family::Size),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Topology => "topology",
            Family::Size => "size",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topology" => Ok(Family::Topology),
            "size" => Ok(Family::Size),
            other => Err(Error::InvalidConfig(format!("unknown space {other:?}"))),
        }
    }
}

/// Operation on a cell edge. Gene value = index into the space's op list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeOp {
    Zero,
    Identity,
    LinearRelu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopologySpec {
    pub n_nodes: usize,
    pub edge_ops: Vec<EdgeOp>,
    pub cell_stack_count: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeSpec {
    pub n_layers: usize,
    pub width_choices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    Topology(TopologySpec),
    Size(SizeSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpaceSpec {
    pub layout: Layout,
    pub input_dim: usize,
    pub n_classes: usize,
}

pub const INPUT_DIM: usize = 16;
pub const N_CLASSES: usize = 4;

impl SearchSpaceSpec {
    /// 4-node cell, 6 edges over {Zero, Identity, LinearReLU}, stacked twice at width 16.
    pub fn topology() -> Self {
        SearchSpaceSpec {
            layout: Layout::Topology(TopologySpec {
                n_nodes: 4,
                edge_ops: vec![EdgeOp::Zero, EdgeOp::Identity, EdgeOp::LinearRelu],
                cell_stack_count: 2,
                width: 16,
            }),
            input_dim: INPUT_DIM,
            n_classes: N_CLASSES,
        }
    }

    /// Five ReLU layers, each of width 4, 8 or 16.
    pub fn size() -> Self {
        SearchSpaceSpec {
            layout: Layout::Size(SizeSpec {
                n_layers: 5,
                width_choices: vec![4, 8, 16],
            }),
            input_dim: INPUT_DIM,
            n_classes: N_CLASSES,
        }
    }

    pub fn standard(family: Family) -> Self {
        match family {
            Family::Topology => Self::topology(),
            Family::Size => Self::size(),
        }
    }

    pub fn family(&self) -> Family {
        match self.layout {
            Layout::Topology(_) => Family::Topology,
            Layout::Size(_) => Family::Size,
        }
    }

    pub fn n_genes(&self) -> usize {
        match &self.layout {
            Layout::Topology(t) => t.n_nodes * (t.n_nodes - 1) / 2,
            Layout::Size(s) => s.n_layers,
        }
    }

    pub fn n_choices(&self) -> usize {
        match &self.layout {
            Layout::Topology(t) => t.edge_ops.len(),
            Layout::Size(s) => s.width_choices.len(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.n_choices().pow(self.n_genes() as u32)
    }

    /// Cell edges `(from, to)` in gene order: grouped by target node, then by source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match &self.layout {
            Layout::Topology(t) => (1..t.n_nodes)
                .flat_map(|to| (0..to).map(move |from| (from, to)))
                .collect(),
            Layout::Size(_) => Vec::new(),
        }
    }

    /// All genotypes in lexicographic gene order.
    pub fn enumerate(&self) -> Vec<Genotype> {
        let n = self.n_genes();
        let c = self.n_choices();
        let family = self.family();
        (0..self.cardinality())
            .map(|mut idx| {
                let mut genes = vec![0u8; n];
                for slot in genes.iter_mut().rev() {
                    *slot = (idx % c) as u8;
                    idx /= c;
                }
                Genotype { family, genes }
            })
            .collect()
    }

    pub fn sample_random(&self, seed: u64) -> Genotype {
        let mut rng = rng_for("space.sample", &[seed]);
        let c = self.n_choices();
        let genes = (0..self.n_genes())
            .map(|_| rng.random_range(0..c) as u8)
            .collect();
        Genotype {
            family: self.family(),
            genes,
        }
    }

    /// Reassigns one uniformly chosen gene to a uniformly chosen different value.
    /// Spaces with a single choice per gene have nothing to mutate to.
    pub fn mutate(&self, g: &Genotype, seed: u64) -> Genotype {
        let c = self.n_choices();
        let mut out = g.clone();
        if c < 2 || g.genes.is_empty() {
            return out;
        }
        let mut rng = rng_for("space.mutate", &[seed]);
        let pos = rng.random_range(0..g.genes.len());
        let shift = rng.random_range(1..c);
        out.genes[pos] = ((usize::from(g.genes[pos]) + shift) % c) as u8;
        out
    }

    /// Concatenated per-gene one-hot blocks.
    pub fn encode_onehot(&self, g: &Genotype) -> Vec<f64> {
        let c = self.n_choices();
        let mut v = vec![0.0; g.genes.len() * c];
        for (i, &gene) in g.genes.iter().enumerate() {
            v[i * c + usize::from(gene)] = 1.0;
        }
        v
    }

    pub fn contains(&self, g: &Genotype) -> bool {
        g.family == self.family()
            && g.genes.len() == self.n_genes()
            && g.genes.iter().all(|&x| usize::from(x) < self.n_choices())
    }

    /// Parses a genotype string and checks it against this space.
    pub fn parse_genotype(&self, s: &str) -> Result<Genotype> {
        let g = parse_shape(s)?;
        if !self.contains(&g) {
            return Err(Error::MalformedGenotype(s.to_string()));
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Genotype {
    pub family: Family,
    pub genes: Vec<u8>,
}

impl Genotype {
    pub fn new(family: Family, genes: Vec<u8>) -> Self {
        Genotype { family, genes }
    }

    pub fn parse(s: &str) -> Result<Genotype> {
        s.parse()
    }
}

fn parse_shape(s: &str) -> Result<Genotype> {
    let bad = || Error::MalformedGenotype(s.to_string());
    let mut chars = s.chars();
    let family = chars.next().and_then(Family::from_letter).ok_or_else(bad)?;
    if chars.next() != Some('-') {
        return Err(bad());
    }
    let genes = chars
        .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(bad))
        .collect::<Result<Vec<u8>>>()?;
    if genes.is_empty() {
        return Err(bad());
    }
    Ok(Genotype { family, genes })
}

impl FromStr for Genotype {
    type Err = Error;

    /// Parses against the standard space of the family letter.
    fn from_str(s: &str) -> Result<Self> {
        let g = parse_shape(s)?;
        SearchSpaceSpec::standard(g.family).parse_genotype(s)
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-", self.family.letter())?;
        for g in &self.genes {
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Orders like the string form: family letter first, then genes.
impl Ord for Genotype {
    fn cmp(&self, other: &Self) -> Ordering {
        self.family
            .letter()
            .cmp(&other.family.letter())
            .then_with(|| self.genes.cmp(&other.genes))
    }
}

impl PartialOrd for Genotype {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn cardinalities() {
        assert_eq!(SearchSpaceSpec::topology().enumerate().len(), 729);
        assert_eq!(SearchSpaceSpec::size().enumerate().len(), 243);
        let debug = SearchSpaceSpec {
            layout: Layout::Topology(TopologySpec {
                n_nodes: 2,
                edge_ops: vec![EdgeOp::LinearRelu],
                cell_stack_count: 1,
                width: 2,
            }),
            input_dim: 2,
            n_classes: 2,
        };
        assert_eq!(debug.enumerate().len(), 1);
    }

    #[test]
    fn edge_order_is_fixed() {
        assert_eq!(
            SearchSpaceSpec::topology().edges(),
            vec![(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]
        );
    }

    #[test]
    fn enumerate_is_sorted_and_unique() {
        for space in [SearchSpaceSpec::topology(), SearchSpaceSpec::size()] {
            let all = space.enumerate();
            assert!(all.windows(2).all(|w| w[0] < w[1]));
            let strings: Vec<String> = all.iter().map(|g| g.to_string()).collect();
            assert!(strings.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn format_and_parse() {
        let g = Genotype::new(Family::Topology, vec![0, 1, 2, 0, 1, 2]);
        assert_eq!(g.to_string(), "T-012012");
        assert_eq!(
            Genotype::parse("S-01210").unwrap(),
            Genotype::new(Family::Size, vec![0, 1, 2, 1, 0])
        );
        for bad in ["T-9", "X-012012", "T012012", "T-01201", "S-01213", "T-", ""] {
            assert!(matches!(
                Genotype::parse(bad),
                Err(Error::MalformedGenotype(_))
            ));
        }
    }

    #[test]
    fn parse_format_roundtrip_exhaustive() {
        let mut n = 0;
        for space in [SearchSpaceSpec::topology(), SearchSpaceSpec::size()] {
            for g in space.enumerate() {
                assert_eq!(Genotype::parse(&g.to_string()).unwrap(), g);
                n += 1;
            }
        }
        assert_eq!(n, 972);
    }

    #[test]
    fn sampling_is_deterministic_and_uniform() {
        let space = SearchSpaceSpec::topology();
        assert_eq!(space.sample_random(11), space.sample_random(11));

        let draws = 10_000;
        let mut counts: HashMap<Genotype, usize> = HashMap::new();
        for s in 0..draws {
            *counts.entry(space.sample_random(s)).or_default() += 1;
        }
        let p = 1.0 / 729.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for g in space.enumerate() {
            let c = *counts.get(&g).unwrap_or(&0) as f64;
            assert!((c - mean).abs() <= 5.0 * sd, "{g}: {c}");
        }

        let differ = (0..1000)
            .filter(|&s| space.sample_random(s) != space.sample_random(s + 1))
            .count();
        // expected 998.6 differing pairs out of 1000
        assert!(differ >= 995, "{differ}");
    }

    #[test]
    fn mutate_changes_exactly_one_gene() {
        let space = SearchSpaceSpec::topology();
        let g = Genotype::new(Family::Topology, vec![0; 6]);
        for seed in 0..200 {
            let m = space.mutate(&g, seed);
            assert_eq!(m.family, g.family);
            let diff = m.genes.iter().zip(&g.genes).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 1);
            assert!(space.contains(&m));
        }
    }

    #[test]
    fn mutation_walk_is_ergodic() {
        let space = SearchSpaceSpec::topology();
        let mut g = Genotype::new(Family::Topology, vec![0; 6]);
        let mut seen = HashSet::new();
        seen.insert(g.clone());
        for step in 0..100_000 {
            g = space.mutate(&g, step);
            assert!(space.contains(&g));
            seen.insert(g.clone());
        }
        assert_eq!(seen.len(), 729);
    }

    #[test]
    fn onehot_encoding() {
        let t = SearchSpaceSpec::topology();
        let v = t.encode_onehot(&Genotype::new(Family::Topology, vec![0; 6]));
        assert_eq!(v.len(), 18);
        assert_eq!(v, [1.0, 0.0, 0.0].repeat(6));
        let s = SearchSpaceSpec::size();
        assert_eq!(s.encode_onehot(&s.sample_random(3)).len(), 15);

        for space in [t, s] {
            let all = space.enumerate();
            let mut seen = HashSet::new();
            for g in &all {
                let v = space.encode_onehot(g);
                assert_eq!(v.iter().sum::<f64>(), space.n_genes() as f64);
                let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
                assert!(seen.insert(key));
            }
        }
    }
}
