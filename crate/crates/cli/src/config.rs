//! `key=value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cenas_core::{Family, OutputReduce, SearchSpaceSpec};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceChoice {
    Topology,
    Size,
    Both,
}

impl SpaceChoice {
    pub fn name(self) -> &'static str {
        match self {
            SpaceChoice::Topology => "topology",
            SpaceChoice::Size => "size",
            SpaceChoice::Both => "both",
        }
    }

    pub fn families(self) -> Vec<Family> {
        match self {
            SpaceChoice::Topology => vec![Family::Topology],
            SpaceChoice::Size => vec![Family::Size],
            SpaceChoice::Both => vec![Family::Topology, Family::Size],
        }
    }

    pub fn spaces(self) -> Vec<SearchSpaceSpec> {
        self.families().into_iter().map(SearchSpaceSpec::standard).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub space: SpaceChoice,
    pub probe_count: usize,
    pub probe_seed: u64,
    pub k: usize,
    pub normalized: bool,
    pub output_reduce: OutputReduce,
    pub n_views: usize,
    pub temperature: f64,
    pub batch_size: usize,
    pub d_embed: usize,
    pub d_proj: usize,
    pub encoder_steps: usize,
    pub encoder_seed: u64,
    pub train_epochs: usize,
    pub bench_seeds: usize,
    pub search_budget: usize,
    pub search_seeds: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: SpaceChoice::Topology,
            probe_count: 32,
            probe_seed: 0,
            k: 8,
            normalized: false,
            output_reduce: OutputReduce::L1,
            n_views: 4,
            temperature: 0.1,
            batch_size: 512,
            d_embed: 32,
            d_proj: 32,
            encoder_steps: 400,
            encoder_seed: 0,
            train_epochs: 40,
            bench_seeds: 1,
            search_budget: 100,
            search_seeds: 20,
            out_dir: PathBuf::from("out"),
        }
    }
}

pub const KEYS: [&str; 18] = [
    "space",
    "probe_count",
    "probe_seed",
    "k",
    "normalized",
    "output_reduce",
    "n_views",
    "temperature",
    "batch_size",
    "d_embed",
    "d_proj",
    "encoder_steps",
    "encoder_seed",
    "train_epochs",
    "bench_seeds",
    "search_budget",
    "search_seeds",
    "out_dir",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| CliError::Config(format!("{key}={v}: {e}")))
}

impl ExperimentConfig {
    /// Parses config text. `#` starts a comment; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = ExperimentConfig::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if seen.contains(&key) {
                return Err(CliError::Config(format!("line {}: key {key:?} given twice", n + 1)));
            }
            seen.push(key);
            match key {
                "space" => {
                    c.space = match v {
                        "topology" => SpaceChoice::Topology,
                        "size" => SpaceChoice::Size,
                        "both" => SpaceChoice::Both,
                        _ => return Err(CliError::Config(format!("space must be topology, size or both, got {v:?}"))),
                    }
                }
                "probe_count" => c.probe_count = parse_num(key, v)?,
                "probe_seed" => c.probe_seed = parse_num(key, v)?,
                "k" => c.k = parse_num(key, v)?,
                "normalized" => c.normalized = parse_num(key, v)?,
                "output_reduce" => {
                    c.output_reduce = v.parse().map_err(|e: cenas_core::Error| CliError::Config(e.to_string()))?
                }
                "n_views" => c.n_views = parse_num(key, v)?,
                "temperature" => c.temperature = parse_num(key, v)?,
                "batch_size" => c.batch_size = parse_num(key, v)?,
                "d_embed" => c.d_embed = parse_num(key, v)?,
                "d_proj" => c.d_proj = parse_num(key, v)?,
                "encoder_steps" => c.encoder_steps = parse_num(key, v)?,
                "encoder_seed" => c.encoder_seed = parse_num(key, v)?,
                "train_epochs" => c.train_epochs = parse_num(key, v)?,
                "bench_seeds" => c.bench_seeds = parse_num(key, v)?,
                "search_budget" => c.search_budget = parse_num(key, v)?,
                "search_seeds" => c.search_seeds = parse_num(key, v)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                _ => unreachable!("key list is exhaustive"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::Missing(path.to_path_buf()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.k == 0 || self.k > self.probe_count.min(cenas_core::space::INPUT_DIM) {
            return bad(format!(
                "k must be in 1..={}, got {}",
                self.probe_count.min(cenas_core::space::INPUT_DIM),
                self.k
            ));
        }
        if self.n_views < 2 {
            return bad(format!("n_views must be at least 2, got {}", self.n_views));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        for (name, v) in [
            ("probe_count", self.probe_count),
            ("d_embed", self.d_embed),
            ("d_proj", self.d_proj),
            ("train_epochs", self.train_epochs),
            ("bench_seeds", self.bench_seeds),
            ("search_budget", self.search_budget),
            ("search_seeds", self.search_seeds),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }

    fn lines(&self, with_out_dir: bool) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        put("space", self.space.name().into());
        put("probe_count", self.probe_count.to_string());
        put("probe_seed", self.probe_seed.to_string());
        put("k", self.k.to_string());
        put("normalized", self.normalized.to_string());
        put("output_reduce", self.output_reduce.name().into());
        put("n_views", self.n_views.to_string());
        put("temperature", self.temperature.to_string());
        put("batch_size", self.batch_size.to_string());
        put("d_embed", self.d_embed.to_string());
        put("d_proj", self.d_proj.to_string());
        put("encoder_steps", self.encoder_steps.to_string());
        put("encoder_seed", self.encoder_seed.to_string());
        put("train_epochs", self.train_epochs.to_string());
        put("bench_seeds", self.bench_seeds.to_string());
        put("search_budget", self.search_budget.to_string());
        put("search_seeds", self.search_seeds.to_string());
        if with_out_dir {
            put("out_dir", self.out_dir.display().to_string());
        }
        s
    }

    /// Every key with its effective value, in a fixed order.
    pub fn resolved(&self) -> String {
        self.lines(true)
    }

    /// SHA-256 of the resolved settings, leaving out `out_dir` so moving an
    /// experiment does not change its identity.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.lines(false).as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").expect("string write");
            s
        })
    }

    pub fn header(&self) -> String {
        format!("# config-hash: {}\n", self.hash())
    }

    pub fn contrastive(&self) -> cenas_core::ContrastiveConfig {
        cenas_core::ContrastiveConfig {
            temperature: self.temperature,
            batch_size: self.batch_size,
            n_views: self.n_views,
            steps: self.encoder_steps,
            seed: self.encoder_seed,
            k: self.k,
            d_embed: self.d_embed,
            d_proj: self.d_proj,
            ..cenas_core::ContrastiveConfig::default()
        }
    }
}
