//! File layout under the output directory, and readers/writers for each artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cenas_core::jacobian::Provenance;
use cenas_core::{store, Epdjm, Family, Genotype, OutputReduce, SearchSpaceSpec, TabularBenchmark, ViewStore};

use crate::config::ExperimentConfig;
use crate::{CliError, CliResult};

/// Paths of every artifact, relative to one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.resolved")
    }
    pub fn bench(&self, f: Family) -> PathBuf {
        self.root.join(format!("bench_{}.jsonl", f.name()))
    }
    pub fn bench_manifest(&self, f: Family) -> PathBuf {
        self.root.join(format!("bench_{}.manifest", f.name()))
    }
    pub fn views(&self, f: Family) -> PathBuf {
        self.root.join(format!("views_{}", f.name()))
    }
    pub fn encoder(&self) -> PathBuf {
        self.root.join("encoder")
    }
    pub fn encoder_loss(&self) -> PathBuf {
        self.root.join("encoder_loss.csv")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.csv")
    }
    pub fn search(&self, f: Family, method: &str, seed: u64) -> PathBuf {
        self.root.join("search").join(f.name()).join(format!("{method}_{seed}.csv"))
    }
    pub fn predict(&self) -> PathBuf {
        self.root.join("predict.csv")
    }
    pub fn transfer(&self) -> PathBuf {
        self.root.join("transfer.csv")
    }
    pub fn transfer_pvalues(&self) -> PathBuf {
        self.root.join("transfer_pvalues.csv")
    }
    pub fn trace_dir(&self, f: Family) -> PathBuf {
        self.root.join("trace").join(f.name())
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn report_tests(&self) -> PathBuf {
        self.root.join("report_tests.csv")
    }
}

pub fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

/// Writes `header` then `body`, creating parent directories.
pub fn write_text(path: &Path, header: &str, body: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{header}{body}"))?;
    Ok(())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    require(path)?;
    Ok(fs::read_to_string(path)?)
}

/// `key=value` lines of a manifest, comments skipped.
pub fn manifest_fields(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

fn field<T: std::str::FromStr>(fields: &BTreeMap<String, String>, key: &str, path: &Path) -> CliResult<T> {
    fields
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Artifact(format!("{}: missing or bad `{key}`", path.display())))
}

pub fn read_bench(layout: &Layout, f: Family) -> CliResult<TabularBenchmark> {
    let path = layout.bench(f);
    require(&path)?;
    Ok(TabularBenchmark::read(&path)?)
}

fn view_file(dir: &Path, g: &Genotype, seed: usize) -> PathBuf {
    dir.join(format!("{g}_{seed}.epdj"))
}

/// The fields a view store was computed with; consumers compare them
/// against the current config.
fn views_manifest(cfg: &ExperimentConfig, space: &SearchSpaceSpec, stored: usize, degenerate: usize) -> String {
    format!(
        "space={}\nprobe_count={}\nprobe_seed={}\nk={}\nnormalized={}\noutput_reduce={}\nn_views={}\ngenotypes={stored}\ndegenerate={degenerate}\n",
        space.family().name(),
        cfg.probe_count,
        cfg.probe_seed,
        cfg.k,
        cfg.normalized,
        cfg.output_reduce.name(),
        cfg.n_views,
    )
}

pub fn save_views(layout: &Layout, cfg: &ExperimentConfig, space: &SearchSpaceSpec, views: &ViewStore) -> CliResult<()> {
    let dir = layout.views(space.family());
    fs::create_dir_all(&dir)?;
    for entry in fs::read_dir(&dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "epdj") {
            fs::remove_file(p)?;
        }
    }
    for (g, vs) in &views.views {
        for (seed, e) in vs.iter().enumerate() {
            store::write_matrix(&view_file(&dir, g, seed), &e.matrix, e.normalized)?;
        }
    }
    let header = cfg.header();
    let manifest = views_manifest(cfg, space, views.len(), views.degenerate.len());
    write_text(&dir.join("manifest.txt"), &header, &manifest)?;
    let listed: String = views.degenerate.iter().map(|g| format!("{g}\n")).collect();
    write_text(&dir.join("degenerate.txt"), &header, &listed)
}

/// Reads a view store back and checks that it matches `cfg`.
pub fn load_views(layout: &Layout, cfg: &ExperimentConfig, space: &SearchSpaceSpec) -> CliResult<ViewStore> {
    let dir = layout.views(space.family());
    let manifest_path = dir.join("manifest.txt");
    let text = read_text(&manifest_path)?;
    let expected = views_manifest(cfg, space, 0, 0);
    let fields = manifest_fields(&text);
    for (k, v) in manifest_fields(&expected) {
        if k == "genotypes" || k == "degenerate" {
            continue;
        }
        if fields.get(&k) != Some(&v) {
            return Err(CliError::Config(format!(
                "{} was written with {k}={}, config has {k}={v}; rerun compute-epdjm",
                manifest_path.display(),
                fields.get(&k).map_or("<unset>", String::as_str)
            )));
        }
    }
    let degenerate_path = dir.join("degenerate.txt");
    let degenerate = read_text(&degenerate_path)?
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| space.parse_genotype(l.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let n_views: usize = field(&fields, "n_views", &manifest_path)?;
    let reduce: OutputReduce = field(&fields, "output_reduce", &manifest_path)?;
    let mut views = BTreeMap::new();
    for g in space.enumerate() {
        if degenerate.contains(&g) {
            continue;
        }
        let mut vs = Vec::with_capacity(n_views);
        for seed in 0..n_views {
            let path = view_file(&dir, &g, seed);
            require(&path)?;
            let (matrix, normalized) = store::read_matrix(&path)?;
            vs.push(Epdjm {
                matrix,
                normalized,
                provenance: Some(Provenance {
                    genotype: g.clone(),
                    init_seed: seed as u64,
                    probe_seed: cfg.probe_seed,
                    reduce,
                }),
            });
        }
        views.insert(g, vs);
    }
    Ok(ViewStore {
        views,
        n_views,
        k: cfg.k,
        normalized: cfg.normalized,
        probe_seed: cfg.probe_seed,
        reduce,
        degenerate,
    })
}

/// One row per (genotype, view). Floats use the shortest round-trip form.
pub fn write_embeddings(path: &Path, header: &str, rows: &[(Genotype, usize, Vec<f64>)]) -> CliResult<()> {
    let d = rows.first().map_or(0, |r| r.2.len());
    let mut s = String::from("genotype,view");
    for i in 0..d {
        write!(s, ",e{i}").expect("string write");
    }
    s.push('\n');
    for (g, view, v) in rows {
        write!(s, "{g},{view}").expect("string write");
        for x in v {
            write!(s, ",{x}").expect("string write");
        }
        s.push('\n');
    }
    write_text(path, header, &s)
}

/// Embeddings by genotype, each a list indexed by view.
pub type EmbeddingTable = BTreeMap<Genotype, Vec<Vec<f64>>>;

pub fn read_embeddings(path: &Path) -> CliResult<EmbeddingTable> {
    let text = read_text(path)?;
    let bad = |n: usize, why: &str| CliError::Artifact(format!("{} line {}: {why}", path.display(), n + 1));
    let mut out: EmbeddingTable = BTreeMap::new();
    let mut seen_header = false;
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if !line.starts_with("genotype,view") {
                return Err(bad(n, "missing header"));
            }
            seen_header = true;
            continue;
        }
        let mut f = line.split(',');
        let g = Genotype::parse(f.next().unwrap_or("")).map_err(|_| bad(n, "bad genotype"))?;
        let view: usize = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(n, "bad view"))?;
        let values = f.map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad(n, "bad value"))?;
        let slot = out.entry(g).or_default();
        if slot.len() != view {
            return Err(bad(n, "views out of order"));
        }
        slot.push(values);
    }
    Ok(out)
}

/// View-0 embeddings of the genotypes in `space`.
pub fn primary_embeddings(table: &EmbeddingTable, space: &SearchSpaceSpec) -> BTreeMap<Genotype, Vec<f64>> {
    table
        .iter()
        .filter(|(g, _)| space.contains(g))
        .map(|(g, v)| (g.clone(), v[0].clone()))
        .collect()
}

/// Search log for one method and seed.
pub fn read_search_log(layout: &Layout, f: Family, method: &str, seed: u64) -> CliResult<cenas_core::SearchLog> {
    let path = layout.search(f, method, seed);
    let text = read_text(&path)?;
    cenas_core::SearchLog::from_csv(method, seed, &text).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_roundtrip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let g = Genotype::parse("S-01210").unwrap();
        let rows = vec![
            (g.clone(), 0, vec![0.1, -1.0 / 3.0, 1e-300]),
            (g.clone(), 1, vec![f64::MIN_POSITIVE, 2.0, -0.0]),
        ];
        write_embeddings(&path, "# config-hash: x\n", &rows).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back[&g][0], rows[0].2);
        assert_eq!(back[&g][1], rows[1].2);
    }

    #[test]
    fn missing_file_is_named() {
        let err = read_text(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("/nonexistent/x.csv"));
    }
}
