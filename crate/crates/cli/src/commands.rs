//! One function per subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;

use cenas_core::analysis::{
    evolution_trace, kendall_tau_b, mean_displacement, pca2d, permutation_p, predictive_power, transfer_all,
    wilcoxon_signed_rank, Alternative, ForestConfig, PredictiveReport, Source,
};
use cenas_core::benchmark::{bench_dataset, train_record, DATASET_SEED, N_TEST, N_TRAIN};
use cenas_core::encoder::{precompute_views, train_encoder};
use cenas_core::net::{test_accuracy, Splits};
use cenas_core::rng::{derive_seed, hash_str, rng_for};
use cenas_core::store;
use cenas_core::surrogate::{aging_evolution, random_search, smbo_search, EvolutionConfig, SearchMethod, SmboConfig};
use cenas_core::{
    AccuracyTable, BenchRecord, EncoderParams, Genotype, NetworkParams, ProbeSet, SearchLog, SearchSpaceSpec,
    TrainConfig, ViewStore,
};
use log::{info, warn};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::artifacts::{self, Layout};
use crate::config::{ExperimentConfig, SpaceChoice};
use crate::{CliError, CliResult};

/// Seeds and training-set size of the predictive-power study.
pub const PREDICT_SEEDS: u64 = 10;
pub const PREDICT_TRAIN: usize = 100;
pub const TRANSFER_SEEDS: u64 = 10;
pub const N_PERM: usize = 999;
/// Evaluations at which searches are compared.
pub const COMPARE_AT: usize = 30;
pub const TRACE_ARCHS: usize = 50;
/// Width, in epochs, of the early and late displacement windows.
pub const TRACE_WINDOW: usize = 5;
/// Benchmark cells trained between file flushes.
const BENCH_CHUNK: usize = 64;

pub const METHODS: [SearchMethod; 3] = [SearchMethod::Smbo, SearchMethod::Random, SearchMethod::Evolution];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Train every genotype and write the tabular benchmark.
    GenBench,
    /// Compute projected Jacobian views of every genotype.
    ComputeEpdjm,
    /// Train the contrastive encoder on the views.
    TrainEncoder,
    /// Embed every view with the trained encoder.
    Embed,
    /// Run SMBO, random search and aging evolution on the benchmark.
    Search,
    /// Score embeddings as accuracy predictors.
    Predict,
    /// Fit on one space and predict the other.
    Transfer,
    /// Follow embeddings of trained networks epoch by epoch.
    Trace,
    /// Aggregate search logs into best-so-far curves.
    Report,
    /// Every stage in order.
    Pipeline,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    layout: Layout,
    header: String,
}

/// Runs `cmd` on a pool of `jobs` workers (all cores when `None`).
pub fn run(cmd: Command, cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let cx = Ctx {
        cfg,
        layout: Layout::new(&cfg.out_dir),
        header: cfg.header(),
    };
    artifacts::write_text(&cx.layout.config(), &cx.header, &cfg.resolved())?;
    pool.install(|| dispatch(&cx, cmd))
}

fn dispatch(cx: &Ctx, cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenBench => gen_bench(cx),
        Command::ComputeEpdjm => compute_epdjm(cx),
        Command::TrainEncoder => train_encoder_cmd(cx),
        Command::Embed => embed(cx),
        Command::Search => search(cx),
        Command::Predict => predict(cx),
        Command::Transfer => transfer(cx),
        Command::Trace => trace(cx),
        Command::Report => report(cx),
        Command::Pipeline => {
            for c in [
                Command::GenBench,
                Command::ComputeEpdjm,
                Command::TrainEncoder,
                Command::Embed,
                Command::Search,
                Command::Predict,
            ] {
                dispatch(cx, c)?;
            }
            if transfer_enabled(cx.cfg) {
                dispatch(cx, Command::Transfer)?;
            } else {
                info!("transfer skipped: needs space=both and normalized=true");
            }
            dispatch(cx, Command::Trace)?;
            dispatch(cx, Command::Report)
        }
    }
}

fn transfer_enabled(cfg: &ExperimentConfig) -> bool {
    cfg.space == SpaceChoice::Both && cfg.normalized
}

fn bench_manifest(cfg: &ExperimentConfig) -> String {
    format!(
        "dataset_seed={DATASET_SEED}\nn_train={N_TRAIN}\nn_test={N_TEST}\ntrain_epochs={}\n",
        cfg.train_epochs
    )
}

/// Keys already in a benchmark file. A trailing partial line left by an
/// interrupted run is cut off first.
fn existing_keys(path: &std::path::Path) -> CliResult<BTreeSet<(Genotype, u64)>> {
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let text = fs::read_to_string(path)?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        warn!("{}: dropping partial trailing record", path.display());
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(cenas_core::TabularBenchmark::read(path)?.records.into_keys().collect())
}

fn gen_bench(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let data = bench_dataset();
    for space in cfg.space.spaces() {
        let f = space.family();
        let manifest_path = cx.layout.bench_manifest(f);
        let manifest = bench_manifest(cfg);
        let path = cx.layout.bench(f);
        if path.exists() && manifest_path.exists() {
            let old = artifacts::manifest_fields(&fs::read_to_string(&manifest_path)?);
            if old != artifacts::manifest_fields(&manifest) {
                return Err(CliError::Config(format!(
                    "{} was generated with different settings; remove it or restore the config",
                    path.display()
                )));
            }
        }
        artifacts::write_text(&manifest_path, &cx.header, &manifest)?;
        let done = existing_keys(&path)?;
        let todo: Vec<(Genotype, u64)> = space
            .enumerate()
            .into_iter()
            .flat_map(|g| (0..cfg.bench_seeds as u64).map(move |s| (g.clone(), s)))
            .filter(|key| !done.contains(key))
            .collect();
        info!("gen-bench {}: {} done, {} to train", f.name(), done.len(), todo.len());
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        for (i, chunk) in todo.chunks(BENCH_CHUNK).enumerate() {
            let records: Vec<cenas_core::Result<BenchRecord>> = chunk
                .par_iter()
                .map(|(g, s)| train_record(&space, g, *s, &data, cfg.train_epochs))
                .collect();
            let mut buf = String::new();
            for r in records {
                buf.push_str(&r?.to_json_line());
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.flush()?;
            info!("gen-bench {}: {}/{}", f.name(), ((i + 1) * BENCH_CHUNK).min(todo.len()), todo.len());
        }
    }
    Ok(())
}

fn probes(cfg: &ExperimentConfig, data: &Splits) -> CliResult<ProbeSet> {
    Ok(ProbeSet::draw(&data.train, cfg.probe_count, cfg.probe_seed)?)
}

fn compute_epdjm(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let probes = probes(cfg, &bench_dataset())?;
    for space in cfg.space.spaces() {
        let views = precompute_views(&space, &probes, cfg.k, cfg.n_views, cfg.normalized, cfg.output_reduce)?;
        info!(
            "compute-epdjm {}: {} genotypes, {} degenerate",
            space.family().name(),
            views.len(),
            views.degenerate.len()
        );
        artifacts::save_views(&cx.layout, cfg, &space, &views)?;
    }
    Ok(())
}

fn load_all_views(cx: &Ctx) -> CliResult<ViewStore> {
    let mut merged: Option<ViewStore> = None;
    for space in cx.cfg.space.spaces() {
        let v = artifacts::load_views(&cx.layout, cx.cfg, &space)?;
        merged = Some(match merged {
            None => v,
            Some(m) => m.merge(v)?,
        });
    }
    Ok(merged.expect("at least one space"))
}

fn train_encoder_cmd(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let views = load_all_views(cx)?;
    let mut cc = cfg.contrastive();
    if views.len() < cc.batch_size {
        warn!("batch_size {} exceeds the {} stored genotypes; using {}", cc.batch_size, views.len(), views.len());
        cc.batch_size = views.len();
    }
    info!("train-encoder: {} genotypes, batch {}, {} steps", views.len(), cc.batch_size, cc.steps);
    let trained = train_encoder(&views, &cc)?;
    let extra = format!(
        "{}normalized={}\nbatch_size={}\nsteps={}\ntemperature={}\n",
        cx.header, cfg.normalized, cc.batch_size, cc.steps, cc.temperature
    );
    trained.params.save(&cx.layout.encoder(), &extra)?;
    let mut body = String::from("step,loss\n");
    for (i, l) in trained.loss_trace.iter().enumerate() {
        writeln!(body, "{i},{l}").expect("string write");
    }
    artifacts::write_text(&cx.layout.encoder_loss(), &cx.header, &body)
}

fn load_encoder(cx: &Ctx) -> CliResult<EncoderParams> {
    let dir = cx.layout.encoder();
    artifacts::require(&dir.join("manifest.txt"))?;
    for name in cenas_core::encoder::TENSOR_NAMES {
        artifacts::require(&dir.join(format!("{name}.epdj")))?;
    }
    let enc = EncoderParams::load(&dir)?;
    let fields = artifacts::manifest_fields(&fs::read_to_string(dir.join("manifest.txt"))?);
    let stale = enc.shape.k != cx.cfg.k
        || enc.shape.d_embed != cx.cfg.d_embed
        || fields.get("normalized").map(String::as_str) != Some(if cx.cfg.normalized { "true" } else { "false" });
    if stale {
        return Err(CliError::Config(format!(
            "{} does not match the config; rerun train-encoder",
            dir.display()
        )));
    }
    Ok(enc)
}

fn embed(cx: &Ctx) -> CliResult<()> {
    let enc = load_encoder(cx)?;
    let views = load_all_views(cx)?;
    let entries: Vec<(&Genotype, &Vec<cenas_core::Epdjm>)> = views.views.iter().collect();
    let encoded: Vec<cenas_core::Result<Vec<Vec<f64>>>> = entries
        .par_iter()
        .map(|(_, vs)| enc.encode_many(&vs.iter().collect::<Vec<_>>()))
        .collect();
    let mut rows = Vec::with_capacity(views.len() * views.n_views);
    for ((g, _), e) in entries.iter().zip(encoded) {
        for (i, v) in e?.into_iter().enumerate() {
            rows.push(((*g).clone(), i, v));
        }
    }
    info!("embed: {} rows", rows.len());
    artifacts::write_embeddings(&cx.layout.embeddings(), &cx.header, &rows)
}

/// Seed-0 benchmark accuracies of the genotypes that have an embedding.
fn table_for(cx: &Ctx, space: &SearchSpaceSpec, emb: &BTreeMap<Genotype, Vec<f64>>) -> CliResult<AccuracyTable> {
    let bench = artifacts::read_bench(&cx.layout, space.family())?;
    let full = AccuracyTable::from_benchmark(space, &bench, 0)
        .map_err(|e| CliError::Artifact(format!("{}: {e}", cx.layout.bench(space.family()).display())))?;
    Ok(full.restrict(|g| emb.contains_key(g)))
}

fn search(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let emb = artifacts::read_embeddings(&cx.layout.embeddings())?;
    for space in cfg.space.spaces() {
        let f = space.family();
        let e0 = artifacts::primary_embeddings(&emb, &space);
        let table = table_for(cx, &space, &e0)?;
        let budget = cfg.search_budget;
        let logs: Vec<CliResult<Vec<SearchLog>>> = (0..cfg.search_seeds as u64)
            .into_par_iter()
            .map(|seed| {
                Ok(vec![
                    smbo_search(&table, &e0, budget, SmboConfig::default(), seed)?,
                    random_search(&table, budget, seed)?,
                    aging_evolution(&table, budget, EvolutionConfig::default(), seed)?,
                ])
            })
            .collect();
        for run in logs {
            for log in run? {
                artifacts::write_text(&cx.layout.search(f, &log.method, log.seed), &cx.header, &log.to_csv())?;
            }
        }
        info!("search {}: {} seeds x {} methods, budget {budget}", f.name(), cfg.search_seeds, METHODS.len());
    }
    Ok(())
}

fn random_embeddings(table: &AccuracyTable, dim: usize, seed: u64) -> BTreeMap<Genotype, Vec<f64>> {
    let mut rng = rng_for("predict.random", &[seed]);
    table
        .genotypes()
        .iter()
        .map(|g| (g.clone(), (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect()
}

fn tau_or_zero(a: &[f64], b: &[f64]) -> f64 {
    kendall_tau_b(a, b).unwrap_or(0.0)
}

/// Permutation p of one report's held-out Kendall tau.
fn report_p(r: &PredictiveReport, seed: u64) -> CliResult<f64> {
    let pred = r.predictions();
    let truth = r.truth();
    Ok(permutation_p(truth.len(), N_PERM, seed, |perm| {
        Ok(match perm {
            None => tau_or_zero(&pred, &truth),
            Some(q) => tau_or_zero(&pred, &q.iter().map(|&i| truth[i]).collect::<Vec<_>>()),
        })
    })?)
}

/// Permutation p of the seed-mean tau; each permutation relabels the table's
/// accuracies once and applies that to every seed.
fn mean_tau_p(reports: &[PredictiveReport], table: &AccuracyTable, seed: u64) -> CliResult<f64> {
    let genos = table.genotypes();
    let pos: BTreeMap<&Genotype, usize> = genos.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let acc: Vec<f64> = genos.iter().map(|g| table.accuracy(g)).collect();
    Ok(permutation_p(genos.len(), N_PERM, seed, |perm| {
        let total: f64 = reports
            .iter()
            .map(|r| {
                let truth: Vec<f64> = r
                    .held_out
                    .iter()
                    .map(|h| {
                        let i = pos[&h.0];
                        acc[perm.map_or(i, |q| q[i])]
                    })
                    .collect();
                tau_or_zero(&r.predictions(), &truth)
            })
            .sum();
        Ok(total / reports.len() as f64)
    })?)
}

fn predict(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let emb = artifacts::read_embeddings(&cx.layout.embeddings())?;
    let forest = ForestConfig::default();
    let mut body = String::from("space,embedding,seed,pearson,kendall_tau,kendall_p\n");
    for space in cfg.space.spaces() {
        let name = space.family().name();
        let e0 = artifacts::primary_embeddings(&emb, &space);
        let table = table_for(cx, &space, &e0)?;
        let onehot: BTreeMap<Genotype, Vec<f64>> =
            table.genotypes().iter().map(|g| (g.clone(), space.encode_onehot(g))).collect();
        for kind in ["contrastive", "onehot", "random"] {
            let tag = hash_str(&format!("{name}/{kind}"));
            let reports: Vec<CliResult<(PredictiveReport, f64)>> = (0..PREDICT_SEEDS)
                .into_par_iter()
                .map(|seed| {
                    let random;
                    let map = match kind {
                        "contrastive" => &e0,
                        "onehot" => &onehot,
                        _ => {
                            random = random_embeddings(&table, cfg.d_embed, seed);
                            &random
                        }
                    };
                    let r = predictive_power(map, &table, PREDICT_TRAIN, forest, seed)?;
                    let p = report_p(&r, derive_seed("predict.perm", &[tag, seed]))?;
                    Ok((r, p))
                })
                .collect();
            let reports = reports.into_iter().collect::<CliResult<Vec<_>>>()?;
            for (r, p) in &reports {
                writeln!(body, "{name},{kind},{},{:.6},{:.6},{p:.6}", r.seed, r.pearson, r.kendall_tau).expect("string write");
            }
            let only: Vec<PredictiveReport> = reports.into_iter().map(|(r, _)| r).collect();
            let n = only.len() as f64;
            let mp = only.iter().map(|r| r.pearson).sum::<f64>() / n;
            let mt = only.iter().map(|r| r.kendall_tau).sum::<f64>() / n;
            let p = mean_tau_p(&only, &table, derive_seed("predict.perm.mean", &[tag]))?;
            writeln!(body, "{name},{kind},mean,{mp:.6},{mt:.6},{p:.6}").expect("string write");
            info!("predict {name} {kind}: mean tau {mt:.3} (p {p:.4})");
        }
    }
    artifacts::write_text(&cx.layout.predict(), &cx.header, &body)
}

fn transfer(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    if !transfer_enabled(cfg) {
        return Err(CliError::Config("transfer needs space=both and normalized=true".into()));
    }
    let emb = artifacts::read_embeddings(&cx.layout.embeddings())?;
    let spaces = cfg.space.spaces();
    let maps: Vec<BTreeMap<Genotype, Vec<f64>>> = spaces.iter().map(|s| artifacts::primary_embeddings(&emb, s)).collect();
    let tables = spaces
        .iter()
        .zip(&maps)
        .map(|(s, m)| table_for(cx, s, m))
        .collect::<CliResult<Vec<_>>>()?;
    let a = Source {
        embeddings: &maps[0],
        table: &tables[0],
    };
    let b = Source {
        embeddings: &maps[1],
        table: &tables[1],
    };
    let seeds: Vec<u64> = (0..TRANSFER_SEEDS).collect();
    let reports = transfer_all(&a, &b, &seeds, ForestConfig::default(), N_PERM)?;
    let mut body = String::from("direction,seed,pearson,kendall_tau\n");
    let mut pvals = String::from("direction,mean_pearson,mean_kendall_tau,pearson_p\n");
    for r in &reports {
        body.push_str(&r.csv_rows());
        writeln!(pvals, "{},{:.6},{:.6},{:.6}", r.direction, r.pearson().0, r.kendall().0, r.pearson_p).expect("string write");
        info!("transfer {}: pearson {:.3} (p {:.4}), tau {:.3}", r.direction, r.pearson().0, r.pearson_p, r.kendall().0);
    }
    artifacts::write_text(&cx.layout.transfer(), &cx.header, &body)?;
    artifacts::write_text(&cx.layout.transfer_pvalues(), &cx.header, &pvals)
}

/// A traced network: per-epoch embeddings, test accuracies and flattened weights.
struct Traced {
    genotype: Genotype,
    embeddings: Vec<cenas_core::Embedding>,
    accuracy: Vec<f64>,
    checkpoints: Vec<DMatrix<f64>>,
}

fn flatten(weights: &[DMatrix<f64>]) -> DMatrix<f64> {
    let values: Vec<f64> = weights
        .iter()
        .flat_map(|w| (0..w.nrows()).flat_map(move |r| (0..w.ncols()).map(move |c| w[(r, c)])))
        .collect();
    DMatrix::from_row_slice(1, values.len(), &values)
}

fn trace(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let data = bench_dataset();
    let probes = probes(cfg, &data)?;
    let enc = load_encoder(cx)?;
    for space in cfg.space.spaces() {
        let f = space.family();
        let views = artifacts::load_views(&cx.layout, cfg, &space)?;
        let pool = views.genotypes();
        let mut rng = rng_for("trace.sample", &[cfg.encoder_seed, f as u64]);
        let mut picks: Vec<Genotype> = rand::seq::index::sample(&mut rng, pool.len(), TRACE_ARCHS.min(pool.len()))
            .iter()
            .map(|i| pool[i].clone())
            .collect();
        picks.sort();
        let train_cfg = TrainConfig {
            epochs: cfg.train_epochs,
            seed: 0,
            ..TrainConfig::default()
        };
        let traced: Vec<CliResult<Option<Traced>>> = picks
            .par_iter()
            .map(|g| {
                let net = NetworkParams::instantiate(&space, g, 0)?;
                let out = net.train(&data, &train_cfg)?;
                let mut accuracy = vec![test_accuracy(&net, &data.test)];
                accuracy.extend(&out.curve.per_epoch);
                match evolution_trace(&enc, &net, &out.checkpoints, &probes, cfg.k, cfg.normalized, cfg.output_reduce) {
                    Ok(embeddings) => Ok(Some(Traced {
                        genotype: g.clone(),
                        embeddings,
                        accuracy,
                        checkpoints: out.checkpoints.iter().map(|w| flatten(w)).collect(),
                    })),
                    Err(cenas_core::Error::DegenerateArchitecture(_) | cenas_core::Error::DegenerateProjection) => {
                        warn!("trace {g}: a checkpoint is degenerate, skipped");
                        Ok(None)
                    }
                    Err(e) => Err(e.into()),
                }
            })
            .collect();
        let traced: Vec<Traced> = traced.into_iter().collect::<CliResult<Vec<_>>>()?.into_iter().flatten().collect();
        let dir = cx.layout.trace_dir(f);
        let ck_dir = dir.join("checkpoints");
        fs::create_dir_all(&ck_dir)?;
        for t in &traced {
            for (epoch, w) in t.checkpoints.iter().enumerate() {
                store::write_matrix(&ck_dir.join(format!("{}_epoch{epoch}.epdj", t.genotype)), w, false)?;
            }
        }
        let rows: Vec<Vec<f64>> = traced.iter().flat_map(|t| t.embeddings.iter().map(|e| e.values.clone())).collect();
        let pca = pca2d(&rows)?;
        let mut body = String::from("genotype,epoch,x,y,accuracy\n");
        let mut at = 0;
        for t in &traced {
            for (epoch, acc) in t.accuracy.iter().enumerate() {
                let [x, y] = pca.coords[at];
                writeln!(body, "{},{epoch},{x:.6},{y:.6},{acc:.6}", t.genotype).expect("string write");
                at += 1;
            }
        }
        artifacts::write_text(&dir.join("trace.csv"), &cx.header, &body)?;
        let embs: Vec<Vec<cenas_core::Embedding>> = traced.into_iter().map(|t| t.embeddings).collect();
        let epochs = cfg.train_epochs;
        let w = TRACE_WINDOW.min(epochs);
        let early = mean_displacement(&embs, 0..w);
        let late = mean_displacement(&embs, epochs - w..epochs);
        let body = format!(
            "window,first_epoch,last_epoch,mean_displacement\nearly,0,{w},{early:.9}\nlate,{},{epochs},{late:.9}\n",
            epochs - w
        );
        artifacts::write_text(&dir.join("trace_displacement.csv"), &cx.header, &body)?;
        info!("trace {}: {} networks, displacement early {early:.4} late {late:.4}", f.name(), embs.len());
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn report(cx: &Ctx) -> CliResult<()> {
    let cfg = cx.cfg;
    let mut body = String::from("space,method,evaluations,mean_best,std_best\n");
    let mut tests = String::from("space,method,baseline,evaluations,mean_method,mean_baseline,wilcoxon_p\n");
    for f in cfg.space.families() {
        let mut curves: BTreeMap<&str, Vec<Vec<f64>>> = BTreeMap::new();
        for m in METHODS {
            let logs = (0..cfg.search_seeds as u64)
                .map(|s| artifacts::read_search_log(&cx.layout, f, m.name(), s))
                .collect::<CliResult<Vec<_>>>()?;
            let budget = logs.iter().map(|l| l.steps.len()).min().unwrap_or(0);
            for e in 1..=budget {
                let at: Vec<f64> = logs.iter().map(|l| l.best_after(e)).collect();
                let (mean, std) = mean_std(&at);
                writeln!(body, "{},{},{e},{mean:.6},{std:.6}", f.name(), m.name()).expect("string write");
            }
            curves.insert(m.name(), logs.iter().map(|l| l.best_curve()).collect());
        }
        let at = COMPARE_AT.min(cfg.search_budget);
        let smbo = SearchMethod::Smbo.name();
        for baseline in [SearchMethod::Random.name(), SearchMethod::Evolution.name()] {
            let x: Vec<f64> = curves[smbo].iter().map(|c| c[at - 1]).collect();
            let y: Vec<f64> = curves[baseline].iter().map(|c| c[at - 1]).collect();
            let p = wilcoxon_signed_rank(&x, &y, Alternative::Greater)?;
            let (mx, my) = (mean_std(&x).0, mean_std(&y).0);
            writeln!(tests, "{},{smbo},{baseline},{at},{mx:.6},{my:.6},{p:.6}", f.name()).expect("string write");
            info!("report {}: {smbo} {mx:.4} vs {baseline} {my:.4} after {at}, p {p:.4}", f.name());
        }
    }
    artifacts::write_text(&cx.layout.report(), &cx.header, &body)?;
    artifacts::write_text(&cx.layout.report_tests(), &cx.header, &tests)
}
