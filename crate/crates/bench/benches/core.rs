use std::hint::black_box;

use cenas_core::analysis::{forest_fit, ForestConfig};
use cenas_core::encoder::{batch_loss, EncoderShape};
use cenas_core::jacobian::epdjm_for;
use cenas_core::net::gen_dataset;
use cenas_core::rng::rng_for;
use cenas_core::surrogate::{gp_fit, LengthscalePolicy};
use cenas_core::{EncoderParams, Epdjm, Genotype, NetworkParams, OutputReduce, ProbeSet, SearchSpaceSpec};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::Rng;

fn network() -> NetworkParams {
    let space = SearchSpaceSpec::topology();
    let g = Genotype::parse("T-120120").unwrap();
    NetworkParams::instantiate(&space, &g, 0).unwrap()
}

fn net_benches(c: &mut Criterion) {
    let p = network();
    let data = gen_dataset(0, 256, 16);
    let probes = ProbeSet::draw(&data.train, 32, 0).unwrap();
    // batch entry points take one sample per column
    let batch = data.train.inputs.transpose();
    let probe_cols = probes.inputs.transpose();
    c.bench_function("forward_batch_256", |b| b.iter(|| p.forward_batch(black_box(&batch))));
    c.bench_function("data_jacobians_32", |b| {
        b.iter(|| p.data_jacobians(black_box(&probe_cols), OutputReduce::L1))
    });
    c.bench_function("epdjm_k8", |b| b.iter(|| epdjm_for(&p, black_box(&probes), 8, true, OutputReduce::L1).unwrap()));
}

fn encoder_bench(c: &mut Criterion) {
    let shape = EncoderShape {
        k: 8,
        hidden: 64,
        d_embed: 32,
        d_proj: 32,
    };
    let enc = EncoderParams::init(shape, 0);
    let mut rng = rng_for("bench.encoder", &[]);
    let views: Vec<Epdjm> = (0..128)
        .map(|_| Epdjm {
            matrix: DMatrix::from_fn(32, 8, |_, _| rng.random::<f64>() - 0.5),
            normalized: false,
            provenance: None,
        })
        .collect();
    let refs: Vec<&Epdjm> = views.iter().collect();
    c.bench_function("encoder_step_b64", |b| b.iter(|| batch_loss(&enc, black_box(&refs), 0.1).unwrap()));
}

fn surrogate_benches(c: &mut Criterion) {
    let mut rng = rng_for("bench.gp", &[]);
    let x: Vec<Vec<f64>> = (0..100).map(|_| (0..32).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] + 0.1 * r[1]).collect();
    c.bench_function("gp_fit_100", |b| b.iter(|| gp_fit(black_box(&x), &y, LengthscalePolicy::Median).unwrap()));
    c.bench_function("forest_fit_100x32", |b| {
        b.iter(|| forest_fit(black_box(&x), &y, ForestConfig::default(), 0).unwrap())
    });
}

criterion_group!(benches, net_benches, encoder_bench, surrogate_benches);
criterion_main!(benches);
