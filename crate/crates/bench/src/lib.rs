//! Criterion benchmarks for the simulator's hot paths.

use std::hint::black_box;

use criterion::Criterion;
use lensmimo::array_geometry::lens_response;
use lensmimo::benchmark_upa::{mimo_ofdm_capacity, ofdm_power_gains, ofdm_subchannels};
use lensmimo::channel_model::{all_positions, sample_paths, tapped_channel};
use lensmimo::experiments::run_trial;
use lensmimo::path_grouping::{group_channels, group_paths, grouped_capacity, separation_of};
use lensmimo::pdm::{design_link, pdm_sinr, CombinerKind, PdmGeometry};
use lensmimo::selection::support_sets;
use lensmimo::{ExperimentConfig, LensArrayConfig, OfdmConfig, PathSet, Scenario, UpaConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fig10_paths(seed: u64) -> (ExperimentConfig, PathSet) {
    let cfg = ExperimentConfig::preset(Scenario::Fig10);
    let paths = sample_paths(&cfg.stats, cfg.paths, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (cfg, paths)
}

pub fn benchmarks(c: &mut Criterion) {
    let lens = LensArrayConfig::new(100.0, 20.0).unwrap();
    c.bench_function("lens_response_41", |b| {
        b.iter(|| lens_response(&lens, black_box(0.3)).unwrap())
    });

    let (cfg, paths) = fig10_paths(1);
    c.bench_function("sample_paths", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| sample_paths(&cfg.stats, 3, &mut rng).unwrap())
    });

    let (tx, rx) = cfg.lens_arrays().unwrap();
    let noise = cfg.stats.noise_power();
    let power = cfg.stats.transmit_power(20.0);
    let sets = support_sets(&paths, &tx, &rx, 1);
    let geometry = PdmGeometry::new(&paths, &sets, &tx, &rx, 500e6);
    for kind in [CombinerKind::Mrc, CombinerKind::Mmse] {
        c.bench_function(&format!("pdm_{kind:?}_design_and_sinr").to_lowercase(), |b| {
            b.iter(|| {
                let d = design_link(&geometry, kind, power, noise).unwrap();
                pdm_sinr(&d, &geometry, noise).unwrap().rate()
            })
        });
    }
    c.bench_function("path_grouping_capacity", |b| {
        b.iter(|| {
            let partition = group_paths(&sets, separation_of(&sets)).unwrap();
            grouped_capacity(&group_channels(&paths, &sets, &partition, &tx, &rx), power, noise).unwrap()
        })
    });

    let upa = UpaConfig::new(20.0, 20, 4).unwrap();
    let (_, wide) = fig10_paths(3);
    let upa_channel = tapped_channel(&wide, &upa, &upa, 500e6, &all_positions(80), &all_positions(80)).unwrap();
    let ofdm = OfdmConfig::default();
    let mut group = c.benchmark_group("upa_ofdm_80x80");
    group.sample_size(10);
    group.bench_function("compressed", |b| {
        b.iter(|| ofdm_power_gains(&upa_channel, 512).unwrap())
    });
    group.bench_function("direct", |b| {
        b.iter(|| mimo_ofdm_capacity(&ofdm_subchannels(&upa_channel, 512).unwrap(), power, noise, &ofdm).unwrap())
    });
    group.finish();

    let trial_cfg = ExperimentConfig {
        snr_db: vec![0.0, 30.0],
        ..ExperimentConfig::preset(Scenario::Fig9)
    };
    c.bench_function("fig9_trial_all_schemes", |b| {
        b.iter(|| run_trial(&trial_cfg, black_box(5)).unwrap())
    });
}
