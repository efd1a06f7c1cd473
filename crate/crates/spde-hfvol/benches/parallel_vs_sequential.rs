//! Compares the replication map on one worker against the full pool, plus
//! the hot single-path kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spde_hfvol::model::{ModelParams, MultipowerSpec, SamplingScheme};
use spde_hfvol::montecarlo::{
    run_experiment_with_workers, ExperimentConfig, SimulatorKind, SpecConfig, TargetSpec,
};
use spde_hfvol::simulate::{derive_stream, ExactSampler, SeedSpec, VolatilityModel};
use spde_hfvol::variation::variation;

fn lln_config(replications: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelParams::white_noise(1.0, 1.0).unwrap(),
        scheme: SamplingScheme::new(2f64.powi(-12), 1.0, vec![0.0]).unwrap(),
        volatility: VolatilityModel::Constant { value: 1.0 },
        simulator: SimulatorKind::ExactStationary,
        target: TargetSpec::CltStudentized {
            spec: SpecConfig::Absolute { p: 2.0 },
        },
        replications,
        master_seed: 7,
        level: 0.95,
        gates: None,
        report_runtime: false,
    }
}

fn bench_replication_map(c: &mut Criterion) {
    let cfg = lln_config(24);
    let mut group = c.benchmark_group("mc_replications");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("workers", 1), |b| {
        b.iter(|| run_experiment_with_workers(&cfg, Some(1)).unwrap())
    });
    let cores = std::thread::available_parallelism().map_or(2, |n| n.get());
    group.bench_function(BenchmarkId::new("workers", cores), |b| {
        b.iter(|| run_experiment_with_workers(&cfg, Some(cores)).unwrap())
    });
    group.finish();
}

fn bench_kernels(c: &mut Criterion) {
    let model = ModelParams::white_noise(1.0, 1.0).unwrap();
    let scheme = SamplingScheme::new(2f64.powi(-14), 1.0, vec![0.0]).unwrap();
    let sampler = ExactSampler::new(&model, &scheme, 1.0).unwrap();
    let mut rng = derive_stream(&SeedSpec::new(1, 0));
    let path = sampler.sample_path(&mut rng).unwrap();
    let spec = MultipowerSpec::absolute(2.0, 1).unwrap();

    c.bench_function("exact_sample_2pow14", |b| {
        let mut rng = derive_stream(&SeedSpec::new(1, 1));
        b.iter(|| sampler.sample_increments(&mut rng))
    });
    c.bench_function("variation_phi2_2pow14", |b| {
        b.iter(|| variation(&path, &spec, 1.0, false).unwrap())
    });
}

criterion_group!(benches, bench_replication_map, bench_kernels);
criterion_main!(benches);
