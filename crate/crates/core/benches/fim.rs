//! Parallel versus sequential cost of the full-scale bound pipeline.
//!
//! With the default `parallel` feature this compares the rayon pool against
//! a one-thread pool running the same code. Built with
//! `--no-default-features` it measures the plain sequential fallback, under
//! the same benchmark names prefixed `sequential`.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dmasense::frontend::{CombinerBank, Normalization};
use dmasense::signal::Manifolds;
use dmasense::tuner::{self, TunerSettings};
use dmasense::{FimBundle, PathSet, Scenario};

fn pipeline(s: &Scenario, paths: &PathSet) -> f64 {
    let config = tuner::matched_states(s, paths);
    let bank = CombinerBank::build(s, &config, Normalization::PerColumn).unwrap();
    let m = Manifolds::build(s, paths, &bank);
    FimBundle::compute(s, paths, &m).unwrap().peb().unwrap()
}

fn tune(s: &Scenario) -> f64 {
    let settings = TunerSettings {
        budget: 32,
        ..TunerSettings::default()
    };
    tuner::optimize_peb(s, &settings).unwrap().objective
}

fn benches(c: &mut Criterion) {
    let s = Scenario::reference();
    let paths = PathSet::from_scenario(&s);
    let mut g = c.benchmark_group("bounds");
    g.sample_size(20);

    #[cfg(feature = "parallel")]
    {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let threads = rayon::current_num_threads();
        g.bench_function(format!("peb/rayon_{threads}_threads"), |b| b.iter(|| pipeline(black_box(&s), &paths)));
        g.bench_function("peb/rayon_1_thread", |b| b.iter(|| one.install(|| pipeline(black_box(&s), &paths))));
        g.bench_function(format!("tuner_32/rayon_{threads}_threads"), |b| b.iter(|| tune(black_box(&s))));
        g.bench_function("tuner_32/rayon_1_thread", |b| b.iter(|| one.install(|| tune(black_box(&s)))));
    }
    #[cfg(not(feature = "parallel"))]
    {
        g.bench_function("peb/sequential", |b| b.iter(|| pipeline(black_box(&s), &paths)));
        g.bench_function("tuner_32/sequential", |b| b.iter(|| tune(black_box(&s))));
    }
    g.finish();
}

criterion_group!(fim, benches);
criterion_main!(fim);
