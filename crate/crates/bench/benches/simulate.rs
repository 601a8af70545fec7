use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dyngram::engine::{initial_store, restore_times, simulate_ct, simulate_dt, SimOptions};
use dyngram_bench::{corpus_init, corpus_model};

fn continuous_time(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_ct");
    for (name, t_max) in [("birth-death", 5.0), ("erlang-delay", 5.0), ("growth-division", 3.0), ("epithelium", 2.0)] {
        let model = corpus_model(name);
        let init = corpus_init(name);
        let opts = SimOptions::new(t_max, 7);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            let mut replica = 0;
            b.iter(|| {
                replica += 1;
                simulate_ct(initial_store(&model, &init).unwrap(), &opts, replica).unwrap()
            })
        });
    }
    group.finish();
}

fn discrete_time(c: &mut Criterion) {
    let model = corpus_model("birth-death");
    c.bench_function("simulate_dt/birth-death/100 steps", |b| {
        let mut replica = 0;
        b.iter(|| {
            replica += 1;
            simulate_dt(initial_store(&model, &[]).unwrap(), 100, 7, replica).unwrap()
        })
    });
    let dt = simulate_dt(initial_store(&model, &[]).unwrap(), 100, 7, 0).unwrap();
    c.bench_function("restore_times/birth-death/100 steps", |b| b.iter(|| restore_times(&model, &dt, 3).unwrap()));
}

criterion_group!(benches, continuous_time, discrete_time);
criterion_main!(benches);
