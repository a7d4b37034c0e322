use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use crowdmpm::learn::model::ParamModel;
use crowdmpm::learn::sequence_gradient;
use crowdmpm::mpm::{p2g, stencils};
use crowdmpm::ActiveParams;
use crowdmpm_bench::{crowd, oracle, params};

fn step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [75, 300, 1200] {
        let (sim, state) = crowd(n);
        let p = params();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_with_input(BenchmarkId::new("one_thread", n), &n, |b, _| {
            one.install(|| {
                let mut g = sim.new_grid();
                b.iter_batched_ref(
                    || state.clone(),
                    |s| crowdmpm::mpm::step(&sim, s, &p, &mut g).unwrap(),
                    BatchSize::SmallInput,
                )
            })
        });
        group.bench_with_input(BenchmarkId::new("all_threads", n), &n, |b, _| {
            let mut g = sim.new_grid();
            b.iter_batched_ref(
                || state.clone(),
                |s| crowdmpm::mpm::step(&sim, s, &p, &mut g).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn transfer(c: &mut Criterion) {
    let (sim, state) = crowd(1200);
    let st = stencils(&state.particles, &sim.spec).unwrap();
    let mut g = sim.new_grid();
    c.bench_function("p2g/1200", |b| b.iter(|| p2g(&state.particles, &st, &mut g, true)));
}

fn gradient(c: &mut Criterion) {
    let (sim, init, data) = oracle(20, 12);
    let guess = ParamModel::global(2.0, 1.5, &ActiveParams::default());
    let mask: Vec<usize> = (1..data.frames.len()).collect();
    c.bench_function("sequence_gradient/20x12", |b| {
        b.iter(|| sequence_gradient(&guess, &sim, &init, &data, &mask, 6, false).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = step, transfer, gradient
}
criterion_main!(benches);
