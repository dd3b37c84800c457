use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evocert::certificates::{Analysis, CertOptions, TheoremId};
use evocert::par::Exec;
use evocert::propagator::propagate;
use evocert::quad::{sup_integral, Kernel, SupOptions};
use evocert::scenarios::{self, Overrides, ScenarioId};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn sup_sweep(c: &mut Criterion) {
    let sc = scenarios::build(ScenarioId::Example2, &Overrides::default()).unwrap();
    let table = propagate(&sc.spec.b, sc.spec.t_max, 1e-8, sc.spec.norm()).unwrap();
    let mut group = c.benchmark_group("sup_integral_two_param");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = SupOptions {
            exec,
            ..SupOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| sup_integral(&table, &sc.spec.alpha, Kernel::TwoParam, opts).unwrap())
        });
    }
    group.finish();
}

fn certificate_batch(c: &mut Criterion) {
    let sc = scenarios::build(ScenarioId::Example1, &Overrides::default()).unwrap();
    let table = propagate(&sc.spec.b, sc.spec.t_max, 1e-8, sc.spec.norm()).unwrap();
    let ids = TheoremId::defaults_for(&sc.spec);
    let mut group = c.benchmark_group("check_all_example1");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| Analysis::new(&sc.spec, &table, CertOptions::default().with_exec(exec)).check_all(&ids))
        });
    }
    group.finish();
}

criterion_group!(benches, sup_sweep, certificate_batch);
criterion_main!(benches);
