use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parskit::ars::check_confluence_with;
use parskit::certify::check_lyapunov_with;
use parskit::corpus;
use parskit::montecarlo::monte_carlo_with;
use parskit::par::Execution;
use parskit::StateId;

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn monte_carlo(c: &mut Criterion) {
    let sys = corpus::hindley_c();
    let start = StateId::from("0");
    let mut g = c.benchmark_group("monte_carlo_hindley_50k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| monte_carlo_with(&sys, &start, 10_000, 50_000, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn confluence(c: &mut Criterion) {
    let ring = corpus::herman_ring(10).unwrap().underlying_ars();
    let mut g = c.benchmark_group("confluence_herman10");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| check_confluence_with(&ring, exec)));
    }
    g.finish();
}

fn lyapunov(c: &mut Criterion) {
    let e = corpus::builtin("random_walk").unwrap();
    let window = parskit::explore(e.generated().unwrap(), 20_000).unwrap();
    let cert = e.certificate.unwrap();
    let mut g = c.benchmark_group("lyapunov_walk_20k");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| check_lyapunov_with(&window, &cert, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, confluence, lyapunov);
criterion_main!(benches);
