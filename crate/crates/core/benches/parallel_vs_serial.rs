use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use viskv::modal::{simulate_traction, TractionOptions};
use viskv::model::MusclePhysical;
use viskv::singular_limit::{SingularLimitScenario, SweepGrid};
use viskv::stability::{sample_region, RegionAxes};
use viskv::Execution;

const MODES: [(&str, Execution); 2] = [("serial", Execution::Serial), ("parallel", Execution::Parallel)];

fn traction(c: &mut Criterion) {
    let p = MusclePhysical::moravec2007(0.1);
    let mut g = c.benchmark_group("simulate_traction");
    for (name, exec) in MODES {
        let opts = TractionOptions { modes: 41, exec, ..Default::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| simulate_traction(&p, o).unwrap())
        });
    }
    g.finish();
}

fn region(c: &mut Criterion) {
    let axes = RegionAxes::default();
    let mut g = c.benchmark_group("sample_region");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| sample_region(1.0, 1.0, &axes, exec).unwrap()));
    }
    g.finish();
}

fn singular(c: &mut Criterion) {
    let sc = SingularLimitScenario {
        grid: SweepGrid { length: 1.0, nx: 50, n_per_delay: 50, horizon: 0.5 },
        ..Default::default()
    };
    let mut g = c.benchmark_group("singular_limit");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| sc.run(exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, traction, region, singular);
criterion_main!(benches);
