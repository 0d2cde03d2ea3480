//! Pairwise velocity evaluation, sequential against the worker pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meanfield::dynamics::aggregation_velocities;
use meanfield::kernels::{KernelSpec, MollifiedKernel, MollifiedProfile, PairKernel};
use meanfield::measures::{iid_sample, DensitySpec};
use meanfield::parallel::Execution;

fn forces(c: &mut Criterion) {
    let rho = DensitySpec::uniform_box(vec![0.0; 3], vec![1.0; 3]).unwrap();
    let base = KernelSpec::power_law(2.0, 0.8).unwrap();
    let mollified = MollifiedProfile::new(MollifiedKernel::new(base.clone(), 0.05, 8).unwrap(), 3, 4.0).unwrap();
    let kernels = [("exact", PairKernel::Exact(base)), ("mollified", PairKernel::Mollified(Box::new(mollified)))];
    let mut group = c.benchmark_group("aggregation_velocities");
    group.sample_size(10);
    for n in [256usize, 1024] {
        let mu = iid_sample(&rho, n, 7).unwrap();
        let mut out = vec![0.0; mu.positions().len()];
        for (name, k) in &kernels {
            for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
                group.bench_with_input(BenchmarkId::new(format!("{name}/{label}"), n), &n, |b, _| {
                    b.iter(|| aggregation_velocities(mu.positions(), mu.masses(), 3, k, exec, &mut out).unwrap())
                });
            }
        }
    }
    group.finish();
}

criterion_group!(benches, forces);
criterion_main!(benches);
