use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use muntzlab_core::embedding::{analyze, essential_norm_trend, psi_certificate, EmbeddingProblem};
use muntzlab_core::geometry::{distances, PsiEvaluator};
use muntzlab_core::linalg::Precision;
use muntzlab_core::sequences::make_geometric;
use muntzlab_core::Measure;

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("analyze");
    let measures = [
        ("lebesgue", Measure::lebesgue()),
        ("power_tail", Measure::power_tail(1.0, 2.0, 0.0).unwrap()),
        ("atomic", Measure::atomic(&[(0.5, 1.0), (0.9, 0.5), (0.99, 0.25)]).unwrap()),
    ];
    for n in [16, 32] {
        let seq = make_geometric(1.0, 2.0, n).unwrap();
        for (name, mu) in &measures {
            let problem = EmbeddingProblem::new(&seq, mu.clone(), n).unwrap();
            group.bench_with_input(BenchmarkId::new(*name, n), &problem, |b, p| {
                b.iter(|| analyze(black_box(p), &[0.5, 1.0, 2.0], Precision::Double).unwrap())
            });
        }
    }
    let seq = make_geometric(1.0, 2.0, 32).unwrap();
    let problem = EmbeddingProblem::new(&seq, Measure::power_tail(1.0, 2.0, 0.0).unwrap(), 32).unwrap();
    group.bench_function("power_tail_extended/32", |b| {
        b.iter(|| analyze(black_box(&problem), &[1.0], Precision::Extended).unwrap())
    });
    group.finish();
}

fn geometry(c: &mut Criterion) {
    let seq = make_geometric(1.0, 2.0, 32).unwrap();
    c.bench_function("distances/32", |b| b.iter(|| distances(black_box(&seq))));
    let psi = PsiEvaluator::new(&seq);
    let mu = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
    c.bench_function("psi_certificate/power_tail/32", |b| {
        b.iter(|| psi_certificate(black_box(&psi), &mu).unwrap())
    });
}

fn essential(c: &mut Criterion) {
    let seq = make_geometric(1.0, 2.0, 32).unwrap();
    let mu = Measure::power_tail(1.0, 2.0, 0.0).unwrap();
    let m_list = [2, 8, 32, 128, 512, 1024];
    let mut group = c.benchmark_group("essential_norm_trend");
    group.sample_size(10);
    group.bench_function("power_tail/32", |b| {
        b.iter(|| essential_norm_trend(&seq, black_box(&mu), 32, &m_list, Precision::Double).unwrap())
    });
    group.finish();
}

criterion_group!(benches, spectrum, geometry, essential);
criterion_main!(benches);
