use criterion::{criterion_group, criterion_main, Criterion};
use marginkd::synthdata::generate_multiview;
use marginkd::train::train_teacher;
use marginkd::{MultiViewSpec, TrainConfig};

// One epoch on the default dataset, with and without the intra term.
fn teacher_epoch(c: &mut Criterion) {
    let ds = generate_multiview(&MultiViewSpec::default()).unwrap();
    let mut group = c.benchmark_group("teacher_epoch");
    group.sample_size(20);
    for (name, lambda) in [("ce_only", 0.0), ("intra_0.03", 0.03)] {
        let cfg = TrainConfig {
            epochs: 1,
            lambda,
            ..TrainConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| train_teacher(&ds, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, teacher_epoch);
criterion_main!(benches);
