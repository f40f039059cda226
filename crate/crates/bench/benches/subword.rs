use criterion::{criterion_group, criterion_main, Criterion};
use gbs_core::evalsim::toydata::pickrevise_data;
use gbs_core::subword::{bpe_apply_line, bpe_detok, bpe_train};

fn corpus() -> Vec<String> {
    let (segments, _) = pickrevise_data(7, 200);
    segments.into_iter().map(|s| s.reference).collect()
}

fn train(c: &mut Criterion) {
    let lines = corpus();
    let mut group = c.benchmark_group("bpe/train");
    group.sample_size(10);
    group.bench_function("200 lines, 300 merges", |b| {
        b.iter(|| bpe_train(&lines, 300).unwrap())
    });
    group.finish();
}

fn apply(c: &mut Criterion) {
    let lines = corpus();
    let table = bpe_train(&lines, 300).unwrap();
    c.bench_function("bpe/apply", |b| {
        b.iter(|| {
            lines
                .iter()
                .map(|l| bpe_apply_line(&table, l).len())
                .sum::<usize>()
        })
    });
    let pieces: Vec<Vec<String>> = lines.iter().map(|l| bpe_apply_line(&table, l)).collect();
    c.bench_function("bpe/detok", |b| {
        b.iter(|| {
            pieces
                .iter()
                .map(|p| bpe_detok(p).unwrap().len())
                .sum::<usize>()
        })
    });
}

criterion_group!(benches, train, apply);
criterion_main!(benches);
