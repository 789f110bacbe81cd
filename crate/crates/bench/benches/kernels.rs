use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lora_mimo::css::{cross_correlation, modulate, Demodulator};
use lora_mimo::mimo::{generate_channel, svd, ChannelModel};
use lora_mimo::sim::run;
use lora_mimo_bench::{chirp, waveform_scenario};

fn modem(c: &mut Criterion) {
    let mut group = c.benchmark_group("css");
    for sf in [7u8, 9, 12] {
        let p = chirp(sf, 125_000);
        group.bench_with_input(BenchmarkId::new("modulate", sf), &p, |b, p| {
            b.iter(|| modulate(p, black_box(5)).unwrap())
        });
        let demod = Demodulator::new(&p);
        let signal = modulate(&p, 5).unwrap();
        group.bench_with_input(BenchmarkId::new("demodulate", sf), &signal, |b, s| {
            b.iter(|| demod.demodulate(black_box(&s.samples)).unwrap())
        });
    }
    group.finish();
}

fn correlation(c: &mut Criterion) {
    let a = chirp(6, 125_000);
    let b = chirp(8, 500_000);
    c.bench_function("cross_correlation sf6/125k vs sf8/500k", |bench| {
        bench.iter(|| cross_correlation(black_box(&a), black_box(&b)))
    });
}

fn decomposition(c: &mut Criterion) {
    let h = generate_channel(&ChannelModel::Rayleigh { seed: 7 }).unwrap();
    c.bench_function("svd 4x4", |b| b.iter(|| svd(black_box(&h)).unwrap()));
}

fn end_to_end(c: &mut Criterion) {
    let s = waveform_scenario();
    c.bench_function("waveform run 240 B", |b| b.iter(|| run(black_box(&s)).unwrap()));
}

criterion_group!(benches, modem, correlation, decomposition, end_to_end);
criterion_main!(benches);
