use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pilotassign::receiver::{combiner_matrix, sinr_all};
use pilotassign::rng::{substream, Purpose};
use pilotassign::{
    assign_location_aware, build_pilot_matrix, draw_channel, ergodic_rates, ls_estimate,
    received_training, CellConfig, Detector, LinkConfig, TrainingConfig,
};
use pilotassign_bench::drop_of;

fn training_and_detection(c: &mut Criterion) {
    let drop = drop_of(20, 4);
    let cfg = TrainingConfig::new(10.0, 10).unwrap();
    let mut group = c.benchmark_group("link");
    for m in [20, 100, 200] {
        let cell = CellConfig::default().with_antennas(m);
        let a = assign_location_aware(&drop, 10, &cell, &cfg).unwrap();
        let pilots = build_pilot_matrix(&a, 20).unwrap();
        let mut rng = substream(4, 0, Purpose::Fading);
        let chan = draw_channel(&drop, &cell, &mut rng);
        let y = received_training(&chan, &pilots, &cfg, &mut rng).unwrap();
        let est = ls_estimate(&y, &chan.g_los, &pilots, &cfg).unwrap();
        let g = chan.full();

        group.bench_with_input(BenchmarkId::new("channel_and_training", m), &m, |b, _| {
            b.iter(|| {
                let chan = draw_channel(black_box(&drop), &cell, &mut rng);
                received_training(&chan, &pilots, &cfg, &mut rng)
            })
        });
        group.bench_with_input(BenchmarkId::new("ls_estimate", m), &m, |b, _| {
            b.iter(|| ls_estimate(black_box(&y), &chan.g_los, &pilots, &cfg))
        });
        for det in [Detector::NormalizedMatched, Detector::ZeroForcing] {
            group.bench_with_input(BenchmarkId::new(format!("sinr_{det:?}"), m), &m, |b, _| {
                b.iter(|| {
                    let a = combiner_matrix(black_box(&est), det).unwrap();
                    sinr_all(&a, &g, 10.0)
                })
            });
        }
    }
    group.finish();

    let cell = CellConfig::default().with_antennas(100);
    let a = assign_location_aware(&drop, 10, &cell, &cfg).unwrap();
    let link = LinkConfig::new(196);
    let mut group = c.benchmark_group("ergodic");
    group.sample_size(10);
    group.bench_function("M100_50_realizations", |b| {
        let mut rng = substream(5, 0, Purpose::Fading);
        b.iter(|| ergodic_rates(&drop, &a, &cell, &cfg, &link, 50, &mut rng))
    });
    group.finish();
}

criterion_group!(benches, training_and_detection);
criterion_main!(benches);
