use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use cfnlab::dynamics::{iterate, InducedMap};
use cfnlab::numkit::Rng;
use cfnlab::stack::{init_stack, CellKind};
use cfnlab::train::bptt_window;

fn cell_steps(c: &mut Criterion) {
    for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
        let m = init_stack(kind, 2, 64, 2000, &mut Rng::new(0)).unwrap();
        let s = m.zero_state();
        c.bench_function(&format!("step/{kind}/2x64/v2000"), |b| {
            b.iter(|| m.step(black_box(&s), Some(7), None))
        });
    }
}

fn bptt(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let tokens: Vec<usize> = (0..36).map(|_| rng.index(2000)).collect();
    for kind in [CellKind::Cfn, CellKind::Lstm] {
        let m = init_stack(kind, 2, 64, 2000, &mut Rng::new(0)).unwrap();
        let s = m.zero_state();
        c.bench_function(&format!("bptt_window/{kind}/2x64/T35"), |b| {
            b.iter(|| bptt_window(&m, &s, black_box(&tokens[..35]), &tokens[1..], None).unwrap())
        });
    }
}

fn maps(c: &mut Criterion) {
    for map in [InducedMap::paper_lstm(), InducedMap::paper_gru(), InducedMap::henon()] {
        let u0 = vec![0.1; map.dim()];
        c.bench_function(&format!("iterate/{}/10k", map.name()), |b| {
            b.iter(|| iterate(&map, black_box(&u0), 10_000, 10_000, 1).unwrap())
        });
    }
}

criterion_group!(benches, cell_steps, bptt, maps);
criterion_main!(benches);
