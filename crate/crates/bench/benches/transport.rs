use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use coleman_core::mat::Mat;
use coleman_core::phimod::monodromy_filtration;
use coleman_core::transport::{canonical_transport, iterated_integral, CurveSpec, Word};
use coleman_core::{PadicContext, PadicNumber};

fn ctx(p: u64, prec: u32) -> Arc<PadicContext> {
    PadicContext::new(p, prec).unwrap()
}

fn bench_kummer_transport(c: &mut Criterion) {
    let cx = ctx(5, 20);
    let curve = CurveSpec::kummer(&cx).unwrap();
    let x0 = PadicNumber::from_i64(&cx, 2);
    let x1 = PadicNumber::from_i64(&cx, 3);
    c.bench_function("kummer transport O(5^20)", |b| {
        b.iter(|| canonical_transport(&curve, &x0, &x1).unwrap())
    });
}

fn bench_word_integral(c: &mut Criterion) {
    let cx = ctx(7, 15);
    let w = Word::parse("dlog(1-z),dlog(z)").unwrap();
    let a = PadicNumber::from_i64(&cx, 7);
    let b7 = PadicNumber::from_i64(&cx, 7 + 2 * 49);
    c.bench_function("depth-2 iterated integral O(7^15)", |b| {
        b.iter(|| iterated_integral(&cx, &w, &a, &b7).unwrap())
    });
}

fn bench_monodromy(c: &mut Criterion) {
    let cx = ctx(5, 12);
    // fixed upper-triangular nilpotent of dimension 8
    let n = Mat::from_fn(8, 8, |i, j| {
        if j > i {
            PadicNumber::from_i64(&cx, ((i * 7 + j * 3) % 19) as i64 - 9)
        } else {
            PadicNumber::zero(&cx)
        }
    });
    c.bench_function("monodromy filtration dim 8", |b| {
        b.iter(|| monodromy_filtration(&n).unwrap())
    });
}

criterion_group!(
    benches,
    bench_kummer_transport,
    bench_word_integral,
    bench_monodromy
);
criterion_main!(benches);
