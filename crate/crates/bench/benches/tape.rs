use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pathguide_core::autodiff::{forward, grad_input};
use pathguide_core::models::{Activation, Head, MlpSpec};
use pathguide_core::Tensor;

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for width in [32, 128, 512] {
        let net = MlpSpec::new(vec![64, width, width, 2], Activation::Tanh, Head::Softmax)
            .unwrap()
            .build(0)
            .unwrap();
        let x = Tensor::vector((0..64).map(|i| (i as f64 * 0.3).sin()).collect());
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, _| {
            b.iter(|| {
                let (_, tape) = forward(&net, &x).unwrap();
                grad_input(&net, &tape, 1).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
