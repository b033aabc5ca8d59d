use criterion::{criterion_group, criterion_main, Criterion};
use pathguide_bench::shapes_fixture;
use pathguide_core::attribution::{attribute, AttributionRequest, Method, PathParams, Target};

fn methods(c: &mut Criterion) {
    let fx = shapes_fixture();
    let x = fx.data.sample(0);
    let mut group = c.benchmark_group("attribute");
    group.sample_size(20);
    for method in [Method::Gxi, Method::Ig, Method::Gig, Method::Eig, Method::Magig] {
        group.bench_function(method.to_string(), |b| {
            b.iter(|| {
                attribute(&AttributionRequest {
                    input: &x,
                    baseline: &fx.baseline,
                    target: Target::new(&fx.classifier, 0),
                    method,
                    params: PathParams::default(),
                    autoencoder: Some(&fx.autoencoder),
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, methods);
criterion_main!(benches);
