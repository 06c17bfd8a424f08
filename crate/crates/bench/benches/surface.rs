use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cslab_core::analysis::{convexity_hull_test, convexity_midpoint_test, ConvexityOptions};
use cslab_core::simplex::{compute_surface_at_level, IterationOptions};
use cslab_core::spectra::{classify, DEFAULT_MARGIN_TOL};
use cslab_core::{LeslieGowerParams, MapModel};

fn lg_b() -> MapModel {
    MapModel::leslie_gower(LeslieGowerParams::symmetric(3.0, 1.0, 0.5).unwrap())
}

fn surface(c: &mut Criterion) {
    let model = lg_b();
    let mut g = c.benchmark_group("surface");
    g.sample_size(10);
    for level in [16, 32, 64] {
        g.bench_with_input(BenchmarkId::from_parameter(level), &level, |b, &l| {
            b.iter(|| compute_surface_at_level(&model, l, IterationOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn convexity(c: &mut Criterion) {
    let approx = compute_surface_at_level(&lg_b(), 32, IterationOptions::default()).unwrap();
    let opts = ConvexityOptions::default();
    let mut g = c.benchmark_group("convexity");
    g.sample_size(10);
    g.bench_function("midpoint/32", |b| b.iter(|| convexity_midpoint_test(&approx, &opts).unwrap()));
    g.bench_function("hull/32", |b| b.iter(|| convexity_hull_test(&approx, &opts).unwrap()));
    g.finish();
}

fn spectra(c: &mut Criterion) {
    let model = lg_b();
    c.bench_function("classify", |b| b.iter(|| classify(&model, DEFAULT_MARGIN_TOL).unwrap()));
}

criterion_group!(benches, surface, convexity, spectra);
criterion_main!(benches);
