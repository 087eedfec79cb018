use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadecal::model::{fit_linear, fit_svr, loocv, Hyperparams, ModelKind};
use shadecal::{apply_profile, build_profile, is_skin_pixel, skin_mask, DeviceRgb, D50};
use shadecal_bench::{bench_chart, bench_rows};

fn calibration(c: &mut Criterion) {
    let chart = bench_chart(1);
    let gray_ids: Vec<u32> = (6..=17).collect();

    c.bench_function("build_profile 35 patches", |b| {
        b.iter(|| build_profile(black_box(&chart.observations), &gray_ids, None, D50, None).unwrap())
    });

    let profile = build_profile(&chart.observations, &gray_ids, None, D50, None).unwrap();
    c.bench_function("apply_profile 200x144", |b| {
        b.iter(|| apply_profile(black_box(&chart.image), &profile).unwrap())
    });
}

fn skin(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut img = image::RgbImage::new(256, 256);
    for p in img.pixels_mut() {
        *p = image::Rgb([rng.random(), rng.random(), rng.random()]);
    }
    c.bench_function("skin_mask 256x256", |b| b.iter(|| skin_mask(black_box(&img)).unwrap()));
    c.bench_function("is_skin_pixel", |b| {
        b.iter(|| is_skin_pixel(black_box(DeviceRgb::new(180.0, 120.0, 90.0))))
    });
}

fn models(c: &mut Criterion) {
    let rows = bench_rows(3, 63);
    c.bench_function("fit_linear n=63", |b| b.iter(|| fit_linear(black_box(&rows)).unwrap()));
    c.bench_function("fit_svr n=63", |b| b.iter(|| fit_svr(black_box(&rows), 1.0, 0.1).unwrap()));
    c.bench_function("loocv linear n=63", |b| {
        b.iter(|| loocv(black_box(&rows), ModelKind::Linear, Hyperparams::default()).unwrap())
    });
}

criterion_group!(benches, calibration, skin, models);
criterion_main!(benches);
