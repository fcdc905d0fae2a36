//! Analysis updates at the twin-experiment size (n = 512, M = 50).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mrenkf::experiment::MrenkfSettings;
use mrenkf::mrenkf::obs_cov_sampled;
use mrenkf::wavelet::make_filter;
use mrenkf::{
    etkf_update, CovStrategy, Ensemble, IdentityObservation, MrEnkf, ObsCovariance,
    ObsSpaceEnsemble,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 512;
const M: usize = 50;

fn setup() -> (Ensemble, DVector<f64>, ObsCovariance) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let members = DMatrix::from_fn(N, M, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(N, |i, _| (i as f64 * 0.05).sin());
    (
        Ensemble::new(members).unwrap(),
        y,
        ObsCovariance::scalar(0.66, N).unwrap(),
    )
}

fn etkf(c: &mut Criterion) {
    let (forecast, y, r) = setup();
    let obs = ObsSpaceEnsemble::new(forecast.members().clone()).unwrap();
    c.bench_function("etkf_update_512x50", |b| {
        b.iter(|| etkf_update(black_box(&forecast), &obs, &y, &r, 1.0).unwrap())
    });
}

fn multiresolution(c: &mut Criterion) {
    let (forecast, y, r) = setup();
    let mut group = c.benchmark_group("mrenkf_assimilate_512x50");
    for strategy in [CovStrategy::Diagonal, CovStrategy::Exact] {
        let mut settings = MrenkfSettings::tuned_default();
        for s in &mut settings.scales {
            s.strategy = strategy;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let filter = MrEnkf::new(settings.scale_config(), &r, &mut rng).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(strategy),
            &filter,
            |b, filter| {
                b.iter(|| {
                    filter
                        .assimilate(black_box(&forecast), &IdentityObservation, &y)
                        .unwrap()
                })
            },
        );
    }
    group.finish();

    let f = make_filter("db9").unwrap();
    c.bench_function("obs_cov_sampled_512_level1_1000", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| obs_cov_sampled(black_box(&r), &f, 4, 1, 1000, &mut rng).unwrap())
    });
}

criterion_group!(benches, etkf, multiresolution);
criterion_main!(benches);
