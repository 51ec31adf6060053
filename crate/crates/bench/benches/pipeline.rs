use std::hint::black_box;

use climmap_core::climate::{generate_station, parse_climate_file, write_climate_file};
use climmap_core::maprender::{GridSpec, IdwPlan};
use climmap_core::perf::PreparedSystem;
use climmap_core::pipeline::{halton_stations, Region};
use climmap_core::statespace::{discretize_zoh, expm};
use climmap_core::systems::build_hvac;
use climmap_core::HvacConstants;
use criterion::{criterion_group, criterion_main, Criterion};

fn statespace(c: &mut Criterion) {
    let spec = build_hvac(&HvacConstants::default()).unwrap();
    let m = spec.model.a.scaled(3600.0);
    c.bench_function("expm_hvac_hour", |b| b.iter(|| expm(black_box(&m)).unwrap()));
    c.bench_function("discretize_hvac", |b| {
        b.iter(|| discretize_zoh(black_box(&spec.model), 3600.0).unwrap())
    });

    let series = generate_station(8.0, 48.0, 1, 0.0, 1).unwrap();
    let sys = PreparedSystem::new(spec).unwrap();
    c.bench_function("simulate_hvac_year", |b| {
        b.iter(|| sys.run(black_box(&series), "b").unwrap())
    });
}

fn files(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.clim");
    write_climate_file(&generate_station(8.0, 48.0, 1, 0.0, 1).unwrap(), &path).unwrap();
    c.bench_function("parse_station_year", |b| {
        b.iter(|| parse_climate_file(black_box(&path)).unwrap())
    });
}

fn interpolation(c: &mut Criterion) {
    let spec = GridSpec::default();
    let pos = halton_stations(474, &Region::from_grid(&spec), 7);
    let values: Vec<f64> = pos.iter().map(|p| p.0 + p.1).collect();
    let mut group = c.benchmark_group("idw_474");
    group.sample_size(20);
    group.bench_function("plan", |b| b.iter(|| IdwPlan::new(black_box(&pos), &spec).unwrap()));
    let plan = IdwPlan::new(&pos, &spec).unwrap();
    group.bench_function("apply", |b| b.iter(|| plan.apply(black_box(&values))));
    group.finish();
}

criterion_group!(benches, statespace, files, interpolation);
criterion_main!(benches);
