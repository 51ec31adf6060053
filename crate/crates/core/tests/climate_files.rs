use climmap_core::climate::{
    generate_dataset, generate_station, parse_climate_file, parse_climate_str, round_sig6, write_climate_file,
    ClimateSeries, GeoHeader, PeriodKey, ScenarioOffsets, VarCode, HOURS_PER_YEAR,
};
use climmap_core::Error;
use proptest::prelude::*;
use std::path::Path;

/// One year of values spanning many magnitudes, canonical at 6 digits.
fn series_strategy() -> impl Strategy<Value = ClimateSeries> {
    (-180.0f64..180.0, -90.0f64..90.0, any::<u64>()).prop_map(|(lon, lat, seed)| {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..13)
            .map(|_| {
                (0..HOURS_PER_YEAR)
                    .map(|_| {
                        let mag = 10f64.powi(rng.random_range(-7..8));
                        round_sig6(rng.random_range(-1.0..1.0) * mag)
                    })
                    .collect()
            })
            .collect();
        ClimateSeries::from_stored(GeoHeader::new(round_sig6(lon), round_sig6(lat)), cols).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn write_then_parse_is_identity(series in series_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.clim");
        write_climate_file(&series, &path).unwrap();
        let back = parse_climate_file(&path).unwrap();
        prop_assert_eq!(back.header(), series.header());
        prop_assert_eq!(back.n_hours(), series.n_hours());
        for code in VarCode::ALL {
            prop_assert_eq!(back.column(code), series.column(code), "{}", code);
        }
    }

    #[test]
    fn clamping_keeps_ranges(series in series_strategy()) {
        prop_assert!(series.column(VarCode::HREL).iter().all(|v| (0.0..=100.0).contains(v)));
        for code in [VarCode::ISGH, VarCode::ISD, VarCode::WS, VarCode::ISvar] {
            prop_assert!(series.column(code).iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn generated_station_round_trips() {
    let s = generate_station(8.5, 47.4, 1, 2.0, 99).unwrap();
    assert_eq!(s.n_hours(), HOURS_PER_YEAR);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.clim");
    write_climate_file(&s, &p).unwrap();
    let back = parse_climate_file(&p).unwrap();
    for code in VarCode::ALL {
        assert_eq!(back.column(code), s.column(code), "{code}");
    }
}

#[test]
fn dataset_offsets_are_exact_per_hour() {
    let dir = tempfile::tempdir().unwrap();
    let offsets = ScenarioOffsets { near: 2.0, far: 4.0 };
    let sets = generate_dataset(&[(0.0, 50.0), (20.0, 60.0)], 1, offsets, 3, dir.path()).unwrap();
    assert_eq!(sets.each_ref().map(|d| d.key), PeriodKey::ALL);
    for i in 0..2 {
        let past = parse_climate_file(&sets[0].stations[i]).unwrap();
        let near = parse_climate_file(&sets[1].stations[i]).unwrap();
        let far = parse_climate_file(&sets[2].stations[i]).unwrap();
        for k in 0..past.n_hours() {
            let t = past.column(VarCode::TA)[k];
            assert_eq!(near.column(VarCode::TA)[k] - t, 2.0);
            assert_eq!(far.column(VarCode::TA)[k] - t, 4.0);
        }
        assert_eq!(near.column(VarCode::ISGH), past.column(VarCode::ISGH));
    }
}

#[test]
fn same_seed_same_tree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let offsets = ScenarioOffsets { near: 1.5, far: 3.0 };
    let st = [(1.0, 45.0), (2.0, 46.0), (3.0, 47.0)];
    generate_dataset(&st, 1, offsets, 11, a.path()).unwrap();
    generate_dataset(&st, 1, offsets, 11, b.path()).unwrap();
    let mut count = 0;
    for key in PeriodKey::ALL {
        for name in ["st0000.clim", "st0001.clim", "st0002.clim"] {
            let rel = Path::new(key.key()).join(name);
            assert_eq!(
                std::fs::read(a.path().join(&rel)).unwrap(),
                std::fs::read(b.path().join(&rel)).unwrap()
            );
            count += 1;
        }
    }
    assert_eq!(count, 9);
}

#[test]
fn multi_year_length() {
    let s = generate_station(0.0, 40.0, 31, 0.0, 1).unwrap();
    assert_eq!(s.n_hours(), 271_560);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let s = generate_station(0.0, 40.0, 1, 0.0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.clim");
    write_climate_file(&s, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let target = lines.len() - 100;
    lines[target] = "1 2 three";
    let broken = lines.join("\n");
    match parse_climate_str(&broken, &p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, target + 1),
        other => panic!("expected parse error, got {other:?}"),
    }
}
