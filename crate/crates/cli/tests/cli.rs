use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn climmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_climmap"))
        .args(args)
        .env_remove("CLIMMAP_WORKERS")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(out: &Path, stations: &str) -> Output {
    climmap(&[
        "gen",
        "--out",
        out.to_str().unwrap(),
        "--stations",
        stations,
        "--years",
        "1",
        "--seed",
        "3",
    ])
}

fn config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const PERIODS: &str = r#""periods": [{"key": "past", "dir": "d/past"}, {"key": "near", "dir": "d/near"}, {"key": "far", "dir": "d/far"}]"#;

#[test]
fn help_for_every_command() {
    for cmd in ["gen", "run", "climate-stat", "inspect"] {
        let o = climmap(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn gen_writes_three_periods_and_lists_stations() {
    let dir = tempfile::tempdir().unwrap();
    let o = gen(&dir.path().join("a"), "3");
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<_> = stdout.lines().collect();
    assert_eq!(lines[0], "station,lon,lat");
    assert_eq!(lines.len(), 4);
    let mut files = 0;
    for period in ["past", "near", "far"] {
        for e in fs::read_dir(dir.path().join("a").join(period)).unwrap() {
            let text = fs::read_to_string(e.unwrap().path()).unwrap();
            let rows = text
                .lines()
                .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
                .count();
            // magic, five header fields, column names, then the hours
            assert_eq!(rows, 7 + 8760);
            files += 1;
        }
    }
    assert_eq!(files, 9);

    gen(&dir.path().join("b"), "3");
    for period in ["past", "near", "far"] {
        for name in ["st0000.clim", "st0001.clim", "st0002.clim"] {
            let a = fs::read(dir.path().join("a").join(period).join(name)).unwrap();
            let b = fs::read(dir.path().join("b").join(period).join(name)).unwrap();
            assert!(a == b, "{period}/{name}");
        }
    }
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gen(dir.path(), "0").status.code(), Some(2));
    assert_eq!(climmap(&["gen", "--stations", "2"]).status.code(), Some(2));
    assert_eq!(climmap(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn inspect_reports_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    gen(&dir.path().join("d"), "1");
    let file = dir.path().join("d/past/st0000.clim");
    let o = climmap(&["inspect", file.to_str().unwrap()]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("n_hours     8760"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("ISvar")));

    let text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1000] = "1.0 2.0";
    let bad = dir.path().join("bad.clim");
    fs::write(&bad, lines.join("\n")).unwrap();
    let o = climmap(&["inspect", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":1001:"), "{}", stderr(&o));

    let missing = climmap(&["inspect", dir.path().join("nope.clim").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn inspect_constant_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from(
        "CLIM1\nLON 10\nLAT 50\nHGT 0\nTZ 0\nDT 1\nCOLS TA HREL ISGH ISD PSTA RN WD WS CI ILAH ILTH GT GR\n",
    );
    for _ in 0..8760 {
        text.push_str("10 50 0 0 101325 0 0 1 0.5 300 300 10 0.2\n");
    }
    let p = dir.path().join("c.clim");
    fs::write(&p, text).unwrap();
    let o = climmap(&["inspect", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let ta: Vec<&str> = out
        .lines()
        .find(|l| l.starts_with("TA "))
        .unwrap()
        .split_whitespace()
        .collect();
    assert_eq!(&ta[1..], ["10.000000", "10.000000", "10.000000"]);
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    gen(&dir.path().join("d"), "2");
    let cases = [
        (
            format!(r#"{{"name": "x", "out_dir": "o", "mode": "climate-stat", "variable": "TEMP", {PERIODS}}}"#),
            "variable",
        ),
        (
            format!(r#"{{"name": "x", "out_dir": "o", "system": {{"builtin": "hvac", "x0": [1, 2]}}, {PERIODS}}}"#),
            "system.x0",
        ),
        (
            format!(r#"{{"name": "x", "out_dir": "o", "system": {{"builtin": "boiler"}}, {PERIODS}}}"#),
            "system.builtin",
        ),
        (
            r#"{"name": "x", "out_dir": "o", "system": {"builtin": "sc"}, "periods": []}"#.to_string(),
            "periods",
        ),
        (r#"{"name": "x", "#.to_string(), "line"),
    ];
    for (body, path) in cases {
        let cfg = config(dir.path(), &body);
        let o = climmap(&["run", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).contains(path), "{path}: {}", stderr(&o));
    }
    let o = climmap(&["run", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn station_failure_exits_1_naming_station() {
    let dir = tempfile::tempdir().unwrap();
    gen(&dir.path().join("d"), "3");
    fs::write(dir.path().join("d/far/st0001.clim"), "CLIM1\n").unwrap();
    let cfg = config(
        dir.path(),
        &format!(r#"{{"name": "x", "out_dir": "o", "mode": "climate-stat", "variable": "TA", {PERIODS}}}"#),
    );
    let o = climmap(&["climate-stat", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("st0001"), "{}", stderr(&o));

    let o = climmap(&["climate-stat", "--config", &cfg, "--skip-bad-stations"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("o/x_mapvar.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn run_lists_outputs_and_honours_worker_env() {
    let dir = tempfile::tempdir().unwrap();
    gen(&dir.path().join("d"), "4");
    let cfg = config(
        dir.path(),
        &format!(r#"{{"name": "sc", "out_dir": "o", "system": {{"builtin": "sc"}}, {PERIODS}}}"#),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_climmap"))
        .args(["-q", "run", "--config", &cfg])
        .env("CLIMMAP_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 4 + 10 + 1);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/sc_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 3);
    assert_eq!(manifest["station_count"], 4);

    let o = Command::new(env!("CARGO_BIN_EXE_climmap"))
        .args(["-q", "run", "--config", &cfg])
        .env("CLIMMAP_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn png_outputs_decode() {
    let dir = tempfile::tempdir().unwrap();
    gen(&dir.path().join("d"), "5");
    let cfg = config(
        dir.path(),
        &format!(
            r#"{{"name": "h", "out_dir": "o", "system": {{"builtin": "hvac"}}, "grid": {{"cell": 0.5}}, {PERIODS}}}"#
        ),
    );
    assert!(climmap(&["-q", "run", "--config", &cfg]).status.success());
    let file = std::io::BufReader::new(fs::File::open(dir.path().join("o/h_Past.png")).unwrap());
    let reader = png::Decoder::new(file).read_info().unwrap();
    let info = reader.info();
    // 114 x 78 raster plus the color bar margin
    assert_eq!(info.height, 78);
    assert!(info.width > 114);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let cfg = climmap_core::PipelineConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        climmap_core::pipeline::Evaluator::from_config(&cfg).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        cfg.period_dirs().unwrap();
        n += 1;
    }
    assert_eq!(n, 4);
}
