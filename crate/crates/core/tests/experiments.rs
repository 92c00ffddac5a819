use std::path::Path;

use tactile_cran::experiments::*;
use tactile_cran::orchestrator::RunConfig;
use tactile_cran::scenario::ScenarioConfig;

fn metrics(power_dbm: f64, sar: f64) -> RunMetrics {
    RunMetrics {
        params: vec![("users".into(), "6".into())],
        mean_power_dbm: power_dbm,
        mean_power_w: 1e-3 * 10f64.powf(power_dbm / 10.0),
        power_dbm: vec![power_dbm],
        sar_percent: sar,
        mean_iterations: 7.25,
        n_converged: 3,
        n_realizations: 4,
    }
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn small_template(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, "num_rrh = 2\npairs_per_slice = [1, 1]\naccess_subcarriers = 2\nfronthaul_subcarriers = 2\n").unwrap();
    path
}

fn cli(args: &[&str]) -> i32 {
    cli_main(std::iter::once("tactile-cran").chain(args.iter().copied()))
}

#[test]
fn csv_round_trips_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let table = vec![
        metrics(-17.123456789012345, 85.0),
        metrics(3.0e-9, 200.0 / 3.0),
    ];
    emit_csv(&table, &path).unwrap();
    let (header, rows) = read_csv(&path);
    assert_eq!(
        header,
        [
            "users",
            "mean_power_dbm",
            "sar_percent",
            "mean_iterations",
            "n_converged"
        ]
    );
    for (name, want) in [
        (
            "mean_power_dbm",
            [table[0].mean_power_dbm, table[1].mean_power_dbm],
        ),
        ("sar_percent", [85.0, 200.0 / 3.0]),
        ("mean_iterations", [7.25, 7.25]),
    ] {
        for (got, want) in column(&header, &rows, name).iter().zip(want) {
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "{name}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn single_row_gives_header_and_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    emit_csv(&[metrics(-10.0, 100.0)], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
}

#[test]
fn empty_table_and_bad_path_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        emit_csv(&[], &dir.path().join("e.csv")),
        Err(ExperimentError::EmptyInput)
    ));
    let bad = dir.path().join("missing").join("m.csv");
    assert!(matches!(
        emit_csv(&[metrics(0.0, 100.0)], &bad),
        Err(ExperimentError::Io { .. })
    ));
    let points = sweep_points(
        SweepKind::Users,
        &ScenarioConfig::default(),
        Variant::Proposed,
    );
    assert!(matches!(
        run_monte_carlo(&points, 0, 1, &RunConfig::default()),
        Err(ExperimentError::EmptyInput)
    ));
}

#[test]
fn sweeps_have_expected_points() {
    let t = ScenarioConfig::default();
    let users: Vec<usize> = sweep_points(SweepKind::Users, &t, Variant::Proposed)
        .iter()
        .map(|p| 2 * p.config.pairs_per_slice.iter().sum::<usize>())
        .collect();
    assert_eq!(users, [4, 6, 8, 10]);
    assert_eq!(
        sweep_points(SweepKind::Rrsv, &t, Variant::Proposed).len(),
        3
    );
    assert_eq!(sweep_points(SweepKind::Per, &t, Variant::Proposed).len(), 6);
    let base = sweep_points(SweepKind::BaselineCompare, &t, Variant::Proposed);
    assert_eq!(base.len(), 3 * BASELINE_DELAY_MS.len());
    assert!(base.iter().any(|p| p.variant == Variant::NoAc));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.txt");
    let cfg = small_template(dir.path());
    assert_eq!(
        cli(&[
            "validate-config",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("ok:"));
    assert_eq!(cli(&["validate-config", "--no-such-flag"]), 2);
    assert_eq!(cli(&["sweep", "nonsense"]), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(
        cli(&["validate-config", "--config", missing.to_str().unwrap()]),
        1
    );
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "num_rrh = 0\n").unwrap();
    assert_eq!(
        cli(&["validate-config", "--config", broken.to_str().unwrap()]),
        1
    );
}

#[test]
fn run_command_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_template(dir.path());
    let out = dir.path().join("run.json");
    assert_eq!(
        cli(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["total_power_w"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweeps_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_template(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let code = cli(&[
            "sweep",
            "per",
            "--config",
            cfg.to_str().unwrap(),
            "--realizations",
            "2",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    assert_eq!(
        String::from_utf8(a).unwrap().lines().count(),
        1 + PER_SWEEP.len()
    );
}

#[test]
fn convergence_trace_is_non_increasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_template(dir.path());
    let out = dir.path().join("conv.csv");
    let code = cli(&[
        "sweep",
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--realizations",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&out);
    let obj = column(&header, &rows, "mean_objective");
    assert!(!obj.is_empty());
    assert!(
        obj.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
        "{obj:?}"
    );
}

#[test]
fn shipped_configs_match_the_defaults() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    assert_eq!(
        ScenarioConfig::from_path(&dir.join("desk.toml")).unwrap(),
        ScenarioConfig::default()
    );
    assert_eq!(
        ScenarioConfig::from_path(&dir.join("full_scale.toml")).unwrap(),
        ScenarioConfig::full_scale()
    );
    let tight = ScenarioConfig::from_path(&dir.join("tight.toml")).unwrap();
    assert_eq!(
        tight.reservation_bps_per_hz,
        RRSV_SWEEP[RRSV_SWEEP.len() - 1]
    );
    assert!(tight.user_ul_power_dbm < ScenarioConfig::default().user_ul_power_dbm);
}
