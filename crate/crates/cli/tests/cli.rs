use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kvn_cli::pipeline::{CONFIG_FILE, CONVERGENCE_FILE, REPORT_FILE, SERIES_FILE};
use kvn_cli::ScenarioConfig;
use kvn_core::read_series;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.conf"))
}

fn kvn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvn"))
        .args(args)
        .env("KVN_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const SMALL: &str = "\
name = small
domain.kind = interval
domain.lower = 0
domain.upper = 1
resolution = 32
field.kind = logistic1d
initial.center = 0.5
initial.sigma = 0.08
t_end = 0.2
snapshots = 0, 0.1, 0.2
propagator.dt = 0.01
";

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.conf");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn version_verb() {
    let out = kvn(&["version"]);
    assert!(out.status.success());
    assert!(text(&out.stdout).starts_with("kvn "));
}

#[test]
fn bundled_scenarios_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::parse(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = ScenarioConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg, "{}", path.display());
        assert_eq!(again.to_text(), cfg.to_text());
        count += 1;
    }
    assert!(count >= 7);
}

#[test]
fn run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("out");
    let out = kvn(&["run", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));

    let report = fs::read_to_string(out_dir.join(REPORT_FILE)).unwrap();
    assert_eq!(report, text(&out.stdout));
    assert!(report.contains("threads=1\n"));
    assert!(report.contains("pass=true\n"));

    let series = read_series(fs::File::open(out_dir.join(SERIES_FILE)).unwrap()).unwrap();
    assert_eq!(series.dim, 1);
    assert_eq!(series.cells(), 32);
    let times: Vec<f64> = series.frames.iter().map(|f| f.0).collect();
    assert_eq!(times.len(), 3);
    assert!((times[1] - 0.1).abs() < 1e-12 && (times[2] - 0.2).abs() < 1e-12);

    let norm = fs::read_to_string(out_dir.join("norm.csv")).unwrap();
    assert!(norm.starts_with("step,t,norm,norm_drift\n"));
    assert_eq!(norm.lines().count(), 1 + 21);
    let class = fs::read_to_string(out_dir.join("classification.csv")).unwrap();
    assert!(class.starts_with("face_index,c_1,f_dot_nu,class\n"));
    assert_eq!(class.lines().count(), 3);

    let canonical = fs::read_to_string(out_dir.join(CONFIG_FILE)).unwrap();
    assert_eq!(ScenarioConfig::parse(&canonical).unwrap(), ScenarioConfig::parse(SMALL).unwrap());
}

#[test]
fn no_outflow_violation_is_flagged_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("exp");
    let out = kvn(&["run", scenario("expanding_interval").to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = text(&out.stdout);
    assert!(report.contains("flag.no_outflow=violated"));
    assert!(report.contains("flag.outflow_faces=2"));
    assert!(report.contains("oracle_l2_error=absent"));
    assert!(text(&out.stderr).contains("no-outflow"));
    let class = fs::read_to_string(out_dir.join("classification.csv")).unwrap();
    assert_eq!(class.lines().filter(|l| l.ends_with(",plus")).count(), 2);

    let out = kvn(&["check", scenario("expanding_interval").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("flag.no_outflow=violated"));
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("t_end = 0.2", "t_end = -1"));
    let out = kvn(&["run", cfg.to_str().unwrap(), "--output", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("t_end") && err.contains("line 9"), "{err}");
    assert!(!tmp.path().join("o").exists());

    let out = kvn(&["check", tmp.path().join("missing.conf").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("cannot read"));

    let out = kvn(&["converge", scenario("logistic1d").to_str().unwrap(), "--ladder", "64"]);
    assert_eq!(out.status.code(), Some(2));

    let out = kvn(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_kvn"))
        .args(["check", scenario("zero_field").to_str().unwrap()])
        .env("KVN_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("KVN_THREADS"));
}

#[test]
fn failed_run_leaves_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}propagator.max_iterations = 1\n");
    let cfg = write_config(tmp.path(), &body);
    let out_dir = tmp.path().join("o");
    let out = kvn(&["run", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("iterations"));
    assert!(!out_dir.exists());
}

#[test]
fn zero_field_converges_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("conv");
    let out = kvn(&["converge", scenario("zero_field").to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("order.oracle_l2=exact"), "{stdout}");
    assert!(stdout.contains("order.born_l1=exact"));
    let csv = fs::read_to_string(out_dir.join(CONVERGENCE_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(2).unwrap().contains(",exact,"));
}

#[test]
fn check_runs_on_every_bundled_scenario() {
    for name in [
        "rotation_disk",
        "logistic1d",
        "contracting_interval",
        "expanding_interval",
        "zero_field",
        "double_well",
        "harmonic",
        "stream_disk",
    ] {
        let out = kvn(&["check", scenario(name).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", text(&out.stdout));
        assert!(text(&out.stdout).contains("boundary_flux_max=0e0"));
    }
}
