use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn solscope(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solscope"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_column(path: &Path, name: &str) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema: solscope."));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

const FREE: &str = "\
grid.r_max = 60
grid.num_points = 256
evolution.t_end = 6
evolution.t_back = 6
";

const BENCH: &str = "\
grid.r_max = 80
grid.num_points = 256
bench.band_ceiling = 2
bench.t_grid = 1, 2, 4, 8, 16
bench.items = high_energy, projection_weight
";

#[test]
fn free_simulate_then_decompose_reconstructs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "free.cfg", FREE);
    let out = dir.path().join("out");
    let sim = solscope(&["simulate"], &cfg, &out);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let dec = solscope(&["decompose"], &cfg, &out);
    assert_eq!(dec.status.code(), Some(0), "{}", String::from_utf8_lossy(&dec.stderr));
    let l2 = csv_column(&out.join("psi_loc.csv"), "l2");
    assert!(!l2.is_empty());
    assert!(l2.iter().all(|v| *v <= 1e-6), "{l2:?}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scattering_report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "solscope.scattering_report/1");
    assert!((report["primary"]["mass_budget"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "decompose");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);

    let obs = solscope(&["observables"], &cfg, &out);
    assert!(obs.status.success(), "{}", String::from_utf8_lossy(&obs.stderr));
    let values = csv_column(&out.join("observables.csv"), "value");
    let mass = csv_column(&out.join("monitors.csv"), "mass")[0];
    assert!(values.len() >= 10);
    assert!(values.iter().all(|v| *v >= 0.0 && *v <= mass + 1e-9));
}

#[test]
fn verify_estimates_writes_one_row_per_item_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bench.cfg", BENCH);
    let out = dir.path().join("out");
    let run = solscope(&["verify-estimates"], &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("estimate_report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: solscope.estimate_report/1"));
    assert_eq!(lines.next(), Some("lemma_item,params,t,norm,stderr"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let mut keys: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
    let he = keys.iter().filter(|k| k.0 == "high_energy").count();
    assert_eq!(he, 5);
    assert_eq!(keys.iter().filter(|k| k.0 == "projection_weight").count(), 4);
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n);
    let fits: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("estimate_fits.json")).unwrap()).unwrap();
    assert_eq!(fits["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn identical_runs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bench.cfg", BENCH);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(solscope(&["verify-estimates", "--seed", "17"], &cfg, out).status.success());
    }
    let read = |p: &Path| fs::read(p).unwrap();
    assert_eq!(read(&a.join("estimate_report.csv")), read(&b.join("estimate_report.csv")));
    assert_eq!(read(&a.join("estimate_fits.json")), read(&b.join("estimate_fits.json")));
    let c = dir.path().join("c");
    assert!(solscope(&["verify-estimates", "--seed", "18"], &cfg, &c).status.success());
    assert_ne!(read(&a.join("estimate_report.csv")), read(&c.join("estimate_report.csv")));

    let free = write_cfg(dir.path(), "free.cfg", FREE);
    for out in [&a, &b] {
        assert!(solscope(&["simulate"], &free, out).status.success());
    }
    assert_eq!(read(&a.join("monitors.csv")), read(&b.join("monitors.csv")));
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_cfg(dir.path(), "bad.cfg", "grid.n = 2\nbench.num_probes = 3\n");
    let run = solscope(&["simulate"], &bad, &out);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("n >= 3") && err.contains("bench.num_probes"), "{err}");

    let syntax = write_cfg(dir.path(), "syntax.cfg", "grid.n 5\n");
    let run = solscope(&["simulate"], &syntax, &out);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 1, column 1"));

    let ok = write_cfg(dir.path(), "ok.cfg", FREE);
    assert_eq!(solscope(&["decompose"], &ok, &dir.path().join("empty")).status.code(), Some(5));
    assert_eq!(solscope(&["simulate"], &dir.path().join("missing.cfg"), &out).status.code(), Some(5));

    let blowup = write_cfg(
        dir.path(),
        "blowup.cfg",
        "nonlinearity.kind = monomial\nnonlinearity.sign = focusing\nnonlinearity.lambda = 40\nnonlinearity.p = 4\n\
         initial.amplitude = 3\nevolution.t_end = 2\nevolution.h1_ceiling_factor = 2\n",
    );
    assert_eq!(solscope(&["simulate"], &blowup, &out).status.code(), Some(3));

    let help = Command::new(env!("CARGO_BIN_EXE_solscope")).arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&help.stdout);
    for code in ["0  success", "2  configuration", "3  numerical", "4  non-convergence", "5  input/output", "SOLSCOPE_THREADS"] {
        assert!(text.contains(code), "{code} missing from --help");
    }
}

#[test]
fn ground_state_command_writes_the_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "gs.cfg", "grid.r_max = 300\ngrid.num_points = 512\nground_state.omega = 0.005\n");
    let out = dir.path().join("out");
    let run = solscope(&["ground-state"], &cfg, &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let q = csv_column(&out.join("ground_state.csv"), "q");
    assert_eq!(q.len(), 512);
    assert!(q[0] > 0.0 && q[511].abs() < 1e-3 * q[0]);
}
