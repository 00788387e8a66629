use std::fs;
use std::path::Path;
use std::process::Command;

use chemotaxis_experiments::sweep::{eps_sweep, Trend};
use chemotaxis_experiments::{run_experiment, ExperimentConfig};

const ANNULUS: &str = r#"
[geometry]
kind = "annulus"
r0 = 1.0
r1 = 2.0

[resolution]
n0 = 8
n1 = 24
"#;

const BUMP: &str = r#"
[initial]
scenario = "gaussian_bump"
floor = 0.5
amplitude = 4.0
center = [1.5, 0.0]
width = 0.3
v = 1.0
"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

fn bump_simulation() -> String {
    format!(
        "mode = \"simulate\"\nseed = 1\n{ANNULUS}{BUMP}\n[sim]\neps = 0.1\nt_end = 0.3\ncfl_safety = 0.5\ndt_max = 1e-2\ndiag_cadence = 20\nsnapshot_every = 100\n"
    )
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn homogeneous_simulation_reports_exact_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!(
        "mode = \"simulate\"\n{ANNULUS}\n[initial]\nscenario = \"homogeneous\"\nmu = 2.0\nv = 1.5\n\n[sim]\neps = 0.2\nt_end = 3.0\ndt = 1e-3\ndiag_cadence = 25\n"
    ));
    let outcome = run_experiment(&cfg, dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.failures().collect::<Vec<_>>());
    let s = json(&dir.path().join("summary.json"));
    let rate = s["v_rate"].as_f64().unwrap();
    let expected = 2.0 / (1.0 + 0.2 * 2.0);
    assert!((rate - expected).abs() <= 0.01 * expected, "{rate} vs {expected}");
    assert!(dir.path().join("diag.csv").exists());
    assert!(dir.path().join("fields/t0.csv").exists() && dir.path().join("fields/v_t0.csv").exists());
}

#[test]
fn inequalities_rows_are_seeds_times_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!(
        "mode = \"inequalities\"\nseed = 5\n{ANNULUS}\n[inequalities]\nseeds = 10\nchecks = [\"L33_1\", \"L33_2\", \"L44_1\", \"ODE_CMP\", \"YOUNG_63\"]\neta = 1.0\neps = 0.1\ntrace_samples = 50\n"
    ));
    let outcome = run_experiment(&cfg, dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.failures().collect::<Vec<_>>());
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 5);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["summaries"].as_array().unwrap().len(), 5);
    assert!(s["trace_constant"]["measured"].as_f64().unwrap() >= 2.0 - 1e-12);
}

#[test]
fn same_config_gives_identical_files() {
    let cfg = config(&bump_simulation());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    for name in ["diag.csv", "summary.json", "fields/t0.csv", "fields/t1.csv", "fields/v_t1.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn homogeneous_sweep_matches_exponential_formula() {
    let dir = tempfile::tempdir().unwrap();
    let (mu, v0, t_end) = (1.0f64, 2.0f64, 1.0f64);
    let cfg = config(&format!(
        "mode = \"eps_sweep\"\n{ANNULUS}\n[initial]\nscenario = \"homogeneous\"\nmu = {mu}\nv = {v0}\n\n[sim]\nt_end = {t_end}\ndt = 1e-3\ndiag_cadence = 100\n\n[sweep]\neps = [0.1, 0.05, 0.025]\nsample_every = 10\n"
    ));
    let (report, assertions) = eps_sweep(&cfg, dir.path()).unwrap();
    assert!(assertions.iter().all(|a| a.pass));
    let measure = 3.0 * std::f64::consts::PI;
    for p in &report.pairs {
        // mollifying a constant is exact up to roundoff
        assert!(p.u <= 1e-12 && p.grad_u <= 1e-12, "{p:?}");
        let (ra, rb) = (mu / (1.0 + p.eps_a * mu), mu / (1.0 + p.eps_b * mu));
        // int_0^T (e^{-ra t} - e^{-rb t}) dt with ra < rb
        let exact = measure * v0 * ((1.0 - (-ra * t_end).exp()) / ra - (1.0 - (-rb * t_end).exp()) / rb);
        assert!((p.v - exact).abs() <= 1e-8 * exact, "{} vs {exact}", p.v);
    }
    assert!(dir.path().join("eps_0/diag.csv").exists() && dir.path().join("eps_2/diag.csv").exists());
}

#[test]
fn equal_eps_gives_zero_distances() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!(
        "mode = \"eps_sweep\"\n{ANNULUS}{BUMP}\n[sim]\nt_end = 0.05\ndt = 1e-3\ndiag_cadence = 10\n\n[sweep]\neps = [0.05, 0.05, 0.05]\nsample_every = 5\n"
    ));
    let (report, _) = eps_sweep(&cfg, dir.path()).unwrap();
    for p in &report.pairs {
        assert_eq!([p.u, p.grad_u, p.flux, p.v], [0.0; 4]);
    }
    assert_eq!(report.u_trend, Trend::NotMonotone);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
}

#[test]
fn cli_output_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("ineq.toml");
    fs::write(
        &cfg_path,
        format!("mode = \"inequalities\"\n{ANNULUS}\n[inequalities]\nseeds = 12\nchecks = [\"L33_1\", \"L33_2\", \"ODE_CMP\"]\n"),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = binary().args(["inequalities"]).arg(&cfg_path).arg("--out").arg(&out).args(["--threads", threads]).status().unwrap();
        assert!(status.success());
        outputs.push(fs::read(out.join("report.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sim.toml");
    fs::write(&cfg_path, bump_simulation()).unwrap();

    let ok = binary().arg("simulate").arg(&cfg_path).arg("--out").arg(dir.path().join("ok")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let wrong = binary().arg("sweep").arg(&cfg_path).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert_eq!(wrong.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&wrong.stderr).contains("does not match subcommand"));

    let no_out = binary().arg("simulate").arg(&cfg_path).output().unwrap();
    assert_eq!(no_out.status.code(), Some(2));

    fs::write(&cfg_path, bump_simulation().replace("eps = 0.1\n", "")).unwrap();
    let missing = binary().arg("simulate").arg(&cfg_path).arg("--out").arg(dir.path().join("y")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("sim.eps"));

    // an unattainable growth cap must flip the exit code and name the check
    let asym = format!(
        "mode = \"asymptotics\"\n{ANNULUS}{BUMP}\n[sim]\neps = 0.1\nt_end = 0.5\ncfl_safety = 0.5\ndt_max = 1e-2\ndiag_cadence = 5\n\n[asymptotics]\nthresholds = [0.5]\nfit_window = [0.1, 0.5]\nmax_exponent_other = -1.0\n"
    );
    fs::write(&cfg_path, asym).unwrap();
    let fail = binary().arg("asymptotics").arg(&cfg_path).arg("--out").arg(dir.path().join("z")).output().unwrap();
    assert_eq!(fail.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&fail.stderr);
    assert!(stderr.contains("failed check `growth exponent cum_fisher_u`") && stderr.contains("sublinear growth"), "{stderr}");
    let csv = fs::read_to_string(dir.path().join("z/report.csv")).unwrap();
    assert!(csv.starts_with("table,fraction,threshold,time"));
}

#[test]
fn example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}
