//! End-to-end checks of the `ldlab` binary: documented CSV headers,
//! byte-level determinism under a fixed seed, and the exit-code contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldlab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ldlab-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &PathBuf, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn lln_sweep_is_deterministic_with_documented_header() {
    let dir = scratch("lln");
    let cfg = write(
        &dir,
        "lln.cfg",
        "experiment = lln\nmodel = quadratic\neps.list = 0.2, 0.1\nreplicas = 2\nseed = 5\n",
    );
    let run = || {
        let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
        run_ok(&out)
    };
    let first = run();
    assert!(first.starts_with("eps,replica,dbl_to_origin\n"), "{first}");
    assert_eq!(first.lines().count(), 1 + 2 * 2);
    assert_eq!(first, run(), "same seed must reproduce identical bytes");

    // The --seed flag overrides the config and changes the data.
    let out = bin()
        .args(["sweep", "--seed", "6", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_ne!(first, run_ok(&out));
}

#[test]
fn steer_writes_csv_to_the_out_flag() {
    let dir = scratch("steer");
    let cfg = write(
        &dir,
        "steer.cfg",
        "model = quadratic\ntarget.atoms = -1; 1\ntarget.weights = 0.5, 0.5\n\
         eps.list = 0.1\nreplicas = 2\nseed = 3\n",
    );
    let dest = dir.join("steer.csv");
    let out = bin()
        .args(["steer", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dest)
        .output()
        .unwrap();
    run_ok(&out);
    let text = std::fs::read_to_string(&dest).unwrap();
    assert!(text.starts_with("eps,replica,cost,dbl_to_target\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn multiscale_sweep_reads_a_plan_file() {
    let dir = scratch("ms");
    let plan = write(
        &dir,
        "plan.json",
        r#"{"breakpoints":[0.0,1.0],"atoms":[[[-0.5],[0.5]]],"weights":[[0.5,0.5]],"controls":[[0.0]]}"#,
    );
    let cfg = write(
        &dir,
        "ms.cfg",
        &format!(
            "model = tracking\nplan.file = {}\neps.list = 0.3\nreplicas = 2\nseed = 2\n",
            plan.display()
        ),
    );
    let out = bin().args(["multiscale", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(
        text.starts_with("eps,replica,u_cost,v_cost,sup_dist_xi,dbl_lambda\n"),
        "{text}"
    );
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn laplace_emits_estimates_per_eps() {
    let dir = scratch("laplace");
    let cfg = write(
        &dir,
        "laplace.cfg",
        "model = quadratic\nfunctional = mean_penalty\nfunctional.c = 1\n\
         functional.cap = 1\neps.list = 0.2, 0.1\nreplicas = 4\nseed = 9\n",
    );
    let out = bin().args(["laplace", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(text.starts_with("eps,estimate,std_error\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn simulate_writes_a_path_and_respects_the_step_guard() {
    let dir = scratch("sim");
    let cfg = write(
        &dir,
        "sim.cfg",
        "model = quadratic\neps.list = 0.1\nseed = 4\nsteps = 200\n",
    );
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(text.starts_with("t,y_1\n"), "{text}");
    assert_eq!(text.lines().count(), 202);

    // Too few steps for the fast drift is a usage error: exit code 2.
    let bad = write(
        &dir,
        "bad.cfg",
        "model = quadratic\neps.list = 0.01\nseed = 4\nsteps = 2\n",
    );
    let out = bin().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stability guard"), "{err}");
}

#[test]
fn multiscale_model_paths_have_both_blocks() {
    let dir = scratch("sim-ms");
    let cfg = write(
        &dir,
        "sim.cfg",
        "model = tracking\neps.list = 0.2\nseed = 4\nsteps = 100\n",
    );
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(text.starts_with("t,x_1,y_1\n"), "{text}");
}

#[test]
fn unknown_config_keys_exit_with_code_2() {
    let dir = scratch("badkey");
    let cfg = write(&dir, "bad.cfg", "modle = quadratic\n");
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn rate_reports_json_for_a_measure_file() {
    let dir = scratch("rate");
    let measure = write(
        &dir,
        "measure.json",
        r#"{"dim":1,"atoms":[[[0.5],0.4],[[-0.5],0.6]]}"#,
    );
    let cfg = write(
        &dir,
        "rate.cfg",
        &format!("model = quadratic\nmeasure.file = {}\n", measure.display()),
    );
    let out = bin().args(["rate", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(text.contains("\"value\""), "{text}");
    assert!(text.contains("\"feasible\":true"), "{text}");

    // No input named: usage error.
    let cfg = write(&dir, "rate-none.cfg", "model = quadratic\n");
    let out = bin().args(["rate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_prints_one_line_per_clause() {
    let dir = scratch("check");
    let cfg = write(&dir, "check.cfg", "model = quadratic\n");
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    let text = run_ok(&out);
    assert!(text.contains("nondegeneracy"), "{text}");
    assert!(text.contains("PASS"), "{text}");
}
