use std::path::Path;
use std::process::{Command, Output};

use binreg_cli::RunManifest;

fn binreg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binreg"))
        .args(args)
        .current_dir(dir)
        .env_remove("BINREG_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path, sub: &str) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join(format!("{sub}.manifest.json"))).unwrap()).unwrap()
}

#[test]
fn theory_reports_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["theory", "--p", "1000000000", "--k", "10", "--sigma2", "1", "--out", "t"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let n_star = v["thresholds"]["n_star"].as_f64().unwrap();
    assert!((n_star - 136.1).abs() < 0.05, "n_star {n_star}");
    assert_eq!(v["thresholds"]["n"], 137);
    assert_eq!(v["thresholds"]["regime"], "NONMONOTONE_MIN_AT_0");
    let curve = std::fs::read_to_string(tmp.path().join("t/gamma_curve.csv")).unwrap();
    assert!(curve.starts_with("zeta,gamma,lower_bound\n"));
    assert_eq!(curve.lines().count(), 102);
    let m = manifest(&tmp.path().join("t"), "theory");
    assert!(m.verify());
    assert_eq!(m.outputs, vec!["theory.json", "gamma_curve.csv"]);
}

#[test]
fn noiseless_gen_then_solve_recovers_support() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["gen", "--p", "25", "--k", "3", "--n", "12", "--sigma2", "0", "--seed", "9", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0));
    let inst = binreg::io::load_instance(&tmp.path().join("g/instance.bin")).unwrap();
    let o = binreg(tmp.path(), &["solve", "--input", "g/instance.bin", "--out", "s"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let res: binreg::SolveResult = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(res.objective < 1e-12);
    assert_eq!(res.support, inst.planted_support);
    assert_eq!(res.overlap_ell, Some(0));
}

#[test]
fn restricted_and_pure_noise_solves() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["solve", "--p", "12", "--k", "3", "--n", "6", "--ell", "2", "--out", "a"]);
    let res: binreg::SolveResult = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(res.overlap_ell, Some(2));
    let o = binreg(tmp.path(), &["solve", "--p", "12", "--k", "3", "--n", "6", "--pure-noise", "--out", "b"]);
    let res: binreg::SolveResult = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(res.overlap_ell, None);
    let o = binreg(tmp.path(), &["solve", "--p", "12", "--k", "3", "--n", "6", "--pure-noise", "--ell", "1", "--out", "c"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("c").exists());
}

#[test]
fn unknown_subcommand_prints_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = binreg(tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(binreg(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "trials = \"many\"\n").unwrap();
    let o = binreg(tmp.path(), &["sweep", "--config", "bad.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(tmp.path().join("unknown.toml"), "trails = 3\n").unwrap();
    let o = binreg(tmp.path(), &["sweep", "--config", "unknown.toml", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn budget_refusal_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["solve", "--p", "40", "--k", "5", "--budget", "1000", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("658008"));
    let o = binreg(tmp.path(), &["gammaval", "--p", "200", "--k", "10", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn sweep_is_seed_determined_and_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("cfg.toml"),
        "trials = 2\nn_grid = [4, 10]\n[params]\np = 14\nk = 2\nn = 6\nsigma2 = 1.0\nseed = 5\n",
    )
    .unwrap();
    let run = |out: &str, threads: &str| binreg(tmp.path(), &["sweep", "--config", "cfg.toml", "--trials", "3", "--threads", threads, "--out", out]);
    assert_eq!(run("a", "1").status.code(), Some(0));
    assert_eq!(run("b", "2").status.code(), Some(0));
    let a = std::fs::read(tmp.path().join("a/sweep_records.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/sweep_records.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 2 * 3);
    let m = manifest(&tmp.path().join("a"), "sweep");
    assert!(m.verify());
    assert_eq!(m.master_seed, 5);
    assert_eq!(m.config["trials"], 3);
    let other = binreg(tmp.path(), &["sweep", "--config", "cfg.toml", "--seed", "6", "--out", "c"]);
    assert_eq!(other.status.code(), Some(0));
    assert_ne!(std::fs::read(tmp.path().join("c/sweep_records.csv")).unwrap(), std::fs::read(tmp.path().join("b/sweep_records.csv")).unwrap());
}

#[test]
fn out_dir_env_var_is_default() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_binreg"))
        .args(["gen", "--p", "8", "--k", "2", "--n", "3"])
        .current_dir(tmp.path())
        .env("BINREG_OUT_DIR", "envdir")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(tmp.path().join("envdir/instance.bin").exists());
    assert!(tmp.path().join("envdir/gen.manifest.json").exists());
}

#[test]
fn profile_csv_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["profile", "--p", "14", "--k", "3", "--n", "8", "--r", "1.0", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("p/profile.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("ell,min_objective,count_below_r,theory_lb"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn moments_and_kernels() {
    let tmp = tempfile::tempdir().unwrap();
    let o = binreg(tmp.path(), &["moments", "--p", "8", "--k", "2", "--sigma2", "1", "--y", "-0.5,1.2", "--t", "0.8", "--out", "m"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["upsilon"].as_f64().unwrap() >= 1.0);
    let o = binreg(tmp.path(), &["moments", "--p", "8", "--k", "2", "--out", "m2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = binreg(tmp.path(), &["kernels", "--t", "0.5", "--y", "-1,0", "--rho", "0,0.5", "--out", "k"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("k/kernels.csv")).unwrap();
    assert!(csv.starts_with("t,y,rho,p,log_p,log_p_lower_bound,q,q_error,ratio,ratio_bound\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn experiment_subcommands_emit_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let common = ["--p", "16", "--k", "3", "--n", "12", "--trials", "4"];
    let mut args = vec!["gammaval"];
    args.extend(common);
    args.extend(["--out", "g"]);
    assert_eq!(binreg(tmp.path(), &args).status.code(), Some(0));
    assert!(tmp.path().join("g/gamma_profiles.csv").exists());
    args[0] = "ogp";
    *args.last_mut().unwrap() = "o";
    let o = binreg(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("o/ogp_curve.csv").exists());
    let o = binreg(tmp.path(), &["momval", "--samples", "2000", "--out", "mv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("low statistical power"));
    assert!(manifest(&tmp.path().join("mv"), "momval").verify());
}
