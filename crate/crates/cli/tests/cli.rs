use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_needlets");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn with_config(cmd: &str, file: &str, extra: &[&str], out: &Path) -> Output {
    let cfg = configs().join(file);
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_command_runs_with_its_example_config() {
    let cases = [
        ("kernel-dump", "kernel_dump.toml", &["kernel_weights.csv", "kernel_profile.csv"][..], 0),
        ("corr-table", "corr_table.toml", &["corr_table.csv", "corr_table.json"][..], 0),
        ("decay-fit", "decay_fit.toml", &["decay_fit.csv", "decay_fit.json"][..], 0),
        ("bound-check", "bound_check.toml", &["bound_check.csv", "bound_check.json"][..], 0),
        // persistence is not observed numerically at these scales
        ("supercritical-check", "supercritical_check.toml", &["supercritical.csv", "supercritical.json"][..], 1),
        ("smhw-gap", "smhw_gap.toml", &["smhw_gap.csv", "smhw_gap.json"][..], 0),
        ("mc-corr", "mc_corr.toml", &["mc_corr.json", "mc_replicates.csv"][..], 0),
        ("clt", "clt.toml", &["clt.csv", "clt.json"][..], 0),
        ("gamma", "gamma.toml", &["gamma.csv", "gamma.json"][..], 0),
    ];
    for (cmd, file, outputs, code) in cases {
        let dir = tempfile::tempdir().unwrap();
        let o = with_config(cmd, file, &[], dir.path());
        assert_eq!(o.status.code(), Some(code), "{cmd}: {}", stderr(&o));
        for name in outputs {
            let text = read(dir.path(), name);
            if name.ends_with(".csv") {
                assert!(text.starts_with("# config_digest="), "{cmd}/{name}");
            } else {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["config_digest"].as_str().map(str::len), Some(64), "{cmd}/{name}");
            }
        }
    }
}

#[test]
fn zero_angle_rows_have_unit_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("corr-table", "corr_table.toml", &["--set", "run.j_max=6"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(dir.path(), "corr_table.csv");
    let mut seen = 0;
    for line in csv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == f[1] && f[2].parse::<f64>().unwrap() == 0.0 {
            assert_eq!(f[3].parse::<f64>().unwrap(), 1.0, "{line}");
            seen += 1;
        }
    }
    assert_eq!(seen, 3);
}

#[test]
fn subcritical_bound_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("bound-check", "bound_check.toml", &[], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "bound_check.json")).unwrap();
    assert_eq!(v["violations"], 0);
    assert_eq!(v["pass"], true);
}

#[test]
fn non_continuous_spectrum_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("corr-table", "corr_table.toml", &["--set", "spectrum.alpha=1.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha > 2"), "{}", stderr(&o));
}

#[test]
fn supercritical_envelope_is_a_regime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("bound-check", "bound_check.toml", &["--set", "spectrum.alpha=10.5"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("alpha >= 4p+2"), "{}", stderr(&o));
    // persistence needs the opposite inequality
    let o = with_config("supercritical-check", "supercritical_check.toml", &["--set", "spectrum.alpha=4"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("alpha <= 4p+2"), "{}", stderr(&o));
}

#[test]
fn malformed_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = with_config("corr-table", "corr_table.toml", &["--set", "run.bogus=1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));
    let o = with_config("gamma", "corr_table.toml", &[], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("experiment"));
    let o = with_config("corr-table", "corr_table.toml", &["--set", "run.thetas=[4.0]"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.thetas"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--set", "run.replicates=300", "--threads", "3"];
    for dir in [a.path(), b.path()] {
        let o = with_config("mc-corr", "mc_corr.toml", &extra, dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["mc_corr.json", "mc_replicates.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    // thread count and output location do not enter the digest or the numbers
    let c = tempfile::tempdir().unwrap();
    let o = with_config("mc-corr", "mc_corr.toml", &["--set", "run.replicates=300", "--threads", "1"], c.path());
    assert!(o.status.success());
    assert_eq!(read(a.path(), "mc_replicates.csv"), read(c.path(), "mc_replicates.csv"));
    // a different seed changes both
    let d = tempfile::tempdir().unwrap();
    let o = with_config("mc-corr", "mc_corr.toml", &["--set", "run.replicates=300", "--seed", "7"], d.path());
    assert!(o.status.success());
    assert_ne!(read(a.path(), "mc_replicates.csv"), read(d.path(), "mc_replicates.csv"));
}
