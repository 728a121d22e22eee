use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scoba-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "domain = \"conveyor\"\nplanner = \"edd\"\nhorizon = 30\n");
    let out = dir.path().join("m.csv");
    let o = bench(&["run", &cfg, "--trials", "3", "--seed", "7", "--threads", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("trial,total_tasks,unsuccessful,fraction"));

    // Same seed, same outcomes; the timing columns are wall-clock.
    let outcomes = |t: &str| -> Vec<String> { t.lines().map(|l| l.split(',').take(5).collect::<Vec<_>>().join(",")).collect() };
    let again = bench(&["run", &cfg, "--trials", "3", "--seed", "7"]);
    assert_eq!(outcomes(&String::from_utf8(again.stdout).unwrap()), outcomes(&text));
}

#[test]
fn bad_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.toml", "planner = \"edd\"\nwobble = 3\n");
    let bad_prob = write(dir.path(), "p.toml", "grasp_prob = 1.5\n");
    let bad_planner = write(dir.path(), "b.toml", "planner = \"oracle\"\n");
    for cfg in [&unknown, &bad_prob, &bad_planner] {
        let o = bench(&["run", cfg, "--trials", "1"]);
        assert!(!o.status.success(), "{cfg} should be rejected");
    }
    assert!(!bench(&["run", "/nonexistent/config.toml"]).status.success());
    let ok = write(dir.path(), "ok.toml", "horizon = 5\n");
    assert!(!bench(&["run", &ok, "--threads", "0"]).status.success());
}

#[test]
fn sweep_rows_follow_values_then_planners() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "s.toml",
        "[base]\nhorizon = 20\ntrials = 2\n\n[sweep]\nparam = \"speed\"\nvalues = [\"0.04\", \"0.1\"]\nplanners = [\"edd\", \"hungarian\"]\n",
    );
    let o = bench(&["sweep", &spec]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let keys: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_string(), f[1].to_string())
        })
        .collect();
    let expect = [("0.04", "edd"), ("0.04", "hungarian"), ("0.1", "edd"), ("0.1", "hungarian")];
    assert_eq!(keys.len(), expect.len());
    for ((v, p), (ev, ep)) in keys.iter().zip(expect) {
        assert_eq!((v.as_str(), p.as_str()), (ev, ep));
    }
}

#[test]
fn timing_and_oracle_check_produce_csv() {
    let o = bench(&["timing", "--domain", "conveyor", "--trials", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("domain,planner,setting,tasks"));
    assert!(text.contains("objects=200"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.toml", "horizon = 40\n");
    let o = bench(&["oracle-check", &cfg, "--trials", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 10);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if text.contains("[sweep]") {
            scoba::harness::SweepSpec::from_toml(&text).unwrap().expand().unwrap();
        } else {
            scoba::harness::TrialConfig::from_toml(&text).unwrap().validate().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}
