use std::path::Path;
use std::process::{Command, Output};

fn adaptune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptune"))
        .args(args)
        .output()
        .unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn train_writes_agents_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adaptune(&[
        "train",
        "--framework",
        "multi",
        "--episodes",
        "10",
        "--seeds",
        "3",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let seed_dir = dir.path().join("multi/seed_3");
    for i in 0..3 {
        assert!(seed_dir.join(format!("agent_{i}.agent")).is_file());
    }
    let curve = data_lines(&seed_dir.join("curve.csv"));
    assert_eq!(curve[0], "episode,reward,smoothed");
    assert_eq!(curve.len(), 11);
    assert!(!seed_dir.join("curve.svg").exists());
}

#[test]
fn single_framework_has_one_eight_dimensional_agent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adaptune(&[
        "train",
        "--framework",
        "single",
        "--episodes",
        "1",
        "--seeds",
        "1",
        "--out",
        out,
    ]);
    assert!(o.status.success());
    let seed_dir = dir.path().join("single/seed_1");
    assert!(seed_dir.join("agent_0.agent").is_file());
    assert!(!seed_dir.join("agent_1.agent").exists());
    let agent = adaptune_rl::load_agent(&seed_dir.join("agent_0.agent"), 0).unwrap();
    assert_eq!(agent.action_dim(), 8);
    assert_eq!(agent.obs_dim(), 22);
}

#[test]
fn benchmark_report_matches_its_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adaptune(&["benchmark", "--seeds", "1,2", "--runs", "2", "--out", out]);
    assert!(o.status.success());
    let report = data_lines(&dir.path().join("report.csv"));
    let runs = data_lines(&dir.path().join("runs.csv"));
    assert_eq!(report.len(), 3);
    assert_eq!(runs.len(), 9);
    let col = |header: &str, name: &str| header.split(',').position(|h| h == name).unwrap();
    let (rs, rm) = (col(&report[0], "strategy"), col(&report[0], "mean_tts"));
    let (ss, st) = (col(&runs[0], "strategy"), col(&runs[0], "total_tts"));
    for row in &report[1..] {
        let f: Vec<&str> = row.split(',').collect();
        let totals: Vec<f64> = runs[1..]
            .iter()
            .map(|r| r.split(',').collect::<Vec<_>>())
            .filter(|r| r[ss] == f[rs])
            .map(|r| r[st].parse().unwrap())
            .collect();
        assert_eq!(totals.len(), 4);
        let mean = totals.iter().sum::<f64>() / 4.0;
        let reported: f64 = f[rm].parse().unwrap();
        assert!((mean - reported).abs() <= 1e-9 * mean, "{row}");
    }
}

#[test]
fn exit_codes_follow_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(adaptune(&["--help"]).status.code(), Some(0));
    assert_eq!(adaptune(&["simulate", "--strategy", "bogus"]).status.code(), Some(1));
    assert_eq!(
        adaptune(&["benchmark", "--runs", "0", "--out", out]).status.code(),
        Some(1)
    );

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[timing]\nrl_s = -5.0\n").unwrap();
    let o = adaptune(&["simulate", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    let o = adaptune(&["simulate", "--config", missing.to_str().unwrap(), "--out", out]);
    assert_ne!(o.status.code(), Some(0));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = adaptune(&["evaluate", "--agents", empty.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_trace_has_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = adaptune(&["simulate", "--strategy", "no_control", "--seeds", "4", "--out", out]);
    assert!(o.status.success());
    let rows = data_lines(&dir.path().join("simulate_no_control_seed_4.csv"));
    assert_eq!(rows[0], "step,weather,tts,u_dta,u_rm1,u_rm2");
    assert_eq!(rows.len(), 1981);
    let raw = std::fs::read_to_string(dir.path().join("simulate_no_control_seed_4.csv")).unwrap();
    assert!(raw.starts_with("# generated_unix="));
}
