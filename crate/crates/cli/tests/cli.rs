use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levywalk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levywalk"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LEVYWALK_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MINIMAL: &str = "delta = 0.0\nlmax = 1\nt_max = 10\nn_config = 1\nout = \"out\"\n";

#[test]
fn minimal_manifest_layout() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.toml"), MINIMAL).unwrap();
    let o = levywalk(&["run", "-m", "m.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let point = dir.path().join("out/delta0_lmax1");
    let moments = fs::read_to_string(point.join("moments.csv")).unwrap();
    let lines: Vec<&str> = moments.lines().collect();
    assert_eq!(
        lines[0],
        "t,mean_x,stderr_x,mean_x2,stderr_x2,range,stderr_range,entropy_mean_of_S,entropy_of_mean_rho"
    );
    assert_eq!(lines.len(), 11);
    assert!(lines[10].starts_with("10,"));
    for t in [1, 2, 5, 10] {
        let profile = fs::read_to_string(point.join(format!("profile_t{t}.csv"))).unwrap();
        assert!(profile.starts_with("x,f,stderr\n"));
    }

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(point.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["convention"], "hadamard-rl/L-left/coin-then-shift");
    assert_eq!(meta["realization_seeds"].as_array().unwrap().len(), 1);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["empirical_step_pmf"], serde_json::json!([1.0]));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec!["run", "--delta", "1.5", "--lmax", "4", "--tmax", "60", "--configs", "40", "--threads", "1", "--out", out]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    for out in ["a", "b"] {
        let a = args(out);
        let o = levywalk(&a.iter().map(String::as_str).collect::<Vec<_>>(), dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["moments.csv", "profile_t7.csv", "profile_t15.csv", "profile_t30.csv", "profile_t60.csv"] {
        let a = fs::read(dir.path().join("a/delta1.5_lmax4").join(name)).unwrap();
        let b = fs::read(dir.path().join("b/delta1.5_lmax4").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn sweep_makes_one_directory_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = levywalk(&["run", "--delta", "0,0.5,2", "--lmax", "3", "--tmax", "12", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = fs::read_dir(dir.path().join("s"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("delta"))
        .collect();
    names.sort();
    assert_eq!(names, ["delta0.5_lmax3", "delta0_lmax3", "delta2_lmax3"]);
}

#[test]
fn flags_override_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.toml"), MINIMAL).unwrap();
    let o = levywalk(&["run", "-m", "m.toml", "--tmax", "6", "--coin", "left-only", "--out", "o2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o2/delta0_lmax1/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["point"]["t_max"], 6);
    assert_eq!(meta["point"]["coin"]["a0"], 0.0);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_levywalk"))
        .args(["run", "--delta", "1.0", "--lmax", "2", "--tmax", "4"])
        .current_dir(dir.path())
        .env("LEVYWALK_OUT", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from-env/delta1_lmax2/moments.csv").exists());
}

#[test]
fn clean_walk_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--delta", "0.0", "--lmax", "1", "--tmax", "400", "--a0", "0.5773502691896258", "--b0", "0.816496580927726", "--out", "q"];
    let run: Vec<&str> = std::iter::once("run").chain(base).collect();
    let analyze: Vec<&str> = std::iter::once("analyze").chain(base).collect();
    assert!(levywalk(&run, dir.path()).status.success());
    let o = levywalk(&analyze, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let text = fs::read_to_string(dir.path().join("q/analysis.json")).unwrap();
    let a: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(a.as_object().unwrap().contains_key("delta_star_estimate"));
    let growth = a["points"][0]["growth_second"]["ok"].as_f64().unwrap();
    assert!((growth - 2.0).abs() < 0.05, "{growth}");
    assert!(a["mean_scaling"]["1"].get("failed").is_some());
    assert!(a["range_scaling"]["1"].get("failed").is_some());
    assert!(dir.path().join("q/delta0_lmax1/collapse_t400.csv").exists());

    // stable output: analyze twice, same bytes
    assert!(levywalk(&analyze, dir.path()).status.success());
    assert_eq!(text, fs::read_to_string(dir.path().join("q/analysis.json")).unwrap());
}

#[test]
fn malformed_csv_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.toml"), MINIMAL).unwrap();
    assert!(levywalk(&["run", "-m", "m.toml"], dir.path()).status.success());
    let path = dir.path().join("out/delta0_lmax1/moments.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = lines[4].replacen(',', ",oops", 2);
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let o = levywalk(&["analyze", "-m", "m.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("moments.csv") && e.contains("line 5"), "{e}");
    assert!(!dir.path().join("out/analysis.json").exists());
}

#[test]
fn missing_point_is_named() {
    let dir = tempfile::tempdir().unwrap();
    assert!(levywalk(&["run", "--delta", "1.0", "--lmax", "2", "--tmax", "8", "--out", "o"], dir.path()).status.success());
    let o = levywalk(&["analyze", "--delta", "1.0,2.0", "--lmax", "2", "--tmax", "8", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta2_lmax2"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--delta", "-1.0", "--lmax", "2", "--tmax", "4", "--out", "o"],
        vec!["run", "--delta", "1.0", "--lmax", "0", "--tmax", "4", "--out", "o"],
        vec!["run", "--delta", "1.0", "--lmax", "2", "--tmax", "4", "--a0", "0.6", "--b0", "0.7", "--out", "o"],
        vec!["run", "--delta", "1.0", "--lmax", "2", "--tmax", "4", "--coin", "up", "--out", "o"],
        vec!["run", "-m", "absent.toml"],
    ] {
        let o = levywalk(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    fs::write(dir.path().join("bad.toml"), "delta = 1.0\nlmax = 2\nt_max = [4\n").unwrap();
    let o = levywalk(&["run", "-m", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml") && stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = levywalk(&["run", "--delta", "1.0", "--lmax", "2", "--tmax", "4", "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("blocker"));
}

#[test]
fn failed_sweep_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a plain file squats where the second grid point's directory must go
    fs::create_dir_all(dir.path().join("o")).unwrap();
    fs::write(dir.path().join("o/delta2_lmax2"), "").unwrap();
    let o = levywalk(&["run", "--delta", "1.0,2.0", "--lmax", "2", "--tmax", "4", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("delta2_lmax2"));
    assert!(!dir.path().join("o/delta1_lmax2").exists());
    assert!(!dir.path().join("o/.delta2_lmax2.partial").exists());
    assert!(!dir.path().join("o/manifest.json").exists());
}
