use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
schema_version = 1

[[layers]]
batch = 1
in_channels = 8
out_channels = 16
in_height = 9
in_width = 9
filter_height = 3
filter_width = 3
out_height = 7
out_width = 7
stride = 1

[tile]
tb = 1
tc = 4
tm = 8
te = 4
tf = 7

[space]
tb = [1]
tc = [2, 4, 8]
tm = [4, 8, 16]
te = [4, 7]
tf = [7]
"#;

/// A fresh directory holding `config.toml`, removed and recreated per test.
fn workspace(name: &str, config: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tilesim-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("config.toml"), config).unwrap();
    dir
}

fn tilesim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilesim"))
        .current_dir(dir)
        .env_remove("TILESIM_OUT_DIR")
        .args(["--config", "config.toml", "--out-dir", "out"])
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_report_and_trace() {
    let dir = workspace("simulate", SMALL);
    let o = tilesim(&dir, &["simulate", "--trace", "dram,passes"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert!(report["total_cycles"].as_u64().unwrap() > 0);
    let dram = fs::read_to_string(dir.join("out/dram_trace.csv")).unwrap();
    assert!(dram.lines().next().unwrap().contains("cycle"));
    assert!(dram.lines().count() > 10);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = workspace("determinism", SMALL);
    let mut seen = Vec::new();
    for _ in 0..2 {
        assert_eq!(tilesim(&dir, &["simulate", "--trace", "dram,bus"]).status.code(), Some(0));
        let files: Vec<Vec<u8>> = ["report.json", "dram_trace.csv", "bus_trace.csv"]
            .iter()
            .map(|f| fs::read(dir.join("out").join(f)).unwrap())
            .collect();
        seen.push(files);
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn estimate_models() {
    let dir = workspace("estimate", SMALL);
    for model in ["proposed", "conventional", "scaled", "scaled_per_type"] {
        let o = tilesim(&dir, &["estimate", "--model", model]);
        assert_eq!(o.status.code(), Some(0), "{model}");
        let r: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("out/estimate.json")).unwrap()).unwrap();
        assert!(r["total_cycles"].as_u64().unwrap() > 0);
    }
    assert_eq!(tilesim(&dir, &["estimate", "--model", "conventional", "--scale", "1.5,2,1"]).status.code(), Some(0));
    assert_eq!(tilesim(&dir, &["estimate", "--scale", "1.5,2,1"]).status.code(), Some(2));
    assert_eq!(tilesim(&dir, &["estimate", "--model", "oracle"]).status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = workspace("config-errors", SMALL);
    assert_eq!(tilesim(&dir, &["simulate", "--tile", "1,4,8"]).status.code(), Some(2));
    assert_eq!(tilesim(&dir, &["simulate", "--tile", "1,4,8,99,7"]).status.code(), Some(2));
    assert_eq!(tilesim(&dir, &["simulate", "--trace", "cache"]).status.code(), Some(2));

    let no_tile = SMALL.split("[tile]").next().unwrap().to_owned();
    let dir = workspace("no-tile", &no_tile);
    let o = tilesim(&dir, &["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tile"));

    let dir = workspace("bad-schema", &SMALL.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(tilesim(&dir, &["simulate"]).status.code(), Some(2));
}

#[test]
fn dse_writes_frontier_and_reports_infeasible_budget() {
    let dir = workspace("dse", SMALL);
    let o = tilesim(&dir, &["dse"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("evaluated 18 points"));
    let points = fs::read_to_string(dir.join("out/dse_points.csv")).unwrap();
    assert_eq!(points.lines().count(), 19);
    assert!(dir.join("out/dse_frontier.csv").exists());

    assert_eq!(tilesim(&dir, &["dse", "--budget", "10"]).status.code(), Some(3));
    assert_eq!(tilesim(&dir, &["dse", "--top-fraction", "0"]).status.code(), Some(2));
}

#[test]
fn top_fraction_limits_simulations() {
    let dir = workspace("hybrid", SMALL);
    let o = tilesim(&dir, &["dse", "--top-fraction", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simulated 2 of 18"), "{}", stdout(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("out/hybrid.json")).unwrap()).unwrap();
    assert_eq!(r["simulated"], 2);
}

#[test]
fn compare_reports_every_model() {
    let dir = workspace("compare", SMALL);
    let o = tilesim(&dir, &["compare"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("out/compare.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "tb,tc,tm,te,tf,simulated,proposed,conventional,scaled_uniform,scaled_per_type"
    );
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/compare.json")).unwrap()).unwrap();
    assert_eq!(r["stats"].as_array().unwrap().len(), 4);
}

#[test]
fn multilayer_search() {
    let second = r#"
[[layers]]
batch = 1
in_channels = 16
out_channels = 8
in_height = 7
in_width = 7
filter_height = 3
filter_width = 3
out_height = 5
out_width = 5
stride = 1
"#;
    let config = SMALL.replacen("[tile]", &format!("{second}\n[tile]"), 1).replace("tf = [7]", "tf = [5, 7]")
        + "\n[dse]\nunrolls = [[4, 2], [8, 4]]\n";
    let dir = workspace("multilayer", &config);
    for flag in [None, Some("--unconstrained")] {
        let mut args = vec!["dse", "--multilayer"];
        args.extend(flag);
        let o = tilesim(&dir, &args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("out/multilayer.json")).unwrap()).unwrap();
        assert_eq!(r["layers"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn init_prints_a_loadable_config() {
    let dir = workspace("init", SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_tilesim"))
        .current_dir(&dir)
        .args(["--preset", "extended", "init"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    fs::write(dir.join("config.toml"), &o.stdout).unwrap();
    let o = tilesim(&dir, &["estimate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
