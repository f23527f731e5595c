use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/blobs.toml")
}

fn base_config() -> String {
    fs::read_to_string(config_path()).unwrap()
}

/// Shrinks the shipped config so smoke runs stay fast.
fn small_config(extra: &str) -> String {
    base_config()
        .replace("epochs = 8", "epochs = 2")
        .replace("update_epochs = 30", "update_epochs = 2")
        + extra
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn ecc_sim(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ecc-sim"));
    cmd.args(args).arg("--config").arg(config).env_remove("ECC_SIM_OUT");
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let text = fs::read_to_string(path).unwrap();
    let (comment, body) = text.split_once('\n').unwrap();
    assert!(comment.starts_with("# costs: "), "{}", path.display());
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(Result::unwrap).collect();
    (header, rows)
}

fn replace_table(text: &str, table: &str, body: &str) -> String {
    let start = text.find(&format!("[{table}]")).unwrap();
    let end = text[start + 1..].find("\n[").map_or(text.len(), |i| start + 2 + i);
    format!("{}[{table}]\n{body}\n{}", &text[..start], &text[end..])
}

#[test]
fn run_writes_every_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config(""));
    let out = tmp.path().join("out");
    let o = ecc_sim(&["run"], &cfg, Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = read_csv(&out.join("accuracy_matrix.csv"));
    assert_eq!(header, ["after_task", "task", "accuracy"]);
    assert_eq!(rows.len(), 6, "lower triangle of a 3-task matrix");
    let (_, rows) = read_csv(&out.join("per_task_report.csv"));
    assert_eq!(rows.len(), 3);
    for n in 1..=3 {
        read_csv(&out.join(format!("outcomes_task{n}.csv")));
    }
    let (_, frontier) = read_csv(&out.join("frontier.csv"));
    assert_eq!(frontier.len(), 11);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "run");
    assert_eq!(manifest["seed"], 0);
    for f in manifest["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }
    let edge: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("checkpoints/edge.json")).unwrap()).unwrap();
    assert_eq!(edge["classes"].as_array().unwrap().len(), 8);
}

#[test]
fn bad_config_exits_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config("\n[output]\nbogus = 1\n"));
    let o = ecc_sim(&["run"], &cfg, Some(&tmp.path().join("out")));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = base_config().lines().count() + 3;
    assert!(err.contains(&format!("exp.toml:{line}:")), "{err}");
}

#[test]
fn invalid_value_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &base_config().replace("delta = 0.3", "delta = 1.5"));
    let o = ecc_sim(&["run"], &cfg, Some(&tmp.path().join("out")));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_dataset_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let text = replace_table(&base_config(), "data", "source = \"csv\"\npath = \"absent.csv\"\nbase = 2\nincrement = 1");
    let cfg = write_config(tmp.path(), &text);
    let o = ecc_sim(&["run"], &cfg, Some(&tmp.path().join("out")));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_with_delta_one_never_uploads() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = "deltas = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]";
    let text = small_config("").replace(grid, "deltas = [1.0]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let o = ecc_sim(&["sweep-delta"], &cfg, Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("frontier.csv"));
    let cur = header.iter().position(|h| h == "cur").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][cur], "0");
}

#[test]
fn ablate_writes_four_arms_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config("\n[ablate]\nseeds = 2\n"));
    let out = tmp.path().join("out");
    let o = ecc_sim(&["ablate"], &cfg, Some(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&out.join("ablation.csv"));
    assert_eq!(rows.len(), 8);
}

#[test]
fn seed_override_is_recorded_and_changes_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config(""));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(ecc_sim(&["run"], &cfg, Some(&a)).status.success());
    assert!(ecc_sim(&["run", "--seed", "7"], &cfg, Some(&b)).status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_ne!(
        fs::read(a.join("outcomes_task1.csv")).unwrap(),
        fs::read(b.join("outcomes_task1.csv")).unwrap()
    );
}

#[test]
fn output_env_var_is_the_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config(""));
    let out = tmp.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_ecc-sim"))
        .args(["run", "--config"])
        .arg(&cfg)
        .env("ECC_SIM_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").exists());
}
