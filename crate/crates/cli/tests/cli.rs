use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(rel)
}

fn styloshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_styloshift")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"format = "styloshift-run/1"
corpus = "{}"
dimension_model = "builtin:biber1988-en"
workspace = "ws"
{extra}
[stats]
iters = 1000
seed = 7

[[model]]
config_id = "stored"
endpoint_kind = "completion"
model_name = "m"
temperature = 0.0
system_prompt_id = "none"
"#,
        fixture("corpus/manifest.toml").display()
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_reports_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "");
    let out = styloshift(&["validate", ok.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("m_tests = 6 (1 configs × 6 dimensions)"), "{}", stdout(&out));

    let text = fs::read_to_string(&ok).unwrap().replace("seed = 7\n", "");
    fs::write(&ok, text).unwrap();
    let out = styloshift(&["validate", ok.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("error: stats.seed"), "{}", stdout(&out));

    fs::write(&ok, "format = \"styloshift-run/1\"\ncorpus = 3\n").unwrap();
    assert_eq!(styloshift(&["validate", ok.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn stage_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("features.csv");
    fs::write(&matrix, "chunk_id,nonsense\nx#part1,1\n").unwrap();
    let cfg = write_config(dir.path(), &format!("feature_matrix = \"{}\"\n", matrix.display()));
    let out = styloshift(&["run-all", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("features"), "{}", stderr(&out));
}

#[test]
fn human_only_run_skips_configs_without_continuations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = styloshift(&["run-all", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = stdout(&out);
    assert!(report.contains("generate  skipped"), "{report}");
    assert!(report.contains("0 configs benchmarked, 1 skipped"), "{report}");
    assert!(dir.path().join("ws/report/scatter.human.svg").is_file());
    assert!(!dir.path().join("ws/report/heatmap.svg").exists());

    let out = styloshift(&["bench", cfg.to_str().unwrap()]);
    assert_eq!(stdout(&out).trim(), "bench     cached");
}

#[test]
fn generate_rejects_unknown_model_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = styloshift(&["generate", cfg.to_str().unwrap(), "--model", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn split_and_tag() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src/press");
    fs::create_dir_all(&src).unwrap();
    fs::copy(fixture("corpus/sources/press_01.txt"), src.join("a.txt")).unwrap();
    fs::write(src.join("short.txt"), "Too short.").unwrap();
    let out_dir = dir.path().join("corpus");
    let out = styloshift(&[
        "split",
        dir.path().join("src").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--prompt-words",
        "50",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("1 documents split, 1 skipped"));
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("genre = \"press\""));
    let part1 = fs::read_to_string(out_dir.join("texts/a.part1.txt")).unwrap();
    assert_eq!(part1.split_whitespace().count(), 50);

    let tagged = styloshift(&["tag", fixture("corpus/sources/fiction_01.txt").to_str().unwrap()]);
    assert!(tagged.status.success());
    let tsv = stdout(&tagged);
    assert!(tsv.lines().any(|l| l == "She\tPRP"), "{}", &tsv[..200]);
}
