use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
n_components = 4
seed = 5

[gmm]
max_iter = 20

[grid]
c_values = [0.125, 2.0, 32.0]
gamma_values = [0.0625, 1.0]
inner_folds = 3
"#;

fn aed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aed"))
        .args(args)
        .env_remove("AED_CACHE_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = aed(args);
    assert!(
        out.status.success(),
        "aed {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    config: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let corpus = root.join("corpus");
    ok(&["synth", "--out", s(&corpus), "--clips-per-class", "10", "--seconds", "0.5", "--seed", "11"]);
    let config = root.join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    Fixture {
        manifest: corpus.join("manifest.csv"),
        _dir: dir,
        root,
        config,
    }
}

fn bundle(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_writes_generic_manifest() {
    let f = fixture();
    let text = std::fs::read_to_string(&f.manifest).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("clip_id,path,label,fold"));
    assert_eq!(lines.count(), 30);
}

#[test]
fn run_then_report_with_fusion() {
    let f = fixture();
    let results = f.root.join("results");
    let base = ["run", "--manifest", s(&f.manifest), "--config", s(&f.config), "--out", s(&results)];
    let out = ok(&base);
    assert!(out.contains("alpha/ck/M4: MAP"), "{out}");
    ok(&[&base[..], &["--variant", "beta_s", "--kernel", "lk"]].concat());
    assert!(results.join("alpha_ck_M4.json").exists());
    assert!(results.join("beta_s_lk_M4.json").exists());

    let report = f.root.join("report");
    let out = ok(&["report", s(&results), "--out", s(&report), "--fuse"]);
    assert!(out.contains("fusion of"), "{out}");
    let map = std::fs::read_to_string(report.join("map.csv")).unwrap();
    assert!(map.starts_with("M,alpha_ck,beta_s_lk\n"), "{map}");
    assert!(report.join("alpha_ck_M4/det/tone.csv").exists());
    assert!(report.join("fusion/fusion.json").exists());
    assert!(report.join("fusion/det/chirp.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let f = fixture();
    let results = f.root.join("results");
    ok(&[
        "run", "--manifest", s(&f.manifest), "--config", s(&f.config), "--out", s(&results),
        "--seed", "9", "--relevance", "10", "--c-values", "1,4", "--kernel", "lk",
    ]);
    let b = bundle(&results.join("alpha_lk_M4.json"));
    let cfg = &b["config"];
    assert_eq!(cfg["n_components"], 4);
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["relevance"], 10.0);
    assert_eq!(cfg["grid"]["c_values"], serde_json::json!([1.0, 4.0]));
    assert_eq!(cfg["gmm"]["max_iter"], 20);
}

#[test]
fn sweep_skips_incompatible_cells() {
    let f = fixture();
    let results = f.root.join("sweep");
    let out = ok(&[
        "sweep", "--manifest", s(&f.manifest), "--config", s(&f.config), "--out", s(&results),
        "--variants", "alpha,beta_s", "--kernels", "lk,ck", "--sizes", "2,4",
    ]);
    assert!(out.contains("6 cells"), "{out}");
    assert!(!results.join("beta_s_ck_M4.json").exists());
    let mauc = std::fs::read_to_string(results.join("mauc.csv")).unwrap();
    assert_eq!(mauc.lines().count(), 3, "{mauc}");
}

#[test]
fn cache_env_and_stage_commands() {
    let f = fixture();
    let cache = f.root.join("cache");
    let csv = f.root.join("mfcc");
    let out = Command::new(env!("CARGO_BIN_EXE_aed"))
        .args(["extract", "--manifest", s(&f.manifest), "--config", s(&f.config), "--mfcc-csv", s(&csv)])
        .env("AED_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("30 clips,"));
    assert!(cache.join("mfcc").is_dir());
    assert_eq!(std::fs::read_dir(&csv).unwrap().count(), 30);

    let gmms = f.root.join("gmms");
    ok(&[
        "train-gmm", "--manifest", s(&f.manifest), "--config", s(&f.config), "--fold", "3",
        "--out", s(&gmms),
    ]);
    assert!(gmms.join("fold3.gmm").exists());
    assert!(!gmms.join("fold1.gmm").exists());
}

#[test]
fn errors_exit_nonzero_with_context() {
    let f = fixture();
    let missing = f.root.join("nope.csv");
    let out = aed(&["run", "--manifest", s(&missing)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    let out = aed(&["run", "--manifest", s(&f.manifest), "--variant", "beta_s", "--kernel", "ck"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("chi-square"));

    let out = aed(&["run", "--manifest", s(&f.manifest), "--kernel", "poly"]);
    assert!(!out.status.success());

    let bad = f.root.join("bad.toml");
    std::fs::write(&bad, "n_components = 4\nbogus = 1\n").unwrap();
    let out = aed(&["run", "--manifest", s(&f.manifest), "--config", s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}
