use std::path::Path;
use std::process::{Command, Output};

use avenc_core::cost::{DeviceModel, LatencyLut};
use avenc_core::supernet::{Reference, SupernetSpec};

const QUICK: &str = r#"
seed = 4
profile = "micro"
[search]
steps = 30
batch_size = 4
gumbel_tau = 1.0
[train]
steps = 30
batch_size = 4
lr = 1e-2
[data.train]
n_frames = 64
keyframe_rate = 0.5
[data.test]
n_frames = 120
"#;

fn avenc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avenc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, extra: &str) {
    std::fs::write(dir.join("run.toml"), format!("{QUICK}{extra}")).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_config_key_exits_with_validation_status() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.toml"), "[search]\nstepz = 3\n").unwrap();
    let o = avenc(d.path(), &["--config", "bad.toml", "search"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
}

#[test]
fn missing_lut_fails_before_any_output() {
    let d = tempfile::tempdir().unwrap();
    config(d.path(), "[paths]\nlut = \"missing.csv\"\n");
    let o = avenc(d.path(), &["--config", "run.toml", "--out", "o", "search"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("o").exists());
}

#[test]
fn malformed_arch_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    config(d.path(), "");
    std::fs::create_dir(d.path().join("out")).unwrap();
    std::fs::write(d.path().join("out/arch.json"), "{\"views\": []}").unwrap();
    let o = avenc(d.path(), &["--config", "run.toml", "train"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bundled_encoders_keep_their_flops_order() {
    let d = tempfile::tempdir().unwrap();
    let mut totals = Vec::new();
    for name in ["AVE-S", "AVE-M", "AVE-L"] {
        let o = avenc(d.path(), &["--out", name, "flops", name]);
        assert!(o.status.success());
        totals.push(json(&d.path().join(name).join("flops.json"))["total_mflops"].as_f64().unwrap());
    }
    assert!(totals[0] < totals[1] && totals[1] < totals[2], "{totals:?}");
}

#[test]
fn latency_is_the_lut_score() {
    let d = tempfile::tempdir().unwrap();
    let o = avenc(d.path(), &["latency", "AVE-L"]);
    assert!(o.status.success());
    let spec = SupernetSpec::full();
    let want = LatencyLut::synthetic(&spec, &DeviceModel::default())
        .score_arch(&spec, &Reference::Large.arch())
        .unwrap();
    assert_eq!(json(&d.path().join("out/latency.json"))["latency_ms"].as_f64().unwrap(), want);
    let lut = LatencyLut::from_csv_str(&std::fs::read_to_string(d.path().join("out/lut.csv")).unwrap()).unwrap();
    assert_eq!(lut.score_arch(&spec, &Reference::Large.arch()).unwrap(), want);
}

#[test]
fn pipeline_runs_and_zero_threshold_never_skips() {
    let d = tempfile::tempdir().unwrap();
    config(d.path(), "[latex]\nthresholds = [0.0]\ninclude_infinity = false\ntrace = true\n");
    for cmd in ["gen-data", "search", "train", "eval", "simulate", "flops", "latency"] {
        let o = avenc(d.path(), &["--config", "run.toml", cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read_to_string(d.path().join("out/simulate.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "threshold,skip_ratio,mean_mse");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].split(',').nth(1), Some("0.0"));
    let metrics = json(&d.path().join("out/train_metrics.json"));
    assert!(metrics["train"]["latent_mse"].as_f64().unwrap().is_finite());
    assert_eq!(metrics["test"]["frames"], 120);
    assert!(d.path().join("out/simulate_trace.json").is_file());
}

#[test]
fn zero_training_steps_report_the_initial_model() {
    let d = tempfile::tempdir().unwrap();
    config(d.path(), "");
    assert!(avenc(d.path(), &["--config", "run.toml", "search"]).status.success());
    std::fs::write(d.path().join("zero.toml"), QUICK.replace("[train]\nsteps = 30", "[train]\nsteps = 0")).unwrap();
    let o = avenc(d.path(), &["--config", "zero.toml", "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&d.path().join("out/train_metrics.json"));
    assert_eq!(m["test"], m["initial_test"]);
}

#[test]
fn recorded_sequences_replace_generated_ones() {
    let d = tempfile::tempdir().unwrap();
    config(d.path(), "");
    assert!(avenc(d.path(), &["--config", "run.toml", "--out", "gen", "gen-data"]).status.success());
    for out in ["a", "b"] {
        let extra = if out == "a" {
            String::new()
        } else {
            "[paths]\ntrain_data = \"gen/train.avsq\"\ntest_data = \"gen/test.avsq\"\n".to_string()
        };
        config(d.path(), &extra);
        for cmd in ["search", "train"] {
            let o = avenc(d.path(), &["--config", "run.toml", "--out", out, cmd]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for f in ["arch.json", "params.json", "search_log.jsonl"] {
        assert_eq!(
            std::fs::read(d.path().join("a").join(f)).unwrap(),
            std::fs::read(d.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
