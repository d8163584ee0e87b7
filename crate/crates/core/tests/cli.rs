use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ffm::data::read_examples;
use serde_json::Value;

fn ffm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffm"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("FFM_THREADS")
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = ffm(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn synth(dir: &Path, name: &str, seed: &str, n: &str) -> PathBuf {
    ok(dir, &["gen-synth", "--fields", "5", "--card", "30", "--seed", seed, "--n", n, "--out", name]);
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let args = ["gen-synth", "--fields", "8", "--card", "100", "--blocks", "90", "--drift", "0.02", "--seed", "1", "--n", "9000"];
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&a, &args);
    ok(&b, &args);
    for f in ["synth.ffm", "blocks.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_examples(a.join("synth.ffm"), 8).unwrap().len(), 9000);
    let index = std::fs::read_to_string(a.join("blocks.csv")).unwrap();
    assert!(index.starts_with("block_id,byte_offset,count\n"));
    assert_eq!(index.lines().count(), 91);
}

#[test]
fn train_is_reproducible_and_replayable() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    let tr = synth(&data, "tr.ffm", "1", "3000");
    let va = synth(&data, "va.ffm", "2", "1000");
    let args = ["train", "--data", s(&tr), "--val", s(&va), "--fields", "5", "--k", "4", "--d", "4096", "--eta", "0.2", "--seed", "7", "--save-premature"];
    let (a, b, c) = (t.path().join("a"), t.path().join("b"), t.path().join("c"));
    ok(&a, &args);
    ok(&b, &args);
    let model = std::fs::read(a.join("model.ffm")).unwrap();
    assert_eq!(model, std::fs::read(b.join("model.ffm")).unwrap());
    assert!(a.join("premature.ffm").exists());
    let progress = std::fs::read_to_string(a.join("progress.csv")).unwrap();
    assert!(progress.starts_with("epoch,train_ll,val_ll,seconds\n"));

    ok(&c, &["replay", s(&a.join("run_manifest.json"))]);
    assert_eq!(model, std::fs::read(c.join("model.ffm")).unwrap());
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["threads"], 1);

    let lr = t.path().join("lr");
    ok(&lr, &["train", "--data", s(&tr), "--val", s(&va), "--fields", "5", "--d", "4096", "--model-kind", "lr-cross"]);
    let loaded = ffm::FfmModel::load(lr.join("model.ffm")).unwrap();
    assert_eq!(loaded.config().kind, ffm::ModelKind::LrCross);

    let p = t.path().join("p");
    ok(&p, &["predict", "--model", s(&a.join("model.ffm")), "--data", s(&va)]);
    let preds = std::fs::read_to_string(p.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1001);
}

#[test]
fn eval_constant_base_rate_has_zero_nll() {
    let t = tempfile::tempdir().unwrap();
    let te = synth(t.path(), "te.ffm", "3", "2000");
    let xs = read_examples(&te, 5).unwrap();
    let pbar = xs.iter().map(|x| x.weight * x.target()).sum::<f64>() / xs.iter().map(|x| x.weight).sum::<f64>();
    let out = t.path().join("e");
    let stdout = ok(&out, &["eval", "--data", s(&te), "--fields", "5", "--constant", &format!("{pbar:.17}"), "--beta", "10", "--beta", "1000", "--resamples", "200"]);
    let json: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(json, serde_json::from_slice::<Value>(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap());
    assert!(json["nll"].as_f64().unwrap().abs() <= 1e-12, "{}", json["nll"]);
    let utility = json["utility"].as_object().unwrap();
    assert_eq!(utility.len(), 2);
    assert!(utility.contains_key("10") && utility.contains_key("1000"));
    check_schema(&json);
}

/// `{ll, nll, utility: {β: x}, ci: {name: [lo, hi]}, n}` and nothing else.
fn check_schema(json: &Value) {
    let obj = json.as_object().expect("object");
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["ci", "ll", "n", "nll", "utility"]);
    assert!(obj["ll"].is_f64() && obj["nll"].is_f64());
    assert!(obj["n"].is_u64());
    for (beta, v) in obj["utility"].as_object().unwrap() {
        assert!(beta.parse::<f64>().is_ok(), "{beta}");
        assert!(v.is_f64());
    }
    for (name, v) in obj["ci"].as_object().unwrap() {
        let pair = v.as_array().unwrap_or_else(|| panic!("{name}"));
        assert_eq!(pair.len(), 2);
        assert!(pair[0].as_f64().unwrap() <= pair[1].as_f64().unwrap(), "{name}");
    }
}

#[test]
fn ipm_and_rolling_write_csvs() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    let tr = synth(&data, "tr.ffm", "1", "2000");
    let va = synth(&data, "va.ffm", "2", "500");
    let ipm = t.path().join("ipm");
    ok(&ipm, &["ipm-sim", "--data", s(&tr), "--val", s(&va), "--fields", "5", "--d", "4096", "--machines", "1,2,4", "--variant", "improved", "--eta", "3.0", "--max-epochs", "5"]);
    let sweep = std::fs::read_to_string(ipm.join("ipm_sweep.csv")).unwrap();
    assert!(sweep.starts_with("machines,variant,eta,epochs_to_best,best_logloss,speedup_vs_single\n"));
    assert_eq!(sweep.lines().count(), 4);

    let gen = t.path().join("gen");
    ok(&gen, &["gen-synth", "--fields", "5", "--card", "30", "--blocks", "12", "--drift", "0.05", "--n", "6000"]);
    let roll = t.path().join("roll");
    ok(&roll, &[
        "rolling", "--data", s(&gen.join("synth.ffm")), "--index", s(&gen.join("blocks.csv")), "--fields", "5", "--d", "4096",
        "--window", "6", "--seeding", "premature", "--train-blocks", "4", "--max-epochs", "5",
    ]);
    let report = std::fs::read_to_string(roll.join("rolling_report.csv")).unwrap();
    assert!(report.starts_with("step,seeding,train_blocks,test_ll,test_nll,epochs,seconds\n"));
    // 5 steps each for the baseline and the plan
    assert_eq!(report.lines().count(), 11);
    let delta = std::fs::read_to_string(roll.join("delta_vs_baseline.csv")).unwrap();
    assert!(delta.starts_with("step,plan,test_ll,baseline_ll,delta_ll\n"));

    let split = t.path().join("split");
    ok(&split, &["split", "--data", s(&gen.join("synth.ffm")), "--fields", "5", "--blocks", "12"]);
    assert_eq!(std::fs::read(split.join("blocks.csv")).unwrap(), std::fs::read(gen.join("blocks.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let tr = synth(t.path(), "tr.ffm", "1", "200");
    let bad_k = ffm(t.path(), &["train", "--data", s(&tr), "--val", s(&tr), "--fields", "5", "--k", "0"]);
    assert_eq!(bad_k.status.code(), Some(2));
    let bad_p = ffm(t.path(), &["eval", "--data", s(&tr), "--fields", "5", "--constant", "1.5"]);
    assert_eq!(bad_p.status.code(), Some(2));
    let missing = ffm(t.path(), &["eval", "--data", s(&t.path().join("nope.ffm")), "--fields", "5", "--constant", "0.5"]);
    assert_eq!(missing.status.code(), Some(3));
    let wrong_fields = ffm(t.path(), &["eval", "--data", s(&tr), "--fields", "3", "--constant", "0.5"]);
    assert_eq!(wrong_fields.status.code(), Some(3));
}

#[test]
fn bench_reports_a_linear_fit() {
    let t = tempfile::tempdir().unwrap();
    let stdout = ok(t.path(), &["predict", "--bench", "--bench-n", "2000", "--bench-repeats", "2"]);
    assert!(stdout.contains("R^2"));
    let csv = std::fs::read_to_string(t.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
