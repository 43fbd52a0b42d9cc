use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use xdr_core::data::{Dataset, Domain};
use xdr_core::dataio::{load_checkpoint, read_dataset_dir, save_checkpoint, write_feature_file};
use xdr_core::evaluation::evaluate;
use xdr_core::layers::Layer;

fn xdr(args: &[&str]) -> Output {
    xdr_env(args, &[])
}

fn xdr_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xdr"));
    c.args(args).env_remove("XDR_SEED");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const TINY: &str = r#"{
  "synth": {"c_m": 4, "c_f": 4, "n_train": 12, "n_test": 6, "seed": 3},
  "train": {"epochs": 3, "eval_window": 2, "hidden": 8, "seed": 3}
}"#;

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let config = root.join("run.json");
    std::fs::write(&config, TINY).unwrap();
    let data = root.join("data");
    let o = xdr(&["gen-synth", "--config", s(&config), "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    Fixture { _tmp: tmp, root, config, data }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(f: &Fixture, variant: &str, out: &Path) -> Output {
    xdr(&["train", "--variant", variant, "--data", s(&f.data), "--config", s(&f.config), "--out", s(out)])
}

#[test]
fn gen_synth_writes_both_splits() {
    let f = fixture();
    assert_eq!(read_dataset_dir(&f.data.join("train")).unwrap().len(), 12);
    assert_eq!(read_dataset_dir(&f.data.join("test")).unwrap().len(), 6);
    assert!(f.data.join("train/xm/train_00000.fea").is_file());
}

#[test]
fn train_prints_config_then_epochs_and_keeps_last_window() {
    let f = fixture();
    let out = f.root.join("ck");
    let o = train(&f, "ln", &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("config={"), "{}", lines[0]);
    assert!(lines[0].contains("\"seed\":3"));
    let epochs: Vec<&str> = lines.iter().filter(|l| l.starts_with("epoch=")).copied().collect();
    assert_eq!(epochs.len(), 3);
    assert!(epochs[2].starts_with("epoch=3 loss="));
    let mut kept: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".ckpt"))
        .collect();
    kept.sort();
    assert_eq!(kept, ["epoch_0002.ckpt", "epoch_0003.ckpt"]);
    assert_eq!(std::fs::read_to_string(out.join("train.log")).unwrap().lines().count(), 3);
}

#[test]
fn repeated_training_is_bitwise_identical() {
    let f = fixture();
    let (a, b) = (f.root.join("a"), f.root.join("b"));
    assert_eq!(code(&train(&f, "lngn", &a)), 0);
    assert_eq!(code(&train(&f, "lngn", &b)), 0);
    for name in ["epoch_0002.ckpt", "epoch_0003.ckpt"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
}

#[test]
fn eval_window_one_matches_single_checkpoint() {
    let f = fixture();
    let out = f.root.join("ck");
    assert_eq!(code(&train(&f, "zscore", &out)), 0);
    let report = f.root.join("r.json");
    let errors = f.root.join("e.csv");
    let o = xdr(&[
        "eval", "--checkpoints", s(&out), "--data", s(&f.data), "--window", "1",
        "--report", s(&report), "--errors", s(&errors),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ck = load_checkpoint(&out.join("epoch_0003.ckpt")).unwrap();
    let test = Dataset::<f64>::from_samples(&read_dataset_dir(&f.data.join("test")).unwrap()).unwrap();
    let direct = evaluate(&ck.regressor::<f64>().unwrap(), &test).unwrap();
    assert_eq!(r["mae_kcal"].as_f64().unwrap().to_bits(), direct.mae.to_bits());
    assert_eq!(r["mape_pct"].as_f64().unwrap().to_bits(), direct.mape.to_bits());
    assert_eq!(std::fs::read_to_string(&errors).unwrap().lines().count(), 6 + 1);
}

#[test]
fn eval_window_two_averages() {
    let f = fixture();
    let out = f.root.join("ck");
    assert_eq!(code(&train(&f, "xm", &out)), 0);
    let report = f.root.join("r.json");
    let o = xdr(&["eval", "--checkpoints", s(&out), "--data", s(&f.data), "--window", "2", "--report", s(&report)]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let per = r["per_checkpoint"].as_array().unwrap();
    let mean = (per[0][1].as_f64().unwrap() + per[1][1].as_f64().unwrap()) / 2.0;
    assert_eq!(r["mae_kcal"].as_f64().unwrap(), mean);
    // more checkpoints requested than kept
    let o = xdr(&["eval", "--checkpoints", s(&out), "--data", s(&f.data), "--window", "5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn predict_zero_final_layer_prints_train_mean() {
    let f = fixture();
    let out = f.root.join("ck");
    assert_eq!(code(&train(&f, "concat", &out)), 0);
    let mut ck = load_checkpoint(&out.join("epoch_0003.ckpt")).unwrap();
    let mut reg = ck.regressor::<f64>().unwrap();
    let last = reg.head.trunk_mut().layers.last_mut().unwrap();
    let Layer::Linear(fc) = last else { panic!("final layer is linear") };
    fc.weight.data_mut().fill(0.0);
    fc.bias.fill(0.0);
    ck.params = reg.head.flat_params();
    let zero = f.root.join("zero.ckpt");
    save_checkpoint(&zero, &ck).unwrap();
    let xm = f.data.join("test/xm/test_00000.fea");
    let xf = f.data.join("test/xf/test_00000.fea");
    let o = xdr(&["predict", "--checkpoint", s(&zero), "--features", s(&xm), s(&xf)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: f64 = stdout(&o).lines().last().unwrap().parse().unwrap();
    assert_eq!(printed, ck.target_stats.unwrap().mean);
}

#[test]
fn predict_rejects_swapped_domains_and_bad_files() {
    let f = fixture();
    let out = f.root.join("ck");
    assert_eq!(code(&train(&f, "xf", &out)), 0);
    let ck = out.join("epoch_0003.ckpt");
    let xm = f.data.join("test/xm/test_00000.fea");
    let xf = f.data.join("test/xf/test_00000.fea");
    let o = xdr(&["predict", "--checkpoint", s(&ck), "--features", s(&xf), s(&xm)]);
    assert_eq!(code(&o), 2);
    let junk = f.root.join("junk.fea");
    std::fs::write(&junk, b"XXXX").unwrap();
    let o = xdr(&["predict", "--checkpoint", s(&ck), "--features", s(&junk), s(&xf)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("offset 0"));
    let o = xdr(&["predict", "--checkpoint", s(&xm), "--features", s(&xm), s(&xf)]);
    assert_eq!(code(&o), 2);
    let wide = f.root.join("wide.fea");
    write_feature_file(&wide, Domain::EnergyDistribution, &[1.0; 9]).unwrap();
    let o = xdr(&["predict", "--checkpoint", s(&ck), "--features", s(&wide), s(&xf)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_override_is_printed_and_applied() {
    let f = fixture();
    let out = f.root.join("o");
    let o = xdr_env(&["gen-synth", "--config", s(&f.config), "--out", s(&out)], &[("XDR_SEED", "99")]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("XDR_SEED=99"));
    assert!(text.contains("\"seed\":99"));
    let o = xdr_env(&["gen-synth", "--out", s(&out)], &[("XDR_SEED", "x")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_passes_and_rejects_bad_flags() {
    let o = xdr(&["gradcheck", "--variant", "lngn"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("config="));
    for name in ["linear", "relu", "dropout", "layer_norm", "group_norm", "head:lngn"] {
        assert!(text.contains(&format!("check={name}")), "{name}");
    }
    assert!(text.lines().filter(|l| l.starts_with("check=")).all(|l| l.ends_with("status=pass")));
    assert_eq!(code(&xdr(&["gradcheck", "--dims", "6"])), 1);
    assert_eq!(code(&xdr(&["gradcheck", "--variant", "bogus"])), 1);
    assert_eq!(code(&xdr(&["frobnicate"])), 1);
    assert_eq!(code(&xdr(&["--help"])), 0);
}

#[test]
fn manifest_with_bad_energy_is_a_data_error() {
    let f = fixture();
    let manifest = f.data.join("train/manifest.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(&manifest, text.replacen(' ', " 0 #", 1)).unwrap();
    let o = train(&f, "xm", &f.root.join("ck"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn table1_small_run_reports_six_rows_per_seed() {
    let f = fixture();
    let out = f.root.join("t1");
    let o = xdr(&["table1", "--config", s(&f.config), "--out", s(&out), "--seeds", "7,8"]);
    assert!(matches!(code(&o), 0 | 3), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("table1.txt")).unwrap();
    assert_eq!(text.matches("seed=").count(), 2 + 8);
    assert_eq!(text.lines().filter(|l| l.starts_with("assertion=")).count(), 4);
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("table1.json")).unwrap()).unwrap();
    assert_eq!(j["runs"][0]["rows"].as_array().unwrap().len(), 6);
    assert!(stdout(&o).lines().next().unwrap().starts_with("config="));
}
