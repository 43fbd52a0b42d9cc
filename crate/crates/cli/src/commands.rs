use serde::Serialize;
use std::path::{Path, PathBuf};
use xdr_core::data::{Dataset, Domain, Sample};
use xdr_core::dataio::{
    load_checkpoint, read_dataset_dir, read_feature_file, resolve_split, save_checkpoint, write_atomic,
    write_dataset_dir, RunConfig,
};
use xdr_core::evaluation::{baseline, evaluate_window, export_errors, WindowReport};
use xdr_core::gradcheck;
use xdr_core::heads::HeadVariant;
use xdr_core::numeric::{Matrix, Real};
use xdr_core::par::Exec;
use xdr_core::synthbench::{generate, ordering_sweep, SweepReport};
use xdr_core::training::{init_model, train_with, Checkpoint, Precision, TrainConfig};

pub const SEED_ENV: &str = "XDR_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] xdr_core::Error),
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(xdr_core::Error::Config(_)) => 1,
            CliError::Core(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(xdr_core::Error::Io { path: path.into(), source: e })
}

/// Loads the run configuration (defaults when absent) and applies `XDR_SEED`.
fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        let seed: u64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        println!("{SEED_ENV}={seed} overrides config seed");
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.synth.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}

fn echo<T: Serialize>(value: &T) -> Result<()> {
    println!("config={}", serde_json::to_string(value).map_err(xdr_core::Error::from)?);
    Ok(())
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn gen_synth(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    echo(&serde_json::json!({ "command": "gen-synth", "out": out, "synth": cfg.synth }))?;
    let (train, test) = generate(&cfg.synth)?;
    for (name, split) in [("train", &train), ("test", &test)] {
        let dir = out.join(name);
        mkdir(&dir)?;
        write_dataset_dir(&dir, split)?;
        println!("split={name} samples={} dir={}", split.len(), dir.display());
    }
    cfg.save(&out.join("config.json"))?;
    Ok(())
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.ckpt")
}

pub fn train(variant: &str, data: &Path, config: Option<&Path>, out: &Path, keep_last: Option<usize>) -> Result<()> {
    let variant: HeadVariant = variant.parse()?;
    let cfg = load_config(config)?;
    let keep = keep_last.unwrap_or(cfg.train.eval_window);
    let dir = resolve_split(data, "train")?;
    echo(&serde_json::json!({
        "command": "train",
        "variant": variant,
        "data": dir,
        "out": out,
        "keep_last": keep,
        "train": cfg.train,
    }))?;
    let samples = read_dataset_dir(&dir)?;
    mkdir(out)?;
    cfg.save(&out.join("config.json"))?;
    match cfg.train.precision {
        Precision::F64 => train_typed::<f64>(variant, &samples, &cfg.train, out, keep),
        Precision::F32 => train_typed::<f32>(variant, &samples, &cfg.train, out, keep),
    }
}

fn train_typed<T: Real>(variant: HeadVariant, samples: &[Sample], config: &TrainConfig, out: &Path, keep: usize) -> Result<()> {
    let data = Dataset::<T>::from_samples(samples)?;
    let (cm, cf) = data.widths();
    let mut model = init_model::<T>(variant, cm, cf, config)?;
    let mut log = String::new();
    train_with(&mut model, &data, config, |r| {
        let line = format!("epoch={} loss={}", r.epoch, r.loss);
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
        save_checkpoint(&out.join(checkpoint_name(r.epoch)), &r.checkpoint())?;
        if keep > 0 && r.epoch > keep {
            let old = out.join(checkpoint_name(r.epoch - keep));
            if old.exists() {
                std::fs::remove_file(&old).map_err(|e| xdr_core::Error::Io { path: old, source: e })?;
            }
        }
        write_atomic(&out.join("train.log"), log.as_bytes())
    })?;
    Ok(())
}

fn load_window(dir: &Path, window: usize) -> Result<Vec<Checkpoint>> {
    if window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    let mut cks = paths.iter().map(|p| load_checkpoint(p)).collect::<xdr_core::Result<Vec<_>>>()?;
    cks.sort_by_key(|c| c.epoch);
    if cks.len() < window {
        return Err(CliError::Usage(format!(
            "window {window} needs {window} checkpoints, found {} in {}",
            cks.len(),
            dir.display()
        )));
    }
    let cks = cks.split_off(cks.len() - window);
    if let Some(bad) = cks.iter().find(|c| c.head != cks[0].head) {
        return Err(CliError::Core(xdr_core::Error::Incompatible {
            path: dir.into(),
            msg: format!("epoch {} has a different head configuration", bad.epoch),
        }));
    }
    Ok(cks)
}

#[derive(Serialize)]
struct EvalReport {
    variant: HeadVariant,
    window: usize,
    n: usize,
    mae_kcal: f64,
    mape_pct: f64,
    epochs: Vec<usize>,
    per_checkpoint: Vec<(usize, f64, f64)>,
}

pub fn eval(checkpoints: &Path, data: &Path, window: usize, report: Option<&Path>, errors: Option<&Path>) -> Result<()> {
    let dir = resolve_split(data, "test")?;
    echo(&serde_json::json!({
        "command": "eval",
        "checkpoints": checkpoints,
        "data": dir,
        "window": window,
        "report": report,
        "errors": errors,
    }))?;
    let cks = load_window(checkpoints, window)?;
    let samples = read_dataset_dir(&dir)?;
    let w = match cks[0].config.precision {
        Precision::F64 => evaluate_window(&cks, &Dataset::<f64>::from_samples(&samples)?)?,
        Precision::F32 => evaluate_window(&cks, &Dataset::<f32>::from_samples(&samples)?)?,
    };
    let variant = cks[0].head.variant;
    println!(
        "variant={variant} window={} epochs={}..{} n={} mae_kcal={} mape_pct={}",
        w.window,
        w.epochs[0],
        w.epochs[w.epochs.len() - 1],
        w.n,
        w.mae,
        w.mape
    );
    if let Some(path) = report {
        let r = eval_report(variant, &w);
        let mut s = serde_json::to_string_pretty(&r).map_err(xdr_core::Error::from)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())?;
    }
    if let Some(path) = errors {
        export_errors(w.last(), path)?;
    }
    Ok(())
}

fn eval_report(variant: HeadVariant, w: &WindowReport) -> EvalReport {
    EvalReport {
        variant,
        window: w.window,
        n: w.n,
        mae_kcal: w.mae,
        mape_pct: w.mape,
        epochs: w.epochs.clone(),
        per_checkpoint: w.epochs.iter().zip(&w.per_checkpoint).map(|(&e, r)| (e, r.mae, r.mape)).collect(),
    }
}

fn parse_dims(dims: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("--dims {dims:?}: expected two positive integers as m,f"));
    let (m, f) = dims.split_once(',').ok_or_else(bad)?;
    let m: usize = m.trim().parse().map_err(|_| bad())?;
    let f: usize = f.trim().parse().map_err(|_| bad())?;
    if m == 0 || f == 0 {
        return Err(bad());
    }
    Ok((m, f))
}

pub fn gradcheck(variant: Option<&str>, dims: &str, seed: u64) -> Result<()> {
    let (m, f) = parse_dims(dims)?;
    let variants = match variant {
        Some(v) => vec![v.parse::<HeadVariant>()?],
        None => HeadVariant::ALL.to_vec(),
    };
    echo(&serde_json::json!({
        "command": "gradcheck",
        "variants": variants,
        "c_m": m,
        "c_f": f,
        "seed": seed,
        "step": gradcheck::STEP,
        "tolerance": gradcheck::TOLERANCE,
    }))?;
    let reports = gradcheck::run_suite(&variants, m, f, seed)?;
    let mut failed = Vec::new();
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!("check={} max_rel_error={:.3e} checked={} status={status}", r.name, r.max_rel_error, r.checked);
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn read_row(path: &Path, want: Domain) -> Result<Vec<f64>> {
    let f = read_feature_file(path)?;
    if f.domain != want {
        return Err(CliError::Core(xdr_core::Error::Format {
            path: path.into(),
            offset: 4,
            msg: format!("domain {:?}, expected {want:?}", f.domain),
        }));
    }
    Ok(f.values)
}

pub fn predict(checkpoint: &Path, xm: &Path, xf: &Path) -> Result<()> {
    echo(&serde_json::json!({ "command": "predict", "checkpoint": checkpoint, "x_m": xm, "x_f": xf }))?;
    let ck = load_checkpoint(checkpoint)?;
    let m = read_row(xm, Domain::EnergyDistribution)?;
    let f = read_row(xf, Domain::Rgb)?;
    let kcal = match ck.config.precision {
        Precision::F64 => predict_typed::<f64>(&ck, m, f)?,
        Precision::F32 => predict_typed::<f32>(&ck, m, f)?,
    };
    println!("{kcal}");
    Ok(())
}

fn predict_typed<T: Real>(ck: &Checkpoint, m: Vec<f64>, f: Vec<f64>) -> Result<f64> {
    let reg = ck.regressor::<T>()?;
    let row = |v: Vec<f64>| Matrix::new(1, v.len(), v.into_iter().map(T::of).collect());
    let out = reg.predict_kcal(&row(m)?, &row(f)?)?;
    Ok(out[0])
}

fn parse_seeds(seeds: &str) -> Result<Vec<u64>> {
    let parsed: std::result::Result<Vec<u64>, _> = seeds.split(',').map(|s| s.trim().parse()).collect();
    match parsed {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Usage(format!("--seeds {seeds:?}: expected comma-separated integers"))),
    }
}

pub fn table1(config: Option<&Path>, out: &Path, seeds: &str) -> Result<()> {
    let mut seeds = parse_seeds(seeds)?;
    let cfg = match config {
        Some(_) => load_config(config)?,
        None => {
            let mut c = RunConfig::benchmark();
            if std::env::var(SEED_ENV).is_ok() {
                let env = load_config(None)?;
                c.synth.seed = env.synth.seed;
                c.train.seed = env.train.seed;
            }
            c
        }
    };
    if std::env::var(SEED_ENV).is_ok() {
        seeds = vec![cfg.train.seed];
    }
    echo(&serde_json::json!({
        "command": "table1",
        "out": out,
        "seeds": seeds,
        "synth": cfg.synth,
        "train": cfg.train,
    }))?;
    mkdir(out)?;
    let start = std::time::Instant::now();
    let sweep = ordering_sweep(Exec::default(), &cfg.synth, &cfg.train, &seeds)?;
    let text = render_table(&sweep, start.elapsed().as_secs_f64());
    print!("{text}");
    write_atomic(&out.join("table1.txt"), text.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&sweep).map_err(xdr_core::Error::from)?;
    json.push('\n');
    write_atomic(&out.join("table1.json"), json.as_bytes())?;
    if sweep.passed() {
        Ok(())
    } else {
        Err(CliError::Assertion("ordering assertions failed; see table1.txt".into()))
    }
}

fn render_table(sweep: &SweepReport, seconds: f64) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    for run in &sweep.runs {
        let _ = writeln!(s, "seed={}", run.seed);
        let _ = writeln!(s, "{:<22} {:>10} {:>9} {:>15} {:>14}", "method", "MAE(kCal)", "MAPE(%)", "ref MAE(kCal)", "ref MAPE(%)");
        for row in &run.rows {
            let (pm, pp) = baseline::reference(row.variant);
            let _ = writeln!(
                s,
                "{:<22} {:>10.2} {:>9.2} {:>15.2} {:>14.2}",
                row.variant.label(),
                row.mae_kcal,
                row.mape_pct,
                pm,
                pp
            );
        }
        for c in &run.checks {
            let _ = writeln!(s, "check={} seed={} status={} {}", c.name, run.seed, if c.passed { "pass" } else { "FAIL" }, c.detail);
        }
    }
    for (name, passed, needed) in &sweep.tally {
        let status = if passed >= needed { "pass" } else { "FAIL" };
        let _ = writeln!(s, "assertion={name} seeds_passed={passed}/{} required={needed} status={status}", sweep.runs.len());
    }
    let _ = writeln!(s, "runtime_s={seconds:.1}");
    s
}
