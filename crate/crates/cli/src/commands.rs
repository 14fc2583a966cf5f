//! One function per subcommand.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use grdl_core::bounds::{
    compare_complexity, correctness_threshold, gin_bound, grdl_bound, misclassification_bound,
    multi_ref_bound, profile, empirical_ramp_risk,
};
use grdl_core::graph::{
    generate_synthetic, kfold_splits, parse_tudataset, write_tudataset, Dataset, DatasetSplit,
    Graph,
};
use grdl_core::mmd::{distance_labels, distance_matrix, write_distance_csv};
use grdl_core::model::Model;
use grdl_core::train::loss::softmax_cross_entropy;
use grdl_core::train::{self as trainer, Checkpoint, CheckpointMeta, RefSize, TrainConfig};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::{fingerprint, now, write_atomic, RunManifest};
use crate::{BoundsArgs, Common, ModelArgs, Overrides, SyntheticArgs, Theorem, TrainArgs};

fn set_threads(common: &Common) {
    if let Some(j) = common.jobs {
        // Only fails if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
}

/// Defaults, then the config file (complete), then flags.
pub fn load_config(common: &Common, o: &Overrides) -> CliResult<TrainConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    macro_rules! apply {
        ($($f:ident),*) => { $(if let Some(v) = o.$f { cfg.$f = v; })* };
    }
    apply!(layers, mlp_depth, hidden, ref_per_class, lambda, lr, lr_theta, lr_decay, batch_size, epochs, holdout, folds, val_interval);
    if let Some(s) = &o.ref_size {
        let value = match s.parse::<u64>() {
            Ok(n) => json!(n),
            Err(_) => json!(s),
        };
        cfg.ref_size = serde_json::from_value::<RefSize>(value)
            .map_err(|e| CliError::config(format!("--ref-size: {e}")))?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_dir(common: &Common) -> CliResult<&Path> {
    common
        .data
        .as_deref()
        .ok_or_else(|| CliError::config("--data is required"))
}

/// `--name`, else the prefix of the only `*_A.txt` file, else the directory name.
fn dataset_name(common: &Common, dir: &Path) -> CliResult<String> {
    if let Some(n) = &common.name {
        return Ok(n.clone());
    }
    let prefixes: Vec<String> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter_map(|e| {
                    let f = e.file_name().to_string_lossy().into_owned();
                    f.strip_suffix("_A.txt").map(str::to_string)
                })
                .collect()
        })
        .unwrap_or_default();
    match prefixes.as_slice() {
        [only] => Ok(only.clone()),
        _ => dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::config("cannot infer dataset name; pass --name")),
    }
}

pub fn load_dataset(common: &Common) -> CliResult<Dataset> {
    let dir = data_dir(common)?;
    let ds = parse_tudataset(dir, &dataset_name(common, dir)?)?;
    log::info!(
        "loaded {}: {} graphs, {} classes, {} features",
        ds.name,
        ds.len(),
        ds.num_classes,
        ds.feature_dim()
    );
    Ok(ds)
}

fn out_dir(common: &Common) -> CliResult<Option<PathBuf>> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Some(dir.clone()))
        }
        None => Ok(None),
    }
}

fn required_out(common: &Common) -> CliResult<PathBuf> {
    out_dir(common)?.ok_or_else(|| CliError::config("--out is required"))
}

fn finish(
    command: &str,
    common: &Common,
    out: &Path,
    config: serde_json::Value,
    started: String,
    mut artifacts: Vec<PathBuf>,
) -> CliResult {
    let dataset = match &common.data {
        Some(d) => Some(fingerprint(d, &dataset_name(common, d)?)?),
        None => None,
    };
    artifacts.push(out.join("manifest.json"));
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        dataset,
        seed: common.seed,
        started,
        finished: now(),
        artifacts,
    };
    manifest.write(out)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

/// Everything trains; with a holdout fraction, a stratified holdout is kept
/// aside for checkpoint selection, otherwise selection uses the training set.
fn train_split(ds: &Dataset, cfg: &TrainConfig) -> CliResult<DatasetSplit> {
    let all: Vec<usize> = (0..ds.len()).collect();
    if cfg.holdout == 0.0 {
        return Ok(DatasetSplit {
            fold: 0,
            train: all.clone(),
            validation: all,
            test: vec![],
        });
    }
    let first = kfold_splits(&ds.labels(), cfg.folds, cfg.holdout, cfg.seed)?.remove(0);
    let validation = first.test;
    let train = all.into_iter().filter(|i| !validation.contains(i)).collect();
    Ok(DatasetSplit {
        fold: 0,
        train,
        validation,
        test: vec![],
    })
}

pub fn train(a: &TrainArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let cfg = load_config(&a.common, &a.overrides)?;
    let out = required_out(&a.common)?;
    let ds = load_dataset(&a.common)?;
    let split = train_split(&ds, &cfg)?;

    let metrics_path = out.join("metrics.jsonl");
    let mut metrics = std::io::BufWriter::new(fs::File::create(&metrics_path)?);
    let mut write_err = None;
    let outcome = trainer::train(&ds, &split, &cfg, |m| {
        log::info!(
            "epoch {} loss {:.5} train acc {:.3}{}",
            m.epoch,
            m.train_loss,
            m.train_acc,
            m.val_acc.map(|v| format!(" val acc {v:.3}")).unwrap_or_default()
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    });
    metrics.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let outcome = outcome?;

    let meta = CheckpointMeta {
        epoch: outcome.best_epoch,
        best_val_acc: Some(outcome.best_val_acc).filter(|v| v.is_finite()),
        ref_size: outcome.ref_size,
        class_values: ds.class_values.clone(),
    };
    let ckpt_path = out.join("checkpoint.json");
    Checkpoint::from_model(&outcome.best, &cfg, meta).save(&ckpt_path)?;
    log::info!(
        "best epoch {} (validation accuracy {:.4})",
        outcome.best_epoch,
        outcome.best_val_acc
    );
    finish("train", &a.common, &out, serde_json::to_value(&cfg)?, started, vec![ckpt_path, metrics_path])
}

pub fn cv(a: &TrainArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let cfg = load_config(&a.common, &a.overrides)?;
    let out = required_out(&a.common)?;
    let ds = load_dataset(&a.common)?;
    let report = trainer::cross_validate(&ds, &cfg, a.common.jobs.unwrap_or(1))?;
    let mut artifacts = Vec::new();
    for f in &report.per_fold {
        let meta = CheckpointMeta {
            epoch: f.best_epoch,
            best_val_acc: Some(f.best_val_acc).filter(|v| v.is_finite()),
            ref_size: f.model.refs.size(),
            class_values: ds.class_values.clone(),
        };
        let fold_cfg = TrainConfig { seed: f.seed, ..cfg.clone() };
        let path = out.join(format!("fold_{}.json", f.fold));
        Checkpoint::from_model(&f.model, &fold_cfg, meta).save(&path)?;
        artifacts.push(path);
    }
    let summary = out.join("summary.json");
    write_json(&summary, &report)?;
    artifacts.push(summary);
    log::info!("{} accuracy {:.4} ± {:.4}", report.metric, report.mean, report.std);
    finish("cv", &a.common, &out, serde_json::to_value(&cfg)?, started, artifacts)
}

fn load_model(a: &ModelArgs) -> CliResult<(Checkpoint, Model, Dataset)> {
    let ckpt = Checkpoint::load(&a.checkpoint)
        .map_err(|e| CliError::from(e).context(format!("loading {}", a.checkpoint.display())))?;
    let model = ckpt.to_model()?;
    let ds = load_dataset(&a.common)?;
    check_dims(&model, &ds)?;
    Ok((ckpt, model, ds))
}

fn check_dims(model: &Model, ds: &Dataset) -> CliResult {
    let want = model.encoder.config().input_dim;
    if ds.feature_dim() != want {
        return Err(CliError::data(format!(
            "dataset has {} features per node but the checkpoint expects {want}",
            ds.feature_dim()
        )));
    }
    Ok(())
}

fn all_graphs(ds: &Dataset) -> Vec<&Graph> {
    ds.graphs.iter().collect()
}

pub fn eval(a: &ModelArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let (ckpt, model, ds) = load_model(a)?;
    if ds.class_values != ckpt.meta.class_values {
        return Err(CliError::data(format!(
            "dataset classes {:?} differ from checkpoint classes {:?}",
            ds.class_values, ckpt.meta.class_values
        )));
    }
    let ev = trainer::evaluate(&model, &all_graphs(&ds), model.refs.classes() == 2)?;
    let report = json!({
        "num_graphs": ds.len(),
        "accuracy": ev.accuracy,
        "auc": ev.auc,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = out_dir(&a.common)? {
        let path = out.join("eval.json");
        write_json(&path, &report)?;
        finish("eval", &a.common, &out, serde_json::to_value(&ckpt.config)?, started, vec![path])?;
    }
    Ok(())
}

pub fn predict(a: &ModelArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let (ckpt, model, ds) = load_model(a)?;
    let ev = trainer::evaluate(&model, &all_graphs(&ds), false)?;
    let mut text = String::from("graph_index,predicted_class,score\n");
    for (i, &k) in ev.predictions.iter().enumerate() {
        text.push_str(&format!("{i},{k},{:?}\n", ev.scores.get(i, k)));
    }
    match out_dir(&a.common)? {
        Some(out) => {
            let path = out.join("predictions.csv");
            write_atomic(&path, text.as_bytes())?;
            finish("predict", &a.common, &out, serde_json::to_value(&ckpt.config)?, started, vec![path])?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn distances(a: &ModelArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let (ckpt, model, ds) = load_model(a)?;
    let embeddings = model.embed(&all_graphs(&ds))?;
    let c = distance_matrix(&embeddings, &model.refs)?;
    let names = distance_labels(ds.len(), &model.refs);
    let mut buf = Vec::new();
    write_distance_csv(&mut buf, &names, &c)?;
    match out_dir(&a.common)? {
        Some(out) => {
            let path = out.join("distances.csv");
            write_atomic(&path, &buf)?;
            finish("distances", &a.common, &out, serde_json::to_value(&ckpt.config)?, started, vec![path])?;
        }
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn parse_classifier(items: &[String]) -> CliResult<Vec<(f64, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, b) = s
                .split_once(':')
                .ok_or_else(|| CliError::config(format!("--classifier entry {s:?} is not kappa:b")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::config(format!("--classifier entry {s:?}: {e}")))
            };
            Ok((parse(k)?, parse(b)?))
        })
        .collect()
}

pub fn bounds(a: &BoundsArgs) -> CliResult {
    let started = now();
    set_threads(&a.common);
    let report = if a.theorem == Theorem::Threshold {
        let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| CliError::config(format!("--{flag} is required")));
        let (m, n, big_n) = (need(a.m, "m")?, need(a.n, "n")?, need(a.big_n, "N")?);
        let t = correctness_threshold(m, n, big_n, a.delta)?;
        json!({ "theorem": "threshold", "m": m, "n": n, "N": big_n, "delta": a.delta, "threshold": t })
    } else {
        let checkpoint = a
            .checkpoint
            .clone()
            .ok_or_else(|| CliError::config("--checkpoint is required"))?;
        let (_, model, ds) = load_model(&ModelArgs {
            common: a.common.clone(),
            checkpoint,
        })?;
        let graphs = all_graphs(&ds);
        let p = profile(&model, &graphs)?;
        let scores = model.scores(&graphs)?;
        let labels = ds.labels();
        let (ce, _) = softmax_cross_entropy(&scores, &labels)?;
        let mu = a.mu.unwrap_or(std::f64::consts::SQRT_2);
        let r = match a.theorem {
            Theorem::Grdl => grdl_bound(&p, a.gamma, mu, a.delta, ce)?,
            Theorem::Multi => {
                let pp = a.refs_per_class.unwrap_or(model.refs.per_class());
                multi_ref_bound(&p, pp, a.gamma, mu, a.delta, ce)?
            }
            Theorem::Misclass => {
                let risk = empirical_ramp_risk(&scores, &labels, a.zeta);
                misclassification_bound(&p, a.zeta, a.delta, risk)?
            }
            Theorem::Gin => {
                let cls = parse_classifier(&a.classifier)?;
                let r = gin_bound(&p, &cls, a.gamma, mu, a.delta, ce)?;
                let q = compare_complexity(&p, &cls, a.gamma, mu)?;
                let mut v = serde_json::to_value(&r)?;
                v["comparison"] = serde_json::to_value(q)?;
                v["profile"] = serde_json::to_value(&p)?;
                return emit_bounds(a, v, started);
            }
            Theorem::Threshold => unreachable!(),
        };
        let mut v = serde_json::to_value(&r)?;
        v["profile"] = serde_json::to_value(&p)?;
        v
    };
    emit_bounds(a, report, started)
}

fn emit_bounds(a: &BoundsArgs, report: serde_json::Value, started: String) -> CliResult {
    match out_dir(&a.common)? {
        Some(out) => {
            let path = out.join("bounds.json");
            write_json(&path, &report)?;
            finish("bounds", &a.common, &out, json!({ "theorem": format!("{:?}", a.theorem) }), started, vec![path])
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

pub fn gen_synthetic(a: &SyntheticArgs) -> CliResult {
    let started = now();
    let out = required_out(&a.common)?;
    let name = a.common.name.clone().unwrap_or_else(|| "SYN".into());
    let seed = a.common.seed.unwrap_or(0);
    let graphs = generate_synthetic(a.graphs, a.nodes, a.density, a.classes, seed)?;
    let ds = Dataset::from_graphs(name.clone(), graphs)?;
    write_tudataset(&ds, &out, &name)?;
    log::info!("wrote {} graphs to {}", ds.len(), out.display());
    let mut artifacts: Vec<PathBuf> = fs::read_dir(&out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|f| f.to_string_lossy().starts_with(&format!("{name}_"))))
        .collect();
    artifacts.sort();
    let config = json!({
        "graphs": a.graphs,
        "nodes": a.nodes,
        "density": a.density,
        "classes": a.classes,
        "name": name,
    });
    finish("gen-synthetic", &a.common, &out, config, started, artifacts)
}
