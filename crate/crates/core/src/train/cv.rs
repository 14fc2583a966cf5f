//! k-fold cross-validation driver.

use rayon::prelude::*;
use serde::Serialize;

use super::{evaluate, train, TrainConfig};
use crate::error::{GrdlError, Result};
use crate::graph::{kfold_splits, Dataset};
use crate::model::Model;

#[derive(Clone, Debug, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    /// Holdout accuracy when a holdout exists, else validation accuracy.
    pub accuracy: f64,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Eval-mode accuracy of the retained model on the fold's training graphs.
    pub train_acc: f64,
    #[serde(skip)]
    pub model: Model,
}

#[derive(Clone, Debug, Serialize)]
pub struct CvReport {
    pub metric: &'static str,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub per_fold: Vec<FoldResult>,
}

/// Seed of fold `fold` derived from the master seed.
pub fn derive_fold_seed(master: u64, fold: usize) -> u64 {
    master ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains one model per fold of `cfg.folds` (after a `cfg.holdout` test
/// carve-out) using up to `jobs` threads.
pub fn cross_validate(dataset: &Dataset, cfg: &TrainConfig, jobs: usize) -> Result<CvReport> {
    cfg.validate()?;
    let splits = kfold_splits(&dataset.labels(), cfg.folds, cfg.holdout, cfg.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| GrdlError::Config(format!("thread pool: {e}")))?;
    let per_fold: Vec<FoldResult> = pool.install(|| {
        splits
            .par_iter()
            .map(|split| {
                let seed = derive_fold_seed(cfg.seed, split.fold);
                let fold_cfg = TrainConfig {
                    seed,
                    ..cfg.clone()
                };
                let out = train(dataset, split, &fold_cfg, |_| {})?;
                let accuracy = if split.test.is_empty() {
                    out.best_val_acc
                } else {
                    evaluate(&out.best, &dataset.subset(&split.test), false)?.accuracy
                };
                let train_acc = evaluate(&out.best, &dataset.subset(&split.train), false)?.accuracy;
                log::info!("fold {} accuracy {accuracy:.4}", split.fold);
                Ok(FoldResult {
                    fold: split.fold,
                    seed,
                    accuracy,
                    best_epoch: out.best_epoch,
                    best_val_acc: out.best_val_acc,
                    train_acc,
                    model: out.best,
                })
            })
            .collect::<Result<_>>()
    })?;
    let n = per_fold.len() as f64;
    let mean = per_fold.iter().map(|f| f.accuracy).sum::<f64>() / n;
    let var = per_fold.iter().map(|f| (f.accuracy - mean).powi(2)).sum::<f64>() / n;
    Ok(CvReport {
        metric: if cfg.holdout > 0.0 { "holdout" } else { "validation" },
        mean,
        std: var.sqrt(),
        per_fold,
    })
}
