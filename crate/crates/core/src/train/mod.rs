//! Mini-batch training of encoder, references and kernel bandwidth.

pub mod checkpoint;
mod config;
mod cv;
mod eval;
mod init;
pub mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrdlError, Result};
use crate::gin::{EncoderConfig, GinEncoder, Mode};
use crate::graph::{make_batch, Dataset, DatasetSplit, Graph};
use crate::model::Model;
use crate::tape::Tape;
use crate::tensor::Tensor;

pub use checkpoint::{Checkpoint, CheckpointMeta, SCHEMA_VERSION};
pub use config::{RefSize, TrainConfig, PI_INIT};
pub use cv::{cross_validate, derive_fold_seed, CvReport, FoldResult};
pub use eval::{accuracy, auc_roc, evaluate, Evaluation};
pub use init::{init_references, kmeans, kmeans_plus_plus, lloyd, KMeans, KMEANS_MAX_ITER};
pub use optim::Adam;

/// Lower bound kept on `π` after each update.
pub const PI_MIN: f64 = 1e-6;

/// One line of the metric stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub theta: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation accuracy (first best wins).
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub last: Model,
    /// Full-training-set objective before the first update.
    pub initial_loss: f64,
    pub metrics: Vec<EpochMetrics>,
    pub ref_size: usize,
}

/// Model built from `cfg` with references initialized on `train` graphs.
pub fn init_model(
    dataset: &Dataset,
    train: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, usize)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GrdlError::Config("empty training split".into()));
    }
    let enc_cfg = EncoderConfig {
        layers: cfg.layers,
        mlp_depth: cfg.mlp_depth,
        hidden: cfg.hidden,
        input_dim: dataset.feature_dim(),
        output_dim: cfg.hidden,
    };
    let encoder = GinEncoder::new(enc_cfg, rng)?;
    let (min, median, max) = dataset.node_count_stats(train);
    let m = cfg.ref_size.resolve(min, median, max);
    let graphs = dataset.subset(train);
    let refs = init_references(
        &encoder,
        &graphs,
        dataset.num_classes,
        cfg.ref_per_class,
        m,
        PI_INIT,
        cfg.seed,
    )?;
    Ok((Model::new(encoder, refs)?, m))
}

fn param_norms(model: &Model) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = model
        .param_names()
        .into_iter()
        .zip(model.params())
        .map(|(n, t)| (n, t.frobenius()))
        .collect();
    out.push(("pi".into(), model.refs.pi()));
    out
}

/// Objective value over `graphs` in train mode, without touching state.
pub fn batch_loss(model: &Model, graphs: &[&Graph], lambda: f64) -> Result<f64> {
    let batch = make_batch(graphs.iter().copied())?;
    let mut tape = Tape::new();
    let obj = model.objective(&mut tape, &batch, lambda, Mode::Train)?;
    Ok(tape.value(obj.loss).data()[0])
}

/// One optimizer update on `graphs`; returns the pre-update loss and the
/// number of correct train-mode predictions.
pub fn train_step(
    model: &mut Model,
    graphs: &[&Graph],
    lambda: f64,
    opt: &mut Adam,
    opt_pi: &mut Adam,
    lr: f64,
    lr_pi: f64,
) -> Result<(f64, usize)> {
    let batch = make_batch(graphs.iter().copied())?;
    let mut tape = Tape::new();
    let obj = model.objective(&mut tape, &batch, lambda, Mode::Train)?;
    let loss = tape.value(obj.loss).data()[0];
    if !loss.is_finite() {
        return Ok((loss, 0));
    }
    let preds = crate::mmd::predict(tape.value(obj.scores));
    let correct = preds.iter().zip(batch.labels()).filter(|(p, y)| p == y).count();
    tape.backward(obj.loss)?;
    let grads: Vec<Tensor> = obj
        .vars
        .ordered()
        .into_iter()
        .map(|v| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).rows(), tape.value(v).cols()))
        })
        .collect();
    let grad_pi = tape.grad(obj.vars.pi).map_or(0.0, |g| g.data()[0]);
    model.encoder.update_running_stats(&obj.moments);
    opt.step(&mut model.params_mut(), &grads, lr);
    let mut pi = Tensor::scalar(model.refs.pi());
    opt_pi.step(&mut [&mut pi], &[Tensor::scalar(grad_pi)], lr_pi);
    model.refs.set_pi(pi.data()[0].max(PI_MIN));
    Ok((loss, correct))
}

/// Trains on `split.train`, tracking accuracy on `split.validation` every
/// `cfg.val_interval` epochs (and at the final epoch). `on_epoch` sees every
/// metric line as it is produced.
pub fn train(
    dataset: &Dataset,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut model, ref_size) = init_model(dataset, &split.train, cfg, &mut rng)?;
    let train_graphs = dataset.subset(&split.train);
    let val_graphs = dataset.subset(&split.validation);
    let initial_loss = batch_loss(&model, &train_graphs, cfg.lambda)?;

    let mut opt = Adam::new();
    let mut opt_pi = Adam::new();
    let mut order: Vec<usize> = split.train.clone();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Model, usize, f64)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let graphs = dataset.subset(chunk);
            let (loss, hits) = train_step(
                &mut model,
                &graphs,
                cfg.lambda,
                &mut opt,
                &mut opt_pi,
                lr,
                cfg.lr_theta,
            )?;
            if !loss.is_finite() {
                return Err(GrdlError::NumericalAbort {
                    epoch,
                    batch: b,
                    param_norms: param_norms(&model),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += hits;
        }
        let check = (epoch + 1) % cfg.val_interval == 0 || epoch + 1 == cfg.epochs;
        let val_acc = if check && !val_graphs.is_empty() {
            Some(evaluate(&model, &val_graphs, false)?.accuracy)
        } else {
            None
        };
        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(_, _, b)| acc > *b) {
                best = Some((model.clone(), epoch, acc));
            }
        }
        let line = EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_acc,
            theta: model.refs.theta(),
            lr,
        };
        log::debug!("{line:?}");
        on_epoch(&line);
        metrics.push(line);
    }

    let (best, best_epoch, best_val_acc) =
        best.unwrap_or_else(|| (model.clone(), cfg.epochs - 1, f64::NAN));
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_acc,
        last: model,
        initial_loss,
        metrics,
        ref_size,
    })
}
