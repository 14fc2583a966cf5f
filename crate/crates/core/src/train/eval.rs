//! Accuracy and ROC AUC of a trained model.

use serde::Serialize;

use crate::error::{GrdlError, Result};
use crate::graph::Graph;
use crate::mmd;
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub predictions: Vec<usize>,
    #[serde(skip)]
    pub scores: Tensor,
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Area under the ROC curve from the Mann–Whitney statistic, averaging the
/// ranks of tied scores.
pub fn auc_roc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GrdlError::UnsupportedMetric(
            "AUC needs at least one positive and one negative sample".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..scores.len()).filter(|&i| positive[i]).map(|i| ranks[i]).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Eval-mode predictions, accuracy and (when requested) AUC over the
/// class-1 scores.
pub fn evaluate(model: &Model, graphs: &[&Graph], with_auc: bool) -> Result<Evaluation> {
    let scores = model.scores(graphs)?;
    let predictions = mmd::predict(&scores);
    let labels: Vec<usize> = graphs.iter().map(|g| g.label()).collect();
    let auc = if with_auc {
        if model.refs.classes() != 2 {
            return Err(GrdlError::UnsupportedMetric(format!(
                "AUC is defined for 2 classes, model has {}",
                model.refs.classes()
            )));
        }
        let s1: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, 1)).collect();
        let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        Some(auc_roc(&s1, &pos)?)
    } else {
        None
    };
    Ok(Evaluation {
        accuracy: accuracy(&predictions, &labels),
        auc,
        predictions,
        scores,
    })
}
