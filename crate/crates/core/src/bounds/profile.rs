//! Constants consumed by the bound formulas, measured from a model and data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::norms::{norm_21, spectral_norm};
use crate::error::{GrdlError, Result};
use crate::graph::Graph;
use crate::model::Model;

/// Norms and sizes entering the bounds. `kappa[l][i]` and `b[l][i]` are the
/// spectral and (2,1)-norms of weight `i` in block `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub kappa: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: f64,
    pub x_norm: f64,
    pub b_d: f64,
    pub d_bar: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub theta: f64,
    /// Model contains batch norm, whose scale is not folded into `kappa`.
    pub has_batch_norm: bool,
}

impl NormProfile {
    pub fn layers(&self) -> usize {
        self.kappa.len()
    }

    /// Uniform profile with every `κ = b = kappa_b`, used for sweeps.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        layers: usize,
        depth: usize,
        kappa_b: (f64, f64),
        c: f64,
        x_norm: f64,
        d_bar: usize,
        sizes: (usize, usize, usize, usize, usize),
        theta: f64,
        b_d: f64,
    ) -> Self {
        let (n, big_n, k, m, d) = sizes;
        NormProfile {
            kappa: vec![vec![kappa_b.0; depth]; layers],
            b: vec![vec![kappa_b.1; depth]; layers],
            c,
            x_norm,
            b_d,
            d_bar,
            n,
            big_n,
            k,
            m,
            d,
            p: 1,
            theta,
            has_batch_norm: false,
        }
    }
}

/// Spectral norm of `A + I` for one graph.
pub fn adjacency_norm(g: &Graph) -> f64 {
    spectral_norm(&g.dense_self_looped())
}

/// Measures every constant from `model` and `graphs`. `c` is the largest
/// per-graph `‖Ã_i‖σ`, which equals the norm of the block-diagonal matrix.
pub fn profile(model: &Model, graphs: &[&Graph]) -> Result<NormProfile> {
    if graphs.is_empty() {
        return Err(GrdlError::Config("cannot profile an empty dataset".into()));
    }
    let cfg = model.encoder.config();
    if let Some(g) = graphs.iter().find(|g| g.feature_dim() != cfg.input_dim) {
        return Err(GrdlError::Config(format!(
            "graph feature dimension {} does not match encoder input {}",
            g.feature_dim(),
            cfg.input_dim
        )));
    }
    let kappa = model
        .encoder
        .layers()
        .iter()
        .map(|l| l.weights.iter().map(spectral_norm).collect())
        .collect();
    let b = model
        .encoder
        .layers()
        .iter()
        .map(|l| l.weights.iter().map(norm_21).collect())
        .collect();
    let c = graphs
        .par_iter()
        .map(|g| adjacency_norm(g))
        .reduce(|| 0.0, f64::max);
    let x_norm = graphs
        .iter()
        .map(|g| g.features().data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    Ok(NormProfile {
        kappa,
        b,
        c,
        x_norm,
        b_d: model.refs.max_norm(),
        d_bar: cfg.max_width(),
        n: graphs.iter().map(|g| g.num_nodes()).min().unwrap_or(0),
        big_n: graphs.len(),
        k: model.refs.classes(),
        m: model.refs.size(),
        d: model.refs.dim(),
        p: model.refs.per_class(),
        theta: model.refs.theta(),
        has_batch_norm: cfg.mlp_depth > 1,
    })
}
