//! GIN node encoder with `ε = 0`.
//!
//! Each of the `L` blocks aggregates `Ã·H` (self loop included) and then
//! applies an `r`-layer MLP: every hidden linear map is followed by batch norm
//! and ReLU, and the last linear map has no activation. Linear maps carry no
//! bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrdlError, Result};
use crate::graph::GraphBatch;
use crate::tape::{BatchMoments, NormStats, Tape, Var};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub mlp_depth: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.mlp_depth == 0 {
            return Err(GrdlError::Config("layers and mlp_depth must be at least 1".into()));
        }
        if self.hidden == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(GrdlError::Config("widths must be at least 1".into()));
        }
        Ok(())
    }

    /// `(in, out)` shape of weight `i` in block `l`.
    pub fn weight_shape(&self, l: usize, i: usize) -> (usize, usize) {
        let rows = match (l, i) {
            (0, 0) => self.input_dim,
            (_, 0) => self.output_dim,
            _ => self.hidden,
        };
        let cols = if i + 1 == self.mlp_depth {
            self.output_dim
        } else {
            self.hidden
        };
        (rows, cols)
    }

    /// Largest width appearing in any weight matrix.
    pub fn max_width(&self) -> usize {
        self.input_dim.max(self.hidden).max(self.output_dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormState {
    pub fn new(width: usize) -> Self {
        BatchNormState {
            gamma: Tensor::ones(1, width),
            beta: Tensor::zeros(1, width),
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    /// Exponential moving average with the unbiased batch variance.
    pub fn update(&mut self, m: &BatchMoments, momentum: f64) {
        let correction = if m.count > 1 {
            m.count as f64 / (m.count - 1) as f64
        } else {
            1.0
        };
        for (r, b) in self.running_mean.iter_mut().zip(&m.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&m.var) {
            *r = (1.0 - momentum) * *r + momentum * b * correction;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GinLayer {
    pub weights: Vec<Tensor>,
    /// One state per hidden linear map (`mlp_depth - 1` entries).
    pub norms: Vec<BatchNormState>,
}

/// Tape handles for one bound copy of the encoder parameters.
#[derive(Clone, Debug)]
pub struct GinVars {
    pub weights: Vec<Vec<Var>>,
    pub gammas: Vec<Vec<Var>>,
    pub betas: Vec<Vec<Var>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GinEncoder {
    config: EncoderConfig,
    layers: Vec<GinLayer>,
}

impl GinEncoder {
    /// Glorot-uniform weights, unit BN scale and zero shift.
    pub fn new(config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|l| {
                let weights = (0..config.mlp_depth)
                    .map(|i| {
                        let (fan_in, fan_out) = config.weight_shape(l, i);
                        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        let data = (0..fan_in * fan_out)
                            .map(|_| rng.random_range(-a..a))
                            .collect();
                        Tensor::from_vec(fan_in, fan_out, data).expect("sized")
                    })
                    .collect();
                let norms = (1..config.mlp_depth)
                    .map(|_| BatchNormState::new(config.hidden))
                    .collect();
                GinLayer { weights, norms }
            })
            .collect();
        Ok(GinEncoder { config, layers })
    }

    /// Builds an encoder from explicit layers, checking every shape.
    pub fn from_layers(config: EncoderConfig, layers: Vec<GinLayer>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.layers {
            return Err(GrdlError::Config(format!(
                "{} blocks for a {}-layer encoder",
                layers.len(),
                config.layers
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.len() != config.mlp_depth || layer.norms.len() + 1 != config.mlp_depth
            {
                return Err(GrdlError::Config(format!("block {l} has the wrong depth")));
            }
            for (i, w) in layer.weights.iter().enumerate() {
                if w.shape() != config.weight_shape(l, i) {
                    return Err(GrdlError::Config(format!(
                        "block {l} weight {i} is {:?}, expected {:?}",
                        w.shape(),
                        config.weight_shape(l, i)
                    )));
                }
            }
            for bn in &layer.norms {
                let h = config.hidden;
                if bn.gamma.shape() != (1, h)
                    || bn.beta.shape() != (1, h)
                    || bn.running_mean.len() != h
                    || bn.running_var.len() != h
                {
                    return Err(GrdlError::Config(format!("block {l} batch norm is mis-sized")));
                }
            }
        }
        Ok(GinEncoder { config, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layers(&self) -> &[GinLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [GinLayer] {
        &mut self.layers
    }

    /// All weight matrices in block-major order.
    pub fn weights(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.weights.iter())
    }

    /// Records every weight and BN scale/shift as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> GinVars {
        let mut vars = GinVars {
            weights: Vec::new(),
            gammas: Vec::new(),
            betas: Vec::new(),
        };
        for layer in &self.layers {
            vars.weights.push(
                layer
                    .weights
                    .iter()
                    .map(|w| tape.leaf(w.clone(), requires_grad))
                    .collect(),
            );
            vars.gammas.push(
                layer
                    .norms
                    .iter()
                    .map(|b| tape.leaf(b.gamma.clone(), requires_grad))
                    .collect(),
            );
            vars.betas.push(
                layer
                    .norms
                    .iter()
                    .map(|b| tape.leaf(b.beta.clone(), requires_grad))
                    .collect(),
            );
        }
        vars
    }

    /// Stacked node embeddings for `batch`. In train mode the batch moments of
    /// every BN node are returned in block-major order; running statistics are
    /// not touched.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &GinVars,
        batch: &GraphBatch,
        mode: Mode,
    ) -> Result<(Var, Vec<BatchMoments>)> {
        if batch.features().cols() != self.config.input_dim {
            return Err(GrdlError::Config(format!(
                "batch feature dimension {} does not match encoder input {}",
                batch.features().cols(),
                self.config.input_dim
            )));
        }
        let mut moments = Vec::new();
        let mut h = tape.constant(batch.features().clone());
        for (l, layer) in self.layers.iter().enumerate() {
            h = tape.aggregate(batch.adjacency(), h)?;
            for i in 0..self.config.mlp_depth {
                h = tape.matmul(h, vars.weights[l][i])?;
                if i + 1 == self.config.mlp_depth {
                    break;
                }
                let bn = &layer.norms[i];
                let stats = match mode {
                    Mode::Train => NormStats::Batch,
                    Mode::Eval => NormStats::Running {
                        mean: &bn.running_mean,
                        var: &bn.running_var,
                    },
                };
                let (normed, m) =
                    tape.batch_norm(h, vars.gammas[l][i], vars.betas[l][i], BN_EPS, stats)?;
                moments.extend(m);
                h = tape.relu(normed);
            }
        }
        Ok((h, moments))
    }

    /// Folds train-mode batch moments into the running statistics.
    pub fn update_running_stats(&mut self, moments: &[BatchMoments]) {
        let mut it = moments.iter();
        for layer in &mut self.layers {
            for bn in &mut layer.norms {
                if let Some(m) = it.next() {
                    bn.update(m, BN_MOMENTUM);
                }
            }
        }
    }

    /// Plain forward pass without gradient tracking.
    pub fn embed(&self, batch: &GraphBatch, mode: Mode) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let (h, _) = self.forward(&mut tape, &vars, batch, mode)?;
        Ok(tape.value(h).clone())
    }
}

/// Per-graph row blocks of the stacked embedding matrix.
pub fn split_embeddings(h: &Tensor, batch: &GraphBatch) -> Result<Vec<Tensor>> {
    if h.rows() != batch.num_nodes() {
        return Err(GrdlError::shape(
            "split_embeddings",
            format!("{} rows for {} nodes", h.rows(), batch.num_nodes()),
        ));
    }
    Ok((0..batch.num_graphs())
        .map(|i| {
            let r = batch.node_range(i);
            h.slice_rows(r.start, r.len())
        })
        .collect())
}
