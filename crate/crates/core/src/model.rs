//! Encoder plus reference layer, and the training objective on a tape.

use serde::{Deserialize, Serialize};

use crate::error::{GrdlError, Result};
use crate::gin::{split_embeddings, GinEncoder, GinVars, Mode};
use crate::graph::{make_batch, Graph, GraphBatch};
use crate::mmd::{self, ReferenceSet};
use crate::tape::{BatchMoments, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: GinEncoder,
    pub refs: ReferenceSet,
}

/// Tape handles of every trainable quantity.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub gin: GinVars,
    pub refs: Vec<Var>,
    pub pi: Var,
}

impl ParamVars {
    /// Handles in the order of [`Model::params_mut`].
    pub fn ordered(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in 0..self.gin.weights.len() {
            out.extend(&self.gin.weights[l]);
            for (g, b) in self.gin.gammas[l].iter().zip(&self.gin.betas[l]) {
                out.push(*g);
                out.push(*b);
            }
        }
        out.extend(&self.refs);
        out
    }
}

/// Values recorded by one objective evaluation.
#[derive(Clone, Debug)]
pub struct Objective {
    pub vars: ParamVars,
    pub scores: Var,
    pub cross_entropy: Var,
    pub discrimination: Var,
    pub loss: Var,
    pub moments: Vec<BatchMoments>,
}

impl Model {
    pub fn new(encoder: GinEncoder, refs: ReferenceSet) -> Result<Self> {
        if encoder.config().output_dim != refs.dim() {
            return Err(GrdlError::Config(format!(
                "encoder output {} does not match reference dimension {}",
                encoder.config().output_dim,
                refs.dim()
            )));
        }
        Ok(Model { encoder, refs })
    }

    /// Names matching [`Model::params_mut`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.layers().iter().enumerate() {
            for i in 0..layer.weights.len() {
                out.push(format!("gin.{l}.w{i}"));
            }
            for i in 0..layer.norms.len() {
                out.push(format!("gin.{l}.bn{i}.gamma"));
                out.push(format!("gin.{l}.bn{i}.beta"));
            }
        }
        for k in 0..self.refs.classes() {
            for p in 0..self.refs.per_class() {
                out.push(format!("ref.{k}.{p}"));
            }
        }
        out
    }

    /// Every trainable tensor except `π`, in canonical order: per block the
    /// weights then each BN scale and shift, then the references.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in self.encoder.layers_mut() {
            out.extend(layer.weights.iter_mut());
            for bn in layer.norms.iter_mut() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.extend(self.refs.all_mut().iter_mut());
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::new();
        for layer in self.encoder.layers() {
            out.extend(layer.weights.iter());
            for bn in &layer.norms {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out.extend(self.refs.all().iter());
        out
    }

    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> ParamVars {
        let gin = self.encoder.bind(tape, requires_grad);
        let refs = self
            .refs
            .all()
            .iter()
            .map(|r| tape.leaf(r.clone(), requires_grad))
            .collect();
        let pi = tape.leaf(Tensor::scalar(self.refs.pi()), requires_grad);
        ParamVars { gin, refs, pi }
    }

    /// Records `CE(S, y) + λ·L_Dis` for `batch` on `tape`.
    pub fn objective(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        lambda: f64,
        mode: Mode,
    ) -> Result<Objective> {
        let vars = self.bind(tape, true);
        let (h, moments) = self.encoder.forward(tape, &vars.gin, batch, mode)?;
        let theta = tape.reciprocal(vars.pi);
        let (k_count, p_count) = (self.refs.classes(), self.refs.per_class());
        let mut cells = Vec::with_capacity(batch.num_graphs() * k_count);
        for i in 0..batch.num_graphs() {
            let range = batch.node_range(i);
            let hi = tape.rows(h, range.start, range.len())?;
            for k in 0..k_count {
                let mut total = tape.mmd_sq(hi, vars.refs[k * p_count], theta)?;
                for p in 1..p_count {
                    let term = tape.mmd_sq(hi, vars.refs[k * p_count + p], theta)?;
                    total = tape.add(total, term)?;
                }
                cells.push(tape.scale(total, -1.0));
            }
        }
        let scores = tape.assemble(&cells, batch.num_graphs(), k_count)?;
        let cross_entropy = tape.softmax_cross_entropy(scores, batch.labels())?;

        let mut dis = tape.constant(Tensor::scalar(0.0));
        for k in 0..k_count {
            for k2 in 0..k_count {
                if k == k2 {
                    continue;
                }
                for p in 0..p_count {
                    for p2 in 0..p_count {
                        let a = vars.refs[k * p_count + p];
                        let b = vars.refs[k2 * p_count + p2];
                        let term = tape.mmd_sq(a, b, theta)?;
                        dis = tape.add(dis, term)?;
                    }
                }
            }
        }
        let discrimination = tape.scale(dis, -1.0);
        let weighted = tape.scale(discrimination, lambda);
        let loss = tape.add(cross_entropy, weighted)?;
        Ok(Objective {
            vars,
            scores,
            cross_entropy,
            discrimination,
            loss,
            moments,
        })
    }

    /// Eval-mode node embeddings, one block per graph.
    pub fn embed(&self, graphs: &[&Graph]) -> Result<Vec<Tensor>> {
        let batch = make_batch(graphs.iter().copied())?;
        let h = self.encoder.embed(&batch, Mode::Eval)?;
        split_embeddings(&h, &batch)
    }

    /// Eval-mode `N × K` scores.
    pub fn scores(&self, graphs: &[&Graph]) -> Result<Tensor> {
        mmd::score(&self.embed(graphs)?, &self.refs)
    }

    pub fn predict(&self, graphs: &[&Graph]) -> Result<Vec<usize>> {
        Ok(mmd::predict(&self.scores(graphs)?))
    }
}
