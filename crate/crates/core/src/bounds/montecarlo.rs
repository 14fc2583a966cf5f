//! Monte Carlo check of the training-set correctness guarantee on two
//! isotropic Gaussians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::theorems::correctness_threshold;
use crate::error::{GrdlError, Result};
use crate::mmd::gaussian_kernel;
use crate::tensor::Tensor;

/// Two classes `N(μ_k, s²I)` in `dim` dimensions.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianPair {
    pub mean_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub std: f64,
    pub theta: f64,
}

impl GaussianPair {
    pub fn dim(&self) -> usize {
        self.mean_a.len()
    }

    /// Exact population MMD under the Gaussian kernel.
    pub fn mmd_closed_form(&self) -> f64 {
        let d = self.dim() as f64;
        let denom = 1.0 + 4.0 * self.theta * self.std * self.std;
        let gap2: f64 = self
            .mean_a
            .iter()
            .zip(&self.mean_b)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let same = denom.powf(-d / 2.0);
        let cross = same * (-self.theta * gap2 / denom).exp();
        (2.0 * same - 2.0 * cross).max(0.0).sqrt()
    }

    fn sample(&self, class: usize, rows: usize, rng: &mut impl Rng) -> Tensor {
        let mean = if class == 0 { &self.mean_a } else { &self.mean_b };
        let normal = Normal::new(0.0, self.std).expect("positive std");
        let mut t = Tensor::zeros(rows, self.dim());
        for r in 0..rows {
            for (x, m) in t.row_mut(r).iter_mut().zip(mean) {
                *x = m + normal.sample(rng);
            }
        }
        t
    }

    /// Linear-time unbiased MMD² estimate from `pairs` independent
    /// quadruples, returned as `sqrt(max(·, 0))`.
    pub fn mmd_plug_in(&self, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..pairs {
            let x = self.sample(0, 2, &mut rng);
            let y = self.sample(1, 2, &mut rng);
            let k = |a: &[f64], b: &[f64]| gaussian_kernel(a, b, self.theta);
            total += k(x.row(0), x.row(1)) + k(y.row(0), y.row(1))
                - k(x.row(0), y.row(1))
                - k(x.row(1), y.row(0));
        }
        (total / pairs as f64).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectnessTrial {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub delta: f64,
    pub trials: usize,
    pub threshold: f64,
    pub mmd_plug_in: f64,
    pub mmd_exact: f64,
    /// Whether the plug-in population gap exceeds the threshold.
    pub premise_holds: bool,
    /// Fraction of trials in which all `N` graphs went to the right reference.
    pub all_correct_fraction: f64,
    /// Fraction of individual graphs classified correctly.
    pub graph_accuracy: f64,
}

impl CorrectnessTrial {
    pub fn passes(&self) -> bool {
        self.premise_holds && self.all_correct_fraction >= 1.0 - self.delta
    }
}

/// Per trial: draws one `m`-point reference per class and `N` graphs of `n`
/// nodes (classes alternating), then assigns each graph to the reference
/// with the smaller MMD.
#[allow(clippy::too_many_arguments)]
pub fn correctness_trial(
    pair: &GaussianPair,
    m: usize,
    n: usize,
    big_n: usize,
    delta: f64,
    trials: usize,
    plug_in_pairs: usize,
    seed: u64,
) -> Result<CorrectnessTrial> {
    if trials == 0 {
        return Err(GrdlError::Config("need at least one trial".into()));
    }
    let threshold = correctness_threshold(m, n, big_n, delta)?;
    let mmd_plug_in = pair.mmd_plug_in(plug_in_pairs, seed);
    let outcomes: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + t as u64));
            let refs = [pair.sample(0, m, &mut rng), pair.sample(1, m, &mut rng)];
            // MMD²(H, D) = k̄(H,H) − 2k̄(H,D) + k̄(D,D); the first term is
            // shared by both candidates, so only the rest decides.
            let self_terms = refs.each_ref().map(|d| mean_kernel(d, d, pair.theta));
            let mut correct = 0;
            for i in 0..big_n {
                let label = i % 2;
                let h = pair.sample(label, n, &mut rng);
                let dist = |k: usize| self_terms[k] - 2.0 * mean_kernel(&h, &refs[k], pair.theta);
                let pred = if dist(1) < dist(0) { 1 } else { 0 };
                if pred == label {
                    correct += 1;
                }
            }
            correct
        })
        .collect();
    let all = outcomes.iter().filter(|&&c| c == big_n).count();
    let hits: usize = outcomes.iter().sum();
    Ok(CorrectnessTrial {
        m,
        n,
        big_n,
        delta,
        trials,
        threshold,
        mmd_plug_in,
        mmd_exact: pair.mmd_closed_form(),
        premise_holds: mmd_plug_in > threshold,
        all_correct_fraction: all as f64 / trials as f64,
        graph_accuracy: hits as f64 / (trials * big_n) as f64,
    })
}

fn mean_kernel(a: &Tensor, b: &Tensor, theta: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let x = a.row(i);
        for j in 0..b.rows() {
            total += gaussian_kernel(x, b.row(j), theta);
        }
    }
    total / (a.rows() * b.rows()) as f64
}
