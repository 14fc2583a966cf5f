//! Erdős–Rényi graphs whose edge density depends on the class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{GrdlError, Result};
use crate::tensor::Tensor;

/// Generates `num_graphs` graphs with `nodes` nodes each and labels assigned
/// round-robin over `classes`.
///
/// A class-`k` graph has `density · nodes² · (1 + 0.5k)` undirected edges in
/// expectation (pair probability capped at 1). Nodes carry a constant scalar
/// feature.
pub fn generate_synthetic(
    num_graphs: usize,
    nodes: usize,
    density: f64,
    classes: usize,
    seed: u64,
) -> Result<Vec<Graph>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(GrdlError::Config(format!("density must lie in (0, 1], got {density}")));
    }
    if nodes < 2 || classes == 0 {
        return Err(GrdlError::Config("need at least 2 nodes and 1 class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (nodes * (nodes - 1) / 2) as f64;
    (0..num_graphs)
        .map(|i| {
            let label = i % classes;
            let expected = density * (nodes * nodes) as f64 * (1.0 + 0.5 * label as f64);
            let p = (expected / pairs).min(1.0);
            let mut edges = Vec::new();
            for u in 0..nodes {
                for v in u + 1..nodes {
                    if rng.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            Graph::new(nodes, edges, Tensor::ones(nodes, 1), label)
        })
        .collect()
}
