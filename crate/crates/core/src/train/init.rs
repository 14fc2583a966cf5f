//! Reference initialization from untrained node embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GrdlError, Result};
use crate::gin::{split_embeddings, GinEncoder, Mode};
use crate::graph::{make_batch, Graph};
use crate::mmd::ReferenceSet;
use crate::tensor::Tensor;

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centers: Tensor,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub sse: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Tensor) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: the first center is uniform, later ones are drawn with
/// probability proportional to the squared distance to the nearest center.
pub fn kmeans_plus_plus(points: &Tensor, k: usize, rng: &mut impl Rng) -> Tensor {
    let n = points.rows();
    let mut centers = Tensor::zeros(k, points.cols());
    centers.row_mut(0).copy_from_slice(points.row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

/// Lloyd iterations from the given centers. Empty clusters keep their center.
pub fn lloyd(points: &Tensor, mut centers: Tensor, max_iter: usize) -> KMeans {
    let (n, d, k) = (points.rows(), points.cols(), centers.rows());
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for (i, a) in assignment.iter_mut().enumerate() {
            let (c, _) = nearest(points.row(i), &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Tensor::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    let mut sse = 0.0;
    for (i, a) in assignment.iter_mut().enumerate() {
        let (c, d) = nearest(points.row(i), &centers);
        *a = c;
        sse += d;
    }
    KMeans {
        centers,
        assignment,
        sse,
        iterations,
    }
}

/// k-means++ seeding followed by at most [`KMEANS_MAX_ITER`] Lloyd steps.
pub fn kmeans(points: &Tensor, k: usize, seed: u64) -> Result<KMeans> {
    if points.rows() == 0 || k == 0 {
        return Err(GrdlError::Init("k-means needs points and at least one center".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(points, k, &mut rng);
    Ok(lloyd(points, init, KMEANS_MAX_ITER))
}

/// Builds `K·P` references of `m` rows from train-mode embeddings of
/// `graphs` (running statistics are left untouched).
///
/// Reference `p` of class `k` is the embedding of the `p`-th class-`k` graph
/// with exactly `m` nodes when one exists, and otherwise the k-means centers
/// of all class-`k` node embeddings (seed `seed + p`).
pub fn init_references(
    encoder: &GinEncoder,
    graphs: &[&Graph],
    classes: usize,
    per_class: usize,
    m: usize,
    pi: f64,
    seed: u64,
) -> Result<ReferenceSet> {
    let batch = make_batch(graphs.iter().copied())?;
    let h = encoder.embed(&batch, Mode::Train)?;
    let parts = split_embeddings(&h, &batch)?;
    let mut refs = Vec::with_capacity(classes * per_class);
    for k in 0..classes {
        let members: Vec<usize> = (0..graphs.len()).filter(|&i| graphs[i].label() == k).collect();
        if members.is_empty() {
            return Err(GrdlError::Init(format!("class {k} has no training graphs")));
        }
        let exact: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| graphs[i].num_nodes() == m)
            .collect();
        let pooled = Tensor::vstack(&members.iter().map(|&i| &parts[i]).collect::<Vec<_>>())?;
        for p in 0..per_class {
            match exact.get(p) {
                Some(&i) => refs.push(parts[i].clone()),
                None => refs.push(kmeans(&pooled, m, seed.wrapping_add(p as u64))?.centers),
            }
        }
    }
    ReferenceSet::new(refs, classes, per_class, pi)
}
