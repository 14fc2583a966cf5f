//! Helpers shared by the integration tests.
#![allow(dead_code)]

use grdl_core::graph::Graph;
use grdl_core::Tensor;
use rand::Rng;

/// Singular values by one-sided Jacobi rotations, descending. Slow and
/// independent of the power iteration it is used to check.
pub fn singular_values(m: &Tensor) -> Vec<f64> {
    let (rows, cols) = m.shape();
    // Work on columns of A; rotations orthogonalize them pairwise.
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m.get(i, j)).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                let beta: f64 = a[q].iter().map(|x| x * x).sum();
                let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (a[p][i], a[q][i]);
                    a[p][i] = c * x - s * y;
                    a[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap()
}

/// Erdős–Rényi graph with uniform random features.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, dim: usize, label: usize) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges, random_tensor(rng, n, dim), label).unwrap()
}

/// Central difference of `f` at every entry of `x`.
pub fn central_differences(x: &mut Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = f(x);
        x.data_mut()[i] = orig - h;
        let down = f(x);
        x.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between the tape gradient of the training
/// objective and central differences, over every parameter entry and `π`.
pub fn model_gradient_error(
    model: &grdl_core::model::Model,
    graphs: &[&Graph],
    lambda: f64,
    h: f64,
    floor: f64,
) -> (f64, usize) {
    use grdl_core::gin::Mode;
    use grdl_core::graph::make_batch;
    use grdl_core::tape::Tape;
    use grdl_core::train::batch_loss;

    let batch = make_batch(graphs.iter().copied()).unwrap();
    let mut tape = Tape::new();
    let obj = model.objective(&mut tape, &batch, lambda, Mode::Train).unwrap();
    tape.backward(obj.loss).unwrap();
    let analytic: Vec<Tensor> = obj
        .vars
        .ordered()
        .into_iter()
        .map(|v| tape.grad(v).cloned().unwrap())
        .collect();
    let grad_pi = tape.grad(obj.vars.pi).unwrap().data()[0];

    let mut worst = 0.0f64;
    let mut checked = 0;
    for (j, g) in analytic.iter().enumerate() {
        let mut probe = model.clone();
        let mut x = probe.params_mut()[j].clone();
        let fd = central_differences(&mut x, h, |x| {
            *probe.params_mut()[j] = x.clone();
            batch_loss(&probe, graphs, lambda).unwrap()
        });
        for (a, b) in g.data().iter().zip(fd.data()) {
            worst = worst.max(rel_err(*a, *b, floor));
            checked += 1;
        }
    }
    let pi = model.refs.pi();
    let at = |v: f64| {
        let mut probe = model.clone();
        probe.refs.set_pi(v);
        batch_loss(&probe, graphs, lambda).unwrap()
    };
    let step = h * pi.max(1.0);
    let fd_pi = (at(pi + step) - at(pi - step)) / (2.0 * step);
    worst = worst.max(rel_err(grad_pi, fd_pi, floor));
    (worst, checked + 1)
}
