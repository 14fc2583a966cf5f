//! Matrix norm probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::tensor::Tensor;

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 10_000;
const START_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// `‖MᵀMv - ρv‖ / ρ` at the final iterate, with `ρ` the Rayleigh quotient.
    pub residual: f64,
    pub converged: bool,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `MᵀM v` without forming `MᵀM`.
fn gram_apply(m: &Tensor, v: &[f64]) -> Vec<f64> {
    let mv: Vec<f64> = (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    let mut out = vec![0.0; m.cols()];
    for (r, &s) in mv.iter().enumerate() {
        if s != 0.0 {
            for (o, a) in out.iter_mut().zip(m.row(r)) {
                *o += a * s;
            }
        }
    }
    out
}

/// Largest singular value by power iteration on `MᵀM` from a fixed random
/// start vector.
pub fn spectral_norm_report(m: &Tensor) -> SpectralEstimate {
    if m.is_empty() {
        return SpectralEstimate {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&mut v);
    let mut rho = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITER {
        let mut w = gram_apply(m, &v);
        rho = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        if rho <= 0.0 {
            return SpectralEstimate {
                value: 0.0,
                iterations: it,
                residual: 0.0,
                converged: true,
            };
        }
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt()
            / rho;
        if residual <= POWER_TOL {
            return SpectralEstimate {
                value: rho.sqrt(),
                iterations: it,
                residual,
                converged: true,
            };
        }
        normalize(&mut w);
        v = w;
    }
    SpectralEstimate {
        value: rho.sqrt(),
        iterations: POWER_MAX_ITER,
        residual,
        converged: false,
    }
}

pub fn spectral_norm(m: &Tensor) -> f64 {
    let est = spectral_norm_report(m);
    if !est.converged {
        log::warn!(
            "power iteration stopped after {} steps with residual {:.3e}",
            est.iterations,
            est.residual
        );
    }
    est.value
}

/// Sum over columns of the column 2-norms.
pub fn norm_21(m: &Tensor) -> f64 {
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| m.get(r, c).powi(2)).sum::<f64>().sqrt())
        .sum()
}

/// Numerical rank by Gaussian elimination with partial pivoting.
pub fn rank(m: &Tensor) -> usize {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let scale = a.data().iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let tol = scale * rows.max(cols) as f64 * 1e-12;
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows)
            .max_by(|&i, &j| a.get(i, c).abs().total_cmp(&a.get(j, c).abs()))
            .expect("non-empty range");
        if a.get(pivot, c).abs() <= tol {
            continue;
        }
        for k in 0..cols {
            let (x, y) = (a.get(r, k), a.get(pivot, k));
            a.set(r, k, y);
            a.set(pivot, k, x);
        }
        for i in r + 1..rows {
            let f = a.get(i, c) / a.get(r, c);
            if f != 0.0 {
                for k in c..cols {
                    let v = a.get(i, k) - f * a.get(r, k);
                    a.set(i, k, v);
                }
            }
        }
        r += 1;
    }
    r
}
