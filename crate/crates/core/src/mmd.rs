//! Gaussian-kernel maximum mean discrepancy between point clouds and the
//! reference layer built on it.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrdlError, Result};
use crate::tensor::{matmul_nt_into, Tensor};

/// `exp(-θ‖x - x'‖²)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], theta: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-theta * d2).exp()
}

fn check_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(GrdlError::shape(
            op,
            format!("point dimensions {} and {}", a.cols(), b.cols()),
        ));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(GrdlError::shape(op, "empty point cloud"));
    }
    Ok(())
}

fn sq_norms(a: &Tensor) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|x| x * x).sum())
        .collect()
}

/// Pairwise squared distances via `‖a‖² + ‖b‖² - 2aᵀb`, clamped at zero.
pub(crate) fn sq_distances(a: &Tensor, b: &Tensor) -> Tensor {
    let (na, nb) = (sq_norms(a), sq_norms(b));
    let mut g = Tensor::zeros(a.rows(), b.rows());
    matmul_nt_into(a, b, &mut g);
    for i in 0..a.rows() {
        for (j, v) in g.row_mut(i).iter_mut().enumerate() {
            let d = na[i] + nb[j] - 2.0 * *v;
            // `f64::max` would turn NaN into 0 and hide a diverged forward pass.
            *v = if d < 0.0 { 0.0 } else { d };
        }
    }
    g
}

/// Kernel matrix and the matching squared-distance matrix.
fn kernel(a: &Tensor, b: &Tensor, theta: f64) -> (Tensor, Tensor) {
    let d2 = sq_distances(a, b);
    let k = d2.map(|r| (-theta * r).exp());
    (k, d2)
}

/// Biased squared MMD between the row sets of `h` and `d`.
pub fn mmd_squared(h: &Tensor, d: &Tensor, theta: f64) -> Result<f64> {
    check_dims("mmd_squared", h, d)?;
    let (n, m) = (h.rows() as f64, d.rows() as f64);
    let (khh, _) = kernel(h, h, theta);
    let (kdd, _) = kernel(d, d, theta);
    let (khd, _) = kernel(h, d, theta);
    Ok(khh.sum() / (n * n) + kdd.sum() / (m * m) - 2.0 * khd.sum() / (n * m))
}

/// `sqrt(max(MMD², 0))`.
pub fn mmd(h: &Tensor, d: &Tensor, theta: f64) -> Result<f64> {
    Ok(mmd_squared(h, d, theta)?.max(0.0).sqrt())
}

#[derive(Clone, Debug)]
pub struct MmdGrad {
    pub value: f64,
    pub wrt_h: Tensor,
    pub wrt_d: Tensor,
    pub wrt_theta: f64,
}

/// Accumulates `coef · Σ_j k_ij (x_i - y_j)` into row `i` of `out`.
fn pull_rows(out: &mut Tensor, x: &Tensor, y: &Tensor, k: &Tensor, coef: f64) {
    for i in 0..x.rows() {
        let xi = x.row(i);
        let krow = k.row(i);
        let ksum: f64 = krow.iter().sum();
        let dst = out.row_mut(i);
        for (c, o) in dst.iter_mut().enumerate() {
            let mut weighted = 0.0;
            for (j, kij) in krow.iter().enumerate() {
                weighted += kij * y.get(j, c);
            }
            *o += coef * (ksum * xi[c] - weighted);
        }
    }
}

/// Value and gradients of [`mmd_squared`] with respect to both clouds and θ.
pub fn mmd_squared_grad(h: &Tensor, d: &Tensor, theta: f64) -> Result<MmdGrad> {
    check_dims("mmd_squared_grad", h, d)?;
    let (n, m) = (h.rows() as f64, d.rows() as f64);
    let (khh, rhh) = kernel(h, h, theta);
    let (kdd, rdd) = kernel(d, d, theta);
    let (khd, rhd) = kernel(h, d, theta);
    let khd_t = khd.transpose();

    let mut wrt_h = Tensor::zeros(h.rows(), h.cols());
    pull_rows(&mut wrt_h, h, h, &khh, -4.0 * theta / (n * n));
    pull_rows(&mut wrt_h, h, d, &khd, 4.0 * theta / (n * m));

    let mut wrt_d = Tensor::zeros(d.rows(), d.cols());
    pull_rows(&mut wrt_d, d, d, &kdd, -4.0 * theta / (m * m));
    pull_rows(&mut wrt_d, d, h, &khd_t, 4.0 * theta / (n * m));

    let weighted = |k: &Tensor, r: &Tensor| -> f64 {
        k.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let wrt_theta = -weighted(&khh, &rhh) / (n * n) - weighted(&kdd, &rdd) / (m * m)
        + 2.0 * weighted(&khd, &rhd) / (n * m);
    let value = khh.sum() / (n * n) + kdd.sum() / (m * m) - 2.0 * khd.sum() / (n * m);
    Ok(MmdGrad {
        value,
        wrt_h,
        wrt_d,
        wrt_theta,
    })
}

/// `K·P` learnable `m × d` references and the kernel parameter `π = 1/θ`.
///
/// Reference `p` of class `k` is stored at index `k·P + p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    refs: Vec<Tensor>,
    classes: usize,
    per_class: usize,
    pi: f64,
}

impl ReferenceSet {
    pub fn new(refs: Vec<Tensor>, classes: usize, per_class: usize, pi: f64) -> Result<Self> {
        if classes == 0 || per_class == 0 {
            return Err(GrdlError::Config("need at least one class and one reference".into()));
        }
        if refs.len() != classes * per_class {
            return Err(GrdlError::Config(format!(
                "{} references for K={classes}, P={per_class}",
                refs.len()
            )));
        }
        let shape = refs[0].shape();
        if shape.0 == 0 || refs.iter().any(|r| r.shape() != shape) {
            return Err(GrdlError::Config("references must share a non-empty shape".into()));
        }
        if !(pi > 0.0) {
            return Err(GrdlError::Config(format!("pi must be positive, got {pi}")));
        }
        Ok(ReferenceSet {
            refs,
            classes,
            per_class,
            pi,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    /// Rows per reference.
    pub fn size(&self) -> usize {
        self.refs[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.refs[0].cols()
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn theta(&self) -> f64 {
        1.0 / self.pi
    }

    pub fn set_pi(&mut self, pi: f64) {
        self.pi = pi;
    }

    pub fn get(&self, k: usize, p: usize) -> &Tensor {
        &self.refs[k * self.per_class + p]
    }

    pub fn all(&self) -> &[Tensor] {
        &self.refs
    }

    pub fn all_mut(&mut self) -> &mut [Tensor] {
        &mut self.refs
    }

    /// Largest Frobenius norm over all references.
    pub fn max_norm(&self) -> f64 {
        self.refs.iter().map(Tensor::frobenius).fold(0.0, f64::max)
    }
}

/// `N × K` similarity matrix `s_ik = -Σ_p MMD²(H_i, D_k^(p))`.
pub fn score(embeddings: &[Tensor], refs: &ReferenceSet) -> Result<Tensor> {
    if let Some(h) = embeddings.iter().find(|h| h.cols() != refs.dim()) {
        return Err(GrdlError::Config(format!(
            "embedding dimension {} does not match reference dimension {}",
            h.cols(),
            refs.dim()
        )));
    }
    let theta = refs.theta();
    let k = refs.classes();
    let rows: Vec<Vec<f64>> = embeddings
        .par_iter()
        .map(|h| {
            (0..k)
                .map(|c| {
                    let mut s = 0.0;
                    for p in 0..refs.per_class() {
                        s -= mmd_squared(h, refs.get(c, p), theta)?;
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let data = rows.into_iter().flatten().collect();
    Tensor::from_vec(embeddings.len(), k, data)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|i| {
            let mut best = 0;
            for (c, &v) in scores.row(i).iter().enumerate() {
                if v > scores.get(i, best) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `Σ_{k≠k'} Σ_{p,p'} -MMD²(D_k^(p), D_k'^(p'))` over ordered class pairs.
pub fn discrimination_loss(refs: &ReferenceSet) -> Result<f64> {
    let theta = refs.theta();
    let mut total = 0.0;
    for k in 0..refs.classes() {
        for k2 in 0..refs.classes() {
            if k == k2 {
                continue;
            }
            for p in 0..refs.per_class() {
                for p2 in 0..refs.per_class() {
                    total -= mmd_squared(refs.get(k, p), refs.get(k2, p2), theta)?;
                }
            }
        }
    }
    Ok(total)
}

/// Symmetric MMD distance matrix over the embeddings followed by every
/// reference in `k·P + p` order.
pub fn distance_matrix(embeddings: &[Tensor], refs: &ReferenceSet) -> Result<Tensor> {
    let clouds: Vec<&Tensor> = embeddings.iter().chain(refs.all()).collect();
    let theta = refs.theta();
    let total = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..total)
        .flat_map(|i| (i + 1..total).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| mmd(clouds[i], clouds[j], theta))
        .collect::<Result<_>>()?;
    let mut c = Tensor::zeros(total, total);
    for (&(i, j), v) in pairs.iter().zip(values) {
        c.set(i, j, v);
        c.set(j, i, v);
    }
    Ok(c)
}

/// Column names for [`distance_matrix`]: `graph_i` then `ref_k_p`.
pub fn distance_labels(num_graphs: usize, refs: &ReferenceSet) -> Vec<String> {
    let mut names: Vec<String> = (0..num_graphs).map(|i| format!("graph_{i}")).collect();
    for k in 0..refs.classes() {
        for p in 0..refs.per_class() {
            names.push(format!("ref_{k}_{p}"));
        }
    }
    names
}

/// Writes a header row of names followed by one numeric row per entry.
pub fn write_distance_csv(out: &mut impl Write, names: &[String], c: &Tensor) -> Result<()> {
    writeln!(out, "{}", names.join(","))?;
    for i in 0..c.rows() {
        let row: Vec<String> = c.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn naive_mmd2(h: &Tensor, d: &Tensor, theta: f64) -> f64 {
        let avg = |a: &Tensor, b: &Tensor| {
            let mut s = 0.0;
            for i in 0..a.rows() {
                for j in 0..b.rows() {
                    s += gaussian_kernel(a.row(i), b.row(j), theta);
                }
            }
            s / (a.rows() * b.rows()) as f64
        };
        avg(h, h) + avg(d, d) - 2.0 * avg(h, d)
    }

    #[test]
    fn kernel_literals() {
        assert_eq!(gaussian_kernel(&[0.3, -1.0], &[0.3, -1.0], 2.0), 1.0);
        let v = gaussian_kernel(&[1.0], &[0.0], std::f64::consts::LN_2);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_clouds_have_zero_mmd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random(&mut rng, 5, 3);
        assert!(mmd_squared(&h, &h, 0.7).unwrap().abs() < 1e-12);
    }

    #[test]
    fn single_points() {
        let h = Tensor::from_rows(&[[0.5, 1.0]]);
        let d = Tensor::from_rows(&[[-0.5, 2.0]]);
        let k = gaussian_kernel(h.row(0), d.row(0), 0.3);
        assert!((mmd_squared(&h, &d, 0.3).unwrap() - (2.0 - 2.0 * k)).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_literal() {
        let h = Tensor::column(&[0.0, 2.0]);
        let d = Tensor::column(&[1.0]);
        let e = std::f64::consts::E;
        let expected = 0.5 * (1.0 + e.powi(-4)) + 1.0 - 2.0 / e;
        assert!((mmd_squared(&h, &d, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!((naive_mmd2(&h, &d, 1.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn matches_direct_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let h = random(&mut rng, 4, 3);
            let d = random(&mut rng, 6, 3);
            let theta = rng.random_range(0.05..3.0);
            let a = mmd_squared(&h, &d, theta).unwrap();
            assert!((a - naive_mmd2(&h, &d, theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random(&mut rng, 3, 2);
        let d = random(&mut rng, 4, 2);
        let theta = 0.8;
        let g = mmd_squared_grad(&h, &d, theta).unwrap();
        let step = 1e-6;
        let check = |analytic: f64, plus: f64, minus: f64| {
            let fd = (plus - minus) / (2.0 * step);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "analytic {analytic} fd {fd}");
        };
        for idx in 0..h.len() {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp.data_mut()[idx] += step;
            hm.data_mut()[idx] -= step;
            check(
                g.wrt_h.data()[idx],
                naive_mmd2(&hp, &d, theta),
                naive_mmd2(&hm, &d, theta),
            );
        }
        for idx in 0..d.len() {
            let mut dp = d.clone();
            let mut dm = d.clone();
            dp.data_mut()[idx] += step;
            dm.data_mut()[idx] -= step;
            check(
                g.wrt_d.data()[idx],
                naive_mmd2(&h, &dp, theta),
                naive_mmd2(&h, &dm, theta),
            );
        }
        check(
            g.wrt_theta,
            naive_mmd2(&h, &d, theta + step),
            naive_mmd2(&h, &d, theta - step),
        );
    }

    fn refs(list: Vec<Tensor>, k: usize, p: usize) -> ReferenceSet {
        ReferenceSet::new(list, k, p, 2.0).unwrap()
    }

    #[test]
    fn score_of_matching_reference_is_zero() {
        let h = Tensor::from_rows(&[[0.0, 1.0], [2.0, -1.0]]);
        let other = Tensor::from_rows(&[[5.0, 5.0], [4.0, 4.0]]);
        let s = score(std::slice::from_ref(&h), &refs(vec![other, h.clone()], 2, 1)).unwrap();
        assert!(s.get(0, 1).abs() < 1e-12);
        assert!(s.get(0, 0) < 0.0);
        assert_eq!(predict(&s), vec![1]);
    }

    #[test]
    fn equal_references_give_equal_columns() {
        let d = Tensor::from_rows(&[[0.1, 0.2]]);
        let h = vec![Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]])];
        let s = score(&h, &refs(vec![d.clone(), d], 2, 1)).unwrap();
        assert_eq!(s.get(0, 0), s.get(0, 1));
    }

    #[test]
    fn duplicated_reference_doubles_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d0 = random(&mut rng, 3, 2);
        let d1 = random(&mut rng, 3, 2);
        let h = vec![random(&mut rng, 4, 2)];
        let single = score(&h, &refs(vec![d0.clone(), d1.clone()], 2, 1)).unwrap();
        let double = score(&h, &refs(vec![d0.clone(), d0, d1.clone(), d1], 2, 2)).unwrap();
        for c in 0..2 {
            assert_eq!(double.get(0, c), 2.0 * single.get(0, c));
        }
    }

    #[test]
    fn score_rejects_dim_mismatch() {
        let h = vec![Tensor::zeros(2, 3)];
        let r = refs(vec![Tensor::zeros(2, 2)], 1, 1);
        assert!(matches!(score(&h, &r), Err(GrdlError::Config(_))));
    }

    #[test]
    fn predict_rules() {
        let s = Tensor::from_rows(&[[-0.5, -0.1, -0.9], [-1.0, -1.0, -1.0]]);
        assert_eq!(predict(&s), vec![1, 0]);
    }

    #[test]
    fn predict_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random(&mut rng, 50, 4);
        let p = predict(&s);
        for (i, &c) in p.iter().enumerate() {
            let max = s.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = s.row(i).iter().position(|&v| v == max).unwrap();
            assert_eq!(c, first);
        }
    }

    #[test]
    fn discrimination_loss_cases() {
        let d = Tensor::from_rows(&[[0.0, 1.0]]);
        assert_eq!(discrimination_loss(&refs(vec![d.clone()], 1, 1)).unwrap(), 0.0);
        assert_eq!(
            discrimination_loss(&refs(vec![d.clone(), d.clone()], 2, 1)).unwrap(),
            0.0
        );
        let e = Tensor::from_rows(&[[1.0, 1.0]]);
        let r = refs(vec![d.clone(), e.clone()], 2, 1);
        let expected = -2.0 * mmd_squared(&d, &e, r.theta()).unwrap();
        assert!((discrimination_loss(&r).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn distance_matrix_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let clouds: Vec<Tensor> = (0..3).map(|i| random(&mut rng, 2 + i, 2)).collect();
        let r = refs(vec![random(&mut rng, 2, 2), random(&mut rng, 2, 2)], 2, 1);
        let c = distance_matrix(&clouds, &r).unwrap();
        assert_eq!(c.shape(), (5, 5));
        let all: Vec<&Tensor> = clouds.iter().chain(r.all()).collect();
        for i in 0..5 {
            assert_eq!(c.get(i, i), 0.0);
            for j in 0..5 {
                assert_eq!(c.get(i, j), c.get(j, i));
                if i != j {
                    let v = mmd_squared(all[i], all[j], r.theta()).unwrap().max(0.0).sqrt();
                    assert!((c.get(i, j) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_has_header_and_numeric_rows() {
        let r = refs(vec![Tensor::zeros(1, 1)], 1, 1);
        let c = distance_matrix(&[Tensor::ones(1, 1)], &r).unwrap();
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, &distance_labels(1, &r), &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "graph_0,ref_0_0");
        assert_eq!(lines.len(), 3);
        for l in &lines[1..] {
            for v in l.split(',') {
                v.parse::<f64>().unwrap();
            }
        }
    }
}
