//! Closed-form generalization bounds and the training-correctness threshold.

use serde::{Deserialize, Serialize};

use super::profile::NormProfile;
use crate::error::{GrdlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: String,
    pub c: f64,
    #[serde(rename = "R_G")]
    pub r_g: f64,
    #[serde(rename = "R_G_prime")]
    pub r_g_prime: Option<f64>,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    #[serde(rename = "C1")]
    pub c1: Option<f64>,
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    /// The `Q` complexity term inside the final fraction.
    pub complexity: f64,
    pub bound: f64,
    pub gamma: f64,
    pub mu: f64,
    pub delta: f64,
    pub empirical_risk: f64,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub v3_clamped: bool,
    pub flags: Vec<String>,
}

/// Ratio that treats `0/0` (an all-zero weight) as zero.
fn ratio(b: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        0.0
    } else {
        b / kappa
    }
}

/// `c^{2L}·‖X‖²·ln(2d̄²)·∏_l(∏_i κ)²`, the factor shared by `R_G` and `R_G'`.
fn base_factor(p: &NormProfile) -> f64 {
    let prod: f64 = p.kappa.iter().flatten().product();
    p.c.powi(2 * p.layers() as i32)
        * p.x_norm.powi(2)
        * (2.0 * (p.d_bar as f64).powi(2)).ln()
        * prod
        * prod
}

/// `Σ_l Σ_i (b/κ)^{2/3}`.
pub fn c2(p: &NormProfile) -> f64 {
    p.kappa
        .iter()
        .flatten()
        .zip(p.b.iter().flatten())
        .map(|(k, b)| ratio(*b, *k).powf(2.0 / 3.0))
        .sum()
}

pub fn r_g(p: &NormProfile) -> f64 {
    base_factor(p) * c2(p).powi(3)
}

fn check(gamma: f64, mu: f64, delta: f64, big_n: usize) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GrdlError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(gamma > 0.0) || !(mu > 0.0) {
        return Err(GrdlError::Config("gamma and mu must be positive".into()));
    }
    if big_n == 0 {
        return Err(GrdlError::Config("N must be at least 1".into()));
    }
    Ok(())
}

fn confidence(gamma: f64, delta: f64, big_n: usize) -> f64 {
    3.0 * gamma * ((2.0 / delta).ln() / (2.0 * big_n as f64)).sqrt()
}

fn base_flags(p: &NormProfile) -> Vec<String> {
    let mut flags =
        vec!["theta is the trained snapshot; the theory assumes it fixed".to_string()];
    if p.has_batch_norm {
        flags.push("batch-norm scale is not folded into kappa".into());
    }
    flags
}

fn reference_bound(
    tag: &str,
    p: &NormProfile,
    refs_per_class: usize,
    gamma: f64,
    mu: f64,
    delta: f64,
    empirical_risk: f64,
) -> Result<BoundReport> {
    check(gamma, mu, delta, p.big_n)?;
    if refs_per_class == 0 {
        return Err(GrdlError::Config("P must be at least 1".into()));
    }
    let pf = refs_per_class as f64;
    let big_n = p.big_n as f64;
    let rg = r_g(p);
    let v1 = 64.0 * p.theta * pf * pf * p.k as f64 * rg * mu * mu / p.n as f64;
    let v2 = (p.k * p.m * p.d_bar) as f64;
    let v3 = 24.0 * pf * (p.theta * big_n).sqrt() * p.b_d * mu / (p.m as f64).sqrt();
    let mut flags = base_flags(p);
    let v3_clamped = v3 <= 1.0;
    let ln_v3 = if v3_clamped {
        flags.push(format!("v3 = {v3} <= 1; ln v3 clamped to 0"));
        0.0
    } else {
        v3.ln()
    };
    if tag != "misclass" {
        flags.push("gamma bounds the loss only if l <= gamma; cross-entropy is unbounded".into());
    }
    let complexity =
        24.0 * (v1 + v2).sqrt() * big_n.ln() + 24.0 * gamma * (big_n * v2 * ln_v3).sqrt();
    let bound = empirical_risk + confidence(gamma, delta, p.big_n) + (8.0 * gamma + complexity) / big_n;
    Ok(BoundReport {
        theorem: tag.to_string(),
        c: p.c,
        r_g: rg,
        r_g_prime: None,
        v1,
        v2,
        v3,
        c1: None,
        c2: None,
        complexity,
        bound,
        gamma,
        mu,
        delta,
        empirical_risk,
        big_n: p.big_n,
        p: refs_per_class,
        v3_clamped,
        flags,
    })
}

/// Generalization bound for one reference per class.
pub fn grdl_bound(
    p: &NormProfile,
    gamma: f64,
    mu: f64,
    delta: f64,
    empirical_risk: f64,
) -> Result<BoundReport> {
    reference_bound("grdl", p, 1, gamma, mu, delta, empirical_risk)
}

/// Generalization bound with `refs_per_class` references per class.
pub fn multi_ref_bound(
    p: &NormProfile,
    refs_per_class: usize,
    gamma: f64,
    mu: f64,
    delta: f64,
    empirical_risk: f64,
) -> Result<BoundReport> {
    reference_bound("multi", p, refs_per_class, gamma, mu, delta, empirical_risk)
}

/// Cross-entropy variant: `μ = √2`.
pub fn ce_bound(p: &NormProfile, gamma: f64, delta: f64, empirical_risk: f64) -> Result<BoundReport> {
    let mut r = grdl_bound(p, gamma, std::f64::consts::SQRT_2, delta, empirical_risk)?;
    r.theorem = "ce".into();
    Ok(r)
}

/// Misclassification-rate bound through the ramp loss: `γ = 1`, `μ = 2/ζ`.
pub fn misclassification_bound(
    p: &NormProfile,
    zeta: f64,
    delta: f64,
    empirical_margin_risk: f64,
) -> Result<BoundReport> {
    if !(zeta > 0.0) {
        return Err(GrdlError::Config(format!("zeta must be positive, got {zeta}")));
    }
    reference_bound("misclass", p, 1, 1.0, 2.0 / zeta, delta, empirical_margin_risk)
}

/// `(κ, b)` of each classifier layer appended to a pooled GIN.
pub type ClassifierNorms = [(f64, f64)];

/// Generalization bound of GIN with mean readout and an MLP classifier.
pub fn gin_bound(
    p: &NormProfile,
    classifier: &ClassifierNorms,
    gamma: f64,
    mu: f64,
    delta: f64,
    empirical_risk: f64,
) -> Result<BoundReport> {
    check(gamma, mu, delta, p.big_n)?;
    let big_n = p.big_n as f64;
    let c1: f64 = classifier.iter().map(|(k, b)| ratio(*b, *k)).sum();
    let c2v = c2(p);
    let base = base_factor(p);
    let rg = base * c2v.powi(3);
    let rg_prime = base * (3.0 * c2v * c2v * c1 + 3.0 * c2v * c1 * c1 + c1.powi(3));
    let kappa_cls: f64 = classifier.iter().map(|(k, _)| *k).product();
    let complexity = 24.0 * mu * kappa_cls * (rg + rg_prime).sqrt() * big_n.ln();
    let bound = empirical_risk + confidence(gamma, delta, p.big_n) + (8.0 * gamma + complexity) / big_n;
    let mut flags = base_flags(p);
    flags.retain(|f| !f.starts_with("theta"));
    Ok(BoundReport {
        theorem: "gin".into(),
        c: p.c,
        r_g: rg,
        r_g_prime: Some(rg_prime),
        v1: 0.0,
        v2: 0.0,
        v3: 0.0,
        c1: Some(c1),
        c2: Some(c2v),
        complexity,
        bound,
        gamma,
        mu,
        delta,
        empirical_risk,
        big_n: p.big_n,
        p: 0,
        v3_clamped: false,
        flags,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QComparison {
    pub q_grdl: f64,
    pub q_gin: f64,
    pub grdl_smaller: bool,
    /// Whether `64θK/n ≤ 1` and `∏κ_classifier ≥ 3` hold for this profile.
    pub premises_hold: bool,
}

/// Complexity terms of the reference-layer bound and the pooled-GIN bound.
pub fn compare_complexity(
    p: &NormProfile,
    classifier: &ClassifierNorms,
    gamma: f64,
    mu: f64,
) -> Result<QComparison> {
    let delta = 0.5;
    let q_grdl = grdl_bound(p, gamma, mu, delta, 0.0)?.complexity;
    let gin = gin_bound(p, classifier, gamma, mu, delta, 0.0)?;
    let kappa_cls: f64 = classifier.iter().map(|(k, _)| *k).product();
    let premises_hold = 64.0 * p.theta * p.k as f64 / p.n as f64 <= 1.0 && kappa_cls >= 3.0;
    Ok(QComparison {
        q_grdl,
        q_gin: gin.complexity,
        grdl_smaller: q_grdl < gin.complexity,
        premises_hold,
    })
}

/// Minimum population MMD gap under which every training graph is classified
/// correctly with probability at least `1 - δ`.
pub fn correctness_threshold(m: usize, n: usize, big_n: usize, delta: f64) -> Result<f64> {
    if m == 0 || n == 0 || big_n == 0 {
        return Err(GrdlError::Config("m, n and N must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GrdlError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let size = 1.0 / (m as f64).sqrt() + 1.0 / (n as f64).sqrt();
    Ok(size * (4.0 + 4.0 * (2.0 * big_n as f64 / delta).ln().sqrt()))
}

/// Margin `v_y - max_{i≠y} v_i`.
pub fn margin(scores: &[f64], y: usize) -> f64 {
    let other = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[y] - other
}

/// Ramp loss `r_ζ(t)`: 0 below `-ζ`, linear on `[-ζ, 0]`, 1 above 0.
pub fn ramp(t: f64, zeta: f64) -> f64 {
    if t < -zeta {
        0.0
    } else if t <= 0.0 {
        1.0 + t / zeta
    } else {
        1.0
    }
}

/// Mean ramp loss of negative margins over the rows of a score matrix.
pub fn empirical_ramp_risk(scores: &crate::tensor::Tensor, labels: &[usize], zeta: f64) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| ramp(-margin(scores.row(i), y), zeta))
        .sum();
    total / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_profile() -> NormProfile {
        NormProfile::uniform(1, 1, (1.0, 1.0), 1.0, 1.0, 1, (4, 50, 2, 3, 1), 0.5, 1.0)
    }

    #[test]
    fn r_g_collapses_to_ln_two() {
        assert_eq!(r_g(&ones_profile()), 2f64.ln());
    }

    #[test]
    fn zero_theta_limit() {
        let mut p = ones_profile();
        p.theta = 0.0;
        let r = grdl_bound(&p, 1.0, 1.0, 0.1, 0.0).unwrap();
        assert_eq!(r.v1, 0.0);
        assert_eq!(r.v3, 0.0);
        assert!(r.v3_clamped);
    }

    #[test]
    fn multi_at_one_equals_grdl() {
        let p = ones_profile();
        let a = grdl_bound(&p, 10.0, 1.4, 0.05, 0.2).unwrap();
        let b = multi_ref_bound(&p, 1, 10.0, 1.4, 0.05, 0.2).unwrap();
        assert_eq!(a.bound.to_bits(), b.bound.to_bits());
        assert_eq!(a.v1.to_bits(), b.v1.to_bits());
        assert_eq!(a.v3.to_bits(), b.v3.to_bits());
    }

    #[test]
    fn multi_scales_v1_and_v3() {
        let p = ones_profile();
        let one = multi_ref_bound(&p, 1, 1.0, 1.0, 0.1, 0.0).unwrap();
        let two = multi_ref_bound(&p, 2, 1.0, 1.0, 0.1, 0.0).unwrap();
        assert_eq!(two.v1, 4.0 * one.v1);
        assert_eq!(two.v3, 2.0 * one.v3);
    }

    #[test]
    fn gin_without_classifier_has_no_extra_term() {
        let p = ones_profile();
        let r = gin_bound(&p, &[], 1.0, 1.0, 0.1, 0.0).unwrap();
        assert_eq!(r.r_g_prime, Some(0.0));
        assert_eq!(r.c1, Some(0.0));
    }

    #[test]
    fn symmetric_constants_give_seven_cubed() {
        let p = ones_profile();
        let c2v = c2(&p);
        let r = gin_bound(&p, &[(1.0, c2v)], 1.0, 1.0, 0.1, 0.0).unwrap();
        assert!((r.r_g_prime.unwrap() - base_factor(&p) * 7.0 * c2v.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn threshold_literal() {
        let t = correctness_threshold(100, 100, 188, 0.05).unwrap();
        let expected = 0.2 * (4.0 + 4.0 * 7520f64.ln().sqrt());
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 3.19).abs() < 0.005);
    }

    #[test]
    fn ce_variant_uses_sqrt_two() {
        let p = ones_profile();
        let a = ce_bound(&p, 5.0, 0.1, 0.3).unwrap();
        let b = grdl_bound(&p, 5.0, std::f64::consts::SQRT_2, 0.1, 0.3).unwrap();
        assert_eq!(a.bound, b.bound);
    }

    #[test]
    fn misclassification_substitution() {
        let p = NormProfile::uniform(2, 2, (1.5, 2.0), 2.0, 3.0, 8, (5, 100, 2, 4, 8), 0.3, 4.0);
        let zeta = 0.7;
        let r = misclassification_bound(&p, zeta, 0.1, 0.05).unwrap();
        let rg = r_g(&p);
        let v1 = 256.0 * p.theta * 2.0 * rg / (5.0 * zeta * zeta);
        let v3 = 48.0 * 4.0 * (0.3f64 * 100.0).sqrt() / (2.0 * zeta);
        assert!((r.v1 - v1).abs() / v1 < 1e-12);
        assert!((r.v3 - v3).abs() / v3 < 1e-12);
        assert_eq!(r.gamma, 1.0);
    }

    #[test]
    fn ramp_and_margin() {
        assert_eq!(margin(&[0.1, 0.5, -0.2], 1), 0.4);
        assert_eq!(ramp(-1.0, 0.5), 0.0);
        assert_eq!(ramp(-0.25, 0.5), 0.5);
        assert_eq!(ramp(0.1, 0.5), 1.0);
    }

    #[test]
    fn rejects_bad_delta() {
        assert!(grdl_bound(&ones_profile(), 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(correctness_threshold(1, 1, 1, 0.0).is_err());
    }
}
