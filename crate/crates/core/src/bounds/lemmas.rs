//! Empirical checks of the adjacency spectral-norm lemmas.

use serde::Serialize;

use super::norms::{rank, spectral_norm};
use crate::graph::Graph;

const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct GraphNorms {
    pub graph: usize,
    pub a_spectral: f64,
    pub a_frobenius: f64,
    pub a_tilde_spectral: f64,
    pub max_degree: usize,
    pub rank: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaViolation {
    pub graph: usize,
    pub lemma: &'static str,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub graphs: Vec<GraphNorms>,
    pub violations: Vec<LemmaViolation>,
}

impl LemmaReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `‖A‖σ ≤ max degree`, `‖A + I‖σ > 1` when edges exist, and
/// `‖A‖σ ≤ ‖A‖_F ≤ √rank·‖A‖σ` on every graph.
pub fn verify_lemmas(graphs: &[&Graph]) -> LemmaReport {
    let mut report = LemmaReport {
        graphs: Vec::with_capacity(graphs.len()),
        violations: Vec::new(),
    };
    for (i, g) in graphs.iter().enumerate() {
        let a = g.dense_adjacency();
        let norms = GraphNorms {
            graph: i,
            a_spectral: spectral_norm(&a),
            a_frobenius: a.frobenius(),
            a_tilde_spectral: spectral_norm(&g.dense_self_looped()),
            max_degree: g.max_degree(),
            rank: rank(&a),
            edges: g.num_edges(),
        };
        let mut fail = |lemma, detail: String| {
            report.violations.push(LemmaViolation {
                graph: i,
                lemma,
                detail,
            })
        };
        if norms.a_spectral > norms.max_degree as f64 + SLACK {
            fail(
                "degree",
                format!("‖A‖σ = {} > max degree {}", norms.a_spectral, norms.max_degree),
            );
        }
        if norms.edges > 0 && norms.a_tilde_spectral <= 1.0 {
            fail(
                "self-loop",
                format!("‖A+I‖σ = {} with {} edges", norms.a_tilde_spectral, norms.edges),
            );
        }
        if norms.a_spectral > norms.a_frobenius + SLACK {
            fail(
                "frobenius-upper",
                format!("‖A‖σ = {} > ‖A‖F = {}", norms.a_spectral, norms.a_frobenius),
            );
        }
        let cap = (norms.rank as f64).sqrt() * norms.a_spectral;
        if norms.a_frobenius > cap + SLACK {
            fail(
                "rank",
                format!("‖A‖F = {} > √rank·‖A‖σ = {cap}", norms.a_frobenius),
            );
        }
        report.graphs.push(norms);
    }
    report
}
