//! Norm-based generalization bounds and the checks that back them.

mod lemmas;
mod montecarlo;
mod norms;
mod profile;
mod theorems;

pub use lemmas::{verify_lemmas, GraphNorms, LemmaReport, LemmaViolation};
pub use montecarlo::{correctness_trial, CorrectnessTrial, GaussianPair};
pub use norms::{
    norm_21, rank, spectral_norm, spectral_norm_report, SpectralEstimate, POWER_MAX_ITER,
    POWER_TOL,
};
pub use profile::{adjacency_norm, profile, NormProfile};
pub use theorems::{
    c2, ce_bound, compare_complexity, correctness_threshold, empirical_ramp_risk, gin_bound,
    grdl_bound, margin, misclassification_bound, multi_ref_bound, r_g, ramp, BoundReport,
    ClassifierNorms, QComparison,
};
