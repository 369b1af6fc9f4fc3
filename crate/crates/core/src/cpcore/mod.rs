//! Exact Bayesian change-point analysis of piecewise-linear trends.

pub mod combinatorics;
pub mod evidence;
pub mod posterior;

pub use combinatorics::{
    binomial_u64, count_configurations, count_configurations_u64, rank, successor, unrank,
    Configurations, CpConfiguration,
};
pub use evidence::{log_evidence, AnalysisGrid, EvidenceEvaluator, SegmentTable};
pub use posterior::{
    analyze, chunk_ranges, log_model_evidence, marginal_pdfs, posterior, segment_fit,
    top_configurations, Analysis, AnalysisRequest, CpPosterior, Enumeration, MarginalPdf,
    RankedConfiguration, SegmentFit, DEFAULT_BAND_MULTIPLIER, DEFAULT_BUDGET,
};
