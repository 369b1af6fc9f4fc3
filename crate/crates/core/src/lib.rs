//! Bayesian multi-change-point analysis of piecewise-linear trends, together
//! with the pipeline that turns daily stock prices into a mean market
//! correlation series.
//!
//! * [`ingest`] loads and cleans price panels.
//! * [`preprocess`] computes returns, local normalization, rolling mean
//!   correlations and thinned grids.
//! * [`cpcore`] enumerates change-point configurations exactly and derives
//!   posteriors, marginal densities, weighted fits and model evidences.
//! * [`online`] re-analyzes growing segments and measures how much post-onset
//!   data a trend change needs before it is located.
//! * [`io`] reads and writes the file formats.

pub mod cpcore;
pub mod error;
pub mod ingest;
pub mod io;
pub mod numeric;
pub mod online;
pub mod preprocess;

pub use cpcore::{
    AnalysisGrid, CpConfiguration, CpPosterior, Enumeration, MarginalPdf, SegmentFit,
};
pub use error::{Error, Result};
pub use ingest::PricePanel;
pub use online::{SegmentSpec, SensitivityResult};
pub use preprocess::{CorrelationSeries, ReturnPanel};
