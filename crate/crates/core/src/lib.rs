//! Estimation of the false-positive fraction among reported significant
//! P-values.
//!
//! Reported P-values below a threshold `alpha` (0.05) are modeled as a
//! mixture of a uniform null component and a truncated Beta alternative.
//! The mixing weight `pi0` is the fraction of false positives. Reports may
//! be exact (`P = 0.013`), censored (`P < 0.01`) or rounded (`P = 0.01`),
//! and the likelihood accounts for each kind.

pub mod em;
pub mod error;
pub mod io;
pub mod model;
pub mod numerics;
mod optim;
pub mod parser;
pub mod rng;
pub mod simulate;
pub mod trend;

pub use em::{bootstrap_from_fit, bootstrap_sd, e_step, m_step, run_em, BootstrapResult, EmConfig, EmResult};
pub use error::{Error, Result};
pub use model::{
    bin_probability, log_likelihood, mixture_cdf, mixture_pdf, MixtureParams, Observation, RoundBin, RoundingBins,
};
pub use numerics::BetaShape;
pub use parser::{classify, extract_pvalues, ingest_corpus, AbstractDoc, Classified, Comparison, PValueRecord};
pub use simulate::{simulate_observations, theoretical_swfdr, CensoringScheme, SimConfig, TheoreticalInputs};
pub use trend::{
    estimate_by_stratum, fit_mixed_model, group_by_stratum, Panel, Predictor, StratumEstimate, StratumKey,
    StratumOptions, StratumReport, SubmissionTable, TrendFit,
};
