//! Hidden Markov models and mixture hidden Markov models for multichannel
//! categorical sequence data.
//!
//! The crate covers the whole workflow: reading sequence data
//! ([`seqdata`]), building models with structural zeros ([`model`]),
//! likelihoods, posteriors and Viterbi paths ([`inference`]), maximum
//! likelihood estimation ([`estimation`]), simulation ([`simulate`]) and a
//! batch command-line front end ([`cli`]).

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod json;
pub mod model;
pub mod random;
pub mod seqdata;
pub mod simulate;

pub use cli::render_state_distribution_svg;
pub use error::{Error, Result};
pub use estimation::{fit_em, fit_local, fit_model, FitControl, FitResult};
pub use inference::{
    forward_backward, information_criteria, log_likelihood, posterior_state_probs, viterbi_paths,
    FbMode,
};
pub use model::{HmmModel, MixtureModel, Model};
pub use seqdata::{CovariateDesign, SequenceDataset};
