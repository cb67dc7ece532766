//! Model construction, validation and model-level transformations.

mod hmm;
mod io;
mod mixture;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use hmm::HmmModel;
pub use io::{read_model, write_model};
pub use mixture::{CombinedModel, MixtureModel, RestrictedKind};

pub(crate) use mixture::softmax_in_place;

use crate::error::{Error, Result};
use crate::seqdata::{ChannelSpec, SequenceDataset};

/// Rows whose sum is this close to one are rescaled; others are rejected.
pub const ROW_SUM_TOL: f64 = 1e-8;

/// Structural zeros of an HMM's initial vector, transition matrix and
/// per-channel emission matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroMask {
    pub initial: Array1<bool>,
    pub transition: Array2<bool>,
    pub emissions: Vec<Array2<bool>>,
}

impl ZeroMask {
    pub fn none(n_states: usize, channels: &[ChannelSpec]) -> Self {
        Self {
            initial: Array1::from_elem(n_states, false),
            transition: Array2::from_elem((n_states, n_states), false),
            emissions: channels
                .iter()
                .map(|ch| Array2::from_elem((n_states, ch.alphabet.len()), false))
                .collect(),
        }
    }

    /// Every probability row in canonical order: initial, transition rows,
    /// then each channel's emission rows.
    pub(crate) fn rows(&self) -> impl Iterator<Item = Vec<bool>> + '_ {
        std::iter::once(self.initial.to_vec())
            .chain(self.transition.rows().into_iter().map(|r| r.to_vec()))
            .chain(
                self.emissions
                    .iter()
                    .flat_map(|e| e.rows().into_iter().map(|r| r.to_vec())),
            )
    }

    pub fn free_parameter_count(&self) -> usize {
        self.rows()
            .map(|row| row.iter().filter(|&&m| !m).count().saturating_sub(1))
            .sum()
    }
}

/// Result of trimming small probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed<M> {
    pub model: M,
    /// Number of positive entries that were set to zero.
    pub entries_trimmed: usize,
    /// Largest probability mass removed from a single row before rescaling.
    pub max_mass_removed: f64,
}

/// Number of free parameters and effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub p: usize,
    pub nobs: f64,
}

/// Either kind of model handled by the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hmm(HmmModel),
    Mixture(MixtureModel),
}

impl Model {
    pub fn channels(&self) -> &[ChannelSpec] {
        match self {
            Model::Hmm(m) => m.channels(),
            Model::Mixture(m) => m.channels(),
        }
    }

    pub fn free_parameter_count(&self) -> usize {
        match self {
            Model::Hmm(m) => m.free_parameter_count(),
            Model::Mixture(m) => m.free_parameter_count(),
        }
    }

    pub fn check_data(&self, data: &SequenceDataset) -> Result<()> {
        check_channels_compatible(self.channels(), &data.channel_specs())
    }

    pub fn trim(&self, tol: f64) -> Result<Trimmed<Self>> {
        Ok(match self {
            Model::Hmm(m) => {
                let t = m.trim(tol)?;
                Trimmed {
                    model: Model::Hmm(t.model),
                    entries_trimmed: t.entries_trimmed,
                    max_mass_removed: t.max_mass_removed,
                }
            }
            Model::Mixture(m) => {
                let t = m.trim(tol)?;
                Trimmed {
                    model: Model::Mixture(t.model),
                    entries_trimmed: t.entries_trimmed,
                    max_mass_removed: t.max_mass_removed,
                }
            }
        })
    }

    pub fn as_mixture(&self) -> MixtureModel {
        match self {
            Model::Hmm(m) => MixtureModel::from_single(m.clone()),
            Model::Mixture(m) => m.clone(),
        }
    }
}

impl From<HmmModel> for Model {
    fn from(m: HmmModel) -> Self {
        Model::Hmm(m)
    }
}

impl From<MixtureModel> for Model {
    fn from(m: MixtureModel) -> Self {
        Model::Mixture(m)
    }
}

/// Free parameter count `p` and effective data size for BIC.
pub fn count_parameters(model: &Model, data: &SequenceDataset) -> Result<ParamCount> {
    model.check_data(data)?;
    Ok(ParamCount {
        p: model.free_parameter_count(),
        nobs: data.effective_size(),
    })
}

pub(crate) fn check_channels_compatible(model: &[ChannelSpec], data: &[ChannelSpec]) -> Result<()> {
    if model.len() != data.len() {
        return Err(Error::AlphabetMismatch(format!(
            "model has {} channels, data has {}",
            model.len(),
            data.len()
        )));
    }
    for (m, d) in model.iter().zip(data) {
        if m.alphabet.labels() != d.alphabet.labels() {
            return Err(Error::AlphabetMismatch(format!(
                "channel `{}`: model symbols {:?}, data symbols {:?}",
                d.name,
                m.alphabet.labels(),
                d.alphabet.labels()
            )));
        }
    }
    Ok(())
}
