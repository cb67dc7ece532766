//! Uniform access to the probability rows of an HMM in canonical order:
//! initial vector, transition rows, then emission rows channel by channel.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

use crate::model::HmmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowRef {
    Initial,
    Transition(usize),
    Emission(usize, usize),
}

pub(crate) fn row_refs(m: &HmmModel) -> Vec<RowRef> {
    let s = m.n_states();
    std::iter::once(RowRef::Initial)
        .chain((0..s).map(RowRef::Transition))
        .chain((0..m.n_channels()).flat_map(move |c| (0..s).map(move |r| RowRef::Emission(c, r))))
        .collect()
}

/// Expected counts for one cluster, laid out like the cluster's parameters.
#[derive(Debug, Clone)]
pub(crate) struct Counts {
    pub initial: Array1<f64>,
    pub transition: Array2<f64>,
    pub emissions: Vec<Array2<f64>>,
}

impl Counts {
    pub fn zeros_like(m: &HmmModel) -> Self {
        Self {
            initial: Array1::zeros(m.n_states()),
            transition: Array2::zeros(m.transition().dim()),
            emissions: m.emissions().iter().map(|e| Array2::zeros(e.dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Counts) {
        self.initial += &other.initial;
        self.transition += &other.transition;
        for (a, b) in self.emissions.iter_mut().zip(&other.emissions) {
            *a += b;
        }
    }
}

impl RowRef {
    pub fn values<'a>(&self, m: &'a HmmModel) -> ArrayView1<'a, f64> {
        match *self {
            RowRef::Initial => m.initial.view(),
            RowRef::Transition(s) => m.transition.row(s),
            RowRef::Emission(c, s) => m.emissions[c].row(s),
        }
    }

    pub fn values_mut<'a>(&self, m: &'a mut HmmModel) -> ArrayViewMut1<'a, f64> {
        match *self {
            RowRef::Initial => m.initial.view_mut(),
            RowRef::Transition(s) => m.transition.row_mut(s),
            RowRef::Emission(c, s) => m.emissions[c].row_mut(s),
        }
    }

    pub fn mask<'a>(&self, m: &'a HmmModel) -> ArrayView1<'a, bool> {
        match *self {
            RowRef::Initial => m.mask.initial.view(),
            RowRef::Transition(s) => m.mask.transition.row(s),
            RowRef::Emission(c, s) => m.mask.emissions[c].row(s),
        }
    }

    pub fn counts<'a>(&self, n: &'a Counts) -> ArrayView1<'a, f64> {
        match *self {
            RowRef::Initial => n.initial.view(),
            RowRef::Transition(s) => n.transition.row(s),
            RowRef::Emission(c, s) => n.emissions[c].row(s),
        }
    }

    pub fn describe(&self, m: &HmmModel) -> String {
        match *self {
            RowRef::Initial => "initial probabilities".into(),
            RowRef::Transition(s) => format!("transitions from `{}`", m.state_names[s]),
            RowRef::Emission(c, s) => format!(
                "emissions of `{}` in channel `{}`",
                m.state_names[s],
                m.channels[c].name
            ),
        }
    }
}

/// Indices of the entries of a row that are not structural zeros.
pub(crate) fn free_indices(mask: ArrayView1<bool>) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(j, &z)| (!z).then_some(j))
        .collect()
}
