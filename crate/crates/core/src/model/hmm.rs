use ndarray::{Array1, Array2, ArrayViewMut1, Axis};

use super::{check_channels_compatible, Trimmed, ZeroMask, ROW_SUM_TOL};
use crate::error::{Error, Result};
use crate::random::{dirichlet_free, rng_from_seed};
use crate::seqdata::{ChannelSpec, SequenceDataset, MISSING};

/// A hidden Markov model over multichannel categorical observations.
///
/// Entries recorded in the zero mask are structural zeros: they stay exactly
/// zero under estimation and do not count as free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub(crate) state_names: Vec<String>,
    pub(crate) channels: Vec<ChannelSpec>,
    pub(crate) initial: Array1<f64>,
    pub(crate) transition: Array2<f64>,
    pub(crate) emissions: Vec<Array2<f64>>,
    pub(crate) mask: ZeroMask,
}

pub(crate) fn default_state_names(n: usize) -> Vec<String> {
    (1..=n).map(|s| format!("State {s}")).collect()
}

/// Validate one probability row in place: entries must be finite and
/// non-negative, the sum within tolerance of one. The row is rescaled to sum
/// to one exactly (up to rounding).
pub(crate) fn normalize_row(mut row: ArrayViewMut1<f64>, matrix: &str, index: usize) -> Result<()> {
    for (col, &v) in row.iter().enumerate() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::NegativeProbability {
                matrix: matrix.to_string(),
                row: index,
                col,
                value: v,
            });
        }
    }
    let sum = row.sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::RowSumError {
            matrix: matrix.to_string(),
            row: index,
            sum,
        });
    }
    if sum != 1.0 {
        row.mapv_inplace(|v| v / sum);
    }
    Ok(())
}

fn emission_name(c: usize) -> String {
    format!("emission[{c}]")
}

impl HmmModel {
    /// Build from explicit parameters. Zero entries become structural zeros.
    pub fn new(
        channels: Vec<ChannelSpec>,
        initial: Array1<f64>,
        transition: Array2<f64>,
        emissions: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let mask = ZeroMask {
            initial: initial.mapv(|v| v == 0.0),
            transition: transition.mapv(|v| v == 0.0),
            emissions: emissions.iter().map(|e| e.mapv(|v| v == 0.0)).collect(),
        };
        Self::with_mask(channels, initial, transition, emissions, mask)
    }

    /// Build with an explicit zero mask. Masked entries must be zero; unmasked
    /// entries may be zero too (a free parameter currently at the boundary).
    pub fn with_mask(
        channels: Vec<ChannelSpec>,
        mut initial: Array1<f64>,
        mut transition: Array2<f64>,
        mut emissions: Vec<Array2<f64>>,
        mask: ZeroMask,
    ) -> Result<Self> {
        let s = initial.len();
        if s == 0 {
            return Err(Error::DimensionMismatch("model needs at least one state".into()));
        }
        if transition.dim() != (s, s) {
            return Err(Error::DimensionMismatch(format!(
                "transition is {:?}, expected ({s}, {s})",
                transition.dim()
            )));
        }
        if channels.is_empty() {
            return Err(Error::DimensionMismatch("model needs at least one channel".into()));
        }
        if emissions.len() != channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} emission matrices for {} channels",
                emissions.len(),
                channels.len()
            )));
        }
        for (c, (e, ch)) in emissions.iter().zip(&channels).enumerate() {
            if e.dim() != (s, ch.alphabet.len()) {
                return Err(Error::DimensionMismatch(format!(
                    "emission[{c}] is {:?}, expected ({s}, {})",
                    e.dim(),
                    ch.alphabet.len()
                )));
            }
        }
        if mask.initial.len() != s
            || mask.transition.dim() != (s, s)
            || mask.emissions.len() != emissions.len()
            || mask
                .emissions
                .iter()
                .zip(&emissions)
                .any(|(m, e)| m.dim() != e.dim())
        {
            return Err(Error::DimensionMismatch("zero mask does not match parameters".into()));
        }

        normalize_row(initial.view_mut(), "initial", 0)?;
        for (r, row) in transition.axis_iter_mut(Axis(0)).enumerate() {
            normalize_row(row, "transition", r)?;
        }
        for (c, e) in emissions.iter_mut().enumerate() {
            for (r, row) in e.axis_iter_mut(Axis(0)).enumerate() {
                normalize_row(row, &emission_name(c), r)?;
            }
        }
        let check_mask = |values: &[f64], flags: &[bool], matrix: &str, row: usize| {
            for (col, (&v, &m)) in values.iter().zip(flags).enumerate() {
                if m && v != 0.0 {
                    return Err(Error::ModelFormat(format!(
                        "{matrix} ({row}, {col}) is a structural zero but holds {v}"
                    )));
                }
            }
            Ok(())
        };
        check_mask(
            initial.as_slice().unwrap(),
            mask.initial.as_slice().unwrap(),
            "initial",
            0,
        )?;
        for r in 0..s {
            check_mask(
                &transition.row(r).to_vec(),
                &mask.transition.row(r).to_vec(),
                "transition",
                r,
            )?;
        }
        for (c, (e, m)) in emissions.iter().zip(&mask.emissions).enumerate() {
            for r in 0..s {
                check_mask(&e.row(r).to_vec(), &m.row(r).to_vec(), &emission_name(c), r)?;
            }
        }
        Ok(Self {
            state_names: default_state_names(s),
            channels,
            initial,
            transition,
            emissions,
            mask,
        })
    }

    /// Random model with `n_states` states: every row is an independent
    /// Dirichlet(1) draw, seeded by `seed`. No structural zeros.
    pub fn random(channels: Vec<ChannelSpec>, n_states: usize, seed: u64) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::DimensionMismatch("model needs at least one state".into()));
        }
        let mut rng = rng_from_seed(seed);
        let all = |n| vec![true; n];
        let initial = Array1::from(dirichlet_free(&mut rng, &all(n_states)));
        let mut transition = Array2::zeros((n_states, n_states));
        for mut row in transition.rows_mut() {
            row.assign(&Array1::from(dirichlet_free(&mut rng, &all(n_states))));
        }
        let mut emissions = Vec::with_capacity(channels.len());
        for ch in &channels {
            let m = ch.alphabet.len();
            let mut e = Array2::zeros((n_states, m));
            for mut row in e.rows_mut() {
                row.assign(&Array1::from(dirichlet_free(&mut rng, &all(m))));
            }
            emissions.push(e);
        }
        let mask = ZeroMask::none(n_states, &channels);
        Self::with_mask(channels, initial, transition, emissions, mask)
    }

    /// Markov model estimated directly from single-channel data: hidden states
    /// are the observed symbols, emissions are the identity.
    ///
    /// Initial probabilities are the frequencies of each subject's first
    /// observed symbol; transition rows are the observed transition
    /// frequencies between consecutive observed time points (pairs spanning a
    /// missing value are skipped). A symbol never left gets a self-loop.
    pub fn markov_from_data(data: &SequenceDataset) -> Result<Self> {
        if data.n_channels() != 1 {
            return Err(Error::MultichannelNotAllowed);
        }
        let ch = &data.channels()[0];
        let m = ch.alphabet.len();
        let mut first = Array1::<f64>::zeros(m);
        let mut counts = Array2::<f64>::zeros((m, m));
        for row in ch.obs.rows() {
            if let Some(&code) = row.iter().find(|&&c| c != MISSING) {
                first[code] += 1.0;
            }
            for pair in row.as_slice().expect("standard layout").windows(2) {
                if pair[0] != MISSING && pair[1] != MISSING {
                    counts[[pair[0], pair[1]]] += 1.0;
                }
            }
        }
        let n_first = first.sum();
        let initial = if n_first > 0.0 {
            first / n_first
        } else {
            Array1::from_elem(m, 1.0 / m as f64)
        };
        for (s, mut row) in counts.rows_mut().into_iter().enumerate() {
            let total = row.sum();
            if total > 0.0 {
                row /= total;
            } else {
                row[s] = 1.0;
            }
        }
        let identity = Array2::from_shape_fn((m, m), |(a, b)| if a == b { 1.0 } else { 0.0 });
        let mut model = Self::new(vec![ch.spec()], initial, counts, vec![identity])?;
        model.state_names = ch.alphabet.labels().to_vec();
        Ok(model)
    }

    pub fn with_state_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "{} state names for {} states",
                names.len(),
                self.n_states()
            )));
        }
        self.state_names = names;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn initial(&self) -> &Array1<f64> {
        &self.initial
    }

    pub fn transition(&self) -> &Array2<f64> {
        &self.transition
    }

    pub fn emissions(&self) -> &[Array2<f64>] {
        &self.emissions
    }

    pub fn zero_mask(&self) -> &ZeroMask {
        &self.mask
    }

    /// Check that `data` uses this model's channels and alphabets.
    pub fn check_data(&self, data: &SequenceDataset) -> Result<()> {
        check_channels_compatible(&self.channels, &data.channel_specs())
    }

    /// Free parameters: per probability row, the number of unmasked entries
    /// minus one (for the sum-to-one constraint).
    pub fn free_parameter_count(&self) -> usize {
        self.mask.free_parameter_count()
    }

    /// Set every probability below `tol` to a structural zero and rescale the
    /// affected rows.
    pub fn trim(&self, tol: f64) -> Result<Trimmed<Self>> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidControl(format!("trim tolerance {tol} is negative")));
        }
        let mut out = self.clone();
        let mut trimmed = 0;
        let mut max_removed: f64 = 0.0;
        {
            let mut trim_row = |mut values: ArrayViewMut1<f64>,
                                mut flags: ArrayViewMut1<bool>,
                                matrix: &str,
                                row: usize|
             -> Result<()> {
                let mut removed = 0.0;
                let mut touched = false;
                for (v, m) in values.iter_mut().zip(flags.iter_mut()) {
                    if !*m && *v < tol {
                        removed += *v;
                        if *v > 0.0 {
                            trimmed += 1;
                        }
                        *v = 0.0;
                        *m = true;
                        touched = true;
                    }
                }
                if touched {
                    let total = values.sum();
                    if total <= 0.0 {
                        return Err(Error::RowAnnihilated {
                            matrix: matrix.to_string(),
                            row,
                        });
                    }
                    values.mapv_inplace(|v| v / total);
                    max_removed = max_removed.max(removed);
                }
                Ok(())
            };
            trim_row(out.initial.view_mut(), out.mask.initial.view_mut(), "initial", 0)?;
            for (r, (row, flags)) in out
                .transition
                .rows_mut()
                .into_iter()
                .zip(out.mask.transition.rows_mut())
                .enumerate()
            {
                trim_row(row, flags, "transition", r)?;
            }
            for (c, (e, m)) in out.emissions.iter_mut().zip(out.mask.emissions.iter_mut()).enumerate() {
                for (r, (row, flags)) in e.rows_mut().into_iter().zip(m.rows_mut()).enumerate() {
                    trim_row(row, flags, &emission_name(c), r)?;
                }
            }
        }
        Ok(Trimmed {
            model: out,
            entries_trimmed: trimmed,
            max_mass_removed: max_removed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::Alphabet;
    use ndarray::array;

    fn chan(labels: &[&str]) -> ChannelSpec {
        ChannelSpec {
            name: "x".into(),
            alphabet: Alphabet::new(labels, "*").unwrap(),
        }
    }

    fn data(rows: &[&[&str]], labels: &[&str]) -> SequenceDataset {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let grid = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        SequenceDataset::from_labels(ids, vec![(chan(labels), grid)]).unwrap()
    }

    #[test]
    fn accepts_starting_transition_listing() {
        let trans = array![
            [0.80, 0.10, 0.05, 0.03, 0.02],
            [0.02, 0.80, 0.10, 0.05, 0.03],
            [0.02, 0.03, 0.80, 0.10, 0.05],
            [0.02, 0.03, 0.05, 0.80, 0.10],
            [0.02, 0.03, 0.05, 0.05, 0.85]
        ];
        let init = Array1::from_elem(5, 0.2);
        let emis = Array2::from_elem((5, 2), 0.5);
        let m = HmmModel::new(vec![chan(&["a", "b"])], init, trans, vec![emis]).unwrap();
        assert!(!m.zero_mask().transition.iter().any(|&z| z));
        assert_eq!(m.state_names()[4], "State 5");
    }

    #[test]
    fn degenerate_single_state_model() {
        let m = HmmModel::new(
            vec![chan(&["a"])],
            array![1.0],
            array![[1.0]],
            vec![array![[1.0]]],
        )
        .unwrap();
        assert_eq!(m.free_parameter_count(), 0);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = HmmModel::new(
            vec![chan(&["a", "b"])],
            array![0.5, 0.5],
            array![[0.5, 0.4], [0.5, 0.5]],
            vec![array![[0.5, 0.5], [0.5, 0.5]]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::RowSumError { row: 0, .. }));
        let err = HmmModel::new(
            vec![chan(&["a", "b"])],
            array![1.5, -0.5],
            array![[0.5, 0.5], [0.5, 0.5]],
            vec![array![[0.5, 0.5], [0.5, 0.5]]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeProbability { .. }));
        let err = HmmModel::new(
            vec![chan(&["a", "b", "c"])],
            array![0.5, 0.5],
            array![[0.5, 0.5], [0.5, 0.5]],
            vec![array![[0.5, 0.5], [0.5, 0.5]]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let m = HmmModel::new(
            vec![chan(&["a", "b"])],
            array![0.5, 0.5 + 5e-9],
            array![[0.5, 0.5], [0.5, 0.5]],
            vec![array![[0.5, 0.5], [0.5, 0.5]]],
        )
        .unwrap();
        assert!((m.initial().sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation_is_idempotent() {
        let m = HmmModel::random(vec![chan(&["a", "b", "c"])], 3, 11).unwrap();
        let again = HmmModel::with_mask(
            m.channels.clone(),
            m.initial.clone(),
            m.transition.clone(),
            m.emissions.clone(),
            m.mask.clone(),
        )
        .unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn markov_from_data_counts_transitions() {
        let d = data(&[&["A", "A", "B"], &["A", "B", "B"]], &["A", "B"]);
        let m = HmmModel::markov_from_data(&d).unwrap();
        assert_eq!(m.initial().to_vec(), vec![1.0, 0.0]);
        assert_eq!(m.transition().row(0).to_vec(), vec![1.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(m.transition().row(1).to_vec(), vec![0.0, 1.0]);
        assert!(m.zero_mask().initial[1]);
        assert!(m.zero_mask().transition[[1, 0]]);
        assert_eq!(m.state_names(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn markov_from_single_observation_falls_back_to_identity() {
        let d = data(&[&["A"]], &["A", "B", "C"]);
        let m = HmmModel::markov_from_data(&d).unwrap();
        assert_eq!(m.initial().to_vec(), vec![1.0, 0.0, 0.0]);
        for s in 0..3 {
            for r in 0..3 {
                assert_eq!(m.transition()[[s, r]], if s == r { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn markov_skips_gaps() {
        let d = data(&[&["A", "*", "B", "B"]], &["A", "B"]);
        let m = HmmModel::markov_from_data(&d).unwrap();
        // the only counted transition is B -> B; A keeps its self-loop
        assert_eq!(m.transition().row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(m.transition().row(1).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn markov_rejects_multichannel() {
        let a = Alphabet::new(&["A"], "*").unwrap();
        let d = SequenceDataset::from_labels(
            vec!["s".into()],
            vec![
                (ChannelSpec { name: "x".into(), alphabet: a.clone() }, vec![vec!["A".into()]]),
                (ChannelSpec { name: "y".into(), alphabet: a }, vec![vec!["A".into()]]),
            ],
        )
        .unwrap();
        assert!(matches!(
            HmmModel::markov_from_data(&d),
            Err(Error::MultichannelNotAllowed)
        ));
    }

    #[test]
    fn trim_zero_is_identity() {
        let m = HmmModel::random(vec![chan(&["a", "b"])], 3, 5).unwrap();
        let t = m.trim(0.0).unwrap();
        assert_eq!(t.model, m);
        assert_eq!(t.entries_trimmed, 0);
    }

    #[test]
    fn trim_small_entry() {
        let m = HmmModel::new(
            vec![chan(&["a", "b"])],
            array![0.999, 0.001],
            array![[0.5, 0.5], [0.5, 0.5]],
            vec![array![[0.5, 0.5], [0.5, 0.5]]],
        )
        .unwrap();
        let t = m.trim(0.01).unwrap();
        assert_eq!(t.model.initial().to_vec(), vec![1.0, 0.0]);
        assert!(t.model.zero_mask().initial[1]);
        assert_eq!(t.entries_trimmed, 1);
        assert!((t.max_mass_removed - 0.001).abs() < 1e-15);
    }

    #[test]
    fn trim_can_annihilate_row() {
        let labels: Vec<String> = (0..200).map(|i| format!("m{i}")).collect();
        let ch = ChannelSpec {
            name: "x".into(),
            alphabet: Alphabet::new(&labels, "*").unwrap(),
        };
        let m = HmmModel::new(
            vec![ch],
            array![1.0],
            array![[1.0]],
            vec![Array2::from_elem((1, 200), 0.005)],
        )
        .unwrap();
        assert!(matches!(m.trim(0.01), Err(Error::RowAnnihilated { .. })));
    }
}
