use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use super::{initial_for, resolve_design, subject_emissions};
use crate::error::{Error, Result};
use crate::model::{HmmModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

/// Most probable hidden paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    /// `N × T` state indices (combined indices for mixtures).
    pub paths: Array2<usize>,
    /// Log joint probability of each path together with the observations.
    pub log_joint: Array1<f64>,
    /// For mixtures, the cluster containing each path.
    pub clusters: Option<Vec<usize>>,
}

/// Log-space Viterbi for one subject. Ties go to the lowest state index both
/// in the backpointers and at the final time point.
fn viterbi_subject(
    ln_trans: &Array2<f64>,
    init: ArrayView1<f64>,
    emis: &Array2<f64>,
) -> Option<(Vec<usize>, f64)> {
    let (t_len, s_len) = emis.dim();
    let ln_emis = emis.mapv(f64::ln);
    let mut delta: Vec<f64> = (0..s_len).map(|s| init[s].ln() + ln_emis[[0, s]]).collect();
    let mut back = Array2::<usize>::zeros((t_len, s_len));
    let mut next = vec![0.0; s_len];
    for t in 1..t_len {
        for r in 0..s_len {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (s, &d) in delta.iter().enumerate() {
                let v = d + ln_trans[[s, r]];
                if v > best {
                    best = v;
                    arg = s;
                }
            }
            next[r] = best + ln_emis[[t, r]];
            back[[t, r]] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (s, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = s;
        }
    }
    if best == f64::NEG_INFINITY || best.is_nan() {
        return None;
    }
    let mut path = vec![0; t_len];
    path[t_len - 1] = last;
    for t in (1..t_len).rev() {
        path[t - 1] = back[[t, path[t]]];
    }
    Some((path, best))
}

fn viterbi_hmm(
    model: &HmmModel,
    data: &SequenceDataset,
    initials: Option<&Array2<f64>>,
) -> Result<(Array2<usize>, Array1<f64>)> {
    let ln_trans = model.transition().mapv(f64::ln);
    let results: Vec<Option<(Vec<usize>, f64)>> = (0..data.n_subjects())
        .into_par_iter()
        .map(|i| {
            let emis = subject_emissions(model, data, i);
            viterbi_subject(&ln_trans, initial_for(model, initials, i), &emis)
        })
        .collect();
    let mut paths = Array2::zeros((data.n_subjects(), data.n_time()));
    let mut log_joint = Array1::zeros(data.n_subjects());
    for (i, r) in results.into_iter().enumerate() {
        let (path, lj) = r.ok_or(Error::ImpossibleData { subject: i })?;
        paths.row_mut(i).assign(&Array1::from(path));
        log_joint[i] = lj;
    }
    Ok((paths, log_joint))
}

/// Viterbi decoding of every subject.
pub fn viterbi_paths(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<ViterbiResult> {
    model.check_data(data)?;
    match model {
        Model::Hmm(m) => {
            let (paths, log_joint) = viterbi_hmm(m, data, None)?;
            Ok(ViterbiResult {
                paths,
                log_joint,
                clusters: None,
            })
        }
        Model::Mixture(mix) => {
            let design = resolve_design(mix, data, design)?;
            let comb = mix.combine(&design)?;
            let (paths, log_joint) = viterbi_hmm(&comb.model, data, Some(&comb.initials))?;
            let clusters = paths
                .column(0)
                .iter()
                .map(|&s| {
                    comb.blocks
                        .iter()
                        .position(|b| b.contains(&s))
                        .expect("state lies in a block")
                })
                .collect();
            Ok(ViterbiResult {
                paths,
                log_joint,
                clusters: Some(clusters),
            })
        }
    }
}
