//! Likelihood, posterior and decoding computations for fixed parameters.
//!
//! Subjects are processed independently (in parallel when a rayon pool is
//! available) and per-subject results are always combined in subject order,
//! so totals do not depend on the number of threads.

mod cluster;
mod kernels;
mod summary;
mod viterbi;

use std::borrow::Cow;

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rayon::prelude::*;
use serde::Serialize;

pub use cluster::{cluster_posterior_probs, cluster_prior_probs};
pub use summary::{mixture_summary, CoefficientRow, MixtureSummary};
pub use viterbi::{viterbi_paths, ViterbiResult};

pub(crate) use kernels::{
    backward_scaled, forward_log, forward_scaled, log_sum_exp, subject_emissions,
    ScaledForward,
};

use crate::error::{Error, Result};
use crate::model::{count_parameters, HmmModel, MixtureModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

/// Numerical representation used by the forward–backward recursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FbMode {
    /// Forward variables renormalized at every time point.
    #[default]
    Scaled,
    /// Forward and backward variables kept as logarithms.
    LogSpace,
}

/// Forward and backward quantities for every subject.
///
/// In `Scaled` mode `alpha[i, t, ·]` sums to one, `scaling[i, t]` holds the
/// normalizing constants and `beta` is scaled by the same constants, so that
/// `alpha * beta` is the posterior. In `LogSpace` mode both arrays hold
/// log-probabilities and `scaling` is `None`.
#[derive(Debug, Clone)]
pub struct FbResult {
    pub mode: FbMode,
    pub alpha: Array3<f64>,
    pub beta: Array3<f64>,
    pub scaling: Option<Array2<f64>>,
    pub loglik_per_subject: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformationCriteria {
    pub loglik: f64,
    pub p: usize,
    pub nobs: f64,
    pub bic: f64,
}

fn check_initials(initials: Option<&Array2<f64>>, n: usize, s: usize) -> Result<()> {
    if let Some(init) = initials {
        if init.dim() != (n, s) {
            return Err(Error::DimensionMismatch(format!(
                "subject initial probabilities are {:?}, expected ({n}, {s})",
                init.dim()
            )));
        }
    }
    Ok(())
}

fn initial_for<'a>(
    model: &'a HmmModel,
    initials: Option<&'a Array2<f64>>,
    i: usize,
) -> ArrayView1<'a, f64> {
    match initials {
        Some(init) => init.row(i),
        None => model.initial().view(),
    }
}

/// Alpha, beta, scaling constants and loglik of one subject.
type SubjectFb = (Array2<f64>, Array2<f64>, Array1<f64>, f64);

/// Forward–backward pass for every subject.
///
/// `initials` optionally replaces the model's initial vector per subject
/// (rows of an `N × S` matrix); mixtures use this through their combined model.
pub fn forward_backward(
    model: &HmmModel,
    data: &SequenceDataset,
    mode: FbMode,
    initials: Option<&Array2<f64>>,
) -> Result<FbResult> {
    model.check_data(data)?;
    let (n, t, s) = (data.n_subjects(), data.n_time(), model.n_states());
    check_initials(initials, n, s)?;

    let per_subject: Vec<Result<SubjectFb>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let emis = subject_emissions(model, data, i);
            let init = initial_for(model, initials, i);
            match mode {
                FbMode::Scaled => {
                    let fwd = forward_scaled(model.transition(), init, &emis)
                        .map_err(|time| Error::NumericalUnderflow { subject: i, time })?;
                    let beta = backward_scaled(model.transition(), &emis, &fwd.scale);
                    let ll = fwd.loglik();
                    Ok((fwd.alpha, beta, fwd.scale, ll))
                }
                FbMode::LogSpace => {
                    let la = forward_log(model.transition(), init, &emis);
                    let lb = kernels::backward_log(model.transition(), &emis);
                    let ll = log_sum_exp(la.row(t - 1).iter().copied());
                    if ll.is_nan() {
                        return Err(Error::NumericalUnderflow { subject: i, time: t - 1 });
                    }
                    Ok((la, lb, Array1::zeros(0), ll))
                }
            }
        })
        .collect();

    let mut alpha = Array3::zeros((n, t, s));
    let mut beta = Array3::zeros((n, t, s));
    let mut scaling = (mode == FbMode::Scaled).then(|| Array2::zeros((n, t)));
    let mut loglik = Array1::zeros(n);
    for (i, res) in per_subject.into_iter().enumerate() {
        let (a, b, c, ll) = res?;
        alpha.index_axis_mut(ndarray::Axis(0), i).assign(&a);
        beta.index_axis_mut(ndarray::Axis(0), i).assign(&b);
        if let Some(sc) = scaling.as_mut() {
            sc.row_mut(i).assign(&c);
        }
        loglik[i] = ll;
    }
    Ok(FbResult {
        mode,
        alpha,
        beta,
        scaling,
        loglik_per_subject: loglik,
    })
}

/// Per-subject log-likelihoods. Impossible sequences yield `-inf` rather than
/// an error; Scaled mode reports `-inf` whenever a scaling constant vanishes.
pub(crate) fn subject_logliks(
    model: &HmmModel,
    data: &SequenceDataset,
    initials: Option<&Array2<f64>>,
    mode: FbMode,
) -> Vec<f64> {
    (0..data.n_subjects())
        .into_par_iter()
        .map(|i| {
            let emis = subject_emissions(model, data, i);
            let init = initial_for(model, initials, i);
            match mode {
                FbMode::Scaled => forward_scaled(model.transition(), init, &emis)
                    .map_or(f64::NEG_INFINITY, |f| f.loglik()),
                FbMode::LogSpace => {
                    let la = forward_log(model.transition(), init, &emis);
                    log_sum_exp(la.row(la.nrows() - 1).iter().copied())
                }
            }
        })
        .collect()
}

/// Covariate design for a mixture: the given one (checked) or intercept-only.
pub(crate) fn resolve_design<'a>(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: Option<&'a CovariateDesign>,
) -> Result<Cow<'a, CovariateDesign>> {
    let design = match design {
        Some(d) => Cow::Borrowed(d),
        None => Cow::Owned(CovariateDesign::intercept_only(data.n_subjects())),
    };
    if design.n_rows() != data.n_subjects() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows for {} subjects",
            design.n_rows(),
            data.n_subjects()
        )));
    }
    mix.check_design(&design)?;
    Ok(design)
}

/// Per-subject log-likelihoods of an HMM or mixture, as an error-checked vector.
pub fn subject_log_likelihoods(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    mode: FbMode,
) -> Result<Vec<f64>> {
    model.check_data(data)?;
    let lls = match model {
        Model::Hmm(m) => subject_logliks(m, data, None, mode),
        Model::Mixture(mix) => {
            let design = resolve_design(mix, data, design)?;
            let comb = mix.combine(&design)?;
            subject_logliks(&comb.model, data, Some(&comb.initials), mode)
        }
    };
    if mode == FbMode::Scaled {
        if let Some(i) = lls.iter().position(|&ll| ll == f64::NEG_INFINITY) {
            return Err(Error::NumericalUnderflow {
                subject: i,
                time: data.n_time() - 1,
            });
        }
    }
    if let Some(i) = lls.iter().position(|ll| ll.is_nan()) {
        return Err(Error::NumericalUnderflow {
            subject: i,
            time: data.n_time() - 1,
        });
    }
    Ok(lls)
}

/// Total log-likelihood in the default (scaled) mode.
pub fn log_likelihood(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<f64> {
    log_likelihood_with_mode(model, data, design, FbMode::Scaled)
}

pub fn log_likelihood_with_mode(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    mode: FbMode,
) -> Result<f64> {
    Ok(subject_log_likelihoods(model, data, design, mode)?
        .into_iter()
        .sum())
}

/// Posterior probability of each hidden state at each time point, `N × T × S`.
/// Mixtures are reported over the combined state space.
pub fn posterior_state_probs(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<Array3<f64>> {
    let fb = match model {
        Model::Hmm(m) => forward_backward(m, data, FbMode::Scaled, None)?,
        Model::Mixture(mix) => {
            model.check_data(data)?;
            let design = resolve_design(mix, data, design)?;
            let comb = mix.combine(&design)?;
            forward_backward(&comb.model, data, FbMode::Scaled, Some(&comb.initials))?
        }
    };
    Ok(fb.alpha * fb.beta)
}

/// Log-likelihood, free parameter count, effective sample size and BIC.
pub fn information_criteria(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<InformationCriteria> {
    let count = count_parameters(model, data)?;
    if count.nobs <= 0.0 {
        return Err(Error::DegenerateData);
    }
    let loglik = log_likelihood(model, data, design)?;
    Ok(InformationCriteria {
        loglik,
        p: count.p,
        nobs: count.nobs,
        bic: bic(loglik, count.p, count.nobs),
    })
}

pub fn bic(loglik: f64, p: usize, nobs: f64) -> f64 {
    -2.0 * loglik + p as f64 * nobs.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqdata::{Alphabet, ChannelSpec};
    use ndarray::array;

    fn chan(labels: &[&str]) -> ChannelSpec {
        ChannelSpec {
            name: "x".into(),
            alphabet: Alphabet::new(labels, "*").unwrap(),
        }
    }

    fn one_subject(row: &[&str], labels: &[&str]) -> SequenceDataset {
        SequenceDataset::from_labels(
            vec!["s".into()],
            vec![(chan(labels), vec![row.iter().map(|s| s.to_string()).collect()])],
        )
        .unwrap()
    }

    fn coin() -> HmmModel {
        HmmModel::new(vec![chan(&["a", "b"])], array![1.0], array![[1.0]], vec![array![[0.5, 0.5]]])
            .unwrap()
    }

    #[test]
    fn single_state_loglik() {
        let d = one_subject(&["a", "b"], &["a", "b"]);
        let ll = log_likelihood(&coin().into(), &d, None).unwrap();
        assert!((ll - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        let d = one_subject(&["a", "*"], &["a", "b"]);
        let ll = log_likelihood(&coin().into(), &d, None).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_model() {
        let m = HmmModel::new(
            vec![chan(&["a", "b"])],
            array![1.0, 0.0],
            array![[0.0, 1.0], [1.0, 0.0]],
            vec![array![[1.0, 0.0], [0.0, 1.0]]],
        )
        .unwrap();
        let model: Model = m.into();
        let ok = one_subject(&["a", "b", "a"], &["a", "b"]);
        assert_eq!(log_likelihood(&model, &ok, None).unwrap(), 0.0);
        let bad = one_subject(&["a", "a", "a"], &["a", "b"]);
        assert!(matches!(
            log_likelihood(&model, &bad, None),
            Err(Error::NumericalUnderflow { .. })
        ));
        assert_eq!(
            log_likelihood_with_mode(&model, &bad, None, FbMode::LogSpace).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn bic_hand_values() {
        let d = one_subject(&["a", "b"], &["a", "b"]);
        let ic = information_criteria(&coin().into(), &d, None).unwrap();
        assert_eq!(ic.p, 1);
        assert_eq!(ic.nobs, 2.0);
        assert!((ic.bic - 5.0 * 2f64.ln()).abs() < 1e-12);
        let d = one_subject(&["a", "*"], &["a", "b"]);
        let ic = information_criteria(&coin().into(), &d, None).unwrap();
        assert!((ic.bic - 2.0 * 2f64.ln()).abs() < 1e-12);
        let d = one_subject(&["*", "*"], &["a", "b"]);
        assert!(matches!(
            information_criteria(&coin().into(), &d, None),
            Err(Error::DegenerateData)
        ));
    }

    #[test]
    fn single_state_posterior_is_one() {
        let d = one_subject(&["a", "b", "*"], &["a", "b"]);
        let post = posterior_state_probs(&coin().into(), &d, None).unwrap();
        assert!(post.iter().all(|&p| (p - 1.0).abs() < 1e-15));
    }

    #[test]
    fn last_posterior_slice_is_normalized_forward() {
        let m = HmmModel::random(vec![chan(&["a", "b", "c"])], 3, 8).unwrap();
        let d = one_subject(&["a", "c", "b", "b"], &["a", "b", "c"]);
        let fb = forward_backward(&m, &d, FbMode::Scaled, None).unwrap();
        let post = posterior_state_probs(&m.clone().into(), &d, None).unwrap();
        for s in 0..3 {
            assert!((post[[0, 3, s]] - fb.alpha[[0, 3, s]]).abs() < 1e-15);
        }
    }

    #[test]
    fn all_missing_subject_contributes_zero() {
        let m = HmmModel::random(vec![chan(&["a", "b"])], 2, 3).unwrap();
        let d = one_subject(&["*", "*", "*"], &["a", "b"]);
        let fb = forward_backward(&m, &d, FbMode::Scaled, None).unwrap();
        assert_eq!(fb.loglik_per_subject[0], 0.0);
    }

    #[test]
    fn alphabet_mismatch_is_reported() {
        let d = one_subject(&["a"], &["a", "c"]);
        assert!(matches!(
            forward_backward(&coin(), &d, FbMode::Scaled, None),
            Err(Error::AlphabetMismatch(_))
        ));
    }
}
