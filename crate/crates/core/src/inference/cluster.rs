use ndarray::Array2;

use super::{log_sum_exp, resolve_design, subject_logliks, FbMode};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::seqdata::{CovariateDesign, SequenceDataset};

/// Prior cluster probabilities `w_ik`, `N × K`. Without a design every subject
/// gets the intercept-only weights.
pub fn cluster_prior_probs(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<Array2<f64>> {
    let design = resolve_design(mix, data, design)?;
    mix.prior_probs(&design)
}

/// Per-subject, per-cluster log-likelihoods `log P(Y_i | cluster k)`, `N × K`.
pub(crate) fn cluster_logliks(mix: &MixtureModel, data: &SequenceDataset) -> Array2<f64> {
    let n = data.n_subjects();
    let mut out = Array2::zeros((n, mix.n_clusters()));
    for (k, cluster) in mix.clusters().iter().enumerate() {
        let lls = subject_logliks(cluster, data, None, FbMode::Scaled);
        for (i, ll) in lls.into_iter().enumerate() {
            out[[i, k]] = ll;
        }
    }
    out
}

/// Posterior cluster probabilities given each subject's sequences, `N × K`.
pub fn cluster_posterior_probs(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<Array2<f64>> {
    mix.clusters()[0].check_data(data)?;
    let prior = cluster_prior_probs(mix, data, design)?;
    let lls = cluster_logliks(mix, data);
    posterior_from_parts(&prior, &lls)
}

pub(crate) fn posterior_from_parts(prior: &Array2<f64>, lls: &Array2<f64>) -> Result<Array2<f64>> {
    let mut post = prior.mapv(f64::ln) + lls;
    for (i, mut row) in post.rows_mut().into_iter().enumerate() {
        let total = log_sum_exp(row.iter().copied());
        if !total.is_finite() {
            return Err(Error::ImpossibleData { subject: i });
        }
        row.mapv_inplace(|v| (v - total).exp());
    }
    Ok(post)
}
