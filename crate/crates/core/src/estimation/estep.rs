//! Expected sufficient statistics for a mixture (an HMM is the one-cluster
//! case). Clusters are handled separately, which is equivalent to running the
//! recursions on the block-diagonal combined model but cheaper.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::rows::Counts;
use crate::error::{Error, Result};
use crate::inference::{backward_scaled, forward_scaled, log_sum_exp, subject_emissions, ScaledForward};
use crate::model::MixtureModel;
use crate::seqdata::{SequenceDataset, MISSING};

/// Subjects per work unit. Partial sums are formed per chunk and then added
/// in chunk order, so results do not depend on the number of threads.
const SUBJECT_CHUNK: usize = 64;

pub(crate) struct EStep {
    /// Posterior-weighted expected counts, one entry per cluster.
    pub counts: Vec<Counts>,
    /// Posterior cluster probabilities, `N × K`.
    pub posterior: Array2<f64>,
    pub loglik: f64,
}

struct Partial {
    counts: Vec<Counts>,
    posterior: Vec<Vec<f64>>,
    loglik: Vec<f64>,
}

fn accumulate_subject(
    mix: &MixtureModel,
    data: &SequenceDataset,
    prior: &Array2<f64>,
    i: usize,
    counts: &mut [Counts],
) -> Result<(Vec<f64>, f64)> {
    let k_len = mix.n_clusters();
    let mut passes: Vec<Option<(Array2<f64>, ScaledForward)>> = Vec::with_capacity(k_len);
    let mut log_joint = vec![f64::NEG_INFINITY; k_len];
    for (k, cluster) in mix.clusters().iter().enumerate() {
        if prior[[i, k]] <= 0.0 {
            passes.push(None);
            continue;
        }
        let emis = subject_emissions(cluster, data, i);
        match forward_scaled(cluster.transition(), cluster.initial().view(), &emis) {
            Ok(fwd) => {
                log_joint[k] = prior[[i, k]].ln() + fwd.loglik();
                passes.push(Some((emis, fwd)));
            }
            Err(_) => passes.push(None),
        }
    }
    let ll = log_sum_exp(log_joint.iter().copied());
    if !ll.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    let u: Vec<f64> = log_joint.iter().map(|&v| (v - ll).exp()).collect();

    for (k, pass) in passes.into_iter().enumerate() {
        let Some((emis, fwd)) = pass else { continue };
        if u[k] == 0.0 {
            continue;
        }
        let cluster = &mix.clusters()[k];
        let beta = backward_scaled(cluster.transition(), &emis, &fwd.scale);
        let post = &fwd.alpha * &beta;
        let n = &mut counts[k];
        n.initial.scaled_add(u[k], &post.row(0));

        let t_len = emis.nrows();
        let s_len = emis.ncols();
        let mut outer = Array2::<f64>::zeros((s_len, s_len));
        for t in 0..t_len - 1 {
            let v: Array1<f64> = &emis.row(t + 1) * &beta.row(t + 1) / fwd.scale[t + 1];
            let a = fwd.alpha.row(t);
            for s in 0..s_len {
                if a[s] == 0.0 {
                    continue;
                }
                outer.row_mut(s).scaled_add(a[s], &v);
            }
        }
        n.transition.scaled_add(u[k], &(outer * cluster.transition()));

        for (c, ch) in data.channels().iter().enumerate() {
            for t in 0..t_len {
                let m = ch.obs[[i, t]];
                if m == MISSING {
                    continue;
                }
                n.emissions[c]
                    .column_mut(m)
                    .scaled_add(u[k], &post.row(t));
            }
        }
    }
    Ok((u, ll))
}

/// E-step over all subjects for the given prior cluster probabilities.
pub(crate) fn e_step(mix: &MixtureModel, data: &SequenceDataset, prior: &Array2<f64>) -> Result<EStep> {
    let n = data.n_subjects();
    let chunks: Vec<usize> = (0..n).step_by(SUBJECT_CHUNK).collect();
    let partials: Vec<Result<Partial>> = chunks
        .into_par_iter()
        .map(|start| {
            let end = (start + SUBJECT_CHUNK).min(n);
            let mut counts: Vec<Counts> = mix.clusters().iter().map(Counts::zeros_like).collect();
            let mut posterior = Vec::with_capacity(end - start);
            let mut loglik = Vec::with_capacity(end - start);
            for i in start..end {
                let (u, ll) = accumulate_subject(mix, data, prior, i, &mut counts)?;
                posterior.push(u);
                loglik.push(ll);
            }
            Ok(Partial {
                counts,
                posterior,
                loglik,
            })
        })
        .collect();

    let mut counts: Vec<Counts> = mix.clusters().iter().map(Counts::zeros_like).collect();
    let mut posterior = Array2::zeros((n, mix.n_clusters()));
    let mut subject_loglik = Vec::with_capacity(n);
    for part in partials {
        let part = part?;
        for (total, p) in counts.iter_mut().zip(&part.counts) {
            total.add_assign(p);
        }
        for (u, ll) in part.posterior.into_iter().zip(part.loglik) {
            posterior.row_mut(subject_loglik.len()).assign(&Array1::from(u));
            subject_loglik.push(ll);
        }
    }
    let loglik = subject_loglik.iter().sum();
    Ok(EStep {
        counts,
        posterior,
        loglik,
    })
}
