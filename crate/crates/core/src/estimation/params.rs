//! Unconstrained parametrization and the analytic log-likelihood gradient.
//!
//! Each probability row contributes one coordinate per free entry after its
//! first free entry (the anchor): `θ_j = log(p_j / p_anchor)`. Rows are taken
//! cluster by cluster in canonical order, followed by the free columns of `γ`.

use super::estep::e_step;
use super::gamma::gamma_gradient;
use super::rows::{free_indices, row_refs};
use crate::error::{Error, Result};
use crate::inference::resolve_design;
use crate::model::{softmax_in_place, MixtureModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

/// Probabilities are floored here before taking logarithms.
const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedParams {
    pub theta: Vec<f64>,
}

fn mixture_theta(mix: &MixtureModel) -> Vec<f64> {
    let mut theta = Vec::new();
    for cluster in mix.clusters() {
        for r in row_refs(cluster) {
            let free = free_indices(r.mask(cluster));
            let values = r.values(cluster);
            if let Some((&anchor, rest)) = free.split_first() {
                let base = values[anchor].max(PROB_FLOOR).ln();
                theta.extend(rest.iter().map(|&j| values[j].max(PROB_FLOOR).ln() - base));
            }
        }
    }
    for k in 1..mix.n_clusters() {
        theta.extend(mix.gamma().column(k).iter().copied());
    }
    theta
}

fn mixture_from_theta(template: &MixtureModel, theta: &[f64]) -> Result<MixtureModel> {
    let mut mix = template.clone();
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[f64]> {
        let s = theta.get(pos..pos + n).ok_or_else(|| {
            Error::DimensionMismatch(format!("parameter vector too short ({})", theta.len()))
        })?;
        pos += n;
        Ok(s)
    };
    for cluster in mix.clusters.iter_mut() {
        for r in row_refs(cluster) {
            let free = free_indices(r.mask(cluster));
            let Some((&anchor, rest)) = free.split_first() else {
                continue;
            };
            let coords = take(rest.len())?;
            let mut eta = Vec::with_capacity(free.len());
            eta.push(0.0);
            eta.extend_from_slice(coords);
            softmax_in_place(&mut eta);
            let mut row = r.values_mut(cluster);
            row.fill(0.0);
            row[anchor] = eta[0];
            for (&j, &p) in rest.iter().zip(&eta[1..]) {
                row[j] = p;
            }
        }
    }
    let q = mix.gamma.nrows();
    for k in 1..mix.n_clusters() {
        let coords = take(q)?;
        for (a, &v) in coords.iter().enumerate() {
            mix.gamma[[a, k]] = v;
        }
    }
    if pos != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has {} entries, model needs {pos}",
            theta.len()
        )));
    }
    Ok(mix)
}

impl UnconstrainedParams {
    pub fn from_model(model: &Model) -> Self {
        Self {
            theta: mixture_theta(&model.as_mixture()),
        }
    }

    /// Model with the structure (masks, names) of `template` and the
    /// probabilities encoded by `self`.
    pub fn to_model(&self, template: &Model) -> Result<Model> {
        let mix = mixture_from_theta(&template.as_mixture(), &self.theta)?;
        Ok(match template {
            Model::Hmm(_) => Model::Hmm(mix.clusters.into_iter().next().expect("one cluster")),
            Model::Mixture(_) => Model::Mixture(mix),
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Log-likelihood and its gradient with respect to θ at the given mixture.
pub(crate) fn loglik_and_gradient(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: &CovariateDesign,
) -> Result<(f64, Vec<f64>)> {
    let prior = mix.prior_probs(design)?;
    let es = e_step(mix, data, &prior)?;
    let mut grad = Vec::new();
    for (cluster, counts) in mix.clusters().iter().zip(&es.counts) {
        for r in row_refs(cluster) {
            let free = free_indices(r.mask(cluster));
            let Some((_, rest)) = free.split_first() else {
                continue;
            };
            let n = r.counts(counts);
            let p = r.values(cluster);
            let total: f64 = free.iter().map(|&j| n[j]).sum();
            grad.extend(rest.iter().map(|&j| n[j] - p[j] * total));
        }
    }
    if mix.n_clusters() > 1 {
        grad.extend(gamma_gradient(design, &es.posterior, mix.gamma()));
    }
    Ok((es.loglik, grad))
}

/// Analytic gradient of the log-likelihood at `theta`, using `model` for the
/// structure. Its length equals the model's free parameter count.
pub fn loglik_gradient(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    theta: &UnconstrainedParams,
) -> Result<Vec<f64>> {
    model.check_data(data)?;
    let at = theta.to_model(model)?.as_mixture();
    let design = resolve_design(&at, data, design)?;
    Ok(loglik_and_gradient(&at, data, &design)?.1)
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
