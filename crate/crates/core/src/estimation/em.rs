use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use super::estep::{e_step, EStep};
use super::gamma::gamma_m_step;
use super::rows::{free_indices, row_refs};
use super::{ConvergedBy, FitControl, FitResult};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::random::{dirichlet_free, rng_from_seed};
use crate::seqdata::{CovariateDesign, SequenceDataset};

pub(crate) struct EmRun {
    pub model: MixtureModel,
    pub loglik: f64,
    pub iterations: usize,
    pub converged_by: ConvergedBy,
    pub trace: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Closed-form updates of every free row from expected counts, followed by
/// the Newton update of `γ`. Rows without expected counts keep their values.
fn m_step(
    mix: &MixtureModel,
    es: &EStep,
    design: &CovariateDesign,
    notes: &mut BTreeSet<String>,
) -> Result<MixtureModel> {
    let mut next = mix.clone();
    let cluster_names = mix.cluster_names().to_vec();
    for (k, (cluster, counts)) in next.clusters.iter_mut().zip(&es.counts).enumerate() {
        for r in row_refs(cluster) {
            let free = free_indices(r.mask(cluster));
            if free.len() < 2 {
                continue;
            }
            let n = r.counts(counts);
            let total: f64 = free.iter().map(|&j| n[j]).sum();
            if !(total > 0.0 && total.is_finite()) {
                let what = r.describe(cluster);
                notes.insert(format!(
                    "empty posterior: {} of {} kept at current values",
                    what, cluster_names[k]
                ));
                continue;
            }
            let mut row = r.values_mut(cluster);
            for &j in &free {
                row[j] = n[j] / total;
            }
        }
    }
    if mix.n_clusters() > 1 {
        let fit = gamma_m_step(design, &es.posterior, mix.gamma())?;
        notes.extend(fit.diagnostics);
        next.gamma = fit.gamma;
    }
    Ok(next)
}

/// Relative log-likelihood change used as the EM stopping rule.
pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / (old.abs() + 0.1)
}

pub(crate) fn run_em(
    start: &MixtureModel,
    data: &SequenceDataset,
    design: &CovariateDesign,
    control: &FitControl,
) -> Result<EmRun> {
    let mut notes = BTreeSet::new();
    let mut mix = start.clone();
    let mut es = e_step(&mix, data, &mix.prior_probs(design)?)?;
    let mut trace = vec![es.loglik];
    let mut converged_by = ConvergedBy::MaxIter;
    let mut iterations = 0;
    while iterations < control.em_max_iter {
        let next = m_step(&mix, &es, design, &mut notes)?;
        let next_es = e_step(&next, data, &next.prior_probs(design)?)?;
        if !next_es.loglik.is_finite() {
            return Err(Error::NonFiniteLikelihood);
        }
        iterations += 1;
        let change = relative_change(es.loglik, next_es.loglik);
        trace.push(next_es.loglik);
        mix = next;
        es = next_es;
        if change < control.em_rel_tol {
            converged_by = ConvergedBy::EmTol;
            break;
        }
    }
    Ok(EmRun {
        model: mix,
        loglik: es.loglik,
        iterations,
        converged_by,
        trace,
        diagnostics: notes.into_iter().collect(),
    })
}

/// Mix every free row with a Dirichlet(1) draw over its free entries:
/// `(1 − weight) · row + weight · draw`. Structural zeros stay zero and `γ`
/// is left unchanged.
pub fn perturb_model(mix: &MixtureModel, weight: f64, rng: &mut impl Rng) -> MixtureModel {
    let mut out = mix.clone();
    for cluster in out.clusters.iter_mut() {
        for r in row_refs(cluster) {
            let free: Vec<bool> = r.mask(cluster).iter().map(|&z| !z).collect();
            if free.iter().filter(|&&f| f).count() < 2 {
                continue;
            }
            let draw = dirichlet_free(rng, &free);
            let mut row = r.values_mut(cluster);
            for (j, &d) in draw.iter().enumerate() {
                if free[j] {
                    row[j] = (1.0 - weight) * row[j] + weight * d;
                }
            }
        }
    }
    out
}

/// EM from the starting model, then `control.restarts` further runs from
/// perturbed copies of that first solution. The best log-likelihood wins,
/// with ties going to the earliest run.
pub(crate) fn fit_em_mixture(
    start: &MixtureModel,
    data: &SequenceDataset,
    design: &CovariateDesign,
    control: &FitControl,
) -> Result<FitResult<MixtureModel>> {
    let base = run_em(start, data, design, control)?;
    let restarts: Vec<Result<EmRun>> = (1..=control.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(control.seed.wrapping_add(r as u64));
            let perturbed = perturb_model(&base.model, control.restart_perturb, &mut rng);
            run_em(&perturbed, data, design, control)
        })
        .collect();

    let mut runs = vec![base];
    let mut notes: BTreeSet<String> = BTreeSet::new();
    for (r, run) in restarts.into_iter().enumerate() {
        match run {
            Ok(run) => runs.push(run),
            Err(e) => {
                notes.insert(format!("restart {} failed: {e}", r + 1));
                runs.push(EmRun {
                    model: start.clone(),
                    loglik: f64::NEG_INFINITY,
                    iterations: 0,
                    converged_by: ConvergedBy::MaxIter,
                    trace: Vec::new(),
                    diagnostics: Vec::new(),
                });
            }
        }
    }
    let restart_logliks: Vec<f64> = runs.iter().map(|r| r.loglik).collect();
    let mut best = 0;
    for (i, &ll) in restart_logliks.iter().enumerate() {
        if ll > restart_logliks[best] {
            best = i;
        }
    }
    let run = runs.swap_remove(best);
    notes.extend(run.diagnostics);
    Ok(FitResult {
        model: run.model,
        loglik: run.loglik,
        restart_logliks,
        em_iterations: run.iterations,
        local_iterations: 0,
        converged_by: run.converged_by,
        em_trace: run.trace,
        diagnostics: notes.into_iter().collect(),
    })
}
