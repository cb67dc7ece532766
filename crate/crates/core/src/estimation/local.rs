use super::params::{loglik_and_gradient, max_abs, UnconstrainedParams};
use super::{ConvergedBy, FitControl, FitResult};
use crate::error::Result;
use crate::model::{MixtureModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const INITIAL_STEP: f64 = 1.0;

/// Gradient ascent on the unconstrained parameters with Armijo backtracking.
/// The step is halved until the sufficient-increase condition holds and
/// doubled again after every accepted step.
pub(crate) fn fit_local_mixture(
    start: &MixtureModel,
    data: &SequenceDataset,
    design: &CovariateDesign,
    control: &FitControl,
) -> Result<FitResult<MixtureModel>> {
    let template = Model::Mixture(start.clone());
    let mut theta = UnconstrainedParams::from_model(&template);
    let mut mix = start.clone();
    let (mut ll, mut grad) = loglik_and_gradient(&mix, data, design)?;
    let mut diagnostics = Vec::new();
    let mut step = INITIAL_STEP;
    let mut iterations = 0;
    let mut converged_by = ConvergedBy::MaxIter;

    loop {
        if max_abs(&grad) < control.local_grad_tol {
            converged_by = ConvergedBy::GradTol;
            break;
        }
        if iterations >= control.local_max_iter {
            break;
        }
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = UnconstrainedParams {
                theta: theta.theta.iter().zip(&grad).map(|(t, g)| t + step * g).collect(),
            };
            let trial = candidate
                .to_model(&template)
                .map(|m| m.as_mixture())
                .and_then(|m| loglik_and_gradient(&m, data, design).map(|r| (m, r)));
            if let Ok((m, (ll_new, g_new))) = trial {
                if ll_new.is_finite() && ll_new >= ll + ARMIJO_C * step * g2 {
                    accepted = Some((candidate, m, ll_new, g_new));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, m, ll_new, g_new)) = accepted else {
            diagnostics.push(format!(
                "line search failed after {iterations} iterations; returning the best point found"
            ));
            converged_by = ConvergedBy::LineSearchFailure;
            break;
        };
        theta = candidate;
        mix = m;
        ll = ll_new;
        grad = g_new;
        iterations += 1;
        step *= 2.0;
    }

    Ok(FitResult {
        model: mix,
        loglik: ll,
        restart_logliks: Vec::new(),
        em_iterations: 0,
        local_iterations: iterations,
        converged_by,
        em_trace: Vec::new(),
        diagnostics,
    })
}
