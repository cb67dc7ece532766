//! Maximum-likelihood estimation: EM with randomized restarts, gradient
//! ascent on unconstrained parameters, the Newton update of the covariate
//! coefficients and their standard errors.
//!
//! A plain HMM is estimated as a one-cluster mixture with an intercept-only
//! design, so every routine below has a single implementation.

mod em;
mod estep;
mod gamma;
mod local;
mod params;
mod rows;

use serde::{Deserialize, Serialize};

pub use em::perturb_model;
pub use gamma::{covariate_standard_errors, gamma_gradient, gamma_hessian, gamma_m_step, GammaFit};
pub use params::{loglik_gradient, UnconstrainedParams};

use crate::error::{Error, Result};
use crate::inference::resolve_design;
use crate::model::{MixtureModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitControl {
    pub em_max_iter: usize,
    /// EM stops once `|Δℓ| / (|ℓ| + 0.1)` falls below this.
    pub em_rel_tol: f64,
    pub restarts: usize,
    /// Weight of the Dirichlet draw when perturbing rows for a restart.
    pub restart_perturb: f64,
    pub local_step: bool,
    pub local_max_iter: usize,
    pub local_grad_tol: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the global rayon pool. Not written out, since
    /// results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
}

impl Default for FitControl {
    fn default() -> Self {
        Self {
            em_max_iter: 1000,
            em_rel_tol: 1e-8,
            restarts: 0,
            restart_perturb: 0.5,
            local_step: false,
            local_max_iter: 1000,
            local_grad_tol: 1e-6,
            seed: 1,
            threads: 0,
        }
    }
}

impl FitControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.em_rel_tol > 0.0) {
            return Err(Error::InvalidControl("em_rel_tol must be positive".into()));
        }
        if !(self.local_grad_tol > 0.0) {
            return Err(Error::InvalidControl("local_grad_tol must be positive".into()));
        }
        if !(self.restart_perturb > 0.0 && self.restart_perturb <= 1.0) {
            return Err(Error::InvalidControl("restart_perturb must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvergedBy {
    EmTol,
    GradTol,
    MaxIter,
    /// The local step could not find an ascent step.
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<M = Model> {
    #[serde(skip)]
    pub model: M,
    pub loglik: f64,
    /// Final log-likelihood of the initial EM run followed by each restart.
    pub restart_logliks: Vec<f64>,
    pub em_iterations: usize,
    pub local_iterations: usize,
    pub converged_by: ConvergedBy,
    /// Log-likelihood before the first and after every EM iteration of the
    /// selected run.
    pub em_trace: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl FitResult<MixtureModel> {
    fn into_model_kind(self, like: &Model) -> FitResult {
        let model = match like {
            Model::Hmm(_) => Model::Hmm(
                self.model
                    .clusters
                    .into_iter()
                    .next()
                    .expect("one cluster"),
            ),
            Model::Mixture(_) => Model::Mixture(self.model),
        };
        FitResult {
            model,
            loglik: self.loglik,
            restart_logliks: self.restart_logliks,
            em_iterations: self.em_iterations,
            local_iterations: self.local_iterations,
            converged_by: self.converged_by,
            em_trace: self.em_trace,
            diagnostics: self.diagnostics,
        }
    }
}

/// Run `f` inside a pool with the requested number of threads (0 keeps the
/// current pool).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidControl(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

fn prepare(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    control: &FitControl,
) -> Result<(MixtureModel, CovariateDesign)> {
    control.validate()?;
    model.check_data(data)?;
    let mix = model.as_mixture();
    let design = resolve_design(&mix, data, design)?.into_owned();
    Ok((mix, design))
}

/// EM (Baum–Welch) estimation with optional randomized restarts.
pub fn fit_em(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    control: &FitControl,
) -> Result<FitResult> {
    let (mix, design) = prepare(model, data, design, control)?;
    with_threads(control.threads, || em::fit_em_mixture(&mix, data, &design, control))?
        .map(|r| r.into_model_kind(model))
}

/// Gradient ascent with backtracking line search from `model`.
pub fn fit_local(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    control: &FitControl,
) -> Result<FitResult> {
    let (mix, design) = prepare(model, data, design, control)?;
    with_threads(control.threads, || {
        local::fit_local_mixture(&mix, data, &design, control)
    })?
    .map(|r| r.into_model_kind(model))
}

/// EM with restarts, followed by the local step when `control.local_step`.
pub fn fit_model(
    model: &Model,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    control: &FitControl,
) -> Result<FitResult> {
    let (mix, design) = prepare(model, data, design, control)?;
    let result = with_threads(control.threads, || -> Result<FitResult<MixtureModel>> {
        let em = em::fit_em_mixture(&mix, data, &design, control)?;
        if !control.local_step {
            return Ok(em);
        }
        let local = local::fit_local_mixture(&em.model, data, &design, control)?;
        let mut diagnostics = em.diagnostics;
        diagnostics.extend(local.diagnostics);
        Ok(FitResult {
            model: local.model,
            loglik: local.loglik,
            restart_logliks: em.restart_logliks,
            em_iterations: em.em_iterations,
            local_iterations: local.local_iterations,
            converged_by: local.converged_by,
            em_trace: em.em_trace,
            diagnostics,
        })
    })??;
    Ok(result.into_model_kind(model))
}
