//! Multinomial-logit coefficients of the cluster probabilities.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::inference::resolve_design;
use crate::model::MixtureModel;
use crate::seqdata::{CovariateDesign, SequenceDataset};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_GRAD_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 60;
/// Clusters whose prior probability stays below this for every subject are
/// reported as (quasi-)separated.
const SEPARATION_PROB: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GammaFit {
    pub gamma: Array2<f64>,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

fn linear_predictors(x: &Array2<f64>, gamma: &Array2<f64>) -> Array2<f64> {
    x.dot(gamma)
}

/// Row-wise log-softmax of the linear predictors.
fn log_probs(x: &Array2<f64>, gamma: &Array2<f64>) -> Array2<f64> {
    let mut eta = linear_predictors(x, gamma);
    for mut row in eta.rows_mut() {
        let lse = crate::inference::log_sum_exp(row.iter().copied());
        row.mapv_inplace(|v| v - lse);
    }
    eta
}

fn objective(x: &Array2<f64>, weights: &Array2<f64>, gamma: &Array2<f64>) -> f64 {
    let lw = log_probs(x, gamma);
    weights
        .iter()
        .zip(lw.iter())
        .filter(|(&u, _)| u > 0.0)
        .map(|(&u, &l)| u * l)
        .sum()
}

/// Gradient of `Σ_i Σ_k u_ik log w_ik(γ)` with respect to the free columns
/// `2..K` of `γ`, ordered column by column.
pub fn gamma_gradient(design: &CovariateDesign, weights: &Array2<f64>, gamma: &Array2<f64>) -> Vec<f64> {
    let x = design.matrix();
    let w = log_probs(x, gamma).mapv(f64::exp);
    let diff = weights - &w;
    let g = x.t().dot(&diff);
    (1..gamma.ncols())
        .flat_map(|k| g.column(k).to_vec())
        .collect()
}

/// Hessian of the same objective, `Q(K−1) × Q(K−1)`:
/// `−Σ_i x_i x_iᵀ ⊗ (diag(w_i) − w_i w_iᵀ)` restricted to the free columns.
/// It does not depend on the weights.
pub fn gamma_hessian(design: &CovariateDesign, gamma: &Array2<f64>) -> Array2<f64> {
    let x = design.matrix();
    let (q, k_len) = gamma.dim();
    let w = log_probs(x, gamma).mapv(f64::exp);
    let d = q * (k_len - 1);
    let mut h = Array2::zeros((d, d));
    for i in 0..x.nrows() {
        let xi = x.row(i);
        for k in 1..k_len {
            for l in 1..k_len {
                let delta = if k == l { 1.0 } else { 0.0 };
                let c = -w[[i, k]] * (delta - w[[i, l]]);
                if c == 0.0 {
                    continue;
                }
                for a in 0..q {
                    for b in 0..q {
                        h[[(k - 1) * q + a, (l - 1) * q + b]] += c * xi[a] * xi[b];
                    }
                }
            }
        }
    }
    h
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Fails with `RankDeficientDesign` unless `XᵀX` is numerically full rank.
pub(crate) fn check_full_rank(design: &CovariateDesign) -> Result<()> {
    let x = design.matrix();
    let xtx = to_dmatrix(&x.t().dot(x));
    let sv = xtx.singular_values();
    let max = sv.max();
    if !(max > 0.0) || sv.min() <= max * 1e-12 {
        return Err(Error::RankDeficientDesign);
    }
    Ok(())
}

fn add_step(gamma: &Array2<f64>, step: &DVector<f64>, scale: f64) -> Array2<f64> {
    let q = gamma.nrows();
    let mut out = gamma.clone();
    for k in 1..gamma.ncols() {
        for a in 0..q {
            out[[a, k]] += scale * step[(k - 1) * q + a];
        }
    }
    out
}

/// Newton iterations with step halving maximizing the expected complete-data
/// multinomial-logit term for fixed posterior cluster probabilities.
pub fn gamma_m_step(
    design: &CovariateDesign,
    weights: &Array2<f64>,
    gamma_init: &Array2<f64>,
) -> Result<GammaFit> {
    let (q, k_len) = gamma_init.dim();
    if design.n_cols() != q || weights.dim() != (design.n_rows(), k_len) {
        return Err(Error::DimensionMismatch(format!(
            "design {}×{}, weights {:?}, gamma {:?}",
            design.n_rows(),
            design.n_cols(),
            weights.dim(),
            gamma_init.dim()
        )));
    }
    let mut diagnostics = Vec::new();
    if k_len == 1 {
        return Ok(GammaFit {
            gamma: gamma_init.clone(),
            iterations: 0,
            diagnostics,
        });
    }
    check_full_rank(design)?;
    let x = design.matrix();

    let mut gamma = gamma_init.clone();
    let mut f = objective(x, weights, &gamma);
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER {
        let g = gamma_gradient(design, weights, &gamma);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < NEWTON_GRAD_TOL {
            break;
        }
        iterations += 1;
        let g = DVector::from_vec(g);
        let neg_h = -to_dmatrix(&gamma_hessian(design, &gamma));
        let direction = match neg_h.cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                if !diagnostics.iter().any(|d: &String| d.starts_with("singular")) {
                    diagnostics.push("singular Hessian in gamma update; used a gradient step".into());
                }
                g.clone()
            }
        };
        // Close to the optimum the gain of a Newton step is far below the
        // rounding error of the objective, so compare with that much slack.
        let slack = 64.0 * f64::EPSILON * f.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = add_step(&gamma, &direction, scale);
            let f_new = objective(x, weights, &candidate);
            if f_new >= f - slack {
                gamma = candidate;
                f = f_new;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let w = log_probs(x, &gamma).mapv(f64::exp);
    for k in 1..k_len {
        if w.column(k).iter().all(|&v| v < SEPARATION_PROB) {
            diagnostics.push(format!(
                "cluster {} has prior probability below {SEPARATION_PROB:e} for every subject; \
                 its coefficients are diverging",
                k + 1
            ));
        }
    }
    Ok(GammaFit {
        gamma,
        iterations,
        diagnostics,
    })
}

/// Conditional standard errors of `γ`: the square roots of the diagonal of
/// the inverse negative Hessian of the multinomial-logit term, holding the
/// cluster submodels fixed. Column 1 is zero.
pub fn covariate_standard_errors(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<Array2<f64>> {
    let design = resolve_design(mix, data, design)?;
    let gamma = mix.gamma();
    let (q, k_len) = gamma.dim();
    let mut se = Array2::zeros((q, k_len));
    if k_len == 1 {
        return Ok(se);
    }
    let neg_h = -to_dmatrix(&gamma_hessian(&design, gamma));
    let inv = neg_h
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NonInvertibleHessian)?;
    for k in 1..k_len {
        for a in 0..q {
            let idx = (k - 1) * q + a;
            let v = inv[(idx, idx)];
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NonInvertibleHessian);
            }
            se[[a, k]] = v.sqrt();
        }
    }
    Ok(se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn intercept_only_closed_form() {
        let design = CovariateDesign::intercept_only(4);
        let weights = array![[0.25, 0.75], [0.25, 0.75], [0.5, 0.5], [0.0, 1.0]];
        let fit = gamma_m_step(&design, &weights, &Array2::zeros((1, 2))).unwrap();
        assert!((fit.gamma[[0, 1]] - 3f64.ln()).abs() < 1e-10);
        assert_eq!(fit.gamma[[0, 0]], 0.0);
    }

    #[test]
    fn separation_diverges_with_diagnostic() {
        let design = CovariateDesign::intercept_only(5);
        let weights = Array2::from_shape_fn((5, 2), |(_, k)| if k == 0 { 1.0 } else { 0.0 });
        let fit = gamma_m_step(&design, &weights, &Array2::zeros((1, 2))).unwrap();
        assert!(fit.gamma[[0, 1]] < -10.0);
        assert!(!fit.diagnostics.is_empty());
    }

    #[test]
    fn rank_deficient_design() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| if j == 0 { 1.0 } else { i as f64 });
        let design = CovariateDesign::new(vec!["a".into(), "b".into(), "c".into()], x).unwrap();
        let w = Array2::from_elem((4, 2), 0.5);
        assert!(matches!(
            gamma_m_step(&design, &w, &Array2::zeros((3, 2))),
            Err(Error::RankDeficientDesign)
        ));
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 * 0.3 - 0.7 });
        let design = CovariateDesign::new(vec!["(Intercept)".into(), "z".into()], x).unwrap();
        let weights = Array2::from_shape_fn((6, 3), |(i, k)| ((i + k) % 3 + 1) as f64 / 6.0);
        let gamma = array![[0.0, 0.2, -0.4], [0.0, 0.5, 0.1]];
        let h = gamma_hessian(&design, &gamma);
        let step = 1e-6;
        for (col, k, a) in [(0usize, 1usize, 0usize), (1, 1, 1), (2, 2, 0), (3, 2, 1)] {
            let mut plus = gamma.clone();
            plus[[a, k]] += step;
            let mut minus = gamma.clone();
            minus[[a, k]] -= step;
            let gp = Array1::from(gamma_gradient(&design, &weights, &plus));
            let gm = Array1::from(gamma_gradient(&design, &weights, &minus));
            let fd = (gp - gm) / (2.0 * step);
            for r in 0..4 {
                let rel = (fd[r] - h[[r, col]]).abs() / h[[r, col]].abs().max(1.0);
                assert!(rel < 1e-6, "({r},{col}): {} vs {}", fd[r], h[[r, col]]);
            }
        }
    }
}
