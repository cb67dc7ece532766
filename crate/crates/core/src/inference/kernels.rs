//! Per-subject forward and backward recursions.

use ndarray::{Array1, Array2, ArrayView1};

use crate::model::HmmModel;
use crate::seqdata::{SequenceDataset, MISSING};

/// Emission likelihood of every time point under every state (`T × S`).
/// Missing channels contribute a factor of one.
pub(crate) fn subject_emissions(model: &HmmModel, data: &SequenceDataset, i: usize) -> Array2<f64> {
    let (t_len, s_len) = (data.n_time(), model.n_states());
    let mut e = Array2::ones((t_len, s_len));
    for (c, ch) in data.channels().iter().enumerate() {
        let b = &model.emissions()[c];
        for t in 0..t_len {
            let m = ch.obs[[i, t]];
            if m == MISSING {
                continue;
            }
            for s in 0..s_len {
                e[[t, s]] *= b[[s, m]];
            }
        }
    }
    e
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) struct ScaledForward {
    /// Normalized forward variables, `T × S`.
    pub alpha: Array2<f64>,
    /// Scaling constants `c_t`; the log-likelihood is the sum of their logs.
    pub scale: Array1<f64>,
}

impl ScaledForward {
    pub fn loglik(&self) -> f64 {
        self.scale.iter().map(|c| c.ln()).sum()
    }
}

/// Scaled forward pass. Returns the time index at which the scaling constant
/// vanished (or became non-finite) when the sequence is impossible.
pub(crate) fn forward_scaled(
    trans: &Array2<f64>,
    init: ArrayView1<f64>,
    emis: &Array2<f64>,
) -> Result<ScaledForward, usize> {
    let (t_len, s_len) = emis.dim();
    let mut alpha = Array2::zeros((t_len, s_len));
    let mut scale = Array1::zeros(t_len);
    for t in 0..t_len {
        let mut row = if t == 0 {
            &init * &emis.row(0)
        } else {
            alpha.row(t - 1).dot(trans) * emis.row(t)
        };
        let c: f64 = row.sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(t);
        }
        row /= c;
        alpha.row_mut(t).assign(&row);
        scale[t] = c;
    }
    Ok(ScaledForward { alpha, scale })
}

/// Backward pass scaled by the forward constants, so that `alpha * beta` is
/// the state posterior.
pub(crate) fn backward_scaled(
    trans: &Array2<f64>,
    emis: &Array2<f64>,
    scale: &Array1<f64>,
) -> Array2<f64> {
    let (t_len, s_len) = emis.dim();
    let mut beta = Array2::zeros((t_len, s_len));
    beta.row_mut(t_len - 1).fill(1.0);
    for t in (0..t_len - 1).rev() {
        let next = &emis.row(t + 1) * &beta.row(t + 1);
        let row = trans.dot(&next) / scale[t + 1];
        beta.row_mut(t).assign(&row);
    }
    beta
}

fn ln_matrix(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(f64::ln)
}

/// Log-space forward pass, `T × S`. Impossible paths are `-inf`.
pub(crate) fn forward_log(
    trans: &Array2<f64>,
    init: ArrayView1<f64>,
    emis: &Array2<f64>,
) -> Array2<f64> {
    let (t_len, s_len) = emis.dim();
    let la_trans = ln_matrix(trans);
    let mut la = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
    for s in 0..s_len {
        la[[0, s]] = init[s].ln() + emis[[0, s]].ln();
    }
    for t in 1..t_len {
        for r in 0..s_len {
            let prev = la.row(t - 1);
            let acc = log_sum_exp((0..s_len).map(|s| prev[s] + la_trans[[s, r]]));
            la[[t, r]] = acc + emis[[t, r]].ln();
        }
    }
    la
}

/// Log-space backward pass, `T × S`.
pub(crate) fn backward_log(trans: &Array2<f64>, emis: &Array2<f64>) -> Array2<f64> {
    let (t_len, s_len) = emis.dim();
    let la_trans = ln_matrix(trans);
    let ln_emis = emis.mapv(f64::ln);
    let mut lb = Array2::zeros((t_len, s_len));
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let acc = log_sum_exp(
                (0..s_len).map(|r| la_trans[[s, r]] + ln_emis[[t + 1, r]] + lb[[t + 1, r]]),
            );
            lb[[t, s]] = acc;
        }
    }
    lb
}
