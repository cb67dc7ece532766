use std::fmt::{self, Write as _};

use ndarray::{Array2, Axis};
use serde::Serialize;

use super::cluster::{cluster_logliks, posterior_from_parts};
use super::{bic, resolve_design};
use crate::error::Result;
use crate::estimation::covariate_standard_errors;
use crate::model::{count_parameters, MixtureModel, Model};
use crate::seqdata::{CovariateDesign, SequenceDataset};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub covariate: String,
    pub estimate: f64,
    /// `NaN` (`null` in JSON) when the Hessian could not be inverted.
    pub std_error: f64,
}

/// Summary of a fitted mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSummary {
    pub cluster_names: Vec<String>,
    /// Coefficient tables for clusters 2..K (cluster 1 is the reference).
    pub coefficients: Vec<Vec<CoefficientRow>>,
    pub loglik: f64,
    pub bic: f64,
    pub prior_means: Vec<f64>,
    pub most_probable_counts: Vec<usize>,
    pub most_probable_proportions: Vec<f64>,
    /// Row `k`: mean posterior cluster probabilities of subjects whose most
    /// probable cluster is `k` (`NaN` for clusters with no such subjects).
    pub classification_table: Vec<Vec<f64>>,
    /// Posterior cluster probabilities, `N × K`.
    #[serde(skip)]
    pub posterior: Array2<f64>,
    /// Most probable cluster of each subject (ties go to the lowest index).
    #[serde(skip)]
    pub most_probable: Vec<usize>,
}

fn argmax_lowest(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Covariate effects with conditional standard errors, fit statistics,
/// prior means and the classification table.
pub fn mixture_summary(
    mix: &MixtureModel,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<MixtureSummary> {
    let design = resolve_design(mix, data, design)?;
    mix.clusters()[0].check_data(data)?;
    let k_len = mix.n_clusters();
    let prior = mix.prior_probs(&design)?;
    let lls = cluster_logliks(mix, data);
    let posterior = posterior_from_parts(&prior, &lls)?;

    // log P(Y_i) = log Σ_k w_ik P(Y_i | k)
    let loglik: f64 = (0..data.n_subjects())
        .map(|i| {
            super::log_sum_exp((0..k_len).map(|k| prior[[i, k]].ln() + lls[[i, k]]))
        })
        .sum();
    let count = count_parameters(&Model::Mixture(mix.clone()), data)?;

    let se = covariate_standard_errors(mix, data, Some(&design))
        .unwrap_or_else(|_| Array2::from_elem(mix.gamma().dim(), f64::NAN));
    let coefficients = (1..k_len)
        .map(|k| {
            mix.covariate_names()
                .iter()
                .enumerate()
                .map(|(q, name)| CoefficientRow {
                    covariate: name.clone(),
                    estimate: mix.gamma()[[q, k]],
                    std_error: se[[q, k]],
                })
                .collect()
        })
        .collect();

    let most_probable: Vec<usize> = posterior.rows().into_iter().map(argmax_lowest).collect();
    let mut counts = vec![0usize; k_len];
    let mut table = vec![vec![0.0; k_len]; k_len];
    for (i, &k) in most_probable.iter().enumerate() {
        counts[k] += 1;
        for j in 0..k_len {
            table[k][j] += posterior[[i, j]];
        }
    }
    for (row, &c) in table.iter_mut().zip(&counts) {
        for v in row.iter_mut() {
            *v /= c as f64;
        }
    }
    let n = data.n_subjects() as f64;
    Ok(MixtureSummary {
        cluster_names: mix.cluster_names().to_vec(),
        coefficients,
        loglik,
        bic: bic(loglik, count.p, count.nobs),
        prior_means: prior.mean_axis(Axis(0)).expect("n > 0").to_vec(),
        most_probable_proportions: counts.iter().map(|&c| c as f64 / n).collect(),
        most_probable_counts: counts,
        classification_table: table,
        posterior,
        most_probable,
    })
}

fn pad_row(out: &mut String, label: &str, width: usize, cells: &[String], cell_width: usize) {
    let _ = write!(out, "{label:<width$}");
    for c in cells {
        let _ = write!(out, " {c:>cell_width$}");
    }
    out.push('\n');
}

impl fmt::Display for MixtureSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        let names = &self.cluster_names;
        if !self.coefficients.is_empty() {
            out.push_str("Covariate effects :\n");
            let _ = writeln!(out, "{} is the reference.\n", names[0]);
            for (k, rows) in self.coefficients.iter().enumerate() {
                let _ = writeln!(out, "{} :", names[k + 1]);
                let w = rows.iter().map(|r| r.covariate.len()).max().unwrap_or(0).max(8);
                pad_row(&mut out, "", w, &["Estimate".into(), "Std. error".into()], 10);
                for r in rows {
                    pad_row(
                        &mut out,
                        &r.covariate,
                        w,
                        &[format!("{:.3}", r.estimate), format!("{:.3}", r.std_error)],
                        10,
                    );
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "Log-likelihood: {:.2}   BIC: {:.2}\n", self.loglik, self.bic);

        let cw = names.iter().map(String::len).max().unwrap_or(0).max(9);
        out.push_str("Means of prior cluster probabilities :\n");
        pad_row(&mut out, "", 0, names, cw);
        let cells: Vec<String> = self.prior_means.iter().map(|v| format!("{v:.3}")).collect();
        pad_row(&mut out, "", 0, &cells, cw);
        out.push('\n');

        out.push_str("Most probable clusters :\n");
        let lw = names.iter().map(String::len).max().unwrap_or(0).max(10);
        pad_row(&mut out, "", lw, names, cw);
        let counts: Vec<String> = self.most_probable_counts.iter().map(|c| c.to_string()).collect();
        pad_row(&mut out, "count", lw, &counts, cw);
        let props: Vec<String> =
            self.most_probable_proportions.iter().map(|v| format!("{v:.3}")).collect();
        pad_row(&mut out, "proportion", lw, &props, cw);
        out.push('\n');

        out.push_str("Classification table :\n");
        out.push_str("Mean cluster probabilities (in columns) by the most probable cluster (rows)\n\n");
        pad_row(&mut out, "", lw, names, cw);
        for (name, row) in names.iter().zip(&self.classification_table) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            pad_row(&mut out, name, lw, &cells, cw);
        }
        f.write_str(&out)
    }
}
