use std::ops::Range;

use ndarray::{s, Array1, Array2};

use super::{check_channels_compatible, HmmModel, Trimmed, ZeroMask};
use crate::error::{Error, Result};
use crate::random::{dirichlet_free, rng_from_seed};
use crate::seqdata::{ChannelSpec, CovariateDesign, INTERCEPT};

/// A mixture of hidden Markov models with multinomial-logit cluster weights.
///
/// `gamma` is `Q × K`: one coefficient column per cluster over the covariate
/// design columns. The first cluster is the reference and its column is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub(crate) clusters: Vec<HmmModel>,
    pub(crate) cluster_names: Vec<String>,
    pub(crate) gamma: Array2<f64>,
    pub(crate) covariate_names: Vec<String>,
}

/// Mixture flattened into a single HMM whose transition matrix is block
/// diagonal, together with each subject's initial distribution.
#[derive(Debug, Clone)]
pub struct CombinedModel {
    pub model: HmmModel,
    /// `N × ΣS_k`; row `i` is `(w_i1 π¹, …, w_iK π^K)`.
    pub initials: Array2<f64>,
    /// State range of each cluster inside the combined model.
    pub blocks: Vec<Range<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictedKind {
    /// Mixture Markov model: hidden states are the observed symbols.
    MixtureMarkov,
    /// Latent class model: one hidden state per cluster.
    LatentClass,
}

pub(crate) fn default_cluster_names(k: usize) -> Vec<String> {
    (1..=k).map(|c| format!("Cluster {c}")).collect()
}

/// Multinomial-logit probabilities for one row of linear predictors,
/// computed with the maximum subtracted.
pub(crate) fn softmax_in_place(eta: &mut [f64]) {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in eta.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in eta.iter_mut() {
        *v /= total;
    }
}

impl MixtureModel {
    /// `gamma` defaults to zeros (equal prior weights). Its first column must
    /// be zero and its row count must match `covariate_names`.
    pub fn new(
        clusters: Vec<HmmModel>,
        covariate_names: Vec<String>,
        gamma: Option<Array2<f64>>,
    ) -> Result<Self> {
        let first = clusters
            .first()
            .ok_or_else(|| Error::DimensionMismatch("mixture needs at least one cluster".into()))?;
        for (k, c) in clusters.iter().enumerate().skip(1) {
            check_channels_compatible(&first.channels, &c.channels).map_err(|e| {
                Error::DimensionMismatch(format!("cluster {} channels differ: {e}", k + 1))
            })?;
        }
        let q = covariate_names.len();
        if q == 0 {
            return Err(Error::DimensionMismatch("at least the intercept is required".into()));
        }
        let k = clusters.len();
        let gamma = gamma.unwrap_or_else(|| Array2::zeros((q, k)));
        if gamma.dim() != (q, k) {
            return Err(Error::DimensionMismatch(format!(
                "gamma is {:?}, expected ({q}, {k})",
                gamma.dim()
            )));
        }
        if gamma.column(0).iter().any(|&v| v != 0.0) {
            return Err(Error::GammaReferenceNotZero);
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("gamma contains non-finite values".into()));
        }
        Ok(Self {
            clusters,
            cluster_names: default_cluster_names(k),
            gamma,
            covariate_names,
        })
    }

    /// Mixture whose covariate names come from `design` (intercept only when absent).
    pub fn with_design(
        clusters: Vec<HmmModel>,
        design: Option<&CovariateDesign>,
        gamma: Option<Array2<f64>>,
    ) -> Result<Self> {
        let names = design.map_or_else(|| vec![INTERCEPT.to_string()], |d| d.names().to_vec());
        Self::new(clusters, names, gamma)
    }

    /// Mixture Markov model or latent class model with random free rows.
    ///
    /// Mixture Markov clusters have one state per symbol with fixed identity
    /// emissions; latent class clusters have a single state whose transition
    /// is the scalar one.
    pub fn restricted(
        kind: RestrictedKind,
        channels: Vec<ChannelSpec>,
        n_clusters: usize,
        design: Option<&CovariateDesign>,
        seed: u64,
    ) -> Result<Self> {
        if n_clusters == 0 {
            return Err(Error::DimensionMismatch("mixture needs at least one cluster".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut clusters = Vec::with_capacity(n_clusters);
        match kind {
            RestrictedKind::MixtureMarkov => {
                if channels.len() != 1 {
                    return Err(Error::MultichannelNotAllowed);
                }
                let m = channels[0].alphabet.len();
                let free = vec![true; m];
                for _ in 0..n_clusters {
                    let initial = Array1::from(dirichlet_free(&mut rng, &free));
                    let mut transition = Array2::zeros((m, m));
                    for mut row in transition.rows_mut() {
                        row.assign(&Array1::from(dirichlet_free(&mut rng, &free)));
                    }
                    let identity = Array2::from_shape_fn((m, m), |(a, b)| f64::from(u8::from(a == b)));
                    let mask = ZeroMask {
                        initial: Array1::from_elem(m, false),
                        transition: Array2::from_elem((m, m), false),
                        emissions: vec![identity.mapv(|v| v == 0.0)],
                    };
                    let model = HmmModel::with_mask(
                        channels.clone(),
                        initial,
                        transition,
                        vec![identity],
                        mask,
                    )?
                    .with_state_names(channels[0].alphabet.labels().to_vec())?;
                    clusters.push(model);
                }
            }
            RestrictedKind::LatentClass => {
                for _ in 0..n_clusters {
                    let emissions = channels
                        .iter()
                        .map(|ch| {
                            let row = dirichlet_free(&mut rng, &vec![true; ch.alphabet.len()]);
                            Array2::from_shape_vec((1, row.len()), row).expect("one row")
                        })
                        .collect();
                    let model = HmmModel::new(
                        channels.clone(),
                        Array1::from(vec![1.0]),
                        Array2::from_elem((1, 1), 1.0),
                        emissions,
                    )?
                    .with_state_names(vec!["Class".to_string()])?;
                    clusters.push(model);
                }
            }
        }
        Self::with_design(clusters, design, None)
    }

    pub fn with_cluster_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_clusters() {
            return Err(Error::DimensionMismatch(format!(
                "{} cluster names for {} clusters",
                names.len(),
                self.n_clusters()
            )));
        }
        self.cluster_names = names;
        Ok(self)
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[HmmModel] {
        &self.clusters
    }

    pub fn cluster_names(&self) -> &[String] {
        &self.cluster_names
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.clusters[0].channels
    }

    pub fn total_states(&self) -> usize {
        self.clusters.iter().map(HmmModel::n_states).sum()
    }

    pub fn blocks(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.clusters
            .iter()
            .map(|c| {
                let r = start..start + c.n_states();
                start = r.end;
                r
            })
            .collect()
    }

    /// Check a design against the covariate names this model was built with.
    pub fn check_design(&self, design: &CovariateDesign) -> Result<()> {
        if design.names() != self.covariate_names.as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "design columns {:?} do not match model covariates {:?}",
                design.names(),
                self.covariate_names
            )));
        }
        Ok(())
    }

    /// Prior cluster probabilities `w_ik` for every subject.
    pub fn prior_probs(&self, design: &CovariateDesign) -> Result<Array2<f64>> {
        self.check_design(design)?;
        let mut eta = design.matrix().dot(&self.gamma);
        for mut row in eta.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("standard layout"));
        }
        Ok(eta)
    }

    /// Free parameters of all clusters plus `Q·(K−1)` covariate coefficients.
    pub fn free_parameter_count(&self) -> usize {
        let clusters: usize = self.clusters.iter().map(HmmModel::free_parameter_count).sum();
        clusters + self.covariate_names.len() * (self.n_clusters() - 1)
    }

    /// Flatten into one HMM with block-diagonal transitions and stacked
    /// emissions. Off-diagonal blocks are structural zeros.
    pub fn combine(&self, design: &CovariateDesign) -> Result<CombinedModel> {
        let weights = self.prior_probs(design)?;
        let blocks = self.blocks();
        let total = self.total_states();
        let channels = self.channels().to_vec();

        let mut transition = Array2::zeros((total, total));
        let mut trans_mask = Array2::from_elem((total, total), true);
        let mut emissions: Vec<Array2<f64>> = channels
            .iter()
            .map(|ch| Array2::zeros((total, ch.alphabet.len())))
            .collect();
        let mut emis_mask: Vec<Array2<bool>> = emissions.iter().map(|e| e.mapv(|_| false)).collect();
        let mut init_mask = Array1::from_elem(total, false);
        let mut state_names = Vec::with_capacity(total);

        for ((cluster, block), name) in self.clusters.iter().zip(&blocks).zip(&self.cluster_names) {
            let r = block.clone();
            transition.slice_mut(s![r.clone(), r.clone()]).assign(&cluster.transition);
            trans_mask
                .slice_mut(s![r.clone(), r.clone()])
                .assign(&cluster.mask.transition);
            for c in 0..channels.len() {
                emissions[c].slice_mut(s![r.clone(), ..]).assign(&cluster.emissions[c]);
                emis_mask[c].slice_mut(s![r.clone(), ..]).assign(&cluster.mask.emissions[c]);
            }
            init_mask.slice_mut(s![r.clone()]).assign(&cluster.mask.initial);
            state_names.extend(cluster.state_names.iter().map(|s| format!("{name}: {s}")));
        }

        let n = design.n_rows();
        let mut initials = Array2::zeros((n, total));
        for i in 0..n {
            for (k, (cluster, block)) in self.clusters.iter().zip(&blocks).enumerate() {
                for (j, s) in block.clone().enumerate() {
                    initials[[i, s]] = weights[[i, k]] * cluster.initial[j];
                }
            }
        }
        // the combined model's own initial vector is the subject average
        let mut initial = initials.mean_axis(ndarray::Axis(0)).expect("n > 0");
        let initial_sum = initial.sum();
        initial /= initial_sum;

        let mask = ZeroMask {
            initial: init_mask,
            transition: trans_mask,
            emissions: emis_mask,
        };
        let mut model = HmmModel::with_mask(channels, initial, transition, emissions, mask)?;
        model.state_names = state_names;
        Ok(CombinedModel {
            model,
            initials,
            blocks,
        })
    }

    /// Split into standalone HMMs, one per cluster.
    pub fn separate(&self) -> Vec<HmmModel> {
        self.clusters.clone()
    }

    pub fn trim(&self, tol: f64) -> Result<Trimmed<Self>> {
        let mut out = self.clone();
        let mut entries = 0;
        let mut max_removed: f64 = 0.0;
        for c in out.clusters.iter_mut() {
            let t = c.trim(tol)?;
            entries += t.entries_trimmed;
            max_removed = max_removed.max(t.max_mass_removed);
            *c = t.model;
        }
        Ok(Trimmed {
            model: out,
            entries_trimmed: entries,
            max_mass_removed: max_removed,
        })
    }

    /// Treat a plain HMM as a one-cluster mixture with an intercept-only design.
    pub fn from_single(model: HmmModel) -> Self {
        Self {
            clusters: vec![model],
            cluster_names: default_cluster_names(1),
            gamma: Array2::zeros((1, 1)),
            covariate_names: vec![INTERCEPT.to_string()],
        }
    }
}
