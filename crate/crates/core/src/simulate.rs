//! Random parameters and synthetic datasets.
//!
//! Subject `i` of a simulation seeded with `seed` draws everything (cluster,
//! hidden path, observations) from substream `i` of that seed, so results do
//! not depend on scheduling or on the number of threads.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{HmmModel, MixtureModel, Model, ZeroMask};
use crate::random::{dirichlet_free, rng_from_seed, sample_categorical, substream};
use crate::seqdata::{Alphabet, Channel, ChannelSpec, CovariateDesign, SequenceDataset, MISSING};

/// Dimensions and structure of randomly generated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n_states: usize,
    /// Alphabet size of each channel.
    pub n_symbols: Vec<usize>,
    /// One gives a plain HMM, more gives a mixture of equally likely clusters.
    pub n_clusters: usize,
    /// Forbid transitions back to lower-numbered states.
    pub left_to_right: bool,
    pub seed: u64,
}

/// A simulated dataset with the hidden quantities that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub data: SequenceDataset,
    /// `N × T` hidden states; combined state indices for mixtures.
    pub paths: Array2<usize>,
    /// Cluster of each subject, numbered from 1 (mixtures only).
    pub clusters: Option<Vec<usize>>,
}

/// Channels named `ch1, ch2, …` with symbols `m1, m2, …`.
pub fn default_channels(n_symbols: &[usize]) -> Result<Vec<ChannelSpec>> {
    n_symbols
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let labels: Vec<String> = (1..=m).map(|j| format!("m{j}")).collect();
            Ok(ChannelSpec {
                name: format!("ch{}", c + 1),
                alphabet: Alphabet::new(&labels, "*")?,
            })
        })
        .collect()
}

fn random_hmm(
    channels: &[ChannelSpec],
    n_states: usize,
    left_to_right: bool,
    rng: &mut impl Rng,
) -> Result<HmmModel> {
    let mut mask = ZeroMask::none(n_states, channels);
    if left_to_right {
        for r in 0..n_states {
            for s in 0..r {
                mask.transition[[r, s]] = true;
            }
        }
    }
    let draw = |rng: &mut _, free: Vec<bool>| Array1::from(dirichlet_free(rng, &free));
    let initial = draw(rng, vec![true; n_states]);
    let mut transition = Array2::zeros((n_states, n_states));
    for r in 0..n_states {
        let free: Vec<bool> = mask.transition.row(r).iter().map(|&z| !z).collect();
        transition.row_mut(r).assign(&draw(rng, free));
    }
    let mut emissions = Vec::with_capacity(channels.len());
    for ch in channels {
        let m = ch.alphabet.len();
        let mut e = Array2::zeros((n_states, m));
        for mut row in e.rows_mut() {
            row.assign(&draw(rng, vec![true; m]));
        }
        emissions.push(e);
    }
    HmmModel::with_mask(channels.to_vec(), initial, transition, emissions, mask)
}

/// Random parameters: every row is Dirichlet(1) over its free entries.
/// Mixtures get intercept-only designs with all coefficients zero.
pub fn simulate_parameters(spec: &SimSpec) -> Result<Model> {
    if spec.n_states == 0 || spec.n_clusters == 0 || spec.n_symbols.is_empty() {
        return Err(Error::DimensionMismatch(
            "states, clusters and channels must all be positive".into(),
        ));
    }
    if spec.n_symbols.contains(&0) {
        return Err(Error::EmptyAlphabet);
    }
    let channels = default_channels(&spec.n_symbols)?;
    let mut rng = rng_from_seed(spec.seed);
    if spec.n_clusters == 1 {
        return Ok(Model::Hmm(random_hmm(&channels, spec.n_states, spec.left_to_right, &mut rng)?));
    }
    let clusters = (0..spec.n_clusters)
        .map(|_| random_hmm(&channels, spec.n_states, spec.left_to_right, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Model::Mixture(MixtureModel::with_design(clusters, None, None)?))
}

/// Hidden path and observation codes (`T × C`) for one subject.
fn sample_subject(model: &HmmModel, t_len: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut path = Vec::with_capacity(t_len);
    let mut obs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let s = if t == 0 {
            sample_categorical(rng, model.initial().iter().copied())
        } else {
            sample_categorical(rng, model.transition().row(path[t - 1]).iter().copied())
        };
        path.push(s);
        obs.push(
            model
                .emissions()
                .iter()
                .map(|b| sample_categorical(rng, b.row(s).iter().copied()))
                .collect(),
        );
    }
    (path, obs)
}

/// Cluster label, state offset, hidden path and codes per channel.
type SubjectDraw = (Option<usize>, usize, Vec<usize>, Vec<Vec<usize>>);

fn assemble(
    channels: &[ChannelSpec],
    n: usize,
    t_len: usize,
    subjects: Vec<SubjectDraw>,
) -> Result<Simulated> {
    let mut paths = Array2::zeros((n, t_len));
    let mut obs: Vec<Array2<usize>> = channels.iter().map(|_| Array2::zeros((n, t_len))).collect();
    let mut clusters = Vec::with_capacity(n);
    for (i, (cluster, offset, path, codes)) in subjects.into_iter().enumerate() {
        clusters.push(cluster);
        for t in 0..t_len {
            paths[[i, t]] = offset + path[t];
            for (c, o) in obs.iter_mut().enumerate() {
                o[[i, t]] = codes[t][c];
            }
        }
    }
    let data = SequenceDataset::new(
        (1..=n).map(|i| i.to_string()).collect(),
        (1..=t_len).map(|t| t.to_string()).collect(),
        channels
            .iter()
            .zip(obs)
            .map(|(spec, obs)| Channel {
                name: spec.name.clone(),
                alphabet: spec.alphabet.clone(),
                obs,
            })
            .collect(),
    )?;
    let clusters = clusters.into_iter().collect::<Option<Vec<_>>>();
    Ok(Simulated {
        data,
        paths,
        clusters,
    })
}

fn check_dims(n: usize, t_len: usize) -> Result<()> {
    if n == 0 || t_len == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Sequences from an HMM: `z_1 ~ π`, `z_t ~ A[z_{t−1}]`, and each channel
/// independently from its emission row.
pub fn simulate_hmm_data(model: &HmmModel, n: usize, t_len: usize, seed: u64) -> Result<Simulated> {
    check_dims(n, t_len)?;
    let subjects = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let (path, codes) = sample_subject(model, t_len, &mut rng);
            (None, 0, path, codes)
        })
        .collect();
    assemble(model.channels(), n, t_len, subjects)
}

/// Sequences from a mixture: each subject's cluster is drawn from its prior
/// cluster probabilities, then the sequences from that cluster's HMM. With a
/// single cluster this reproduces [`simulate_hmm_data`] draw for draw.
pub fn simulate_mhmm_data(
    mix: &MixtureModel,
    design: Option<&CovariateDesign>,
    n: usize,
    t_len: usize,
    seed: u64,
) -> Result<Simulated> {
    check_dims(n, t_len)?;
    let owned;
    let design = match design {
        Some(d) => d,
        None => {
            owned = CovariateDesign::intercept_only(n);
            &owned
        }
    };
    if design.n_rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows for {n} subjects",
            design.n_rows()
        )));
    }
    let weights = mix.prior_probs(design)?;
    let blocks = mix.blocks();
    let k_len = mix.n_clusters();
    let subjects = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let k = if k_len > 1 {
                sample_categorical(&mut rng, weights.row(i).iter().copied())
            } else {
                0
            };
            let (path, codes) = sample_subject(&mix.clusters()[k], t_len, &mut rng);
            (Some(k + 1), blocks[k].start, path, codes)
        })
        .collect();
    assemble(mix.channels(), n, t_len, subjects)
}

/// Replace each observed cell by a missing value with probability `rate`,
/// independently. Subject `i` uses substream `i` of `seed`.
pub fn inject_missing(data: &SequenceDataset, rate: f64, seed: u64) -> Result<SequenceDataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidControl(format!("missing rate {rate} outside [0, 1]")));
    }
    let (n, t_len, c_len) = (data.n_subjects(), data.n_time(), data.n_channels());
    let masks: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            (0..t_len * c_len).map(|_| rng.random::<f64>() < rate).collect()
        })
        .collect();
    let channels = data
        .channels()
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            let mut ch = ch.clone();
            for (i, mask) in masks.iter().enumerate() {
                for t in 0..t_len {
                    if mask[t * c_len + c] {
                        ch.obs[[i, t]] = MISSING;
                    }
                }
            }
            ch
        })
        .collect();
    SequenceDataset::new(data.subject_ids().to_vec(), data.time_labels().to_vec(), channels)
}
