//! Independent reference computations shared by the integration tests and
//! the acceptance harness. Nothing here calls the forward or backward
//! recursions of the library.

#![allow(dead_code)]

use markovseq::model::HmmModel;
use markovseq::random::rng_from_seed;
use markovseq::seqdata::{Alphabet, Channel, ChannelSpec, CovariateDesign, SequenceDataset, MISSING};
use markovseq::simulate::{inject_missing, simulate_hmm_data, simulate_mhmm_data};
use markovseq::MixtureModel;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn channels(sizes: &[usize]) -> Vec<ChannelSpec> {
    sizes
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let labels: Vec<String> = (0..m).map(|j| format!("{}{j}", (b'a' + c as u8) as char)).collect();
            ChannelSpec {
                name: format!("c{c}"),
                alphabet: Alphabet::new(&labels, "*").unwrap(),
            }
        })
        .collect()
}

/// A probability row with entries bounded away from zero, except that each
/// entry is dropped to an exact zero with probability `zero_rate` (at least
/// one entry stays positive).
pub fn random_row(rng: &mut ChaCha8Rng, len: usize, zero_rate: f64) -> Vec<f64> {
    let keep = rng.random_range(0..len);
    let mut row: Vec<f64> = (0..len)
        .map(|j| {
            if j != keep && rng.random::<f64>() < zero_rate {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, zero_rate: f64) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for r in 0..rows {
        for (j, v) in random_row(rng, cols, zero_rate).into_iter().enumerate() {
            m[[r, j]] = v;
        }
    }
    m
}

pub fn random_hmm(rng: &mut ChaCha8Rng, n_states: usize, chans: &[ChannelSpec], zero_rate: f64) -> HmmModel {
    let initial = Array1::from(random_row(rng, n_states, zero_rate));
    let transition = random_matrix(rng, n_states, n_states, zero_rate);
    let emissions = chans
        .iter()
        .map(|ch| random_matrix(rng, n_states, ch.alphabet.len(), zero_rate))
        .collect();
    HmmModel::new(chans.to_vec(), initial, transition, emissions).unwrap()
}

/// A small HMM together with data simulated from it (so the data is always
/// possible under the model), with about `missing` of the cells removed.
pub struct Instance {
    pub model: HmmModel,
    pub data: SequenceDataset,
}

pub fn small_instance(seed: u64, missing: f64) -> Instance {
    let mut rng = rng_from_seed(seed);
    let s = rng.random_range(1..=3);
    let c = rng.random_range(1..=2);
    let sizes: Vec<usize> = (0..c).map(|_| rng.random_range(1..=3)).collect();
    let t = rng.random_range(1..=5);
    let n = rng.random_range(1..=4);
    let model = random_hmm(&mut rng, s, &channels(&sizes), 0.15);
    let sim = simulate_hmm_data(&model, n, t, seed).unwrap();
    let data = inject_missing(&sim.data, missing, seed ^ 0x5eed).unwrap();
    Instance { model, data }
}

pub struct MixtureInstance {
    pub mix: MixtureModel,
    pub design: CovariateDesign,
    pub data: SequenceDataset,
}

/// A mixture with an intercept and one continuous covariate.
pub fn mixture_instance(
    seed: u64,
    k: usize,
    max_states: usize,
    n: usize,
    t: usize,
    zero_rate: f64,
) -> MixtureInstance {
    let mut rng = rng_from_seed(seed);
    let c = rng.random_range(1..=2);
    let sizes: Vec<usize> = (0..c).map(|_| rng.random_range(2..=3)).collect();
    let chans = channels(&sizes);
    let clusters = (0..k)
        .map(|_| {
            let s = rng.random_range(1..=max_states);
            random_hmm(&mut rng, s, &chans, zero_rate)
        })
        .collect();
    let x = Array2::from_shape_fn((n, 2), |(_, j)| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-1.5..1.5)
        }
    });
    let design = CovariateDesign::new(vec!["(Intercept)".into(), "x".into()], x).unwrap();
    let gamma = Array2::from_shape_fn((2, k), |(_, col)| {
        if col == 0 {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let mix = MixtureModel::with_design(clusters, Some(&design), Some(gamma)).unwrap();
    let sim = simulate_mhmm_data(&mix, Some(&design), n, t, seed).unwrap();
    let data = inject_missing(&sim.data, 0.1, seed ^ 0x5eed).unwrap();
    MixtureInstance { mix, design, data }
}

/// Dataset from explicit code grids, one per channel.
pub fn dataset(chans: &[ChannelSpec], grids: &[Vec<Vec<usize>>]) -> SequenceDataset {
    let n = grids[0].len();
    let t = grids[0][0].len();
    let channels = chans
        .iter()
        .zip(grids)
        .map(|(spec, grid)| Channel {
            name: spec.name.clone(),
            alphabet: spec.alphabet.clone(),
            obs: Array2::from_shape_fn((n, t), |(i, j)| grid[i][j]),
        })
        .collect();
    SequenceDataset::new(
        (1..=n).map(|i| i.to_string()).collect(),
        (1..=t).map(|j| j.to_string()).collect(),
        channels,
    )
    .unwrap()
}

/// Probability of subject `i`'s observations at time `t` given state `s`.
fn emission(model: &HmmModel, data: &SequenceDataset, i: usize, t: usize, s: usize) -> f64 {
    let mut p = 1.0;
    for (c, ch) in data.channels().iter().enumerate() {
        let code = ch.obs[[i, t]];
        if code != MISSING {
            p *= model.emissions()[c][[s, code]];
        }
    }
    p
}

/// All `S^T` hidden paths in lexicographic order.
pub fn all_paths(n_states: usize, t_len: usize) -> Vec<Vec<usize>> {
    let total = n_states.pow(t_len as u32);
    (0..total)
        .map(|mut code| {
            let mut path = vec![0; t_len];
            for slot in path.iter_mut().rev() {
                *slot = code % n_states;
                code /= n_states;
            }
            path
        })
        .collect()
}

/// Joint probability `P(z, y_i)` as the plain product over time.
pub fn path_probability(
    model: &HmmModel,
    initial: &[f64],
    data: &SequenceDataset,
    i: usize,
    path: &[usize],
) -> f64 {
    let mut p = initial[path[0]] * emission(model, data, i, 0, path[0]);
    for t in 1..path.len() {
        p *= model.transition()[[path[t - 1], path[t]]] * emission(model, data, i, t, path[t]);
    }
    p
}

pub struct Enumerated {
    pub loglik: f64,
    /// `T × S` posterior state probabilities.
    pub posterior: Array2<f64>,
    /// Most probable path; among exact ties the one that is smallest when
    /// compared from the last time point backwards.
    pub best_path: Vec<usize>,
    pub best_log_joint: f64,
}

pub fn enumerate(model: &HmmModel, initial: Option<&[f64]>, data: &SequenceDataset, i: usize) -> Enumerated {
    let s = model.n_states();
    let t_len = data.n_time();
    let own = model.initial().to_vec();
    let initial = initial.unwrap_or(&own);
    let paths = all_paths(s, t_len);
    let probs: Vec<f64> = paths.iter().map(|p| path_probability(model, initial, data, i, p)).collect();
    let total: f64 = probs.iter().sum();
    let mut posterior = Array2::zeros((t_len, s));
    for (path, &p) in paths.iter().zip(&probs) {
        for (t, &z) in path.iter().enumerate() {
            posterior[[t, z]] += p / total;
        }
    }
    let log_joint: Vec<f64> = paths
        .iter()
        .map(|p| log_path_probability(model, initial, data, i, p))
        .collect();
    let best = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * best.abs().max(1.0);
    let best_path = paths
        .iter()
        .zip(&log_joint)
        .filter(|(_, &lj)| lj >= best - slack)
        .map(|(p, _)| p)
        .min_by(|a, b| a.iter().rev().cmp(b.iter().rev()))
        .unwrap()
        .clone();
    Enumerated {
        loglik: total.ln(),
        posterior,
        best_path,
        best_log_joint: best,
    }
}

/// Log of the joint probability, summed term by term to avoid underflow.
pub fn log_path_probability(
    model: &HmmModel,
    initial: &[f64],
    data: &SequenceDataset,
    i: usize,
    path: &[usize],
) -> f64 {
    let mut lp = initial[path[0]].ln() + emission(model, data, i, 0, path[0]).ln();
    for t in 1..path.len() {
        lp += model.transition()[[path[t - 1], path[t]]].ln() + emission(model, data, i, t, path[t]).ln();
    }
    lp
}

/// Prior cluster probabilities computed directly from the logit formula.
pub fn prior_probs(gamma: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let eta = x.dot(gamma);
    let mut w = eta.clone();
    for mut row in w.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    w
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Relative error with the denominator floored at one, so coordinates whose
/// exact value is near zero are compared on an absolute scale.
pub fn rel_err_floor(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Binary logistic regression with fractional responses `y` by
/// iteratively reweighted least squares, solving the normal equations of each
/// step by Gaussian elimination.
pub fn irls_logistic(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, q) = x.dim();
    let mut beta = vec![0.0; q];
    for _ in 0..200 {
        let mut xtwx = vec![vec![0.0; q]; q];
        let mut xtwz = vec![0.0; q];
        for i in 0..n {
            let eta: f64 = (0..q).map(|j| x[[i, j]] * beta[j]).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            let w = p * (1.0 - p);
            let z = eta + (y[i] - p) / w;
            for a in 0..q {
                xtwz[a] += x[[i, a]] * w * z;
                for b in 0..q {
                    xtwx[a][b] += x[[i, a]] * w * x[[i, b]];
                }
            }
        }
        let next = solve(xtwx, xtwz);
        let change = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if change < 1e-14 {
            break;
        }
    }
    beta
}

#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r][r];
    }
    x
}
