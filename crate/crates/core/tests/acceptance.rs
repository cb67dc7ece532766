// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use markovseq::estimation::{loglik_gradient, perturb_model, gamma_m_step, UnconstrainedParams};
use markovseq::inference::{
    forward_backward, log_likelihood, posterior_state_probs, subject_log_likelihoods,
    viterbi_paths, FbMode,
};
use markovseq::model::count_parameters;
use markovseq::random::rng_from_seed;
use markovseq::seqdata::{CovariateDesign, MISSING};
use markovseq::simulate::simulate_hmm_data;
use markovseq::{fit_em, information_criteria, FitControl, HmmModel, MixtureModel, Model};
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

const ORACLE_INSTANCES: u64 = 200;

fn brute_force_likelihood() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = small_instance(seed, 0.1);
        let fb = forward_backward(&inst.model, &inst.data, FbMode::Scaled, None).map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for i in 0..inst.data.n_subjects() {
            let oracle = enumerate(&inst.model, None, &inst.data, i).loglik;
            let err = rel_err_floor(fb.loglik_per_subject[i], oracle);
            ensure!(err < 1e-10, "instance {seed} subject {i}: {} vs {oracle}", fb.loglik_per_subject[i]);
            worst = worst.max(err);
            total += oracle;
        }
        let ll = log_likelihood(&Model::Hmm(inst.model.clone()), &inst.data, None).map_err(|e| e.to_string())?;
        ensure!(rel_err_floor(ll, total) < 1e-10, "instance {seed}: total {ll} vs {total}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{ORACLE_INSTANCES} instances, max rel err {worst:.1e}, {elapsed:.2?}"))
}

fn scaled_vs_logspace() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let s = rng.random_range(1..=10);
        let sizes: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=6)).collect();
        let model = random_hmm(&mut rng, s, &channels(&sizes), 0.1);
        let t = if seed % 2 == 0 { 200 } else { rng.random_range(1..=200) };
        let sim = simulate_hmm_data(&model, 50, t, seed).map_err(|e| e.to_string())?;
        let data = markovseq::simulate::inject_missing(&sim.data, 0.1, seed).map_err(|e| e.to_string())?;
        let m = Model::Hmm(model);
        let a = subject_log_likelihoods(&m, &data, None, FbMode::Scaled).map_err(|e| e.to_string())?;
        let b = subject_log_likelihoods(&m, &data, None, FbMode::LogSpace).map_err(|e| e.to_string())?;
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            let d = (x - y).abs();
            ensure!(d < 1e-9, "model {seed} subject {i}: {x} vs {y}");
            worst = worst.max(d);
            checked += 1;
        }
    }
    Ok(format!("{checked} subjects, max abs diff {worst:.1e}"))
}

fn viterbi_oracle() -> Outcome {
    for seed in 0..ORACLE_INSTANCES {
        let inst = small_instance(seed, 0.1);
        let vit = viterbi_paths(&Model::Hmm(inst.model.clone()), &inst.data, None).map_err(|e| e.to_string())?;
        for i in 0..inst.data.n_subjects() {
            let oracle = enumerate(&inst.model, None, &inst.data, i);
            let path = vit.paths.row(i).to_vec();
            ensure!(path == oracle.best_path, "instance {seed} subject {i}: {path:?} vs {:?}", oracle.best_path);
            ensure!(
                rel_err(vit.log_joint[i], oracle.best_log_joint) < 1e-10,
                "instance {seed} subject {i}: log joint {} vs {}",
                vit.log_joint[i],
                oracle.best_log_joint
            );
        }
    }

    let chans = channels(&[2]);
    let same = HmmModel::new(
        chans.clone(),
        array![0.5, 0.5],
        array![[0.5, 0.5], [0.5, 0.5]],
        vec![array![[0.3, 0.7], [0.3, 0.7]]],
    )
    .unwrap();
    let data = dataset(&chans, &[vec![vec![0, 1, 1, 0]]]);
    let vit = viterbi_paths(&Model::Hmm(same), &data, None).map_err(|e| e.to_string())?;
    ensure!(vit.paths.row(0).to_vec() == vec![0; 4], "full tie gave {:?}", vit.paths.row(0));

    // States 0 and 1 are interchangeable; state 2 wins wherever `b` is seen.
    let chans = channels(&[2]);
    let partial = HmmModel::new(
        chans.clone(),
        array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        Array2::from_elem((3, 3), 1.0 / 3.0),
        vec![array![[0.8, 0.2], [0.8, 0.2], [0.1, 0.9]]],
    )
    .unwrap();
    let data = dataset(&chans, &[vec![vec![0, 1, MISSING, 0, 1]]]);
    let vit = viterbi_paths(&Model::Hmm(partial.clone()), &data, None).map_err(|e| e.to_string())?;
    let expected = vec![0, 2, 0, 0, 2];
    ensure!(vit.paths.row(0).to_vec() == expected, "partial tie gave {:?}", vit.paths.row(0));
    ensure!(enumerate(&partial, None, &data, 0).best_path == expected, "oracle disagrees on partial tie");
    Ok(format!("{ORACLE_INSTANCES} instances plus 2 constructed ties"))
}

fn posterior_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for seed in 0..ORACLE_INSTANCES {
        let inst = small_instance(seed, 0.1);
        let post = posterior_state_probs(&Model::Hmm(inst.model.clone()), &inst.data, None).map_err(|e| e.to_string())?;
        for i in 0..inst.data.n_subjects() {
            let oracle = enumerate(&inst.model, None, &inst.data, i).posterior;
            for t in 0..inst.data.n_time() {
                let row = post.slice(ndarray::s![i, t, ..]);
                let sum_err = (row.sum() - 1.0).abs();
                ensure!(sum_err <= 1e-10, "instance {seed} ({i},{t}) sums to {}", row.sum());
                worst_sum = worst_sum.max(sum_err);
                for s in 0..inst.model.n_states() {
                    let d = (row[s] - oracle[[t, s]]).abs();
                    ensure!(d < 1e-9, "instance {seed} ({i},{t},{s}): {} vs {}", row[s], oracle[[t, s]]);
                    worst = worst.max(d);
                }
            }
        }
    }
    Ok(format!("max |sum - 1| {worst_sum:.1e}, max diff {worst:.1e}"))
}

fn em_monotonicity() -> Outcome {
    let mut min_step = f64::INFINITY;
    for seed in 0..50u64 {
        let (start, truth_data, design) = if seed % 2 == 0 {
            let mut rng = rng_from_seed(2000 + seed);
            let s = rng.random_range(2..=3);
            let sizes: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=4)).collect();
            let chans = channels(&sizes);
            let truth = random_hmm(&mut rng, s, &chans, 0.1);
            let sim = simulate_hmm_data(&truth, 30, 15, seed).map_err(|e| e.to_string())?;
            let start = HmmModel::random(chans, s, seed).map_err(|e| e.to_string())?;
            (Model::Hmm(start), sim.data, None)
        } else {
            let inst = mixture_instance(2000 + seed, 2, 2, 30, 12, 0.0);
            let mut rng = rng_from_seed(seed);
            let start = perturb_model(&inst.mix, 0.5, &mut rng);
            (Model::Mixture(start), inst.data, Some(inst.design))
        };
        let control = FitControl {
            em_max_iter: 200,
            restarts: (seed % 3) as usize,
            seed,
            ..FitControl::default()
        };
        let fit = fit_em(&start, &truth_data, design.as_ref(), &control).map_err(|e| format!("fit {seed}: {e}"))?;
        for w in fit.em_trace.windows(2) {
            let step = w[1] - w[0];
            ensure!(step >= -1e-9, "fit {seed}: loglik decreased by {}", -step);
            min_step = min_step.min(step);
        }
        let ll = log_likelihood(&fit.model, &truth_data, design.as_ref()).map_err(|e| e.to_string())?;
        ensure!((ll - fit.loglik).abs() < 1e-9, "fit {seed}: reported {} vs recomputed {ll}", fit.loglik);
        let best = fit.restart_logliks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ensure!(fit.loglik == best, "fit {seed}: loglik {} is not the best restart {best}", fit.loglik);
    }
    Ok(format!("50 fits, smallest per-iteration change {min_step:.1e}"))
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut gamma_coords = 0;
    let mut total_coords = 0;
    for seed in 0..100u64 {
        let mut rng = rng_from_seed(3000 + seed);
        let (template, data, design) = if seed % 2 == 0 {
            let inst = small_instance(3000 + seed, 0.1);
            (Model::Hmm(inst.model), inst.data, None)
        } else {
            let k = rng.random_range(2..=3);
            let inst = mixture_instance(3000 + seed, k, 2, 8, 6, 0.1);
            gamma_coords += 2 * (k - 1);
            (Model::Mixture(inst.mix), inst.data, Some(inst.design))
        };
        let base = UnconstrainedParams::from_model(&template);
        let theta: Vec<f64> = base.theta.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let f = |th: &[f64]| {
            let m = UnconstrainedParams { theta: th.to_vec() }.to_model(&template).unwrap();
            log_likelihood(&m, &data, design.as_ref()).unwrap()
        };
        let analytic = loglik_gradient(&template, &data, design.as_ref(), &UnconstrainedParams { theta: theta.clone() })
            .map_err(|e| e.to_string())?;
        let numeric = central_difference(f, &theta, 1e-6);
        ensure!(analytic.len() == numeric.len(), "triple {seed}: dimension {}", analytic.len());
        for (j, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = rel_err_floor(*a, *n);
            ensure!(err < 1e-5, "triple {seed} coordinate {j}: {a} vs {n}");
            worst = worst.max(err);
        }
        total_coords += theta.len();
    }
    Ok(format!("100 triples, {total_coords} coordinates ({gamma_coords} for γ), max rel err {worst:.1e}"))
}

fn mixture_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let k = 2 + (seed % 2) as usize;
        let inst = mixture_instance(4000 + seed, k, 3, 10, 12, 0.15);
        let combined = subject_log_likelihoods(&Model::Mixture(inst.mix.clone()), &inst.data, Some(&inst.design), FbMode::Scaled)
            .map_err(|e| e.to_string())?;
        let w = prior_probs(inst.mix.gamma(), inst.design.matrix());
        let per_cluster: Vec<Array1<f64>> = inst
            .mix
            .clusters()
            .iter()
            .map(|c| forward_backward(c, &inst.data, FbMode::LogSpace, None).map(|fb| fb.loglik_per_subject))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for i in 0..inst.data.n_subjects() {
            let terms: Vec<f64> = (0..k).map(|c| w[[i, c]].ln() + per_cluster[c][i]).collect();
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let direct = max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let err = rel_err(combined[i], direct);
            ensure!(err < 1e-10, "mixture {seed} subject {i}: {} vs {direct}", combined[i]);
            worst = worst.max(err);
        }
    }
    Ok(format!("50 mixtures, max rel err {worst:.1e}"))
}

fn markov_closed_form() -> Outcome {
    let chans = channels(&[2]);
    let data = dataset(&chans, &[vec![vec![0, 0, 1], vec![0, 1, 1]]]);
    let mm = HmmModel::markov_from_data(&data).map_err(|e| e.to_string())?;
    ensure!(mm.initial().to_vec() == vec![1.0, 0.0], "initial {:?}", mm.initial());
    let expected = array![[1.0 / 3.0, 2.0 / 3.0], [0.0, 1.0]];
    ensure!(*mm.transition() == expected, "transition {:?}", mm.transition());
    ensure!(mm.emissions()[0] == Array2::<f64>::eye(2), "emission is not the identity");
    let control = FitControl {
        em_max_iter: 1,
        ..FitControl::default()
    };
    let fit = fit_em(&Model::Hmm(mm), &data, None, &control).map_err(|e| e.to_string())?;
    let change = (fit.em_trace[1] - fit.em_trace[0]).abs();
    ensure!(change < 1e-10, "one EM iteration changed loglik by {change}");
    Ok(format!("counts exact, EM change {change:.1e}"))
}

fn gamma_newton_oracle() -> Outcome {
    let mut rng = rng_from_seed(5000);
    let n = 300;
    let weights = Array2::from_shape_fn((n, 3), |_| rng.random_range(0.05..1.0));
    let weights = &weights / &weights.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
    let design = CovariateDesign::intercept_only(n);
    let fit = gamma_m_step(&design, &weights, &Array2::zeros((1, 3))).map_err(|e| e.to_string())?;
    let means = weights.mean_axis(ndarray::Axis(0)).unwrap();
    let mut worst: f64 = 0.0;
    for k in 1..3 {
        let closed = (means[k] / means[0]).ln();
        let d = (fit.gamma[[0, k]] - closed).abs();
        ensure!(d < 1e-10, "intercept {k}: {} vs {closed}", fit.gamma[[0, k]]);
        worst = worst.max(d);
    }

    let n = 20000;
    let truth = [-0.5, 1.2];
    let noise = Normal::new(0.0, 0.5).unwrap();
    let x = Array2::from_shape_fn((n, 2), |(_, j)| {
        if j == 0 || rng.random::<f64>() < 0.4 {
            1.0
        } else {
            0.0
        }
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = truth[0] + truth[1] * x[[i, 1]] + noise.sample(&mut rng);
            1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    let weights = Array2::from_shape_fn((n, 2), |(i, k)| if k == 1 { y[i] } else { 1.0 - y[i] });
    let design = CovariateDesign::new(vec!["(Intercept)".into(), "x".into()], x.clone()).unwrap();
    let fit = gamma_m_step(&design, &weights, &Array2::zeros((2, 2))).map_err(|e| e.to_string())?;
    let oracle = irls_logistic(&x, &y);
    let mut worst_cov: f64 = 0.0;
    for j in 0..2 {
        let d = (fit.gamma[[j, 1]] - oracle[j]).abs();
        ensure!(d < 1e-6, "coefficient {j}: {} vs IRLS {}", fit.gamma[[j, 1]], oracle[j]);
        worst_cov = worst_cov.max(d);
    }
    Ok(format!("intercept-only diff {worst:.1e}, covariate diff vs IRLS {worst_cov:.1e}"))
}

fn bic_hand_checks() -> Outcome {
    let chans = channels(&[2]);
    let model = Model::Hmm(HmmModel::new(chans.clone(), array![1.0], array![[1.0]], vec![array![[0.5, 0.5]]]).unwrap());
    let full = dataset(&chans, &[vec![vec![0, 1]]]);
    let ic = information_criteria(&model, &full, None).map_err(|e| e.to_string())?;
    let expected = 5.0 * 2f64.ln();
    ensure!((ic.bic - expected).abs() < 1e-12, "full data BIC {} vs {expected}", ic.bic);
    let partial = dataset(&chans, &[vec![vec![0, MISSING]]]);
    let ic2 = information_criteria(&model, &partial, None).map_err(|e| e.to_string())?;
    let expected2 = 2.0 * 2f64.ln();
    ensure!((ic2.bic - expected2).abs() < 1e-12, "one missing BIC {} vs {expected2}", ic2.bic);

    // Five states with an upper-triangular transition matrix, one binary
    // channel: 4 initial + 10 transition + 5 emission parameters.
    let upper = Array2::from_shape_fn((5, 5), |(r, c)| if c >= r { 1.0 / (5 - r) as f64 } else { 0.0 });
    let lr = HmmModel::new(chans.clone(), Array1::from_elem(5, 0.2), upper, vec![Array2::from_elem((5, 2), 0.5)]).unwrap();
    let count = count_parameters(&Model::Hmm(lr), &full).map_err(|e| e.to_string())?;
    ensure!(count.p == 4 + 10 + 5, "p = {}", count.p);
    Ok(format!("BIC {:.5} and {:.5}, upper-triangular p = {}", ic.bic, ic2.bic, count.p))
}

fn parameter_recovery() -> Outcome {
    let start = Instant::now();
    let chans = channels(&[3]);
    let truth = HmmModel::new(
        chans,
        array![0.6, 0.4],
        array![[0.9, 0.1], [0.2, 0.8]],
        vec![array![[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]]],
    )
    .unwrap();
    let sim = simulate_hmm_data(&truth, 500, 100, 2024).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(77);
    let begin = perturb_model(&MixtureModel::from_single(truth.clone()), 0.3, &mut rng);
    let begin = Model::Hmm(begin.clusters()[0].clone());
    let fit = fit_em(&begin, &sim.data, None, &FitControl::default()).map_err(|e| e.to_string())?;
    let Model::Hmm(est) = &fit.model else {
        return Err("expected an HMM".into());
    };
    let worst = truth
        .initial()
        .iter()
        .zip(est.initial())
        .chain(truth.transition().iter().zip(est.transition()))
        .chain(truth.emissions()[0].iter().zip(&est.emissions()[0]))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    ensure!(worst <= 0.05, "max abs error {worst}");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("max abs error {worst:.4}, {} EM iterations, {elapsed:.2?}", fit.em_iterations))
}

fn run_cli(args: &[&str], out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_markovseq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .env_remove("MARKOVSEQ_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    Ok(())
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(b).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    other.sort();
    ensure!(names == other, "file sets differ: {names:?} vs {other:?}");
    for name in &names {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{} differs", name.to_string_lossy());
    }
    Ok(names.len())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |name: &str| tmp.path().join(name);
    let sim = [
        "simulate", "--n-states", "2", "--n-symbols", "3,2", "--n-clusters", "2", "--n-subjects", "120",
        "--n-time", "15", "--seed", "11", "--missing-rate", "0.05",
    ];
    run_cli(&sim, &dir("sim1"), 1)?;
    run_cli(&sim, &dir("sim4"), 4)?;
    let mut files = same_tree(&dir("sim1"), &dir("sim4"))?;

    let manifest = dir("sim1").join("manifest.json");
    let manifest = manifest.to_str().unwrap();
    let fit = [
        "fit", "--manifest", manifest, "--n-states", "2", "--n-clusters", "2", "--restarts", "3",
        "--local-step", "--em-max-iter", "100", "--seed", "5",
    ];
    run_cli(&fit, &dir("fit1"), 1)?;
    run_cli(&fit, &dir("fit4"), 4)?;
    files += same_tree(&dir("fit1"), &dir("fit4"))?;

    let model = dir("fit1").join("model.fitted.json");
    let model = model.to_str().unwrap();
    for cmd in ["posterior", "viterbi", "summary"] {
        let args = [cmd, "--manifest", manifest, "--model", model];
        run_cli(&args, &dir(&format!("{cmd}1")), 1)?;
        run_cli(&args, &dir(&format!("{cmd}4")), 4)?;
        files += same_tree(&dir(&format!("{cmd}1")), &dir(&format!("{cmd}4")))?;
    }
    Ok(format!("{files} artifacts byte-identical across 1 and 4 threads"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("brute-force likelihood oracle", brute_force_likelihood),
        ("scaled/log-space agreement", scaled_vs_logspace),
        ("Viterbi oracle and ties", viterbi_oracle),
        ("posterior normalization and oracle", posterior_oracle),
        ("EM monotonicity", em_monotonicity),
        ("gradient check", gradient_check),
        ("mixture/combined equivalence", mixture_equivalence),
        ("Markov model closed form", markov_closed_form),
        ("γ Newton oracle", gamma_newton_oracle),
        ("BIC hand checks", bic_hand_checks),
        ("parameter recovery", parameter_recovery),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
