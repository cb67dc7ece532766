//! Simulate from a known model, refit it from perturbed starting values and
//! watch the estimation error shrink as the sample grows. Also shows random
//! parameter generation for a left-to-right structure.
//!
//!     cargo run --release --example simulate_recovery

use markovseq::estimation::perturb_model;
use markovseq::random::rng_from_seed;
use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::{simulate_hmm_data, simulate_parameters, SimSpec};
use markovseq::{fit_em, FitControl, HmmModel, MixtureModel, Model};
use ndarray::array;

fn main() -> markovseq::Result<()> {
    let spec = SimSpec {
        n_states: 4,
        n_symbols: vec![3],
        n_clusters: 1,
        left_to_right: true,
        seed: 2,
    };
    let Model::Hmm(random) = simulate_parameters(&spec)? else { unreachable!() };
    println!("random left-to-right transition\n{:.3}", random.transition());

    let channel = ChannelSpec {
        name: "y".into(),
        alphabet: Alphabet::new(&["low", "mid", "high"], "*")?,
    };
    let truth = HmmModel::new(
        vec![channel],
        array![0.6, 0.4],
        array![[0.9, 0.1], [0.2, 0.8]],
        vec![array![[0.8, 0.1, 0.1], [0.1, 0.1, 0.8]]],
    )?;
    for n in [20, 100, 500, 2500] {
        let sim = simulate_hmm_data(&truth, n, 100, n as u64)?;
        let start = perturb_model(&MixtureModel::from_single(truth.clone()), 0.3, &mut rng_from_seed(1));
        let start = Model::Hmm(start.clusters()[0].clone());
        let fit = fit_em(&start, &sim.data, None, &FitControl::default())?;
        let Model::Hmm(est) = &fit.model else { unreachable!() };
        let err = truth
            .initial()
            .iter()
            .zip(est.initial())
            .chain(truth.transition().iter().zip(est.transition()))
            .chain(truth.emissions()[0].iter().zip(&est.emissions()[0]))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("N = {n:>4}: max abs error {err:.4} ({} EM iterations)", fit.em_iterations);
    }
    Ok(())
}
