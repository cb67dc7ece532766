//! Mixture hidden Markov model whose cluster probabilities depend on a
//! covariate, with the covariate effects and their standard errors.
//!
//!     cargo run --example mixture_covariates

use markovseq::inference::{cluster_posterior_probs, mixture_summary};
use markovseq::random::rng_from_seed;
use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::simulate_mhmm_data;
use markovseq::{fit_em, CovariateDesign, FitControl, HmmModel, MixtureModel, Model};
use ndarray::{array, Array2};
use rand::Rng;

fn main() -> markovseq::Result<()> {
    let channels = vec![ChannelSpec {
        name: "activity".into(),
        alphabet: Alphabet::new(&["study", "work", "idle"], "*")?,
    }];
    let n = 600;
    let mut rng = rng_from_seed(5);
    let x = Array2::from_shape_fn((n, 2), |(_, j)| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) });
    let design = CovariateDesign::new(vec!["(Intercept)".into(), "age".into()], x)?;

    let students = HmmModel::new(
        channels.clone(),
        array![0.9, 0.1],
        array![[0.9, 0.1], [0.1, 0.9]],
        vec![array![[0.8, 0.1, 0.1], [0.1, 0.6, 0.3]]],
    )?;
    let workers = HmmModel::new(
        channels.clone(),
        array![0.2, 0.8],
        array![[0.7, 0.3], [0.05, 0.95]],
        vec![array![[0.1, 0.1, 0.8], [0.05, 0.9, 0.05]]],
    )?;
    let truth = MixtureModel::with_design(
        vec![students, workers],
        Some(&design),
        Some(array![[0.0, -0.3], [0.0, 1.2]]),
    )?;
    let data = simulate_mhmm_data(&truth, Some(&design), n, 10, 8)?.data;

    let start = MixtureModel::with_design(
        vec![HmmModel::random(channels.clone(), 2, 1)?, HmmModel::random(channels, 2, 2)?],
        Some(&design),
        None,
    )?
    .with_cluster_names(vec!["early".into(), "late".into()])?;
    let fit = fit_em(
        &Model::Mixture(start),
        &data,
        Some(&design),
        &FitControl {
            restarts: 4,
            ..FitControl::default()
        },
    )?;
    let Model::Mixture(mix) = &fit.model else { unreachable!() };
    println!("gamma\n{:.3}", mix.gamma());
    print!("{}", mixture_summary(mix, &data, Some(&design))?);

    let post = cluster_posterior_probs(mix, &data, Some(&design))?;
    println!("first subject: {:.3}", post.row(0));
    Ok(())
}
