//! Latent class analysis: one hidden state per cluster and no dynamics, with
//! four questionnaire items observed once per subject. Models with one to
//! four classes are compared by BIC.
//!
//!     cargo run --example latent_class

use markovseq::inference::{cluster_posterior_probs, information_criteria};
use markovseq::model::RestrictedKind;
use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::simulate_mhmm_data;
use markovseq::{fit_em, FitControl, HmmModel, MixtureModel, Model};
use ndarray::{array, Array2};

fn main() -> markovseq::Result<()> {
    let channels: Vec<ChannelSpec> = (1..=4)
        .map(|q| {
            Ok(ChannelSpec {
                name: format!("q{q}"),
                alphabet: Alphabet::new(&["agree", "neutral", "disagree"], "*")?,
            })
        })
        .collect::<markovseq::Result<_>>()?;
    let class = |rows: [[f64; 3]; 4]| {
        let emissions = rows
            .iter()
            .map(|r| Array2::from_shape_vec((1, 3), r.to_vec()).unwrap())
            .collect();
        HmmModel::new(channels.clone(), array![1.0], array![[1.0]], emissions)
    };
    let truth = MixtureModel::new(
        vec![
            class([[0.8, 0.1, 0.1], [0.7, 0.2, 0.1], [0.8, 0.15, 0.05], [0.6, 0.3, 0.1]])?,
            class([[0.1, 0.1, 0.8], [0.2, 0.1, 0.7], [0.1, 0.2, 0.7], [0.1, 0.3, 0.6]])?,
            class([[0.2, 0.6, 0.2], [0.1, 0.8, 0.1], [0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])?,
        ],
        vec!["(Intercept)".into()],
        Some(array![[0.0, -0.4, -0.9]]),
    )?;
    let data = simulate_mhmm_data(&truth, None, 1500, 1, 4)?.data;

    for k in 1..=4 {
        let start = MixtureModel::restricted(RestrictedKind::LatentClass, channels.clone(), k, None, 100 + k as u64)?;
        let control = FitControl {
            restarts: 5,
            ..FitControl::default()
        };
        let fit = fit_em(&Model::Mixture(start), &data, None, &control)?;
        let ic = information_criteria(&fit.model, &data, None)?;
        println!("{k} classes: loglik {:.2}, p {}, BIC {:.2}", ic.loglik, ic.p, ic.bic);
        if k == 3 {
            let Model::Mixture(mix) = &fit.model else { unreachable!() };
            for (name, c) in mix.cluster_names().iter().zip(mix.clusters()) {
                let agree: Vec<String> = c.emissions().iter().map(|e| format!("{:.2}", e[[0, 0]])).collect();
                println!("  {name}: P(agree) by item {}", agree.join(" "));
            }
            let post = cluster_posterior_probs(mix, &data, None)?;
            println!("  posterior of subject 1: {:.3}", post.row(0));
        }
    }
    Ok(())
}
