//! First-order Markov chains estimated in closed form, and a mixture of
//! Markov chains estimated by EM.
//!
//!     cargo run --example markov_models

use markovseq::inference::mixture_summary;
use markovseq::model::RestrictedKind;
use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::simulate_mhmm_data;
use markovseq::{fit_em, FitControl, HmmModel, MixtureModel, Model, SequenceDataset};
use ndarray::array;

fn main() -> markovseq::Result<()> {
    let channel = ChannelSpec {
        name: "status".into(),
        alphabet: Alphabet::new(&["A", "B", "C"], "*")?,
    };
    let rows = [["A", "A", "B", "C"], ["A", "B", "B", "*"], ["C", "C", "A", "B"]];
    let small = SequenceDataset::from_labels(
        vec!["p1".into(), "p2".into(), "p3".into()],
        vec![(
            channel.clone(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        )],
    )?;
    // Transitions touching the missing value are skipped.
    let mm = HmmModel::markov_from_data(&small)?;
    println!("initial {:.3}", mm.initial());
    println!("transition\n{:.3}", mm.transition());

    // Two populations that move through the states at different speeds.
    let identity = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let chain = |stay: f64| {
        let go = (1.0 - stay) / 2.0;
        HmmModel::new(
            vec![channel.clone()],
            array![0.6, 0.3, 0.1],
            array![[stay, go, go], [go, stay, go], [go, go, stay]],
            vec![identity.clone()],
        )
    };
    let truth = MixtureModel::new(vec![chain(0.95)?, chain(0.5)?], vec!["(Intercept)".into()], None)?;
    let data = simulate_mhmm_data(&truth, None, 400, 12, 3)?.data;

    let start = MixtureModel::restricted(RestrictedKind::MixtureMarkov, vec![channel], 2, None, 11)?;
    let control = FitControl {
        restarts: 3,
        ..FitControl::default()
    };
    let fit = fit_em(&Model::Mixture(start), &data, None, &control)?;
    let Model::Mixture(mix) = &fit.model else { unreachable!() };
    for (name, cluster) in mix.cluster_names().iter().zip(mix.clusters()) {
        println!("{name}: transition diagonal {:.3}", cluster.transition().diag());
    }
    print!("{}", mixture_summary(mix, &data, None)?);
    Ok(())
}
