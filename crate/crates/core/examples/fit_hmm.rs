//! Fit a two-channel hidden Markov model by EM with restarts, starting from
//! hand-written parameters, and report the fit statistics.
//!
//!     cargo run --example fit_hmm

use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::simulate_hmm_data;
use markovseq::{fit_model, information_criteria, FitControl, HmmModel, Model};
use ndarray::array;

fn main() -> markovseq::Result<()> {
    let channels = vec![
        ChannelSpec {
            name: "work".into(),
            alphabet: Alphabet::new(&["none", "part", "full"], "*")?,
        },
        ChannelSpec {
            name: "home".into(),
            alphabet: Alphabet::new(&["parents", "own"], "*")?,
        },
    ];
    let truth = HmmModel::new(
        channels.clone(),
        array![0.7, 0.2, 0.1],
        array![[0.80, 0.15, 0.05], [0.0, 0.85, 0.15], [0.0, 0.0, 1.0]],
        vec![
            array![[0.7, 0.2, 0.1], [0.2, 0.5, 0.3], [0.05, 0.15, 0.8]],
            array![[0.9, 0.1], [0.5, 0.5], [0.1, 0.9]],
        ],
    )?;
    let data = simulate_hmm_data(&truth, 300, 15, 42)?.data;

    // Same upper-triangular structure as the truth, vaguer values.
    let start = HmmModel::new(
        channels,
        array![0.4, 0.3, 0.3],
        array![[0.6, 0.3, 0.1], [0.0, 0.7, 0.3], [0.0, 0.0, 1.0]],
        vec![
            array![[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]],
            array![[0.6, 0.4], [0.5, 0.5], [0.4, 0.6]],
        ],
    )?
    .with_state_names(vec!["young".into(), "transition".into(), "settled".into()])?;

    let control = FitControl {
        restarts: 5,
        local_step: true,
        seed: 7,
        ..FitControl::default()
    };
    let fit = fit_model(&Model::Hmm(start), &data, None, &control)?;
    println!("loglik {:.4} after {} EM iterations ({:?})", fit.loglik, fit.em_iterations, fit.converged_by);
    println!("restart logliks {:?}", fit.restart_logliks);

    let ic = information_criteria(&fit.model, &data, None)?;
    println!("p = {}, nobs = {}, BIC = {:.2}", ic.p, ic.nobs, ic.bic);

    let Model::Hmm(m) = &fit.model else { unreachable!() };
    println!("transition:\n{:.3}", m.transition());
    for (ch, e) in m.channels().iter().zip(m.emissions()) {
        println!("emission {}:\n{:.3}", ch.name, e);
    }
    Ok(())
}
