//! Most probable hidden paths and posterior state probabilities, computed in
//! both the scaled and the log-space parameterization.
//!
//!     cargo run --example decode

use markovseq::inference::{forward_backward, subject_log_likelihoods, viterbi_paths, FbMode};
use markovseq::seqdata::{Alphabet, ChannelSpec};
use markovseq::simulate::{inject_missing, simulate_hmm_data};
use markovseq::{posterior_state_probs, HmmModel, Model};
use ndarray::{array, s};

fn main() -> markovseq::Result<()> {
    let channel = ChannelSpec {
        name: "weather".into(),
        alphabet: Alphabet::new(&["dry", "wet"], "?")?,
    };
    let model = HmmModel::new(
        vec![channel],
        array![0.5, 0.5],
        array![[0.9, 0.1], [0.2, 0.8]],
        vec![array![[0.85, 0.15], [0.25, 0.75]]],
    )?
    .with_state_names(vec!["high".into(), "low".into()])?;
    let sim = simulate_hmm_data(&model, 3, 20, 9)?;
    let data = inject_missing(&sim.data, 0.15, 9)?;
    let m = Model::Hmm(model.clone());

    let vit = viterbi_paths(&m, &data, None)?;
    let post = posterior_state_probs(&m, &data, None)?;
    let ch = &data.channels()[0];
    for i in 0..data.n_subjects() {
        println!("subject {}", data.subject_ids()[i]);
        let obs: Vec<&str> = ch.obs.row(i).iter().map(|&c| ch.alphabet.label(c)).collect();
        println!("  observed {}", obs.join(" "));
        println!("  hidden   {:?}", sim.paths.row(i).to_vec());
        println!("  viterbi  {:?}  (log joint {:.3})", vit.paths.row(i).to_vec(), vit.log_joint[i]);
        println!("  P(low)   {:.2}", post.slice(s![i, .., 1]));
    }

    let scaled = subject_log_likelihoods(&m, &data, None, FbMode::Scaled)?;
    let logspace = subject_log_likelihoods(&m, &data, None, FbMode::LogSpace)?;
    for (a, b) in scaled.iter().zip(&logspace) {
        println!("loglik scaled {a:.12}  log-space {b:.12}");
    }
    let fb = forward_backward(&model, &data, FbMode::Scaled, None)?;
    println!("scaling constants of subject 1: {:.3}", fb.scaling.unwrap().row(0));
    Ok(())
}
