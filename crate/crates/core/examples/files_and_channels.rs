//! Write a dataset to CSV files with a manifest, read it back, and collapse
//! its channels into a single combined channel.
//!
//!     cargo run --example files_and_channels

use markovseq::seqdata::{ingest_dataset, write_dataset};
use markovseq::simulate::{inject_missing, simulate_hmm_data, simulate_parameters, SimSpec};
use markovseq::{HmmModel, Model};

fn main() -> markovseq::Result<()> {
    let Model::Hmm(model) = simulate_parameters(&SimSpec {
        n_states: 2,
        n_symbols: vec![2, 3],
        n_clusters: 1,
        left_to_right: false,
        seed: 1,
    })?
    else {
        unreachable!()
    };
    let data = inject_missing(&simulate_hmm_data(&model, 5, 6, 1)?.data, 0.1, 1)?;

    let dir = std::env::temp_dir().join("markovseq-files-example");
    let manifest = write_dataset(&dir, &data, None)?;
    println!("wrote {}", manifest.display());
    let (back, design) = ingest_dataset(&manifest)?;
    assert_eq!(back, data);
    assert!(design.is_none());
    println!("{} subjects, {} time points, effective size {}", back.n_subjects(), back.n_time(), back.effective_size());

    let single = back.mc_to_sc("/")?;
    let ch = &single.channels()[0];
    println!("combined alphabet: {}", ch.alphabet.labels().join(", "));
    for i in 0..single.n_subjects() {
        let row: Vec<&str> = ch.obs.row(i).iter().map(|&c| ch.alphabet.label(c)).collect();
        println!("  {}", row.join(" "));
    }

    let mm = HmmModel::markov_from_data(&single)?;
    println!("Markov chain over {} combined states", mm.n_states());
    Ok(())
}
