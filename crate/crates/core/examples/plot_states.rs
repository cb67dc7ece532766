//! Render the state distribution of every channel over time as an SVG file.
//!
//!     cargo run --example plot_states -- out.svg

use markovseq::render_state_distribution_svg;
use markovseq::simulate::{inject_missing, simulate_hmm_data, simulate_parameters, SimSpec};
use markovseq::Model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "state_distribution.svg".into());
    let Model::Hmm(model) = simulate_parameters(&SimSpec {
        n_states: 3,
        n_symbols: vec![4, 2, 3],
        n_clusters: 1,
        left_to_right: true,
        seed: 6,
    })?
    else {
        unreachable!()
    };
    let data = inject_missing(&simulate_hmm_data(&model, 200, 16, 6)?.data, 0.05, 6)?;
    let palettes = vec![
        vec![],
        vec!["#4477aa".to_string(), "#ee6677".to_string()],
        vec![],
    ];
    let svg = render_state_distribution_svg(&data, Some(&palettes))?;
    std::fs::write(&path, svg)?;
    println!("wrote {path}");
    Ok(())
}
