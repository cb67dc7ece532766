//! State distribution plots as standalone SVG.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::seqdata::{SequenceDataset, MISSING};

pub const DEFAULT_PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

const LEFT: f64 = 60.0;
const TOP: f64 = 20.0;
const SLOT: f64 = 24.0;
const BAR_HEIGHT: f64 = 120.0;
const MISSING_HEIGHT: f64 = 24.0;
const PANEL_GAP: f64 = 56.0;
const LEGEND_WIDTH: f64 = 180.0;
const LEGEND_ROW: f64 = 16.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Stacked bar charts of the observed state proportions at each time point,
/// one panel per channel. Proportions are taken over observed cells; the
/// share of missing cells is drawn as a hatched strip under each bar.
///
/// `palettes[c]`, when given and non-empty, replaces the default colors of
/// channel `c` (colors are reused cyclically).
pub fn render_state_distribution_svg(
    data: &SequenceDataset,
    palettes: Option<&[Vec<String>]>,
) -> Result<String> {
    let (n, t_len) = (data.n_subjects(), data.n_time());
    if n == 0 || t_len == 0 || data.n_channels() == 0 {
        return Err(Error::EmptyDataset);
    }
    let panel_height = BAR_HEIGHT + MISSING_HEIGHT + PANEL_GAP;
    let max_symbols = data
        .channels()
        .iter()
        .map(|ch| ch.alphabet.len() + 1)
        .max()
        .unwrap_or(1) as f64;
    let panel_height = panel_height.max(max_symbols * LEGEND_ROW + 30.0);
    let width = LEFT + SLOT * t_len as f64 + 20.0 + LEGEND_WIDTH;
    let height = TOP + panel_height * data.n_channels() as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3}" height="{height:.3}" viewBox="0 0 {width:.3} {height:.3}" font-family="sans-serif" font-size="11">"#
    );
    svg.push_str(
        "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" \
         patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/>\
         </pattern></defs>\n",
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    for (c, ch) in data.channels().iter().enumerate() {
        let colors: Vec<&str> = match palettes.and_then(|p| p.get(c)).filter(|p| !p.is_empty()) {
            Some(p) => p.iter().map(String::as_str).collect(),
            None => DEFAULT_PALETTE.to_vec(),
        };
        let color = |j: usize| colors[j % colors.len()];
        let y0 = TOP + panel_height * c as f64;
        let _ = writeln!(
            svg,
            r#"<g class="panel" id="panel-{}"><text x="{:.3}" y="{:.3}" font-weight="bold">{}</text>"#,
            c + 1,
            LEFT,
            y0 + 12.0,
            escape(&ch.name)
        );
        let bar_top = y0 + 18.0;
        let _ = writeln!(
            svg,
            r##"<text x="{:.3}" y="{:.3}" text-anchor="end">1.0</text><text x="{:.3}" y="{:.3}" text-anchor="end">0.0</text>"##,
            LEFT - 6.0,
            bar_top + 4.0,
            LEFT - 6.0,
            bar_top + BAR_HEIGHT
        );
        for t in 0..t_len {
            let mut counts = vec![0usize; ch.alphabet.len()];
            let mut missing = 0usize;
            for i in 0..n {
                match ch.obs[[i, t]] {
                    MISSING => missing += 1,
                    m => counts[m] += 1,
                }
            }
            let observed = n - missing;
            let x = LEFT + SLOT * t as f64 + 2.0;
            let w = SLOT - 4.0;
            let mut y = bar_top;
            if observed > 0 {
                for (j, &count) in counts.iter().enumerate() {
                    if count == 0 {
                        continue;
                    }
                    let h = BAR_HEIGHT * count as f64 / observed as f64;
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{}"/>"#,
                        color(j)
                    );
                    y += h;
                }
            }
            let strip_top = bar_top + BAR_HEIGHT + 4.0;
            if missing > 0 {
                let h = MISSING_HEIGHT * missing as f64 / n as f64;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x:.3}" y="{strip_top:.3}" width="{w:.3}" height="{h:.3}" fill="url(#hatch)" stroke="#888888" stroke-width="0.5"/>"##
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="9">{}</text>"#,
                x + w / 2.0,
                strip_top + MISSING_HEIGHT + 12.0,
                escape(&data.time_labels()[t])
            );
        }
        let lx = LEFT + SLOT * t_len as f64 + 20.0;
        for (j, label) in ch.alphabet.labels().iter().enumerate() {
            let ly = bar_top + LEGEND_ROW * j as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{lx:.3}" y="{ly:.3}" width="10.000" height="10.000" fill="{}"/><text x="{:.3}" y="{:.3}">{}</text>"#,
                color(j),
                lx + 14.0,
                ly + 9.0,
                escape(label)
            );
        }
        let ly = bar_top + LEGEND_ROW * ch.alphabet.len() as f64;
        let _ = writeln!(
            svg,
            r##"<rect x="{lx:.3}" y="{ly:.3}" width="10.000" height="10.000" fill="url(#hatch)" stroke="#888888" stroke-width="0.5"/><text x="{:.3}" y="{:.3}">missing</text>"##,
            lx + 14.0,
            ly + 9.0
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
