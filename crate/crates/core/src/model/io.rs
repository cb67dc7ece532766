//! JSON model files.
//!
//! ```json
//! { "type": "hmm", "state_names": [...], "channel_names": [...],
//!   "alphabets": [{"labels": [...], "missing_token": "*"}],
//!   "initial": [...], "transition": [[...]], "emissions": [[[...]]],
//!   "zero_mask": {"initial": [...], "transition": [[...]], "emissions": [[[...]]]} }
//! ```
//!
//! Mixtures use `"type": "mhmm"` and carry `clusters` (each with its own
//! state names, parameters and mask), `cluster_names`, `gamma` (rows are
//! covariates, columns clusters) and `covariate_names`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{HmmModel, MixtureModel, Model, ZeroMask};
use crate::error::{Error, Result};
use crate::json::to_string_precise;
use crate::seqdata::{Alphabet, ChannelSpec};

#[derive(Debug, Serialize, Deserialize)]
struct MaskJson {
    initial: Vec<bool>,
    transition: Vec<Vec<bool>>,
    emissions: Vec<Vec<Vec<bool>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterJson {
    state_names: Vec<String>,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emissions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zero_mask: Option<MaskJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "type")]
    kind: String,
    channel_names: Vec<String>,
    alphabets: Vec<Alphabet>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    single: Option<ClusterJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cluster_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clusters: Option<Vec<ClusterJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariate_names: Option<Vec<String>>,
}

fn matrix_rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_matrix<T: Clone>(rows: &[Vec<T>], what: &str) -> Result<Array2<T>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::ModelFormat(format!("{what} rows have unequal lengths")));
    }
    let flat: Vec<T> = rows.iter().flatten().cloned().collect();
    Array2::from_shape_vec((n, m), flat).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn cluster_to_json(m: &HmmModel) -> ClusterJson {
    ClusterJson {
        state_names: m.state_names.clone(),
        initial: m.initial.to_vec(),
        transition: matrix_rows(&m.transition),
        emissions: m.emissions.iter().map(matrix_rows).collect(),
        zero_mask: Some(MaskJson {
            initial: m.mask.initial.to_vec(),
            transition: matrix_rows(&m.mask.transition),
            emissions: m.mask.emissions.iter().map(matrix_rows).collect(),
        }),
    }
}

fn cluster_from_json(c: ClusterJson, channels: &[ChannelSpec]) -> Result<HmmModel> {
    let initial = Array1::from(c.initial);
    let transition = rows_matrix(&c.transition, "transition")?;
    let emissions = c
        .emissions
        .iter()
        .map(|e| rows_matrix(e, "emission"))
        .collect::<Result<Vec<_>>>()?;
    let model = match c.zero_mask {
        Some(mask) => {
            let mask = ZeroMask {
                initial: Array1::from(mask.initial),
                transition: rows_matrix(&mask.transition, "zero_mask.transition")?,
                emissions: mask
                    .emissions
                    .iter()
                    .map(|e| rows_matrix(e, "zero_mask.emission"))
                    .collect::<Result<Vec<_>>>()?,
            };
            HmmModel::with_mask(channels.to_vec(), initial, transition, emissions, mask)?
        }
        None => HmmModel::new(channels.to_vec(), initial, transition, emissions)?,
    };
    model.with_state_names(c.state_names)
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        let channels = self.channels();
        let mut doc = ModelJson {
            kind: String::new(),
            channel_names: channels.iter().map(|c| c.name.clone()).collect(),
            alphabets: channels.iter().map(|c| c.alphabet.clone()).collect(),
            single: None,
            cluster_names: None,
            clusters: None,
            gamma: None,
            covariate_names: None,
        };
        match self {
            Model::Hmm(m) => {
                doc.kind = "hmm".into();
                doc.single = Some(cluster_to_json(m));
            }
            Model::Mixture(m) => {
                doc.kind = "mhmm".into();
                doc.cluster_names = Some(m.cluster_names.clone());
                doc.clusters = Some(m.clusters.iter().map(cluster_to_json).collect());
                doc.gamma = Some(matrix_rows(&m.gamma));
                doc.covariate_names = Some(m.covariate_names.clone());
            }
        }
        to_string_precise(&doc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelJson =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if doc.channel_names.len() != doc.alphabets.len() {
            return Err(Error::ModelFormat(
                "channel_names and alphabets differ in length".into(),
            ));
        }
        let channels: Vec<ChannelSpec> = doc
            .channel_names
            .into_iter()
            .zip(doc.alphabets)
            .map(|(name, alphabet)| {
                // re-validate labels
                Alphabet::new(alphabet.labels(), alphabet.missing_token())
                    .map(|alphabet| ChannelSpec { name, alphabet })
            })
            .collect::<Result<_>>()?;
        match doc.kind.as_str() {
            "hmm" => {
                let single = doc
                    .single
                    .ok_or_else(|| Error::ModelFormat("hmm model lacks parameters".into()))?;
                Ok(Model::Hmm(cluster_from_json(single, &channels)?))
            }
            "mhmm" => {
                let clusters = doc
                    .clusters
                    .ok_or_else(|| Error::ModelFormat("mhmm model lacks clusters".into()))?
                    .into_iter()
                    .map(|c| cluster_from_json(c, &channels))
                    .collect::<Result<Vec<_>>>()?;
                let covariate_names = doc
                    .covariate_names
                    .unwrap_or_else(|| vec![crate::seqdata::INTERCEPT.to_string()]);
                let gamma = doc.gamma.map(|g| rows_matrix(&g, "gamma")).transpose()?;
                let mut mix = MixtureModel::new(clusters, covariate_names, gamma)?;
                if let Some(names) = doc.cluster_names {
                    mix = mix.with_cluster_names(names)?;
                }
                Ok(Model::Mixture(mix))
            }
            other => Err(Error::ModelFormat(format!("unknown model type `{other}`"))),
        }
    }
}

pub fn read_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_json(&text)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}
