//! Multichannel categorical sequence data.
//!
//! A [`SequenceDataset`] holds `N` subjects observed at `T` time points in `C`
//! parallel channels. Each channel carries its own [`Alphabet`] and an `N × T`
//! matrix of codes, with [`MISSING`] marking unobserved cells. Sequences of
//! different length are expressed by padding with missing values.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code stored for a missing observation. Never a valid symbol index.
pub const MISSING: usize = usize::MAX;

pub const DEFAULT_MISSING_TOKEN: &str = "*";

/// Ordered set of observable symbols for one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    labels: Vec<String>,
    missing_token: String,
}

impl Alphabet {
    /// Codes are assigned in the order the labels are given.
    pub fn new<S: AsRef<str>>(labels: &[S], missing_token: &str) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyAlphabet);
        }
        let mut seen = HashSet::new();
        let mut owned = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.as_ref();
            if label.is_empty() {
                return Err(Error::EmptyAlphabet);
            }
            if label == missing_token {
                return Err(Error::MissingTokenCollision(label.to_string()));
            }
            if !seen.insert(label) {
                return Err(Error::DuplicateLabel(label.to_string()));
            }
            owned.push(label.to_string());
        }
        Ok(Self {
            labels: owned,
            missing_token: missing_token.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn missing_token(&self) -> &str {
        &self.missing_token
    }

    pub fn code(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Label for a code; `MISSING` decodes to the missing token.
    pub fn label(&self, code: usize) -> &str {
        if code == MISSING {
            &self.missing_token
        } else {
            &self.labels[code]
        }
    }

    fn decoder(&self) -> HashMap<&str, usize> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect()
    }
}

/// Name and alphabet of one channel, without any observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub name: String,
    pub alphabet: Alphabet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub alphabet: Alphabet,
    /// `N × T` matrix of codes, `MISSING` where unobserved.
    pub obs: Array2<usize>,
}

impl Channel {
    pub fn spec(&self) -> ChannelSpec {
        ChannelSpec {
            name: self.name.clone(),
            alphabet: self.alphabet.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    subject_ids: Vec<String>,
    time_labels: Vec<String>,
    channels: Vec<Channel>,
}

impl SequenceDataset {
    pub fn new(
        subject_ids: Vec<String>,
        time_labels: Vec<String>,
        channels: Vec<Channel>,
    ) -> Result<Self> {
        let n = subject_ids.len();
        let t = time_labels.len();
        if n == 0 || t == 0 || channels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ids = HashSet::new();
        for id in &subject_ids {
            if !ids.insert(id.as_str()) {
                return Err(Error::ShapeMismatch(format!("duplicate subject id `{id}`")));
            }
        }
        let mut names = HashSet::new();
        for ch in &channels {
            if !names.insert(ch.name.as_str()) {
                return Err(Error::ShapeMismatch(format!(
                    "duplicate channel name `{}`",
                    ch.name
                )));
            }
            if ch.obs.dim() != (n, t) {
                return Err(Error::ShapeMismatch(format!(
                    "channel `{}` has shape {:?}, expected ({n}, {t})",
                    ch.name,
                    ch.obs.dim()
                )));
            }
            let m = ch.alphabet.len();
            if let Some(((row, col), &code)) = ch
                .obs
                .indexed_iter()
                .find(|(_, &code)| code != MISSING && code >= m)
            {
                return Err(Error::UnknownToken {
                    channel: ch.name.clone(),
                    row,
                    col,
                    token: code.to_string(),
                });
            }
        }
        Ok(Self {
            subject_ids,
            time_labels,
            channels,
        })
    }

    /// Build a dataset from label matrices, one `N × T` grid per channel.
    pub fn from_labels(
        subject_ids: Vec<String>,
        channels: Vec<(ChannelSpec, Vec<Vec<String>>)>,
    ) -> Result<Self> {
        let n = subject_ids.len();
        let t = channels
            .first()
            .and_then(|(_, rows)| rows.first())
            .map_or(0, Vec::len);
        let mut out = Vec::with_capacity(channels.len());
        for (spec, rows) in channels {
            if rows.len() != n || rows.iter().any(|r| r.len() != t) {
                return Err(Error::ShapeMismatch(format!(
                    "channel `{}` rows do not form an {n} x {t} grid",
                    spec.name
                )));
            }
            let obs = encode_rows(&spec, rows.iter().map(|r| r.as_slice()))?;
            out.push(Channel {
                name: spec.name,
                alphabet: spec.alphabet,
                obs,
            });
        }
        Self::new(subject_ids, default_time_labels(t), out)
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_time(&self) -> usize {
        self.time_labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel_specs(&self) -> Vec<ChannelSpec> {
        self.channels.iter().map(Channel::spec).collect()
    }

    /// Code of subject `i`, time `t`, channel `c`.
    #[inline]
    pub fn code(&self, i: usize, t: usize, c: usize) -> usize {
        self.channels[c].obs[[i, t]]
    }

    pub fn with_time_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_time() {
            return Err(Error::ShapeMismatch(format!(
                "{} time labels for {} time points",
                labels.len(),
                self.n_time()
            )));
        }
        self.time_labels = labels;
        Ok(self)
    }

    pub fn has_missing(&self) -> bool {
        self.channels
            .iter()
            .any(|ch| ch.obs.iter().any(|&c| c == MISSING))
    }

    /// Effective number of observations used in BIC: each time point counts
    /// the fraction of channels observed there.
    pub fn effective_size(&self) -> f64 {
        let c = self.n_channels() as f64;
        let mut total = 0.0;
        for i in 0..self.n_subjects() {
            for t in 0..self.n_time() {
                let observed = self
                    .channels
                    .iter()
                    .filter(|ch| ch.obs[[i, t]] != MISSING)
                    .count();
                total += observed as f64 / c;
            }
        }
        total
    }

    /// Subset of subjects, in the given order.
    pub fn select_subjects(&self, rows: &[usize]) -> Result<Self> {
        let ids = rows.iter().map(|&i| self.subject_ids[i].clone()).collect();
        let channels = self
            .channels
            .iter()
            .map(|ch| Channel {
                name: ch.name.clone(),
                alphabet: ch.alphabet.clone(),
                obs: ch.obs.select(ndarray::Axis(0), rows),
            })
            .collect();
        Self::new(ids, self.time_labels.clone(), channels)
    }

    /// Collapse all channels into one whose symbols are the observed
    /// combinations of channel symbols, joined by `separator`.
    ///
    /// A time point with any channel missing is missing in the result.
    /// Combined symbols are ordered by their channel-code tuples.
    pub fn mc_to_sc(&self, separator: &str) -> Result<Self> {
        if self.n_channels() == 1 {
            return Ok(self.clone());
        }
        let (n, t) = (self.n_subjects(), self.n_time());
        let tuple_at = |i: usize, s: usize| -> Option<Vec<usize>> {
            self.channels
                .iter()
                .map(|ch| Some(ch.obs[[i, s]]).filter(|&c| c != MISSING))
                .collect()
        };
        let mut combos = BTreeSet::new();
        for i in 0..n {
            for s in 0..t {
                if let Some(tuple) = tuple_at(i, s) {
                    combos.insert(tuple);
                }
            }
        }
        let index: BTreeMap<&Vec<usize>, usize> =
            combos.iter().enumerate().map(|(k, v)| (v, k)).collect();
        let labels: Vec<String> = combos
            .iter()
            .map(|tuple| {
                tuple
                    .iter()
                    .zip(&self.channels)
                    .map(|(&code, ch)| ch.alphabet.label(code))
                    .collect::<Vec<_>>()
                    .join(separator)
            })
            .collect();
        let missing_token = self.channels[0].alphabet.missing_token().to_string();
        let alphabet = if labels.is_empty() {
            // every cell missing: keep a placeholder symbol so the alphabet is valid
            Alphabet::new(&[format!("{missing_token}{separator}{missing_token}")], &missing_token)?
        } else {
            Alphabet::new(&labels, &missing_token)?
        };
        let obs = Array2::from_shape_fn((n, t), |(i, s)| {
            tuple_at(i, s).map_or(MISSING, |tuple| index[&tuple])
        });
        let name = self
            .channels
            .iter()
            .map(|ch| ch.name.as_str())
            .collect::<Vec<_>>()
            .join(separator);
        Self::new(
            self.subject_ids.clone(),
            self.time_labels.clone(),
            vec![Channel {
                name,
                alphabet,
                obs,
            }],
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetJson {
            subject_ids: self.subject_ids.clone(),
            time_labels: Some(self.time_labels.clone()),
            channels: self
                .channels
                .iter()
                .map(|ch| ChannelJson {
                    name: ch.name.clone(),
                    alphabet: ch.alphabet.labels.clone(),
                    missing_token: ch.alphabet.missing_token.clone(),
                    rows: ch
                        .obs
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().map(|&c| ch.alphabet.label(c).to_string()).collect())
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetJson = serde_json::from_str(text)?;
        let mut channels = Vec::with_capacity(doc.channels.len());
        for ch in doc.channels {
            let alphabet = Alphabet::new(&ch.alphabet, &ch.missing_token)?;
            let spec = ChannelSpec {
                name: ch.name,
                alphabet,
            };
            channels.push((spec, ch.rows));
        }
        let ds = Self::from_labels(doc.subject_ids, channels)?;
        match doc.time_labels {
            Some(labels) => ds.with_time_labels(labels),
            None => Ok(ds),
        }
    }
}

fn default_time_labels(t: usize) -> Vec<String> {
    (1..=t).map(|s| s.to_string()).collect()
}

fn encode_rows<'a, I>(spec: &ChannelSpec, rows: I) -> Result<Array2<usize>>
where
    I: ExactSizeIterator<Item = &'a [String]>,
{
    let decoder = spec.alphabet.decoder();
    let n = rows.len();
    let mut data = Vec::new();
    let mut width = None;
    for (row, cells) in rows.enumerate() {
        if *width.get_or_insert(cells.len()) != cells.len() {
            return Err(Error::ShapeMismatch(format!(
                "channel `{}` row {row} has {} cells",
                spec.name,
                cells.len()
            )));
        }
        for (col, token) in cells.iter().enumerate() {
            let code = if token == spec.alphabet.missing_token() {
                MISSING
            } else {
                *decoder.get(token.as_str()).ok_or_else(|| Error::UnknownToken {
                    channel: spec.name.clone(),
                    row,
                    col,
                    token: token.clone(),
                })?
            };
            data.push(code);
        }
    }
    Array2::from_shape_vec((n, width.unwrap_or(0)), data)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetJson {
    subject_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_labels: Option<Vec<String>>,
    channels: Vec<ChannelJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelJson {
    name: String,
    alphabet: Vec<String>,
    missing_token: String,
    rows: Vec<Vec<String>>,
}

/// Subject-level covariates explaining cluster membership.
///
/// The first column is the intercept and is identically one.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDesign {
    names: Vec<String>,
    x: Array2<f64>,
}

pub const INTERCEPT: &str = "(Intercept)";

impl CovariateDesign {
    pub fn new(names: Vec<String>, x: Array2<f64>) -> Result<Self> {
        if names.len() != x.ncols() || names.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate names for {} design columns",
                names.len(),
                x.ncols()
            )));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::DimensionMismatch(
                "first design column must be the intercept (all ones)".into(),
            ));
        }
        if let Some(((row, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::MissingCovariate(format!(
                "non-finite value in row {row}, column `{}`",
                names[col]
            )));
        }
        Ok(Self { names, x })
    }

    pub fn intercept_only(n: usize) -> Self {
        Self {
            names: vec![INTERCEPT.to_string()],
            x: Array2::ones((n, 1)),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            x: self.x.select(ndarray::Axis(0), rows),
        }
    }

    /// Parse a covariate table whose rows are matched to `subject_ids` by the
    /// `id_column`. Numeric columns enter as-is; any other column is treated
    /// as a factor with treatment contrasts against its first level in sorted
    /// order, producing columns named `<column><level>`.
    pub fn from_table(
        header: &[String],
        records: &[Vec<String>],
        id_column: &str,
        subject_ids: &[String],
    ) -> Result<Self> {
        let id_idx = header
            .iter()
            .position(|h| h == id_column)
            .ok_or_else(|| Error::MissingCovariate(format!("no id column `{id_column}`")))?;
        let by_id: HashMap<&str, &Vec<String>> = records
            .iter()
            .map(|r| (r[id_idx].as_str(), r))
            .collect();
        let rows: Vec<&Vec<String>> = subject_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::MissingCovariate(format!("no covariates for subject `{id}`")))
            })
            .collect::<Result<_>>()?;

        let mut names = vec![INTERCEPT.to_string()];
        let mut columns: Vec<Vec<f64>> = vec![vec![1.0; rows.len()]];
        for (j, col_name) in header.iter().enumerate() {
            if j == id_idx {
                continue;
            }
            let cells: Vec<&str> = rows.iter().map(|r| r[j].trim()).collect();
            if let Some(pos) = cells.iter().position(|c| c.is_empty() || *c == "NA") {
                return Err(Error::MissingCovariate(format!(
                    "`{col_name}` missing for subject `{}`",
                    subject_ids[pos]
                )));
            }
            let numeric: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
            match numeric {
                Some(values) => {
                    names.push(col_name.clone());
                    columns.push(values);
                }
                None => {
                    let levels: BTreeSet<&str> = cells.iter().copied().collect();
                    for level in levels.iter().skip(1) {
                        names.push(format!("{col_name}{level}"));
                        columns.push(
                            cells
                                .iter()
                                .map(|c| if c == level { 1.0 } else { 0.0 })
                                .collect(),
                        );
                    }
                }
            }
        }
        let n = rows.len();
        let q = columns.len();
        let x = Array2::from_shape_fn((n, q), |(i, j)| columns[j][i]);
        Self::new(names, x)
    }
}

/// On-disk description of a dataset: one CSV per channel plus optional covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_id_column")]
    pub id_column: String,
    pub channels: Vec<ManifestChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub name: String,
    pub csv: String,
    pub alphabet: Vec<String>,
    #[serde(default = "default_missing_token")]
    pub missing_token: String,
}

fn default_id_column() -> String {
    "id".to_string()
}

fn default_missing_token() -> String {
    DEFAULT_MISSING_TOKEN.to_string()
}

struct Table {
    header: Vec<String>,
    records: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        records.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, records })
}

/// Load the dataset (and covariates, when declared) described by a manifest.
/// Relative paths are resolved against the manifest's directory.
pub fn ingest_dataset(manifest_path: &Path) -> Result<(SequenceDataset, Option<CovariateDesign>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    ingest_from_manifest(&manifest, base)
}

pub fn ingest_from_manifest(
    manifest: &Manifest,
    base: &Path,
) -> Result<(SequenceDataset, Option<CovariateDesign>)> {
    if manifest.channels.is_empty() {
        return Err(Error::Manifest("no channels declared".into()));
    }
    let mut subject_ids: Option<Vec<String>> = None;
    let mut time_labels: Option<Vec<String>> = None;
    let mut channels = Vec::new();
    for mc in &manifest.channels {
        let alphabet = Alphabet::new(&mc.alphabet, &mc.missing_token)?;
        let path = base.join(&mc.csv);
        let table = read_table(&path)?;
        if table.header.len() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} has no observation columns",
                path.display()
            )));
        }
        let ids: Vec<String> = table.records.iter().map(|r| r[0].clone()).collect();
        let times: Vec<String> = table.header[1..].to_vec();
        match (&subject_ids, &time_labels) {
            (Some(prev_ids), Some(prev_times)) => {
                if *prev_ids != ids {
                    return Err(Error::ShapeMismatch(format!(
                        "channel `{}` lists different subjects",
                        mc.name
                    )));
                }
                if prev_times.len() != times.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "channel `{}` has {} time points, expected {}",
                        mc.name,
                        times.len(),
                        prev_times.len()
                    )));
                }
            }
            _ => {
                subject_ids = Some(ids);
                time_labels = Some(times);
            }
        }
        let spec = ChannelSpec {
            name: mc.name.clone(),
            alphabet,
        };
        let obs = encode_rows(&spec, table.records.iter().map(|r| &r[1..]))?;
        channels.push(Channel {
            name: spec.name,
            alphabet: spec.alphabet,
            obs,
        });
    }
    let subject_ids = subject_ids.unwrap_or_default();
    let data = SequenceDataset::new(subject_ids, time_labels.unwrap_or_default(), channels)?;
    let design = match &manifest.covariates {
        Some(rel) => {
            let table = read_table(&base.join(rel))?;
            Some(CovariateDesign::from_table(
                &table.header,
                &table.records,
                &manifest.id_column,
                data.subject_ids(),
            )?)
        }
        None => None,
    };
    Ok((data, design))
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Write one CSV per channel (and the covariates, if any) plus a manifest
/// into `dir`. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut channels = Vec::new();
    for (c, ch) in data.channels().iter().enumerate() {
        let file = format!("{:02}_{}.csv", c + 1, sanitize(&ch.name));
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        let mut header = vec!["id".to_string()];
        header.extend(data.time_labels().iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
        for (i, id) in data.subject_ids().iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(ch.obs.row(i).iter().map(|&code| ch.alphabet.label(code).to_string()));
            w.write_record(&rec).map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        channels.push(ManifestChannel {
            name: ch.name.clone(),
            csv: file,
            alphabet: ch.alphabet.labels().to_vec(),
            missing_token: ch.alphabet.missing_token().to_string(),
        });
    }
    let covariates = match design {
        Some(design) if design.n_cols() > 1 => {
            let file = "covariates.csv".to_string();
            let path = dir.join(&file);
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
            let mut header = vec!["id".to_string()];
            header.extend(design.names()[1..].iter().cloned());
            w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
            for (i, id) in data.subject_ids().iter().enumerate() {
                let mut rec = vec![id.clone()];
                rec.extend(design.matrix().row(i).iter().skip(1).map(|v| format!("{v:?}")));
                w.write_record(&rec).map_err(|e| Error::csv(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            Some(file)
        }
        _ => None,
    };
    let manifest = Manifest {
        id_column: "id".into(),
        channels,
        covariates,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
