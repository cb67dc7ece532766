//! Batch command-line front end.
//!
//! Every subcommand writes its machine-readable results and a `run.log` into
//! the output directory. Usage errors exit with status 2, data and model
//! errors with status 1 and an `error[<kind>]` line on stderr.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

pub use plot::{render_state_distribution_svg, DEFAULT_PALETTE};

use crate::error::{Error, Result};
use crate::estimation::{fit_model, with_threads, FitControl};
use crate::inference::{
    cluster_posterior_probs, information_criteria, log_likelihood, mixture_summary,
    posterior_state_probs, subject_log_likelihoods, viterbi_paths, FbMode,
};
use crate::json::to_string_precise;
use crate::model::{count_parameters, read_model, write_model, HmmModel, MixtureModel, Model};
use crate::seqdata::{ingest_dataset, write_dataset, CovariateDesign, SequenceDataset};
use crate::simulate::{inject_missing, simulate_hmm_data, simulate_mhmm_data, simulate_parameters, SimSpec};

#[derive(Debug, Parser)]
#[command(name = "markovseq", version, about = "Hidden Markov models for categorical sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory for result files and run.log.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Format of the result printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, env = "MARKOVSEQ_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Scaled,
    Logspace,
}

impl From<ModeArg> for FbMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Scaled => FbMode::Scaled,
            ModeArg::Logspace => FbMode::LogSpace,
        }
    }
}

#[derive(Debug, Args)]
struct DataModel {
    /// Dataset manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct ControlArgs {
    /// JSON file with fit settings; flags below override its values.
    #[arg(long)]
    control: Option<PathBuf>,
    #[arg(long)]
    em_max_iter: Option<usize>,
    #[arg(long)]
    em_rel_tol: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    restart_perturb: Option<f64>,
    /// Follow EM with gradient ascent on the unconstrained parameters.
    #[arg(long)]
    local_step: bool,
    #[arg(long)]
    local_max_iter: Option<usize>,
    #[arg(long)]
    local_grad_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a dataset (and optionally a model against it).
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Estimate a model by EM (plus optional restarts and local step).
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        /// Starting model; without it a random model is generated.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Hidden states of the random starting model.
        #[arg(long, default_value_t = 2)]
        n_states: usize,
        /// Clusters of the random starting model.
        #[arg(long, default_value_t = 1)]
        n_clusters: usize,
        #[command(flatten)]
        control: ControlArgs,
    },
    /// Log-likelihood of a model.
    Loglik {
        #[command(flatten)]
        io: DataModel,
        #[arg(long, value_enum, default_value_t = ModeArg::Scaled)]
        mode: ModeArg,
    },
    /// Log-likelihood, parameter count, sample size and BIC.
    Bic {
        #[command(flatten)]
        io: DataModel,
    },
    /// Most probable hidden paths.
    Viterbi {
        #[command(flatten)]
        io: DataModel,
    },
    /// Posterior state (and cluster) probabilities.
    Posterior {
        #[command(flatten)]
        io: DataModel,
    },
    /// Covariate effects, fit statistics and classification table.
    Summary {
        #[command(flatten)]
        io: DataModel,
    },
    /// Simulate a dataset from a model or from random parameters.
    Simulate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        n_states: usize,
        /// Alphabet sizes, one per channel.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        n_symbols: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        n_clusters: usize,
        #[arg(long)]
        left_to_right: bool,
        #[arg(long, default_value_t = 100)]
        n_subjects: usize,
        #[arg(long, default_value_t = 10)]
        n_time: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
    },
    /// Combine all channels into a single channel.
    Convert {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "/")]
        separator: String,
    },
    /// Set small probabilities to zero.
    Trim {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        trim_tol: f64,
    },
    /// State distribution plot (SVG).
    Plot {
        #[arg(long)]
        manifest: PathBuf,
        /// Colors for every channel, comma separated.
        #[arg(long, value_delimiter = ',')]
        palette: Option<Vec<String>>,
    },
}

/// Output directory, log and stdout rendering for one run.
struct Run {
    out: PathBuf,
    log: Vec<String>,
}

impl Run {
    fn note(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.note(format!("wrote {name}"));
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<String> {
        let text = to_string_precise(value)?;
        self.write(name, &text)?;
        Ok(text)
    }

    fn finish(&self) -> Result<()> {
        let path = self.path("run.log");
        let mut text = self.log.join("\n");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn load_data(run: &mut Run, manifest: &Path) -> Result<(SequenceDataset, Option<CovariateDesign>)> {
    let (data, design) = ingest_dataset(manifest)?;
    run.note(format!(
        "data: {} subjects, {} time points, {} channels ({})",
        data.n_subjects(),
        data.n_time(),
        data.n_channels(),
        manifest.display()
    ));
    if let Some(d) = &design {
        run.note(format!("covariates: {}", d.names().join(", ")));
    }
    Ok((data, design))
}

fn load_model(run: &mut Run, path: &Path) -> Result<Model> {
    let model = read_model(path)?;
    let kind = match &model {
        Model::Hmm(m) => format!("hmm with {} states", m.n_states()),
        Model::Mixture(m) => format!("mixture of {} clusters", m.n_clusters()),
    };
    run.note(format!("model: {kind} ({})", path.display()));
    Ok(model)
}

/// The covariate design a model should be evaluated with: the dataset's when
/// its columns match the model, nothing for intercept-only models.
fn design_for<'a>(model: &Model, design: Option<&'a CovariateDesign>) -> Result<Option<&'a CovariateDesign>> {
    match model {
        Model::Hmm(_) => Ok(None),
        Model::Mixture(mix) => match design {
            Some(d) if d.names() == mix.covariate_names() => Ok(Some(d)),
            _ if mix.covariate_names().len() == 1 => Ok(None),
            Some(d) => Err(Error::DimensionMismatch(format!(
                "model covariates {:?} do not match data covariates {:?}",
                mix.covariate_names(),
                d.names()
            ))),
            None => Err(Error::MissingCovariate(format!(
                "model uses covariates {:?} but the manifest declares none",
                mix.covariate_names()
            ))),
        },
    }
}

fn control_from(args: &ControlArgs, threads: usize) -> Result<FitControl> {
    let mut c = match &args.control {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidControl(e.to_string()))?
        }
        None => FitControl::default(),
    };
    if let Some(v) = args.em_max_iter {
        c.em_max_iter = v;
    }
    if let Some(v) = args.em_rel_tol {
        c.em_rel_tol = v;
    }
    if let Some(v) = args.restarts {
        c.restarts = v;
    }
    if let Some(v) = args.restart_perturb {
        c.restart_perturb = v;
    }
    if args.local_step {
        c.local_step = true;
    }
    if let Some(v) = args.local_max_iter {
        c.local_max_iter = v;
    }
    if let Some(v) = args.local_grad_tol {
        c.local_grad_tol = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    c.threads = threads;
    c.validate()?;
    Ok(c)
}

fn random_start(
    data: &SequenceDataset,
    design: Option<&CovariateDesign>,
    n_states: usize,
    n_clusters: usize,
    seed: u64,
) -> Result<Model> {
    let channels = data.channel_specs();
    if n_clusters <= 1 {
        return Ok(Model::Hmm(HmmModel::random(channels, n_states, seed)?));
    }
    let clusters = (0..n_clusters)
        .map(|k| HmmModel::random(channels.clone(), n_states, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Model::Mixture(MixtureModel::with_design(clusters, design, None)?))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_text(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Csv {
        path: PathBuf::from("<memory>"),
        source: e,
    };
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn state_names(model: &Model) -> Vec<String> {
    match model {
        Model::Hmm(m) => m.state_names().to_vec(),
        Model::Mixture(mix) => mix
            .clusters()
            .iter()
            .zip(mix.cluster_names())
            .flat_map(|(c, k)| c.state_names().iter().map(move |s| format!("{k}: {s}")))
            .collect(),
    }
}

fn dispatch(cli: &Cli, run: &mut Run) -> Result<String> {
    match &cli.command {
        Command::Validate { manifest, model } => {
            run.note("command: validate");
            let (data, design) = load_data(run, manifest)?;
            let mut report = json!({
                "n_subjects": data.n_subjects(),
                "n_time": data.n_time(),
                "channels": data.channel_specs().iter().map(|c| json!({
                    "name": c.name,
                    "symbols": c.alphabet.labels(),
                })).collect::<Vec<_>>(),
                "has_missing": data.has_missing(),
                "effective_size": data.effective_size(),
                "covariates": design.as_ref().map(|d| d.names().to_vec()),
            });
            if let Some(path) = model {
                let model = load_model(run, path)?;
                let count = count_parameters(&model, &data)?;
                design_for(&model, design.as_ref())?;
                report["model_parameters"] = json!(count.p);
            }
            let text = run.write_json("validate.json", &report)?;
            Ok(match cli.format {
                Format::Json => text,
                _ => format!(
                    "ok: {} subjects, {} time points, {} channels\n",
                    data.n_subjects(),
                    data.n_time(),
                    data.n_channels()
                ),
            })
        }
        Command::Fit {
            manifest,
            model,
            n_states,
            n_clusters,
            control,
        } => {
            run.note("command: fit");
            let control = control_from(control, cli.threads)?;
            let (data, design) = load_data(run, manifest)?;
            let start = match model {
                Some(p) => load_model(run, p)?,
                None => {
                    run.note(format!(
                        "model: random start with {n_states} states, {n_clusters} clusters, seed {}",
                        control.seed
                    ));
                    random_start(&data, design.as_ref(), *n_states, *n_clusters, control.seed)?
                }
            };
            let design = design_for(&start, design.as_ref())?;
            let initial = with_threads(control.threads, || log_likelihood(&start, &data, design))??;
            let fit = fit_model(&start, &data, design, &control)?;
            write_model(&run.path("model.fitted.json"), &fit.model)?;
            run.note("wrote model.fitted.json");
            let doc = json!({
                "initial_loglik": initial,
                "result": fit,
                "control": control,
            });
            let text = run.write_json("fit.json", &doc)?;
            run.note(format!(
                "loglik {} after {} EM and {} local iterations ({:?})",
                num(fit.loglik),
                fit.em_iterations,
                fit.local_iterations,
                fit.converged_by
            ));
            for d in &fit.diagnostics {
                run.note(format!("diagnostic: {d}"));
            }
            Ok(match cli.format {
                Format::Json => text,
                _ => format!("{}\n", num(fit.loglik)),
            })
        }
        Command::Loglik { io, mode } => {
            run.note("command: loglik");
            let (data, design) = load_data(run, &io.manifest)?;
            let model = load_model(run, &io.model)?;
            let design = design_for(&model, design.as_ref())?;
            let per_subject = with_threads(cli.threads, || {
                subject_log_likelihoods(&model, &data, design, (*mode).into())
            })??;
            let total: f64 = per_subject.iter().sum();
            let text = run.write_json(
                "loglik.json",
                &json!({ "loglik": total, "mode": format!("{:?}", FbMode::from(*mode)), "per_subject": per_subject }),
            )?;
            run.note(format!("loglik {}", num(total)));
            Ok(match cli.format {
                Format::Json => text,
                _ => format!("{}\n", num(total)),
            })
        }
        Command::Bic { io } => {
            run.note("command: bic");
            let (data, design) = load_data(run, &io.manifest)?;
            let model = load_model(run, &io.model)?;
            let design = design_for(&model, design.as_ref())?;
            let ic = with_threads(cli.threads, || information_criteria(&model, &data, design))??;
            let text = run.write_json("bic.json", &ic)?;
            run.note(format!("bic {}", num(ic.bic)));
            Ok(match cli.format {
                Format::Json => text,
                _ => format!(
                    "loglik {}\np {}\nnobs {}\nbic {}\n",
                    num(ic.loglik),
                    ic.p,
                    num(ic.nobs),
                    num(ic.bic)
                ),
            })
        }
        Command::Viterbi { io } => {
            run.note("command: viterbi");
            let (data, design) = load_data(run, &io.manifest)?;
            let model = load_model(run, &io.model)?;
            let design = design_for(&model, design.as_ref())?;
            let vit = with_threads(cli.threads, || viterbi_paths(&model, &data, design))??;
            let names = state_names(&model);
            let header: Vec<String> = ["subject_id", "t", "state", "state_name"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let rows = (0..data.n_subjects()).flat_map(|i| {
                let vit = &vit;
                let names = &names;
                let data = &data;
                (0..data.n_time()).map(move |t| {
                    let s = vit.paths[[i, t]];
                    vec![
                        data.subject_ids()[i].clone(),
                        data.time_labels()[t].clone(),
                        s.to_string(),
                        names[s].clone(),
                    ]
                })
            });
            let csv = csv_text(&header, rows)?;
            run.write("paths.csv", &csv)?;
            let text = run.write_json(
                "viterbi.json",
                &json!({
                    "log_joint": vit.log_joint.to_vec(),
                    "clusters": vit.clusters.as_ref().map(|c| c.iter().map(|k| k + 1).collect::<Vec<_>>()),
                }),
            )?;
            Ok(match cli.format {
                Format::Json => text,
                Format::Csv => csv,
                Format::Text => format!("decoded {} subjects\n", data.n_subjects()),
            })
        }
        Command::Posterior { io } => {
            run.note("command: posterior");
            let (data, design) = load_data(run, &io.manifest)?;
            let model = load_model(run, &io.model)?;
            let design = design_for(&model, design.as_ref())?;
            let post = with_threads(cli.threads, || posterior_state_probs(&model, &data, design))??;
            let mut header = vec!["subject_id".to_string(), "t".to_string()];
            header.extend(state_names(&model));
            let rows = (0..data.n_subjects()).flat_map(|i| {
                let post = &post;
                let data = &data;
                (0..data.n_time()).map(move |t| {
                    let mut r = vec![data.subject_ids()[i].clone(), data.time_labels()[t].clone()];
                    r.extend((0..post.dim().2).map(|s| num(post[[i, t, s]])));
                    r
                })
            });
            let csv = csv_text(&header, rows)?;
            run.write("posterior.csv", &csv)?;
            if let Model::Mixture(mix) = &model {
                let cp = with_threads(cli.threads, || cluster_posterior_probs(mix, &data, design))??;
                let mut header = vec!["subject_id".to_string()];
                header.extend(mix.cluster_names().iter().cloned());
                let rows = (0..data.n_subjects()).map(|i| {
                    let mut r = vec![data.subject_ids()[i].clone()];
                    r.extend(cp.row(i).iter().map(|&v| num(v)));
                    r
                });
                run.write("cluster_posterior.csv", &csv_text(&header, rows)?)?;
            }
            Ok(match cli.format {
                Format::Csv => csv,
                _ => format!("posteriors for {} subjects\n", data.n_subjects()),
            })
        }
        Command::Summary { io } => {
            run.note("command: summary");
            let (data, design) = load_data(run, &io.manifest)?;
            let model = load_model(run, &io.model)?;
            let design = design_for(&model, design.as_ref())?;
            let mix = model.as_mixture();
            let summary = with_threads(cli.threads, || mixture_summary(&mix, &data, design))??;
            let text = summary.to_string();
            run.write("summary.txt", &text)?;
            let js = run.write_json("summary.json", &summary)?;
            Ok(match cli.format {
                Format::Json => js,
                _ => text,
            })
        }
        Command::Simulate {
            model,
            n_states,
            n_symbols,
            n_clusters,
            left_to_right,
            n_subjects,
            n_time,
            seed,
            missing_rate,
        } => {
            run.note("command: simulate");
            fs::create_dir_all(&run.out).map_err(|e| Error::io(&run.out, e))?;
            let model = match model {
                Some(p) => load_model(run, p)?,
                None => {
                    let m = simulate_parameters(&SimSpec {
                        n_states: *n_states,
                        n_symbols: n_symbols.clone(),
                        n_clusters: *n_clusters,
                        left_to_right: *left_to_right,
                        seed: *seed,
                    })?;
                    write_model(&run.path("model.json"), &m)?;
                    run.note("wrote model.json");
                    m
                }
            };
            let sim = with_threads(cli.threads, || match &model {
                Model::Hmm(m) => simulate_hmm_data(m, *n_subjects, *n_time, *seed),
                Model::Mixture(mix) => {
                    if mix.covariate_names().len() > 1 {
                        return Err(Error::MissingCovariate(
                            "simulating from a covariate model needs a design; use the library API"
                                .into(),
                        ));
                    }
                    simulate_mhmm_data(mix, None, *n_subjects, *n_time, *seed)
                }
            })??;
            let data = if *missing_rate > 0.0 {
                inject_missing(&sim.data, *missing_rate, seed.wrapping_add(1))?
            } else {
                sim.data.clone()
            };
            write_dataset(&run.out, &data, None)?;
            run.note("wrote manifest.json and channel CSVs");
            let header: Vec<String> = ["subject_id", "t", "state"].iter().map(|s| s.to_string()).collect();
            let rows = (0..data.n_subjects()).flat_map(|i| {
                let sim = &sim;
                let data = &data;
                (0..data.n_time()).map(move |t| {
                    vec![
                        data.subject_ids()[i].clone(),
                        data.time_labels()[t].clone(),
                        sim.paths[[i, t]].to_string(),
                    ]
                })
            });
            run.write("hidden_paths.csv", &csv_text(&header, rows)?)?;
            if let Some(cl) = &sim.clusters {
                let header = vec!["subject_id".to_string(), "cluster".to_string()];
                let rows = cl
                    .iter()
                    .enumerate()
                    .map(|(i, k)| vec![data.subject_ids()[i].clone(), k.to_string()]);
                run.write("clusters.csv", &csv_text(&header, rows)?)?;
            }
            Ok(format!(
                "simulated {} subjects, {} time points\n",
                data.n_subjects(),
                data.n_time()
            ))
        }
        Command::Convert {
            manifest,
            separator,
        } => {
            run.note("command: convert");
            let (data, design) = load_data(run, manifest)?;
            let sc = data.mc_to_sc(separator)?;
            write_dataset(&run.out, &sc, design.as_ref())?;
            run.note("wrote manifest.json and channel CSV");
            run.write("dataset.json", &sc.to_json()?)?;
            Ok(format!(
                "converted to one channel with {} symbols\n",
                sc.channels()[0].alphabet.len()
            ))
        }
        Command::Trim { model, trim_tol } => {
            run.note("command: trim");
            let m = load_model(run, model)?;
            let t = m.trim(*trim_tol)?;
            write_model(&run.path("model.trimmed.json"), &t.model)?;
            run.note("wrote model.trimmed.json");
            let text = run.write_json(
                "trim.json",
                &json!({
                    "entries_trimmed": t.entries_trimmed,
                    "max_mass_removed": t.max_mass_removed,
                    "free_parameters": t.model.free_parameter_count(),
                }),
            )?;
            Ok(match cli.format {
                Format::Json => text,
                _ => format!("trimmed {} entries\n", t.entries_trimmed),
            })
        }
        Command::Plot { manifest, palette } => {
            run.note("command: plot");
            let (data, _) = load_data(run, manifest)?;
            let palettes = palette
                .as_ref()
                .map(|p| vec![p.clone(); data.n_channels()]);
            let svg = render_state_distribution_svg(&data, palettes.as_deref())?;
            run.write("state_distribution.svg", &svg)?;
            Ok("wrote state_distribution.svg\n".into())
        }
    }
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = fs::create_dir_all(&cli.out) {
        eprintln!("error[Io]: cannot create {}: {e}", cli.out.display());
        return 1;
    }
    let mut run = Run {
        out: cli.out.clone(),
        log: Vec::new(),
    };
    let outcome = dispatch(&cli, &mut run);
    let code = match &outcome {
        Ok(stdout) => {
            print!("{stdout}");
            run.note("status: ok");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            run.note(format!("status: error[{}]: {e}", e.name()));
            1
        }
    };
    if let Err(e) = run.finish() {
        eprintln!("error[{}]: {e}", e.name());
        return 1;
    }
    code
}
