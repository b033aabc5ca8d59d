use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use pathguide_core::attribution::{attribute, AttributionRequest, Interpolation, Method, Target};
use pathguide_core::data::Dataset;
use pathguide_core::metrics::{diffid, BaselineMode, Game, RankingMode};
use pathguide_core::models::{
    accuracy, load_attribution, load_autoencoder, load_classifier, predict, save_attribution,
    save_autoencoder, save_classifier, Autoencoder, ClassifierReport,
};

use crate::config::{AeMode, ExperimentConfig};
use crate::output::{write_profiles, write_run};
use crate::pipeline::{
    baseline_tensor, build_data, classifier_train_config, eval_samples, evaluate_prepared,
    fit_autoencoder, fit_classifier, profiles, run_experiment, Data, Prepared, Timings,
};

/// Path attribution experiments: data generation, training, attribution and
/// evaluation.
#[derive(Debug, Parser)]
#[command(name = "pathguide", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset to CSV with a manifest.
    GenData(Common),
    /// Train a classifier on a dataset CSV.
    TrainClassifier(TrainArgs),
    /// Train the autoencoder used by the latent methods.
    TrainVae(TrainArgs),
    /// Write one attribution tensor per (sample, method).
    Attribute(AttributeArgs),
    /// DiffID / insertion / deletion tables, q-sweep and profile AUCs.
    Evaluate(EvaluateArgs),
    /// Per-α deviation profiles along each path method.
    PathDiagnostics(ModelArgs),
    /// Full pipeline from a config: data, training, evaluation, report.
    Report(Common),
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Experiment config (`key = value` with `[section]` headers).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods: gxi, ig, gig, eig, magig.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    /// Path steps K.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Selection fraction q.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Latent step size η.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Interpolate latents along great circles.
    #[arg(long)]
    pub slerp: bool,
    /// Attribution baseline: zero or mean.
    #[arg(long)]
    pub baseline: Option<BaselineMode>,
    /// Ranking for the perturbation games: signed or abs.
    #[arg(long)]
    pub ranking: Option<RankingMode>,
    /// Number of held-out samples to evaluate.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV; regenerated from the config when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Classifier checkpoint; trained from the config when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Autoencoder checkpoint, or `exact-chart` for the analytic chart of
    /// circle data. Required by eig and magig.
    #[arg(long)]
    pub vae: Option<String>,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Dataset row indices to explain; defaults to the first held-out samples.
    #[arg(long, value_delimiter = ',')]
    pub ids: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Directory written by `attribute`; its maps are scored as well.
    #[arg(long)]
    pub attributions: Option<PathBuf>,
}

/// How a command failed: bad invocation (exit 1) or at run time (exit 2).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Rows requested vs produced; the exit code is 0 only when they match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub requested: usize,
    pub produced: usize,
}

impl Outcome {
    fn complete(n: usize) -> Self {
        Self {
            requested: n,
            produced: n,
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| Failure::Usage(format!("{e:#}")))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if !c.method.is_empty() {
        cfg.attribution.methods = c.method.clone();
    }
    let p = &mut cfg.attribution.params;
    if let Some(k) = c.steps {
        p.steps = k;
    }
    if let Some(q) = c.fraction {
        p.fraction = q;
        cfg.evaluation.fractions = vec![q];
    }
    if let Some(e) = c.eta {
        p.eta = e;
    }
    if c.slerp {
        p.interpolation = Interpolation::Slerp;
    }
    if let Some(b) = c.baseline {
        cfg.attribution.baseline = b;
    }
    if let Some(r) = c.ranking {
        cfg.evaluation.ranking = r;
    }
    if let Some(n) = c.samples {
        cfg.evaluation.samples = n;
    }
    Ok(cfg)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct DataManifest {
    toolkit_version: &'static str,
    seed: u64,
    samples: usize,
    dim: usize,
    classes: usize,
    config: String,
}

fn gen_data(c: &Common) -> Result<Outcome, Failure> {
    let cfg = load_config(c)?;
    let data = build_data(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    data.dataset.write_csv(cfg.out.join("dataset.csv"))?;
    write_json(
        &cfg.out.join("manifest.json"),
        &DataManifest {
            toolkit_version: crate::pipeline::TOOLKIT_VERSION,
            seed: cfg.seed,
            samples: data.dataset.len(),
            dim: data.dataset.dim(),
            classes: data.dataset.num_classes(),
            config: cfg.to_text(),
        },
    )?;
    info!("wrote {} samples to {}", data.dataset.len(), cfg.out.display());
    Ok(Outcome::complete(1))
}

/// Loads a dataset CSV, keeping the analytic manifold the config describes
/// when the data is circle data.
fn load_data(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Data> {
    let mut data = build_data(cfg)?;
    if let Some(p) = path {
        data.dataset = Dataset::read_csv(p)?;
    }
    Ok(data)
}

fn train_classifier_cmd(a: &TrainArgs) -> Result<Outcome, Failure> {
    let cfg = load_config(&a.common)?;
    let data = Dataset::read_csv(&a.data)?;
    let trained = fit_classifier(&cfg, &data)?;
    fs::create_dir_all(&cfg.out)?;
    save_classifier(&trained.model, cfg.seed, cfg.out.join("classifier.ckpt"))?;
    write_json(&cfg.out.join("classifier.json"), &trained.report)?;
    Ok(Outcome::complete(1))
}

fn train_vae_cmd(a: &TrainArgs) -> Result<Outcome, Failure> {
    let cfg = load_config(&a.common)?;
    if cfg.autoencoder.mode != AeMode::Trained {
        return Err(Failure::Usage(
            "train-vae needs `[autoencoder] mode = trained`; exact charts need no training (pass --vae exact-chart)".into(),
        ));
    }
    let data = load_data(&cfg, Some(&a.data))?;
    let ae = fit_autoencoder(&cfg, &data)?.context("no autoencoder configured")?;
    fs::create_dir_all(&cfg.out)?;
    save_autoencoder(&ae, cfg.seed, cfg.out.join("autoencoder.ckpt"))?;
    write_json(&cfg.out.join("autoencoder.json"), &ae.report())?;
    Ok(Outcome::complete(1))
}

/// Models for the attribution commands: loaded from checkpoints where given,
/// trained from the config otherwise.
fn prepare_models(cfg: &ExperimentConfig, a: &ModelArgs) -> Result<Prepared, Failure> {
    let needs_ae = cfg.attribution.methods.iter().any(|m| m.needs_autoencoder());
    if needs_ae && a.vae.is_none() && a.model.is_some() {
        let m = cfg.attribution.methods.iter().find(|m| m.needs_autoencoder());
        return Err(Failure::Usage(format!(
            "method {} requires --vae <checkpoint|exact-chart>",
            m.expect("checked above")
        )));
    }
    let data = load_data(cfg, a.data.as_deref())?;
    let (model, classifier_report) = match &a.model {
        Some(p) => {
            let (model, seed) = load_classifier(p)?;
            let (train, test) = data
                .dataset
                .split_indices(classifier_train_config(cfg).held_out_fraction, cfg.seed);
            let report = ClassifierReport {
                held_out_accuracy: accuracy(&model, &data.dataset, &test)?,
                train_accuracy: accuracy(&model, &data.dataset, &train)?,
                final_loss: f64::NAN,
                epochs: 0,
                seed,
            };
            (model, Some(report))
        }
        None => {
            let t = fit_classifier(cfg, &data.dataset)?;
            (t.model, Some(t.report))
        }
    };
    let autoencoder: Option<Autoencoder> = match a.vae.as_deref() {
        Some("exact-chart") => {
            let mut c = cfg.clone();
            c.autoencoder.mode = AeMode::ExactChart;
            fit_autoencoder(&c, &data)
                .map_err(|e| Failure::Usage(format!("--vae exact-chart: {e:#}")))?
        }
        Some(p) => Some(load_autoencoder(p)?.0),
        None if needs_ae => fit_autoencoder(cfg, &data)?,
        None => None,
    };
    Ok(Prepared {
        data,
        model,
        classifier_report,
        autoencoder,
    })
}

fn require_vae(cfg: &ExperimentConfig, a: &ModelArgs) -> Result<(), Failure> {
    if let Some(m) = cfg.attribution.methods.iter().find(|m| m.needs_autoencoder()) {
        if a.vae.is_none() && cfg.autoencoder.mode == AeMode::None {
            return Err(Failure::Usage(format!(
                "method {m} requires --vae <checkpoint|exact-chart>"
            )));
        }
    }
    Ok(())
}

/// One row of the attribution manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample: usize,
    pub method: Method,
    pub steps: usize,
    pub fraction: f64,
    pub eta: f64,
    pub interpolation: Interpolation,
    pub target: usize,
    pub residual: f64,
    pub file: String,
}

fn attribute_cmd(a: &AttributeArgs) -> Result<Outcome, Failure> {
    let cfg = load_config(&a.models.common)?;
    cfg.validate().map_err(|e| Failure::Usage(format!("{e:#}")))?;
    if let Some(m) = cfg.attribution.methods.iter().find(|m| m.needs_autoencoder()) {
        if a.models.vae.is_none() {
            return Err(Failure::Usage(format!(
                "method {m} requires --vae <checkpoint|exact-chart>"
            )));
        }
    }
    let prep = prepare_models(&cfg, &a.models)?;
    let dataset = &prep.data.dataset;
    let ids: Vec<usize> = if a.ids.is_empty() {
        eval_samples(&cfg, dataset).into_iter().map(|(i, _)| i).collect()
    } else {
        a.ids.clone()
    };
    if let Some(bad) = ids.iter().find(|&&i| i >= dataset.len()) {
        return Err(Failure::Usage(format!(
            "sample id {bad} out of range for {} rows",
            dataset.len()
        )));
    }
    let baseline = baseline_tensor(&cfg, dataset);
    fs::create_dir_all(&cfg.out)?;
    let mut rows = Vec::new();
    let requested = ids.len() * cfg.attribution.methods.len();
    for &id in &ids {
        let x = dataset.sample(id);
        let class = predict(&prep.model, x.data())?;
        for &method in &cfg.attribution.methods {
            let res = attribute(&AttributionRequest {
                input: &x,
                baseline: &baseline,
                target: Target::new(&prep.model, class),
                method,
                params: cfg.attribution.params,
                autoencoder: prep.autoencoder.as_ref(),
            });
            let map = match res {
                Ok(m) => m,
                Err(e) => {
                    log::error!("sample {id} {method}: {e}");
                    continue;
                }
            };
            let file = format!("attr_{id}_{method}.ckpt");
            let p = cfg.attribution.params;
            let row = ManifestRow {
                sample: id,
                method,
                steps: p.steps,
                fraction: p.fraction,
                eta: p.eta,
                interpolation: p.interpolation,
                target: class,
                residual: map.completeness_residual,
                file: file.clone(),
            };
            save_attribution(&map.values, &serde_json::to_string(&row)?, cfg.out.join(&file))?;
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_path(cfg.out.join("manifest.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    fs::write(cfg.out.join("config.ini"), cfg.to_text())?;
    Ok(Outcome {
        requested,
        produced: rows.len(),
    })
}

/// Scores saved attribution maps; rows that fail are reported and skipped.
#[derive(Debug, Clone, Serialize)]
pub struct ScoredRow {
    pub sample: usize,
    pub method: Method,
    pub fraction: f64,
    pub diffid: Option<f64>,
    pub insertion_auc: Option<f64>,
    pub deletion_auc: Option<f64>,
    pub error: Option<String>,
}

fn score_saved(cfg: &ExperimentConfig, prep: &Prepared, dir: &Path) -> Result<Vec<ScoredRow>> {
    let dataset = &prep.data.dataset;
    let fill = cfg.evaluation.fill.fill(&dataset.mean());
    let grid = cfg.grid();
    let game = Game {
        fill: &fill,
        ranking: cfg.evaluation.ranking,
        grid: &grid,
    };
    let mut r = csv::Reader::from_path(dir.join("manifest.csv"))
        .with_context(|| format!("reading {}", dir.join("manifest.csv").display()))?;
    let mut out = Vec::new();
    for row in r.deserialize::<ManifestRow>() {
        let row = row?;
        let scored = (|| -> Result<_> {
            if row.sample >= dataset.len() {
                return Err(anyhow!("sample {} not in dataset", row.sample));
            }
            let (values, _) = load_attribution(dir.join(&row.file))?;
            let x = dataset.sample(row.sample);
            let target = Target::new(&prep.model, row.target);
            Ok(diffid(&x, &values, &target, &game)?)
        })();
        out.push(match scored {
            Ok(d) => ScoredRow {
                sample: row.sample,
                method: row.method,
                fraction: row.fraction,
                diffid: Some(d.score),
                insertion_auc: Some(d.insertion_auc),
                deletion_auc: Some(d.deletion_auc),
                error: None,
            },
            Err(e) => {
                log::error!("{}: {e:#}", row.file);
                ScoredRow {
                    sample: row.sample,
                    method: row.method,
                    fraction: row.fraction,
                    diffid: None,
                    insertion_auc: None,
                    deletion_auc: None,
                    error: Some(format!("{e:#}")),
                }
            }
        });
    }
    Ok(out)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<Outcome, Failure> {
    let cfg = load_config(&a.models.common)?;
    cfg.validate().map_err(|e| Failure::Usage(format!("{e:#}")))?;
    require_vae(&cfg, &a.models)?;
    let prep = prepare_models(&cfg, &a.models)?;
    let mut timings = Timings::default();
    let report = evaluate_prepared(&cfg, &prep, &mut timings)?;
    write_run(&cfg.out, &report, &timings)?;
    let mut outcome = Outcome {
        requested: report.rows.len() + report.failures.len(),
        produced: report.rows.len(),
    };
    if let Some(dir) = &a.attributions {
        let scored = score_saved(&cfg, &prep, dir)?;
        let mut w = csv::Writer::from_path(cfg.out.join("attributions.csv"))
            ?;
        for r in &scored {
            w.serialize(r)?;
        }
        w.flush()?;
        outcome.requested += scored.len();
        outcome.produced += scored.iter().filter(|r| r.error.is_none()).count();
    }
    Ok(outcome)
}

fn path_diagnostics_cmd(a: &ModelArgs) -> Result<Outcome, Failure> {
    let cfg = load_config(&a.common)?;
    cfg.validate().map_err(|e| Failure::Usage(format!("{e:#}")))?;
    require_vae(&cfg, a)?;
    let prep = prepare_models(&cfg, a)?;
    let dataset = &prep.data.dataset;
    let samples = eval_samples(&cfg, dataset);
    let baseline = baseline_tensor(&cfg, dataset);
    let rows = profiles(
        &cfg,
        &prep.model,
        prep.autoencoder.as_ref(),
        &baseline,
        &samples,
    )?;
    fs::create_dir_all(&cfg.out)?;
    write_profiles(&cfg.out, &rows)?;
    fs::write(cfg.out.join("config.ini"), cfg.to_text())?;
    Ok(Outcome::complete(rows.len()))
}

fn report_cmd(c: &Common) -> Result<Outcome, Failure> {
    let cfg = load_config(c)?;
    cfg.validate().map_err(|e| Failure::Usage(format!("{e:#}")))?;
    let (report, timings) = run_experiment(&cfg)?;
    write_run(&cfg.out, &report, &timings)?;
    Ok(Outcome {
        requested: report.rows.len() + report.failures.len(),
        produced: report.rows.len(),
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::TrainClassifier(a) => train_classifier_cmd(a),
        Command::TrainVae(a) => train_vae_cmd(a),
        Command::Attribute(a) => attribute_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::PathDiagnostics(a) => path_diagnostics_cmd(a),
        Command::Report(c) => report_cmd(c),
    }
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on usage errors, 2 on runtime failures or missing rows.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(o) if o.produced == o.requested => 0,
        Ok(o) => {
            eprintln!("error: produced {} of {} requested rows", o.produced, o.requested);
            2
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}
