//! End-to-end experiment: data → classifier → autoencoder → attributions →
//! metrics. Everything here is a pure function of the config, so two runs
//! with the same config produce identical reports.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use pathguide_core::attribution::{build_path, AttributionRequest, Method, PathParams, Target};
use pathguide_core::data::{blobs_dataset, circle_dataset, shapes_dataset, Dataset};
use pathguide_core::experiment::{
    evaluate_sample, paired_sign_test, EvalContext, MethodRun, SampleResult, SignTest,
};
use pathguide_core::manifold::{AnalyticManifold, EmbeddedCircle};
use pathguide_core::metrics::{
    aggregate_profiles, confidence_profile, distance_profile, mean_std, reconstruction_profile,
    DeviationProfile, ProfileAggregate, ProfileKind,
};
use pathguide_core::models::{
    exact_chart_autoencoder, predict, train_autoencoder, train_classifier, Autoencoder,
    AutoencoderReport, ClassifierReport, Head, MlpSpec, Sequential, TrainConfig,
    TrainedClassifier,
};
use pathguide_core::Tensor;

use crate::config::{AeMode, DataKind, ExperimentConfig};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Dataset plus the analytic manifold it was sampled from, if any.
pub struct Data {
    pub dataset: Dataset,
    pub manifold: Option<Arc<dyn AnalyticManifold>>,
}

pub fn build_data(cfg: &ExperimentConfig) -> Result<Data> {
    let d = &cfg.data;
    Ok(match d.kind {
        DataKind::Shapes => Data {
            dataset: shapes_dataset(d.samples, d.noise, cfg.seed)?,
            manifold: None,
        },
        DataKind::Blobs => Data {
            dataset: blobs_dataset(d.ambient_dim, d.samples, d.separation, cfg.seed)?,
            manifold: None,
        },
        DataKind::Circle => {
            let circle = EmbeddedCircle::embedded(d.ambient_dim, cfg.seed);
            let dataset = circle_dataset(&circle, d.samples, d.classes, d.noise, cfg.seed)?;
            Data {
                dataset,
                manifold: Some(Arc::new(circle)),
            }
        }
    })
}

pub fn classifier_spec(cfg: &ExperimentConfig, data: &Dataset) -> Result<MlpSpec> {
    let c = &cfg.classifier;
    let out = match c.head {
        Head::SigmoidScalar => 1,
        _ => data.num_classes(),
    };
    let mut widths = vec![data.dim()];
    widths.extend(&c.hidden);
    widths.push(out);
    Ok(MlpSpec::new(widths, c.activation, c.head)?)
}

pub fn classifier_train_config(cfg: &ExperimentConfig) -> TrainConfig {
    let c = &cfg.classifier;
    TrainConfig {
        learning_rate: c.learning_rate,
        batch_size: c.batch_size,
        epochs: c.epochs,
        optimizer: c.optimizer,
        weight_decay: c.weight_decay,
        seed: cfg.seed,
        accuracy_floor: c.accuracy_floor,
        ..TrainConfig::default()
    }
}

pub fn fit_classifier(cfg: &ExperimentConfig, data: &Dataset) -> Result<TrainedClassifier> {
    let spec = classifier_spec(cfg, data)?;
    let trained = train_classifier(data, &spec, &classifier_train_config(cfg))
        .with_context(|| format!("training classifier {spec}"))?;
    info!(
        "classifier {spec}: held-out accuracy {:.4}",
        trained.report.held_out_accuracy
    );
    Ok(trained)
}

pub fn fit_autoencoder(cfg: &ExperimentConfig, data: &Data) -> Result<Option<Autoencoder>> {
    let a = &cfg.autoencoder;
    match a.mode {
        AeMode::None => Ok(None),
        AeMode::ExactChart => {
            let m = data
                .manifold
                .clone()
                .context("exact-chart autoencoder needs analytic data")?;
            Ok(Some(exact_chart_autoencoder(m)?))
        }
        AeMode::Trained => {
            let tc = TrainConfig {
                learning_rate: a.learning_rate,
                epochs: a.epochs,
                seed: cfg.seed,
                accuracy_floor: None,
                mse_ceiling: a.mse_ceiling,
                latent_noise: a.latent_noise,
                ..TrainConfig::default()
            };
            let ae = train_autoencoder(&data.dataset, a.latent_dim, &a.hidden, a.activation, &tc)
                .context("training autoencoder")?;
            if let Some(r) = ae.report() {
                info!("autoencoder d={}: held-out MSE {:.3e}", a.latent_dim, r.held_out_mse);
            }
            Ok(Some(ae))
        }
    }
}

/// Held-out samples evaluated by the run: the first `evaluation.samples`
/// indices of the classifier's held-out split.
pub fn eval_samples(cfg: &ExperimentConfig, data: &Dataset) -> Vec<(usize, Tensor)> {
    let held_out = classifier_train_config(cfg).held_out_fraction;
    let (_, test) = data.split_indices(held_out, cfg.seed);
    test.into_iter()
        .take(cfg.evaluation.samples)
        .map(|i| (i, data.sample(i)))
        .collect()
}

pub fn baseline_tensor(cfg: &ExperimentConfig, data: &Dataset) -> Tensor {
    cfg.attribution.baseline.fill(&data.mean())
}

/// Method runs of the q-sweep: guided methods once per fraction, the rest
/// once at the configured fraction.
pub fn method_runs(cfg: &ExperimentConfig) -> Vec<MethodRun> {
    let base = cfg.attribution.params;
    let mut fractions = cfg.evaluation.fractions.clone();
    if !fractions.contains(&base.fraction) {
        fractions.insert(0, base.fraction);
    }
    let mut runs = Vec::new();
    for &m in &cfg.attribution.methods {
        if m.is_guided() {
            for &q in &fractions {
                runs.push(MethodRun {
                    method: m,
                    params: PathParams {
                        fraction: q,
                        ..base
                    },
                });
            }
        } else {
            runs.push(MethodRun {
                method: m,
                params: base,
            });
        }
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRow {
    pub sample: usize,
    pub method: Method,
    pub fraction: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub fraction: f64,
    pub samples: usize,
    pub diffid_mean: f64,
    pub diffid_std: f64,
    pub insertion_auc_mean: f64,
    pub deletion_auc_mean: f64,
    pub residual_mean: f64,
    pub relative_residual_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignRow {
    pub a: Method,
    pub b: Method,
    pub fraction: f64,
    #[serde(flatten)]
    pub test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub method: Method,
    #[serde(flatten)]
    pub aggregate: ProfileAggregate,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub data_ms: u128,
    pub classifier_ms: u128,
    pub autoencoder_ms: u128,
    pub evaluation_ms: u128,
    pub profiles_ms: u128,
    pub per_method: Vec<MethodTiming>,
}

/// Mean wall-clock of attribution plus metrics for one sample.
#[derive(Debug, Clone, Serialize)]
pub struct MethodTiming {
    pub method: Method,
    pub fraction: f64,
    pub mean_ms_per_sample: f64,
}

/// Everything a run reports. Wall-clock timings live outside this struct so
/// reports are reproducible byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub toolkit_version: String,
    pub config: String,
    pub seed: u64,
    pub classifier: Option<ClassifierReport>,
    pub autoencoder_mode: Option<String>,
    pub autoencoder: Option<AutoencoderReport>,
    pub rows: Vec<SampleResult>,
    pub failures: Vec<FailureRow>,
    pub summary: Vec<MethodSummary>,
    pub sign_tests: Vec<SignRow>,
    pub profiles: Vec<ProfileRow>,
}

impl RunReport {
    /// DiffID per sample for one `(method, fraction)` pair, in sample order.
    pub fn diffids(&self, method: Method, fraction: f64) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.fraction == fraction)
            .map(|r| (r.sample, r.diffid))
            .collect()
    }

    pub fn summary_for(&self, method: Method, fraction: f64) -> Option<&MethodSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.fraction == fraction)
    }

    pub fn profile_for(&self, method: Method, kind: ProfileKind) -> Option<&ProfileAggregate> {
        self.profiles
            .iter()
            .find(|p| p.method == method && p.aggregate.kind == kind)
            .map(|p| &p.aggregate)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(rows: &[SampleResult], runs: &[MethodRun]) -> Vec<MethodSummary> {
    runs.iter()
        .map(|run| {
            let sel: Vec<&SampleResult> = rows
                .iter()
                .filter(|r| r.method == run.method && r.fraction == run.params.fraction)
                .collect();
            let col = |f: fn(&SampleResult) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (diffid_mean, diffid_std) = mean_std(&col(|r| r.diffid));
            MethodSummary {
                method: run.method,
                fraction: run.params.fraction,
                samples: sel.len(),
                diffid_mean,
                diffid_std,
                insertion_auc_mean: mean_std(&col(|r| r.insertion_auc)).0,
                deletion_auc_mean: mean_std(&col(|r| r.deletion_auc)).0,
                residual_mean: mean_std(&col(|r| r.residual)).0,
                relative_residual_median: median(col(|r| r.relative_residual)),
            }
        })
        .collect()
}

/// Paired sign tests of MA-GIG against every other method on the samples
/// both evaluated successfully.
fn sign_tests(report_rows: &[SampleResult], runs: &[MethodRun]) -> Vec<SignRow> {
    let pick = |m: Method, q: f64| -> Vec<(usize, f64)> {
        report_rows
            .iter()
            .filter(|r| r.method == m && r.fraction == q)
            .map(|r| (r.sample, r.diffid))
            .collect()
    };
    let mut out = Vec::new();
    for a in runs.iter().filter(|r| r.method == Method::Magig) {
        let q = a.params.fraction;
        let av = pick(Method::Magig, q);
        for b in runs.iter().filter(|r| r.method != Method::Magig) {
            // compare guided baselines at the same fraction only
            if b.method.is_guided() && b.params.fraction != q {
                continue;
            }
            let bv = pick(b.method, b.params.fraction);
            let (x, y): (Vec<f64>, Vec<f64>) = av
                .iter()
                .filter_map(|(s, v)| bv.iter().find(|(t, _)| t == s).map(|(_, w)| (*v, *w)))
                .unzip();
            out.push(SignRow {
                a: Method::Magig,
                b: b.method,
                fraction: q,
                test: paired_sign_test(&x, &y),
            });
        }
    }
    out
}

/// Deviation profiles along each path method at the configured fraction:
/// confidence always, exact distance for chart autoencoders, reconstruction
/// error for trained ones.
pub fn profiles(
    cfg: &ExperimentConfig,
    model: &Sequential,
    ae: Option<&Autoencoder>,
    baseline: &Tensor,
    samples: &[(usize, Tensor)],
) -> Result<Vec<ProfileRow>> {
    let mut rows = Vec::new();
    for &method in &cfg.attribution.methods {
        if method == Method::Gxi {
            continue;
        }
        let per_sample: Vec<Vec<DeviationProfile>> = samples
            .par_iter()
            .map(|(_, x)| -> Result<Vec<DeviationProfile>> {
                let class = predict(model, x.data())?;
                let target = Target::new(model, class);
                let trace = build_path(&AttributionRequest {
                    input: x,
                    baseline,
                    target,
                    method,
                    params: cfg.attribution.params,
                    autoencoder: ae,
                })?
                .context("path method returned no trace")?;
                let mut ps = vec![confidence_profile(&trace, &target)?];
                if let Some(ae) = ae {
                    match ae.manifold() {
                        Some(m) => ps.push(distance_profile(&trace, m.as_ref())?),
                        None => ps.push(reconstruction_profile(&trace, ae)?),
                    }
                }
                Ok(ps)
            })
            .collect::<Result<_>>()?;
        let Some(first) = per_sample.first() else {
            continue;
        };
        for j in 0..first.len() {
            let col: Vec<DeviationProfile> = per_sample.iter().map(|p| p[j].clone()).collect();
            rows.push(ProfileRow {
                method,
                aggregate: aggregate_profiles(&col)?,
            });
        }
    }
    Ok(rows)
}

/// Trained models and evaluation inputs, shared by the run and the
/// individual subcommands.
pub struct Prepared {
    pub data: Data,
    pub model: Sequential,
    /// `None` when the classifier was loaded from a checkpoint.
    pub classifier_report: Option<ClassifierReport>,
    pub autoencoder: Option<Autoencoder>,
}

pub fn prepare(cfg: &ExperimentConfig, timings: &mut Timings) -> Result<Prepared> {
    let t = Instant::now();
    let data = build_data(cfg)?;
    timings.data_ms = t.elapsed().as_millis();
    let t = Instant::now();
    let TrainedClassifier { model, report } = fit_classifier(cfg, &data.dataset)?;
    timings.classifier_ms = t.elapsed().as_millis();
    let t = Instant::now();
    let autoencoder = if cfg.attribution.methods.iter().any(|m| m.needs_autoencoder()) {
        fit_autoencoder(cfg, &data)?
    } else {
        None
    };
    timings.autoencoder_ms = t.elapsed().as_millis();
    Ok(Prepared {
        data,
        model,
        classifier_report: Some(report),
        autoencoder,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, Timings)> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let prep = prepare(cfg, &mut timings)?;
    let report = evaluate_prepared(cfg, &prep, &mut timings)?;
    Ok((report, timings))
}

pub fn evaluate_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    timings: &mut Timings,
) -> Result<RunReport> {
    let dataset = &prep.data.dataset;
    let model = &prep.model;
    let ae = prep.autoencoder.as_ref();
    let baseline = baseline_tensor(cfg, dataset);
    let fill = cfg.evaluation.fill.fill(&dataset.mean());
    let grid = cfg.grid();
    let samples = eval_samples(cfg, dataset);
    let runs = method_runs(cfg);

    let t = Instant::now();
    let ctx = EvalContext {
        model,
        autoencoder: ae,
        baseline: &baseline,
        fill: &fill,
        ranking: cfg.evaluation.ranking,
        grid: &grid,
    };
    let jobs: Vec<(usize, &Tensor, &MethodRun)> = samples
        .iter()
        .flat_map(|(id, x)| runs.iter().map(move |r| (*id, x, r)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(id, x, run)| {
            let t = Instant::now();
            let res = evaluate_sample(&ctx, id, x, run);
            (res, t.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut elapsed = vec![(0.0, 0usize); runs.len()];
    for (i, ((sample, _, run), (res, ms))) in jobs.iter().zip(results).enumerate() {
        let slot = &mut elapsed[i % runs.len()];
        slot.0 += ms;
        slot.1 += 1;
        match res {
            Ok((row, _)) => rows.push(row),
            Err(e) => {
                warn!("sample {sample} {}: {e}", run.method);
                failures.push(FailureRow {
                    sample: *sample,
                    method: run.method,
                    fraction: run.params.fraction,
                    error: e.to_string(),
                });
            }
        }
    }
    let run_pos = |m: Method, q: f64| {
        runs.iter()
            .position(|r| r.method == m && r.params.fraction == q)
            .unwrap_or(usize::MAX)
    };
    rows.sort_by_key(|r| (r.sample, run_pos(r.method, r.fraction)));
    failures.sort_by_key(|r| (r.sample, run_pos(r.method, r.fraction)));
    timings.per_method = runs
        .iter()
        .zip(&elapsed)
        .map(|(r, (ms, n))| MethodTiming {
            method: r.method,
            fraction: r.params.fraction,
            mean_ms_per_sample: ms / (*n).max(1) as f64,
        })
        .collect();
    timings.evaluation_ms = t.elapsed().as_millis();

    let t = Instant::now();
    let profiles = profiles(cfg, model, ae, &baseline, &samples)?;
    timings.profiles_ms = t.elapsed().as_millis();

    Ok(RunReport {
        toolkit_version: TOOLKIT_VERSION.into(),
        config: cfg.to_text(),
        seed: cfg.seed,
        classifier: prep.classifier_report.clone(),
        autoencoder_mode: ae.map(|a| a.mode().to_string()),
        autoencoder: ae.and_then(|a| a.report().cloned()),
        summary: summarize(&rows, &runs),
        sign_tests: sign_tests(&rows, &runs),
        rows,
        failures,
        profiles,
    })
}
