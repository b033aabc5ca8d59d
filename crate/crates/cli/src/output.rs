//! Report files. Everything except `timings.json` is deterministic.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use pathguide_core::metrics::{write_series_csv, SeriesRow};

use crate::pipeline::{ProfileRow, RunReport, Timings};

fn tagged(record: &str, v: &impl Serialize) -> Result<String> {
    let mut value = serde_json::to_value(v)?;
    if let Value::Object(map) = &mut value {
        map.insert("record".into(), Value::String(record.into()));
    }
    Ok(serde_json::to_string(&value)?)
}

#[derive(Serialize)]
struct RunHeader<'a> {
    toolkit_version: &'a str,
    seed: u64,
    config: &'a str,
    classifier: &'a Option<pathguide_core::models::ClassifierReport>,
    autoencoder_mode: &'a Option<String>,
    autoencoder: &'a Option<pathguide_core::models::AutoencoderReport>,
}

/// The report as JSON lines: one `run` header, then `sample`, `failure`,
/// `summary`, `sign-test` and `profile` records.
pub fn report_jsonl(report: &RunReport) -> Result<String> {
    let mut lines = vec![tagged(
        "run",
        &RunHeader {
            toolkit_version: &report.toolkit_version,
            seed: report.seed,
            config: &report.config,
            classifier: &report.classifier,
            autoencoder_mode: &report.autoencoder_mode,
            autoencoder: &report.autoencoder,
        },
    )?];
    for r in &report.rows {
        lines.push(tagged("sample", r)?);
    }
    for r in &report.failures {
        lines.push(tagged("failure", r)?);
    }
    for r in &report.summary {
        lines.push(tagged("summary", r)?);
    }
    for r in &report.sign_tests {
        lines.push(tagged("sign-test", r)?);
    }
    for r in &report.profiles {
        #[derive(Serialize)]
        struct Auc<'a> {
            method: pathguide_core::attribution::Method,
            kind: pathguide_core::metrics::ProfileKind,
            samples: usize,
            auc_mean: f64,
            auc_std: f64,
            interior_auc_mean: f64,
            interior_auc_std: f64,
            mean: &'a [f64],
            std: &'a [f64],
        }
        let a = &r.aggregate;
        lines.push(tagged(
            "profile",
            &Auc {
                method: r.method,
                kind: a.kind,
                samples: a.samples,
                auc_mean: a.auc_mean,
                auc_std: a.auc_std,
                interior_auc_mean: a.interior_auc_mean,
                interior_auc_std: a.interior_auc_std,
                mean: &a.mean,
                std: &a.std,
            },
        )?);
    }
    let mut s = lines.join("\n");
    s.push('\n');
    Ok(s)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("{}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profiles(dir: &Path, profiles: &[ProfileRow]) -> Result<()> {
    let mut series = Vec::new();
    #[derive(Serialize)]
    struct AucRow {
        method: String,
        kind: String,
        samples: usize,
        auc_mean: f64,
        auc_std: f64,
        interior_auc_mean: f64,
        interior_auc_std: f64,
    }
    let mut aucs = Vec::new();
    for p in profiles {
        let a = &p.aggregate;
        let kind = serde_json::to_value(a.kind)?
            .as_str()
            .unwrap_or_default()
            .to_string();
        let id = format!("{}/{kind}", p.method);
        series.extend(SeriesRow::expand(&a.alphas, &a.mean, &format!("{id}/mean"), "all"));
        series.extend(SeriesRow::expand(&a.alphas, &a.std, &format!("{id}/std"), "all"));
        aucs.push(AucRow {
            method: p.method.to_string(),
            kind,
            samples: a.samples,
            auc_mean: a.auc_mean,
            auc_std: a.auc_std,
            interior_auc_mean: a.interior_auc_mean,
            interior_auc_std: a.interior_auc_std,
        });
    }
    write_series_csv(dir.join("profiles.csv"), &series)?;
    write_csv(&dir.join("profile_auc.csv"), &aucs)
}

/// Writes `config.ini`, `report.jsonl`, `samples.csv`, `summary.csv`,
/// `sign_tests.csv`, `profiles.csv`, `profile_auc.csv` and `timings.json`.
pub fn write_run(dir: &Path, report: &RunReport, timings: &Timings) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.ini"), &report.config)?;
    fs::write(dir.join("report.jsonl"), report_jsonl(report)?)?;
    write_csv(&dir.join("samples.csv"), &report.rows)?;
    write_csv(&dir.join("summary.csv"), &report.summary)?;
    #[derive(Serialize)]
    struct Sign {
        a: String,
        b: String,
        fraction: f64,
        wins: usize,
        losses: usize,
        ties: usize,
        p_value: f64,
    }
    let signs: Vec<Sign> = report
        .sign_tests
        .iter()
        .map(|s| Sign {
            a: s.a.to_string(),
            b: s.b.to_string(),
            fraction: s.fraction,
            wins: s.test.wins,
            losses: s.test.losses,
            ties: s.test.ties,
            p_value: s.test.p_value,
        })
        .collect();
    write_csv(&dir.join("sign_tests.csv"), &signs)?;
    write_profiles(dir, &report.profiles)?;
    fs::write(
        dir.join("timings.json"),
        serde_json::to_string_pretty(timings)? + "\n",
    )?;
    Ok(())
}
