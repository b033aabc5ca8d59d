//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers. `#` starts a comment. Unknown keys are errors.
//!
//! ```text
//! seed = 0
//! out = runs/demo
//!
//! [data]
//! kind = shapes            # shapes | circle | blobs
//! samples = 1200
//! ambient_dim = 16         # circle and blobs only
//! classes = 2              # circle only
//! noise = 0.05
//! separation = 4.0         # blobs only
//!
//! [classifier]
//! hidden = 32              # comma-separated hidden widths
//! activation = tanh
//! head = softmax
//! epochs = 30
//! learning_rate = 0.003
//! batch_size = 32
//! optimizer = adam
//! weight_decay = 0
//! accuracy_floor = 0.9     # or "none"
//!
//! [autoencoder]
//! mode = trained           # trained | exact-chart (circle data only) | none
//! latent_dim = 8
//! hidden = 64
//! activation = tanh
//! epochs = 300
//! learning_rate = 0.003
//! mse_ceiling = 0.01       # or "none"
//! latent_noise = 0
//!
//! [attribution]
//! methods = gxi, ig, gig, eig, magig
//! steps = 200
//! fraction = 0.05
//! eta = 0.2
//! interpolation = linear   # linear | slerp
//! baseline = zero          # zero | mean
//!
//! [evaluation]
//! samples = 100            # held-out samples evaluated
//! fractions = 0.05, 0.1, 0.2
//! ranking = signed         # signed | abs
//! fill = mean              # mean | zero
//! levels = 21
//! ```

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use pathguide_core::attribution::{Method, PathParams};
use pathguide_core::metrics::{BaselineMode, RankingMode};
use pathguide_core::models::{Activation, Head, Optimizer};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Shapes,
    Circle,
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub kind: DataKind,
    pub samples: usize,
    pub ambient_dim: usize,
    pub classes: usize,
    pub noise: f64,
    pub separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    pub accuracy_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AeMode {
    Trained,
    ExactChart,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutoencoderConfig {
    pub mode: AeMode,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub mse_ceiling: Option<f64>,
    pub latent_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionConfig {
    pub methods: Vec<Method>,
    pub params: PathParams,
    pub baseline: BaselineMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationConfig {
    pub samples: usize,
    pub fractions: Vec<f64>,
    pub ranking: RankingMode,
    pub fill: BaselineMode,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub classifier: ClassifierConfig,
    pub autoencoder: AutoencoderConfig,
    pub attribution: AttributionConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            data: DataConfig {
                kind: DataKind::Shapes,
                samples: 1200,
                ambient_dim: 16,
                classes: 2,
                noise: 0.05,
                separation: 4.0,
            },
            classifier: ClassifierConfig {
                hidden: vec![32],
                activation: Activation::Tanh,
                head: Head::Softmax,
                epochs: 30,
                learning_rate: 3e-3,
                batch_size: 32,
                optimizer: Optimizer::Adam,
                weight_decay: 0.0,
                accuracy_floor: Some(0.9),
            },
            autoencoder: AutoencoderConfig {
                mode: AeMode::Trained,
                latent_dim: 8,
                hidden: vec![64],
                activation: Activation::Tanh,
                epochs: 300,
                learning_rate: 3e-3,
                mse_ceiling: Some(1e-2),
                latent_noise: 0.0,
            },
            attribution: AttributionConfig {
                methods: Method::ALL.to_vec(),
                params: PathParams::default(),
                baseline: BaselineMode::Zero,
            },
            evaluation: EvaluationConfig {
                samples: 100,
                fractions: vec![0.05, 0.1, 0.2],
                ranking: RankingMode::Signed,
                fill: BaselineMode::Mean,
                levels: 21,
            },
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| format!("{x:?}"))
}

fn parse_list<T>(v: &str, what: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{what}: {s:?}: {e}")))
        .collect()
}

fn parse_opt(v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    Ok(Some(v.parse()?))
}

fn parse_optimizer(v: &str) -> Result<Optimizer> {
    match v {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::Adam),
        _ => bail!("unknown optimizer {v:?}"),
    }
}

fn optimizer_name(o: Optimizer) -> &'static str {
    match o {
        Optimizer::Sgd => "sgd",
        Optimizer::Adam => "adam",
    }
}

impl ExperimentConfig {
    /// The fixed shapes benchmark: defaults with the given seed.
    pub fn shapes_benchmark(seed: u64) -> Self {
        Self {
            seed,
            out: PathBuf::from(format!("runs/shapes-{seed}")),
            ..Self::default()
        }
    }

    /// Unit circle in `ℝ¹⁶`, two angular sectors, exact-chart autoencoder.
    pub fn circle_benchmark(seed: u64) -> Self {
        let mut cfg = Self {
            seed,
            out: PathBuf::from(format!("runs/circle-{seed}")),
            ..Self::default()
        };
        cfg.data.kind = DataKind::Circle;
        cfg.data.samples = 1000;
        cfg.classifier.epochs = 60;
        cfg.classifier.learning_rate = 1e-2;
        cfg.autoencoder.mode = AeMode::ExactChart;
        cfg.autoencoder.latent_dim = 1;
        cfg
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.data;
        let c = &self.classifier;
        let a = &self.autoencoder;
        let t = &self.attribution;
        let e = &self.evaluation;
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(
            s,
            "kind = {}",
            match d.kind {
                DataKind::Shapes => "shapes",
                DataKind::Circle => "circle",
                DataKind::Blobs => "blobs",
            }
        );
        let _ = writeln!(s, "samples = {}", d.samples);
        let _ = writeln!(s, "ambient_dim = {}", d.ambient_dim);
        let _ = writeln!(s, "classes = {}", d.classes);
        let _ = writeln!(s, "noise = {:?}", d.noise);
        let _ = writeln!(s, "separation = {:?}", d.separation);
        let _ = writeln!(s, "\n[classifier]");
        let _ = writeln!(s, "hidden = {}", list(&c.hidden));
        let _ = writeln!(s, "activation = {}", c.activation);
        let _ = writeln!(s, "head = {}", c.head);
        let _ = writeln!(s, "epochs = {}", c.epochs);
        let _ = writeln!(s, "learning_rate = {:?}", c.learning_rate);
        let _ = writeln!(s, "batch_size = {}", c.batch_size);
        let _ = writeln!(s, "optimizer = {}", optimizer_name(c.optimizer));
        let _ = writeln!(s, "weight_decay = {:?}", c.weight_decay);
        let _ = writeln!(s, "accuracy_floor = {}", opt(c.accuracy_floor));
        let _ = writeln!(s, "\n[autoencoder]");
        let _ = writeln!(
            s,
            "mode = {}",
            match a.mode {
                AeMode::Trained => "trained",
                AeMode::ExactChart => "exact-chart",
                AeMode::None => "none",
            }
        );
        let _ = writeln!(s, "latent_dim = {}", a.latent_dim);
        let _ = writeln!(s, "hidden = {}", list(&a.hidden));
        let _ = writeln!(s, "activation = {}", a.activation);
        let _ = writeln!(s, "epochs = {}", a.epochs);
        let _ = writeln!(s, "learning_rate = {:?}", a.learning_rate);
        let _ = writeln!(s, "mse_ceiling = {}", opt(a.mse_ceiling));
        let _ = writeln!(s, "latent_noise = {:?}", a.latent_noise);
        let _ = writeln!(s, "\n[attribution]");
        let _ = writeln!(s, "methods = {}", list(&t.methods));
        let _ = writeln!(s, "steps = {}", t.params.steps);
        let _ = writeln!(s, "fraction = {:?}", t.params.fraction);
        let _ = writeln!(s, "eta = {:?}", t.params.eta);
        let _ = writeln!(s, "interpolation = {}", t.params.interpolation);
        let _ = writeln!(s, "baseline = {}", t.baseline);
        let _ = writeln!(s, "\n[evaluation]");
        let _ = writeln!(s, "samples = {}", e.samples);
        let fr: Vec<String> = e.fractions.iter().map(|f| format!("{f:?}")).collect();
        let _ = writeln!(s, "fractions = {}", fr.join(", "));
        let _ = writeln!(s, "ranking = {}", e.ranking);
        let _ = writeln!(s, "fill = {}", e.fill);
        let _ = writeln!(s, "levels = {}", e.levels);
        s
    }

    /// Parses a config, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", no + 1))?;
            cfg.set(&section, key.trim(), value.trim())
                .with_context(|| format!("line {}: [{section}] {}", no + 1, key.trim()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        match (section, key) {
            ("", "seed") => self.seed = v.parse()?,
            ("", "out") => self.out = PathBuf::from(v),
            ("data", "kind") => {
                self.data.kind = match v {
                    "shapes" => DataKind::Shapes,
                    "circle" => DataKind::Circle,
                    "blobs" => DataKind::Blobs,
                    _ => bail!("unknown data kind {v:?}"),
                }
            }
            ("data", "samples") => self.data.samples = v.parse()?,
            ("data", "ambient_dim") => self.data.ambient_dim = v.parse()?,
            ("data", "classes") => self.data.classes = v.parse()?,
            ("data", "noise") => self.data.noise = v.parse()?,
            ("data", "separation") => self.data.separation = v.parse()?,
            ("classifier", "hidden") => self.classifier.hidden = parse_list(v, "hidden")?,
            ("classifier", "activation") => self.classifier.activation = v.parse()?,
            ("classifier", "head") => self.classifier.head = v.parse()?,
            ("classifier", "epochs") => self.classifier.epochs = v.parse()?,
            ("classifier", "learning_rate") => self.classifier.learning_rate = v.parse()?,
            ("classifier", "batch_size") => self.classifier.batch_size = v.parse()?,
            ("classifier", "optimizer") => self.classifier.optimizer = parse_optimizer(v)?,
            ("classifier", "weight_decay") => self.classifier.weight_decay = v.parse()?,
            ("classifier", "accuracy_floor") => self.classifier.accuracy_floor = parse_opt(v)?,
            ("autoencoder", "mode") => {
                self.autoencoder.mode = match v {
                    "trained" => AeMode::Trained,
                    "exact-chart" => AeMode::ExactChart,
                    "none" => AeMode::None,
                    _ => bail!("unknown autoencoder mode {v:?}"),
                }
            }
            ("autoencoder", "latent_dim") => self.autoencoder.latent_dim = v.parse()?,
            ("autoencoder", "hidden") => self.autoencoder.hidden = parse_list(v, "hidden")?,
            ("autoencoder", "activation") => self.autoencoder.activation = v.parse()?,
            ("autoencoder", "epochs") => self.autoencoder.epochs = v.parse()?,
            ("autoencoder", "learning_rate") => self.autoencoder.learning_rate = v.parse()?,
            ("autoencoder", "mse_ceiling") => self.autoencoder.mse_ceiling = parse_opt(v)?,
            ("autoencoder", "latent_noise") => self.autoencoder.latent_noise = v.parse()?,
            ("attribution", "methods") => self.attribution.methods = parse_list(v, "methods")?,
            ("attribution", "steps") => self.attribution.params.steps = v.parse()?,
            ("attribution", "fraction") => self.attribution.params.fraction = v.parse()?,
            ("attribution", "eta") => self.attribution.params.eta = v.parse()?,
            ("attribution", "interpolation") => {
                self.attribution.params.interpolation = v.parse()?
            }
            ("attribution", "baseline") => self.attribution.baseline = v.parse()?,
            ("evaluation", "samples") => self.evaluation.samples = v.parse()?,
            ("evaluation", "fractions") => {
                self.evaluation.fractions = parse_list(v, "fractions")?
            }
            ("evaluation", "ranking") => self.evaluation.ranking = v.parse()?,
            ("evaluation", "fill") => self.evaluation.fill = v.parse()?,
            ("evaluation", "levels") => self.evaluation.levels = v.parse()?,
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.samples == 0 {
            bail!("[data] samples must be positive");
        }
        if self.attribution.methods.is_empty() {
            bail!("[attribution] methods must not be empty");
        }
        if self.evaluation.levels < 2 {
            bail!("[evaluation] levels must be at least 2");
        }
        let latent = self.attribution.methods.iter().any(|m| m.needs_autoencoder());
        if latent && self.autoencoder.mode == AeMode::None {
            bail!("latent methods (eig, magig) need an autoencoder");
        }
        if self.autoencoder.mode == AeMode::ExactChart && self.data.kind != DataKind::Circle {
            bail!("exact-chart autoencoders are available for circle data only");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.evaluation.levels - 1;
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathguide_core::attribution::Interpolation;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 42;
        cfg.classifier.accuracy_floor = None;
        cfg.attribution.methods = vec![Method::Ig, Method::Magig];
        cfg.attribution.params.interpolation = Interpolation::Slerp;
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), cfg.to_text());
    }

    #[test]
    fn comments_sections_and_errors() {
        let cfg = ExperimentConfig::parse(
            "seed = 3 # trailing\n[attribution]\nmethods = ig, gig\n\n[evaluation]\nlevels = 11\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.attribution.methods, vec![Method::Ig, Method::Gig]);
        assert_eq!(cfg.grid().len(), 11);
        assert!(ExperimentConfig::parse("[data]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("[attribution]\nmethods = \n").is_err());
        assert!(ExperimentConfig::parse("[data]\nsamples = 0\n").is_err());
    }
}
