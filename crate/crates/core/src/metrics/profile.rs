use std::path::Path;

use serde::{Deserialize, Serialize};

use super::perturb::trapezoid;
use crate::attribution::{PathTrace, Target};
use crate::error::{Error, Result};
use crate::manifold::AnalyticManifold;
use crate::models::Autoencoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// Exact distance to an analytic manifold.
    Distance,
    /// Target-class confidence.
    Confidence,
    /// `‖x̃ − D(E(x̃))‖`, a proxy for trained autoencoders (not a paper metric).
    Reconstruction,
}

/// A per-state series over the normalized path index `α = k/K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProfile {
    pub kind: ProfileKind,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoidal integral over `α ∈ [0, 1]`.
    pub auc: f64,
    /// Trapezoidal integral over the interior states only (`1 ≤ k ≤ K−1`),
    /// i.e. excluding the corrected endpoints; zero when `K < 3`.
    pub interior_auc: f64,
}

impl DeviationProfile {
    fn from_values(kind: ProfileKind, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("profile of an empty trace"));
        }
        let k = values.len() - 1;
        let alphas: Vec<f64> = if k == 0 {
            vec![0.0]
        } else {
            (0..=k).map(|i| i as f64 / k as f64).collect()
        };
        let auc = trapezoid(&alphas, &values);
        let interior_auc = if k >= 2 {
            trapezoid(&alphas[1..k], &values[1..k])
        } else {
            0.0
        };
        Ok(Self {
            kind,
            alphas,
            values,
            auc,
            interior_auc,
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum over interior states; zero for paths without any.
    pub fn interior_max(&self) -> f64 {
        let k = self.values.len().saturating_sub(1);
        if k < 2 {
            return 0.0;
        }
        self.values[1..k].iter().cloned().fold(0.0, f64::max)
    }
}

pub fn distance_profile(trace: &PathTrace, m: &dyn AnalyticManifold) -> Result<DeviationProfile> {
    let values = trace.states().iter().map(|s| m.distance(s.data())).collect();
    DeviationProfile::from_values(ProfileKind::Distance, values)
}

pub fn confidence_profile(trace: &PathTrace, target: &Target<'_>) -> Result<DeviationProfile> {
    let values = trace
        .states()
        .iter()
        .map(|s| target.value(s))
        .collect::<Result<_>>()?;
    DeviationProfile::from_values(ProfileKind::Confidence, values)
}

pub fn reconstruction_profile(trace: &PathTrace, ae: &Autoencoder) -> Result<DeviationProfile> {
    let values = trace
        .states()
        .iter()
        .map(|s| Ok(ae.reconstruct(s)?.sub(s)?.norm()))
        .collect::<Result<_>>()?;
    DeviationProfile::from_values(ProfileKind::Reconstruction, values)
}

/// Per-α mean and standard deviation over samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileAggregate {
    pub kind: ProfileKind,
    pub alphas: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub interior_auc_mean: f64,
    pub interior_auc_std: f64,
    pub samples: usize,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn aggregate_profiles(profiles: &[DeviationProfile]) -> Result<ProfileAggregate> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::invalid("no profiles to aggregate"))?;
    if profiles
        .iter()
        .any(|p| p.kind != first.kind || p.values.len() != first.values.len())
    {
        return Err(Error::invalid("profiles differ in kind or length"));
    }
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for i in 0..first.values.len() {
        let col: Vec<f64> = profiles.iter().map(|p| p.values[i]).collect();
        let (m, s) = mean_std(&col);
        mean.push(m);
        std.push(s);
    }
    let aucs: Vec<f64> = profiles.iter().map(|p| p.auc).collect();
    let inner: Vec<f64> = profiles.iter().map(|p| p.interior_auc).collect();
    let (auc_mean, auc_std) = mean_std(&aucs);
    let (interior_auc_mean, interior_auc_std) = mean_std(&inner);
    Ok(ProfileAggregate {
        kind: first.kind,
        alphas: first.alphas.clone(),
        mean,
        std,
        auc_mean,
        auc_std,
        interior_auc_mean,
        interior_auc_std,
        samples: profiles.len(),
    })
}

/// One row of a curve/profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub level_or_alpha: f64,
    pub value: f64,
    pub series_id: String,
    pub sample_id: String,
}

impl SeriesRow {
    pub fn expand(
        levels: &[f64],
        values: &[f64],
        series_id: &str,
        sample_id: &str,
    ) -> Vec<SeriesRow> {
        levels
            .iter()
            .zip(values)
            .map(|(&l, &v)| SeriesRow {
                level_or_alpha: l,
                value: v,
                series_id: series_id.into(),
                sample_id: sample_id.into(),
            })
            .collect()
    }
}

pub fn write_series_csv(path: impl AsRef<Path>, rows: &[SeriesRow]) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Dataset(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::ig_path;
    use crate::manifold::EmbeddedCircle;
    use crate::models::{Head, Layer, Sequential};
    use crate::tensor::Tensor;

    #[test]
    fn straight_line_from_origin_to_unit_circle() {
        let c = EmbeddedCircle::embedded(16, 2);
        let x = Tensor::vector(c.chart(&[0.9]));
        let tr = ig_path(&x, &Tensor::zeros(vec![16]), 100).unwrap();
        let p = distance_profile(&tr, &c).unwrap();
        for (a, d) in p.alphas.iter().zip(&p.values) {
            assert!((d - (1.0 - a)).abs() < 1e-12);
        }
        assert!((p.auc - 0.5).abs() < 1e-12);
        assert_eq!(p.values.len(), 101);
    }

    #[test]
    fn one_step_path_profile() {
        let c = EmbeddedCircle::unit();
        let tr = ig_path(&Tensor::vector(vec![1.0, 0.0]), &Tensor::zeros(vec![2]), 1).unwrap();
        let p = distance_profile(&tr, &c).unwrap();
        assert_eq!(p.values.len(), 2);
        assert_eq!(p.auc, 0.5 * (p.values[0] + p.values[1]));
        assert_eq!(p.interior_auc, 0.0);
    }

    #[test]
    fn confidence_of_single_point_is_constant() {
        let f = Sequential::new(
            2,
            vec![Layer::dense(vec![1.0, 2.0], vec![0.5]).unwrap()],
            Head::Linear,
        )
        .unwrap();
        let x = Tensor::vector(vec![0.2, 0.3]);
        let tr = PathTrace::from_states(vec![x]);
        let p = confidence_profile(&tr, &Target::new(&f, 0)).unwrap();
        assert_eq!(p.values, vec![1.3]);
        assert_eq!(p.auc, 0.0);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let a = DeviationProfile::from_values(ProfileKind::Distance, vec![0.0, 1.0, 0.0]).unwrap();
        let b = DeviationProfile::from_values(ProfileKind::Distance, vec![0.0, 3.0, 0.0]).unwrap();
        let g = aggregate_profiles(&[a, b]).unwrap();
        assert_eq!(g.mean, vec![0.0, 2.0, 0.0]);
        assert!((g.std[1] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.samples, 2);
    }
}
