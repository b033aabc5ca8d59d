use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Sequential;
use super::train::AutoencoderReport;
use crate::autodiff::{evaluate, DifferentiableFunction, NodeId, Stamp, Tape};
use crate::error::{Error, Result};
use crate::manifold::AnalyticManifold;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoencoderMode {
    Trained,
    ExactChart,
}

impl fmt::Display for AutoencoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AutoencoderMode::Trained => "trained",
            AutoencoderMode::ExactChart => "exact-chart",
        })
    }
}

/// The chart of an analytic manifold viewed as a decoder.
#[derive(Debug, Clone)]
pub struct ChartDecoder {
    manifold: Arc<dyn AnalyticManifold>,
    stamp: Stamp,
}

impl DifferentiableFunction for ChartDecoder {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.manifold.intrinsic_dim()]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.manifold.ambient_dim()]
    }

    fn record(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        self.manifold.record_chart(tape, input)
    }

    fn stamp(&self) -> Stamp {
        self.stamp
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Trained {
        encoder: Sequential,
        decoder: Sequential,
    },
    Chart(ChartDecoder),
}

/// Encoder/decoder pair. The exact-chart mode wraps an analytic manifold's
/// chart and its inverse, so reconstruction is exact on the manifold.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    kind: Kind,
    report: Option<AutoencoderReport>,
}

/// Samples used for the decoder Jacobian rank check.
const RANK_CHECK_SAMPLES: usize = 50;

impl Autoencoder {
    pub fn trained(encoder: Sequential, decoder: Sequential) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() || decoder.output_dim() != encoder.input_dim()
        {
            return Err(Error::ShapeMismatch {
                expected: vec![encoder.input_dim(), encoder.output_dim()],
                actual: vec![decoder.output_dim(), decoder.input_dim()],
            });
        }
        Ok(Self {
            kind: Kind::Trained { encoder, decoder },
            report: None,
        })
    }

    pub fn mode(&self) -> AutoencoderMode {
        match self.kind {
            Kind::Trained { .. } => AutoencoderMode::Trained,
            Kind::Chart(_) => AutoencoderMode::ExactChart,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder().input_shape()[0]
    }

    pub fn ambient_dim(&self) -> usize {
        self.decoder().output_shape()[0]
    }

    pub fn decoder(&self) -> &dyn DifferentiableFunction {
        match &self.kind {
            Kind::Trained { decoder, .. } => decoder,
            Kind::Chart(c) => c,
        }
    }

    /// The trained networks, if any.
    pub fn networks(&self) -> Option<(&Sequential, &Sequential)> {
        match &self.kind {
            Kind::Trained { encoder, decoder } => Some((encoder, decoder)),
            Kind::Chart(_) => None,
        }
    }

    pub fn manifold(&self) -> Option<&Arc<dyn AnalyticManifold>> {
        match &self.kind {
            Kind::Chart(c) => Some(&c.manifold),
            Kind::Trained { .. } => None,
        }
    }

    pub fn report(&self) -> Option<&AutoencoderReport> {
        self.report.as_ref()
    }

    pub(crate) fn set_report(&mut self, report: AutoencoderReport) {
        self.report = Some(report);
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        match &self.kind {
            Kind::Trained { encoder, .. } => evaluate(encoder, x),
            Kind::Chart(c) => {
                let n = c.manifold.ambient_dim();
                if x.shape() != [n] {
                    return Err(Error::ShapeMismatch {
                        expected: vec![n],
                        actual: x.shape().to_vec(),
                    });
                }
                Ok(Tensor::vector(c.manifold.chart_inverse(x.data())?))
            }
        }
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        match &self.kind {
            Kind::Trained { decoder, .. } => evaluate(decoder, z),
            Kind::Chart(c) => {
                let d = c.manifold.intrinsic_dim();
                if z.shape() != [d] {
                    return Err(Error::ShapeMismatch {
                        expected: vec![d],
                        actual: z.shape().to_vec(),
                    });
                }
                Ok(Tensor::vector(c.manifold.chart(z.data())))
            }
        }
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decode(&self.encode(x)?)
    }

    /// Representative of `z` closest to `reference` (periodic charts only;
    /// otherwise `z` itself).
    pub fn align_latent(&self, reference: &Tensor, z: &Tensor) -> Tensor {
        match &self.kind {
            Kind::Chart(c) => Tensor::vector(c.manifold.align_latent(reference.data(), z.data())),
            Kind::Trained { .. } => z.clone(),
        }
    }
}

/// Numerical rank of a column list, by SVD with a relative cutoff.
pub fn column_rank(columns: &[Vec<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let rows = columns[0].len();
    let m = DMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > max * 1e-10 && s > 0.0).count()
}

/// The perfect autoencoder of an analytic manifold: `E` is the chart
/// inverse (through the nearest-point projection off the manifold) and `D`
/// the chart. Fails if the chart Jacobian loses rank at sampled latents.
pub fn exact_chart_autoencoder(manifold: Arc<dyn AnalyticManifold>) -> Result<Autoencoder> {
    let (n, d) = (manifold.ambient_dim(), manifold.intrinsic_dim());
    if d >= n {
        return Err(Error::invalid(format!(
            "latent dimension {d} must be below the ambient dimension {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..RANK_CHECK_SAMPLES {
        let z = manifold.sample_latent(&mut rng);
        let rank = column_rank(&manifold.chart_jacobian(&z));
        if rank != d {
            return Err(Error::ChartUndefined(format!(
                "chart Jacobian has rank {rank} < {d} at {z:?}"
            )));
        }
    }
    Ok(Autoencoder {
        kind: Kind::Chart(ChartDecoder {
            manifold,
            stamp: Stamp::fresh(),
        }),
        report: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::decoder_vjp;
    use crate::manifold::{EmbeddedCircle, Sphere};

    #[test]
    fn unit_circle_round_trip() {
        let ae = exact_chart_autoencoder(Arc::new(EmbeddedCircle::unit())).unwrap();
        let x = Tensor::vector(vec![0.6, 0.8]);
        let r = ae.reconstruct(&x).unwrap();
        assert!(r.sub(&x).unwrap().max_abs() < 1e-15, "{r:?}");
        assert_eq!(ae.mode(), AutoencoderMode::ExactChart);
        assert_eq!(ae.latent_dim(), 1);
    }

    #[test]
    fn embedded_circle_round_trip_on_manifold() {
        let m: Arc<dyn AnalyticManifold> = Arc::new(EmbeddedCircle::embedded(16, 4));
        let ae = exact_chart_autoencoder(m.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = Tensor::vector(m.sample(&mut rng));
            let r = ae.reconstruct(&x).unwrap();
            assert!(r.sub(&x).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn chart_decoder_vjp_matches_jacobian() {
        let m = Arc::new(Sphere::new(2.0));
        let ae = exact_chart_autoencoder(m.clone()).unwrap();
        let z = [0.7, -1.1];
        let v = Tensor::vector(vec![0.3, -0.5, 0.9]);
        let g = decoder_vjp(ae.decoder(), &Tensor::vector(z.to_vec()), &v).unwrap();
        let jac = m.chart_jacobian(&z);
        for (j, col) in jac.iter().enumerate() {
            let expect: f64 = col.iter().zip(v.data()).map(|(a, b)| a * b).sum();
            assert!((g.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_of_dependent_columns() {
        assert_eq!(column_rank(&[vec![1.0, 2.0], vec![2.0, 4.0]]), 1);
        assert_eq!(column_rank(&[vec![1.0, 0.0], vec![0.0, 1.0]]), 2);
    }
}
