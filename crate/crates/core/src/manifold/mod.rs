//! Analytic ground-truth manifolds with exact charts, tangent spaces, reach
//! and distance, plus the geometric checks run against them.

mod catalog;
mod ops;

use std::fmt;

use rand::RngCore;

pub use catalog::{EmbeddedCircle, Ellipse, LinearSubspace, Sphere};
pub use ops::{
    drift_accumulation, prop1_witness, reach_bound_check, tangent_project, Decomposition,
    DriftReport, Prop1Report, Prop1Verdict, ReachCheck, BOUND_ROUNDING, ON_MANIFOLD_TOL,
};

use crate::autodiff::{NodeId, Tape};
use crate::error::Result;
use crate::tensor::{dot, norm};

/// A smooth embedded submanifold with a known parametrization.
pub trait AnalyticManifold: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn ambient_dim(&self) -> usize;

    fn intrinsic_dim(&self) -> usize;

    /// Exact reach where known, otherwise a numeric lower bound. Flat
    /// manifolds report `f64::INFINITY`.
    fn reach(&self) -> f64;

    /// Chart map from latent coordinates to the ambient space.
    fn chart(&self, z: &[f64]) -> Vec<f64>;

    /// Chart Jacobian at `z`, one column (length `ambient_dim`) per latent coordinate.
    fn chart_jacobian(&self, z: &[f64]) -> Vec<Vec<f64>>;

    /// Records the chart on a tape so it can serve as a differentiable decoder.
    fn record_chart(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId>;

    /// Chart coordinates of the nearest on-manifold point. For off-manifold
    /// inputs this is the chart extension through the projection.
    fn chart_inverse(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Nearest point on the manifold.
    fn project(&self, x: &[f64]) -> Vec<f64>;

    fn distance(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        norm(&crate::tensor::sub(x, &p))
    }

    /// Orthonormal tangent frame at the on-manifold point nearest `x`.
    fn tangent_basis(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let z = self.chart_inverse(x)?;
        Ok(gram_schmidt(self.chart_jacobian(&z)))
    }

    fn sample_latent(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = self.sample_latent(rng);
        self.chart(&z)
    }

    /// Picks the representative of `z` closest to `reference` for periodic
    /// chart coordinates; identity for non-periodic charts.
    fn align_latent(&self, _reference: &[f64], z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

/// Orthonormalizes columns in order, dropping numerically dependent ones.
pub(crate) fn gram_schmidt(columns: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for mut v in columns {
        // two passes for stability
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let n = norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|vi| *vi /= n);
            basis.push(v);
        }
    }
    basis
}

/// Shifts `value` by multiples of `2π` into `(reference − π, reference + π]`.
pub(crate) fn wrap_toward(reference: f64, value: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut d = (value - reference) % TAU;
    if d > PI {
        d -= TAU;
    } else if d <= -PI {
        d += TAU;
    }
    reference + d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_schmidt_orthonormalizes() {
        let b = gram_schmidt(vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]]);
        assert_eq!(b.len(), 2);
        assert!((norm(&b[0]) - 1.0).abs() < 1e-15);
        assert!((norm(&b[1]) - 1.0).abs() < 1e-15);
        assert!(dot(&b[0], &b[1]).abs() < 1e-15);
    }

    #[test]
    fn wrap_picks_shorter_arc() {
        use std::f64::consts::PI;
        let w = wrap_toward(3.0, -3.0);
        assert!((w - (2.0 * PI - 3.0)).abs() < 1e-12);
        assert_eq!(wrap_toward(0.5, 0.25), 0.25);
    }
}
