use serde::Serialize;

use super::AnalyticManifold;
use crate::attribution::PathTrace;
use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor};

/// Tolerance for treating a point as lying on a manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

/// Relative rounding allowance in the reach bound comparison.
pub const BOUND_ROUNDING: f64 = 1e-13;

/// Tolerance used when certifying that a point has left the manifold.
const LEAVES_TOL: f64 = 1e-12;

fn require_on_manifold(m: &dyn AnalyticManifold, x: &[f64]) -> Result<()> {
    let distance = m.distance(x);
    if distance >= ON_MANIFOLD_TOL {
        return Err(Error::OffManifold { distance });
    }
    Ok(())
}

fn check_dim(m: &dyn AnalyticManifold, t: &Tensor) -> Result<()> {
    if t.len() != m.ambient_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![m.ambient_dim()],
            actual: t.shape().to_vec(),
        });
    }
    Ok(())
}

/// Split of a displacement into tangential and normal parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub parallel: Tensor,
    pub perpendicular: Tensor,
}

fn project_onto(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for b in basis {
        let c = dot(b, v);
        for (o, bi) in out.iter_mut().zip(b) {
            *o += c * bi;
        }
    }
    out
}

fn decompose(basis: &[Vec<f64>], dx: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let par = project_onto(basis, dx);
    let perp = dx.iter().zip(&par).map(|(d, p)| d - p).collect();
    (par, perp)
}

/// `Δx_par = T Tᵀ Δx` with `T` the orthonormal tangent frame at `x`, and
/// `Δx_perp = Δx − Δx_par`.
pub fn tangent_project(
    m: &dyn AnalyticManifold,
    x: &Tensor,
    dx: &Tensor,
) -> Result<Decomposition> {
    check_dim(m, x)?;
    x.same_shape(dx)?;
    require_on_manifold(m, x.data())?;
    let basis = m.tangent_basis(x.data())?;
    let (par, perp) = decompose(&basis, dx.data());
    Ok(Decomposition {
        parallel: Tensor::from_raw(dx.shape().to_vec(), par)?,
        perpendicular: Tensor::from_raw(dx.shape().to_vec(), perp)?,
    })
}

/// Outcome of checking `d(y, T_x𝓜) ≤ ‖y − x‖² / (2τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReachCheck {
    pub holds: bool,
    /// Distance from `y` to the tangent plane at `x`.
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
}

pub fn reach_bound_check(m: &dyn AnalyticManifold, x: &Tensor, y: &Tensor) -> Result<ReachCheck> {
    check_dim(m, x)?;
    x.same_shape(y)?;
    require_on_manifold(m, x.data())?;
    require_on_manifold(m, y.data())?;
    let diff = crate::tensor::sub(y.data(), x.data());
    let dist = norm(&diff);
    let reach = m.reach();
    if dist >= reach {
        return Err(Error::OutsideReach {
            distance: dist,
            reach,
        });
    }
    let basis = m.tangent_basis(x.data())?;
    let (_, perp) = decompose(&basis, &diff);
    let lhs = norm(&perp);
    let rhs = dist * dist / (2.0 * reach);
    Ok(ReachCheck {
        // circles and spheres attain the bound for every chord, so allow
        // rounding in the projection (a few ulps of ‖y − x‖)
        holds: lhs <= rhs + BOUND_ROUNDING * dist,
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Prop1Verdict {
    /// The dominance hypothesis holds and the stepped point is certified off the manifold.
    Leaves,
    /// The hypothesis fails; nothing is claimed.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Report {
    pub verdict: Prop1Verdict,
    pub perpendicular_norm: f64,
    /// `‖Δx‖² / τ`.
    pub threshold: f64,
    /// `d(x + Δx, 𝓜)`.
    pub distance_after: f64,
}

/// Tests the off-manifold drift criterion for a single update step from `x`.
///
/// Returns `Leaves` only when `‖Δx_perp‖ > ‖Δx‖²/τ` and the stepped point is
/// measured to be more than `1e-12` from the manifold.
pub fn prop1_witness(m: &dyn AnalyticManifold, x: &Tensor, dx: &Tensor) -> Result<Prop1Report> {
    let step = dx.norm();
    let reach = m.reach();
    if step > reach / 2.0 {
        return Err(Error::StepTooLarge {
            norm: step,
            limit: reach / 2.0,
        });
    }
    let dec = tangent_project(m, x, dx)?;
    let perpendicular_norm = dec.perpendicular.norm();
    let threshold = step * step / reach;
    let moved = x.add(dx)?;
    let distance_after = m.distance(moved.data());
    let verdict = if perpendicular_norm > threshold && distance_after > LEAVES_TOL {
        Prop1Verdict::Leaves
    } else {
        Prop1Verdict::Inconclusive
    };
    Ok(Prop1Report {
        verdict,
        perpendicular_norm,
        threshold,
        distance_after,
    })
}

/// Per-step manifold deviation along a path and the accumulated normal drift.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    /// `d(x^(k), 𝓜)` for every state.
    pub deviations: Vec<f64>,
    /// `‖Δx_perp^(k)‖` for every step, measured against the tangent space at
    /// the projection of `x^(k)`.
    pub perpendicular_norms: Vec<f64>,
    /// Running sum of `perpendicular_norms`.
    pub cumulative: Vec<f64>,
    /// `max(0, d(x^(K), 𝓜) − Σ‖Δx_perp‖)`: the part of the final deviation not
    /// covered by first-order drift.
    pub curvature_slack: f64,
}

impl DriftReport {
    pub fn final_deviation(&self) -> f64 {
        self.deviations.last().copied().unwrap_or(0.0)
    }

    pub fn total_drift(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

pub fn drift_accumulation(m: &dyn AnalyticManifold, trace: &PathTrace) -> Result<DriftReport> {
    let states = trace.states();
    let mut deviations = Vec::with_capacity(states.len());
    let mut perpendicular_norms = Vec::with_capacity(states.len().saturating_sub(1));
    let mut cumulative = Vec::with_capacity(states.len().saturating_sub(1));
    let mut running = 0.0;
    for (k, s) in states.iter().enumerate() {
        check_dim(m, s)?;
        deviations.push(m.distance(s.data()));
        if let Some(next) = states.get(k + 1) {
            let anchor = m.project(s.data());
            let basis = m.tangent_basis(&anchor)?;
            let dx = crate::tensor::sub(next.data(), s.data());
            let (_, perp) = decompose(&basis, &dx);
            let p = norm(&perp);
            running += p;
            perpendicular_norms.push(p);
            cumulative.push(running);
        }
    }
    let final_dev = deviations.last().copied().unwrap_or(0.0);
    Ok(DriftReport {
        deviations,
        perpendicular_norms,
        cumulative,
        curvature_slack: (final_dev - running).max(0.0),
    })
}
