//! Path attribution methods: G×I, straight-line IG, input-space guided IG,
//! latent-interpolation IG and the latent-guided path.

mod paths;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use paths::{
    gig_path, ig_path, latent_interp_path, magig_path, quantile_select, selection_count, slerp,
    Interpolation, SLERP_DEGENERACY_TOL,
};
pub use trace::{riemann_attribute, PathTrace, Target, TraceSummary};

use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::tensor::Tensor;

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_FRACTION: f64 = 0.05;
pub const DEFAULT_ETA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gxi,
    Ig,
    Gig,
    Eig,
    Magig,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gxi, Method::Ig, Method::Gig, Method::Eig, Method::Magig];

    pub fn needs_autoencoder(self) -> bool {
        matches!(self, Method::Eig | Method::Magig)
    }

    /// Methods whose path depends on the selection fraction.
    pub fn is_guided(self) -> bool {
        matches!(self, Method::Gig | Method::Magig)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gxi => "gxi",
            Method::Ig => "ig",
            Method::Gig => "gig",
            Method::Eig => "eig",
            Method::Magig => "magig",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Path parameters shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub steps: usize,
    pub fraction: f64,
    pub eta: f64,
    pub interpolation: Interpolation,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            fraction: DEFAULT_FRACTION,
            eta: DEFAULT_ETA,
            interpolation: Interpolation::Linear,
        }
    }
}

pub struct AttributionRequest<'a> {
    pub input: &'a Tensor,
    pub baseline: &'a Tensor,
    pub target: Target<'a>,
    pub method: Method,
    pub params: PathParams,
    pub autoencoder: Option<&'a Autoencoder>,
}

#[derive(Debug, Clone)]
pub struct AttributionMap {
    pub values: Tensor,
    pub method: Method,
    pub params: PathParams,
    /// `|Σ𝒜ᵢ − (f(x) − f(x'))|`
    pub completeness_residual: f64,
    pub trace: Option<PathTrace>,
}

/// `∇f(x) ⊙ x`.
pub fn gxi(x: &Tensor, target: &Target<'_>) -> Result<Tensor> {
    target.grad(x)?.mul(x)
}

/// Builds the path for `method` (none for G×I).
pub fn build_path(req: &AttributionRequest<'_>) -> Result<Option<PathTrace>> {
    let p = &req.params;
    let (x, b) = (req.input, req.baseline);
    let ae = || {
        req.autoencoder.ok_or_else(|| {
            Error::invalid(format!("method {} needs an autoencoder", req.method))
        })
    };
    Ok(Some(match req.method {
        Method::Gxi => return Ok(None),
        Method::Ig => ig_path(x, b, p.steps)?,
        Method::Gig => gig_path(x, b, &req.target, p.steps, p.fraction, p.eta)?,
        Method::Eig => latent_interp_path(x, b, ae()?, p.steps, p.interpolation)?,
        Method::Magig => magig_path(
            x,
            b,
            &req.target,
            ae()?,
            p.steps,
            p.fraction,
            p.eta,
            p.interpolation,
        )?,
    }))
}

/// Runs one attribution method.
///
/// G×I is taken relative to the baseline, `∇f(x) ⊙ (x − x')`, which is the
/// usual `∇f(x) ⊙ x` under the default zero baseline and vanishes when the
/// input equals the baseline.
pub fn attribute(req: &AttributionRequest<'_>) -> Result<AttributionMap> {
    req.input.same_shape(req.baseline)?;
    let trace = build_path(req)?;
    let values = match &trace {
        Some(t) => riemann_attribute(t, &req.target)?,
        None => req.target.grad(req.input)?.mul(&req.input.sub(req.baseline)?)?,
    };
    let gap = req.target.value(req.input)? - req.target.value(req.baseline)?;
    Ok(AttributionMap {
        completeness_residual: (values.sum() - gap).abs(),
        values,
        method: req.method,
        params: req.params,
        trace,
    })
}

#[cfg(test)]
mod tests;
