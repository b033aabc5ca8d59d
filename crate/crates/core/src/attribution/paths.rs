use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trace::{PathTrace, Target};
use crate::autodiff::decoder_vjp;
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::tensor::{norm, Tensor};

/// Latent interpolation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Linear,
    Slerp,
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolation::Linear => "linear",
            Interpolation::Slerp => "slerp",
        })
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Interpolation::Linear),
            "slerp" => Ok(Interpolation::Slerp),
            _ => Err(Error::invalid(format!("unknown interpolation {s:?}"))),
        }
    }
}

/// Latents closer than this to antiparallel have no unique great circle.
pub const SLERP_DEGENERACY_TOL: f64 = 1e-9;

/// Spherical interpolation `sin((1−t)Ω)/sin Ω · a + sin(tΩ)/sin Ω · b`, with
/// `Ω` the angle between `a` and `b`. Nearly parallel inputs reduce to linear
/// interpolation; zero-length or antiparallel inputs are an error.
pub fn slerp(a: &[f64], b: &[f64], t: f64) -> Result<Vec<f64>> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::SlerpDegenerate { angle: f64::NAN });
    }
    let cos = (crate::tensor::dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    let omega = cos.acos();
    if (std::f64::consts::PI - omega) < SLERP_DEGENERACY_TOL {
        return Err(Error::SlerpDegenerate { angle: omega });
    }
    if omega < 1e-12 {
        return Ok(lerp(a, b, t));
    }
    let s = omega.sin();
    let (wa, wb) = (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s);
    Ok(a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect())
}

pub(crate) fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Interpolates with `mode`, falling back to linear (and noting it on the
/// trace) where slerp is undefined.
fn interpolate(
    mode: Interpolation,
    a: &[f64],
    b: &[f64],
    t: f64,
    warned: &mut bool,
    trace_notes: &mut Vec<String>,
) -> Vec<f64> {
    match mode {
        Interpolation::Linear => lerp(a, b, t),
        Interpolation::Slerp => slerp(a, b, t).unwrap_or_else(|e| {
            if !*warned {
                log::warn!("slerp undefined ({e}); falling back to linear interpolation");
                trace_notes.push(format!("slerp fallback to linear: {e}"));
                *warned = true;
            }
            lerp(a, b, t)
        }),
    }
}

/// Number of coordinates the quantile rule must select: `⌈q·d⌉`, at least 1.
pub fn selection_count(fraction: f64, dim: usize) -> usize {
    (((fraction * dim as f64) - 1e-9).ceil() as usize).clamp(1, dim.max(1))
}

/// Indices with `|g_j| ≤ τ`, where `τ` is the `⌈q·d⌉`-th smallest `|g_j|`
/// (nearest-rank quantile). Ties at the threshold are all included.
pub fn quantile_select(g: &[f64], fraction: f64) -> Vec<usize> {
    let mut mags: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let tau = mags[selection_count(fraction, g.len()) - 1];
    g.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tau)
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn check_path_args(x: &Tensor, baseline: &Tensor, steps: usize) -> Result<()> {
    x.same_shape(baseline)?;
    if steps == 0 {
        return Err(Error::invalid("at least one integration step is required"));
    }
    Ok(())
}

fn check_guided_args(fraction: f64, eta: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "selection fraction {fraction} must lie in (0, 1)"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("step size {eta} must lie in (0, 1]")));
    }
    Ok(())
}

fn at_step(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::PathStep {
        step,
        source: Box::new(e),
    }
}

/// `K + 1` copies of `x`: the path used when input and baseline coincide.
fn constant_trace(x: &Tensor, steps: usize) -> PathTrace {
    let mut t = PathTrace::from_states(vec![x.clone(); steps + 1]);
    t.note("input equals baseline; constant path");
    t
}

/// Straight line `x' + (k/K)(x − x')` with exact endpoints.
pub fn ig_path(x: &Tensor, baseline: &Tensor, steps: usize) -> Result<PathTrace> {
    check_path_args(x, baseline, steps)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(baseline.clone());
    for k in 1..steps {
        let t = k as f64 / steps as f64;
        states.push(Tensor::vector(lerp(baseline.data(), x.data(), t)).reshape(x.shape().to_vec())?);
    }
    states.push(x.clone());
    Ok(PathTrace::from_states(states))
}

/// Greedy input-space guided path: at each step the coordinates with the
/// smallest gradient magnitudes (quantile rule) move a fraction `eta` of the
/// way to `x`; the last state is snapped to `x`.
pub fn gig_path(
    x: &Tensor,
    baseline: &Tensor,
    target: &Target<'_>,
    steps: usize,
    fraction: f64,
    eta: f64,
) -> Result<PathTrace> {
    check_path_args(x, baseline, steps)?;
    check_guided_args(fraction, eta)?;
    if x == baseline {
        return Ok(constant_trace(x, steps));
    }
    let mut states = vec![baseline.clone()];
    let mut gradients = Vec::with_capacity(steps);
    let mut selected = Vec::with_capacity(steps.saturating_sub(1));
    let mut cur = baseline.clone();
    for k in 0..steps - 1 {
        let g = target.grad(&cur).map_err(at_step(k))?;
        let s = quantile_select(g.data(), fraction);
        let mut next = cur.clone();
        for &i in &s {
            let c = cur.data()[i];
            next.data_mut()[i] = c + eta * (x.data()[i] - c);
        }
        gradients.push(Some(g));
        selected.push(s);
        states.push(next.clone());
        cur = next;
    }
    // ∇f at x̃⁽ᴷ⁻¹⁾ is left to the integrator
    gradients.push(None);
    states.push(x.clone());
    Ok(PathTrace::from_states(states)
        .with_gradients(target, gradients)
        .with_selected(selected))
}

/// Encodes both endpoints, aligning the input's latent to the baseline's
/// (shorter arc on periodic charts).
fn encode_endpoints(ae: &Autoencoder, x: &Tensor, baseline: &Tensor) -> Result<(Tensor, Tensor)> {
    if x.shape() != [ae.ambient_dim()] {
        return Err(Error::ShapeMismatch {
            expected: vec![ae.ambient_dim()],
            actual: x.shape().to_vec(),
        });
    }
    let z0 = ae.encode(baseline)?;
    let z = ae.align_latent(&z0, &ae.encode(x)?);
    Ok((z0, z))
}

/// Decodes interior latents, adding the corrected endpoints.
fn decode_states(
    ae: &Autoencoder,
    latents: &[Tensor],
    x: &Tensor,
    baseline: &Tensor,
) -> Result<Vec<Tensor>> {
    let k_max = latents.len() - 1;
    let mut states = Vec::with_capacity(latents.len());
    states.push(baseline.clone());
    for (k, z) in latents.iter().enumerate().take(k_max).skip(1) {
        states.push(ae.decode(z).map_err(at_step(k))?);
    }
    states.push(x.clone());
    Ok(states)
}

/// Decoded latent interpolation between `E(x')` and `E(x)`; endpoints are
/// replaced by `x'` and `x`.
pub fn latent_interp_path(
    x: &Tensor,
    baseline: &Tensor,
    ae: &Autoencoder,
    steps: usize,
    mode: Interpolation,
) -> Result<PathTrace> {
    check_path_args(x, baseline, steps)?;
    if x == baseline {
        return Ok(constant_trace(x, steps));
    }
    let (z0, z) = encode_endpoints(ae, x, baseline)?;
    let mut notes = Vec::new();
    let mut warned = false;
    let latents: Vec<Tensor> = (0..=steps)
        .map(|k| {
            let t = k as f64 / steps as f64;
            if k == steps {
                return z.clone();
            }
            Tensor::vector(interpolate(mode, z0.data(), z.data(), t, &mut warned, &mut notes))
        })
        .collect();
    let states = decode_states(ae, &latents, x, baseline)?;
    let mut trace = PathTrace::from_states(states).with_latents(latents);
    for n in notes {
        trace.note(n);
    }
    Ok(trace)
}

/// Latent-guided path: the guided selection runs on `g = J_D(z⁽ᵏ⁾)ᵀ ∇f(D(z⁽ᵏ⁾))`
/// and only selected latent coordinates move, toward `z` (linearly or along
/// the great circle, by fraction `eta`). `z⁽ᴷ⁾` is set to `z` and the decoded
/// endpoints are replaced by `x'` and `x`.
///
/// Interior gradients ∇f(x̃⁽ᵏ⁾), 1 ≤ k ≤ K−2, are kept for the integrator.
/// At `k = 0` the selection used ∇f(D(z')), which differs from ∇f(x') unless
/// the baseline reconstructs exactly, so that entry is left for recomputation.
pub fn magig_path(
    x: &Tensor,
    baseline: &Tensor,
    target: &Target<'_>,
    ae: &Autoencoder,
    steps: usize,
    fraction: f64,
    eta: f64,
    mode: Interpolation,
) -> Result<PathTrace> {
    check_path_args(x, baseline, steps)?;
    check_guided_args(fraction, eta)?;
    if x == baseline {
        return Ok(constant_trace(x, steps));
    }
    let (z0, z) = encode_endpoints(ae, x, baseline)?;
    let mut latents = vec![z0.clone()];
    let mut gradients = Vec::with_capacity(steps);
    let mut selected = Vec::with_capacity(steps.saturating_sub(1));
    let mut notes = Vec::new();
    let mut warned = false;
    let mut cur = z0;
    for k in 0..steps - 1 {
        let decoded = ae.decode(&cur).map_err(at_step(k))?;
        let grad_x = target.grad(&decoded).map_err(at_step(k))?;
        let g = decoder_vjp(ae.decoder(), &cur, &grad_x).map_err(at_step(k))?;
        let s = quantile_select(g.data(), fraction);
        let toward = interpolate(mode, cur.data(), z.data(), eta, &mut warned, &mut notes);
        let mut next = cur.clone();
        for &j in &s {
            next.data_mut()[j] = toward[j];
        }
        gradients.push(if k == 0 { None } else { Some(grad_x) });
        selected.push(s);
        latents.push(next.clone());
        cur = next;
    }
    gradients.push(None);
    latents.push(z);
    let states = decode_states(ae, &latents, x, baseline)?;
    let mut trace = PathTrace::from_states(states)
        .with_latents(latents)
        .with_gradients(target, gradients)
        .with_selected(selected);
    for n in notes {
        trace.note(n);
    }
    Ok(trace)
}
