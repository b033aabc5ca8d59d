//! Per-sample evaluation of attribution methods and paired comparisons.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::attribution::{attribute, AttributionRequest, Method, PathParams, Target};
use crate::error::Result;
use crate::metrics::{diffid, Game, RankingMode};
use crate::models::{predict, Autoencoder, Sequential};
use crate::tensor::Tensor;

/// A method with its path parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub params: PathParams,
}

/// Shared inputs for evaluating attributions on one model.
pub struct EvalContext<'a> {
    pub model: &'a Sequential,
    pub autoencoder: Option<&'a Autoencoder>,
    /// Attribution baseline `x'`.
    pub baseline: &'a Tensor,
    /// Fill values for the perturbation games.
    pub fill: &'a Tensor,
    pub ranking: RankingMode,
    pub grid: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample: usize,
    pub method: Method,
    pub fraction: f64,
    pub target: usize,
    pub diffid: f64,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
    pub residual: f64,
    /// Residual divided by `|f(x) − f(x')|`.
    pub relative_residual: f64,
    pub psi_start: f64,
    pub psi_end: f64,
}

/// Attribution plus metrics for one sample, explaining the predicted class.
pub fn evaluate_sample(
    ctx: &EvalContext<'_>,
    sample: usize,
    x: &Tensor,
    run: &MethodRun,
) -> Result<(SampleResult, Tensor)> {
    let class = predict(ctx.model, x.data())?;
    let target = Target::new(ctx.model, class);
    let map = attribute(&AttributionRequest {
        input: x,
        baseline: ctx.baseline,
        target,
        method: run.method,
        params: run.params,
        autoencoder: ctx.autoencoder,
    })?;
    let game = Game {
        fill: ctx.fill,
        ranking: ctx.ranking,
        grid: ctx.grid,
    };
    let d = diffid(x, &map.values, &target, &game)?;
    let gap = (target.value(x)? - target.value(ctx.baseline)?).abs();
    Ok((
        SampleResult {
            sample,
            method: run.method,
            fraction: run.params.fraction,
            target: class,
            diffid: d.score,
            insertion_auc: d.insertion_auc,
            deletion_auc: d.deletion_auc,
            residual: map.completeness_residual,
            relative_residual: map.completeness_residual / gap,
            psi_start: d.psi[0],
            psi_end: d.psi[d.psi.len() - 1],
        },
        map.values,
    ))
}

/// Evaluates every `(sample, run)` pair in parallel. Results come back in
/// `samples × runs` order regardless of scheduling.
pub fn evaluate_all(
    ctx: &EvalContext<'_>,
    samples: &[(usize, Tensor)],
    runs: &[MethodRun],
) -> Vec<Result<(SampleResult, Tensor)>> {
    let jobs: Vec<(&(usize, Tensor), &MethodRun)> = samples
        .iter()
        .flat_map(|s| runs.iter().map(move |r| (s, r)))
        .collect();
    jobs.par_iter()
        .map(|((id, x), run)| evaluate_sample(ctx, *id, x, run))
        .collect()
}

/// One-sided paired sign test of `a > b`; ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(W ≥ wins)` for `W ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

pub fn paired_sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Greater) => wins += 1,
            Some(std::cmp::Ordering::Less) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = (wins + losses) as u64;
    let p_value = if n == 0 {
        1.0
    } else if wins == 0 {
        1.0
    } else {
        let b = Binomial::new(0.5, n).expect("valid binomial");
        // P(W ≥ w) = 1 − P(W ≤ w − 1)
        b.sf(wins as u64 - 1)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}
