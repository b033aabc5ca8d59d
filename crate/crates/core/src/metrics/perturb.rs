use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::Target;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How attribution scores are ordered for the perturbation games.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMode {
    /// Raw signed scores, highest first.
    #[default]
    Signed,
    /// Magnitudes `|𝒜ᵢ|`, highest first.
    Absolute,
}

impl fmt::Display for RankingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankingMode::Signed => "signed",
            RankingMode::Absolute => "abs",
        })
    }
}

impl FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(RankingMode::Signed),
            "abs" | "absolute" => Ok(RankingMode::Absolute),
            _ => Err(Error::invalid(format!("unknown ranking mode {s:?}"))),
        }
    }
}

/// Values written into removed coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Per-coordinate dataset mean.
    #[default]
    Mean,
    Zero,
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMode::Mean => "mean",
            BaselineMode::Zero => "zero",
        })
    }
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(BaselineMode::Mean),
            "zero" => Ok(BaselineMode::Zero),
            _ => Err(Error::invalid(format!("unknown baseline mode {s:?}"))),
        }
    }
}

impl BaselineMode {
    /// The fill tensor for inputs shaped like `mean`.
    pub fn fill(self, mean: &Tensor) -> Tensor {
        match self {
            BaselineMode::Mean => mean.clone(),
            BaselineMode::Zero => Tensor::zeros(mean.shape().to_vec()),
        }
    }
}

/// Coordinate indices from most to least salient; ties keep index order.
pub fn salience_order(attr: &Tensor, mode: RankingMode) -> Vec<usize> {
    let key = |v: f64| match mode {
        RankingMode::Signed => v,
        RankingMode::Absolute => v.abs(),
    };
    let mut idx: Vec<usize> = (0..attr.len()).collect();
    idx.sort_by(|&a, &b| key(attr.data()[b]).total_cmp(&key(attr.data()[a])));
    idx
}

/// `⌈level·n⌉`, guarding against representation error in the level.
fn count_for(level: f64, n: usize) -> usize {
    ((level * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

fn check_level(level: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!("perturbation level {level} outside [0, 1]")));
    }
    Ok(())
}

/// `x` with the coordinates at `order[from..to]` replaced by the fill.
fn replace(x: &Tensor, fill: &Tensor, order: &[usize]) -> Result<Tensor> {
    x.same_shape(fill)?;
    let mut out = x.clone();
    for &i in order {
        out.data_mut()[i] = fill.data()[i];
    }
    Ok(out)
}

/// Keeps the top `⌈α·n⌉` coordinates of `x`; the rest take the fill value.
pub fn perturb_insertion(
    x: &Tensor,
    attr: &Tensor,
    alpha: f64,
    fill: &Tensor,
    mode: RankingMode,
) -> Result<Tensor> {
    check_level(alpha)?;
    x.same_shape(attr)?;
    let order = salience_order(attr, mode);
    let keep = count_for(alpha, x.len());
    replace(x, fill, &order[keep..])
}

/// Removes the least salient coordinates: exactly those that
/// `perturb_insertion` at level `1 − δ` does not keep.
pub fn perturb_deletion(
    x: &Tensor,
    attr: &Tensor,
    delta: f64,
    fill: &Tensor,
    mode: RankingMode,
) -> Result<Tensor> {
    check_level(delta)?;
    x.same_shape(attr)?;
    let order = salience_order(attr, mode);
    let keep = count_for(1.0 - delta, x.len());
    replace(x, fill, &order[keep..])
}

/// Removes the `⌈δ·n⌉` most salient coordinates (the deletion game used by
/// the DiffID score).
pub fn delete_salient(
    x: &Tensor,
    attr: &Tensor,
    delta: f64,
    fill: &Tensor,
    mode: RankingMode,
) -> Result<Tensor> {
    check_level(delta)?;
    x.same_shape(attr)?;
    let order = salience_order(attr, mode);
    let removed = count_for(delta, x.len());
    replace(x, fill, &order[..removed])
}

/// 21 uniform levels `0, 0.05, …, 1`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let ok = grid.len() >= 2
        && grid[0] == 0.0
        && grid[grid.len() - 1] == 1.0
        && grid.windows(2).all(|w| w[0] < w[1]);
    if !ok {
        return Err(Error::invalid(
            "perturbation grid must increase strictly from 0 to 1",
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Insertion,
    Deletion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub kind: CurveKind,
    pub levels: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl PerturbationCurve {
    pub fn auc(&self) -> f64 {
        trapezoid(&self.levels, &self.confidences)
    }
}

/// Perturbation game settings shared by the curves and DiffID.
#[derive(Debug, Clone, Copy)]
pub struct Game<'a> {
    pub fill: &'a Tensor,
    pub ranking: RankingMode,
    pub grid: &'a [f64],
}

/// Confidence as the top-α coordinates are revealed.
pub fn insertion_curve(
    x: &Tensor,
    attr: &Tensor,
    target: &Target<'_>,
    game: &Game<'_>,
) -> Result<PerturbationCurve> {
    check_grid(game.grid)?;
    let confidences = game
        .grid
        .iter()
        .map(|&a| target.value(&perturb_insertion(x, attr, a, game.fill, game.ranking)?))
        .collect::<Result<_>>()?;
    Ok(PerturbationCurve {
        kind: CurveKind::Insertion,
        levels: game.grid.to_vec(),
        confidences,
    })
}

/// Confidence as the top-δ coordinates are removed.
pub fn deletion_curve(
    x: &Tensor,
    attr: &Tensor,
    target: &Target<'_>,
    game: &Game<'_>,
) -> Result<PerturbationCurve> {
    check_grid(game.grid)?;
    let confidences = game
        .grid
        .iter()
        .map(|&d| target.value(&delete_salient(x, attr, d, game.fill, game.ranking)?))
        .collect::<Result<_>>()?;
    Ok(PerturbationCurve {
        kind: CurveKind::Deletion,
        levels: game.grid.to_vec(),
        confidences,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffIdResult {
    pub levels: Vec<f64>,
    /// `ψ(δ) = f(Ins(x, 1−δ)) − f(Del(x, δ))`
    pub psi: Vec<f64>,
    pub score: f64,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
}

/// DiffID: insertion of the most salient `1 − δ` fraction against deletion of
/// the most salient `δ` fraction, integrated over `δ` with the trapezoid rule.
/// Both sides evaluate the same input at `δ = 0` (the input) and `δ = 1` (the
/// fill), so `ψ` vanishes there exactly.
pub fn diffid(
    x: &Tensor,
    attr: &Tensor,
    target: &Target<'_>,
    game: &Game<'_>,
) -> Result<DiffIdResult> {
    check_grid(game.grid)?;
    let ins = insertion_curve(x, attr, target, game)?;
    let del = deletion_curve(x, attr, target, game)?;
    let n = game.grid.len();
    let mut psi = Vec::with_capacity(n);
    for (i, &d) in game.grid.iter().enumerate() {
        // insertion at 1 − δ; the grid need not be symmetric, so evaluate it
        let inserted = if game.grid[n - 1 - i] == 1.0 - d {
            ins.confidences[n - 1 - i]
        } else {
            target.value(&perturb_insertion(x, attr, 1.0 - d, game.fill, game.ranking)?)?
        };
        psi.push(inserted - del.confidences[i]);
    }
    Ok(DiffIdResult {
        score: trapezoid(game.grid, &psi),
        levels: game.grid.to_vec(),
        psi,
        insertion_auc: ins.auc(),
        deletion_auc: del.auc(),
    })
}

/// `|Σ𝒜ᵢ − (f(x) − f(x'))|`
pub fn completeness_residual(
    attr: &Tensor,
    target: &Target<'_>,
    x: &Tensor,
    baseline: &Tensor,
) -> Result<f64> {
    Ok((attr.sum() - (target.value(x)? - target.value(baseline)?)).abs())
}
