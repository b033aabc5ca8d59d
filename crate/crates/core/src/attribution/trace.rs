use serde::{Deserialize, Serialize};

use crate::autodiff::{forward, grad_input, DifferentiableFunction, Stamp};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar model output: component `class` of `model`.
#[derive(Clone, Copy)]
pub struct Target<'a> {
    pub model: &'a dyn DifferentiableFunction,
    pub class: usize,
}

impl<'a> Target<'a> {
    pub fn new(model: &'a dyn DifferentiableFunction, class: usize) -> Self {
        Self { model, class }
    }

    pub fn value(&self, x: &Tensor) -> Result<f64> {
        let (y, _) = forward(self.model, x)?;
        y.data().get(self.class).copied().ok_or(Error::SelectorOutOfRange {
            selector: self.class,
            size: y.len(),
        })
    }

    /// Value and input gradient from one forward/backward pass.
    pub fn value_and_grad(&self, x: &Tensor) -> Result<(f64, Tensor)> {
        let (y, tape) = forward(self.model, x)?;
        let g = grad_input(self.model, &tape, self.class)?;
        Ok((y.data()[self.class], g))
    }

    pub fn grad(&self, x: &Tensor) -> Result<Tensor> {
        self.value_and_grad(x).map(|(_, g)| g)
    }

    fn key(&self) -> (Stamp, usize) {
        (self.model.stamp(), self.class)
    }
}

/// Discrete integration path `x̃⁽⁰⁾ … x̃⁽ᴷ⁾`, with the latent states, gradients
/// and selections that produced it where applicable.
#[derive(Debug, Clone, Default)]
pub struct PathTrace {
    states: Vec<Tensor>,
    latents: Option<Vec<Tensor>>,
    /// `gradients[k]` is ∇f(x̃⁽ᵏ⁾) for `k < K` when it was computed while
    /// building the path; missing entries are evaluated on demand.
    gradients: Vec<Option<Tensor>>,
    gradient_key: Option<(Stamp, usize)>,
    selected: Vec<Vec<usize>>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub mean_selected: f64,
    pub notes: Vec<String>,
}

impl PathTrace {
    pub fn from_states(states: Vec<Tensor>) -> Self {
        let k = states.len().saturating_sub(1);
        Self {
            states,
            gradients: vec![None; k],
            ..Self::default()
        }
    }

    pub(crate) fn with_latents(mut self, latents: Vec<Tensor>) -> Self {
        self.latents = Some(latents);
        self
    }

    pub(crate) fn with_gradients(
        mut self,
        target: &Target<'_>,
        gradients: Vec<Option<Tensor>>,
    ) -> Self {
        debug_assert_eq!(gradients.len(), self.steps());
        self.gradients = gradients;
        self.gradient_key = Some(target.key());
        self
    }

    pub(crate) fn with_selected(mut self, selected: Vec<Vec<usize>>) -> Self {
        self.selected = selected;
        self
    }

    pub(crate) fn note(&mut self, msg: impl Into<String>) {
        self.notes.push(msg.into());
    }

    pub fn states(&self) -> &[Tensor] {
        &self.states
    }

    pub fn latents(&self) -> Option<&[Tensor]> {
        self.latents.as_deref()
    }

    pub fn gradient(&self, k: usize) -> Option<&Tensor> {
        self.gradients.get(k).and_then(Option::as_ref)
    }

    /// Selected coordinate sets, one per guided step.
    pub fn selected(&self) -> &[Vec<usize>] {
        &self.selected
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// Number of integration steps `K` (states minus one).
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn summary(&self) -> TraceSummary {
        let mean_selected = if self.selected.is_empty() {
            0.0
        } else {
            self.selected.iter().map(Vec::len).sum::<usize>() as f64 / self.selected.len() as f64
        };
        TraceSummary {
            steps: self.steps(),
            mean_selected,
            notes: self.notes.clone(),
        }
    }
}

/// Left-Riemann path integral: `𝒜ᵢ = Σₖ ∂f(x̃⁽ᵏ⁾)/∂xᵢ · (x̃ᵢ⁽ᵏ⁺¹⁾ − x̃ᵢ⁽ᵏ⁾)`.
///
/// Gradients stored in the trace are reused when they were computed for the
/// same model version and class; others are evaluated here.
pub fn riemann_attribute(trace: &PathTrace, target: &Target<'_>) -> Result<Tensor> {
    let states = trace.states();
    let first = states
        .first()
        .ok_or_else(|| Error::invalid("empty path trace"))?;
    let reuse = trace.gradient_key == Some(target.key());
    let mut acc = vec![0.0; first.len()];
    for k in 0..trace.steps() {
        let (a, b) = (&states[k], &states[k + 1]);
        if a == b {
            continue;
        }
        let fresh;
        let g = match trace.gradient(k).filter(|_| reuse) {
            Some(g) => g,
            None => {
                fresh = target.grad(a).map_err(|e| Error::PathStep {
                    step: k,
                    source: Box::new(e),
                })?;
                &fresh
            }
        };
        for (i, v) in acc.iter_mut().enumerate() {
            *v += g.data()[i] * (b.data()[i] - a.data()[i]);
        }
    }
    Tensor::new(first.shape().to_vec(), acc)
}
