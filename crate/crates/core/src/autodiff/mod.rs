//! Reverse-mode differentiation over a small set of dense primitives.

mod tape;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

pub use tape::{Adjoints, ConvGeometry, NodeId, ParamSlots, Tape, Unary};


use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Identity of a function's parameters at a point in time.
///
/// `id` is unique per constructed function; `version` changes whenever its
/// parameters are updated in place (e.g. by an optimizer step).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stamp {
    pub id: u64,
    pub version: u64,
}

impl Stamp {
    pub fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        Stamp {
            id: NEXT.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn bumped(self) -> Self {
        Stamp {
            version: self.version + 1,
            ..self
        }
    }
}

impl fmt::Display for Stamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn#{}@v{}", self.id, self.version)
    }
}

/// A function that can record its computation onto a [`Tape`].
pub trait DifferentiableFunction: Send + Sync {
    /// Per-sample input shape.
    fn input_shape(&self) -> Vec<usize>;

    /// Per-sample output shape.
    fn output_shape(&self) -> Vec<usize>;

    /// Records the function applied to `input` (single sample or a batch
    /// along a leading axis) and returns the output node.
    fn record(&self, tape: &mut Tape, input: NodeId) -> Result<NodeId>;

    fn stamp(&self) -> Stamp;
}

/// The tape of one forward evaluation, with its input and output nodes.
#[derive(Debug, Clone)]
pub struct EvalTape {
    tape: Tape,
    input: NodeId,
    output: NodeId,
    stamp: Stamp,
}

impl EvalTape {
    pub fn output(&self) -> &Tensor {
        self.tape.value(self.output)
    }

    pub fn input(&self) -> &Tensor {
        self.tape.value(self.input)
    }

    pub fn stamp(&self) -> Stamp {
        self.stamp
    }

    pub fn op_count(&self) -> usize {
        self.tape.len()
    }

    pub fn is_fresh_for(&self, f: &dyn DifferentiableFunction) -> bool {
        self.stamp == f.stamp()
    }

    /// Gradient of `⟨seed, output⟩` with respect to the input.
    pub fn vjp(&self, seed: &Tensor) -> Result<Tensor> {
        let adj = self.tape.backward(self.output, seed)?;
        Ok(adj.input_grad(&self.tape, self.input))
    }
}

fn check_shape(expected: &[usize], actual: &Tensor) -> Result<()> {
    if expected != actual.shape() {
        return Err(Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.shape().to_vec(),
        });
    }
    Ok(())
}

/// Evaluates `f` at a single input and keeps the tape for a backward pass.
pub fn forward(f: &dyn DifferentiableFunction, input: &Tensor) -> Result<(Tensor, EvalTape)> {
    check_shape(&f.input_shape(), input)?;
    let mut tape = Tape::new();
    let inode = tape.input(input.clone());
    let onode = f.record(&mut tape, inode)?;
    let output = tape.value(onode).clone();
    if !output.is_finite() {
        return Err(Error::NonFinite {
            context: "function output".into(),
        });
    }
    Ok((
        output,
        EvalTape {
            tape,
            input: inode,
            output: onode,
            stamp: f.stamp(),
        },
    ))
}

/// Evaluates `f` without keeping the tape.
pub fn evaluate(f: &dyn DifferentiableFunction, input: &Tensor) -> Result<Tensor> {
    forward(f, input).map(|(y, _)| y)
}

/// Gradient of the `selector`-th output component with respect to the input.
///
/// `f` must be the function that produced `tape`; a tape recorded against a
/// different function, or against an earlier parameter version, is rejected.
pub fn grad_input(
    f: &dyn DifferentiableFunction,
    tape: &EvalTape,
    selector: usize,
) -> Result<Tensor> {
    if !tape.is_fresh_for(f) {
        return Err(Error::StaleTape {
            recorded: tape.stamp.to_string(),
            current: f.stamp().to_string(),
        });
    }
    let out = tape.output();
    if selector >= out.len() {
        return Err(Error::SelectorOutOfRange {
            selector,
            size: out.len(),
        });
    }
    let mut seed = Tensor::zeros(out.shape().to_vec());
    seed.data_mut()[selector] = 1.0;
    tape.vjp(&seed)
}

/// `J_D(z)ᵀ · cotangent` in one backward pass through the decoder.
pub fn decoder_vjp(
    decoder: &dyn DifferentiableFunction,
    z: &Tensor,
    cotangent: &Tensor,
) -> Result<Tensor> {
    check_shape(&decoder.output_shape(), cotangent)?;
    let (_, tape) = forward(decoder, z)?;
    tape.vjp(cotangent)
}

/// Central-difference gradient of a scalar function.
pub fn finite_diff_gradient<F>(f: F, input: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = input.clone();
    let mut grad = Vec::with_capacity(input.len());
    for i in 0..input.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let hi = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let lo = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.push((hi - lo) / (2.0 * step));
    }
    Tensor::from_raw(input.shape().to_vec(), grad)
}

/// Finite-difference gradient of one output component of `f`.
pub fn finite_diff_selected(
    f: &dyn DifferentiableFunction,
    input: &Tensor,
    selector: usize,
    step: f64,
) -> Result<Tensor> {
    finite_diff_gradient(|x| Ok(evaluate(f, x)?.data()[selector]), input, step)
}

/// Identity function on vectors of a fixed length.
#[derive(Debug, Clone)]
pub struct Identity {
    dim: usize,
    stamp: Stamp,
}

impl Identity {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            stamp: Stamp::fresh(),
        }
    }
}

impl DifferentiableFunction for Identity {
    fn input_shape(&self) -> Vec<usize> {
        vec![self.dim]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.dim]
    }

    fn record(&self, _tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        Ok(input)
    }

    fn stamp(&self) -> Stamp {
        self.stamp
    }
}
