//! Single-step recurrences for the chaos-free cell and the LSTM/GRU baselines.
//!
//! Each cell exposes a plain step function of `(params, previous state,
//! input)` plus a cached forward/backward pair used by the trainer. The
//! cached variant separates the copies of the previous state and of the input
//! that reach the sigmoid gates from the copies that reach the state update,
//! so that the language-model stack can apply distinct dropout masks to them.
//!
//! Gate pre-activations are accumulated in the fixed order
//! `W·h + V·x + b`, one pass per gate.

pub mod cfn;
pub mod gru;
pub mod lstm;

pub use cfn::{cfn_step, CfnCache, CfnParams};
pub use gru::{gru_step, GruCache, GruParams};
pub use lstm::{lstm_step, LstmCache, LstmParams, LstmState};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Vector};

/// Values of the retention and input gates at one step.
///
/// For the CFN these are θ and η. For the LSTM `theta` holds the forget gate
/// and `eta` the input gate; for the GRU `theta` holds `1 - z` and `eta`
/// holds `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTrace {
    pub theta: Vector,
    pub eta: Vector,
}

/// The four views of a step's inputs.
///
/// `h_prev`/`x` feed the state update, `h_gate`/`x_gate` feed the sigmoid
/// gates. Without dropout they coincide.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    pub h_prev: &'a [f64],
    pub h_gate: &'a [f64],
    pub x: &'a [f64],
    pub x_gate: &'a [f64],
}

impl<'a> StepInput<'a> {
    pub fn plain(h_prev: &'a [f64], x: &'a [f64]) -> Self {
        StepInput {
            h_prev,
            h_gate: h_prev,
            x,
            x_gate: x,
        }
    }
}

/// Gradients with respect to each view of [`StepInput`].
#[derive(Clone, Debug)]
pub struct StepInputGrads {
    pub h_prev: Vector,
    pub h_gate: Vector,
    pub x: Vector,
    pub x_gate: Vector,
}

impl StepInputGrads {
    fn zeros(hidden: usize, input: usize) -> Self {
        StepInputGrads {
            h_prev: Vector::zeros(hidden),
            h_gate: Vector::zeros(hidden),
            x: Vector::zeros(input),
            x_gate: Vector::zeros(input),
        }
    }

    /// Total gradient w.r.t. the previous state when both views are the same vector.
    pub fn h_total(&self) -> Vector {
        self.h_prev.iter().zip(self.h_gate.iter()).map(|(a, b)| a + b).collect()
    }

    /// Total gradient w.r.t. the input when both views are the same vector.
    pub fn x_total(&self) -> Vector {
        self.x.iter().zip(self.x_gate.iter()).map(|(a, b)| a + b).collect()
    }
}

/// Uniform access to a set of named parameter tensors.
///
/// Vectors are reported with shape `1 x n`.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));
    /// Same shapes, all zeros. Used as a gradient accumulator.
    fn zeros_like(&self) -> Self;

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, r, c, _| n += r * c);
        n
    }
}

pub(crate) fn check_matrix(
    name: &'static str,
    m: &Matrix,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(
            name,
            format!("{}x{}", m.rows(), m.cols()),
            format!("expected {rows}x{cols}"),
        ));
    }
    Ok(())
}

pub(crate) fn check_len(name: &'static str, v: &[f64], len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::shape(
            name,
            format!("length {}", v.len()),
            format!("expected {len}"),
        ));
    }
    Ok(())
}

/// σ applied in place.
#[inline]
pub(crate) fn sigmoid_in_place(v: &mut [f64]) {
    for x in v {
        *x = crate::numkit::sigmoid_scalar(*x);
    }
}

#[inline]
pub(crate) fn tanh_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// `pre = W h + V x + b`, in that order.
#[inline]
pub(crate) fn preactivation(w: &Matrix, h: &[f64], v: &Matrix, x: &[f64], b: Option<&[f64]>) -> Vector {
    let mut out = Vector::zeros(w.rows());
    w.matvec_into(h, &mut out);
    v.matvec_acc(x, &mut out);
    if let Some(b) = b {
        for (o, bi) in out.iter_mut().zip(b) {
            *o += bi;
        }
    }
    out
}

/// Backpropagates `d_pre` through `pre = W h + V x + b`.
#[inline]
pub(crate) fn backprop_affine(
    d_pre: &[f64],
    w: &Matrix,
    h: &[f64],
    v: &Matrix,
    x: &[f64],
    gw: &mut Matrix,
    gv: &mut Matrix,
    gb: Option<&mut [f64]>,
    dh: &mut [f64],
    dx: &mut [f64],
) {
    gw.outer_acc(d_pre, h);
    gv.outer_acc(d_pre, x);
    if let Some(gb) = gb {
        for (g, d) in gb.iter_mut().zip(d_pre) {
            *g += d;
        }
    }
    w.matvec_t_acc(d_pre, dh);
    v.matvec_t_acc(d_pre, dx);
}
