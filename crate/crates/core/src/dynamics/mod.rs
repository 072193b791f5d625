//! Autonomous maps induced by recurrent cells with their input switched off,
//! and experiments on their orbits.

mod cfn_bounds;
mod chaos;
pub mod csv;
mod suites;

pub use cfn_bounds::{
    impulse_response, random_cfn, run_cfn, verify_lemma1, verify_lemma1_sweep, verify_multilayer_decay,
    verify_zero_attractor, CfnTrace, DecayCertificate, LayerDecay, MultilayerReport, ZeroAttractorConfig,
    ZeroAttractorReport,
};
pub use chaos::{
    attractor_sample, divergence_experiment, lyapunov_estimate, paired_trajectories, recurrently_active, Cloud,
    DivergenceTrace,
};

pub use suites::{lemma1_instance, lemma1_suite, lemma2_suite, Lemma1Config, Lemma1Summary, Lemma2Config, Lemma2Summary};

use crate::cells::{self, CfnParams, GruParams, LstmParams, StepInput};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Vector};
use crate::stack::{CellKind, ModelStack, StackState};

/// A map `u ↦ Φ(u)` obtained by zeroing every input term of a network.
#[derive(Clone, Debug, PartialEq)]
pub enum InducedMap {
    /// State `h`.
    Cfn(CfnParams),
    /// State `(h, c)`.
    Lstm(LstmParams),
    /// State `h`.
    Gru(GruParams),
    /// `(x, y) ↦ (y + 1 − a x², b x)`
    Henon { a: f64, b: f64 },
    /// Flattened [`StackState`]; the token input is replaced by a zero vector.
    Stack(ModelStack),
}

impl InducedMap {
    /// Two-unit LSTM with zero biases whose induced map is chaotic.
    pub fn paper_lstm() -> Self {
        InducedMap::Lstm(LstmParams::autonomous(
            Matrix::from_rows(&[[-1.0, -4.0], [-3.0, -2.0]]),
            Matrix::from_rows(&[[-2.0, 6.0], [0.0, -6.0]]),
            Matrix::from_rows(&[[4.0, 1.0], [-9.0, -7.0]]),
            Matrix::from_rows(&[[-1.0, -6.0], [6.0, -9.0]]),
        ))
    }

    /// Two-unit GRU with zero biases whose induced map is chaotic.
    pub fn paper_gru() -> Self {
        InducedMap::Gru(GruParams::autonomous(
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]),
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]),
            Matrix::from_rows(&[[-5.0, -8.0], [8.0, 5.0]]),
        ))
    }

    pub fn henon() -> Self {
        InducedMap::Henon { a: 1.4, b: 0.3 }
    }

    /// The input-free map of a whole language model.
    pub fn from_stack(m: &ModelStack) -> Self {
        InducedMap::Stack(m.clone())
    }

    pub fn name(&self) -> &'static str {
        match self {
            InducedMap::Cfn(_) => "cfn",
            InducedMap::Lstm(_) => "lstm",
            InducedMap::Gru(_) => "gru",
            InducedMap::Henon { .. } => "henon",
            InducedMap::Stack(_) => "stack",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InducedMap::Cfn(p) => p.hidden(),
            InducedMap::Lstm(p) => 2 * p.hidden(),
            InducedMap::Gru(p) => p.hidden(),
            InducedMap::Henon { .. } => 2,
            InducedMap::Stack(m) => {
                let per = if m.kind == CellKind::Lstm { 2 } else { 1 };
                per * m.depth() * m.hidden()
            }
        }
    }

    /// Hidden-state coordinates of `u` (all of it for the Hénon map).
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        match self {
            InducedMap::Lstm(p) => u[..p.hidden()].to_vec(),
            InducedMap::Stack(m) if m.kind == CellKind::Lstm => {
                let n = m.hidden();
                u.chunks(2 * n).flat_map(|c| c[..n].to_vec()).collect()
            }
            _ => u.to_vec(),
        }
    }

    /// One application of the map. Panics if `u` has the wrong length.
    pub fn apply(&self, u: &[f64]) -> Vector {
        assert_eq!(u.len(), self.dim(), "state length");
        match self {
            InducedMap::Cfn(p) => p.induced(u),
            InducedMap::Lstm(p) => {
                let n = p.hidden();
                let x = Vector::zeros(p.input());
                let c = cells::lstm::forward(p, &u[n..], StepInput::plain(&u[..n], &x));
                c.h.iter().chain(c.c.iter()).copied().collect()
            }
            InducedMap::Gru(p) => {
                let x = Vector::zeros(p.input());
                cells::gru::forward(p, StepInput::plain(u, &x)).h
            }
            InducedMap::Henon { a, b } => vec![u[1] + 1.0 - a * u[0] * u[0], b * u[0]].into(),
            InducedMap::Stack(m) => {
                let s = StackState::from_flat(m.kind, m.depth(), m.hidden(), u);
                m.step_zero_input(&s).to_flat()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InducedMap::Cfn(p) => p.validate(),
            InducedMap::Lstm(p) => p.validate(),
            InducedMap::Gru(p) => p.validate(),
            InducedMap::Henon { a, b } if a.is_finite() && b.is_finite() => Ok(()),
            InducedMap::Henon { .. } => Err(Error::invalid("Hénon parameters must be finite")),
            InducedMap::Stack(_) => Ok(()),
        }
    }

    pub(crate) fn check_state(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::shape("induced map state", u.len(), self.dim()));
        }
        Ok(())
    }
}

/// Stored states of a forward orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub map: &'static str,
    pub u0: Vector,
    /// Times of the stored states.
    pub times: Vec<usize>,
    pub states: Vec<Vector>,
    pub t_start: usize,
    pub t_end: usize,
}

/// Iterates `steps` times from `u0`, storing `u_t` for
/// `t ∈ {keep_from, keep_from + stride, …} ∩ [0, steps]`.
pub fn iterate(map: &InducedMap, u0: &[f64], steps: usize, keep_from: usize, stride: usize) -> Result<Orbit> {
    if keep_from > steps || stride == 0 {
        return Err(Error::invalid(format!(
            "need keep_from <= steps and stride >= 1 (steps {steps}, keep_from {keep_from}, stride {stride})"
        )));
    }
    map.check_state(u0)?;
    let mut u = Vector::from(u0);
    let mut orbit = Orbit {
        map: map.name(),
        u0: u.clone(),
        times: Vec::new(),
        states: Vec::new(),
        t_start: keep_from,
        t_end: steps,
    };
    for t in 0..=steps {
        if t > 0 {
            u = map.apply(&u);
            if !u.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("orbit of the {} map", map.name()),
                    step: t,
                });
            }
        }
        if t >= keep_from && (t - keep_from) % stride == 0 {
            orbit.times.push(t);
            orbit.states.push(u.clone());
        }
    }
    Ok(orbit)
}
