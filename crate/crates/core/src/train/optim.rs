use std::fmt;
use std::str::FromStr;

use crate::cells::Params;
use crate::error::{Error, Result};
use crate::stack::ModelStack;

use super::Grads;

/// What [`normalized_sgd_update`] did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    /// `step_norm` is the measured `‖w_new - w_old‖₂`.
    Applied { grad_norm: f64, step_norm: f64 },
    /// The gradient was exactly zero.
    Skipped,
}

/// `w ← w − lr · g / ‖g‖₂` with the global norm over every tensor.
pub fn normalized_sgd_update(m: &mut ModelStack, g: &Grads, lr: f64) -> Result<UpdateOutcome> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let grad_norm = g.norm();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite {
            context: format!("gradient norm ({})", g.first_non_finite().unwrap_or_default()),
            step: 0,
        });
    }
    if grad_norm == 0.0 {
        log::warn!("zero gradient, update skipped");
        return Ok(UpdateOutcome::Skipped);
    }
    let flat = g.flatten();
    let s = lr / grad_norm;
    let mut off = 0;
    let mut sq = 0.0;
    m.params.visit_mut(&mut |_, d| {
        for (w, gi) in d.iter_mut().zip(&flat[off..]) {
            let old = *w;
            *w -= s * gi;
            let dw = *w - old;
            sq += dw * dw;
        }
        off += d.len();
    });
    Ok(UpdateOutcome::Applied {
        grad_norm,
        step_norm: sq.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// `lr0 / 3^epoch`
    DivideBy3EachEpoch,
    /// Divide by 1.1 whenever validation perplexity fails to improve by 1%.
    AdaptiveDivide1_1,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::DivideBy3EachEpoch => "div3",
            Schedule::AdaptiveDivide1_1 => "adaptive",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "div3" => Ok(Schedule::DivideBy3EachEpoch),
            "adaptive" => Ok(Schedule::AdaptiveDivide1_1),
            _ => Err(Error::invalid(format!("unknown schedule `{s}` (div3|adaptive)"))),
        }
    }
}

/// Learning rate for `epoch` (0-based).
///
/// `val_history` holds the validation perplexities of the epochs finished so
/// far; the adaptive rule compares the latest one with the best before it.
pub fn schedule_lr(schedule: Schedule, lr0: f64, epoch: usize, lr_prev: f64, val_history: &[f64]) -> f64 {
    match schedule {
        Schedule::DivideBy3EachEpoch => lr0 / 3f64.powi(epoch as i32),
        Schedule::AdaptiveDivide1_1 => {
            if epoch == 0 {
                return lr0;
            }
            match val_history.split_last() {
                Some((&latest, before)) if !before.is_empty() => {
                    let best = before.iter().copied().fold(f64::INFINITY, f64::min);
                    if latest > 0.99 * best {
                        lr_prev / 1.1
                    } else {
                        lr_prev
                    }
                }
                _ => lr_prev,
            }
        }
    }
}
