use std::io::Write;

use rayon::prelude::*;

use crate::cells::Params;
use crate::corpus::{BatchIter, Corpus};
use crate::error::{Error, Result};
use crate::numkit::Rng;
use crate::stack::{ModelStack, StackState, WindowMasks};

use super::{bptt_window_acc, evaluate, normalized_sgd_update, schedule_lr, Grads, Schedule, UpdateOutcome};

/// How often dropout masks are redrawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskMode {
    /// One mask set per lane and window, shared by all its steps.
    PerWindow,
    /// A fresh mask set at every step.
    PerStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub unroll: usize,
    pub batch: usize,
    pub lr0: f64,
    pub schedule: Schedule,
    /// Dropout between layers.
    pub p: f64,
    /// Dropout on gate inputs.
    pub q: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mask_mode: MaskMode,
    /// Emit an intermediate log row every this many updates (0: per epoch only).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            unroll: 35,
            batch: 20,
            lr0: 5.5,
            schedule: Schedule::DivideBy3EachEpoch,
            p: 0.0,
            q: 0.0,
            epochs: 5,
            seed: 0,
            mask_mode: MaskMode::PerWindow,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.unroll == 0 || self.batch == 0 {
            return Err(Error::invalid("unroll length and batch size must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::invalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.p) || !(0.0..1.0).contains(&self.q) {
            return Err(Error::invalid(format!("dropout rates must lie in [0, 1): p={}, q={}", self.p, self.q)));
        }
        Ok(())
    }
}

/// One line of the training CSV. `val_perp` is only set at epoch ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub train_nll: f64,
    pub val_perp: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    /// Measured `‖Δw‖₂` of every applied update, with the lr it used.
    pub updates: Vec<(f64, f64)>,
    pub skipped: usize,
}

impl TrainLog {
    /// Rows that close an epoch.
    pub fn epochs(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.val_perp.is_some())
    }

    /// Largest `|‖Δw‖₂ − lr|` over all updates.
    pub fn max_step_deviation(&self) -> f64 {
        self.updates
            .iter()
            .map(|(lr, n)| (n - lr).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,step,lr,train_nll,val_perp")?;
        for r in &self.rows {
            let val = r.val_perp.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(w, "{},{},{:.10},{:.6},{}", r.epoch, r.step, r.lr, r.train_nll, val)?;
        }
        Ok(())
    }
}

fn draw_masks(m: &ModelStack, cfg: &TrainConfig, rng: &mut Rng) -> WindowMasks {
    match cfg.mask_mode {
        MaskMode::PerWindow => WindowMasks::Fixed(m.make_masks(rng)),
        MaskMode::PerStep => WindowMasks::PerStep((0..cfg.unroll).map(|_| m.make_masks(rng)).collect()),
    }
}

/// Trains `m` in place with contiguous-batch truncated BPTT.
///
/// Lanes of a minibatch may be processed in parallel on the current rayon
/// pool; their gradients are summed in lane order so the result does not
/// depend on the thread count. Hidden state is reset at each epoch start.
/// With no validation split, `val_perp` is NaN.
pub fn train(m: &mut ModelStack, corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    m.p = cfg.p;
    m.q = cfg.q;
    let dropout = cfg.p > 0.0 || cfg.q > 0.0;
    let mut rng = Rng::derive(cfg.seed, 1);
    let mut log = TrainLog::default();
    let mut val_history: Vec<f64> = Vec::new();
    let mut lr = cfg.lr0;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        lr = schedule_lr(cfg.schedule, cfg.lr0, epoch, lr, &val_history);
        let mut states: Vec<StackState> = (0..cfg.batch).map(|_| m.zero_state()).collect();
        let (mut epoch_nll, mut epoch_windows) = (0.0, 0usize);
        let (mut since_nll, mut since_n) = (0.0, 0usize);

        for window in BatchIter::new(&corpus.train, cfg.batch, cfg.unroll)? {
            let masks: Vec<Option<WindowMasks>> = (0..cfg.batch)
                .map(|_| dropout.then(|| draw_masks(m, cfg, &mut rng)))
                .collect();
            let model: &ModelStack = m;
            let lanes: Vec<Result<(f64, Grads, StackState)>> = (0..cfg.batch)
                .into_par_iter()
                .map(|b| {
                    let mut g = model.params.zeros_like();
                    let (loss, s) = bptt_window_acc(
                        model,
                        &states[b],
                        &window.tokens[b],
                        &window.targets[b],
                        masks[b].as_ref(),
                        &mut g,
                    )?;
                    Ok((loss, g, s))
                })
                .collect();

            let mut total: Option<Grads> = None;
            let mut loss = 0.0;
            for (b, lane) in lanes.into_iter().enumerate() {
                let (l, g, s) = lane?;
                loss += l;
                states[b] = s;
                match &mut total {
                    None => total = Some(g),
                    Some(t) => t.add_scaled(&g, 1.0),
                }
            }
            let mut g = total.expect("batch is non-empty");
            g.scale(1.0 / cfg.batch as f64);
            loss /= cfg.batch as f64;

            match normalized_sgd_update(m, &g, lr)? {
                UpdateOutcome::Applied { step_norm, .. } => log.updates.push((lr, step_norm)),
                UpdateOutcome::Skipped => log.skipped += 1,
            }
            step += 1;
            epoch_nll += loss;
            epoch_windows += 1;
            since_nll += loss;
            since_n += 1;
            if cfg.log_every > 0 && step % cfg.log_every == 0 {
                log.rows.push(LogRow {
                    epoch,
                    step,
                    lr,
                    train_nll: since_nll / since_n as f64,
                    val_perp: None,
                });
                log::debug!("epoch {epoch} step {step} lr {lr:.4} train nll {:.4}", since_nll / since_n as f64);
                since_nll = 0.0;
                since_n = 0;
            }
        }

        let val = if corpus.valid.len() >= 2 {
            evaluate(m, &corpus.valid)?.perplexity
        } else {
            f64::NAN
        };
        val_history.push(val);
        let train_nll = epoch_nll / epoch_windows.max(1) as f64;
        log::info!("epoch {epoch}: lr {lr:.4}, train nll {train_nll:.4}, val perplexity {val:.3}");
        log.rows.push(LogRow {
            epoch,
            step,
            lr,
            train_nll,
            val_perp: Some(val),
        });
    }
    Ok(log)
}
