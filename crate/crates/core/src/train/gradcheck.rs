//! Central finite-difference check of the analytic BPTT gradient.

use crate::cells::Params;
use crate::error::Result;
use crate::numkit::Rng;
use crate::stack::{init_stack, CellKind, ModelStack, StackState, WindowMasks};

use super::{bptt_window, window_loss};

/// Denominator floor of the relative error. Central differences at
/// `ε = 1e-5` carry about `1e-10` of absolute roundoff, so partials far
/// below this floor are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub kind: CellKind,
    pub depth: usize,
    pub hidden: usize,
    pub vocab: usize,
    pub unroll: usize,
    pub eps: f64,
    pub seed: u64,
    pub trials: usize,
    /// Parameters are drawn uniformly from `[-scale, scale]`.
    pub scale: f64,
    /// Dropout used on odd-numbered trials.
    pub p: f64,
    pub q: f64,
    /// Perturb one analytic partial before comparing (negative control).
    pub corrupt: bool,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            kind: CellKind::Cfn,
            depth: 2,
            hidden: 4,
            vocab: 11,
            unroll: 5,
            eps: 1e-5,
            seed: 0,
            trials: 20,
            scale: 0.5,
            p: 0.3,
            q: 0.25,
            corrupt: false,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    /// Tensor and flat index of the worst partial.
    pub worst_tensor: String,
    pub worst_index: usize,
    pub worst_trial: usize,
    pub checked: usize,
    pub passed: bool,
}

struct Instance {
    model: ModelStack,
    s0: StackState,
    tokens: Vec<usize>,
    targets: Vec<usize>,
    masks: Option<WindowMasks>,
}

fn instance(cfg: &GradcheckConfig, trial: usize) -> Result<Instance> {
    let mut rng = Rng::derive(cfg.seed, trial as u64);
    let mut model = init_stack(cfg.kind, cfg.depth, cfg.hidden, cfg.vocab, &mut rng)?;
    model
        .params
        .visit_mut(&mut |_, d| d.iter_mut().for_each(|x| *x = rng.uniform_scalar(-cfg.scale, cfg.scale)));
    let mut s0 = model.zero_state();
    for v in s0.h.iter_mut().chain(s0.c.iter_mut()) {
        v.iter_mut().for_each(|x| *x = rng.uniform_scalar(-0.5, 0.5));
    }
    let tokens = (0..cfg.unroll).map(|_| rng.index(cfg.vocab)).collect();
    let targets = (0..cfg.unroll).map(|_| rng.index(cfg.vocab)).collect();
    let masks = if trial % 2 == 1 && (cfg.p > 0.0 || cfg.q > 0.0) {
        model.p = cfg.p;
        model.q = cfg.q;
        Some(WindowMasks::PerStep((0..cfg.unroll).map(|_| model.make_masks(&mut rng)).collect()))
    } else {
        None
    };
    Ok(Instance {
        model,
        s0,
        tokens,
        targets,
        masks,
    })
}

/// Compares every analytic partial with `(L(w+ε) − L(w−ε)) / 2ε` on
/// `cfg.trials` random instances.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        worst_trial: 0,
        checked: 0,
        passed: true,
    };
    for trial in 0..cfg.trials {
        let inst = instance(cfg, trial)?;
        let mut analytic = bptt_window(&inst.model, &inst.s0, &inst.tokens, &inst.targets, inst.masks.as_ref())?
            .grads;
        if cfg.corrupt && trial == 0 {
            analytic.out_b[0] += 1e-3;
        }
        let mut names = Vec::new();
        analytic.visit(&mut |name, _, _, d| names.push((name.to_string(), d.to_vec())));
        let loss = |m: &ModelStack| window_loss(m, &inst.s0, &inst.tokens, &inst.targets, inst.masks.as_ref());

        let mut probe = inst.model.clone();
        for (t, (name, grads)) in names.iter().enumerate() {
            for (k, &a) in grads.iter().enumerate() {
                let orig = tensor_value(&mut probe, t, k, None);
                tensor_value(&mut probe, t, k, Some(orig + cfg.eps));
                let up = loss(&probe)?;
                tensor_value(&mut probe, t, k, Some(orig - cfg.eps));
                let down = loss(&probe)?;
                tensor_value(&mut probe, t, k, Some(orig));
                let numeric = (up - down) / (2.0 * cfg.eps);
                let err = relative_error(a, numeric);
                report.checked += 1;
                if err > report.max_rel_err || err.is_nan() {
                    report.max_rel_err = err;
                    report.worst_tensor = name.clone();
                    report.worst_index = k;
                    report.worst_trial = trial;
                }
            }
        }
    }
    report.passed = report.max_rel_err < cfg.tolerance;
    Ok(report)
}

/// Reads, and optionally overwrites, entry `k` of the `t`-th tensor.
fn tensor_value(m: &mut ModelStack, t: usize, k: usize, set: Option<f64>) -> f64 {
    let mut idx = 0;
    let mut out = f64::NAN;
    m.params.visit_mut(&mut |_, d| {
        if idx == t {
            out = d[k];
            if let Some(v) = set {
                d[k] = v;
            }
        }
        idx += 1;
    });
    out
}
