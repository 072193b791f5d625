use rayon::prelude::*;

use crate::cells::{self, CfnParams, StepInput};
use crate::error::{Error, Result};
use crate::numkit::{inf_norm, sigmoid_scalar, Matrix, Rng, Vector};
use crate::stack::{CellKind, ModelStack};

/// A data-driven CFN run. Index 0 is the initial state; for `t ≥ 1`,
/// `theta[t]`, `eta[t]` and `feature[t] = W x_t` produced `h[t]`. The gate
/// and feature entries at index 0 are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CfnTrace {
    pub h: Vec<Vector>,
    pub theta: Vec<Vector>,
    pub eta: Vec<Vector>,
    pub feature: Vec<Vector>,
}

impl CfnTrace {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Component `i` of one of the per-step vectors.
    pub fn component(series: &[Vector], i: usize) -> Vec<f64> {
        series.iter().map(|v| v[i]).collect()
    }
}

/// Feeds `xs` to a single CFN layer starting from `h0`.
pub fn run_cfn(p: &CfnParams, h0: &[f64], xs: &[Vector]) -> Result<CfnTrace> {
    p.validate()?;
    cells::check_len("run_cfn h0", h0, p.hidden())?;
    let n = p.hidden();
    let mut tr = CfnTrace {
        h: vec![Vector::from(h0)],
        theta: vec![Vector::zeros(n)],
        eta: vec![Vector::zeros(n)],
        feature: vec![Vector::zeros(n)],
    };
    for (t, x) in xs.iter().enumerate() {
        cells::check_len("run_cfn input", x, p.input())?;
        let c = cells::cfn::forward(p, StepInput::plain(&tr.h[t], x));
        if !c.h.is_finite() {
            return Err(Error::NonFinite {
                context: "CFN trace".into(),
                step: t + 1,
            });
        }
        tr.h.push(c.h);
        tr.theta.push(c.theta);
        tr.eta.push(c.eta);
        tr.feature.push(c.wx);
    }
    Ok(tr)
}

/// A CFN layer with every weight and bias uniform in `[-scale, scale]`.
pub fn random_cfn(hidden: usize, input: usize, scale: f64, rng: &mut Rng) -> CfnParams {
    use crate::cells::Params;
    let mut p = CfnParams::zeros(hidden, input);
    p.visit_mut(&mut |_, d| d.iter_mut().for_each(|x| *x = rng.uniform_scalar(-scale, scale)));
    p
}

/// Response of unit `i` to a single feature spike of size `amplitude` at
/// step `t_impulse`, with no other input.
///
/// The input projection is replaced by the identity and the gates see no
/// input, so the feature `W x_t` is exactly `amplitude · e_i` at the spike
/// and zero elsewhere. The run starts from `h = 0` and lasts `horizon` steps.
pub fn impulse_response(p: &CfnParams, i: usize, t_impulse: usize, amplitude: f64, horizon: usize) -> Result<CfnTrace> {
    let n = p.hidden();
    if i >= n || t_impulse == 0 || t_impulse > horizon {
        return Err(Error::invalid(format!(
            "need unit < {n} and 1 <= spike time <= horizon (unit {i}, spike {t_impulse}, horizon {horizon})"
        )));
    }
    let q = CfnParams {
        w: Matrix::identity(n),
        v_theta: Matrix::zeros(n, n),
        v_eta: Matrix::zeros(n, n),
        ..p.clone()
    };
    let xs: Vec<Vector> = (1..=horizon)
        .map(|t| {
            let mut x = Vector::zeros(n);
            if t == t_impulse {
                x[i] = amplitude;
            }
            x
        })
        .collect();
    run_cfn(&q, &Vector::zeros(n), &xs)
}

/// Decay bound for one component over one window `[t_start, t_start + k]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayCertificate {
    pub component: usize,
    pub t_start: usize,
    pub k: usize,
    /// Largest forget-type gate value in the window.
    pub theta: f64,
    /// Largest input-type gate value in the window.
    pub eta: f64,
    pub bound: f64,
    pub observed: f64,
    pub satisfied: bool,
}

/// Float slack allowed on top of the bound.
pub const CERT_SLACK: f64 = 1e-12;

/// Certificates for `k = 0..=k_max` of component `i` from `t_start`,
/// computed with running maxima.
pub fn verify_lemma1_sweep(
    tr: &CfnTrace,
    i: usize,
    t_start: usize,
    k_max: usize,
) -> Result<Vec<DecayCertificate>> {
    if t_start + k_max >= tr.len() {
        return Err(Error::invalid(format!(
            "window [{t_start}, {}] exceeds trace of length {}",
            t_start + k_max,
            tr.len()
        )));
    }
    if tr.h.first().map_or(true, |h| i >= h.len()) {
        return Err(Error::invalid(format!("component {i} out of range")));
    }
    let h0 = tr.h[t_start][i].abs();
    let (mut theta, mut eta, mut feat) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let t = t_start + k;
        theta = theta.max(tr.theta[t][i]);
        eta = eta.max(tr.eta[t][i]);
        feat = feat.max(tr.feature[t][i].abs());
        if theta >= 1.0 {
            return Err(Error::invalid(format!(
                "gate maximum {theta} >= 1 for component {i} at step {t}: trace is corrupt or saturated"
            )));
        }
        let bound = theta.powi(k as i32) * h0 + eta / (1.0 - theta) * feat;
        let observed = tr.h[t][i].abs();
        out.push(DecayCertificate {
            component: i,
            t_start,
            k,
            theta,
            eta,
            bound,
            observed,
            satisfied: observed <= bound + CERT_SLACK,
        });
    }
    Ok(out)
}

/// The single certificate for window `[t_start, t_start + k]`.
pub fn verify_lemma1(tr: &CfnTrace, i: usize, t_start: usize, k: usize) -> Result<DecayCertificate> {
    Ok(*verify_lemma1_sweep(tr, i, t_start, k)?.last().expect("k_max + 1 entries"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroAttractorConfig {
    pub n_init: usize,
    /// Initial states are drawn from `[-r, r]^dim` for every `r` listed.
    pub radii: Vec<f64>,
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for ZeroAttractorConfig {
    fn default() -> Self {
        ZeroAttractorConfig {
            n_init: 100,
            radii: vec![1.0, 10.0],
            tol: 1e-8,
            max_steps: 100_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroAttractorReport {
    /// Every orbit reached `‖u‖∞ < tol` within `max_steps`.
    pub passed: bool,
    /// Every orbit did so within its geometric-rate bound.
    pub within_bound: bool,
    pub worst_steps: usize,
    /// `C = max_i (Σ_j |U_θ(i, j)| + b_θ(i))`
    pub c: f64,
    /// Contraction factor `σ(C)`.
    pub rate: f64,
    pub orbits: usize,
}

/// Iterates the input-free CFN map from random states until `‖u‖∞ < tol`.
///
/// After one step every component lies in `[-1, 1]`, so from then on
/// `‖u_t‖∞ ≤ σ(C)^(t-1) ‖u_1‖∞`; each orbit is checked against the step
/// count that bound implies.
pub fn verify_zero_attractor(p: &CfnParams, cfg: &ZeroAttractorConfig) -> Result<ZeroAttractorReport> {
    p.validate()?;
    let n = p.hidden();
    let c = (0..n)
        .map(|i| p.u_theta.row(i).iter().map(|x| x.abs()).sum::<f64>() + p.b_theta[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let rate = sigmoid_scalar(c);
    let jobs: Vec<(usize, f64)> = cfg
        .radii
        .iter()
        .enumerate()
        .flat_map(|(r, &rad)| (0..cfg.n_init).map(move |k| (r * cfg.n_init + k, rad)))
        .collect();
    let results: Vec<Result<(Option<usize>, bool)>> = jobs
        .par_iter()
        .map(|&(k, rad)| {
            let mut rng = Rng::derive(cfg.seed, k as u64);
            let mut u = rng.uniform(-rad, rad, n)?;
            let mut norm1 = 0.0;
            for t in 0..=cfg.max_steps {
                let norm = inf_norm(&u);
                if t == 1 {
                    norm1 = norm;
                }
                if norm < cfg.tol {
                    let bound = if t <= 1 || rate <= 0.0 {
                        t
                    } else {
                        1 + ((cfg.tol / norm1).ln() / rate.ln()).ceil().max(0.0) as usize
                    };
                    return Ok((Some(t), t <= bound));
                }
                u = p.induced(&u);
            }
            Ok((None, false))
        })
        .collect();
    let mut report = ZeroAttractorReport {
        passed: true,
        within_bound: true,
        worst_steps: 0,
        c,
        rate,
        orbits: jobs.len(),
    };
    for r in results {
        let (steps, ok) = r?;
        match steps {
            Some(s) => report.worst_steps = report.worst_steps.max(s),
            None => {
                report.passed = false;
                report.worst_steps = cfg.max_steps;
            }
        }
        report.within_bound &= ok;
    }
    Ok(report)
}

/// Zero-input decay of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerDecay {
    pub layer: usize,
    /// Up to ten units, slowest first: last step with `|h| > 1e-3`.
    pub slowest: Vec<(usize, usize)>,
    /// Largest half-life over the layer's units.
    pub half_life: usize,
    /// Envelope `C (1 + k)^(layer) Θ^k` (layer counted from 0).
    pub c: f64,
    pub theta: f64,
    /// `max_i |h(i)|` at every step after the cutoff.
    pub envelope: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultilayerReport {
    pub layers: Vec<LayerDecay>,
    /// Every layer stayed identically zero.
    pub degenerate: bool,
    /// `values[t][layer][unit]`, `t = 0` is the state at the cutoff.
    pub values: Vec<Vec<Vector>>,
}

impl MultilayerReport {
    /// Each layer holds on longer than the one below it.
    pub fn deeper_retains_longer(&self) -> bool {
        self.layers.windows(2).all(|w| w[1].half_life > w[0].half_life)
    }
}

/// Retention threshold for the slowest-unit ranking.
pub const RETENTION_THRESHOLD: f64 = 1e-3;

/// Feeds `warm` tokens to a CFN stack, then runs it input-free for `horizon`
/// steps and measures how long each layer keeps non-trivial activity.
///
/// A unit's half-life is the first step after which its magnitude never
/// again exceeds half of its peak.
pub fn verify_multilayer_decay(m: &ModelStack, warm: &[usize], horizon: usize) -> Result<MultilayerReport> {
    if m.kind != CellKind::Cfn || m.depth() < 2 {
        return Err(Error::invalid("multilayer decay needs a CFN stack of depth >= 2"));
    }
    let mut s = m.zero_state();
    for &tok in warm {
        if tok >= m.vocab_size() {
            return Err(Error::invalid(format!("token {tok} out of range")));
        }
        s = m.step(&s, Some(tok), None).next_state();
    }
    let mut values = vec![s.h.clone()];
    for _ in 0..horizon {
        s = m.step_zero_input(&s);
        values.push(s.h.clone());
    }
    let n = m.hidden();
    let mut layers = Vec::with_capacity(m.depth());
    let mut degenerate = true;
    for l in 0..m.depth() {
        let series = |i: usize| values.iter().map(move |v| v[l][i].abs());
        let mut retention: Vec<(usize, usize)> = (0..n)
            .map(|i| (i, series(i).rposition(|x| x > RETENTION_THRESHOLD).unwrap_or(0)))
            .collect();
        retention.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        retention.truncate(10);

        let half_life = (0..n)
            .map(|i| {
                let peak = series(i).fold(0.0, f64::max);
                if peak == 0.0 {
                    return 0;
                }
                series(i).rposition(|x| x > 0.5 * peak).map_or(0, |t| t + 1)
            })
            .max()
            .unwrap_or(0);

        let envelope: Vec<f64> = values.iter().map(|v| inf_norm(&v[l])).collect();
        let c = envelope.iter().copied().fold(0.0, f64::max);
        if c > 0.0 {
            degenerate = false;
        }
        let theta = if c == 0.0 {
            0.0
        } else {
            envelope
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &e)| (e / (c * (1.0 + k as f64).powi(l as i32))).powf(1.0 / k as f64))
                .fold(0.0, f64::max)
        };
        layers.push(LayerDecay {
            layer: l,
            slowest: retention,
            half_life,
            c,
            theta,
            envelope,
        });
    }
    Ok(MultilayerReport {
        layers,
        degenerate,
        values,
    })
}
