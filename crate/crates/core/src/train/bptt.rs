use crate::cells::{self, Params, StepInputGrads};
use crate::error::{Error, Result};
use crate::numkit::{axpy, dot, log_softmax, Vector};
use crate::stack::{LayerCache, LayerParams, MaskSet, ModelStack, StackParams, StackState, StepCache, WindowMasks};

/// Gradient of the loss, one tensor per model tensor.
pub type Grads = StackParams;

/// Outcome of one truncated-BPTT window.
#[derive(Clone, Debug)]
pub struct WindowResult {
    /// Mean negative log-likelihood over the window, in nats.
    pub loss: f64,
    pub grads: Grads,
    /// State after the last step, to be carried into the next window.
    pub state: StackState,
}

fn check_window(m: &ModelStack, s0: &StackState, tokens: &[usize], targets: &[usize]) -> Result<()> {
    if tokens.is_empty() || tokens.len() != targets.len() {
        return Err(Error::invalid(format!(
            "window needs equal, non-zero token and target counts ({} vs {})",
            tokens.len(),
            targets.len()
        )));
    }
    let v = m.vocab_size();
    if let Some(t) = tokens.iter().chain(targets).find(|&&t| t >= v) {
        return Err(Error::invalid(format!("token {t} out of range for vocabulary of {v}")));
    }
    m.check_state(s0)
}

fn run_forward(
    m: &ModelStack,
    s0: &StackState,
    tokens: &[usize],
    targets: &[usize],
    masks: Option<&WindowMasks>,
) -> Result<(Vec<StepCache>, f64)> {
    let depth = m.depth();
    let mut caches: Vec<StepCache> = Vec::with_capacity(tokens.len());
    for (t, &tok) in tokens.iter().enumerate() {
        let s = match caches.last() {
            Some(c) => c.next_state(),
            None => s0.clone(),
        };
        let ms = masks.map(|w| w.at(t));
        let (layers, top_h) = m.advance(&s, Some(tok), ms);
        let top = match ms {
            Some(ms) => Vector::from(ms.between[depth].apply(&top_h)),
            None => top_h,
        };
        caches.push(StepCache {
            token: Some(tok),
            layers,
            top,
            logprobs: Vector::zeros(0),
        });
    }

    // The output projection reads each row of out.W once for the whole window.
    let out_w = &m.params.out_w;
    let mut logits: Vec<Vector> = caches.iter().map(|_| m.params.out_b.clone()).collect();
    for v in 0..m.vocab_size() {
        let row = out_w.row(v);
        for (z, c) in logits.iter_mut().zip(&caches) {
            z[v] += dot(row, &c.top);
        }
    }
    let mut nll = 0.0;
    for (t, (c, z)) in caches.iter_mut().zip(&logits).enumerate() {
        c.logprobs = log_softmax(z);
        let lp = c.logprobs[targets[t]];
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                context: format!("log-probability of target {}", targets[t]),
                step: t,
            });
        }
        nll -= lp;
    }
    Ok((caches, nll / tokens.len() as f64))
}

/// Mean NLL of a window without computing gradients.
pub fn window_loss(
    m: &ModelStack,
    s0: &StackState,
    tokens: &[usize],
    targets: &[usize],
    masks: Option<&WindowMasks>,
) -> Result<f64> {
    check_window(m, s0, tokens, targets)?;
    run_forward(m, s0, tokens, targets, masks).map(|(_, l)| l)
}

/// Truncated BPTT over one window starting from the carried state `s0`.
///
/// The returned gradient is exact for the window loss; nothing flows into
/// `s0`. `masks` selects training mode.
pub fn bptt_window(
    m: &ModelStack,
    s0: &StackState,
    tokens: &[usize],
    targets: &[usize],
    masks: Option<&WindowMasks>,
) -> Result<WindowResult> {
    let mut grads = m.params.zeros_like();
    let (loss, state) = bptt_window_acc(m, s0, tokens, targets, masks, &mut grads)?;
    Ok(WindowResult { loss, grads, state })
}

/// Like [`bptt_window`] but adds the gradient into `g`.
pub fn bptt_window_acc(
    m: &ModelStack,
    s0: &StackState,
    tokens: &[usize],
    targets: &[usize],
    masks: Option<&WindowMasks>,
    g: &mut Grads,
) -> Result<(f64, StackState)> {
    check_window(m, s0, tokens, targets)?;
    let (caches, loss) = run_forward(m, s0, tokens, targets, masks)?;
    let depth = m.depth();
    let n = m.hidden();
    let inv_t = 1.0 / tokens.len() as f64;
    let lstm = m.kind == crate::stack::CellKind::Lstm;

    let mut dh_next: Vec<Vector> = (0..depth).map(|_| Vector::zeros(n)).collect();
    let mut dc_next: Vec<Vector> = if lstm {
        (0..depth).map(|_| Vector::zeros(n)).collect()
    } else {
        Vec::new()
    };
    let vocab = m.vocab_size();
    let dlogits: Vec<Vector> = caches
        .iter()
        .zip(targets)
        .map(|(c, &y)| {
            let mut d: Vector = c.logprobs.iter().map(|lp| lp.exp() * inv_t).collect();
            d[y] -= inv_t;
            d
        })
        .collect();
    let mut d_top: Vec<Vector> = caches.iter().map(|_| Vector::zeros(n)).collect();
    for v in 0..vocab {
        let row = m.params.out_w.row(v);
        let grow = g.out_w.row_mut(v);
        let mut db = 0.0;
        for ((d, c), dt) in dlogits.iter().zip(&caches).zip(d_top.iter_mut()) {
            let s = d[v];
            db += s;
            axpy(s, &c.top, grow);
            axpy(s, row, dt);
        }
        g.out_b[v] += db;
    }

    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        let ms: Option<&MaskSet> = masks.map(|w| w.at(t));
        let mut da = std::mem::take(&mut d_top[t]);
        if let Some(ms) = ms {
            ms.between[depth].apply_in_place(&mut da);
        }

        for l in (0..depth).rev() {
            let dh: Vector = da.iter().zip(dh_next[l].iter()).map(|(a, b)| a + b).collect();
            let gi: StepInputGrads = match (&m.params.layers[l], &c.layers[l], &mut g.layers[l]) {
                (LayerParams::Cfn(p), LayerCache::Cfn(cache), LayerParams::Cfn(gp)) => {
                    cells::cfn::backward(p, cache, &dh, gp)
                }
                (LayerParams::Gru(p), LayerCache::Gru(cache), LayerParams::Gru(gp)) => {
                    cells::gru::backward(p, cache, &dh, gp)
                }
                (LayerParams::Lstm(p), LayerCache::Lstm(cache), LayerParams::Lstm(gp)) => {
                    let (gi, dc) = cells::lstm::backward(p, cache, &dh, &dc_next[l], gp);
                    dc_next[l] = dc;
                    gi
                }
                _ => unreachable!("layer, cache and gradient kinds always agree"),
            };
            let StepInputGrads {
                h_prev,
                mut h_gate,
                mut x,
                mut x_gate,
            } = gi;
            if let Some(ms) = ms {
                ms.recurrent[l].apply_in_place(&mut h_gate);
                ms.between[l].apply_in_place(&mut x);
                ms.input[l].apply_in_place(&mut x_gate);
            }
            dh_next[l] = h_prev.iter().zip(h_gate.iter()).map(|(a, b)| a + b).collect();
            da = x.iter().zip(x_gate.iter()).map(|(a, b)| a + b).collect();
        }
        if let Some(tok) = c.token {
            for (e, d) in g.embed.row_mut(tok).iter_mut().zip(da.iter()) {
                *e += d;
            }
        }
    }

    if let Some(name) = g.first_non_finite() {
        log::error!("non-finite gradient in {name}; window loss {loss}");
        return Err(Error::NonFinite {
            context: format!("gradient of {name}"),
            step: 0,
        });
    }
    let state = caches.last().expect("window is non-empty").next_state();
    Ok((loss, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{sigmoid_scalar, Matrix, Rng};
    use crate::stack::{init_stack, CellKind};

    fn scalar_cfn() -> ModelStack {
        let mut p = StackParams::zeros(CellKind::Cfn, 1, 1, 2);
        p.embed = Matrix::from_rows(&[[0.3], [-0.8]]);
        p.out_w = Matrix::from_rows(&[[1.5], [-0.4]]);
        p.out_b = vec![0.1, -0.2].into();
        if let LayerParams::Cfn(c) = &mut p.layers[0] {
            c.w.set(0, 0, 0.9);
            c.u_theta.set(0, 0, 0.7);
            c.v_theta.set(0, 0, -0.6);
            c.b_theta[0] = 1.0;
            c.u_eta.set(0, 0, 0.2);
            c.v_eta.set(0, 0, 0.5);
            c.b_eta[0] = -1.0;
        }
        ModelStack::new(p, 0.0, 0.0).unwrap()
    }

    #[test]
    fn hand_chain_rule_single_step() {
        let m = scalar_cfn();
        let s0 = m.zero_state();
        let r = bptt_window(&m, &s0, &[1], &[0], None).unwrap();

        // Hand derivation with h_prev = 0, so tanh(h_prev) = 0 and the θ path is dead.
        let x = -0.8;
        let wx = 0.9 * x;
        let eta = sigmoid_scalar(0.5 * x - 1.0);
        let h = eta * f64::tanh(wx);
        let z = [1.5 * h + 0.1, -0.4 * h - 0.2];
        let lse = (z[0].exp() + z[1].exp()).ln();
        let p = [(z[0] - lse).exp(), (z[1] - lse).exp()];
        assert!((r.loss - (lse - z[0])).abs() < 1e-15);
        let dz = [p[0] - 1.0, p[1]];
        let dh = dz[0] * 1.5 + dz[1] * -0.4;
        let dw = dh * eta * (1.0 - f64::tanh(wx).powi(2)) * x;
        let d_eta_pre = dh * f64::tanh(wx) * eta * (1.0 - eta);

        let LayerParams::Cfn(g) = &r.grads.layers[0] else { unreachable!() };
        assert!((g.w.get(0, 0) - dw).abs() < 1e-15);
        assert!((g.b_eta[0] - d_eta_pre).abs() < 1e-15);
        assert!((g.v_eta.get(0, 0) - d_eta_pre * x).abs() < 1e-15);
        assert_eq!(g.u_eta.get(0, 0), 0.0);
        assert_eq!(g.u_theta.get(0, 0), 0.0);
        assert_eq!(g.v_theta.get(0, 0), 0.0);
        assert_eq!(g.b_theta[0], 0.0);
        assert!((r.grads.out_w.get(0, 0) - dz[0] * h).abs() < 1e-15);
        assert!((r.grads.out_b[1] - dz[1]).abs() < 1e-15);
        let de = dh * eta * (1.0 - f64::tanh(wx).powi(2)) * 0.9 + d_eta_pre * 0.5;
        assert!((r.grads.embed.get(1, 0) - de).abs() < 1e-15);
        assert_eq!(r.grads.embed.get(0, 0), 0.0);
    }

    #[test]
    fn output_bias_gradient_sums_to_zero() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let m = init_stack(kind, 2, 5, 13, &mut Rng::new(4)).unwrap();
            let r = bptt_window(&m, &m.zero_state(), &[1, 5, 7, 2], &[5, 7, 2, 12], None).unwrap();
            assert!(r.grads.out_b.iter().sum::<f64>().abs() < 1e-15, "{kind}");
        }
    }

    #[test]
    fn truncation_ignores_earlier_tokens() {
        let m = init_stack(CellKind::Lstm, 2, 6, 9, &mut Rng::new(8)).unwrap();
        let first = bptt_window(&m, &m.zero_state(), &[1, 2, 3], &[2, 3, 4], None).unwrap();
        let second = bptt_window(&m, &first.state, &[4, 5, 6], &[5, 6, 7], None).unwrap();
        // A different history reaching the same carried state gives the same gradient.
        let fresh = bptt_window(&m, &first.state.clone(), &[4, 5, 6], &[5, 6, 7], None).unwrap();
        assert_eq!(second.grads, fresh.grads);
        assert_eq!(second.loss, fresh.loss);
    }

    #[test]
    fn window_loss_matches_bptt_loss() {
        let m = init_stack(CellKind::Gru, 1, 4, 7, &mut Rng::new(2)).unwrap();
        let s0 = m.zero_state();
        let a = window_loss(&m, &s0, &[0, 1, 2], &[1, 2, 3], None).unwrap();
        let b = bptt_window(&m, &s0, &[0, 1, 2], &[1, 2, 3], None).unwrap().loss;
        assert_eq!(a, b);
    }

    #[test]
    fn bad_windows_rejected() {
        let m = init_stack(CellKind::Cfn, 1, 3, 5, &mut Rng::new(0)).unwrap();
        let s0 = m.zero_state();
        assert!(bptt_window(&m, &s0, &[], &[], None).is_err());
        assert!(bptt_window(&m, &s0, &[1, 2], &[1], None).is_err());
        assert!(bptt_window(&m, &s0, &[1], &[5], None).is_err());
    }

    #[test]
    fn nan_aborts_with_tensor_name() {
        let mut m = init_stack(CellKind::Cfn, 1, 3, 5, &mut Rng::new(0)).unwrap();
        m.params.out_w.set(2, 1, f64::NAN);
        let err = bptt_window(&m, &m.zero_state(), &[1], &[2], None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }
}
