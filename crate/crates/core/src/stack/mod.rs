//! Multi-layer word-level language model.
//!
//! ```text
//! e_t        = embed[token]
//! â^(0)      = Drop(e_t, p)
//! h^(ℓ)_t    = cell_ℓ(h^(ℓ)_{t-1}, â^(ℓ-1)_t), gates read Drop(h^(ℓ)_{t-1}, q), Drop(h^(ℓ-1)_t, q)
//! â^(ℓ)      = Drop(h^(ℓ)_t, p)
//! y_t        = LogSoftmax(W_out â^(L) + b_out)
//! ```
//!
//! Embedding and output projection are separate matrices (no tying), both
//! stored one row per token.

pub mod checkpoint;
mod dropout;

pub use dropout::{DropMask, MaskSet, WindowMasks};

use std::fmt;
use std::str::FromStr;

use crate::cells::{self, CfnParams, GateTrace, GruParams, LstmParams, Params, StepInput};
use crate::error::{Error, Result};
use crate::numkit::{log_softmax, Matrix, Rng, Vector};

/// Scale of the uniform initialisation.
pub const INIT_SCALE: f64 = 0.07;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Cfn,
    Lstm,
    Gru,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Cfn => "cfn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cfn" => Ok(CellKind::Cfn),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::invalid(format!("unknown cell kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Cfn(CfnParams),
    Lstm(LstmParams),
    Gru(GruParams),
}

impl LayerParams {
    pub fn zeros(kind: CellKind, hidden: usize, input: usize) -> Self {
        match kind {
            CellKind::Cfn => LayerParams::Cfn(CfnParams::zeros(hidden, input)),
            CellKind::Lstm => LayerParams::Lstm(LstmParams::zeros(hidden, input)),
            CellKind::Gru => LayerParams::Gru(GruParams::zeros(hidden, input)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            LayerParams::Cfn(_) => CellKind::Cfn,
            LayerParams::Lstm(_) => CellKind::Lstm,
            LayerParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            LayerParams::Cfn(p) => p.hidden(),
            LayerParams::Lstm(p) => p.hidden(),
            LayerParams::Gru(p) => p.hidden(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            LayerParams::Cfn(p) => p.input(),
            LayerParams::Lstm(p) => p.input(),
            LayerParams::Gru(p) => p.input(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LayerParams::Cfn(p) => p.validate(),
            LayerParams::Lstm(p) => p.validate(),
            LayerParams::Gru(p) => p.validate(),
        }
    }

    fn as_params(&self) -> &dyn ParamsDyn {
        match self {
            LayerParams::Cfn(p) => p,
            LayerParams::Lstm(p) => p,
            LayerParams::Gru(p) => p,
        }
    }

    fn as_params_mut(&mut self) -> &mut dyn ParamsDyn {
        match self {
            LayerParams::Cfn(p) => p,
            LayerParams::Lstm(p) => p,
            LayerParams::Gru(p) => p,
        }
    }
}

/// Object-safe subset of [`Params`].
trait ParamsDyn {
    fn visit_dyn(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64]));
    fn visit_mut_dyn(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));
}

impl<P: Params> ParamsDyn for P {
    fn visit_dyn(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        self.visit(f)
    }
    fn visit_mut_dyn(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.visit_mut(f)
    }
}

/// Every learnable tensor of a stack. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct StackParams {
    /// `vocab x hidden`, row `v` is the embedding of token `v`.
    pub embed: Matrix,
    pub layers: Vec<LayerParams>,
    /// `vocab x hidden`
    pub out_w: Matrix,
    pub out_b: Vector,
}

impl StackParams {
    pub fn zeros(kind: CellKind, depth: usize, hidden: usize, vocab: usize) -> Self {
        StackParams {
            embed: Matrix::zeros(vocab, hidden),
            layers: (0..depth)
                .map(|_| LayerParams::zeros(kind, hidden, hidden))
                .collect(),
            out_w: Matrix::zeros(vocab, hidden),
            out_b: Vector::zeros(vocab),
        }
    }

    /// Dot product with another container of the same shapes.
    pub fn dot(&self, other: &StackParams) -> f64 {
        let b = other.flatten();
        let mut acc = 0.0;
        let mut off = 0;
        self.visit(&mut |_, _, _, d| {
            acc += d.iter().zip(&b[off..]).map(|(x, y)| x * y).sum::<f64>();
            off += d.len();
        });
        acc
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &StackParams, scale: f64) {
        let src = other.flatten();
        let mut off = 0;
        self.visit_mut(&mut |_, d| {
            for (x, y) in d.iter_mut().zip(&src[off..]) {
                *x += scale * y;
            }
            off += d.len();
        });
    }

    pub fn scale(&mut self, s: f64) {
        self.visit_mut(&mut |_, d| d.iter_mut().for_each(|x| *x *= s));
    }

    /// Global Euclidean norm over all tensors concatenated.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        self.visit(&mut |_, _, _, d| acc += d.iter().map(|x| x * x).sum::<f64>());
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut found = None;
        self.visit(&mut |name, _, _, d| {
            if found.is_none() && d.iter().any(|x| !x.is_finite()) {
                found = Some(name.to_string());
            }
        });
        found
    }

    /// All values in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, _, _, d| out.extend_from_slice(d));
        out
    }
}

impl Params for StackParams {
    fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        f("embed", self.embed.rows(), self.embed.cols(), self.embed.data());
        for (l, layer) in self.layers.iter().enumerate() {
            layer
                .as_params()
                .visit_dyn(&mut |name, r, c, d| f(&format!("layer{l}.{name}"), r, c, d));
        }
        f("out.W", self.out_w.rows(), self.out_w.cols(), self.out_w.data());
        f("out.b", 1, self.out_b.len(), &self.out_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("embed", self.embed.data_mut());
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer
                .as_params_mut()
                .visit_mut_dyn(&mut |name, d| f(&format!("layer{l}.{name}"), d));
        }
        f("out.W", self.out_w.data_mut());
        f("out.b", &mut self.out_b);
    }

    fn zeros_like(&self) -> Self {
        StackParams::zeros(
            self.layers[0].kind(),
            self.layers.len(),
            self.embed.cols(),
            self.embed.rows(),
        )
    }
}

/// A layered language model with its dropout rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelStack {
    pub kind: CellKind,
    pub params: StackParams,
    /// Dropout between layers.
    pub p: f64,
    /// Dropout inside the gates.
    pub q: f64,
}

/// Hidden (and, for the LSTM, cell) states of every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct StackState {
    pub h: Vec<Vector>,
    /// Empty unless the cells are LSTMs.
    pub c: Vec<Vector>,
}

impl StackState {
    /// Flattened `(h_1, c_1, h_2, c_2, ...)`.
    pub fn to_flat(&self) -> Vector {
        let mut out = Vec::new();
        for (l, h) in self.h.iter().enumerate() {
            out.extend_from_slice(h);
            if let Some(c) = self.c.get(l) {
                out.extend_from_slice(c);
            }
        }
        out.into()
    }

    pub fn from_flat(kind: CellKind, depth: usize, hidden: usize, flat: &[f64]) -> Self {
        let per = if kind == CellKind::Lstm { 2 * hidden } else { hidden };
        let mut h = Vec::with_capacity(depth);
        let mut c = Vec::new();
        for l in 0..depth {
            let chunk = &flat[l * per..(l + 1) * per];
            h.push(Vector::from(&chunk[..hidden]));
            if kind == CellKind::Lstm {
                c.push(Vector::from(&chunk[hidden..]));
            }
        }
        StackState { h, c }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.c.iter()).all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug)]
pub enum LayerCache {
    Cfn(cells::CfnCache),
    Lstm(cells::LstmCache),
    Gru(cells::GruCache),
}

impl LayerCache {
    pub fn h(&self) -> &Vector {
        match self {
            LayerCache::Cfn(c) => &c.h,
            LayerCache::Lstm(c) => &c.h,
            LayerCache::Gru(c) => &c.h,
        }
    }

    pub fn trace(&self) -> GateTrace {
        match self {
            LayerCache::Cfn(c) => c.trace(),
            LayerCache::Lstm(c) => c.trace(),
            LayerCache::Gru(c) => c.trace(),
        }
    }
}

/// One forward step with everything needed to backpropagate through it.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub token: Option<usize>,
    pub layers: Vec<LayerCache>,
    /// Top hidden state after output dropout.
    pub top: Vector,
    pub logprobs: Vector,
}

impl StepCache {
    pub fn next_state(&self) -> StackState {
        let h = self.layers.iter().map(|c| c.h().clone()).collect();
        let c = self
            .layers
            .iter()
            .filter_map(|c| match c {
                LayerCache::Lstm(l) => Some(l.c.clone()),
                _ => None,
            })
            .collect();
        StackState { h, c }
    }
}

impl ModelStack {
    pub fn new(params: StackParams, p: f64, q: f64) -> Result<Self> {
        if params.layers.is_empty() {
            return Err(Error::invalid("a stack needs at least one layer"));
        }
        if !(0.0..1.0).contains(&p) || !(0.0..1.0).contains(&q) {
            return Err(Error::invalid(format!("dropout rates must lie in [0, 1): p={p}, q={q}")));
        }
        let kind = params.layers[0].kind();
        let hidden = params.embed.cols();
        let vocab = params.embed.rows();
        for layer in &params.layers {
            if layer.kind() != kind {
                return Err(Error::invalid("all layers must share one cell kind"));
            }
            layer.validate()?;
            if layer.hidden() != hidden || layer.input() != hidden {
                return Err(Error::shape(
                    "stack layer",
                    format!("{}x{}", layer.hidden(), layer.input()),
                    format!("expected {hidden}x{hidden}"),
                ));
            }
        }
        cells::check_matrix("out.W", &params.out_w, vocab, hidden)?;
        cells::check_len("out.b", &params.out_b, vocab)?;
        Ok(ModelStack { kind, params, p, q })
    }

    pub fn depth(&self) -> usize {
        self.params.layers.len()
    }

    pub fn hidden(&self) -> usize {
        self.params.embed.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.params.embed.rows()
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub fn zero_state(&self) -> StackState {
        let n = self.hidden();
        StackState {
            h: (0..self.depth()).map(|_| Vector::zeros(n)).collect(),
            c: if self.kind == CellKind::Lstm {
                (0..self.depth()).map(|_| Vector::zeros(n)).collect()
            } else {
                Vec::new()
            },
        }
    }

    /// Independent dropout masks for one window.
    pub fn make_masks(&self, rng: &mut Rng) -> MaskSet {
        MaskSet::sample(self.depth(), self.hidden(), self.p, self.q, rng)
    }

    pub fn check_state(&self, s: &StackState) -> Result<()> {
        let lstm = self.kind == CellKind::Lstm;
        if s.h.len() != self.depth() || (lstm && s.c.len() != self.depth()) || (!lstm && !s.c.is_empty()) {
            return Err(Error::shape(
                "stack state",
                format!("{} layers", s.h.len()),
                format!("expected {}", self.depth()),
            ));
        }
        for v in s.h.iter().chain(s.c.iter()) {
            cells::check_len("stack state", v, self.hidden())?;
        }
        Ok(())
    }

    /// One step of the language model.
    ///
    /// Passing masks selects training mode; `None` is evaluation mode (no
    /// dropout, no scaling).
    pub fn stack_forward(
        &self,
        s: &StackState,
        token: usize,
        masks: Option<&MaskSet>,
    ) -> Result<(Vector, StackState, Vec<GateTrace>)> {
        if token >= self.vocab_size() {
            return Err(Error::invalid(format!(
                "token {token} out of range for vocabulary of {}",
                self.vocab_size()
            )));
        }
        self.check_state(s)?;
        let c = self.step(s, Some(token), masks);
        let traces = c.layers.iter().map(LayerCache::trace).collect();
        let next = c.next_state();
        Ok((c.logprobs, next, traces))
    }

    /// Advances every layer with a zero input vector; no output projection.
    pub fn step_zero_input(&self, s: &StackState) -> StackState {
        self.advance(s, None, None).0.iter().fold(
            StackState {
                h: Vec::new(),
                c: Vec::new(),
            },
            |mut acc, c| {
                acc.h.push(c.h().clone());
                if let LayerCache::Lstm(l) = c {
                    acc.c.push(l.c.clone());
                }
                acc
            },
        )
    }

    /// Unchecked forward step; `token == None` feeds a zero input vector.
    pub fn step(&self, s: &StackState, token: Option<usize>, masks: Option<&MaskSet>) -> StepCache {
        let (layers, top_h) = self.advance(s, token, masks);
        let top = match masks {
            Some(m) => Vector::from(m.between[self.depth()].apply(&top_h)),
            None => top_h,
        };
        let mut logits = self.params.out_b.clone();
        self.params.out_w.matvec_acc(&top, &mut logits);
        let logprobs = log_softmax(&logits);
        StepCache {
            token,
            layers,
            top,
            logprobs,
        }
    }

    pub(crate) fn advance(
        &self,
        s: &StackState,
        token: Option<usize>,
        masks: Option<&MaskSet>,
    ) -> (Vec<LayerCache>, Vector) {
        let mut a: Vector = match token {
            Some(t) => self.params.embed.row(t).into(),
            None => Vector::zeros(self.hidden()),
        };
        let mut caches = Vec::with_capacity(self.depth());
        for (l, layer) in self.params.layers.iter().enumerate() {
            let h_prev = &s.h[l];
            let (x, x_gate, h_gate);
            let inp = match masks {
                Some(m) => {
                    x = m.between[l].apply(&a);
                    x_gate = m.input[l].apply(&a);
                    h_gate = m.recurrent[l].apply(h_prev);
                    StepInput {
                        h_prev,
                        h_gate: &h_gate,
                        x: &x,
                        x_gate: &x_gate,
                    }
                }
                None => StepInput::plain(h_prev, &a),
            };
            let cache = match layer {
                LayerParams::Cfn(p) => LayerCache::Cfn(cells::cfn::forward(p, inp)),
                LayerParams::Lstm(p) => LayerCache::Lstm(cells::lstm::forward(p, &s.c[l], inp)),
                LayerParams::Gru(p) => LayerCache::Gru(cells::gru::forward(p, inp)),
            };
            a = cache.h().clone();
            caches.push(cache);
        }
        (caches, a)
    }
}

/// Builds a freshly initialised stack.
///
/// All matrices and the output bias are uniform in `[-0.07, 0.07)`. Gate
/// biases: CFN `b_θ = 1`, `b_η = -1`; LSTM forget 1, input -1, others 0; GRU 0.
pub fn init_stack(
    kind: CellKind,
    depth: usize,
    hidden: usize,
    vocab: usize,
    rng: &mut Rng,
) -> Result<ModelStack> {
    if depth == 0 || hidden == 0 || vocab == 0 {
        return Err(Error::invalid(format!(
            "stack dimensions must be positive (depth {depth}, hidden {hidden}, vocab {vocab})"
        )));
    }
    let mut embed = Matrix::zeros(vocab, hidden);
    fill_uniform(embed.data_mut(), rng);
    let layers = (0..depth)
        .map(|_| match kind {
            CellKind::Cfn => LayerParams::Cfn(CfnParams::init(hidden, hidden, INIT_SCALE, rng)),
            CellKind::Lstm => LayerParams::Lstm(LstmParams::init(hidden, hidden, INIT_SCALE, rng)),
            CellKind::Gru => LayerParams::Gru(GruParams::init(hidden, hidden, INIT_SCALE, rng)),
        })
        .collect();
    let mut out_w = Matrix::zeros(vocab, hidden);
    fill_uniform(out_w.data_mut(), rng);
    let mut out_b = Vector::zeros(vocab);
    fill_uniform(&mut out_b, rng);
    ModelStack::new(
        StackParams {
            embed,
            layers,
            out_w,
            out_b,
        },
        0.0,
        0.0,
    )
}

fn fill_uniform(d: &mut [f64], rng: &mut Rng) {
    for x in d {
        *x = rng.uniform_scalar(-INIT_SCALE, INIT_SCALE);
    }
}

/// Number of parameters of a stack, without building it.
pub fn param_count(kind: CellKind, depth: usize, hidden: usize, vocab: usize) -> usize {
    let per_layer = match kind {
        CellKind::Cfn => 5 * hidden * hidden + 2 * hidden,
        CellKind::Lstm => 8 * hidden * hidden + 4 * hidden,
        CellKind::Gru => 6 * hidden * hidden + 2 * hidden,
    };
    2 * vocab * hidden + vocab + depth * per_layer
}

/// Hidden size whose parameter count is closest to `target`.
pub fn matched_hidden(kind: CellKind, depth: usize, vocab: usize, target: usize) -> usize {
    (1..=4096)
        .min_by_key(|&h| param_count(kind, depth, h, vocab).abs_diff(target))
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{logsumexp, sigmoid_scalar};

    fn small(kind: CellKind, seed: u64) -> ModelStack {
        init_stack(kind, 2, 6, 13, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn logprobs_are_normalised() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let mut m = small(kind, 1);
            m.p = 0.3;
            m.q = 0.2;
            let mut rng = Rng::new(2);
            let mut s = m.zero_state();
            for t in 0..20 {
                let masks = m.make_masks(&mut rng);
                let mm = if t % 2 == 0 { Some(&masks) } else { None };
                let (lp, next, traces) = m.stack_forward(&s, t % 13, mm).unwrap();
                assert!(logsumexp(&lp).abs() < 1e-9);
                assert_eq!(traces.len(), 2);
                s = next;
            }
        }
    }

    #[test]
    fn zero_rate_masks_match_eval_bitwise() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let m = small(kind, 3);
            let masks = m.make_masks(&mut Rng::new(0));
            let (mut s1, mut s2) = (m.zero_state(), m.zero_state());
            for t in 0..10 {
                let (a, n1, _) = m.stack_forward(&s1, (t * 7) % 13, Some(&masks)).unwrap();
                let (b, n2, _) = m.stack_forward(&s2, (t * 7) % 13, None).unwrap();
                assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
                s1 = n1;
                s2 = n2;
            }
        }
    }

    #[test]
    fn uniform_logits() {
        let mut m = init_stack(CellKind::Cfn, 1, 4, 10, &mut Rng::new(0)).unwrap();
        m.params.out_w = Matrix::zeros(10, 4);
        m.params.out_b = Vector::filled(10, 0.7);
        let (lp, _, _) = m.stack_forward(&m.zero_state(), 3, None).unwrap();
        for x in lp.iter() {
            assert!((x + 10f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_embedding_propagates_zero() {
        let mut m = init_stack(CellKind::Cfn, 1, 4, 10, &mut Rng::new(4)).unwrap();
        m.params.embed.row_mut(5).iter_mut().for_each(|x| *x = 0.0);
        let (lp, s, _) = m.stack_forward(&m.zero_state(), 5, None).unwrap();
        assert!(s.h[0].iter().all(|&x| x == 0.0));
        let expected = log_softmax(&m.params.out_b);
        assert_eq!(lp, expected);
    }

    #[test]
    fn initial_gates() {
        let m = init_stack(CellKind::Cfn, 2, 32, 50, &mut Rng::new(0)).unwrap();
        let (_, _, traces) = m.stack_forward(&m.zero_state(), 0, None).unwrap();
        for t in &traces {
            for (&th, &et) in t.theta.iter().zip(t.eta.iter()) {
                assert!((th - sigmoid_scalar(1.0)).abs() < 0.02);
                assert!((et - sigmoid_scalar(-1.0)).abs() < 0.02);
                // σ(-1) is 0.2689; the often-quoted 0.23 is a rounding slip.
                assert!((th - 0.73).abs() < 0.02 && (et - 0.27).abs() < 0.02);
            }
        }
    }

    #[test]
    fn init_ranges_and_biases() {
        let m = init_stack(CellKind::Lstm, 1, 8, 20, &mut Rng::new(1)).unwrap();
        m.params.visit(&mut |name, _, _, d| {
            let is_gate_bias = name.contains(".b_");
            if !is_gate_bias {
                assert!(d.iter().all(|x| x.abs() <= INIT_SCALE), "{name}");
            }
        });
        let LayerParams::Lstm(l) = &m.params.layers[0] else { panic!() };
        assert!(l.b_f.iter().all(|&b| b == 1.0));
        assert!(l.b_i.iter().all(|&b| b == -1.0));
        assert!(l.b_o.iter().chain(l.b_g.iter()).all(|&b| b == 0.0));
    }

    #[test]
    fn same_seed_same_stack() {
        assert_eq!(small(CellKind::Cfn, 9), small(CellKind::Cfn, 9));
        assert_ne!(small(CellKind::Cfn, 9), small(CellKind::Cfn, 10));
    }

    #[test]
    fn token_out_of_range() {
        let m = small(CellKind::Gru, 0);
        assert!(m.stack_forward(&m.zero_state(), 13, None).is_err());
    }

    #[test]
    fn param_count_matches_built_stack() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let m = init_stack(kind, 2, 5, 17, &mut Rng::new(0)).unwrap();
            assert_eq!(m.num_params(), param_count(kind, 2, 5, 17));
        }
        let target = param_count(CellKind::Cfn, 2, 64, 2000);
        let h = matched_hidden(CellKind::Lstm, 1, 2000, target);
        assert_eq!(h, 66);
    }

    #[test]
    fn state_flat_round_trip() {
        let m = small(CellKind::Lstm, 2);
        let (_, s, _) = m.stack_forward(&m.zero_state(), 1, None).unwrap();
        let flat = s.to_flat();
        assert_eq!(StackState::from_flat(CellKind::Lstm, 2, 6, &flat), s);
    }
}
