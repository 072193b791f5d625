//! LSTM without peepholes:
//!
//! ```text
//! i = σ(W_i h + V_i x + b_i)    f = σ(W_f h + V_f x + b_f)
//! o = σ(W_o h + V_o x + b_o)    g = tanh(W_g h + V_g x + b_g)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```
//!
//! The sigmoid gates read the gate views of the inputs; `g` reads the
//! state-update views.

use super::{
    backprop_affine, check_len, check_matrix, preactivation, sigmoid_in_place, tanh_in_place,
    GateTrace, Params, StepInput, StepInputGrads,
};
use crate::error::Result;
use crate::numkit::{Matrix, Rng, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub v_i: Matrix,
    pub v_f: Matrix,
    pub v_o: Matrix,
    pub v_g: Matrix,
    pub b_i: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_g: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: Vector::zeros(hidden),
            c: Vector::zeros(hidden),
        }
    }
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let sq = || Matrix::zeros(hidden, hidden);
        let inp = || Matrix::zeros(hidden, input);
        LstmParams {
            w_i: sq(),
            w_f: sq(),
            w_o: sq(),
            w_g: sq(),
            v_i: inp(),
            v_f: inp(),
            v_o: inp(),
            v_g: inp(),
            b_i: Vector::zeros(hidden),
            b_f: Vector::zeros(hidden),
            b_o: Vector::zeros(hidden),
            b_g: Vector::zeros(hidden),
        }
    }

    /// Matrices uniform in `[-scale, scale)`; forget bias 1, input bias -1,
    /// other biases 0.
    pub fn init(hidden: usize, input: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = LstmParams::zeros(hidden, input);
        for m in [
            &mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_g, &mut p.v_i, &mut p.v_f, &mut p.v_o,
            &mut p.v_g,
        ] {
            for x in m.data_mut() {
                *x = rng.uniform_scalar(-scale, scale);
            }
        }
        p.b_f = Vector::filled(hidden, 1.0);
        p.b_i = Vector::filled(hidden, -1.0);
        p
    }

    /// A two-unit input-free LSTM with the given recurrent matrices and zero biases.
    pub fn autonomous(w_i: Matrix, w_f: Matrix, w_o: Matrix, w_g: Matrix) -> Self {
        let n = w_i.rows();
        LstmParams {
            w_i,
            w_f,
            w_o,
            w_g,
            ..LstmParams::zeros(n, 0)
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input(&self) -> usize {
        self.v_i.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        for (name, m) in [
            ("lstm.W_i", &self.w_i),
            ("lstm.W_f", &self.w_f),
            ("lstm.W_o", &self.w_o),
            ("lstm.W_g", &self.w_g),
        ] {
            check_matrix(name, m, h, h)?;
        }
        for (name, m) in [
            ("lstm.V_i", &self.v_i),
            ("lstm.V_f", &self.v_f),
            ("lstm.V_o", &self.v_o),
            ("lstm.V_g", &self.v_g),
        ] {
            check_matrix(name, m, h, i)?;
        }
        for (name, b) in [
            ("lstm.b_i", &self.b_i),
            ("lstm.b_f", &self.b_f),
            ("lstm.b_o", &self.b_o),
            ("lstm.b_g", &self.b_g),
        ] {
            check_len(name, b, h)?;
        }
        Ok(())
    }
}

impl Params for LstmParams {
    fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (name, m) in [
            ("W_i", &self.w_i),
            ("W_f", &self.w_f),
            ("W_o", &self.w_o),
            ("W_g", &self.w_g),
            ("V_i", &self.v_i),
            ("V_f", &self.v_f),
            ("V_o", &self.v_o),
            ("V_g", &self.v_g),
        ] {
            f(name, m.rows(), m.cols(), m.data());
        }
        for (name, b) in [
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_g", &self.b_g),
        ] {
            f(name, 1, b.len(), b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("W_i", self.w_i.data_mut());
        f("W_f", self.w_f.data_mut());
        f("W_o", self.w_o.data_mut());
        f("W_g", self.w_g.data_mut());
        f("V_i", self.v_i.data_mut());
        f("V_f", self.v_f.data_mut());
        f("V_o", self.v_o.data_mut());
        f("V_g", self.v_g.data_mut());
        f("b_i", &mut self.b_i);
        f("b_f", &mut self.b_f);
        f("b_o", &mut self.b_o);
        f("b_g", &mut self.b_g);
    }

    fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.hidden(), self.input())
    }
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    pub i: Vector,
    pub f: Vector,
    pub o: Vector,
    pub g: Vector,
    pub c: Vector,
    pub tanh_c: Vector,
    pub h: Vector,
    c_prev: Vector,
    h_prev: Vector,
    h_gate: Vector,
    x: Vector,
    x_gate: Vector,
}

impl LstmCache {
    pub fn trace(&self) -> GateTrace {
        GateTrace {
            theta: self.f.clone(),
            eta: self.i.clone(),
        }
    }

    pub fn state(&self) -> LstmState {
        LstmState {
            h: self.h.clone(),
            c: self.c.clone(),
        }
    }
}

pub fn forward(p: &LstmParams, c_prev: &[f64], inp: StepInput<'_>) -> LstmCache {
    let n = p.hidden();
    let mut i = preactivation(&p.w_i, inp.h_gate, &p.v_i, inp.x_gate, Some(&p.b_i));
    sigmoid_in_place(&mut i);
    let mut f = preactivation(&p.w_f, inp.h_gate, &p.v_f, inp.x_gate, Some(&p.b_f));
    sigmoid_in_place(&mut f);
    let mut o = preactivation(&p.w_o, inp.h_gate, &p.v_o, inp.x_gate, Some(&p.b_o));
    sigmoid_in_place(&mut o);
    let mut g = preactivation(&p.w_g, inp.h_prev, &p.v_g, inp.x, Some(&p.b_g));
    tanh_in_place(&mut g);
    let c: Vector = (0..n).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vector = c.iter().map(|x| x.tanh()).collect();
    let h = (0..n).map(|k| o[k] * tanh_c[k]).collect();
    LstmCache {
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
        c_prev: c_prev.into(),
        h_prev: inp.h_prev.into(),
        h_gate: inp.h_gate.into(),
        x: inp.x.into(),
        x_gate: inp.x_gate.into(),
    }
}

/// Given `dh = ∂L/∂h'` and `dc = ∂L/∂c'` (from later steps only), accumulates
/// parameter gradients and returns the input gradients and `∂L/∂c`.
pub fn backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh: &[f64],
    dc_next: &[f64],
    g: &mut LstmParams,
) -> (StepInputGrads, Vector) {
    let n = p.hidden();
    let mut out = StepInputGrads::zeros(n, p.input());
    let mut d_i = Vector::zeros(n);
    let mut d_f = Vector::zeros(n);
    let mut d_o = Vector::zeros(n);
    let mut d_g = Vector::zeros(n);
    let mut dc_prev = Vector::zeros(n);
    for k in 0..n {
        let tc = cache.tanh_c[k];
        let dc = dc_next[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
        let (i, f, o, gg) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k]);
        d_o[k] = dh[k] * tc * o * (1.0 - o);
        d_f[k] = dc * cache.c_prev[k] * f * (1.0 - f);
        d_i[k] = dc * gg * i * (1.0 - i);
        d_g[k] = dc * i * (1.0 - gg * gg);
        dc_prev[k] = dc * f;
    }
    backprop_affine(
        &d_i, &p.w_i, &cache.h_gate, &p.v_i, &cache.x_gate, &mut g.w_i, &mut g.v_i,
        Some(&mut g.b_i), &mut out.h_gate, &mut out.x_gate,
    );
    backprop_affine(
        &d_f, &p.w_f, &cache.h_gate, &p.v_f, &cache.x_gate, &mut g.w_f, &mut g.v_f,
        Some(&mut g.b_f), &mut out.h_gate, &mut out.x_gate,
    );
    backprop_affine(
        &d_o, &p.w_o, &cache.h_gate, &p.v_o, &cache.x_gate, &mut g.w_o, &mut g.v_o,
        Some(&mut g.b_o), &mut out.h_gate, &mut out.x_gate,
    );
    backprop_affine(
        &d_g, &p.w_g, &cache.h_prev, &p.v_g, &cache.x, &mut g.w_g, &mut g.v_g,
        Some(&mut g.b_g), &mut out.h_prev, &mut out.x,
    );
    (out, dc_prev)
}

/// One LSTM step.
pub fn lstm_step(p: &LstmParams, s_prev: &LstmState, x: &[f64]) -> Result<LstmState> {
    p.validate()?;
    check_len("lstm_step h", &s_prev.h, p.hidden())?;
    check_len("lstm_step c", &s_prev.c, p.hidden())?;
    check_len("lstm_step x", x, p.input())?;
    Ok(forward(p, &s_prev.c, StepInput::plain(&s_prev.h, x)).state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::sigmoid_scalar as sig;

    fn chaotic() -> LstmParams {
        LstmParams::autonomous(
            Matrix::from_rows(&[[-1.0, -4.0], [-3.0, -2.0]]),
            Matrix::from_rows(&[[-2.0, 6.0], [0.0, -6.0]]),
            Matrix::from_rows(&[[4.0, 1.0], [-9.0, -7.0]]),
            Matrix::from_rows(&[[-1.0, -6.0], [6.0, -9.0]]),
        )
    }

    #[test]
    fn zero_state_stays_zero() {
        let p = LstmParams::zeros(3, 2);
        let s = lstm_step(&p, &LstmState::zeros(3), &[0.0, 0.0]).unwrap();
        assert!(s.h.iter().chain(s.c.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn two_unit_map_by_hand() {
        // h = (1, 1), c = 0: W_i h = (-5, -5), W_f h = (4, -6), W_o h = (5, -16),
        // W_g h = (-7, -3).
        let s = lstm_step(
            &chaotic(),
            &LstmState {
                h: Vector::from([1.0, 1.0]),
                c: Vector::zeros(2),
            },
            &[],
        )
        .unwrap();
        let c0 = sig(-5.0) * (-7.0f64).tanh();
        let c1 = sig(-5.0) * (-3.0f64).tanh();
        assert!((s.c[0] - c0).abs() < 1e-15 && (s.c[1] - c1).abs() < 1e-15);
        assert!((s.h[0] - sig(5.0) * c0.tanh()).abs() < 1e-15);
        assert!((s.h[1] - sig(-16.0) * c1.tanh()).abs() < 1e-15);
        // independent evaluation: c0 = -0.00669284...
        assert!((s.c[0] + 0.0066928).abs() < 1e-6);
    }

    #[test]
    fn perfect_memory_limit() {
        let mut p = LstmParams::zeros(2, 1);
        p.b_f = Vector::filled(2, 800.0);
        p.b_i = Vector::filled(2, -800.0);
        let s = LstmState {
            h: Vector::from([0.3, -0.2]),
            c: Vector::from([1.7, -4.2]),
        };
        let next = lstm_step(&p, &s, &[0.5]).unwrap();
        assert_eq!(next.c, s.c);
    }

    #[test]
    fn h_is_bounded() {
        let mut rng = Rng::new(2);
        let p = LstmParams::init(4, 3, 3.0, &mut rng);
        let mut s = LstmState::zeros(4);
        for _ in 0..200 {
            let x = rng.uniform(-5.0, 5.0, 3).unwrap();
            s = lstm_step(&p, &s, &x).unwrap();
            assert!(s.h.iter().all(|h| h.abs() < 1.0));
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(lstm_step(&LstmParams::zeros(2, 2), &LstmState::zeros(3), &[0.0; 2]).is_err());
    }
}
