//! GRU in the convex-combination form:
//!
//! ```text
//! z = σ(W_z h + V_z x + b_z)    r = σ(W_r h + V_r x + b_r)
//! h' = (1 - z) ⊙ h + z ⊙ tanh(U (r ⊙ h) + V_u x)
//! ```
//!
//! With `V_* = 0` and zero biases this is exactly the input-free GRU map.

use super::{
    backprop_affine, check_len, check_matrix, preactivation, sigmoid_in_place, GateTrace, Params,
    StepInput, StepInputGrads,
};
use crate::error::Result;
use crate::numkit::{Matrix, Rng, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub u: Matrix,
    pub v_z: Matrix,
    pub v_r: Matrix,
    pub v_u: Matrix,
    pub b_z: Vector,
    pub b_r: Vector,
}

impl GruParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GruParams {
            w_z: Matrix::zeros(hidden, hidden),
            w_r: Matrix::zeros(hidden, hidden),
            u: Matrix::zeros(hidden, hidden),
            v_z: Matrix::zeros(hidden, input),
            v_r: Matrix::zeros(hidden, input),
            v_u: Matrix::zeros(hidden, input),
            b_z: Vector::zeros(hidden),
            b_r: Vector::zeros(hidden),
        }
    }

    /// Matrices uniform in `[-scale, scale)`, zero biases.
    pub fn init(hidden: usize, input: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = GruParams::zeros(hidden, input);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.u, &mut p.v_z, &mut p.v_r, &mut p.v_u] {
            for x in m.data_mut() {
                *x = rng.uniform_scalar(-scale, scale);
            }
        }
        p
    }

    pub fn autonomous(w_z: Matrix, w_r: Matrix, u: Matrix) -> Self {
        let n = u.rows();
        GruParams {
            w_z,
            w_r,
            u,
            ..GruParams::zeros(n, 0)
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.rows()
    }

    pub fn input(&self) -> usize {
        self.v_u.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        check_matrix("gru.W_z", &self.w_z, h, h)?;
        check_matrix("gru.W_r", &self.w_r, h, h)?;
        check_matrix("gru.U", &self.u, h, h)?;
        check_matrix("gru.V_z", &self.v_z, h, i)?;
        check_matrix("gru.V_r", &self.v_r, h, i)?;
        check_matrix("gru.V_u", &self.v_u, h, i)?;
        check_len("gru.b_z", &self.b_z, h)?;
        check_len("gru.b_r", &self.b_r, h)
    }
}

impl Params for GruParams {
    fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        for (name, m) in [
            ("W_z", &self.w_z),
            ("W_r", &self.w_r),
            ("U", &self.u),
            ("V_z", &self.v_z),
            ("V_r", &self.v_r),
            ("V_u", &self.v_u),
        ] {
            f(name, m.rows(), m.cols(), m.data());
        }
        f("b_z", 1, self.b_z.len(), &self.b_z);
        f("b_r", 1, self.b_r.len(), &self.b_r);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("W_z", self.w_z.data_mut());
        f("W_r", self.w_r.data_mut());
        f("U", self.u.data_mut());
        f("V_z", self.v_z.data_mut());
        f("V_r", self.v_r.data_mut());
        f("V_u", self.v_u.data_mut());
        f("b_z", &mut self.b_z);
        f("b_r", &mut self.b_r);
    }

    fn zeros_like(&self) -> Self {
        GruParams::zeros(self.hidden(), self.input())
    }
}

#[derive(Clone, Debug)]
pub struct GruCache {
    pub z: Vector,
    pub r: Vector,
    pub cand: Vector,
    pub h: Vector,
    /// `r ⊙ h_prev`
    rh: Vector,
    h_prev: Vector,
    h_gate: Vector,
    x: Vector,
    x_gate: Vector,
}

impl GruCache {
    pub fn trace(&self) -> GateTrace {
        GateTrace {
            theta: self.z.iter().map(|z| 1.0 - z).collect(),
            eta: self.z.clone(),
        }
    }
}

pub fn forward(p: &GruParams, inp: StepInput<'_>) -> GruCache {
    let n = p.hidden();
    let mut z = preactivation(&p.w_z, inp.h_gate, &p.v_z, inp.x_gate, Some(&p.b_z));
    sigmoid_in_place(&mut z);
    let mut r = preactivation(&p.w_r, inp.h_gate, &p.v_r, inp.x_gate, Some(&p.b_r));
    sigmoid_in_place(&mut r);
    let rh: Vector = (0..n).map(|k| r[k] * inp.h_prev[k]).collect();
    let mut cand = preactivation(&p.u, &rh, &p.v_u, inp.x, None);
    super::tanh_in_place(&mut cand);
    let h = (0..n)
        .map(|k| (1.0 - z[k]) * inp.h_prev[k] + z[k] * cand[k])
        .collect();
    GruCache {
        z,
        r,
        cand,
        h,
        rh,
        h_prev: inp.h_prev.into(),
        h_gate: inp.h_gate.into(),
        x: inp.x.into(),
        x_gate: inp.x_gate.into(),
    }
}

pub fn backward(p: &GruParams, c: &GruCache, dh: &[f64], g: &mut GruParams) -> StepInputGrads {
    let n = p.hidden();
    let mut out = StepInputGrads::zeros(n, p.input());
    let mut d_z = Vector::zeros(n);
    let mut d_cand = Vector::zeros(n);
    for k in 0..n {
        let z = c.z[k];
        d_z[k] = dh[k] * (c.cand[k] - c.h_prev[k]) * z * (1.0 - z);
        d_cand[k] = dh[k] * z * (1.0 - c.cand[k] * c.cand[k]);
        out.h_prev[k] = dh[k] * (1.0 - z);
    }
    let mut d_rh = Vector::zeros(n);
    backprop_affine(
        &d_cand, &p.u, &c.rh, &p.v_u, &c.x, &mut g.u, &mut g.v_u, None, &mut d_rh, &mut out.x,
    );
    let mut d_r = Vector::zeros(n);
    for k in 0..n {
        out.h_prev[k] += d_rh[k] * c.r[k];
        d_r[k] = d_rh[k] * c.h_prev[k] * c.r[k] * (1.0 - c.r[k]);
    }
    backprop_affine(
        &d_z, &p.w_z, &c.h_gate, &p.v_z, &c.x_gate, &mut g.w_z, &mut g.v_z, Some(&mut g.b_z),
        &mut out.h_gate, &mut out.x_gate,
    );
    backprop_affine(
        &d_r, &p.w_r, &c.h_gate, &p.v_r, &c.x_gate, &mut g.w_r, &mut g.v_r, Some(&mut g.b_r),
        &mut out.h_gate, &mut out.x_gate,
    );
    out
}

/// One GRU step.
pub fn gru_step(p: &GruParams, h_prev: &[f64], x: &[f64]) -> Result<Vector> {
    p.validate()?;
    check_len("gru_step h_prev", h_prev, p.hidden())?;
    check_len("gru_step x", x, p.input())?;
    Ok(forward(p, StepInput::plain(h_prev, x)).h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_fixed() {
        let p = GruParams::init(3, 2, 1.0, &mut Rng::new(1));
        let h = gru_step(&p, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn closed_update_gate_copies_state() {
        let mut p = GruParams::init(2, 2, 1.0, &mut Rng::new(4));
        p.w_z = Matrix::zeros(2, 2);
        p.v_z = Matrix::zeros(2, 2);
        p.b_z = Vector::filled(2, -800.0);
        let h = gru_step(&p, &[0.25, -0.75], &[1.0, 2.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.25, -0.75]);
    }

    #[test]
    fn two_unit_map_by_hand() {
        let p = GruParams::autonomous(
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]),
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]),
            Matrix::from_rows(&[[-5.0, -8.0], [8.0, 5.0]]),
        );
        // Independent scalar evaluation at h = (0.5, 0.5).
        let h = gru_step(&p, &[0.5, 0.5], &[]).unwrap();
        assert!((h[0] + 0.4333081856807323).abs() < 1e-14, "{}", h[0]);
        assert!((h[1] - 0.8650820388302607).abs() < 1e-14, "{}", h[1]);
    }
}
