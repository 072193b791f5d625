//! The chaos-free cell:
//!
//! ```text
//! θ = σ(U_θ h + V_θ x + b_θ)
//! η = σ(U_η h + V_η x + b_η)
//! h' = θ ⊙ tanh(h) + η ⊙ tanh(W x)
//! ```

use super::{
    backprop_affine, check_len, check_matrix, preactivation, sigmoid_in_place, GateTrace, Params,
    StepInput, StepInputGrads,
};
use crate::error::Result;
use crate::numkit::{Matrix, Rng, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct CfnParams {
    /// Input embedding, `hidden x input`.
    pub w: Matrix,
    pub u_theta: Matrix,
    pub v_theta: Matrix,
    pub b_theta: Vector,
    pub u_eta: Matrix,
    pub v_eta: Matrix,
    pub b_eta: Vector,
}

impl CfnParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        CfnParams {
            w: Matrix::zeros(hidden, input),
            u_theta: Matrix::zeros(hidden, hidden),
            v_theta: Matrix::zeros(hidden, input),
            b_theta: Vector::zeros(hidden),
            u_eta: Matrix::zeros(hidden, hidden),
            v_eta: Matrix::zeros(hidden, input),
            b_eta: Vector::zeros(hidden),
        }
    }

    /// Matrices uniform in `[-scale, scale)`, gate biases `b_θ = 1`, `b_η = -1`.
    pub fn init(hidden: usize, input: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut p = CfnParams::zeros(hidden, input);
        for m in [
            &mut p.w,
            &mut p.u_theta,
            &mut p.v_theta,
            &mut p.u_eta,
            &mut p.v_eta,
        ] {
            for x in m.data_mut() {
                *x = rng.uniform_scalar(-scale, scale);
            }
        }
        p.b_theta = Vector::filled(hidden, 1.0);
        p.b_eta = Vector::filled(hidden, -1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.u_theta.rows()
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden(), self.input());
        check_matrix("cfn.W", &self.w, h, i)?;
        check_matrix("cfn.U_theta", &self.u_theta, h, h)?;
        check_matrix("cfn.V_theta", &self.v_theta, h, i)?;
        check_len("cfn.b_theta", &self.b_theta, h)?;
        check_matrix("cfn.U_eta", &self.u_eta, h, h)?;
        check_matrix("cfn.V_eta", &self.v_eta, h, i)?;
        check_len("cfn.b_eta", &self.b_eta, h)
    }

    /// The input-free map `u ↦ σ(U_θ u + b_θ) ⊙ tanh(u)`.
    pub fn induced(&self, u: &[f64]) -> Vector {
        let mut theta = Vector::zeros(self.hidden());
        self.u_theta.matvec_into(u, &mut theta);
        theta
            .iter()
            .zip(self.b_theta.iter())
            .zip(u)
            .map(|((t, b), x)| crate::numkit::sigmoid_scalar(t + b) * x.tanh())
            .collect()
    }
}

impl Params for CfnParams {
    fn visit(&self, f: &mut dyn FnMut(&str, usize, usize, &[f64])) {
        f("W", self.w.rows(), self.w.cols(), self.w.data());
        f("U_theta", self.u_theta.rows(), self.u_theta.cols(), self.u_theta.data());
        f("V_theta", self.v_theta.rows(), self.v_theta.cols(), self.v_theta.data());
        f("b_theta", 1, self.b_theta.len(), &self.b_theta);
        f("U_eta", self.u_eta.rows(), self.u_eta.cols(), self.u_eta.data());
        f("V_eta", self.v_eta.rows(), self.v_eta.cols(), self.v_eta.data());
        f("b_eta", 1, self.b_eta.len(), &self.b_eta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("W", self.w.data_mut());
        f("U_theta", self.u_theta.data_mut());
        f("V_theta", self.v_theta.data_mut());
        f("b_theta", &mut self.b_theta);
        f("U_eta", self.u_eta.data_mut());
        f("V_eta", self.v_eta.data_mut());
        f("b_eta", &mut self.b_eta);
    }

    fn zeros_like(&self) -> Self {
        CfnParams::zeros(self.hidden(), self.input())
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct CfnCache {
    pub theta: Vector,
    pub eta: Vector,
    /// `tanh(h_prev)`
    pub tanh_prev: Vector,
    /// `W x` before the nonlinearity.
    pub wx: Vector,
    /// `tanh(W x)`
    pub cand: Vector,
    pub h: Vector,
    h_gate: Vector,
    x: Vector,
    x_gate: Vector,
}

impl CfnCache {
    pub fn trace(&self) -> GateTrace {
        GateTrace {
            theta: self.theta.clone(),
            eta: self.eta.clone(),
        }
    }
}

/// Forward step without shape checks.
pub fn forward(p: &CfnParams, inp: StepInput<'_>) -> CfnCache {
    let mut theta = preactivation(&p.u_theta, inp.h_gate, &p.v_theta, inp.x_gate, Some(&p.b_theta));
    sigmoid_in_place(&mut theta);
    let mut eta = preactivation(&p.u_eta, inp.h_gate, &p.v_eta, inp.x_gate, Some(&p.b_eta));
    sigmoid_in_place(&mut eta);
    let tanh_prev: Vector = inp.h_prev.iter().map(|x| x.tanh()).collect();
    let mut wx = Vector::zeros(p.hidden());
    p.w.matvec_into(inp.x, &mut wx);
    let cand: Vector = wx.iter().map(|x| x.tanh()).collect();
    let h = (0..p.hidden())
        .map(|i| theta[i] * tanh_prev[i] + eta[i] * cand[i])
        .collect();
    CfnCache {
        theta,
        eta,
        tanh_prev,
        wx,
        cand,
        h,
        h_gate: inp.h_gate.into(),
        x: inp.x.into(),
        x_gate: inp.x_gate.into(),
    }
}

/// Accumulates parameter gradients into `g` and returns input gradients,
/// given `dh = ∂L/∂h'`.
pub fn backward(p: &CfnParams, c: &CfnCache, dh: &[f64], g: &mut CfnParams) -> StepInputGrads {
    let n = p.hidden();
    let mut out = StepInputGrads::zeros(n, p.input());
    let mut d_theta = Vector::zeros(n);
    let mut d_eta = Vector::zeros(n);
    let mut d_cand = Vector::zeros(n);
    for i in 0..n {
        let th = c.theta[i];
        let et = c.eta[i];
        d_theta[i] = dh[i] * c.tanh_prev[i] * th * (1.0 - th);
        d_eta[i] = dh[i] * c.cand[i] * et * (1.0 - et);
        d_cand[i] = dh[i] * et * (1.0 - c.cand[i] * c.cand[i]);
        out.h_prev[i] = dh[i] * th * (1.0 - c.tanh_prev[i] * c.tanh_prev[i]);
    }
    g.w.outer_acc(&d_cand, &c.x);
    p.w.matvec_t_acc(&d_cand, &mut out.x);
    backprop_affine(
        &d_theta,
        &p.u_theta,
        &c.h_gate,
        &p.v_theta,
        &c.x_gate,
        &mut g.u_theta,
        &mut g.v_theta,
        Some(&mut g.b_theta),
        &mut out.h_gate,
        &mut out.x_gate,
    );
    backprop_affine(
        &d_eta,
        &p.u_eta,
        &c.h_gate,
        &p.v_eta,
        &c.x_gate,
        &mut g.u_eta,
        &mut g.v_eta,
        Some(&mut g.b_eta),
        &mut out.h_gate,
        &mut out.x_gate,
    );
    out
}

/// One CFN step: returns the next hidden state and the gate values.
pub fn cfn_step(p: &CfnParams, h_prev: &[f64], x: &[f64]) -> Result<(Vector, GateTrace)> {
    p.validate()?;
    check_len("cfn_step h_prev", h_prev, p.hidden())?;
    check_len("cfn_step x", x, p.input())?;
    let c = forward(p, StepInput::plain(h_prev, x));
    let trace = c.trace();
    Ok((c.h, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{sigmoid_scalar, Rng};
    use proptest::prelude::*;

    fn scalar(w: f64, b_theta: f64, b_eta: f64) -> CfnParams {
        let mut p = CfnParams::zeros(1, 1);
        p.w.set(0, 0, w);
        p.b_theta[0] = b_theta;
        p.b_eta[0] = b_eta;
        p
    }

    #[test]
    fn zero_state_zero_input_is_fixed() {
        let mut rng = Rng::new(5);
        let p = CfnParams::init(4, 3, 0.5, &mut rng);
        let (h, _) = cfn_step(&p, &[0.0; 4], &[0.0; 3]).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_scalar() {
        // Oracle: 0.5 * tanh(10), evaluated by hand.
        let (h, tr) = cfn_step(&scalar(10.0, 0.0, 0.0), &[0.0], &[1.0]).unwrap();
        assert!((h[0] - 0.5 * 10f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.49999999).abs() < 1e-8);
        assert_eq!(tr.eta[0], 0.5);
    }

    #[test]
    fn relaxation_scalar() {
        // Oracle: σ(1) · tanh(0.5) = 0.731059 · 0.462117 = 0.337837
        let (h, _) = cfn_step(&scalar(0.0, 1.0, -1.0), &[0.5], &[0.0]).unwrap();
        assert!((h[0] - 0.3378).abs() < 1e-4, "{}", h[0]);
        assert!((h[0] - sigmoid_scalar(1.0) * 0.5f64.tanh()).abs() < 1e-16);
    }

    #[test]
    fn induced_orbit_stays_in_unit_box() {
        let mut rng = Rng::new(8);
        let p = CfnParams::init(6, 1, 2.0, &mut rng);
        let mut u = rng.uniform(-10.0, 10.0, 6).unwrap();
        for _ in 0..100 {
            u = p.induced(&u);
            assert!(u.iter().all(|x| x.abs() < 1.0));
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = CfnParams::zeros(3, 2);
        assert!(cfn_step(&p, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(cfn_step(&p, &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn deterministic() {
        let mut rng = Rng::new(11);
        let p = CfnParams::init(5, 5, 1.0, &mut rng);
        let h = rng.uniform(-1.0, 1.0, 5).unwrap();
        let x = rng.uniform(-1.0, 1.0, 5).unwrap();
        let a = cfn_step(&p, &h, &x).unwrap();
        let b = cfn_step(&p, &h, &x).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn bounded_from_zero_and_lemma_step(seed in 0u64..500, steps in 1usize..40) {
            let mut rng = Rng::new(seed);
            let n = 1 + rng.index(6);
            let m = 1 + rng.index(6);
            let p = CfnParams::init(n, m, 2.0, &mut rng);
            let mut h = Vector::zeros(n);
            for _ in 0..steps {
                let x = rng.uniform(-3.0, 3.0, m).unwrap();
                let c = forward(&p, StepInput::plain(&h, &x));
                for i in 0..n {
                    prop_assert!(c.theta[i] > 0.0 && c.theta[i] < 1.0);
                    prop_assert!(c.eta[i] > 0.0 && c.eta[i] < 1.0);
                    let rhs = c.theta[i] * h[i].abs() + c.eta[i] * c.wx[i].abs();
                    prop_assert!(c.h[i].abs() <= rhs);
                }
                h = c.h;
                prop_assert!(h.iter().all(|x| x.abs() < 2.0));
            }
        }
    }
}
