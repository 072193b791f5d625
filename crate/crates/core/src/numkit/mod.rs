//! Dense linear algebra, elementwise nonlinearities and seeded sampling.
//!
//! Everything is `f64` and row-major. The kernels are plain loops with a
//! fixed summation order, so results are reproducible bit-for-bit.

mod linalg;
mod rng;

pub use linalg::{Matrix, Vector};
pub(crate) use linalg::{axpy, dot};
pub use rng::Rng;

/// Logistic sigmoid `1 / (1 + e^{-x})`, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic sigmoid.
pub fn sigmoid(v: &[f64]) -> Vector {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

/// Elementwise hyperbolic tangent.
pub fn tanh(v: &[f64]) -> Vector {
    v.iter().map(|&x| x.tanh()).collect()
}

/// Euclidean norm.
pub fn l2norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-abs norm; 0 for an empty slice.
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Euclidean distance between two equal-length slices.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Log-softmax with max subtraction.
pub fn log_softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

/// `ln Σ exp(v)`, stable.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    v.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(1.0) - 0.7311).abs() < 1e-4);
        assert!((sigmoid_scalar(-1.0) - 0.2689).abs() < 1e-4);
        assert!(sigmoid_scalar(800.0) == 1.0 && sigmoid_scalar(-800.0) == 0.0);
    }

    #[test]
    fn tanh_zero() {
        assert_eq!(tanh(&[0.0])[0], 0.0);
    }

    #[test]
    fn l2norm_examples() {
        assert_eq!(l2norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(l2norm(&[3.0, 4.0]), 5.0);
        assert_eq!(l2norm(&[1.0, 1.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn uniform_logits_give_minus_ln_v() {
        let lp = log_softmax(&[0.3; 10]);
        for x in lp.iter() {
            assert!((x + 10f64.ln()).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -30.0f64..30.0) {
            prop_assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-14);
            let s = sigmoid_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
        }

        #[test]
        fn tanh_non_expansive(x in -1e6f64..1e6) {
            let t = x.tanh();
            prop_assert!(t.abs() <= x.abs());
            prop_assert!(t.abs() <= 1.0);
            if x.abs() < 18.0 {
                prop_assert!(t.abs() < 1.0);
            }
        }

        #[test]
        fn log_softmax_normalised(v in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let lp = log_softmax(&v);
            prop_assert!(logsumexp(&lp).abs() < 1e-9);
        }
    }
}
