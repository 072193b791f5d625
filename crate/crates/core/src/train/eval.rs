use crate::error::{Error, Result};
use crate::stack::ModelStack;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    /// Nats per predicted token.
    pub mean_nll: f64,
    pub perplexity: f64,
    pub tokens: usize,
}

/// Perplexity of `split` read as one contiguous stream, dropout off.
pub fn evaluate(m: &ModelStack, split: &[usize]) -> Result<EvalReport> {
    if split.len() < 2 {
        return Err(Error::Empty {
            what: "evaluation split".into(),
        });
    }
    let v = m.vocab_size();
    if let Some(t) = split.iter().find(|&&t| t >= v) {
        return Err(Error::invalid(format!("token {t} out of range for vocabulary of {v}")));
    }
    let mut s = m.zero_state();
    let mut nll = 0.0;
    for (t, w) in split.windows(2).enumerate() {
        let c = m.step(&s, Some(w[0]), None);
        let lp = c.logprobs[w[1]];
        if !lp.is_finite() {
            return Err(Error::NonFinite {
                context: "evaluation log-probability".into(),
                step: t,
            });
        }
        nll -= lp;
        s = c.next_state();
    }
    let tokens = split.len() - 1;
    let mean_nll = nll / tokens as f64;
    Ok(EvalReport {
        mean_nll,
        perplexity: mean_nll.exp(),
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use crate::stack::{init_stack, CellKind, StackParams};

    #[test]
    fn uniform_predictor_has_vocab_perplexity() {
        for kind in [CellKind::Cfn, CellKind::Lstm, CellKind::Gru] {
            let m = ModelStack::new(StackParams::zeros(kind, 2, 4, 10), 0.0, 0.0).unwrap();
            let split: Vec<usize> = (0..50).map(|i| i * 7 % 10).collect();
            let r = evaluate(&m, &split).unwrap();
            assert!((r.perplexity - 10.0).abs() < 1e-12, "{}", r.perplexity);
            assert_eq!(r.tokens, 49);
        }
    }

    #[test]
    fn certain_model_has_perplexity_one() {
        // Output bias puts all mass on token 3; the split repeats 3.
        let mut p = StackParams::zeros(CellKind::Cfn, 1, 2, 5);
        p.out_b[3] = 1e3;
        let m = ModelStack::new(p, 0.0, 0.0).unwrap();
        let r = evaluate(&m, &[3; 20]).unwrap();
        assert_eq!(r.perplexity, 1.0);
    }

    #[test]
    fn empty_split_is_an_error() {
        let m = init_stack(CellKind::Cfn, 1, 2, 5, &mut Rng::new(0)).unwrap();
        assert!(evaluate(&m, &[]).is_err());
        assert!(evaluate(&m, &[1]).is_err());
    }

    #[test]
    fn deterministic() {
        let m = init_stack(CellKind::Lstm, 2, 8, 20, &mut Rng::new(3)).unwrap();
        let split: Vec<usize> = (0..200).map(|i| (i * i + 3) % 20).collect();
        assert_eq!(evaluate(&m, &split).unwrap(), evaluate(&m, &split).unwrap());
        assert!(evaluate(&m, &split).unwrap().perplexity >= 1.0);
    }
}
