//! Randomized checks of the CFN decay estimates over many instances.

use rayon::prelude::*;

use crate::error::Result;
use crate::numkit::{Rng, Vector};

use super::{random_cfn, run_cfn, CfnTrace, verify_lemma1_sweep, verify_zero_attractor, DecayCertificate, ZeroAttractorConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Config {
    pub trials: usize,
    /// Trial `k` uses `1 + k % max_dim` units.
    pub max_dim: usize,
    /// Weights and biases uniform in `[-weight_scale, weight_scale]`.
    pub weight_scale: f64,
    /// Inputs uniform in `[-input_scale, input_scale]`; half the steps get none.
    pub input_scale: f64,
    pub k_max: usize,
    /// Number of window starts per component.
    pub starts: usize,
    pub seed: u64,
}

impl Default for Lemma1Config {
    fn default() -> Self {
        Lemma1Config {
            trials: 1000,
            max_dim: 16,
            weight_scale: 2.0,
            input_scale: 2.0,
            k_max: 50,
            starts: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lemma1Summary {
    pub trials: usize,
    pub certificates: u64,
    pub violations: u64,
    /// Largest `observed − bound`.
    pub worst_margin: f64,
    pub first_violation: Option<DecayCertificate>,
}

impl Lemma1Summary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// The random CFN run used as trial `k` of [`lemma1_suite`].
pub fn lemma1_instance(cfg: &Lemma1Config, k: usize) -> Result<CfnTrace> {
    let mut rng = Rng::derive(cfg.seed, k as u64);
    let n = 1 + k % cfg.max_dim.max(1);
    let p = random_cfn(n, n, cfg.weight_scale, &mut rng);
    let xs: Vec<Vector> = (0..cfg.starts + cfg.k_max)
        .map(|_| {
            if rng.bernoulli(0.5) {
                Vector::zeros(n)
            } else {
                rng.uniform(-cfg.input_scale, cfg.input_scale, n).expect("ordered bounds")
            }
        })
        .collect();
    run_cfn(&p, &Vector::zeros(n), &xs)
}

/// Every component, window start `1..=starts` and `k ≤ k_max` of
/// `trials` random CFN runs.
pub fn lemma1_suite(cfg: &Lemma1Config) -> Result<Lemma1Summary> {
    let per_trial: Vec<Result<Lemma1Summary>> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| {
            let tr = lemma1_instance(cfg, k)?;
            let n = tr.h[0].len();
            let mut s = Lemma1Summary {
                trials: 1,
                worst_margin: f64::NEG_INFINITY,
                ..Default::default()
            };
            for i in 0..n {
                for t in 1..=cfg.starts {
                    for c in verify_lemma1_sweep(&tr, i, t, cfg.k_max)? {
                        s.certificates += 1;
                        s.worst_margin = s.worst_margin.max(c.observed - c.bound);
                        if !c.satisfied {
                            s.violations += 1;
                            s.first_violation.get_or_insert(c);
                        }
                    }
                }
            }
            Ok(s)
        })
        .collect();
    let mut total = Lemma1Summary {
        worst_margin: f64::NEG_INFINITY,
        ..Default::default()
    };
    for s in per_trial {
        let s = s?;
        total.trials += s.trials;
        total.certificates += s.certificates;
        total.violations += s.violations;
        total.worst_margin = total.worst_margin.max(s.worst_margin);
        if total.first_violation.is_none() {
            total.first_violation = s.first_violation;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma2Config {
    pub maps: usize,
    /// Map `k` has `1 + k % max_dim` units, unless `dim` is set.
    pub max_dim: usize,
    pub dim: Option<usize>,
    pub weight_scale: f64,
    pub attractor: ZeroAttractorConfig,
    pub seed: u64,
}

impl Default for Lemma2Config {
    fn default() -> Self {
        Lemma2Config {
            maps: 100,
            max_dim: 16,
            dim: None,
            weight_scale: 2.0,
            attractor: ZeroAttractorConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lemma2Summary {
    pub maps: usize,
    pub orbits: usize,
    pub failed_maps: usize,
    pub outside_bound: usize,
    pub worst_steps: usize,
}

impl Lemma2Summary {
    pub fn passed(&self) -> bool {
        self.failed_maps == 0 && self.outside_bound == 0
    }
}

/// Runs [`verify_zero_attractor`] on `maps` random input-free CFN maps.
pub fn lemma2_suite(cfg: &Lemma2Config) -> Result<Lemma2Summary> {
    let mut s = Lemma2Summary::default();
    for k in 0..cfg.maps {
        let mut rng = Rng::derive(cfg.seed, k as u64);
        let n = cfg.dim.unwrap_or(1 + k % cfg.max_dim.max(1));
        let p = random_cfn(n, 1, cfg.weight_scale, &mut rng);
        let zc = ZeroAttractorConfig {
            seed: rng.next_u64(),
            ..cfg.attractor.clone()
        };
        let r = verify_zero_attractor(&p, &zc)?;
        s.maps += 1;
        s.orbits += r.orbits;
        s.failed_maps += usize::from(!r.passed);
        s.outside_bound += usize::from(!r.within_bound);
        s.worst_steps = s.worst_steps.max(r.worst_steps);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lemma1_suite() {
        let s = lemma1_suite(&Lemma1Config {
            trials: 16,
            ..Default::default()
        })
        .unwrap();
        assert!(s.passed(), "{s:?}");
        assert_eq!(s.trials, 16);
        // Σ_{n=1}^{16} n components × 50 starts × 51 windows.
        assert_eq!(s.certificates, 136 * 50 * 51);
    }

    #[test]
    fn small_lemma2_suite() {
        let s = lemma2_suite(&Lemma2Config {
            maps: 8,
            attractor: ZeroAttractorConfig {
                n_init: 10,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap();
        assert!(s.passed(), "{s:?}");
        assert_eq!(s.orbits, 8 * 20);
    }
}
