use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::{distance, inf_norm, Rng, Vector};
use crate::stack::{ModelStack, StackState};

use super::{InducedMap, Orbit};

/// Post-burn-in states collected from many initial conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    /// Full states, trial after trial.
    pub points: Vec<Vector>,
    /// Hidden-state projections of `points`.
    pub projected: Vec<Vec<f64>>,
    /// Initial conditions whose orbit left every finite bound.
    pub escaped: usize,
}

impl Cloud {
    /// Per-axis `(min, max)` of the projected points.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let dim = self.projected.first().map_or(0, Vec::len);
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
        for p in &self.projected {
            for (b, &x) in out.iter_mut().zip(p) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        out
    }

    /// Largest per-axis extent; a lower bound on the diameter.
    pub fn span(&self) -> f64 {
        self.bounding_box().iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
    }

    /// Largest `‖·‖∞` over the projected points.
    pub fn max_abs(&self) -> f64 {
        self.projected.iter().map(|p| inf_norm(p)).fold(0.0, f64::max)
    }
}

/// Samples `n_init` initial states uniformly in `[lo, hi]^dim`, discards the
/// first `burn_in` iterates and keeps the next `keep`.
///
/// Trial `k` draws from `Rng::derive(seed, k)`; trials run in parallel and
/// are gathered in index order.
pub fn attractor_sample(
    map: &InducedMap,
    n_init: usize,
    init_box: (f64, f64),
    burn_in: usize,
    keep: usize,
    seed: u64,
) -> Result<Cloud> {
    if burn_in == 0 {
        return Err(Error::invalid("burn-in must be at least one step"));
    }
    map.validate()?;
    let dim = map.dim();
    let runs: Vec<Result<Option<Vec<Vector>>>> = (0..n_init)
        .into_par_iter()
        .map(|k| {
            let mut rng = Rng::derive(seed, k as u64);
            let mut u = rng.uniform(init_box.0, init_box.1, dim)?;
            let mut kept = Vec::with_capacity(keep);
            for t in 1..=burn_in + keep {
                u = map.apply(&u);
                if !u.is_finite() {
                    return Ok(None);
                }
                if t > burn_in {
                    kept.push(u.clone());
                }
            }
            Ok(Some(kept))
        })
        .collect();
    let mut cloud = Cloud {
        points: Vec::new(),
        projected: Vec::new(),
        escaped: 0,
    };
    for r in runs {
        match r? {
            Some(pts) => {
                cloud.projected.extend(pts.iter().map(|u| map.project(u)));
                cloud.points.extend(pts);
            }
            None => cloud.escaped += 1,
        }
    }
    if cloud.escaped > 0 {
        log::info!("{} of {n_init} initial states escaped", cloud.escaped);
    }
    Ok(cloud)
}

/// True if every block of `window` consecutive stored states contains one
/// with `‖u‖∞ > threshold`.
pub fn recurrently_active(orbit: &Orbit, window: usize, threshold: f64) -> bool {
    orbit
        .states
        .chunks(window.max(1))
        .all(|block| block.iter().any(|u| inf_norm(u) > threshold))
}

/// Distances between a reference orbit and a perturbed copy.
#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceTrace {
    /// `distances[t] = ‖û_t − u_t‖₂`, `t = 0..=steps`.
    pub distances: Vec<f64>,
    pub perturbation_scale: f64,
}

impl DivergenceTrace {
    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// First step at which the distance exceeds `threshold`.
    pub fn first_exceeding(&self, threshold: f64) -> Option<usize> {
        self.distances.iter().position(|&d| d > threshold)
    }
}

/// Perturbs `u0` by independent uniform noise in `[−perturb, perturb]` per
/// component and follows both orbits for `steps` steps, once per trial.
pub fn divergence_experiment(
    map: &InducedMap,
    u0: &[f64],
    perturb: f64,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<DivergenceTrace>> {
    if !(perturb >= 0.0 && perturb.is_finite()) {
        return Err(Error::invalid(format!("perturbation must be non-negative, got {perturb}")));
    }
    map.check_state(u0)?;
    (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = Rng::derive(seed, k as u64);
            let mut a = Vector::from(u0);
            let mut b: Vector = u0.iter().map(|x| x + rng.uniform_scalar(-perturb, perturb)).collect();
            if perturb == 0.0 {
                b = a.clone();
            }
            let mut distances = Vec::with_capacity(steps + 1);
            distances.push(distance(&a, &b));
            for t in 1..=steps {
                a = map.apply(&a);
                b = map.apply(&b);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("divergence trial {k} of the {} map", map.name()),
                        step: t,
                    });
                }
                distances.push(distance(&a, &b));
            }
            Ok(DivergenceTrace {
                distances,
                perturbation_scale: perturb,
            })
        })
        .collect()
}

/// Largest Lyapunov exponent (per step, natural log) from two orbits whose
/// separation is reset to `1e-9` every `renorm_interval` steps.
///
/// Returns `-inf` if the orbits merge exactly.
pub fn lyapunov_estimate(map: &InducedMap, u0: &[f64], steps: usize, renorm_interval: usize) -> Result<f64> {
    const D0: f64 = 1e-9;
    if renorm_interval == 0 || steps < renorm_interval {
        return Err(Error::invalid("need steps >= renorm_interval >= 1"));
    }
    map.check_state(u0)?;
    let dim = map.dim();
    let dir = D0 / (dim as f64).sqrt();
    let mut a = Vector::from(u0);
    let mut b: Vector = a.iter().map(|x| x + dir).collect();
    let mut log_sum = 0.0;
    let mut elapsed = 0usize;
    while elapsed + renorm_interval <= steps {
        for _ in 0..renorm_interval {
            a = map.apply(&a);
            b = map.apply(&b);
        }
        elapsed += renorm_interval;
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                context: format!("Lyapunov orbit of the {} map", map.name()),
                step: elapsed,
            });
        }
        let d = distance(&a, &b);
        if d == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_sum += (d / D0).ln();
        let s = D0 / d;
        b = a.iter().zip(b.iter()).map(|(x, y)| x + (y - x) * s).collect();
    }
    Ok(log_sum / elapsed as f64)
}

/// Runs a language model from two initial states on the same input
/// (`None`: zero input) and records the distance between the flattened states.
pub fn paired_trajectories(
    m: &ModelStack,
    a0: &StackState,
    b0: &StackState,
    tokens: Option<&[usize]>,
    steps: usize,
) -> Result<DivergenceTrace> {
    m.check_state(a0)?;
    m.check_state(b0)?;
    if let Some(t) = tokens {
        if t.len() < steps {
            return Err(Error::invalid(format!("need {steps} tokens, got {}", t.len())));
        }
        if let Some(bad) = t.iter().find(|&&x| x >= m.vocab_size()) {
            return Err(Error::invalid(format!("token {bad} out of range")));
        }
    }
    let (mut a, mut b) = (a0.clone(), b0.clone());
    let mut distances = vec![distance(&a.to_flat(), &b.to_flat())];
    for t in 0..steps {
        match tokens {
            Some(tok) => {
                a = m.step(&a, Some(tok[t]), None).next_state();
                b = m.step(&b, Some(tok[t]), None).next_state();
            }
            None => {
                a = m.step_zero_input(&a);
                b = m.step_zero_input(&b);
            }
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::NonFinite {
                context: "paired trajectories".into(),
                step: t + 1,
            });
        }
        distances.push(distance(&a.to_flat(), &b.to_flat()));
    }
    Ok(DivergenceTrace {
        distances,
        perturbation_scale: max_abs_diff(&a0.to_flat(), &b0.to_flat()),
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CfnParams;
    use crate::dynamics::iterate;

    fn on_attractor(map: &InducedMap, seed: u64) -> Vector {
        let mut rng = Rng::new(seed);
        let u0 = rng.uniform(0.0, 1.0, map.dim()).unwrap();
        iterate(map, &u0, 1000, 1000, 1).unwrap().states.pop().unwrap()
    }

    fn random_cfn_map(seed: u64) -> InducedMap {
        let mut rng = Rng::new(seed);
        let mut p = CfnParams::zeros(4, 1);
        p.u_theta.data_mut().iter_mut().for_each(|x| *x = rng.uniform_scalar(-2.0, 2.0));
        p.b_theta.iter_mut().for_each(|x| *x = rng.uniform_scalar(-2.0, 2.0));
        InducedMap::Cfn(p)
    }

    #[test]
    fn cfn_cloud_collapses() {
        let c = attractor_sample(&random_cfn_map(1), 20, (-1.0, 1.0), 2000, 10, 0).unwrap();
        assert_eq!(c.escaped, 0);
        assert!(c.max_abs() < 1e-6);
    }

    #[test]
    fn henon_cloud_bounded() {
        let c = attractor_sample(&InducedMap::henon(), 50, (0.0, 1.0), 1000, 200, 3).unwrap();
        assert!(c.points.len() >= 200);
        let bb = c.bounding_box();
        assert!(bb[0].0 >= -1.5 && bb[0].1 <= 1.5, "{bb:?}");
        assert!(bb[1].0 >= -0.45 && bb[1].1 <= 0.45, "{bb:?}");
    }

    #[test]
    fn zero_perturbation_gives_zero_trace() {
        let map = InducedMap::paper_lstm();
        let u0 = on_attractor(&map, 1);
        let tr = divergence_experiment(&map, &u0, 0.0, 100, 3, 0).unwrap();
        assert!(tr.iter().all(|t| t.max() == 0.0));
    }

    #[test]
    fn initial_distance_is_bounded_by_perturbation() {
        let map = InducedMap::paper_gru();
        let u0 = on_attractor(&map, 4);
        for t in divergence_experiment(&map, &u0, 1e-7, 10, 20, 9).unwrap() {
            assert!(t.distances[0] <= 1e-7 * (2f64).sqrt());
        }
    }

    #[test]
    fn cfn_trajectories_merge() {
        let map = random_cfn_map(7);
        let u0 = [0.9, -0.4, 0.3, 0.8];
        for t in divergence_experiment(&map, &u0, 1e-7, 200, 10, 1).unwrap() {
            assert!(*t.distances.last().unwrap() < 1e-6);
            assert!(t.max() <= t.distances[0] + 1e-15);
        }
    }

    #[test]
    fn lyapunov_signs() {
        let cfn = random_cfn_map(3);
        assert!(lyapunov_estimate(&cfn, &[0.5, 0.5, -0.5, 0.1], 2000, 10).unwrap() < 0.0);
        let lstm = InducedMap::paper_lstm();
        assert!(lyapunov_estimate(&lstm, &on_attractor(&lstm, 1), 20_000, 10).unwrap() > 0.0);
        let h = InducedMap::henon();
        let l = lyapunov_estimate(&h, &on_attractor(&h, 2), 20_000, 10).unwrap();
        assert!((l - 0.42).abs() < 0.03, "{l}");
    }

    #[test]
    fn parallel_matches_serial() {
        let map = InducedMap::paper_lstm();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| attractor_sample(&map, 16, (0.0, 1.0), 100, 20, 5).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
