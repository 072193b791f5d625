use crate::numkit::Rng;

/// A fixed Bernoulli keep-mask with inverted-dropout scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct DropMask {
    pub keep: Vec<bool>,
    /// `1 / (1 - rate)`
    pub scale: f64,
}

impl DropMask {
    /// Keeps each entry independently with probability `1 - rate`.
    pub fn sample(len: usize, rate: f64, rng: &mut Rng) -> Self {
        if rate == 0.0 {
            return DropMask::ones(len);
        }
        let keep = (0..len).map(|_| !rng.bernoulli(rate)).collect();
        DropMask {
            keep,
            scale: 1.0 / (1.0 - rate),
        }
    }

    pub fn ones(len: usize) -> Self {
        DropMask {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len().max(1) as f64
    }

    #[inline]
    pub fn factor(&self, i: usize) -> f64 {
        if self.keep[i] {
            self.scale
        } else {
            0.0
        }
    }

    /// `v ⊙ mask`, scaled.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().enumerate().map(|(i, x)| x * self.factor(i)).collect()
    }

    /// Multiplies a gradient by the mask in place.
    pub fn apply_in_place(&self, v: &mut [f64]) {
        for (i, x) in v.iter_mut().enumerate() {
            *x *= self.factor(i);
        }
    }
}

/// All masks for one unrolled window of a stack of `depth` layers.
///
/// `between[0]` follows the embedding, `between[ℓ]` follows layer `ℓ`, and
/// `between[depth]` precedes the output projection. `recurrent[ℓ]` and
/// `input[ℓ]` are the gate masks of layer `ℓ` for its previous state and its
/// input.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub between: Vec<DropMask>,
    pub recurrent: Vec<DropMask>,
    pub input: Vec<DropMask>,
}

impl MaskSet {
    pub fn sample(depth: usize, hidden: usize, p: f64, q: f64, rng: &mut Rng) -> Self {
        let between = (0..=depth).map(|_| DropMask::sample(hidden, p, rng)).collect();
        let mut recurrent = Vec::with_capacity(depth);
        let mut input = Vec::with_capacity(depth);
        for _ in 0..depth {
            recurrent.push(DropMask::sample(hidden, q, rng));
            input.push(DropMask::sample(hidden, q, rng));
        }
        MaskSet {
            between,
            recurrent,
            input,
        }
    }
}

/// Masks for a window: one set reused at every step (variational style) or a
/// fresh set per step.
#[derive(Clone, Debug)]
pub enum WindowMasks {
    Fixed(MaskSet),
    PerStep(Vec<MaskSet>),
}

impl WindowMasks {
    pub fn at(&self, t: usize) -> &MaskSet {
        match self {
            WindowMasks::Fixed(m) => m,
            WindowMasks::PerStep(v) => &v[t],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let m = DropMask::sample(50, 0.0, &mut Rng::new(0));
        assert_eq!(m.scale, 1.0);
        assert!(m.keep.iter().all(|&k| k));
    }

    #[test]
    fn half_rate_concentrates() {
        // Binomial(1e5, 0.5) has sd 158, so 0.01 is over 6 sd.
        let m = DropMask::sample(100_000, 0.5, &mut Rng::new(9));
        assert!((m.kept_fraction() - 0.5).abs() < 0.01);
        assert_eq!(m.scale, 2.0);
    }

    #[test]
    fn expected_scale_is_one() {
        let m = DropMask::sample(200_000, 0.3, &mut Rng::new(1));
        assert!((m.kept_fraction() * m.scale - 1.0).abs() < 0.01);
    }

    #[test]
    fn seeded_masks_repeat() {
        let a = MaskSet::sample(2, 16, 0.4, 0.3, &mut Rng::new(5));
        let b = MaskSet::sample(2, 16, 0.4, 0.3, &mut Rng::new(5));
        assert_eq!(a, b);
        assert_eq!(a.between.len(), 3);
        assert_eq!(a.recurrent.len(), 2);
    }
}
