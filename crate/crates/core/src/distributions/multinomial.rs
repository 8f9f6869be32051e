use rand::Rng;

use crate::error::{Error, Result};

/// Frequency distribution over a symbolic column's categories.
#[derive(Clone, Debug, PartialEq)]
pub struct Multinomial {
    probs: Vec<f64>,
}

impl Multinomial {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalized counts; `None` when every count is zero.
    pub fn from_counts(counts: &[f64]) -> Option<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        Some(Self {
            probs: counts.iter().map(|c| c / total).collect(),
        })
    }

    /// Frequency estimate from category codes in `0..n_categories`.
    pub fn fit(codes: &[usize], n_categories: usize) -> Result<Self> {
        let mut counts = vec![0.0; n_categories];
        for &c in codes {
            *counts
                .get_mut(c)
                .ok_or_else(|| Error::InvalidArgument(format!("category code {c} out of range")))? += 1.0;
        }
        Self::from_counts(&counts).ok_or_else(|| Error::InvalidArgument("no observations".into()))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_categories(&self) -> usize {
        self.probs.len()
    }

    pub fn pmf(&self, category: usize) -> f64 {
        self.probs.get(category).copied().unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut fallback = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                fallback = k;
                if u < acc {
                    return k;
                }
            }
        }
        fallback
    }

    /// Zeroes the categories outside `allowed` and renormalizes.
    pub fn restrict(&self, allowed: &[usize]) -> Option<Multinomial> {
        self.restrict_with_mass(allowed).map(|(m, _)| m)
    }

    /// Like [`restrict`](Self::restrict), also returning the retained mass.
    pub fn restrict_with_mass(&self, allowed: &[usize]) -> Option<(Multinomial, f64)> {
        let counts: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| if allowed.contains(&k) { p } else { 0.0 })
            .collect();
        let mass: f64 = counts.iter().sum();
        Self::from_counts(&counts).map(|m| (m, mass))
    }

    /// All categories attaining the largest probability.
    pub fn mode(&self) -> Vec<usize> {
        let max = self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..self.probs.len()).filter(|&k| self.probs[k] == max).collect()
    }

    pub fn param_count(&self) -> usize {
        self.probs.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frequency_estimate() {
        let m = Multinomial::fit(&[0, 0, 1, 0], 2).unwrap();
        assert_eq!(m.probs(), &[0.75, 0.25]);
        assert_eq!(m.mode(), vec![0]);
        assert_eq!(m.param_count(), 1);
    }

    #[test]
    fn restriction() {
        let m = Multinomial::new(vec![0.75, 0.25]).unwrap();
        assert_eq!(m.restrict(&[1]).unwrap().probs(), &[0.0, 1.0]);
        let (_, mass) = m.restrict_with_mass(&[1]).unwrap();
        assert_eq!(mass, 0.25);
        assert!(m.restrict(&[]).is_none());
    }

    #[test]
    fn mode_ties() {
        let m = Multinomial::new(vec![0.4, 0.2, 0.4]).unwrap();
        assert_eq!(m.mode(), vec![0, 2]);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let m = Multinomial::new(vec![0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..200).all(|_| m.sample(&mut rng) == 1));
    }

    #[test]
    fn sampling_frequencies() {
        let m = Multinomial::new(vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[m.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(m.probs()) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.01);
        }
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_mode_is_scale_free(
            counts in prop::collection::vec(0u32..50, 1..8),
            scale in 0.1f64..100.0,
        ) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let scaled: Vec<f64> = raw.iter().map(|c| c * scale).collect();
            let a = Multinomial::from_counts(&raw).unwrap();
            let b = Multinomial::from_counts(&scaled).unwrap();
            prop_assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let argmax: Vec<usize> = (0..raw.len())
                .filter(|&k| counts[k] == *counts.iter().max().unwrap())
                .collect();
            prop_assert_eq!(a.mode(), argmax.clone());
            prop_assert_eq!(b.mode(), argmax);
        }
    }
}
