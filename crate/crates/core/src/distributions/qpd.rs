use rand::Rng;

use crate::error::{Error, Result};

/// Piecewise-uniform quantile-parameterized distribution.
///
/// Interval `k` is `[b_k, b_{k+1})`, except the last which is closed. The
/// density on interval `k` is `masses[k] / (b_{k+1} - b_k)` and zero outside
/// `[b_0, b_K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Qpd {
    breakpoints: Vec<f64>,
    masses: Vec<f64>,
    /// `cumulative[k] = masses[0] + ... + masses[k-1]`, `K + 1` entries.
    cumulative: Vec<f64>,
}

/// One interval together with its density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityInterval {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

impl Qpd {
    /// Validates and stores the parameters as given (no renormalization).
    pub fn new(breakpoints: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || breakpoints.len() != masses.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} breakpoints for {} masses",
                breakpoints.len(),
                masses.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if masses.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("masses sum to {total}")));
        }
        let mut cumulative = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for p in &masses {
            acc += p;
            cumulative.push(acc);
        }
        Ok(Self {
            breakpoints,
            masses,
            cumulative,
        })
    }

    /// Fits breakpoints at the empirical quantiles of levels `0, 1/r, ..., 1`
    /// (linear interpolation between order statistics). Zero-width intervals
    /// are merged, their mass pooled into the next surviving interval (the
    /// last one for a trailing run).
    pub fn fit(samples: &[f64], resolution: usize) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("QPD fit needs at least 2 samples".into()));
        }
        if resolution == 0 {
            return Err(Error::InvalidArgument("resolution must be at least 1".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        if lo == hi {
            return Err(Error::DegenerateSupport(lo));
        }

        let last = (sorted.len() - 1) as f64;
        let quantile = |p: f64| -> f64 {
            let h = last * p;
            let i = h.floor() as usize;
            if i + 1 >= sorted.len() {
                return sorted[sorted.len() - 1];
            }
            sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
        };

        let unit = 1.0 / resolution as f64;
        let mut breakpoints = vec![lo];
        let mut mass_units: Vec<usize> = Vec::new();
        let mut pending = 0usize;
        for k in 1..=resolution {
            let q = if k == resolution { hi } else { quantile(k as f64 * unit) };
            pending += 1;
            if q > *breakpoints.last().unwrap() {
                breakpoints.push(q);
                mass_units.push(pending);
                pending = 0;
            }
        }
        if pending > 0 {
            *mass_units.last_mut().expect("lo < hi leaves one interval") += pending;
        }
        let masses = mass_units.iter().map(|&u| u as f64 * unit).collect::<Vec<_>>();
        let total: f64 = masses.iter().sum();
        Qpd::new(breakpoints, masses.into_iter().map(|p| p / total).collect())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn n_intervals(&self) -> usize {
        self.masses.len()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.masses.len()])
    }

    pub fn interval_density(&self, k: usize) -> f64 {
        self.masses[k] / (self.breakpoints[k + 1] - self.breakpoints[k])
    }

    /// Index of the interval holding `x`, or `None` outside the support.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let k = self.breakpoints.partition_point(|&b| b <= x) - 1;
        Some(k.min(self.masses.len() - 1))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.locate(x).map_or(0.0, |k| self.interval_density(k))
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.locate(x)
            .map_or(f64::NEG_INFINITY, |k| self.interval_density(k).ln())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let k = self.locate(x).expect("inside support");
        let frac = (x - self.breakpoints[k]) / (self.breakpoints[k + 1] - self.breakpoints[k]);
        (self.cumulative[k] + self.masses[k] * frac).min(1.0)
    }

    /// Generalized inverse of [`cdf`](Self::cdf); `u` is clamped to `[0, 1]`.
    pub fn ppf(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        if u <= 0.0 {
            return lo;
        }
        if u >= 1.0 {
            return hi;
        }
        let k = (self.cumulative.partition_point(|&c| c <= u) - 1).min(self.masses.len() - 1);
        let frac = ((u - self.cumulative[k]) / self.masses[k]).clamp(0.0, 1.0);
        self.breakpoints[k] + frac * (self.breakpoints[k + 1] - self.breakpoints[k])
    }

    /// Two-stage draw: an interval index by mass, then a uniform point in it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = (self.cumulative.partition_point(|&c| c <= u) - 1).min(self.masses.len() - 1);
        let v: f64 = rng.random();
        self.breakpoints[k] + v * (self.breakpoints[k + 1] - self.breakpoints[k])
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Keeps every interval that intersects `[lo, hi]`, whole, and renormalizes.
    /// `None` when nothing intersects.
    pub fn restrict(&self, lo: f64, hi: f64) -> Option<Qpd> {
        self.restrict_with_mass(lo, hi).map(|(q, _)| q)
    }

    /// Like [`restrict`](Self::restrict), also returning the retained mass
    /// before renormalization.
    pub fn restrict_with_mass(&self, lo: f64, hi: f64) -> Option<(Qpd, f64)> {
        assert!(lo <= hi, "restrict needs lo <= hi");
        let last = self.masses.len() - 1;
        let hits = |k: usize| {
            let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
            a <= hi && (b > lo || (k == last && b >= lo))
        };
        let first = (0..=last).find(|&k| hits(k))?;
        let end = (first..=last).take_while(|&k| hits(k)).last().unwrap();
        let retained: f64 = self.masses[first..=end].iter().sum();
        let masses = self.masses[first..=end].iter().map(|p| p / retained).collect();
        let q = Qpd::new(self.breakpoints[first..=end + 1].to_vec(), masses).ok()?;
        Some((q, retained))
    }

    /// All intervals whose density equals the maximum (ties included, up to a
    /// relative 1e-12).
    pub fn max_density_intervals(&self) -> Vec<DensityInterval> {
        let densities: Vec<f64> = (0..self.masses.len()).map(|k| self.interval_density(k)).collect();
        let max = densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        densities
            .iter()
            .enumerate()
            .filter(|(_, &d)| d >= max * (1.0 - 1e-12))
            .map(|(k, &d)| DensityInterval {
                lo: self.breakpoints[k],
                hi: self.breakpoints[k + 1],
                density: d,
            })
            .collect()
    }

    /// `K + 1` breakpoints plus `K - 1` free masses.
    pub fn param_count(&self) -> usize {
        2 * self.masses.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(b: &[f64], m: &[f64]) -> Qpd {
        Qpd::new(b.to_vec(), m.to_vec()).unwrap()
    }

    #[test]
    fn single_interval_fit() {
        let d = Qpd::fit(&[0.0, 1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(d.breakpoints(), &[0.0, 3.0]);
        assert_eq!(d.masses(), &[1.0]);
        assert!((d.pdf(1.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_samples() {
        assert!(matches!(Qpd::fit(&[5.0; 4], 8), Err(Error::DegenerateSupport(x)) if x == 5.0));
        assert!(Qpd::fit(&[1.0], 2).is_err());
        assert!(Qpd::fit(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn tied_quantiles_are_pooled() {
        // Quantiles at 0, .25, .5, .75, 1 of {0,0,0,0,0,1}: 0,0,0,0.25... merges three.
        let d = Qpd::fit(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 4).unwrap();
        assert!(d.breakpoints().windows(2).all(|w| w[0] < w[1]));
        let total: f64 = d.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(d.support(), (0.0, 1.0));
        // The first non-zero-width interval absorbed the tied levels.
        assert!((d.masses()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_conventions() {
        let d = q(&[0.0, 3.0], &[1.0]);
        assert!((d.pdf(1.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.pdf(3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.pdf(3.0001), 0.0);
        assert_eq!(d.pdf(-0.1), 0.0);
        assert_eq!(d.log_pdf(4.0), f64::NEG_INFINITY);

        let two = q(&[0.0, 1.0, 3.0], &[0.5, 0.5]);
        assert_eq!(two.pdf(1.0), 0.25); // right-open [0, 1)
        assert_eq!(two.pdf(0.999), 0.5);
    }

    #[test]
    fn cdf_and_ppf() {
        let d = q(&[0.0, 3.0], &[1.0]);
        assert_eq!(d.cdf(1.5), 0.5);
        assert_eq!(d.ppf(0.5), 1.5);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_eq!(d.cdf(99.0), 1.0);
        assert_eq!(d.ppf(0.0), 0.0);
        assert_eq!(d.ppf(1.0), 3.0);
    }

    #[test]
    fn restrict_examples() {
        let d = q(&[0.0, 1.0, 2.0], &[0.5, 0.5]);
        assert_eq!(d.restrict(1.2, 1.5).unwrap(), q(&[1.0, 2.0], &[1.0]));
        let (both, mass) = d.restrict_with_mass(0.5, 1.5).unwrap();
        assert_eq!(both, d);
        assert_eq!(mass, 1.0);
        assert!(d.restrict(5.0, 6.0).is_none());
        // Closed last interval: the right end point still hits it.
        assert_eq!(d.restrict(2.0, 2.0).unwrap(), q(&[1.0, 2.0], &[1.0]));
        // Right-open inner boundary: a point at 1 belongs to the second interval only.
        assert_eq!(d.restrict(1.0, 1.0).unwrap(), q(&[1.0, 2.0], &[1.0]));
    }

    #[test]
    fn max_density_examples() {
        let d = q(&[0.0, 1.0, 3.0], &[0.5, 0.5]);
        assert_eq!(
            d.max_density_intervals(),
            vec![DensityInterval { lo: 0.0, hi: 1.0, density: 0.5 }]
        );
        let single = q(&[2.0, 4.0], &[1.0]);
        assert_eq!(single.max_density_intervals().len(), 1);
        let tie = q(&[0.0, 1.0, 2.0], &[0.5, 0.5]);
        assert_eq!(tie.max_density_intervals().len(), 2);
    }

    #[test]
    fn param_counts() {
        assert_eq!(q(&[0.0, 1.0], &[1.0]).param_count(), 2);
        let b: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(q(&b, &[0.1; 10]).param_count(), 20);
    }

    #[test]
    fn sampling_stays_in_support() {
        let d = q(&[0.0, 3.0], &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(d.sample_n(1000, &mut rng).iter().all(|x| (0.0..=3.0).contains(x)));
        assert!(d.sample_n(0, &mut rng).is_empty());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(Qpd::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Qpd::new(vec![0.0, 1.0], vec![0.5]).is_err());
        assert!(Qpd::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(Qpd::new(vec![0.0], vec![]).is_err());
    }
}
