//! Diagonal Gaussian search distributions.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stream::StreamId;

/// Smallest variance any coordinate may hold, in squared decision units.
pub const VAR_FLOOR: f64 = 1e-8;

/// One search process's sampling distribution, `N(mean, diag(variance))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDistribution {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl SearchDistribution {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidDistribution("dimension must be at least 1".into()));
        }
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), actual: variance.len() });
        }
        if let Some(d) = mean.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite { field: "mean", coordinate: d });
        }
        if let Some(d) = variance.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "variance", coordinate: d });
        }
        if let Some(d) = variance.iter().position(|&v| v < VAR_FLOOR) {
            return Err(Error::InvalidDistribution(format!(
                "variance[{d}] = {} is below the floor {VAR_FLOOR}",
                variance[d]
            )));
        }
        Ok(Self { mean, variance })
    }

    /// Same variance `variance` on every axis.
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, vec![variance; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    /// Draws `count` vectors, sample `k` from `stream.sample(k)`.
    ///
    /// Each coordinate is `mean[d] + sqrt(variance[d]) * z` with `z` a standard
    /// normal deviate; the output depends only on the distribution and the stream id.
    pub fn sample(&self, count: usize, stream: StreamId) -> Vec<Vec<f64>> {
        (0..count)
            .map(|k| {
                let mut rng = stream.sample(k).rng();
                self.mean
                    .iter()
                    .zip(&self.variance)
                    .map(|(&m, &v)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + v.sqrt() * z
                    })
                    .collect()
            })
            .collect()
    }
}

/// A process's evaluated samples for one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub source: usize,
    pub solutions: Vec<Vec<f64>>,
    pub fitnesses: Vec<f64>,
}

impl SampleBatch {
    pub fn new(source: usize, solutions: Vec<Vec<f64>>, fitnesses: Vec<f64>) -> Result<Self> {
        if solutions.is_empty() {
            return Err(Error::InvalidDistribution("a batch needs at least one solution".into()));
        }
        if solutions.len() != fitnesses.len() {
            return Err(Error::DimensionMismatch { expected: solutions.len(), actual: fitnesses.len() });
        }
        Ok(Self { source, solutions, fitnesses })
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

fn check_same_dim(a: &SearchDistribution, b: &SearchDistribution) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(())
}

/// Bhattacharyya distance between two diagonal Gaussians, using the
/// mid-point covariance `(Σa + Σb) / 2`.
pub fn bhattacharyya(a: &SearchDistribution, b: &SearchDistribution) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(bhattacharyya_unchecked(a, b))
}

pub(crate) fn bhattacharyya_unchecked(a: &SearchDistribution, b: &SearchDistribution) -> f64 {
    let mut total = 0.0;
    for d in 0..a.dim() {
        let (va, vb) = (a.variance[d], b.variance[d]);
        let s = 0.5 * (va + vb);
        let dm = a.mean[d] - b.mean[d];
        total += 0.125 * dm * dm / s + 0.5 * (s / (va * vb).sqrt()).ln();
    }
    // Rounding in the log term can leave a tiny negative residue for a == b.
    total.max(0.0)
}

/// Diversity of process `i`: summed Bhattacharyya distance to every peer.
///
/// `i` is zero-based. With a single process there are no peers and the value is 0.
pub fn diversity_value(i: usize, dists: &[SearchDistribution]) -> Result<f64> {
    let own = dists.get(i).ok_or_else(|| {
        Error::InvalidDistribution(format!("process index {i} out of range for {} processes", dists.len()))
    })?;
    let mut total = 0.0;
    for (j, other) in dists.iter().enumerate() {
        if j != i {
            total += bhattacharyya(own, other)?;
        }
    }
    Ok(total)
}

/// Mean Bhattacharyya distance over all unordered pairs; 0 for fewer than two.
pub fn mean_pairwise_distance(dists: &[SearchDistribution]) -> Result<f64> {
    let n = dists.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += bhattacharyya(&dists[i], &dists[j])?;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::Purpose;
    use proptest::prelude::*;

    fn d1(m: f64, v: f64) -> SearchDistribution {
        SearchDistribution::new(vec![m], vec![v]).unwrap()
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(SearchDistribution::new(vec![], vec![]).is_err());
        assert!(SearchDistribution::new(vec![0.0], vec![0.0]).is_err());
        assert!(SearchDistribution::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(SearchDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(SearchDistribution::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(SearchDistribution::new(vec![0.0], vec![VAR_FLOOR]).is_ok());
    }

    #[test]
    fn floor_width_samples_stay_near_mean() {
        let dist = SearchDistribution::isotropic(vec![3.0; 50], VAR_FLOOR).unwrap();
        let samples = dist.sample(20, StreamId::new(1, Purpose::Sample));
        let bound = 5.0 * VAR_FLOOR.sqrt();
        let outside = samples
            .iter()
            .flatten()
            .filter(|x| (**x - 3.0).abs() > 3.0 * VAR_FLOOR.sqrt())
            .count();
        assert!(samples.iter().flatten().all(|x| (x - 3.0).abs() < bound));
        // 1000 coordinates at 0.27% each.
        assert!(outside < 15, "{outside} coordinates beyond 3 sigma");
    }

    #[test]
    fn sampling_is_reproducible() {
        let dist = SearchDistribution::new(vec![0.5, -1.0], vec![2.0, 0.1]).unwrap();
        let stream = StreamId::new(99, Purpose::Sample).process(3).iteration(4);
        let a = dist.sample(10, stream);
        let b = dist.sample(10, stream);
        let bits = |s: &Vec<Vec<f64>>| s.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&dist.sample(10, stream.iteration(5))));
    }

    #[test]
    fn sample_moments_standard_normal() {
        let dist = d1(0.0, 1.0);
        let n = 1_000_000;
        let xs: Vec<f64> = dist.sample(n, StreamId::new(2024, Purpose::Sample)).into_iter().map(|v| v[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn bhattacharyya_examples() {
        assert_eq!(bhattacharyya(&d1(1.0, 2.0), &d1(1.0, 2.0)).unwrap(), 0.0);
        assert!((bhattacharyya(&d1(0.0, 1.0), &d1(2.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let expect = 0.5 * (2.5f64 / 2.0).ln();
        assert!((bhattacharyya(&d1(0.0, 1.0), &d1(0.0, 4.0)).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.11157).abs() < 1e-5);
    }

    #[test]
    fn bhattacharyya_dimension_mismatch() {
        let a = d1(0.0, 1.0);
        let b = SearchDistribution::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(bhattacharyya(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity_value(0, &[d1(0.0, 1.0)]).unwrap(), 0.0);
        let same = vec![d1(1.0, 2.0); 3];
        assert_eq!(diversity_value(1, &same).unwrap(), 0.0);
        let spread = vec![d1(0.0, 1.0), d1(2.0, 1.0), d1(4.0, 1.0)];
        assert!((diversity_value(0, &spread).unwrap() - 2.5).abs() < 1e-14);
        assert!(diversity_value(3, &spread).is_err());
    }

    #[test]
    fn mean_pairwise_of_three() {
        let spread = vec![d1(0.0, 1.0), d1(2.0, 1.0), d1(4.0, 1.0)];
        // pairs: 0.5, 2.0, 0.5
        assert!((mean_pairwise_distance(&spread).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(mean_pairwise_distance(&spread[..1]).unwrap(), 0.0);
    }

    fn arb_pair() -> impl Strategy<Value = (SearchDistribution, SearchDistribution)> {
        (1usize..6).prop_flat_map(|dim| {
            let side = || {
                (
                    prop::collection::vec(-10.0f64..10.0, dim),
                    prop::collection::vec(1e-3f64..10.0, dim),
                )
                    .prop_map(|(m, v)| SearchDistribution::new(m, v).unwrap())
            };
            (side(), side())
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative((a, b) in arb_pair()) {
            let ab = bhattacharyya(&a, &b).unwrap();
            let ba = bhattacharyya(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            prop_assert!(bhattacharyya(&a, &a).unwrap() <= 1e-12);
        }

        #[test]
        fn zero_only_for_identical((a, b) in arb_pair()) {
            prop_assume!(a != b);
            prop_assert!(bhattacharyya(&a, &b).unwrap() > 0.0);
        }
    }
}
