//! Sample-quality metrics: random-Fourier-feature MMD, forward KL on
//! enumerable supports, and entropic mode coverage.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Feature map `φ(x) = √(2/D)·cos(Wx + b)` approximating a Gaussian kernel
/// of bandwidth σ. Both sample sets being compared must share one map.
#[derive(Debug, Clone)]
pub struct RffFeatureMap {
    w: Vec<f64>, // n_features × dim
    offsets: Vec<f64>,
    dim: usize,
    n_features: usize,
    sigma: f64,
}

/// Default feature count used by the harness.
pub const DEFAULT_RFF_FEATURES: usize = 4096;

impl RffFeatureMap {
    pub fn new<R: Rng>(dim: usize, n_features: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        if dim == 0 || n_features == 0 {
            return Err(Error::invalid("dim", "dim and n_features must be positive"));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid("sigma", "bandwidth must be positive"));
        }
        let normal = Normal::new(0.0, 1.0 / sigma).expect("valid std");
        let w = (0..dim * n_features).map(|_| normal.sample(rng)).collect();
        let offsets = (0..n_features)
            .map(|_| rng.gen::<f64>() * 2.0 * std::f64::consts::PI)
            .collect();
        Ok(Self {
            w,
            offsets,
            dim,
            n_features,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean feature embedding of a sample set.
    fn mean_embedding(&self, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let scale = (2.0 / self.n_features as f64).sqrt();
        let mut mean = vec![0.0; self.n_features];
        for x in samples {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: x.len(),
                });
            }
            for f in 0..self.n_features {
                let row = &self.w[f * self.dim..(f + 1) * self.dim];
                let mut dot = self.offsets[f];
                for (wi, xi) in row.iter().zip(x) {
                    dot += wi * xi;
                }
                mean[f] += scale * dot.cos();
            }
        }
        let n = samples.len() as f64;
        for m in mean.iter_mut() {
            *m /= n;
        }
        Ok(mean)
    }
}

/// Squared MMD estimate `‖μ_X − μ_Y‖²` under a shared feature map.
pub fn mmd_rff(x: &[Vec<f64>], y: &[Vec<f64>], map: &RffFeatureMap) -> Result<f64> {
    let mu_x = map.mean_embedding(x)?;
    let mu_y = map.mean_embedding(y)?;
    Ok(mu_x.iter().zip(&mu_y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Natural log of the squared-MMD estimate, clamped below at 1e-12.
pub fn log_mmd(mmd_sq: f64) -> f64 {
    mmd_sq.max(1e-12).ln()
}

/// Median pairwise Euclidean distance of a sample set (the bandwidth
/// heuristic). Evaluates at most `max_pairs` deterministically strided pairs.
pub fn median_heuristic(samples: &[Vec<f64>], max_pairs: usize) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least 2 points"));
    }
    let n = samples.len();
    let total_pairs = n * (n - 1) / 2;
    let stride = (total_pairs / max_pairs.max(1)).max(1);
    let mut dists = Vec::new();
    let mut counter = 0usize;
    'outer: for i in 0..n {
        for j in i + 1..n {
            if counter % stride == 0 {
                let d: f64 = samples[i]
                    .iter()
                    .zip(&samples[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dists.push(d.sqrt());
                if dists.len() >= max_pairs {
                    break 'outer;
                }
            }
            counter += 1;
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median <= 0.0 {
        return Err(Error::invalid(
            "samples",
            "median pairwise distance is zero",
        ));
    }
    Ok(median)
}

/// Forward KL `Σ π log(π/π̃)` in nats, where π̃ is the additively smoothed
/// empirical histogram `(count + smoothing) / (n + smoothing·|support|)`.
pub fn forward_kl(target: &[f64], counts: &[u64], smoothing: f64) -> Result<f64> {
    if counts.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: counts.len(),
        });
    }
    let total: f64 = target.iter().sum();
    if (total - 1.0).abs() > 1e-9 || target.iter().any(|p| *p < 0.0) {
        return Err(Error::invalid(
            "target",
            "must be a normalized distribution",
        ));
    }
    if smoothing < 0.0 {
        return Err(Error::invalid("smoothing", "must be nonnegative"));
    }
    let n: u64 = counts.iter().sum();
    let denom = n as f64 + smoothing * target.len() as f64;
    if denom <= 0.0 {
        return Err(Error::EmptyDataset);
    }
    let mut kl = 0.0;
    for (p, c) in target.iter().zip(counts) {
        if *p == 0.0 {
            continue;
        }
        let q = (*c as f64 + smoothing) / denom;
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += p * (p / q).ln();
    }
    Ok(kl)
}

/// Histogram of support indices.
pub fn histogram(indices: impl IntoIterator<Item = usize>, support_size: usize) -> Vec<u64> {
    let mut counts = vec![0u64; support_size];
    for i in indices {
        counts[i] += 1;
    }
    counts
}

fn check_posteriors(posteriors: &[Vec<f64>]) -> Result<usize> {
    if posteriors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = posteriors[0].len();
    if m < 2 {
        return Err(Error::invalid("posteriors", "need at least 2 modes"));
    }
    for post in posteriors {
        if post.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: post.len(),
            });
        }
        let sum: f64 = post.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || post.iter().any(|p| *p < 0.0) {
            return Err(Error::invalid("posteriors", "each row must be normalized"));
        }
    }
    Ok(m)
}

fn entropy_base_m(dist: &[f64], m: usize) -> f64 {
    let log_m = (m as f64).ln();
    dist.iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * (p.ln() / log_m))
        .sum()
}

/// Entropic mode coverage as printed: the mean base-M entropy of per-sample
/// mode posteriors, `E_x[H_M(p(ξ|x))]`. 0 means every sample is confidently
/// assigned to a single mode (even if all modes are visited); 1 means each
/// sample's posterior is uniform over all M modes.
pub fn emc(posteriors: &[Vec<f64>]) -> Result<f64> {
    let m = check_posteriors(posteriors)?;
    let total: f64 = posteriors.iter().map(|post| entropy_base_m(post, m)).sum();
    Ok(total / posteriors.len() as f64)
}

/// Coverage-side mode entropy, `H_M(E_x[p(ξ|x)])`: the base-M entropy of the
/// mean mode posterior. 0 when all samples sit in one mode, 1 when the
/// modes are covered uniformly; this is the quantity that separates
/// mode-collapsed from mode-covering samplers when posteriors are confident.
pub fn emc_coverage(posteriors: &[Vec<f64>]) -> Result<f64> {
    let m = check_posteriors(posteriors)?;
    let n = posteriors.len() as f64;
    let mut mean = vec![0.0; m];
    for post in posteriors {
        for (slot, p) in mean.iter_mut().zip(post) {
            *slot += p / n;
        }
    }
    Ok(entropy_base_m(&mean, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn mmd_zero_on_identical_sets() {
        let mut rng = StdRng::seed_from_u64(0);
        let map = RffFeatureMap::new(3, 256, 1.0, &mut rng).unwrap();
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64 * 0.1, (i as f64).sin(), 1.0])
            .collect();
        assert_eq!(mmd_rff(&x, &x.clone(), &map).unwrap(), 0.0);
    }

    #[test]
    fn mmd_nonnegative_and_symmetric() {
        let mut rng = StdRng::seed_from_u64(1);
        let map = RffFeatureMap::new(2, 512, 0.7, &mut rng).unwrap();
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.05, 0.0]).collect();
        let y: Vec<Vec<f64>> = (0..25).map(|i| vec![0.3, i as f64 * -0.04]).collect();
        let a = mmd_rff(&x, &y, &map).unwrap();
        let b = mmd_rff(&y, &x, &map).unwrap();
        assert!(a >= 0.0);
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn singleton_sets_approximate_gaussian_kernel() {
        // MMD²({x},{y}) ≈ 2(1 − k_σ(x,y)) with the exact Gaussian kernel as
        // oracle, within 5% relative error for D = 10^4 averaged over 20
        // feature-map seeds.
        let (x, y) = (vec![0.4, -0.2, 1.1], vec![-0.3, 0.5, 0.8]);
        let sigma = 1.3f64;
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let kernel = (-d2 / (2.0 * sigma * sigma)).exp();
        let exact = 2.0 * (1.0 - kernel);
        let mut mean = 0.0;
        for seed in 0..20 {
            let mut rng = StdRng::seed_from_u64(seed);
            let map = RffFeatureMap::new(3, 10_000, sigma, &mut rng).unwrap();
            mean += mmd_rff(std::slice::from_ref(&x), std::slice::from_ref(&y), &map).unwrap();
        }
        mean /= 20.0;
        assert!(
            (mean - exact).abs() / exact < 0.05,
            "estimate {mean} vs exact {exact}"
        );
    }

    #[test]
    fn median_heuristic_on_a_grid() {
        let samples: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let med = median_heuristic(&samples, 10_000).unwrap();
        assert!(med >= 1.0 && med <= 9.0);
        assert!(median_heuristic(&samples[0..1], 100).is_err());
    }

    #[test]
    fn kl_matching_histogram_is_zero() {
        let target = vec![0.25, 0.5, 0.25];
        let counts = vec![25u64, 50, 25];
        assert_relative_eq!(
            forward_kl(&target, &counts, 0.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_two_cell_arithmetic() {
        // π = (0.75, 0.25), π̃ = (0.25, 0.75) → 0.5·ln 3
        let kl = forward_kl(&[0.75, 0.25], &[25, 75], 0.0).unwrap();
        assert_relative_eq!(kl, 0.5 * 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn kl_rejects_unnormalized_target() {
        assert!(forward_kl(&[0.5, 0.2], &[1, 1], 0.5).is_err());
    }

    #[test]
    fn kl_of_exact_sampler_is_small() {
        // 10^6 exact draws from a random 16-cell target, smoothing 0.5
        let mut rng = StdRng::seed_from_u64(3);
        let raw: Vec<f64> = (0..16).map(|_| rng.gen_range(0.1..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|r| r / z).collect();
        let cdf: Vec<f64> = target
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut counts = vec![0u64; 16];
        for _ in 0..1_000_000 {
            let u: f64 = rng.gen();
            let idx = cdf.iter().position(|c| u < *c).unwrap_or(15);
            counts[idx] += 1;
        }
        let kl = forward_kl(&target, &counts, 0.5).unwrap();
        assert!(kl < 1e-3, "kl = {kl}");
    }

    #[test]
    fn emc_extremes_and_mixture() {
        // every sample confidently assigned (to any mode) → 0
        let confident = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(emc(&confident).unwrap(), 0.0);
        // uniform posteriors → 1
        let uniform = vec![vec![0.25; 4]; 8];
        assert_relative_eq!(emc(&uniform).unwrap(), 1.0, epsilon = 1e-12);
        // half confident, half uniform over 2 modes → 0.5
        let half = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        assert_relative_eq!(emc(&half).unwrap(), 0.5, epsilon = 1e-12);
        assert!(emc(&[vec![1.0]]).is_err());
    }

    #[test]
    fn emc_invariant_under_mode_relabeling() {
        let posts = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]];
        let permuted: Vec<Vec<f64>> = posts.iter().map(|p| vec![p[2], p[0], p[1]]).collect();
        assert_relative_eq!(
            emc(&posts).unwrap(),
            emc(&permuted).unwrap(),
            epsilon = 1e-15
        );
        assert_relative_eq!(
            emc_coverage(&posts).unwrap(),
            emc_coverage(&permuted).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn coverage_entropy_separates_collapse_from_coverage() {
        // confident posteriors all in one mode: both variants are 0
        let collapsed = vec![vec![1.0, 0.0, 0.0, 0.0]; 12];
        assert_eq!(emc(&collapsed).unwrap(), 0.0);
        assert_eq!(emc_coverage(&collapsed).unwrap(), 0.0);
        // confident posteriors spread evenly over 4 modes: the per-sample
        // entropy stays 0 while the coverage entropy saturates at 1
        let covered: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let mut row = vec![0.0; 4];
                row[i % 4] = 1.0;
                row
            })
            .collect();
        assert_eq!(emc(&covered).unwrap(), 0.0);
        assert_relative_eq!(emc_coverage(&covered).unwrap(), 1.0, epsilon = 1e-12);
        // bounded in [0, 1]
        for set in [&collapsed, &covered] {
            let v = emc_coverage(set).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
