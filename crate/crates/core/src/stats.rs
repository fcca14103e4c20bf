//! Small statistics helpers for Monte Carlo experiments.

use core::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialStats {
    pub trials: u64,
    pub successes: u64,
    /// Trials whose protocol verdict was pass.
    pub passes: u64,
}

impl TrialStats {
    pub fn new(trials: u64, successes: u64, passes: u64) -> Self {
        assert!(successes <= trials && passes <= trials);
        TrialStats {
            trials,
            successes,
            passes,
        }
    }

    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn pass_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.passes as f64 / self.trials as f64
        }
    }

    /// 95% Wilson score interval of the success rate.
    pub fn interval(&self) -> (f64, f64) {
        wilson(self.successes, self.trials, 1.959_963_984_540_054)
    }
}

impl fmt::Display for TrialStats {
    /// `trials successes rate lo hi`, tab separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.interval();
        write!(f, "{}\t{}\t{:.6}\t{:.6}\t{:.6}", self.trials, self.successes, self.rate(), lo, hi)
    }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Pearson statistic of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return 0.0;
    }
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e) * (c as f64 - e) / e).sum()
}

/// Total-variation distance of two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference_values() {
        // 50/100 at z = 1.96: centre 0.5, half width 0.0962.
        let (lo, hi) = wilson(50, 100, 1.96);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
        let (lo, hi) = wilson(0, 200, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.01884).abs() < 1e-4);
    }

    #[test]
    fn chi_square_and_tv() {
        assert_eq!(chi_square_uniform(&[10, 10, 10, 10]), 0.0);
        assert!((chi_square_uniform(&[12, 8]) - 0.8).abs() < 1e-12);
        assert!((total_variation(&[1.0, 0.0], &[0.5, 0.5]) - 0.5).abs() < 1e-12);
    }
}
