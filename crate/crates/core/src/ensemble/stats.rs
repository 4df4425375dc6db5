//! Kolmogorov–Smirnov statistics and binomial intervals.

use std::f64::consts::PI;

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small λ.
        let y = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (0..20)
            .map(|k| ((2 * k + 1) as f64).powi(2) * y)
            .map(f64::exp)
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for a KS statistic `d` with effective sample size `n`
/// (Stephens' small-sample correction).
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let sq = n.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample KS statistic of `xs` against the CDF `cdf`.
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// `(D, p)` for a one-sample test.
pub fn ks_test(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = ks_statistic(xs, cdf);
    (d, ks_p_value(d, xs.len() as f64))
}

/// `(D, p)` for the two-sample test.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let a = sorted(xs);
    let b = sorted(ys);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    (d, ks_p_value(d, n * m / (n + m)))
}

/// Wilson score interval for `k` successes out of `n` at `z` standard errors.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Tabulated CDF with linear interpolation; 0 / 1 outside the grid.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabulatedCdf {
    /// Cumulative trapezoid of a density sampled on a uniform grid,
    /// normalised to end at one.
    pub fn from_density(grid: Vec<f64>, density: &[f64]) -> Self {
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..grid.len() {
            acc += 0.5 * (density[k] + density[k - 1]) * (grid[k] - grid[k - 1]);
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        Self { grid, cdf }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let k = g.partition_point(|v| *v <= x);
        let (x0, x1) = (g[k - 1], g[k]);
        let w = (x - x0) / (x1 - x0);
        self.cdf[k - 1] * (1.0 - w) + self.cdf[k] * w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series are valid near the switch point.
        let lam = 1.18f64;
        let small = {
            let y = -PI * PI / (8.0 * lam * lam);
            1.0 - (2.0 * PI).sqrt() / lam
                * (0..20)
                    .map(|k| (((2 * k + 1) as f64).powi(2) * y).exp())
                    .sum::<f64>()
        };
        let large = 2.0
            * (1..=100)
                .map(|k| {
                    let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                    s * (-2.0 * (k * k) as f64 * lam * lam).exp()
                })
                .sum::<f64>();
        assert_relative_eq!(small, large, epsilon = 1e-12);
        // Tabulated critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert_relative_eq!(kolmogorov_sf(1.3581), 0.05, epsilon = 1e-4);
        assert_relative_eq!(kolmogorov_sf(1.6276), 0.01, epsilon = 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_statistic_small_cases() {
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        assert_relative_eq!(ks_statistic(&[0.5], uniform), 0.5, epsilon = 1e-15);
        assert_relative_eq!(
            ks_statistic(&[0.1, 0.4, 0.9], uniform),
            (2.0f64 / 3.0 - 0.4).max(0.4 - 1.0 / 3.0).max(0.1),
            epsilon = 1e-15
        );
    }

    #[test]
    fn two_sample_identical_sets_have_zero_distance() {
        let (d, p) = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let (d, _) = ks_two_sample(&[1.0, 1.0, 4.0, 4.0], &[1.0, 1.0, 1.0, 4.0]);
        assert_relative_eq!(d, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(300, 1000, 3.0);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(10, 10, 3.0).1, 1.0);
    }

    #[test]
    fn tabulated_cdf_of_uniform_density() {
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let cdf = TabulatedCdf::from_density(grid, &[1.0; 101]);
        assert_relative_eq!(cdf.eval(0.255), 0.255, epsilon = 1e-12);
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert_eq!(cdf.eval(2.0), 1.0);
    }
}
