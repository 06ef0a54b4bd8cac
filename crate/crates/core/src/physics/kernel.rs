/// Probability that Gaussian timing jitter moves a detection by `d` grid bins.
///
/// A detection at nominal bin centre `c` lands in bin `b` when
/// `c + jitter` falls in `[b - 1/2, b + 1/2)` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterKernel {
    half_width: i64,
    weights: Vec<f64>,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

impl JitterKernel {
    pub fn new(sigma_ps: f64, bin_ps: f64) -> Self {
        if sigma_ps <= 0.0 {
            return Self { half_width: 0, weights: vec![1.0] };
        }
        let half_width = ((9.0 * sigma_ps / bin_ps).ceil() as i64).max(1);
        let s = sigma_ps / bin_ps;
        let weights = (-half_width..=half_width)
            .map(|d| {
                let d = d as f64;
                // upper tail differences keep precision in the far wings
                let hi = (d + 0.5) / s;
                let lo = (d - 0.5) / s;
                if d >= 0.0 {
                    normal_cdf(-lo) - normal_cdf(-hi)
                } else {
                    normal_cdf(hi) - normal_cdf(lo)
                }
            })
            .collect();
        Self { half_width, weights }
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    #[inline]
    pub fn weight(&self, shift_bins: i64) -> f64 {
        if shift_bins.abs() > self.half_width {
            0.0
        } else {
            self.weights[(shift_bins + self.half_width) as usize]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        for sigma in [0.0, 20.0, 55.0, 63.0, 150.0] {
            let k = JitterKernel::new(sigma, 100.0);
            let total: f64 = (-k.half_width()..=k.half_width()).map(|d| k.weight(d)).sum();
            assert!((total - 1.0).abs() < 1e-12, "sigma {sigma}: {total}");
            for d in 0..=k.half_width() {
                assert!((k.weight(d) - k.weight(-d)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_bin_leak_matches_normal_tail() {
        // P(150 <= x < 250) for sigma = 55 ps
        let k = JitterKernel::new(55.0, 100.0);
        let expected = normal_cdf(-150.0 / 55.0) - normal_cdf(-250.0 / 55.0);
        assert!((k.weight(2) - expected).abs() < 1e-15);
        assert!((k.weight(2) - 3.19e-3).abs() < 1e-4);
    }
}
