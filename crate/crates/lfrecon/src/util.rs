//! Small numeric helpers used across modules.

/// Kahan compensated accumulator. One pass over 10^6 samples must not
/// lose the low-order bits of the moment sums.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline(always)]
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline(always)]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// SplitMix64 step, used to derive independent per-cell seeds from a base
/// seed. Deterministic and cheap; not a statistical RNG by itself.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Median of a sample. Averages the two middle order statistics for even
/// lengths. Returns NaN on empty input.
pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Percentile with linear interpolation between order statistics
/// (the common "linear" / type-7 rule). `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Least-squares slope of `ln y` against `ln x`. Points with a
/// nonpositive coordinate are skipped; NaN with fewer than two usable
/// points.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return f64::NAN;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &logs {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_log_slope_recovers_power_law() {
        let points = [(10.0, 1.0), (100.0, 0.1), (1000.0, 0.01)];
        assert_relative_eq!(log_log_slope(&points), -1.0, epsilon = 1e-12);
        assert!(log_log_slope(&[(10.0, 1.0)]).is_nan());
        assert!(log_log_slope(&[(10.0, -1.0), (100.0, 0.1)]).is_nan());
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut acc = Kahan::default();
        acc.add(1e16);
        for _ in 0..10_000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_relative_eq!(acc.value(), 10_000.0, max_relative = 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(median(&v), 2.5);
        assert_relative_eq!(percentile(&v, 0.0), 1.0);
        assert_relative_eq!(percentile(&v, 100.0), 4.0);
        assert_relative_eq!(percentile(&v, 25.0), 1.75);
    }

    #[test]
    fn derived_seeds_differ_across_streams() {
        let a = derive_seed(42, 0, 3);
        let b = derive_seed(42, 1, 3);
        let c = derive_seed(42, 0, 4);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0, 3));
    }
}
