//! Summary statistics for benchmark samples.

/// Min/max/mean and sample standard deviation of a set of response times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// Computes stats over `values`; returns `None` when empty. The standard
/// deviation uses the n-1 denominator and is 0 for a single sample.
pub fn summarize(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let count = values.len();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mean = sum / count as f64;
    let stddev = if count < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (count as f64 - 1.0)).sqrt()
    };
    Some(Stats {
        count,
        min,
        max,
        mean,
        stddev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_gives_none() {
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn single_value() {
        let s = summarize(&[3.5]).expect("non-empty");
        assert_eq!(s.count, 1);
        assert_eq!(s.min, 3.5);
        assert_eq!(s.max, 3.5);
        assert_eq!(s.mean, 3.5);
        assert_eq!(s.stddev, 0.0);
    }

    #[test]
    fn known_values() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).expect("non-empty");
        assert!((s.mean - 5.0).abs() < 1e-12);
        // sample variance of this classic set is 32/7
        assert!((s.stddev - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.min, 2.0);
        assert_eq!(s.max, 9.0);
    }
}
