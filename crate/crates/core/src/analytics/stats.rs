use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::special::f_survival;
use super::StatsError;

/// n, mean, min, median, max of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub n: usize,
    pub mean: T,
    pub min: T,
    pub median: T,
    pub max: T,
}

fn from_usize<T: Float>(n: usize) -> T {
    T::from(n).expect("count representable in scalar type")
}

/// Mean with one correction pass, which keeps shifted data stable.
fn mean<T: Float>(values: &[T]) -> T {
    let n = from_usize::<T>(values.len());
    let rough = values.iter().fold(T::zero(), |a, &v| a + v) / n;
    rough + values.iter().fold(T::zero(), |a, &v| a + (v - rough)) / n
}

pub fn descriptive<T: Float>(values: &[T]) -> Result<Summary<T>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values are ordered"));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / from_usize(2)
    };
    Ok(Summary { n, mean: mean(&sorted), min: sorted[0], median, max: sorted[n - 1] })
}

/// Plain (not Welch-corrected) one-way analysis of variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneWayAnova<T> {
    pub f_stat: T,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: T,
    pub ss_between: T,
    pub ss_within: T,
    pub groups: Vec<Summary<T>>,
}

/// F = (SSB / (k − 1)) / (SSW / (N − k)), p from the F(k − 1, N − k) tail.
///
/// All-identical data gives F = 0, p = 1. Zero within-group spread with
/// distinct group means gives F = ∞, p = 0.
pub fn anova_oneway<T: Float>(groups: &[Vec<T>]) -> Result<OneWayAnova<T>, StatsError> {
    let k = groups.len();
    let n_total: usize = groups.iter().map(Vec::len).sum();
    if k < 2 || groups.iter().any(Vec::is_empty) || n_total <= k {
        return Err(StatsError::InsufficientData { groups: k, observations: n_total });
    }
    let summaries = groups.iter().map(|g| descriptive(g)).collect::<Result<Vec<_>, _>>()?;

    let all: Vec<T> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let mut ssb = T::zero();
    let mut ssw = T::zero();
    for (g, s) in groups.iter().zip(&summaries) {
        let d = s.mean - grand;
        ssb = ssb + from_usize::<T>(g.len()) * d * d;
        ssw = g.iter().fold(ssw, |acc, &x| acc + (x - s.mean) * (x - s.mean));
    }
    let df_between = k - 1;
    let df_within = n_total - k;

    let (f_stat, p_value) = if ssb == T::zero() && ssw == T::zero() {
        (T::zero(), T::one())
    } else if ssw == T::zero() {
        (T::infinity(), T::zero())
    } else {
        let f = (ssb / from_usize(df_between)) / (ssw / from_usize(df_within));
        (f, f_survival(f, from_usize(df_between), from_usize(df_within))?)
    };
    Ok(OneWayAnova { f_stat, df_between, df_within, p_value, ss_between: ssb, ss_within: ssw, groups: summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(descriptive(&[3.0]).unwrap().median, 3.0);
        assert_eq!(descriptive(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        let s = descriptive(&[20.0, 10.0, 13.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.n), (10.0, 13.0, 20.0, 3));
        assert_eq!(descriptive::<f64>(&[]), Err(StatsError::EmptyInput));
        assert_eq!(descriptive(&[1.0, f64::NAN]), Err(StatsError::NonFinite));
    }

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&[vec![5.0, 5.0], vec![5.0, 5.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.df_between, r.df_within), (2, 3));
    }

    #[test]
    fn zero_within_spread() {
        let r = anova_oneway(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f_stat.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn textbook_example() {
        // Frozen from scipy.stats.f_oneway([1,2,3],[2,3,4],[10,11,12]).
        let r = anova_oneway(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![10.0, 11.0, 12.0]]).unwrap();
        assert!((r.f_stat - 73.0).abs() <= 73.0 * 1e-12);
        let expect_p = 6.150_677_941_390_873e-5;
        assert!(((r.p_value - expect_p) / expect_p).abs() < 1e-9, "{}", r.p_value);
        assert_eq!(r.ss_between, 146.0);
        assert_eq!(r.ss_within, 6.0);
    }

    #[test]
    fn insufficient_data() {
        assert!(matches!(anova_oneway(&[vec![1.0, 2.0]]), Err(StatsError::InsufficientData { .. })));
        assert!(matches!(anova_oneway(&[vec![1.0], vec![2.0]]), Err(StatsError::InsufficientData { .. })));
        assert!(matches!(anova_oneway(&[vec![1.0, 3.0], vec![]]), Err(StatsError::InsufficientData { .. })));
    }

    #[test]
    fn works_in_f32() {
        let r = anova_oneway(&[vec![1.0f32, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![10.0, 11.0, 12.0]]).unwrap();
        assert!((r.f_stat - 73.0).abs() < 1e-3);
        assert!((r.p_value - 6.150_678e-5).abs() < 1e-7);
    }
}
