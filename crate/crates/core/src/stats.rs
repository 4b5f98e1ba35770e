//! Order statistics and moments over scalar samples.

use crate::num::Scalar;

fn sorted<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut v: Vec<T> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered"));
    v
}

/// Median; even-length samples use the mean of the two central values.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    let v = sorted(values);
    let n = v.len();
    if n == 0 {
        return None;
    }
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        Some((v[n / 2 - 1] + v[n / 2]) / T::lit(2.0))
    }
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum: T = values.iter().copied().sum();
    Some(sum / T::count(values.len() as u64))
}

/// Population variance: the average squared deviation from the mean.
pub fn population_variance<T: Scalar>(values: &[T]) -> Option<T> {
    let m = mean(values)?;
    let ss: T = values.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::count(values.len() as u64))
}

/// Percentile with linear interpolation between closest ranks, `p` in `[0, 1]`.
pub fn percentile<T: Scalar>(values: &[T], p: T) -> Option<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return None;
    }
    let v = sorted(values);
    match v.len() {
        0 => None,
        1 => Some(v[0]),
        n => {
            let pos = p * T::count(n as u64 - 1);
            let lo = pos.floor();
            let frac = pos - lo;
            let lo_idx = lo.to_usize().unwrap_or(0).min(n - 1);
            let hi_idx = (lo_idx + 1).min(n - 1);
            if frac == T::zero() {
                Some(v[lo_idx])
            } else {
                Some(v[lo_idx] + (v[hi_idx] - v[lo_idx]) * frac)
            }
        }
    }
}

/// Percent change of `value` relative to `base`; `None` unless `base > 0`.
pub fn percent_change<T: Scalar>(value: T, base: T) -> Option<T> {
    if base > T::zero() {
        Some((value - base) / base * T::lit(100.0))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median(&[0.1, 0.9, 0.2]), Some(0.2));
        assert!((median(&[0.1, 0.3]).unwrap() - 0.2f64).abs() < 1e-15);
        assert_eq!(median::<f64>(&[]), None);
        assert_eq!(median(&[3.0f32]), Some(3.0));
    }

    #[test]
    fn variance_of_two_groups() {
        let v = population_variance(&[1.0, 3.0]).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(population_variance(&[2.0f32, 2.0, 2.0]), Some(0.0));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), Some(3.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(5.0));
        assert!((percentile(&v, 0.95_f64).unwrap() - 4.8).abs() < 1e-12);
        assert_eq!(percentile(&v, 1.5), None);
    }

    #[test]
    fn percent_change_guards_zero_base() {
        assert_eq!(percent_change(0.23, 1.0).map(|x: f64| (x * 100.0).round() / 100.0), Some(-77.0));
        assert_eq!(percent_change(1.0, 0.0), None);
    }
}
