use crate::error::{Error, Result};

/// Binary Shannon entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    (term(p) + term(1.0 - p)).clamp(0.0, 1.0)
}

/// Entropy of the true/false split for one question.
pub fn question_entropy(t_count: u64, f_count: u64) -> Result<f64> {
    let total = t_count + f_count;
    if total == 0 {
        return Err(Error::Contract("question has no answers".into()));
    }
    Ok(binary_entropy(t_count as f64 / total as f64))
}

/// KL((p, 1-p) || (1/2, 1/2)) in bits, computed from the definition.
pub fn kl_to_uniform(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { x * (2.0 * x).log2() };
    term(p) + term(1.0 - p)
}

/// Median, averaging the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_points() {
        assert_eq!(question_entropy(10, 0).unwrap(), 0.0);
        assert_eq!(question_entropy(0, 3).unwrap(), 0.0);
        assert_eq!(question_entropy(5, 5).unwrap(), 1.0);
        // closed form evaluated at 50 digits: 0.970950594454668638998...
        assert!((question_entropy(6, 4).unwrap() - 0.970_950_594_454_668_6).abs() < 1e-15);
        assert!(question_entropy(0, 0).is_err());
    }

    #[test]
    fn kl_points() {
        assert_eq!(kl_to_uniform(0.5), 0.0);
        assert_eq!(kl_to_uniform(1.0), 1.0);
        assert_eq!(kl_to_uniform(0.0), 1.0);
        assert!((kl_to_uniform(0.6) - (1.0 - 0.970_950_594_454_668_6)).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    proptest! {
        #[test]
        fn symmetric(p in 0.0f64..=1.0) {
            prop_assert!((binary_entropy(p) - binary_entropy(1.0 - p)).abs() < 1e-12);
        }

        #[test]
        fn entropy_plus_kl_is_one_bit(p in 0.0f64..=1.0) {
            prop_assert!((binary_entropy(p) + kl_to_uniform(p) - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&binary_entropy(p)));
        }
    }
}
