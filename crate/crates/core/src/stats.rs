//! Summary statistics and the paired Student t-test.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired observations, got {0}")]
    TooFew(usize),
    #[error("non-finite observation")]
    NonFinite,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// `±inf` when the differences have zero variance and non-zero mean.
    #[serde(with = "extended_f64")]
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub mean_difference: f64,
    /// Zero-variance differences; `t` and `p` are set by convention, not computed.
    pub degenerate: bool,
}

/// Paired two-tailed t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = n - 1;
    let mean_difference = mean(&diffs);
    let sd = sample_std(&diffs);
    if sd == 0.0 {
        let (t_statistic, p_value) = if mean_difference == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean_difference), 0.0)
        };
        return Ok(TTest { t_statistic, degrees_of_freedom: df, p_value, mean_difference, degenerate: true });
    }
    let t = mean_difference / (sd / libm::sqrt(n as f64));
    Ok(TTest {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_tailed(t, df as f64),
        mean_difference,
        degenerate: false,
    })
}

/// Two-tailed p-value `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` via the Lentz continued fraction, using the symmetry
/// `I_x(a, b) = 1 − I_{1−x}(b, a)` where the fraction converges slowly.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };

    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr<'a> {
        Num(f64),
        #[serde(borrow)]
        Text(&'a str),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text("inf") => Ok(f64::INFINITY),
            Repr::Text("-inf") => Ok(f64::NEG_INFINITY),
            Repr::Text("nan") => Ok(f64::NAN),
            Repr::Text(other) => Err(serde::de::Error::custom(alloc::format!("invalid number {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn reference_p(t: f64, df: f64) -> f64 {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        2.0 * (1.0 - dist.cdf(t.abs()))
    }

    #[test]
    fn identical_lists() {
        let r = paired_ttest(&[0.1, 0.5, 0.7], &[0.1, 0.5, 0.7]).unwrap();
        assert_eq!((r.t_statistic, r.p_value, r.degenerate), (0.0, 1.0, true));
        assert_eq!(r.degrees_of_freedom, 2);
    }

    #[test]
    fn constant_nonzero_difference_is_degenerate() {
        let r = paired_ttest(&[2.0; 5], &[1.0; 5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.t_statistic, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
        let r = paired_ttest(&[1.0; 5], &[2.0; 5]).unwrap();
        assert_eq!(r.t_statistic, f64::NEG_INFINITY);
    }

    #[test]
    fn errors() {
        assert_eq!(paired_ttest(&[1.0], &[2.0]), Err(StatsError::TooFew(1)));
        assert_eq!(paired_ttest(&[1.0, 2.0], &[2.0]), Err(StatsError::LengthMismatch(2, 1)));
        assert_eq!(paired_ttest(&[1.0, f64::NAN], &[2.0, 1.0]), Err(StatsError::NonFinite));
    }

    #[test]
    fn known_values() {
        // scipy.stats.ttest_rel([1,2,3,4,5], [1.1,1.8,3.5,3.9,5.6]) → t = -1.1294204492486852, p = 0.3218632595652239
        let r = paired_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.1, 1.8, 3.5, 3.9, 5.6]).unwrap();
        assert!((r.t_statistic - -1.129_420_449_248_685_2).abs() < 1e-12, "{}", r.t_statistic);
        assert!((r.p_value - 0.321_863_259_565_223_9).abs() < 1e-12, "{}", r.p_value);
        // The reported t(4) = 2.909 corresponds to p ≈ 0.0437.
        assert!((student_t_two_tailed(2.909, 4.0) - 0.0437).abs() < 5e-5);
    }

    #[test]
    fn incomplete_beta_edges() {
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 0.5), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 0.5), 1.0);
        // I_x(1, 1) = x
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        // I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(0.6, 3.0, 1.0) - 0.216).abs() < 1e-14);
    }

    #[test]
    fn std_is_sample_std() {
        assert!((sample_std(&[1.0, 2.0, 3.0, 4.0]) - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
        assert_eq!(sample_std(&[3.0]), 0.0);
        assert_eq!(mean(&[]), 0.0);
    }

    #[test]
    fn serde_infinite_t() {
        let r = paired_ttest(&[2.0; 3], &[1.0; 3]).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains(r#""t_statistic":"inf""#));
        let back: TTest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let ok = paired_ttest(&[1.0, 2.0, 4.0], &[1.0, 1.0, 1.0]).unwrap();
        let back: TTest = serde_json::from_str(&serde_json::to_string(&ok).unwrap()).unwrap();
        assert_eq!(back, ok);
    }

    proptest! {
        #[test]
        fn p_matches_reference(t in -30.0f64..30.0, df in 1usize..40) {
            let got = student_t_two_tailed(t, df as f64);
            prop_assert!((got - reference_p(t, df as f64)).abs() < 1e-9, "t={} df={} got={}", t, df, got);
        }

        #[test]
        fn symmetric_in_argument_order(a in proptest::collection::vec(0.0f64..1.0, 5), b in proptest::collection::vec(0.0f64..1.0, 5)) {
            let ab = paired_ttest(&a, &b).unwrap();
            let ba = paired_ttest(&b, &a).unwrap();
            prop_assert!((ab.t_statistic + ba.t_statistic).abs() < 1e-12);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }
    }
}
