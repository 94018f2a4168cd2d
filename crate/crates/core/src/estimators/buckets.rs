//! Equi-depth buckets shared by the histogram and Chow-Liu binning.

use serde::{Deserialize, Serialize};

use crate::queryir::Region;

/// A run of consecutive distinct values `[lo, hi]` holding `rows` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub rows: u64,
    pub distinct: u64,
}

/// Splits ascending `(value, frequency)` pairs into at most `buckets`
/// equi-depth buckets. A value is never split across buckets.
pub fn build_buckets(freqs: &[(f64, u64)], buckets: usize) -> Vec<Bucket> {
    let total: u64 = freqs.iter().map(|(_, n)| n).sum();
    if freqs.is_empty() || buckets == 0 {
        return Vec::new();
    }
    let mut out: Vec<Bucket> = Vec::new();
    let mut cum = 0u64;
    let mut cur: Option<Bucket> = None;
    for &(v, n) in freqs {
        let b = cur.get_or_insert(Bucket {
            lo: v,
            hi: v,
            rows: 0,
            distinct: 0,
        });
        b.hi = v;
        b.rows += n;
        b.distinct += 1;
        cum += n;
        // Close the bucket once the running total reaches its quantile.
        let boundary = (out.len() as u128 + 1) * total as u128;
        if cum as u128 * buckets as u128 >= boundary && out.len() + 1 < buckets {
            out.push(cur.take().unwrap());
        }
    }
    out.extend(cur);
    out
}

impl Bucket {
    /// Fraction of the bucket's rows expected inside `region`, assuming
    /// values spread uniformly over `[lo, hi]` (integer points when
    /// `integral`) and equal frequency per distinct value.
    pub fn fraction(&self, region: &Region, integral: bool) -> f64 {
        match region {
            Region::Empty => 0.0,
            Region::Values(vs) => {
                let lo = vs.partition_point(|v| *v < self.lo);
                let hi = vs.partition_point(|v| *v <= self.hi);
                ((hi - lo) as f64 / self.distinct.max(1) as f64).min(1.0)
            }
            Region::Interval {
                lo,
                lo_inclusive,
                hi,
                hi_inclusive,
            } => {
                if self.lo == self.hi {
                    return if region.contains(self.lo) { 1.0 } else { 0.0 };
                }
                if integral {
                    let mut a = lo.ceil();
                    if !lo_inclusive && a == *lo {
                        a += 1.0;
                    }
                    let mut b = hi.floor();
                    if !hi_inclusive && b == *hi {
                        b -= 1.0;
                    }
                    let a = a.max(self.lo);
                    let b = b.min(self.hi);
                    if b < a {
                        return 0.0;
                    }
                    return ((b - a + 1.0) / (self.hi - self.lo + 1.0)).min(1.0);
                }
                if lo == hi {
                    return if *lo >= self.lo && *lo <= self.hi {
                        1.0 / self.distinct.max(1) as f64
                    } else {
                        0.0
                    };
                }
                let a = lo.max(self.lo);
                let b = hi.min(self.hi);
                if b < a {
                    return 0.0;
                }
                if b == a {
                    return if region.contains(a) {
                        1.0 / self.distinct.max(1) as f64
                    } else {
                        0.0
                    };
                }
                ((b - a) / (self.hi - self.lo)).clamp(0.0, 1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: u64) -> Vec<(f64, u64)> {
        (1..=n).map(|v| (v as f64, 10)).collect()
    }

    #[test]
    fn equi_depth_on_uniform_data() {
        let b = build_buckets(&uniform(100), 10);
        assert_eq!(b.len(), 10);
        assert!(b.iter().all(|b| b.rows == 100 && b.distinct == 10));
        assert!(b.windows(2).all(|w| w[0].hi < w[1].lo));
    }

    #[test]
    fn heavy_value_is_not_split() {
        let freqs = vec![(1.0, 1), (2.0, 1000), (3.0, 1)];
        let b = build_buckets(&freqs, 10);
        assert_eq!(b.iter().map(|b| b.rows).sum::<u64>(), 1002);
        assert_eq!(b.iter().filter(|b| b.lo <= 2.0 && 2.0 <= b.hi).count(), 1);
    }

    #[test]
    fn integral_fraction_counts_points() {
        let b = Bucket {
            lo: 1.0,
            hi: 10.0,
            rows: 100,
            distinct: 10,
        };
        assert_eq!(b.fraction(&Region::closed(f64::NEG_INFINITY, 5.0), true), 0.5);
        assert_eq!(b.fraction(&Region::point(3.0), true), 0.1);
        assert_eq!(b.fraction(&Region::values(vec![2.0, 4.0, 40.0]), true), 0.2);
        assert_eq!(b.fraction(&Region::closed(11.0, 20.0), true), 0.0);
    }

    #[test]
    fn continuous_fraction_is_linear() {
        let b = Bucket {
            lo: 0.0,
            hi: 1.0,
            rows: 50,
            distinct: 50,
        };
        assert!((b.fraction(&Region::closed(0.25, 0.75), false) - 0.5).abs() < 1e-12);
        assert_eq!(b.fraction(&Region::point(0.5), false), 1.0 / 50.0);
    }
}
