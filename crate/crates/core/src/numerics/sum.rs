//! Exact summation with a single final rounding.
//!
//! [`StableSum`] keeps the running total as a non-overlapping expansion of
//! partial sums (Shewchuk's grow-expansion built from two-sum error-free
//! transformations) and rounds once at the end, so the result is the
//! correctly rounded value of the exact sum. Merging accumulators built over
//! different chunks therefore gives bitwise-identical results for any
//! chunking.

/// `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[derive(Debug, Clone, Default)]
pub struct StableSum {
    partials: Vec<f64>,
    // sums of non-finite inputs are tracked separately
    special: f64,
}

impl StableSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        if !value.is_finite() {
            self.special += value;
            return;
        }
        let mut x = value;
        let mut kept = 0;
        for k in 0..self.partials.len() {
            let mut y = self.partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let (hi, lo) = two_sum(x, y);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        // a finite pair can still overflow in hi; route it to the special lane
        if x.is_finite() {
            self.partials.push(x);
        } else {
            self.special += x;
        }
    }

    /// Folds another accumulator into this one exactly.
    pub fn merge(&mut self, other: &StableSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.special += other.special;
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            let (s, e) = two_sum(x, y);
            hi = s;
            lo = e;
            if lo != 0.0 {
                break;
            }
        }
        // half-way correction: if the remaining tail pushes the rounding
        // beyond the tie, adjust hi by one ulp in the direction of lo
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for StableSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

impl FromIterator<f64> for StableSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = StableSum::new();
        s.extend(iter);
        s
    }
}

/// Sum of `values` in left-to-right order with exact accumulation and one
/// final rounding.
pub fn stable_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<StableSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(stable_sum(&[]), 0.0);
    }

    #[test]
    fn cancellation_is_compensated() {
        assert_eq!(stable_sum(&[1e16, 1.0, -1e16]), 1.0);
        assert_eq!(stable_sum(&[1e100, 1.0, -1e100, 1e-100]), 1.0);
    }

    #[test]
    fn many_tenths() {
        let v = vec![0.1; 1_000_000];
        // exact sum of 10^6 copies of fl(0.1) is 10^6 * fl(0.1), which rounds to 100000.00000000001
        let s = stable_sum(&v);
        assert!((s - 1e5).abs() < 1e-8, "{s}");
        let naive: f64 = v.iter().sum();
        assert!((naive - 1e5).abs() > (s - 1e5).abs());
    }

    #[test]
    fn non_finite_inputs_propagate() {
        assert_eq!(stable_sum(&[1.0, f64::INFINITY]), f64::INFINITY);
        assert!(stable_sum(&[f64::INFINITY, f64::NEG_INFINITY]).is_nan());
        assert!(stable_sum(&[1.0, f64::NAN]).is_nan());
    }

    #[test]
    fn merge_is_chunking_independent() {
        let values: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1013) as f64 * 1e-3 * if i % 3 == 0 { -1e8 } else { 1.0 })
            .collect();
        let whole = stable_sum(&values);
        for chunk in [1, 7, 64, 333, 1000] {
            let mut acc = StableSum::new();
            for c in values.chunks(chunk) {
                acc.merge(&c.iter().copied().collect());
            }
            assert_eq!(acc.value().to_bits(), whole.to_bits(), "chunk {chunk}");
        }
    }
}
