//! Correctly rounded summation and the moments built on it.
//!
//! `ExactSum` keeps non-overlapping partials (Shewchuk) and rounds once at the
//! end, so the result depends only on the multiset of inputs. In particular a
//! sample with every value repeated twice sums to exactly twice as much, which
//! keeps means and population variances bit-identical under duplication.

#[derive(Clone, Debug, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.partials.clear();
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
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
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction when the remaining partials push past a tie
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Mean and population variance. A constant sample returns `(value, 0.0)`
/// exactly. `values` must be nonempty.
pub fn mean_var(values: &[f64], acc: &mut ExactSum) -> (f64, f64) {
    debug_assert!(!values.is_empty());
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    acc.clear();
    for &v in values {
        acc.add(v);
    }
    let mean = acc.value() / n;
    acc.clear();
    for &v in values {
        let d = v - mean;
        acc.add(d * d);
    }
    (mean, acc.value() / n)
}
