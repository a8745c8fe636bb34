//! Log-domain arithmetic: factorial tables and streaming log-sum-exp.
//!
//! All coefficient formulas in this crate are ratios of factorials with
//! positive summands; evaluating them in log space keeps n of several hundred
//! well inside f64 range.

/// Table of ln k! built by compensated (Kahan) summation of ln k.
#[derive(Clone, Debug)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    /// Covers 0! through `max_n`!.
    pub fn new(max_n: usize) -> Self {
        let mut table = Vec::with_capacity(max_n + 1);
        table.push(0.0);
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for k in 1..=max_n {
            let term = (k as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            table.push(sum);
        }
        LogFactorials { table }
    }

    #[inline]
    pub fn ln_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    #[inline]
    pub fn ln_binomial(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }

    pub fn max_n(&self) -> usize {
        self.table.len() - 1
    }
}

/// Streaming log-sum-exp accumulator for positive-summand series.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.sum += (log_term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    /// ln of the accumulated sum; -inf if nothing was added.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSum {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factorial_table_matches_direct_products() {
        let lf = LogFactorials::new(30);
        assert_eq!(lf.ln_factorial(0), 0.0);
        assert_eq!(lf.ln_factorial(1), 0.0);
        assert_relative_eq!(lf.ln_factorial(5), 120.0_f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(lf.ln_binomial(10, 3), 120.0_f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(lf.ln_binomial(30, 15), 155117520.0_f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_streaming() {
        let mut acc = LogSum::new();
        for t in [-3.0, 0.5, -700.0, 2.0] {
            acc.add(t);
        }
        let expected = ((-3.0_f64).exp() + 0.5_f64.exp() + (-700.0_f64).exp() + 2.0_f64.exp()).ln();
        assert_relative_eq!(acc.value(), expected, max_relative = 1e-14);
        let empty = LogSum::new();
        assert_eq!(empty.value(), f64::NEG_INFINITY);
    }
}
