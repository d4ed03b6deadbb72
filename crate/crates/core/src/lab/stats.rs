//! Small statistics used by the lab reports.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::kernel::{ranks, KernelError};

/// Spearman correlation of two samples without ties:
/// `1 - 6 sum d^2 / (n (n^2 - 1))`. Exactly 1.0 when the rankings agree.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    if a.len() != b.len() {
        return Err(KernelError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(KernelError::InsufficientSamples(n));
    }
    let (ra, rb) = (ranks(a)?, ranks(b)?);
    let d2: f64 = ra
        .iter()
        .zip(&rb)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Equal-tailed acceptance region `[lo, hi]` of Binomial(n, p) at the given
/// confidence: each tail outside the region has probability at most
/// `(1 - confidence) / 2`.
pub fn binomial_acceptance(n: u64, p: f64, confidence: f64) -> (u64, u64) {
    let p = p.clamp(0.0, 1.0);
    let tail = (1.0 - confidence) / 2.0;
    let dist = Binomial::new(p, n).expect("p in [0, 1]");
    // lo: largest x with P(X < x) <= tail
    let mut lo = 0;
    while lo < n && dist.cdf(lo) <= tail {
        lo += 1;
    }
    // hi: smallest x with P(X > x) <= tail
    let mut hi = n;
    while hi > 0 && dist.sf(hi - 1) <= tail {
        hi -= 1;
    }
    (lo, hi.max(lo))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
