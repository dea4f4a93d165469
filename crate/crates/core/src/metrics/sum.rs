//! Order-fixed pairwise summation.

const LEAF: usize = 32;

/// Sums `term(i)` for `i` in `0..n` with a pairwise tree keyed by index.
///
/// The tree shape depends only on `n`, so any caller evaluating the same
/// terms gets a bit-identical result.
pub fn pairwise_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, term: &F) -> f64 {
        if hi - lo <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, n, &term)
}

pub fn pairwise_sum_slice(values: &[f64]) -> f64 {
    pairwise_sum(values.len(), |i| values[i])
}
