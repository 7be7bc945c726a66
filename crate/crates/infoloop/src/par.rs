//! Order-preserving map helpers. With the `parallel` feature the work is
//! spread over rayon; results are positionally identical to the sequential
//! path, so outputs stay bit-reproducible either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    /// Use rayon when the `parallel` feature is enabled.
    Auto,
    Sequential,
}

/// Maps `f` over `items`, preserving order.
pub fn map<T: Sync, U: Send>(
    mode: Parallelism,
    items: &[T],
    f: impl Fn(&T) -> U + Sync + Send,
) -> Vec<U> {
    match mode {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Auto => map_auto(items, f),
    }
}

#[cfg(feature = "parallel")]
fn map_auto<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_auto<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Maps `f` over indices `0..n`, preserving order.
pub fn map_range<U: Send>(
    mode: Parallelism,
    n: usize,
    f: impl Fn(usize) -> U + Sync + Send,
) -> Vec<U> {
    let idx: Vec<usize> = (0..n).collect();
    map(mode, &idx, |&i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let items: Vec<f64> = (0..1000).map(|i| i as f64 * 0.37).collect();
        let f = |x: &f64| (x.sin() * 1e9).mul_add(3.0, x.cos());
        let seq = map(Parallelism::Sequential, &items, f);
        let auto = map(Parallelism::Auto, &items, f);
        assert_eq!(
            seq.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            auto.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
