//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the items are spread over a rayon pool of the
//! requested size; without it, or with a single worker, they run in order on
//! the calling thread.

use crate::error::Result;

pub fn map_sequential<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if workers <= 1 || items.len() <= 1 {
        return Ok(map_sequential(items, f));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::InvalidConfig { field: "jobs".into(), reason: e.to_string() })?;
    // one task per item: per-item cost varies by orders of magnitude
    Ok(pool.install(|| items.par_iter().with_max_len(1).map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], _workers: usize, f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(map_sequential(items, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = map_ordered(&items, 4, |&i| i * i).unwrap();
        assert_eq!(out, map_sequential(&items, |&i| i * i));
    }
}
