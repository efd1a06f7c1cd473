//! Replication-level data parallelism. With the `parallel` feature (default)
//! the map runs on a rayon pool; without it, or with `workers == Some(1)`,
//! it degrades to a plain sequential loop. Results come back in replication
//! order either way, so aggregation never depends on scheduling.

#[cfg(feature = "parallel")]
pub(crate) fn map_replications<T, F>(n: u64, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        Some(1) => (0..n).map(f).collect(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("failed to build worker pool")
            .install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).into_par_iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_replications<T, F>(n: u64, _workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
