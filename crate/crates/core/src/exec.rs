//! Execution policy for the data-parallel stages.
//!
//! Every parallel loop in the crate is written once against [`Exec`]. With the
//! `parallel` feature disabled, [`Exec::Parallel`] still exists (so callers and
//! benches compile unchanged) but runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when this policy actually fans out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over owned items.
    pub fn map_owned<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.into_par_iter().map(f).collect();
        }
        items.into_iter().map(f).collect()
    }

    /// Splits `items` into shards, folds each shard with `fold` starting from
    /// `init()`, then combines the shard results left to right with `merge`.
    /// The shard boundaries are fixed by `shard_len`, so the result does not
    /// depend on the thread count.
    pub fn fold_shards<T, A, I, F, M>(
        self,
        items: &[T],
        shard_len: usize,
        init: I,
        fold: F,
        merge: M,
    ) -> A
    where
        T: Sync,
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, &T) + Sync + Send,
        M: Fn(A, A) -> A,
    {
        let shard_len = shard_len.max(1);
        let shards: Vec<&[T]> = items.chunks(shard_len).collect();
        let partials = self.map(&shards, |shard| {
            let mut acc = init();
            for item in shard.iter() {
                fold(&mut acc, item);
            }
            acc
        });
        partials.into_iter().fold(init(), merge)
    }

    /// Sorts with a stable comparison sort.
    pub fn sort_by<T, F>(self, items: &mut [T], cmp: F)
    where
        T: Send,
        F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            items.par_sort_by(cmp);
            return;
        }
        items.sort_by(cmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_shards_matches_sequential_sum() {
        let values: Vec<u64> = (0..10_001).collect();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let total = exec.fold_shards(&values, 97, || 0u64, |acc, v| *acc += v, |a, b| a + b);
            assert_eq!(total, 10_000 * 10_001 / 2);
        }
    }

    #[test]
    fn map_preserves_order() {
        let values: Vec<i32> = (0..1000).collect();
        let out = Exec::Parallel.map(&values, |v| v * 2);
        assert_eq!(out, values.iter().map(|v| v * 2).collect::<Vec<_>>());
    }
}
