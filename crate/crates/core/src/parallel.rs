//! Replica fan-out.
//!
//! With the `parallel` feature the replicas run on the rayon pool, otherwise
//! on the calling thread. Both paths produce identical results for the same
//! seed: outputs are collected in replica order and reductions must be
//! commutative.

use crate::rng::{replica_rng, SimRng};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `f` once per replica and collects the results in replica order.
pub fn map_replicas<T, F>(seed: u64, replicas: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut SimRng, u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..replicas)
            .into_par_iter()
            .map(|i| f(&mut replica_rng(seed, i), i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_replicas_sequential(seed, replicas, f)
    }
}

/// [`map_replicas`] on the calling thread, whatever the features.
pub fn map_replicas_sequential<T, F>(seed: u64, replicas: u64, f: F) -> Vec<T>
where
    F: Fn(&mut SimRng, u64) -> T,
{
    (0..replicas)
        .map(|i| f(&mut replica_rng(seed, i), i))
        .collect()
}

/// Folds replicas into per-worker accumulators and merges them.
///
/// `merge` has to be associative and commutative for the result to be
/// independent of scheduling.
pub fn fold_replicas<A, F, I, M>(seed: u64, replicas: u64, init: I, f: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &mut SimRng, u64) + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..replicas)
            .into_par_iter()
            .fold(&init, |mut acc, i| {
                f(&mut acc, &mut replica_rng(seed, i), i);
                acc
            })
            .reduce(&init, &merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = &merge;
        fold_replicas_sequential(seed, replicas, init, f)
    }
}

/// [`fold_replicas`] on the calling thread with a single accumulator.
pub fn fold_replicas_sequential<A, F, I>(seed: u64, replicas: u64, init: I, f: F) -> A
where
    I: Fn() -> A,
    F: Fn(&mut A, &mut SimRng, u64),
{
    let mut acc = init();
    for i in 0..replicas {
        f(&mut acc, &mut replica_rng(seed, i), i);
    }
    acc
}
