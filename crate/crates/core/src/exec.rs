//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate is data parallel: states within a DP layer,
//! Monte Carlo paths, solves at different lattice depths. With the `parallel`
//! feature (default) these run on rayon; without it they degrade to plain
//! sequential loops with identical results, since all writes go to disjoint
//! slots and reductions are performed in index order afterwards.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}

/// Fills two same-shaped buffers chunk by chunk, one chunk per task.
#[cfg(feature = "parallel")]
pub(crate) fn fill_chunks2<A, B, F>(a: &mut [A], b: &mut [B], chunk: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync,
{
    use rayon::prelude::*;
    a.par_chunks_mut(chunk)
        .zip(b.par_chunks_mut(chunk))
        .enumerate()
        .for_each(|(i, (ca, cb))| f(i, ca, cb));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_chunks2<A, B, F>(a: &mut [A], b: &mut [B], chunk: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync,
{
    for (i, (ca, cb)) in a.chunks_mut(chunk).zip(b.chunks_mut(chunk)).enumerate() {
        f(i, ca, cb);
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn fill_chunks<A, F>(a: &mut [A], chunk: usize, f: F)
where
    A: Send,
    F: Fn(usize, &mut [A]) + Sync,
{
    use rayon::prelude::*;
    a.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, ca)| f(i, ca));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn fill_chunks<A, F>(a: &mut [A], chunk: usize, f: F)
where
    A: Send,
    F: Fn(usize, &mut [A]) + Sync,
{
    for (i, ca) in a.chunks_mut(chunk).enumerate() {
        f(i, ca);
    }
}
