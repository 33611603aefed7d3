//! Data-parallel helpers with a sequential fallback.
//!
//! Reductions use fixed chunk boundaries and combine per-chunk accumulators
//! in chunk order, so enabling the `parallel` feature changes wall-clock
//! time but never the bits of a result. The `_seq` variants are always
//! compiled; benches compare them against the rayon paths directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk width used for batched gradient reductions.
pub const GRAD_CHUNK: usize = 16;

pub fn map_collect_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_collect_par<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Order-preserving map; parallel when the feature is enabled.
pub fn map_collect<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        map_collect_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_collect_seq(items, f)
    }
}

fn chunk_starts(n: usize, chunk: usize) -> impl Iterator<Item = usize> {
    debug_assert!(chunk > 0);
    (0..n).step_by(chunk)
}

pub fn fold_chunks_seq<A>(
    n: usize,
    chunk: usize,
    make: impl Fn() -> A,
    fold: impl Fn(&mut A, usize),
    merge: impl Fn(&mut A, A),
) -> Option<A> {
    let mut out: Option<A> = None;
    for start in chunk_starts(n, chunk) {
        let mut acc = make();
        for i in start..(start + chunk).min(n) {
            fold(&mut acc, i);
        }
        match &mut out {
            None => out = Some(acc),
            Some(total) => merge(total, acc),
        }
    }
    out
}

#[cfg(feature = "parallel")]
pub fn fold_chunks_par<A: Send>(
    n: usize,
    chunk: usize,
    make: impl Fn() -> A + Sync,
    fold: impl Fn(&mut A, usize) + Sync,
    merge: impl Fn(&mut A, A),
) -> Option<A> {
    let starts: Vec<usize> = chunk_starts(n, chunk).collect();
    let accs: Vec<A> = starts
        .par_iter()
        .map(|&start| {
            let mut acc = make();
            for i in start..(start + chunk).min(n) {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut iter = accs.into_iter();
    let mut out = iter.next()?;
    for acc in iter {
        merge(&mut out, acc);
    }
    Some(out)
}

/// Fold indices `0..n` in fixed chunks and merge chunk results in order.
pub fn fold_chunks<A: Send>(
    n: usize,
    chunk: usize,
    make: impl Fn() -> A + Sync,
    fold: impl Fn(&mut A, usize) + Sync,
    merge: impl Fn(&mut A, A),
) -> Option<A> {
    #[cfg(feature = "parallel")]
    {
        fold_chunks_par(n, chunk, make, fold, merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        fold_chunks_seq(n, chunk, make, fold, merge)
    }
}
