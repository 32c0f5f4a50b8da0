//! Execution policy for the data-parallel stages.
//!
//! Every parallel stage has a sequential twin that produces bit-identical
//! output: work is split into independent items (rows, pixel chunks,
//! references) and results are combined in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a stage schedules its inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Plain iterators on the calling thread.
    Sequential,
    /// rayon work stealing on the current pool. Falls back to
    /// [`Exec::Sequential`] when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build honours [`Exec::Parallel`].
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    fn is_parallel(self) -> bool {
        Self::parallel_available() && self == Exec::Parallel
    }
}

/// Maps `f` over `0..len`, returning results in index order.
pub fn map_range<T, F>(exec: Exec, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, returning results in input order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fills `out` row by row; `f` receives the row index and the row slice.
pub fn for_each_row<T, F>(exec: Exec, out: &mut [T], row_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = exec;
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Folds `items` in fixed-size chunks into per-block `u32` histograms of
/// length `bins` and sums them. Integer addition makes the result
/// independent of chunk scheduling.
pub fn histogram_chunks<S, F>(exec: Exec, items: &[S], bins: usize, chunk: usize, fill: F) -> Vec<u32>
where
    S: Sync,
    F: Fn(&[S], &mut [u32]) + Sync + Send,
{
    let chunk = chunk.max(1);
    let merge = |mut a: Vec<u32>, b: Vec<u32>| {
        a.iter_mut().zip(&b).for_each(|(x, y)| *x += *y);
        a
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        // One block per worker bounds the number of full-size histograms.
        let block = items.len().div_ceil(rayon::current_num_threads()).max(chunk);
        return items
            .par_chunks(block)
            .map(|b| {
                let mut h = vec![0u32; bins];
                b.chunks(chunk).for_each(|c| fill(c, &mut h));
                h
            })
            .reduce_with(merge)
            .unwrap_or_else(|| vec![0u32; bins]);
    }
    let _ = (exec, merge);
    let mut h = vec![0u32; bins];
    for c in items.chunks(chunk) {
        fill(c, &mut h);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let a = map_range(Exec::Sequential, 1000, |i| i * i);
        let b = map_range(Exec::Parallel, 1000, |i| i * i);
        assert_eq!(a, b);

        let items: Vec<usize> = (0..10_000).map(|i| i % 97).collect();
        let fill = |c: &[usize], h: &mut [u32]| c.iter().for_each(|&v| h[v] += 1);
        let hs = histogram_chunks(Exec::Sequential, &items, 97, 64, fill);
        let hp = histogram_chunks(Exec::Parallel, &items, 97, 64, fill);
        assert_eq!(hs, hp);
        assert_eq!(hs.iter().sum::<u32>(), 10_000);
    }

    #[test]
    fn rows_are_visited_once() {
        let mut out = vec![0usize; 12];
        for_each_row(Exec::Parallel, &mut out, 4, |i, row| {
            row.iter_mut().for_each(|v| *v += i + 1)
        });
        assert_eq!(out, vec![1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }
}
