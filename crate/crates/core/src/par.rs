//! Data-parallel helpers. With the `parallel` feature the work is spread
//! over rayon's pool; without it every helper runs the same closure in a
//! plain loop. Output order and per-element arithmetic are identical in
//! both modes, so results are bitwise equal.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum multiply-adds per call before row loops fan out.
const ROW_PAR_THRESHOLD: usize = 1 << 16;

/// Execution strategy for the batch-level helpers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

/// Applies `f(i, row)` to each `cols`-wide row of `data`.
pub(crate) fn for_each_row<T, F>(data: &mut [T], cols: usize, work_per_row: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let rows = data.len() / cols.max(1);
    #[cfg(feature = "parallel")]
    if rows > 1 && rows.saturating_mul(work_per_row) >= ROW_PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        data.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
        return;
    }
    let _ = (rows, work_per_row, ROW_PAR_THRESHOLD);
    data.chunks_mut(cols).enumerate().for_each(|(i, r)| f(i, r));
}

/// Applies `f(i, a_row, b_row, c_row, scratch)` to matching `cols`-wide rows
/// of three equally long buffers. `scratch` holds `cols` values of no
/// particular content.
pub(crate) fn for_each_row3<T, F>(a: &mut [T], b: &mut [T], c: &mut [T], cols: usize, work_per_row: usize, f: F)
where
    T: Send + Copy + Default,
    F: Fn(usize, &mut [T], &mut [T], &mut [T], &mut [T]) + Send + Sync,
{
    let rows = a.len() / cols.max(1);
    #[cfg(feature = "parallel")]
    if rows > 1 && rows.saturating_mul(work_per_row) >= ROW_PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        a.par_chunks_mut(cols)
            .zip(b.par_chunks_mut(cols))
            .zip(c.par_chunks_mut(cols))
            .enumerate()
            .for_each_init(|| vec![T::default(); cols], |s, (i, ((ra, rb), rc))| f(i, ra, rb, rc, s));
        return;
    }
    let _ = (rows, work_per_row);
    let mut s = vec![T::default(); cols];
    for (i, ((ra, rb), rc)) in a.chunks_mut(cols).zip(b.chunks_mut(cols)).zip(c.chunks_mut(cols)).enumerate() {
        f(i, ra, rb, rc, &mut s);
    }
}

/// Builds a `rows × cols` buffer row by row; `f(i, out)` must append
/// exactly `cols` values for row `i`. Rows are never zero-filled first.
pub(crate) fn build_rows<T, F>(rows: usize, cols: usize, work_per_row: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Vec<T>) + Send + Sync,
{
    #[cfg(feature = "parallel")]
    if rows > 1 && rows.saturating_mul(work_per_row) >= ROW_PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        let parts: Vec<Vec<T>> = (0..rows)
            .into_par_iter()
            .map(|i| {
                let mut v = Vec::with_capacity(cols);
                f(i, &mut v);
                v
            })
            .collect();
        return parts.into_iter().flatten().collect();
    }
    let _ = work_per_row;
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        f(i, &mut out);
    }
    out
}

/// Maps `f` over `items`, preserving order.
pub fn map<I, O, F>(exec: Exec, items: &[I], f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Send + Sync,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => items.par_iter().map(f).collect(),
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<O, F>(exec: Exec, n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Send + Sync,
{
    match exec {
        Exec::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(Exec::Sequential, &items, |x| x * x);
        let def = map(Exec::default(), &items, |x| x * x);
        assert_eq!(seq, def);
        assert_eq!(map_range(Exec::default(), 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn rows_visited_once() {
        let mut data = vec![0usize; 12];
        for_each_row(&mut data, 3, usize::MAX / 16, |i, r| r.iter_mut().for_each(|v| *v += i));
        assert_eq!(data, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
