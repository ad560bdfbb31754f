//! Bounded fan-out with results kept in input order.

use rayon::prelude::*;
use rayon::ThreadPoolBuilder;

/// Apply `f` to every item using up to `parallelism` worker threads and
/// collect the results in input order. The first error in input order wins.
pub fn run_indexed<T, R, E, F>(parallelism: usize, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool");
    let results: Vec<Result<R, E>> = pool.install(|| items.par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_order() {
        let items: Vec<u32> = (0..100).collect();
        let out: Result<Vec<u32>, ()> = run_indexed(8, &items, |x| Ok(x * 2));
        assert_eq!(out.unwrap(), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn first_error_in_input_order() {
        let items: Vec<u32> = (0..50).collect();
        let out: Result<Vec<u32>, u32> = run_indexed(4, &items, |&x| if x % 10 == 7 { Err(x) } else { Ok(x) });
        assert_eq!(out, Err(7));
    }
}
