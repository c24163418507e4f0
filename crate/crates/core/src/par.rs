//! Data-parallel helpers. With the `parallel` feature disabled every call
//! runs sequentially; results are identical either way.

/// How batch work is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    pub fn from_flag(parallel: bool) -> Self {
        if parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// Whether this build can actually run in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Order-preserving map over a slice.
pub fn map<T, U, F>(items: &[T], exec: Execution, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Order-preserving filter-and-clone over a slice.
pub fn filter_cloned<T, F>(items: &[T], exec: Execution, keep: F) -> Vec<T>
where
    T: Clone + Send + Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return items.par_iter().filter(|t| keep(t)).cloned().collect();
    }
    let _ = exec;
    items.iter().filter(|t| keep(t)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..10_000).collect();
        let seq = map(&xs, Execution::Sequential, |x| x * x % 97);
        let par = map(&xs, Execution::Parallel, |x| x * x % 97);
        assert_eq!(seq, par);
        let a = filter_cloned(&xs, Execution::Sequential, |x| x % 3 == 0);
        let b = filter_cloned(&xs, Execution::Parallel, |x| x % 3 == 0);
        assert_eq!(a, b);
    }
}
