//! Replica-parallel execution and the small amount of statistics the
//! experiments need.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{replica_stream, Stream};

/// Runs `f(replica, stream)` for every replica on the rayon pool and returns
/// the results ordered by replica index.
pub fn run_replicas<T, F>(count: u64, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, Stream) -> T + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map(|r| f(r, replica_stream(master_seed, r)))
        .collect()
}

/// Like [`run_replicas`] but stops at the first error (in replica order).
pub fn try_run_replicas<T, F>(count: u64, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Stream) -> Result<T> + Sync + Send,
{
    run_replicas(count, master_seed, f).into_iter().collect()
}

/// Caps the global thread pool at `ZRH_THREADS` when set.
pub fn configure_threads_from_env() -> Result<()> {
    match std::env::var("ZRH_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParams(format!("ZRH_THREADS={v:?} is not a count")))?;
            // A pool that already exists keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Delete-one jackknife standard error of a statistic given its
/// leave-one-out values.
pub fn jackknife_se(leave_one_out: &[f64]) -> f64 {
    let n = leave_one_out.len() as f64;
    let mean = leave_one_out.iter().sum::<f64>() / n;
    ((n - 1.0) / n * leave_one_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn replicas_are_ordered_and_reproducible() {
        let a = run_replicas(16, 9, |r, mut s| (r, s.random::<u64>()));
        let b = run_replicas(16, 9, |r, mut s| (r, s.random::<u64>()));
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, (r, _))| *r == i as u64));
    }

    #[test]
    fn mean_and_jackknife() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_se(&xs);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        // For the mean, the jackknife reproduces the classical SE.
        let loo: Vec<f64> = (0..4)
            .map(|i| xs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x).sum::<f64>() / 3.0)
            .collect();
        assert!((jackknife_se(&loo) - se).abs() < 1e-12);
    }
}
