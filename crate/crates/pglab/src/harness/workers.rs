//! Fixed-order job pool on scoped threads. Results come back indexed by
//! job id, so aggregation order — and therefore every emitted artifact —
//! is independent of scheduling and of the worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Run `n_jobs` closures over `workers` threads and return the results in
/// job order. Each job owns its index; determinism comes from jobs
/// deriving all randomness from that index (plus fixed seeds), never from
/// which thread ran them.
pub fn run_jobs<T, F>(n_jobs: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers == 0 {
        return Err(Error::InvalidConfig("worker count must be >= 1".into()));
    }
    if n_jobs == 0 {
        return Ok(Vec::new());
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n_jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n_jobs) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n_jobs {
                    break;
                }
                let out = job(i);
                slots.lock().expect("result mutex poisoned")[i] = Some(out);
            });
        }
    });
    let collected = slots.into_inner().expect("result mutex poisoned");
    collected
        .into_iter()
        .map(|slot| slot.ok_or_else(|| Error::Domain("worker pool dropped a job".into())))
        .collect()
}
