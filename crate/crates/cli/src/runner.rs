//! Multi-threaded block executor.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use brwld_core::simulate::Executor;

/// Runs blocks on `n` scoped worker threads pulling from a shared counter.
///
/// Results are put back in block order, so the output is the same for every
/// thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threads(pub usize);

impl Threads {
    pub fn available() -> Self {
        Threads(thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

impl Executor for Threads {
    fn map_blocks<T, F>(&self, blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.0.clamp(1, blocks.max(1));
        if workers == 1 {
            return (0..blocks).map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let done: Vec<Vec<(usize, T)>> = thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut out = Vec::new();
                        loop {
                            let b = next.fetch_add(1, Ordering::Relaxed);
                            if b >= blocks {
                                break;
                            }
                            out.push((b, f(b)));
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect()
        });
        let mut slots: Vec<Option<T>> = (0..blocks).map(|_| None).collect();
        for (b, t) in done.into_iter().flatten() {
            slots[b] = Some(t);
        }
        slots
            .into_iter()
            .map(|t| t.expect("every block is claimed exactly once"))
            .collect()
    }
}
