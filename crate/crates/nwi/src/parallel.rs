//! Thread-backed [`Dispatch`] for multi-pulse inversion.

use std::thread;

use nwi_core::inversion::Dispatch;
use nwi_core::{Error, Result};

/// Spreads items over at most `workers` scoped threads. Each item is
/// handled by exactly one thread and results come back in item order, so
/// the outcome does not depend on the worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threaded {
    pub workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
        }
    }
}

impl Dispatch for Threaded {
    fn for_each<T: Send>(
        &self,
        items: &mut [T],
        f: &(dyn Fn(usize, &mut T) -> Result<()> + Sync),
    ) -> Vec<Result<()>> {
        if items.is_empty() {
            return Vec::new();
        }
        let per_thread = items.len().div_ceil(self.workers.max(1));
        thread::scope(|s| {
            let handles: Vec<_> = items
                .chunks_mut(per_thread)
                .enumerate()
                .map(|(chunk, slice)| {
                    let base = chunk * per_thread;
                    s.spawn(move || {
                        slice
                            .iter_mut()
                            .enumerate()
                            .map(|(i, t)| f(base + i, t))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| {
                    h.join()
                        .unwrap_or_else(|_| vec![Err(Error::InvalidConfig("worker thread panicked"))])
                })
                .collect()
        })
    }
}
