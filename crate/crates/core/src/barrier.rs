use std::sync::atomic::{AtomicUsize, Ordering};

/// Sense-counting barrier that spins briefly, then yields the core.
///
/// Intra-tile stages are short, so waking through a futex on every stage
/// would dominate; yielding keeps oversubscribed runs (more workers than
/// cores) making progress.
#[derive(Debug)]
pub struct SpinBarrier {
    parties: usize,
    arrived: AtomicUsize,
    generation: AtomicUsize,
    spin_limit: u32,
}

impl SpinBarrier {
    pub fn new(parties: usize) -> Self {
        assert!(parties > 0);
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let spin_limit = if cores >= parties { 2048 } else { 16 };
        Self { parties, arrived: AtomicUsize::new(0), generation: AtomicUsize::new(0), spin_limit }
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn wait(&self) {
        if self.parties == 1 {
            return;
        }
        let gen = self.generation.load(Ordering::Acquire);
        if self.arrived.fetch_add(1, Ordering::AcqRel) + 1 == self.parties {
            self.arrived.store(0, Ordering::Relaxed);
            self.generation.fetch_add(1, Ordering::AcqRel);
            return;
        }
        let mut spins = 0u32;
        while self.generation.load(Ordering::Acquire) == gen {
            if spins < self.spin_limit {
                std::hint::spin_loop();
                spins += 1;
            } else {
                std::thread::yield_now();
            }
        }
    }
}
