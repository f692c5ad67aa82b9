//! Multi-threaded replicate runner with per-replicate wall-clock timing.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use hybridtail_core::montecarlo::{aggregate, run_replicate, McConfig, McReport, ReplicateFit};
use hybridtail_core::Result;

type Slot = Mutex<Option<(Result<ReplicateFit>, f64)>>;

/// Worker count from the machine, at least one.
pub fn default_threads() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs every replicate on `threads` workers and folds the outcomes in
/// index order, so the report only depends on the config (timing aside).
pub fn run_mc(cfg: &McConfig, threads: usize) -> Result<McReport> {
    cfg.validate()?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Slot> = (0..cfg.replicates).map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..threads.clamp(1, cfg.replicates) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfg.replicates {
                    break;
                }
                let start = Instant::now();
                let outcome = run_replicate(cfg, i);
                let secs = start.elapsed().as_secs_f64();
                *slots[i].lock().unwrap() = Some((outcome, secs));
            });
        }
    });
    let mut outcomes = Vec::with_capacity(cfg.replicates);
    let mut seconds = 0.0;
    for slot in slots {
        let (outcome, secs) = slot.into_inner().unwrap().expect("every replicate ran");
        seconds += secs;
        outcomes.push(outcome);
    }
    let mut report = aggregate(cfg, &outcomes)?;
    report.mean_seconds = Some(seconds / cfg.replicates as f64);
    Ok(report)
}
