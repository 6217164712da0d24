//! Reference playback simulation on a 1 ms clock.
//!
//! Independent of the scheduler under test: instead of evaluating the queue
//! recurrence it advances a clock tick by tick and starts the next chunk at
//! the first tick where the device is idle and the chunk is synthesized.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub struct MsChunk {
    pub ready_ms: u64,
    pub compute_ms: u64,
    pub duration_ms: u64,
}

/// `(play_start_ms, play_end_ms)` per chunk.
pub fn tick_playback(chunks: &[MsChunk]) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(chunks.len());
    let mut clock: u64 = 0;
    let mut busy_until: u64 = 0;
    let mut next = 0;
    while next < chunks.len() {
        let c = chunks[next];
        let device_idle = clock >= busy_until;
        let synthesized = clock >= c.ready_ms + c.compute_ms;
        if device_idle && synthesized {
            out.push((clock, clock + c.duration_ms));
            busy_until = clock + c.duration_ms;
            next += 1;
            continue;
        }
        clock += 1;
    }
    out
}
