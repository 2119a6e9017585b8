//! Discrete-event engine: a clock, a time-ordered queue with FIFO tie-breaking,
//! and labelled random streams derived from one master seed.
//!
//! A run is single-threaded. Events leave the queue in `(time, sequence)`
//! order, where `sequence` is a per-queue insertion counter, so two events
//! scheduled for the same instant fire in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entity an event or trace record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Actor {
    Tx(usize),
    Bs,
    RisController(usize),
    /// The shared medium of one sub-channel.
    Medium(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub time: f64,
    pub sequence: u64,
    pub actor: Actor,
    pub kind: K,
}

struct Entry<K>(Event<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Entry<K> {
    // BinaryHeap is a max-heap; reverse so the earliest (time, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.sequence.cmp(&self.0.sequence))
    }
}

pub struct EventQueue<K> {
    heap: BinaryHeap<Entry<K>>,
    clock: f64,
    next_sequence: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            clock: 0.0,
            next_sequence: 0,
        }
    }

    /// Current simulated time: the timestamp of the last dequeued event.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts an event and returns its sequence number.
    ///
    /// Scheduling before the current clock is a protocol-logic bug and is
    /// rejected with [`Error::PastEvent`].
    pub fn schedule(&mut self, time: f64, actor: Actor, kind: K) -> Result<u64> {
        if !(time >= self.clock) {
            return Err(Error::PastEvent {
                time,
                clock: self.clock,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Entry(Event {
            time,
            sequence,
            actor,
            kind,
        }));
        Ok(sequence)
    }

    pub fn peek(&self) -> Option<&Event<K>> {
        self.heap.peek().map(|e| &e.0)
    }

    pub fn pop(&mut self) -> Option<Event<K>> {
        let ev = self.heap.pop()?.0;
        self.clock = ev.time;
        Some(ev)
    }
}

/// Reacts to dequeued events, possibly scheduling new ones.
pub trait Handler {
    type Kind;

    fn handle(&mut self, event: Event<Self::Kind>, queue: &mut EventQueue<Self::Kind>) -> Result<()>;
}

/// Processes every event with `time <= horizon` and returns the final clock.
///
/// A handler error aborts the run; the returned error names the event that
/// triggered it.
pub fn run_to_completion<H: Handler>(handler: &mut H, queue: &mut EventQueue<H::Kind>, horizon: f64) -> Result<f64> {
    while let Some(next) = queue.peek() {
        if next.time > horizon {
            break;
        }
        let event = queue.pop().expect("peeked");
        let (time, seq, actor) = (event.time, event.sequence, event.actor);
        handler.handle(event, queue).map_err(|e| match e {
            e @ Error::Handler { .. } => e,
            other => Error::Handler {
                time,
                seq,
                actor,
                message: other.to_string(),
            },
        })?;
    }
    Ok(queue.clock())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed from which labelled streams are split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, label: &str) -> RngStream {
        let seed = splitmix64(self.master ^ splitmix64(fnv1a(label)));
        RngStream {
            label: label.to_string(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An indexed child of `label`, e.g. one channel draw per coherence block.
    pub fn substream(&self, label: &str, index: u64) -> RngStream {
        let base = splitmix64(self.master ^ splitmix64(fnv1a(label)));
        RngStream {
            label: format!("{label}/{index}"),
            rng: ChaCha8Rng::seed_from_u64(splitmix64(base ^ splitmix64(index.wrapping_add(1)))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    label: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn label(&self) -> &str {
        &self.label
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
