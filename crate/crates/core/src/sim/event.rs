use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{TaskId, VmId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// Index into the workload's job list.
    JobArrival(usize),
    /// `k`-th heartbeat of a VM.
    Heartbeat { vm: VmId, k: u64 },
    TaskFinish(TaskId),
    ReconfigEffective(TaskId),
    /// `since` identifies the deferral the timeout belongs to.
    DeferredLaunchTimeout { task: TaskId, since: f64 },
    SimEnd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (time, sequence) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite());
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, sequence, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Phase offset of a VM's heartbeats: VMs are spread evenly over one
/// interval by index.
pub fn heartbeat_offset(vm_index: usize, vm_count: usize, interval: f64) -> f64 {
    vm_index as f64 * interval / vm_count as f64
}

pub fn heartbeat_time(vm_index: usize, vm_count: usize, interval: f64, k: u64) -> f64 {
    heartbeat_offset(vm_index, vm_count, interval) + k as f64 * interval
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_sequence_order() {
        let mut q = EventQueue::default();
        q.push(5.0, EventKind::SimEnd);
        q.push(1.0, EventKind::JobArrival(0));
        q.push(1.0, EventKind::JobArrival(1));
        q.push(0.5, EventKind::JobArrival(2));
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind).collect();
        assert_eq!(
            order,
            vec![EventKind::JobArrival(2), EventKind::JobArrival(0), EventKind::JobArrival(1), EventKind::SimEnd]
        );
    }

    #[test]
    fn staggered_heartbeats() {
        let offsets: Vec<f64> = (0..20).map(|i| heartbeat_offset(i, 20, 3.0)).collect();
        assert_eq!(offsets[0], 0.0);
        assert!((offsets[1] - 0.15).abs() < 1e-12);
        assert!(offsets.windows(2).all(|w| w[1] > w[0] && w[1] < 3.0));
        let single: Vec<f64> = (0..4).map(|k| heartbeat_time(0, 1, 3.0, k)).collect();
        assert_eq!(single, vec![0.0, 3.0, 6.0, 9.0]);
    }
}
