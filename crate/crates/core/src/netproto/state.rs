//! The coordinator's scheduling logic as a pure state machine: events in,
//! (state', actions) out. No sockets, no clocks — fully testable in memory.
//!
//! Scheduling contract: one outstanding task per worker; results commit
//! idempotently (first accepted result wins, safe because task execution is
//! deterministic); tasks lost to a deadline or disconnect return to the
//! front of the queue with the attempt bumped.

use crate::engine::{Task, TaskOutcome, TaskResult};
use std::collections::{BTreeMap, VecDeque};

/// What happened, as seen by the I/O layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A worker completed HELLO with this protocol version.
    WorkerJoined { worker_id: u64, protocol_version: u16 },
    /// A TASK_RESULT frame arrived and decoded cleanly.
    ResultReceived { worker_id: u64, task_id: u64, attempt: u32, result: TaskResult },
    /// A TASK_ERROR frame arrived: the task failed deterministically.
    ErrorReceived { worker_id: u64, task_id: u64, attempt: u32, reason: String },
    /// The task sat in flight past its deadline.
    DeadlineElapsed { task_id: u64 },
    /// The connection dropped (socket error or missed heartbeats).
    WorkerDisconnected { worker_id: u64 },
}

/// What the I/O layer must do next.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send HELLO_ACK{accepted} to the worker.
    Ack { worker_id: u64, accepted: bool },
    /// Send TASK_ASSIGN for this task to the worker.
    Assign { worker_id: u64, task: Task },
    /// Drop the connection after a protocol violation.
    Disconnect { worker_id: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerSlot {
    Idle,
    Busy(u64),
}

#[derive(Debug)]
pub struct CoordinatorState {
    pending: VecDeque<Task>,
    in_flight: BTreeMap<u64, (Task, u64)>,
    done: BTreeMap<u64, TaskOutcome>,
    workers: BTreeMap<u64, WorkerSlot>,
    total_tasks: usize,
    joined_total: usize,
    /// Assignments start once this many workers have joined.
    expected_workers: usize,
}

impl CoordinatorState {
    pub fn new(tasks: Vec<Task>, expected_workers: usize) -> Self {
        let total_tasks = tasks.len();
        Self {
            pending: tasks.into(),
            in_flight: BTreeMap::new(),
            done: BTreeMap::new(),
            workers: BTreeMap::new(),
            total_tasks,
            joined_total: 0,
            expected_workers: expected_workers.max(1),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.done.len() == self.total_tasks
    }

    pub fn live_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn joined_total(&self) -> usize {
        self.joined_total
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn in_flight_len(&self) -> usize {
        self.in_flight.len()
    }

    pub fn done_len(&self) -> usize {
        self.done.len()
    }

    pub fn in_flight_ids(&self) -> Vec<u64> {
        self.in_flight.keys().copied().collect()
    }

    /// Every task is in exactly one of pending / in_flight / done.
    pub fn check_conservation(&self) -> bool {
        self.pending.len() + self.in_flight.len() + self.done.len() == self.total_tasks
    }

    /// Merged outcomes in ascending entry order. Call once complete.
    pub fn into_outcomes(self) -> Vec<TaskOutcome> {
        self.done.into_values().collect()
    }

    fn assignment_gate_open(&self) -> bool {
        self.joined_total >= self.expected_workers
    }

    fn assign_to(&mut self, worker_id: u64, actions: &mut Vec<Action>) {
        if !self.assignment_gate_open() {
            return;
        }
        if self.workers.get(&worker_id) != Some(&WorkerSlot::Idle) {
            return;
        }
        if let Some(task) = self.pending.pop_front() {
            self.in_flight.insert(task.task_id, (task, worker_id));
            self.workers.insert(worker_id, WorkerSlot::Busy(task.task_id));
            actions.push(Action::Assign { worker_id, task });
        }
    }

    fn assign_to_all_idle(&mut self, actions: &mut Vec<Action>) {
        let idle: Vec<u64> = self
            .workers
            .iter()
            .filter(|(_, slot)| **slot == WorkerSlot::Idle)
            .map(|(id, _)| *id)
            .collect();
        for worker_id in idle {
            self.assign_to(worker_id, actions);
        }
    }

    fn release_worker_slot(&mut self, worker_id: u64, task_id: u64) {
        if let Some(slot) = self.workers.get_mut(&worker_id) {
            if *slot == WorkerSlot::Busy(task_id) {
                *slot = WorkerSlot::Idle;
            }
        }
    }

    /// Commit an outcome for a task that is currently pending or in flight.
    /// Returns false when the task is unknown.
    fn commit(&mut self, task_id: u64, outcome: Result<TaskResult, String>) -> bool {
        if self.done.contains_key(&task_id) {
            return true; // idempotent: first result is authoritative
        }
        let entry_index = if let Some((task, holder)) = self.in_flight.remove(&task_id) {
            // free the recorded holder (the sender may be a stale holder
            // whose slot is released separately)
            self.release_worker_slot(holder, task_id);
            task.entry_index
        } else if let Some(pos) = self.pending.iter().position(|t| t.task_id == task_id) {
            let task = self.pending.remove(pos).unwrap();
            task.entry_index
        } else {
            return false;
        };
        self.done.insert(task_id, TaskOutcome { entry_index, outcome });
        true
    }

    /// Apply one event; returns the actions the I/O layer must carry out.
    pub fn step(&mut self, event: Event) -> Vec<Action> {
        let mut actions = Vec::new();
        match event {
            Event::WorkerJoined { worker_id, protocol_version } => {
                if protocol_version != super::PROTOCOL_VERSION {
                    actions.push(Action::Ack { worker_id, accepted: false });
                    actions.push(Action::Disconnect {
                        worker_id,
                        reason: format!("unsupported protocol version {protocol_version}"),
                    });
                } else if self.workers.contains_key(&worker_id) {
                    actions.push(Action::Ack { worker_id, accepted: false });
                    actions.push(Action::Disconnect {
                        worker_id,
                        reason: "worker id already in use".into(),
                    });
                } else {
                    self.workers.insert(worker_id, WorkerSlot::Idle);
                    self.joined_total += 1;
                    actions.push(Action::Ack { worker_id, accepted: true });
                    // the gate may have just opened for everyone
                    self.assign_to_all_idle(&mut actions);
                }
            }
            Event::ResultReceived { worker_id, task_id, attempt: _, result } => {
                if self.done.contains_key(&task_id) {
                    // duplicate of a committed task: ignore
                    self.release_worker_slot(worker_id, task_id);
                    self.assign_to(worker_id, &mut actions);
                } else if self.commit(task_id, Ok(result)) {
                    self.release_worker_slot(worker_id, task_id);
                    self.assign_to_all_idle(&mut actions);
                } else {
                    actions.push(Action::Disconnect {
                        worker_id,
                        reason: format!("result for unknown task {task_id}"),
                    });
                }
            }
            Event::ErrorReceived { worker_id, task_id, attempt: _, reason } => {
                if self.done.contains_key(&task_id) {
                    self.release_worker_slot(worker_id, task_id);
                    self.assign_to(worker_id, &mut actions);
                } else if self.commit(task_id, Err(reason)) {
                    self.release_worker_slot(worker_id, task_id);
                    self.assign_to_all_idle(&mut actions);
                } else {
                    actions.push(Action::Disconnect {
                        worker_id,
                        reason: format!("error for unknown task {task_id}"),
                    });
                }
            }
            Event::DeadlineElapsed { task_id } => {
                if let Some((mut task, _worker)) = self.in_flight.remove(&task_id) {
                    // the holder keeps its slot occupied: if it is merely
                    // slow, its late result will still commit; if it is
                    // dead, the heartbeat timeout will disconnect it
                    task.attempt += 1;
                    self.pending.push_front(task);
                    self.assign_to_all_idle(&mut actions);
                }
            }
            Event::WorkerDisconnected { worker_id } => {
                if self.workers.remove(&worker_id).is_some() {
                    let held: Vec<u64> = self
                        .in_flight
                        .iter()
                        .filter(|(_, (_, w))| *w == worker_id)
                        .map(|(id, _)| *id)
                        .collect();
                    for task_id in held {
                        let (mut task, _) = self.in_flight.remove(&task_id).unwrap();
                        task.attempt += 1;
                        self.pending.push_front(task);
                    }
                    self.assign_to_all_idle(&mut actions);
                }
            }
        }
        debug_assert!(self.check_conservation());
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tasks(n: u32) -> Vec<Task> {
        (0..n).map(|i| Task { task_id: i as u64, entry_index: i, attempt: 0 }).collect()
    }

    fn ok_result(task_id: u64) -> TaskResult {
        TaskResult {
            entry_index: task_id as u32,
            keypoints: vec![],
            descriptors: None,
            dropped_count: 0,
            elapsed_micros: 1,
        }
    }

    fn assigned_ids(actions: &[Action]) -> Vec<u64> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Assign { task, .. } => Some(task.task_id),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn single_worker_walks_the_queue() {
        let mut st = CoordinatorState::new(tasks(3), 1);
        let actions = st.step(Event::WorkerJoined { worker_id: 10, protocol_version: 1 });
        assert_eq!(actions[0], Action::Ack { worker_id: 10, accepted: true });
        assert_eq!(assigned_ids(&actions), vec![0]);
        for id in 0..3u64 {
            let actions = st.step(Event::ResultReceived {
                worker_id: 10,
                task_id: id,
                attempt: 0,
                result: ok_result(id),
            });
            if id < 2 {
                assert_eq!(assigned_ids(&actions), vec![id + 1]);
            } else {
                assert!(assigned_ids(&actions).is_empty());
            }
        }
        assert!(st.is_complete());
        let outcomes = st.into_outcomes();
        assert_eq!(outcomes.len(), 3);
        assert!(outcomes.iter().enumerate().all(|(i, o)| o.entry_index == i as u32));
    }

    #[test]
    fn wrong_protocol_version_is_rejected() {
        let mut st = CoordinatorState::new(tasks(1), 1);
        let actions = st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 2 });
        assert_eq!(actions[0], Action::Ack { worker_id: 1, accepted: false });
        assert!(matches!(actions[1], Action::Disconnect { .. }));
        assert_eq!(st.live_workers(), 0);
    }

    #[test]
    fn dead_worker_task_is_reassigned_to_the_front() {
        let mut st = CoordinatorState::new(tasks(8), 2);
        st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 1 });
        let a2 = st.step(Event::WorkerJoined { worker_id: 2, protocol_version: 1 });
        // gate opens at 2 workers: both get a task (ids 0 and 1)
        let mut initial = assigned_ids(&a2);
        initial.sort_unstable();
        assert_eq!(initial, vec![0, 1]);

        // worker 1 dies holding task 0; worker 2 is busy, so the retry waits
        let actions = st.step(Event::WorkerDisconnected { worker_id: 1 });
        assert!(assigned_ids(&actions).is_empty());
        assert!(st.check_conservation());

        // when worker 2 reports, it receives the retried task 0 first
        let actions = st.step(Event::ResultReceived {
            worker_id: 2,
            task_id: 1,
            attempt: 0,
            result: ok_result(1),
        });
        let assigned = assigned_ids(&actions);
        assert_eq!(assigned, vec![0]);
        // retried task carries attempt 1
        let attempt = actions
            .iter()
            .find_map(|a| match a {
                Action::Assign { task, .. } => Some(task.attempt),
                _ => None,
            })
            .unwrap();
        assert_eq!(attempt, 1);
    }

    #[test]
    fn duplicate_results_are_ignored() {
        let mut st = CoordinatorState::new(tasks(3), 1);
        st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 1 });
        st.step(Event::ResultReceived { worker_id: 1, task_id: 0, attempt: 0, result: ok_result(0) });
        let before = st.done_len();
        let actions = st.step(Event::ResultReceived {
            worker_id: 1,
            task_id: 0,
            attempt: 0,
            result: ok_result(0),
        });
        assert_eq!(st.done_len(), before);
        assert!(actions.iter().all(|a| !matches!(a, Action::Disconnect { .. })));
    }

    #[test]
    fn unknown_task_results_drop_the_connection() {
        let mut st = CoordinatorState::new(tasks(2), 1);
        st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 1 });
        let actions = st.step(Event::ResultReceived {
            worker_id: 1,
            task_id: 99,
            attempt: 0,
            result: ok_result(99),
        });
        assert!(matches!(&actions[0], Action::Disconnect { .. }));
    }

    #[test]
    fn task_errors_commit_without_retry() {
        let mut st = CoordinatorState::new(tasks(2), 1);
        st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 1 });
        let actions = st.step(Event::ErrorReceived {
            worker_id: 1,
            task_id: 0,
            attempt: 0,
            reason: "image decode failed".into(),
        });
        assert_eq!(assigned_ids(&actions), vec![1]);
        st.step(Event::ResultReceived { worker_id: 1, task_id: 1, attempt: 0, result: ok_result(1) });
        assert!(st.is_complete());
        let outcomes = st.into_outcomes();
        assert!(outcomes[0].outcome.is_err());
        assert!(outcomes[1].outcome.is_ok());
    }

    #[test]
    fn deadline_requeues_but_late_result_still_commits() {
        let mut st = CoordinatorState::new(tasks(2), 1);
        st.step(Event::WorkerJoined { worker_id: 1, protocol_version: 1 });
        // task 0 in flight on worker 1; deadline passes
        let actions = st.step(Event::DeadlineElapsed { task_id: 0 });
        assert!(assigned_ids(&actions).is_empty()); // no idle workers
        assert_eq!(st.pending_len(), 2);
        // the slow worker answers anyway: commit, and it takes the next task
        let actions = st.step(Event::ResultReceived {
            worker_id: 1,
            task_id: 0,
            attempt: 0,
            result: ok_result(0),
        });
        assert_eq!(st.done_len(), 1);
        assert_eq!(assigned_ids(&actions).len(), 1);
        assert!(st.check_conservation());
    }

    #[test]
    fn random_event_sequences_conserve_tasks() {
        // a randomized schedule of joins, results, deadlines and disconnects
        // must preserve |pending| + |in_flight| + |done| and eventually
        // complete when a surviving worker drains the queue
        let mut rng_state = 0x5EED_5EED_u64;
        let mut next = move || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            rng_state
        };
        for round in 0..50 {
            let n = (next() % 12 + 1) as u32;
            let mut st = CoordinatorState::new(tasks(n), 1);
            let mut live: Vec<u64> = Vec::new();
            let mut next_worker = 100u64;
            let mut outstanding: std::collections::HashMap<u64, Vec<Task>> =
                std::collections::HashMap::new();
            let mut apply = |st: &mut CoordinatorState,
                             outstanding: &mut std::collections::HashMap<u64, Vec<Task>>,
                             ev: Event| {
                let actions = st.step(ev);
                for a in &actions {
                    if let Action::Assign { worker_id, task } = a {
                        outstanding.entry(*worker_id).or_default().push(*task);
                    }
                }
                assert!(st.check_conservation(), "round {round}");
            };
            // join 1-3 workers
            for _ in 0..(next() % 3 + 1) {
                let w = next_worker;
                next_worker += 1;
                live.push(w);
                apply(&mut st, &mut outstanding, Event::WorkerJoined { worker_id: w, protocol_version: 1 });
            }
            let mut steps = 0;
            while !st.is_complete() && steps < 1000 {
                steps += 1;
                let choice = next() % 10;
                if choice < 6 {
                    // a worker with outstanding work answers
                    if let Some((&w, _)) = outstanding.iter().find(|(_, v)| !v.is_empty()) {
                        let task = outstanding.get_mut(&w).unwrap().remove(0);
                        apply(
                            &mut st,
                            &mut outstanding,
                            Event::ResultReceived {
                                worker_id: w,
                                task_id: task.task_id,
                                attempt: task.attempt,
                                result: ok_result(task.task_id),
                            },
                        );
                    } else if live.is_empty() {
                        let w = next_worker;
                        next_worker += 1;
                        live.push(w);
                        apply(&mut st, &mut outstanding, Event::WorkerJoined { worker_id: w, protocol_version: 1 });
                    }
                } else if choice < 7 && live.len() > 1 {
                    // kill a worker (keep at least one alive)
                    let idx = (next() as usize) % live.len();
                    let w = live.swap_remove(idx);
                    outstanding.remove(&w);
                    apply(&mut st, &mut outstanding, Event::WorkerDisconnected { worker_id: w });
                } else if choice < 8 {
                    // random deadline on some in-flight task
                    if let Some((&w, v)) = outstanding.iter().find(|(_, v)| !v.is_empty()) {
                        let task = v[0];
                        apply(&mut st, &mut outstanding, Event::DeadlineElapsed { task_id: task.task_id });
                        // the slow worker still answers later
                        let _ = w;
                    }
                } else {
                    // a new worker joins
                    let w = next_worker;
                    next_worker += 1;
                    live.push(w);
                    apply(&mut st, &mut outstanding, Event::WorkerJoined { worker_id: w, protocol_version: 1 });
                }
            }
            assert!(st.is_complete(), "round {round} stalled after {steps} steps");
            let outcomes = st.into_outcomes();
            assert_eq!(outcomes.len(), n as usize);
            for (i, o) in outcomes.iter().enumerate() {
                assert_eq!(o.entry_index, i as u32);
            }
        }
    }
}
