//! Fixed-size worker pool with a coordinator-owned priority queue.
//!
//! The coordinator submits tasks and decides dispatch; workers only execute
//! what they are handed and report completion through a callback. Every
//! submit, dispatch, cancel and completion is recorded in an event log with
//! timestamps relative to the scheduler's creation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Sender};
use thiserror::Error;

use crate::cancel::CancelToken;

/// Lower runs first.
pub type Priority = u8;

pub const PRIORITY_FOCUS: Priority = 0;
pub const PRIORITY_ENV: Priority = 1;
pub const PRIORITY_QUERY: Priority = 2;
pub const PRIORITY_BACKGROUND: Priority = 3;

pub type Job<T> = Box<dyn FnOnce(&CancelToken) -> T + Send + 'static>;

pub struct Task<K, T> {
    pub key: K,
    pub priority: Priority,
    /// Document position used to break priority ties.
    pub order: usize,
    pub cancel: CancelToken,
    pub job: Job<T>,
}

impl<K, T> Task<K, T> {
    pub fn new(key: K, priority: Priority, order: usize, job: impl FnOnce(&CancelToken) -> T + Send + 'static) -> Self {
        Task {
            key,
            priority,
            order,
            cancel: CancelToken::new(),
            job: Box::new(job),
        }
    }
}

/// What a worker reports when a task returns.
#[derive(Debug)]
pub struct Completion<K, T> {
    pub key: K,
    pub worker: usize,
    pub output: T,
    /// The task's token was set by the time it returned.
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("a task with this key is already registered")]
    DuplicateKey,
    #[error("worker count is fixed once the pool has started")]
    PoolAlreadyStarted,
    #[error("worker count must be at least 1")]
    ZeroWorkers,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogKind<K> {
    Submit { key: K, priority: Priority },
    Dispatch {
        key: K,
        worker: usize,
        priority: Priority,
        /// Smallest priority still waiting right after this dispatch.
        waiting_min: Option<Priority>,
    },
    Cancel { key: K, queued: bool },
    Complete { key: K, worker: usize, cancelled: bool },
}

#[derive(Clone, Debug)]
pub struct LogEvent<K> {
    pub at: Duration,
    pub kind: LogKind<K>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Queued,
    Running(usize),
}

struct Registered {
    token: CancelToken,
    slot: Slot,
    priority: Priority,
    order: usize,
    seq: u64,
}

type Notify<K, T> = Arc<dyn Fn(Completion<K, T>) + Send + Sync>;

pub struct Scheduler<K, T> {
    workers: usize,
    pool: Vec<(Sender<(K, CancelToken, Job<T>)>, JoinHandle<()>)>,
    idle: Vec<usize>,
    ready: BinaryHeap<Reverse<(Priority, usize, u64)>>,
    by_seq: HashMap<u64, K>,
    jobs: HashMap<K, Job<T>>,
    registry: HashMap<K, Registered>,
    seq: u64,
    notify: Notify<K, T>,
    epoch: Instant,
    log: Vec<LogEvent<K>>,
}

impl<K, T> Scheduler<K, T>
where
    K: Clone + Eq + Hash + Debug + Send + 'static,
    T: Send + 'static,
{
    /// An unstarted pool of one worker. `notify` is called on the worker
    /// thread for every task that returns.
    pub fn new(notify: impl Fn(Completion<K, T>) + Send + Sync + 'static) -> Self {
        Scheduler {
            workers: 1,
            pool: Vec::new(),
            idle: Vec::new(),
            ready: BinaryHeap::new(),
            by_seq: HashMap::new(),
            jobs: HashMap::new(),
            registry: HashMap::new(),
            seq: 0,
            notify: Arc::new(notify),
            epoch: Instant::now(),
            log: Vec::new(),
        }
    }

    pub fn set_workers(&mut self, n: usize) -> Result<(), SchedulerError> {
        if !self.pool.is_empty() {
            return Err(SchedulerError::PoolAlreadyStarted);
        }
        if n == 0 {
            return Err(SchedulerError::ZeroWorkers);
        }
        self.workers = n;
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn start(&mut self) {
        if !self.pool.is_empty() {
            return;
        }
        for w in 0..self.workers {
            let (tx, rx) = unbounded::<(K, CancelToken, Job<T>)>();
            let notify = self.notify.clone();
            let handle = std::thread::Builder::new()
                .name(format!("proofdoc-worker-{w}"))
                .spawn(move || {
                    for (key, token, job) in rx {
                        let output = job(&token);
                        notify(Completion {
                            key,
                            worker: w,
                            output,
                            cancelled: token.is_cancelled(),
                        });
                    }
                })
                .expect("spawn worker");
            self.pool.push((tx, handle));
        }
        self.idle = (0..self.workers).rev().collect();
    }

    fn record(&mut self, kind: LogKind<K>) {
        self.log.push(LogEvent {
            at: self.epoch.elapsed(),
            kind,
        });
    }

    pub fn now(&self) -> Duration {
        self.epoch.elapsed()
    }

    pub fn submit(&mut self, task: Task<K, T>) -> Result<CancelToken, SchedulerError> {
        if self.registry.contains_key(&task.key) {
            return Err(SchedulerError::DuplicateKey);
        }
        self.start();
        let seq = self.seq;
        self.seq += 1;
        self.record(LogKind::Submit {
            key: task.key.clone(),
            priority: task.priority,
        });
        self.ready.push(Reverse((task.priority, task.order, seq)));
        self.by_seq.insert(seq, task.key.clone());
        self.registry.insert(
            task.key.clone(),
            Registered {
                token: task.cancel.clone(),
                slot: Slot::Queued,
                priority: task.priority,
                order: task.order,
                seq,
            },
        );
        self.jobs.insert(task.key, task.job);
        Ok(task.cancel)
    }

    /// Sets `token`. Queued tasks carrying it are dropped and their keys
    /// returned; running ones observe the flag cooperatively.
    pub fn cancel(&mut self, token: &CancelToken) -> Vec<K> {
        token.cancel();
        let hits: Vec<(K, bool)> = self
            .registry
            .iter()
            .filter(|(_, r)| r.token.same_as(token))
            .map(|(k, r)| (k.clone(), r.slot == Slot::Queued))
            .collect();
        let mut dropped = Vec::new();
        for (key, queued) in hits {
            self.record(LogKind::Cancel {
                key: key.clone(),
                queued,
            });
            if queued {
                let r = self.registry.remove(&key).expect("registered");
                self.by_seq.remove(&r.seq);
                self.jobs.remove(&key);
                dropped.push(key);
            }
        }
        dropped
    }

    /// Hands ready tasks to idle workers, best priority first.
    pub fn dispatch(&mut self) -> Vec<(K, usize)> {
        let mut out = Vec::new();
        while !self.idle.is_empty() {
            let Some(Reverse((priority, _, seq))) = self.ready.pop() else {
                break;
            };
            let Some(key) = self.by_seq.remove(&seq) else {
                continue; // dropped or re-prioritized
            };
            let worker = self.idle.pop().expect("idle worker");
            let job = self.jobs.remove(&key).expect("queued job");
            let reg = self.registry.get_mut(&key).expect("registered");
            reg.slot = Slot::Running(worker);
            let token = reg.token.clone();
            let waiting_min = self.waiting_min();
            self.record(LogKind::Dispatch {
                key: key.clone(),
                worker,
                priority,
                waiting_min,
            });
            self.pool[worker]
                .0
                .send((key.clone(), token, job))
                .expect("worker alive");
            out.push((key, worker));
        }
        out
    }

    fn waiting_min(&self) -> Option<Priority> {
        self.registry
            .values()
            .filter(|r| r.slot == Slot::Queued)
            .map(|r| r.priority)
            .min()
    }

    /// Books a completion reported through the notify callback.
    pub fn complete(&mut self, key: &K, worker: usize, cancelled: bool) {
        if let Some(r) = self.registry.get(key) {
            if r.slot == Slot::Running(worker) {
                self.registry.remove(key);
            }
        }
        self.idle.push(worker);
        self.record(LogKind::Complete {
            key: key.clone(),
            worker,
            cancelled,
        });
    }

    /// Recomputes priorities of queued tasks. Running tasks keep theirs.
    pub fn reprioritize(&mut self, mut priority_of: impl FnMut(&K) -> Priority) {
        let mut changed = false;
        for (key, r) in self.registry.iter_mut() {
            if r.slot != Slot::Queued {
                continue;
            }
            let p = priority_of(key);
            if p != r.priority {
                r.priority = p;
                changed = true;
            }
        }
        if changed {
            self.ready.clear();
            self.by_seq.clear();
            for (key, r) in self.registry.iter_mut() {
                if r.slot == Slot::Queued {
                    r.seq = self.seq;
                    self.seq += 1;
                    self.ready.push(Reverse((r.priority, r.order, r.seq)));
                    self.by_seq.insert(r.seq, key.clone());
                }
            }
        }
    }

    pub fn is_registered(&self, key: &K) -> bool {
        self.registry.contains_key(key)
    }

    /// Registered and not yet cancelled.
    pub fn is_live(&self, key: &K) -> bool {
        self.registry.get(key).is_some_and(|r| !r.token.is_cancelled())
    }

    pub fn is_running(&self, key: &K) -> bool {
        self.registry
            .get(key)
            .is_some_and(|r| matches!(r.slot, Slot::Running(_)))
    }

    pub fn registered(&self) -> impl Iterator<Item = (&K, &CancelToken)> {
        self.registry.iter().map(|(k, r)| (k, &r.token))
    }

    pub fn is_idle(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn log(&self) -> &[LogEvent<K>] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<LogEvent<K>> {
        std::mem::take(&mut self.log)
    }
}

impl<K, T> Drop for Scheduler<K, T> {
    fn drop(&mut self) {
        for t in self.registry.values() {
            t.token.cancel();
        }
        // closing the channels ends the worker loops
        let handles: Vec<_> = self.pool.drain(..).map(|(_, h)| h).collect();
        for h in handles {
            let _ = h.join();
        }
    }
}
