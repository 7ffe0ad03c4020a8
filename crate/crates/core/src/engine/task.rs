//! Suspendable tasks, pools and the two round-robin schedulers.

use std::future::Future;
use std::ops::AddAssign;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use serde::{Deserialize, Serialize};

use crate::access::TaskCtx;
use crate::error::EngineError;

/// A resumable unit of work with its suspension bookkeeping.
pub struct SuspendableTask<F: Future> {
    fut: Option<Pin<Box<F>>>,
    output: Option<F::Output>,
    suspensions: usize,
    resumes: usize,
    solo_suspensions: usize,
}

impl<F: Future> SuspendableTask<F> {
    pub fn new(fut: F) -> Self {
        SuspendableTask {
            fut: Some(Box::pin(fut)),
            output: None,
            suspensions: 0,
            resumes: 0,
            solo_suspensions: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.output.is_some()
    }

    /// Suspensions so far (one per yield).
    pub fn suspensions(&self) -> usize {
        self.suspensions
    }

    pub fn resumes(&self) -> usize {
        self.resumes
    }

    /// Runs the task until its next suspension point or completion. A no-op
    /// once the task is done.
    fn resume(&mut self, cx: &mut Context<'_>, solo: bool) -> Result<bool, String> {
        let Some(fut) = self.fut.as_mut() else {
            return Ok(true);
        };
        self.resumes += 1;
        match catch_unwind(AssertUnwindSafe(|| fut.as_mut().poll(cx))) {
            Ok(Poll::Ready(out)) => {
                self.output = Some(out);
                self.fut = None;
                Ok(true)
            }
            Ok(Poll::Pending) => {
                self.suspensions += 1;
                if solo {
                    self.solo_suspensions += 1;
                }
                Ok(false)
            }
            Err(payload) => {
                self.fut = None;
                Err(panic_message(payload))
            }
        }
    }

    /// Drops the continuation early, keeping counters and output.
    fn destroy(&mut self) {
        self.fut = None;
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

/// Tasks sharing one [`TaskCtx`], run by one scheduler on one thread.
pub struct TaskPool<F: Future> {
    tasks: Vec<SuspendableTask<F>>,
    ctx: Rc<TaskCtx>,
}

/// Builds `m` tasks with `factory(0) .. factory(m - 1)`; none is resumed.
pub fn build_pool<F, G>(m: usize, ctx: &Rc<TaskCtx>, mut factory: G) -> Result<TaskPool<F>, EngineError>
where
    F: Future,
    G: FnMut(usize) -> F,
{
    if m == 0 {
        return Err(EngineError::InvalidTaskCount);
    }
    Ok(TaskPool {
        tasks: (0..m).map(|i| SuspendableTask::new(factory(i))).collect(),
        ctx: ctx.clone(),
    })
}

impl<F: Future> TaskPool<F> {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[SuspendableTask<F>] {
        &self.tasks
    }

    /// Outputs in task order.
    ///
    /// # Panics
    /// If a task has not finished.
    pub fn into_outputs(self) -> Vec<F::Output> {
        self.tasks
            .into_iter()
            .map(|t| t.output.expect("task finished"))
            .collect()
    }
}

/// Scheduler accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerStats {
    pub tasks: usize,
    pub resumes: usize,
    /// Passes over the pool that resumed at least one task.
    pub rounds: usize,
    pub suspensions: usize,
    /// Suspensions taken while the task was the only unfinished one.
    pub solo_suspensions: usize,
}

impl AddAssign for SchedulerStats {
    fn add_assign(&mut self, o: Self) {
        self.tasks += o.tasks;
        self.resumes += o.resumes;
        self.rounds += o.rounds;
        self.suspensions += o.suspensions;
        self.solo_suspensions += o.solo_suspensions;
    }
}

fn finish<F: Future>(pool: &TaskPool<F>, rounds: usize) -> SchedulerStats {
    let mut s = SchedulerStats {
        tasks: pool.tasks.len(),
        rounds,
        ..SchedulerStats::default()
    };
    for t in &pool.tasks {
        s.resumes += t.resumes;
        s.suspensions += t.suspensions;
        s.solo_suspensions += t.solo_suspensions;
    }
    s
}

/// Round-robin: each pass checks a task for completion before resuming it;
/// a finished task is destroyed when discovered. A task with `k`
/// suspensions is resumed `k + 1` times.
pub fn polling_scheduler<F: Future>(pool: &mut TaskPool<F>) -> Result<SchedulerStats, EngineError> {
    let mut cx = Context::from_waker(Waker::noop());
    pool.ctx.set_trimmed(false);
    let mut remain = pool.tasks.len();
    pool.ctx.set_remain(remain);
    let mut live: Vec<bool> = vec![true; pool.tasks.len()];
    let mut rounds = 0;
    while remain > 0 {
        let mut resumed = false;
        for (i, t) in pool.tasks.iter_mut().enumerate() {
            if !live[i] {
                continue;
            }
            if t.is_done() {
                t.destroy();
                live[i] = false;
                remain -= 1;
                pool.ctx.set_remain(remain);
                continue;
            }
            resumed = true;
            t.resume(&mut cx, remain == 1)
                .map_err(|message| EngineError::TaskPanicked { index: i, message })?;
        }
        rounds += usize::from(resumed);
    }
    Ok(finish(pool, rounds))
}

/// Round-robin that resumes first and checks afterwards; the published
/// unfinished count lets the last task run to completion without yielding.
pub fn trimmed_polling_scheduler<F: Future>(pool: &mut TaskPool<F>) -> Result<SchedulerStats, EngineError> {
    let mut cx = Context::from_waker(Waker::noop());
    pool.ctx.set_trimmed(true);
    let mut remain = pool.tasks.len();
    pool.ctx.set_remain(remain);
    let mut rounds = 0;
    while remain > 0 {
        rounds += 1;
        for (i, t) in pool.tasks.iter_mut().enumerate() {
            if t.is_done() {
                continue;
            }
            let done = t
                .resume(&mut cx, remain == 1)
                .map_err(|message| EngineError::TaskPanicked { index: i, message })?;
            if done {
                t.destroy();
                remain -= 1;
                pool.ctx.set_remain(remain);
            }
        }
    }
    pool.ctx.set_trimmed(false);
    Ok(finish(pool, rounds))
}
