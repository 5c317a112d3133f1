//! Serial, island-model and hybrid master-slave execution of NCNES.
//!
//! * **serial**: one thread does everything.
//! * **island**: one worker thread owns each search process. After
//!   evaluating its samples a worker needs its peers' distributions for the
//!   diversity gradient. With [`Exchange::Blocking`] all workers meet at a
//!   barrier and use the snapshots from the start of the current generation,
//!   which makes the run bit-identical to serial. With
//!   [`Exchange::Nonblocking`] nobody waits: a worker reads each peer's
//!   snapshot from the previous generation, or the newest one the peer has
//!   published if it is lagging further behind.
//! * **hybrid**: the island layout, with every process fanning its sample
//!   evaluations out to a shared evaluation pool of `workers` threads.
//!
//! All random draws are keyed by [`crate::stream::StreamId`], so the way work
//! is spread over threads never changes what is computed.

use std::any::Any;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gaussian::SearchDistribution;
use crate::gradient::{diversity_grad, GradientPair};
use crate::objective::Objective;
use crate::optimizer::{EvalDelay, LocalStep, Ncnes, ProcessOutcome, RunContext, RunReport, Tracker};

use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Serial,
    Island,
    Hybrid,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Serial => "serial",
            Mode::Island => "island",
            Mode::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "serial" => Ok(Mode::Serial),
            "island" => Ok(Mode::Island),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(format!("expected `serial`, `island` or `hybrid`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exchange {
    #[default]
    Blocking,
    Nonblocking,
}

impl fmt::Display for Exchange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exchange::Blocking => "blocking",
            Exchange::Nonblocking => "nonblocking",
        })
    }
}

impl FromStr for Exchange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "blocking" => Ok(Exchange::Blocking),
            "nonblocking" => Ok(Exchange::Nonblocking),
            other => Err(format!("expected `blocking` or `nonblocking`, got `{other}`")),
        }
    }
}

/// How to execute a run.
///
/// `workers` is the number of computing units: 1 for serial, λ for island,
/// and the evaluation pool size for hybrid (λ·μ mirrors one core per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct ExecPlan {
    pub mode: Mode,
    pub workers: usize,
    pub exchange: Exchange,
    /// Artificial delay added to every single evaluation, in milliseconds.
    pub slow_eval_ms: Option<f64>,
    /// Per-process multiplier on `slow_eval_ms` (missing entries count as 1).
    pub process_delay_scale: Vec<f64>,
}

impl ExecPlan {
    pub fn serial() -> Self {
        Self { mode: Mode::Serial, workers: 1, exchange: Exchange::Blocking, slow_eval_ms: None, process_delay_scale: Vec::new() }
    }

    pub fn island(lambda: usize) -> Self {
        Self { mode: Mode::Island, workers: lambda, ..Self::serial() }
    }

    pub fn hybrid(lambda: usize, mu: usize) -> Self {
        Self { mode: Mode::Hybrid, workers: lambda * mu, ..Self::serial() }
    }

    /// Default worker count for `mode`.
    pub fn for_mode(mode: Mode, cfg: &RunConfig) -> Self {
        match mode {
            Mode::Serial => Self::serial(),
            Mode::Island => Self::island(cfg.lambda),
            Mode::Hybrid => Self::hybrid(cfg.lambda, cfg.mu),
        }
    }

    pub fn exchange(mut self, exchange: Exchange) -> Self {
        self.exchange = exchange;
        self
    }

    pub fn slow_eval_ms(mut self, ms: f64) -> Self {
        self.slow_eval_ms = Some(ms);
        self
    }

    pub fn violations(&self, cfg: &RunConfig) -> Vec<String> {
        let mut v = Vec::new();
        match self.mode {
            Mode::Serial if self.workers != 1 => v.push(format!("serial mode uses 1 worker, got {}", self.workers)),
            Mode::Island if self.workers != cfg.lambda => {
                v.push(format!("island mode needs workers == lambda ({}), got {}", cfg.lambda, self.workers))
            }
            Mode::Hybrid if self.workers == 0 => v.push("hybrid mode needs an evaluation pool of at least 1".into()),
            _ => {}
        }
        if let Some(ms) = self.slow_eval_ms {
            if !(ms.is_finite() && ms >= 0.0) {
                v.push(format!("slow_eval_ms must be finite and >= 0, got {ms}"));
            }
        }
        if self.process_delay_scale.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            v.push("process delay scales must be finite and >= 0".into());
        }
        v
    }

    fn delay(&self) -> Option<EvalDelay> {
        self.slow_eval_ms.map(|ms| EvalDelay {
            per_eval: Duration::from_secs_f64(ms / 1000.0),
            process_scale: self.process_delay_scale.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub wall_clock_per_mode: Vec<(Mode, f64)>,
    /// Computing units `m` of the measured (non-serial) mode.
    pub units: usize,
    /// Filled in by [`measure_speedup`].
    pub speedup_ratio: Option<f64>,
    /// Wall-clock seconds of every generation, per worker (one worker in serial mode).
    pub iteration_seconds: Vec<Vec<f64>>,
    /// Total seconds each worker spent waiting for peers.
    pub wait_seconds: Vec<f64>,
}

impl TimingReport {
    pub fn wall_clock(&self, mode: Mode) -> Option<f64> {
        self.wall_clock_per_mode.iter().find(|(m, _)| *m == mode).map(|(_, s)| *s)
    }

    /// Mean generation time over all workers and generations.
    pub fn mean_iteration_seconds(&self) -> f64 {
        let all: Vec<f64> = self.iteration_seconds.iter().flatten().copied().collect();
        if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 }
    }
}

/// `runtime_serial / (runtime_parallel * m)`; 1.0 is linear speedup.
pub fn speedup_ratio(runtime_serial: f64, runtime_parallel: f64, m: usize) -> f64 {
    runtime_serial / (runtime_parallel * m as f64)
}

/// Runs NCNES under `plan`.
pub fn execute(cfg: RunConfig, plan: &ExecPlan, objective: Arc<dyn Objective>) -> Result<(RunReport, TimingReport)> {
    let mut v = cfg.violations();
    v.extend(plan.violations(&cfg));
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    match plan.mode {
        Mode::Serial => execute_serial(cfg, plan, objective),
        Mode::Island | Mode::Hybrid => execute_islands(cfg, plan, objective),
    }
}

/// Runs `plan` and a serial twin with the same delays, and reports the speedup ratio.
pub fn measure_speedup(
    cfg: RunConfig,
    plan: &ExecPlan,
    objective: Arc<dyn Objective>,
) -> Result<(RunReport, TimingReport)> {
    let serial_plan = ExecPlan { mode: Mode::Serial, workers: 1, ..plan.clone() };
    let (_, serial) = execute(cfg.clone(), &serial_plan, objective.clone())?;
    let (report, mut timing) = execute(cfg, plan, objective)?;
    let serial_wall = serial.wall_clock_per_mode[0].1;
    let parallel_wall = timing.wall_clock_per_mode[0].1;
    timing.speedup_ratio = Some(speedup_ratio(serial_wall, parallel_wall, timing.units));
    timing.wall_clock_per_mode.insert(0, (Mode::Serial, serial_wall));
    Ok((report, timing))
}

fn execute_serial(cfg: RunConfig, plan: &ExecPlan, objective: Arc<dyn Objective>) -> Result<(RunReport, TimingReport)> {
    let start = Instant::now();
    let mut state = Ncnes::with_delay(cfg, objective, plan.delay())?;
    let mut times = Vec::new();
    let mut failure = None;
    loop {
        let t = Instant::now();
        match state.iterate() {
            Ok(true) => times.push(t.elapsed().as_secs_f64()),
            Ok(false) => break,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let mut report = state.report();
    report.wall_clock = wall;
    report.failure = failure;
    let timing = TimingReport {
        wall_clock_per_mode: vec![(Mode::Serial, wall)],
        units: 1,
        speedup_ratio: None,
        iteration_seconds: vec![times],
        wait_seconds: vec![0.0],
    };
    Ok((report, timing))
}

/// Per-process shared state. Each slot has exactly one writer (its worker).
struct Slot {
    /// Distribution at the start of every generation so far (append-only).
    history: Mutex<Vec<SearchDistribution>>,
    outcomes: Mutex<Vec<ProcessOutcome>>,
    /// First-generation fitness gradient, for auto-phi.
    first_fit: Mutex<Option<GradientPair>>,
}

struct WorkerLog {
    iteration_seconds: Vec<f64>,
    wait_seconds: f64,
    error: Option<Error>,
}

struct Shared<'a> {
    ctx: &'a RunContext,
    slots: Vec<Slot>,
    barrier: Barrier,
    /// Earliest generation whose barrier sees a failure (`u64::MAX`: none).
    /// Keyed by generation so that all workers leaving a barrier agree on
    /// whether to stop, even if a faster peer has failed one generation later.
    abort_at: AtomicU64,
    exchange: Exchange,
    pool: Option<rayon::ThreadPool>,
    plan: Vec<u64>,
    resolved_phi: Mutex<Option<f64>>,
}

impl Shared<'_> {
    fn latest(&self, j: usize) -> SearchDistribution {
        self.slots[j].history.lock().expect("history lock poisoned").last().cloned().expect("history never empty")
    }

    fn at(&self, j: usize, g: usize) -> SearchDistribution {
        self.slots[j].history.lock().expect("history lock poisoned")[g].clone()
    }

    /// Peer view for process `i` at generation `g`.
    fn snapshot(&self, i: usize, g: usize) -> Vec<SearchDistribution> {
        (0..self.slots.len())
            .map(|j| {
                if j == i || self.exchange == Exchange::Blocking {
                    return self.at(j, g);
                }
                let history = self.slots[j].history.lock().expect("history lock poisoned");
                history[g.saturating_sub(1).min(history.len() - 1)].clone()
            })
            .collect()
    }

    fn evaluate_batch(&self, i: usize, g: u64, solutions: &[Vec<f64>]) -> Result<Vec<f64>> {
        let ctx = self.ctx;
        match &self.pool {
            Some(pool) => pool.install(|| {
                solutions.par_iter().enumerate().map(|(k, x)| ctx.evaluate(i, g, k, x)).collect()
            }),
            None => solutions.iter().enumerate().map(|(k, x)| ctx.evaluate(i, g, k, x)).collect(),
        }
    }

    /// Local work of one generation. A panicking objective becomes an error
    /// so that peers blocked on the barrier are released.
    fn local(&self, i: usize, g: u64) -> Result<LocalStep> {
        let run = || {
            let dist = self.latest(i);
            let solutions = self.ctx.sample(i, g, &dist);
            let fitnesses = self.evaluate_batch(i, g, &solutions)?;
            self.ctx.local_step(i, &dist, solutions, fitnesses)
        };
        panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(Error::Evaluation(format!("iteration {}: {}", g + 1, panic_message(p.as_ref()))))
        })
    }

    fn raise(&self, g: usize) {
        self.abort_at.fetch_min(g as u64, Ordering::SeqCst);
    }

    fn aborted(&self) -> bool {
        self.abort_at.load(Ordering::SeqCst) != u64::MAX
    }

    fn aborted_by(&self, g: usize) -> bool {
        self.abort_at.load(Ordering::SeqCst) <= g as u64
    }

    fn wait(&self, log: &mut WorkerLog) {
        let t = Instant::now();
        self.barrier.wait();
        log.wait_seconds += t.elapsed().as_secs_f64();
    }

    fn resolve_phi(&self) -> Result<f64> {
        let fits = self
            .slots
            .iter()
            .map(|s| s.first_fit.lock().expect("fit lock poisoned").clone())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Evaluation("missing first-generation gradient".into()))?;
        let initial: Vec<SearchDistribution> = (0..self.slots.len()).map(|j| self.at(j, 0)).collect();
        self.ctx.resolve_phi(&fits, &initial)
    }

    fn worker(&self, i: usize) -> WorkerLog {
        let mut log = WorkerLog { iteration_seconds: Vec::new(), wait_seconds: 0.0, error: None };
        let mut phi = self.ctx.cfg.phi;
        for (g, &t_cur) in self.plan.iter().enumerate() {
            let started = Instant::now();
            let blocking = self.exchange == Exchange::Blocking;
            let sync_phi = g == 0 && self.ctx.cfg.auto_phi;
            if !blocking && !sync_phi && self.aborted() {
                break;
            }

            let local = if log.error.is_none() && !self.aborted() {
                match self.local(i, g as u64) {
                    Ok(l) => Some(l),
                    Err(e) => {
                        log.error = Some(e);
                        self.raise(g);
                        None
                    }
                }
            } else {
                None
            };
            if sync_phi {
                if let Some(l) = &local {
                    *self.slots[i].first_fit.lock().expect("fit lock poisoned") = Some(l.fit.clone());
                }
            }
            if blocking || sync_phi {
                self.wait(&mut log);
            }
            let stop = if blocking || sync_phi { self.aborted_by(g) } else { self.aborted() };
            if stop {
                break;
            }
            let Some(local) = local else { break };
            if sync_phi {
                match self.resolve_phi() {
                    Ok(p) => {
                        phi = p;
                        *self.resolved_phi.lock().expect("phi lock poisoned") = Some(p);
                    }
                    Err(e) => {
                        log.error = Some(e);
                        self.raise(g + 1);
                        break;
                    }
                }
            }

            let snapshot = self.snapshot(i, g);
            let next = diversity_grad(i, &snapshot)
                .and_then(|div| self.ctx.apply(&snapshot[i], &local, &div, self.ctx.step_sizes(t_cur), phi));
            match next {
                Ok(next) => {
                    self.slots[i].outcomes.lock().expect("outcome lock poisoned").push(local.outcome);
                    self.slots[i].history.lock().expect("history lock poisoned").push(next);
                }
                Err(e) => {
                    log.error = Some(e);
                    self.raise(g + 1);
                    if !blocking {
                        break;
                    }
                }
            }
            log.iteration_seconds.push(started.elapsed().as_secs_f64());
        }
        log
    }
}

fn panic_message(p: &(dyn Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".to_string())
}

fn execute_islands(cfg: RunConfig, plan: &ExecPlan, objective: Arc<dyn Objective>) -> Result<(RunReport, TimingReport)> {
    let start = Instant::now();
    let ctx = RunContext::new(cfg, objective, plan.delay())?;
    let lambda = ctx.cfg.lambda;
    let initial = ctx.initial_distributions()?;
    let pool = match plan.mode {
        Mode::Hybrid => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(plan.workers)
                .build()
                .map_err(|e| Error::Worker { process: 0, reason: format!("cannot build evaluation pool: {e}") })?,
        ),
        _ => None,
    };
    let shared = Shared {
        ctx: &ctx,
        slots: initial
            .into_iter()
            .map(|d| Slot { history: Mutex::new(vec![d]), outcomes: Mutex::new(Vec::new()), first_fit: Mutex::new(None) })
            .collect(),
        barrier: Barrier::new(lambda),
        abort_at: AtomicU64::new(u64::MAX),
        exchange: plan.exchange,
        pool,
        plan: ctx.budget_plan(),
        resolved_phi: Mutex::new(None),
    };

    let logs: Vec<std::result::Result<WorkerLog, String>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..lambda).map(|i| {
            let shared = &shared;
            scope.spawn(move || shared.worker(i))
        }).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().map_err(|p| panic_message(p.as_ref()))
            })
            .collect()
    });
    let wall = start.elapsed().as_secs_f64();

    let mut failure = None;
    let mut iteration_seconds = Vec::with_capacity(lambda);
    let mut wait_seconds = Vec::with_capacity(lambda);
    for (i, log) in logs.into_iter().enumerate() {
        match log {
            Ok(log) => {
                if failure.is_none() {
                    failure = log.error.map(|e| Error::Worker { process: i + 1, reason: e.to_string() }.to_string());
                }
                iteration_seconds.push(log.iteration_seconds);
                wait_seconds.push(log.wait_seconds);
            }
            Err(reason) => {
                if failure.is_none() {
                    failure = Some(Error::Worker { process: i + 1, reason }.to_string());
                }
                iteration_seconds.push(Vec::new());
                wait_seconds.push(0.0);
            }
        }
    }

    let phi = shared.resolved_phi.into_inner().unwrap_or_else(|e| e.into_inner()).unwrap_or(ctx.cfg.phi);
    let slots: Vec<(Vec<SearchDistribution>, Vec<ProcessOutcome>)> = shared
        .slots
        .into_iter()
        .map(|s| {
            (
                s.history.into_inner().unwrap_or_else(|e| e.into_inner()),
                s.outcomes.into_inner().unwrap_or_else(|e| e.into_inner()),
            )
        })
        .collect();
    let done = slots.iter().map(|(_, o)| o.len()).min().unwrap_or(0);
    let mut tracker = Tracker::new(ctx.cfg.sense);
    for g in 0..done {
        let outcomes: Vec<ProcessOutcome> = slots.iter().map(|(_, o)| o[g].clone()).collect();
        let after: Vec<SearchDistribution> = slots.iter().map(|(h, _)| h[g + 1].clone()).collect();
        tracker.record(ctx.iteration_cost(g as u64), &outcomes, &after)?;
    }
    let finals = slots.iter().map(|(h, _)| h[done].clone()).collect();
    let report = tracker.into_report(lambda, finals, phi, wall, failure);
    let timing = TimingReport {
        wall_clock_per_mode: vec![(plan.mode, wall)],
        units: plan.workers,
        speedup_ratio: None,
        iteration_seconds,
        wait_seconds,
    };
    Ok((report, timing))
}
