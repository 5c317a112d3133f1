//! The NCNES outer loop: λ diagonal-Gaussian search processes, each taking a
//! natural-gradient step on its expected fitness plus `phi` times its
//! Bhattacharyya diversity from the others.
//!
//! Every process in generation `g` reads the same snapshot of all λ
//! distributions taken at the start of `g`, so the per-process work is
//! independent and the engines in [`crate::parallel`] can spread it over
//! threads without changing a single bit of the result.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::config::{RunConfig, UpdateRule};
use crate::error::{Error, Result};
use crate::gaussian::{mean_pairwise_distance, SampleBatch, SearchDistribution};
use crate::gradient::{
    balance_phi, diversity_grad, fisher, fitness_grad, natural_step, plain_step, schedule, shape_utilities,
    FisherDiagonals, GradientPair, Sense,
};
use crate::objective::{noisy_evaluate, Objective};
use crate::stream::{Purpose, StreamId};

/// One row of a run's per-iteration curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    /// 1-based generation number.
    pub iteration: u64,
    /// Evaluations consumed up to and including this generation.
    pub evals: u64,
    pub best_fitness: f64,
    /// Mean Bhattacharyya distance over all process pairs after the update.
    pub mean_pairwise_db: f64,
    pub process_mean_fitness: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub sense: Sense,
    pub lambda: usize,
    /// Empty when no generation ran.
    pub best_solution: Vec<f64>,
    pub best_fitness: f64,
    pub evals: u64,
    pub curve: Vec<CurveRecord>,
    pub final_distributions: Vec<SearchDistribution>,
    /// Trade-off weight actually used (differs from the config under auto-phi).
    pub phi: f64,
    pub wall_clock: f64,
    /// Set when the run was aborted; the rest of the report is partial.
    pub failure: Option<String>,
}

impl RunReport {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }

    /// Equality of everything except wall-clock time, comparing floats by bit pattern.
    pub fn bitwise_eq(&self, other: &RunReport) -> bool {
        fn bits(xs: &[f64]) -> Vec<u64> {
            xs.iter().map(|x| x.to_bits()).collect()
        }
        let curve_eq = self.curve.len() == other.curve.len()
            && self.curve.iter().zip(&other.curve).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.evals == b.evals
                    && a.best_fitness.to_bits() == b.best_fitness.to_bits()
                    && a.mean_pairwise_db.to_bits() == b.mean_pairwise_db.to_bits()
                    && bits(&a.process_mean_fitness) == bits(&b.process_mean_fitness)
            });
        let dists_eq = self.final_distributions.len() == other.final_distributions.len()
            && self.final_distributions.iter().zip(&other.final_distributions).all(|(a, b)| {
                bits(a.mean()) == bits(b.mean()) && bits(a.variance()) == bits(b.variance())
            });
        self.sense == other.sense
            && self.lambda == other.lambda
            && bits(&self.best_solution) == bits(&other.best_solution)
            && self.best_fitness.to_bits() == other.best_fitness.to_bits()
            && self.evals == other.evals
            && self.phi.to_bits() == other.phi.to_bits()
            && self.failure == other.failure
            && curve_eq
            && dists_eq
    }
}

/// Artificial per-evaluation delay, used to make parallel speedups
/// measurable on cheap objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDelay {
    pub per_eval: Duration,
    /// Multiplier per process; missing entries count as 1.
    pub process_scale: Vec<f64>,
}

impl EvalDelay {
    fn wait(&self, process: usize, reevals: u32) {
        let scale = self.process_scale.get(process).copied().unwrap_or(1.0);
        let d = self.per_eval.mul_f64(scale * f64::from(reevals));
        if !d.is_zero() {
            thread::sleep(d);
        }
    }
}

/// What one process contributes to the shared bookkeeping of a generation.
#[derive(Debug, Clone)]
pub(crate) struct ProcessOutcome {
    pub mean_fitness: f64,
    /// First best sample of the batch, as (fitness, solution).
    pub batch_best: (f64, Vec<f64>),
}

/// Locally computable part of a process's update.
pub(crate) struct LocalStep {
    pub fit: GradientPair,
    pub fisher: FisherDiagonals,
    pub outcome: ProcessOutcome,
}

/// Immutable run parameters shared by every engine and worker.
pub(crate) struct RunContext {
    pub cfg: RunConfig,
    pub objective: Arc<dyn Objective>,
    pub delay: Option<EvalDelay>,
}

impl RunContext {
    pub fn new(cfg: RunConfig, objective: Arc<dyn Objective>, delay: Option<EvalDelay>) -> Result<Self> {
        cfg.validate()?;
        if cfg.dim() != objective.spec().dimension {
            return Err(Error::InvalidConfig(vec![format!(
                "init box has {} dimensions but objective `{}` has {}",
                cfg.dim(),
                objective.spec().id,
                objective.spec().dimension
            )]));
        }
        Ok(Self { cfg, objective, delay })
    }

    fn stream(&self, purpose: Purpose) -> StreamId {
        StreamId::new(self.cfg.seed, purpose)
    }

    pub fn initial_distributions(&self) -> Result<Vec<SearchDistribution>> {
        let b = &self.cfg.init_box;
        (0..self.cfg.lambda)
            .map(|i| {
                let mut rng = self.stream(Purpose::Init).process(i).rng();
                let mean = b.lower.iter().zip(&b.upper).map(|(&lo, &hi)| rng.random_range(lo..hi)).collect();
                let variance = b.lower.iter().zip(&b.upper).map(|(lo, hi)| ((hi - lo) / 4.0).powi(2)).collect();
                SearchDistribution::new(mean, variance)
            })
            .collect()
    }

    pub fn reevals(&self, process: usize, iteration: u64, sample: usize) -> u32 {
        self.cfg
            .reevals
            .draw(self.stream(Purpose::Reevals).process(process).iteration(iteration).sample(sample))
    }

    pub fn process_cost(&self, process: usize, iteration: u64) -> u64 {
        (0..self.cfg.mu).map(|k| u64::from(self.reevals(process, iteration, k))).sum()
    }

    pub fn iteration_cost(&self, iteration: u64) -> u64 {
        (0..self.cfg.lambda).map(|i| self.process_cost(i, iteration)).sum()
    }

    /// Number of generations that fit in the budget and the evaluations
    /// consumed before each of them.
    pub fn budget_plan(&self) -> Vec<u64> {
        let mut starts = Vec::new();
        let mut t = 0u64;
        let mut g = 0u64;
        loop {
            let cost = self.iteration_cost(g);
            if t + cost > self.cfg.budget_evals {
                break;
            }
            starts.push(t);
            t += cost;
            g += 1;
        }
        starts
    }

    pub fn step_sizes(&self, t_cur: u64) -> (f64, f64) {
        let t_max = self.cfg.budget_evals;
        (schedule(self.cfg.eta_m_init, t_cur, t_max), schedule(self.cfg.eta_v_init, t_cur, t_max))
    }

    pub fn sample(&self, process: usize, iteration: u64, dist: &SearchDistribution) -> Vec<Vec<f64>> {
        dist.sample(self.cfg.mu, self.stream(Purpose::Sample).process(process).iteration(iteration))
    }

    /// Averaged (re-)evaluation of one sample; pure given its coordinates.
    pub fn evaluate(&self, process: usize, iteration: u64, sample: usize, x: &[f64]) -> Result<f64> {
        let reevals = self.reevals(process, iteration, sample);
        if let Some(delay) = &self.delay {
            delay.wait(process, reevals);
        }
        let stream = self.stream(Purpose::Noise).process(process).iteration(iteration).sample(sample);
        noisy_evaluate(self.objective.as_ref(), x, reevals, stream).map_err(|e| {
            Error::Evaluation(format!("process {}, iteration {}, sample {}: {e}", process + 1, iteration + 1, sample))
        })
    }

    pub fn local_step(
        &self,
        process: usize,
        dist: &SearchDistribution,
        solutions: Vec<Vec<f64>>,
        fitnesses: Vec<f64>,
    ) -> Result<LocalStep> {
        let sense = self.cfg.sense;
        let mut best = 0;
        for k in 1..fitnesses.len() {
            if sense.better(fitnesses[k], fitnesses[best]) {
                best = k;
            }
        }
        let mean_fitness = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        let batch_best = (fitnesses[best], solutions[best].clone());
        let batch = SampleBatch::new(process, solutions, fitnesses)?;
        let utilities = shape_utilities(&batch.fitnesses, sense);
        let fit = fitness_grad(dist, &batch, &utilities)?;
        let fisher = fisher(dist, &batch)?;
        Ok(LocalStep { fit, fisher, outcome: ProcessOutcome { mean_fitness, batch_best } })
    }

    pub fn apply(
        &self,
        dist: &SearchDistribution,
        local: &LocalStep,
        div: &GradientPair,
        (eta_m, eta_v): (f64, f64),
        phi: f64,
    ) -> Result<SearchDistribution> {
        match self.cfg.update_rule {
            UpdateRule::Natural => natural_step(dist, &local.fit, div, &local.fisher, eta_m, eta_v, phi),
            UpdateRule::Plain => plain_step(dist, &local.fit, div, eta_m, phi),
        }
    }

    /// Diversity-aware trade-off weight to use from the first generation on.
    pub fn resolve_phi(&self, fits: &[GradientPair], snapshot: &[SearchDistribution]) -> Result<f64> {
        if !self.cfg.auto_phi {
            return Ok(self.cfg.phi);
        }
        let divs = (0..snapshot.len()).map(|i| diversity_grad(i, snapshot)).collect::<Result<Vec<_>>>()?;
        Ok(balance_phi(fits, &divs).unwrap_or(self.cfg.phi))
    }
}

/// Best-so-far tracking and curve assembly, shared by all engines.
#[derive(Debug, Clone)]
pub(crate) struct Tracker {
    pub sense: Sense,
    pub best_solution: Vec<f64>,
    pub best_fitness: f64,
    pub evals: u64,
    pub curve: Vec<CurveRecord>,
}

impl Tracker {
    pub fn new(sense: Sense) -> Self {
        Self { sense, best_solution: Vec::new(), best_fitness: sense.worst(), evals: 0, curve: Vec::new() }
    }

    /// Folds a finished generation in; outcomes must be in process order.
    pub fn record(
        &mut self,
        cost: u64,
        outcomes: &[ProcessOutcome],
        dists_after: &[SearchDistribution],
    ) -> Result<()> {
        for o in outcomes {
            let (f, ref x) = o.batch_best;
            if self.best_solution.is_empty() || self.sense.better(f, self.best_fitness) {
                self.best_fitness = f;
                self.best_solution = x.clone();
            }
        }
        self.evals += cost;
        self.curve.push(CurveRecord {
            iteration: self.curve.len() as u64 + 1,
            evals: self.evals,
            best_fitness: self.best_fitness,
            mean_pairwise_db: mean_pairwise_distance(dists_after)?,
            process_mean_fitness: outcomes.iter().map(|o| o.mean_fitness).collect(),
        });
        Ok(())
    }

    pub fn into_report(
        self,
        lambda: usize,
        final_distributions: Vec<SearchDistribution>,
        phi: f64,
        wall_clock: f64,
        failure: Option<String>,
    ) -> RunReport {
        RunReport {
            sense: self.sense,
            lambda,
            best_solution: self.best_solution,
            best_fitness: self.best_fitness,
            evals: self.evals,
            curve: self.curve,
            final_distributions,
            phi,
            wall_clock,
            failure,
        }
    }
}

/// Single-threaded optimizer state, advanced one generation at a time.
pub struct Ncnes {
    ctx: RunContext,
    dists: Vec<SearchDistribution>,
    iteration: u64,
    phi: f64,
    tracker: Tracker,
    started: Instant,
}

impl Ncnes {
    pub fn new(cfg: RunConfig, objective: Arc<dyn Objective>) -> Result<Self> {
        Self::with_delay(cfg, objective, None)
    }

    pub(crate) fn with_delay(cfg: RunConfig, objective: Arc<dyn Objective>, delay: Option<EvalDelay>) -> Result<Self> {
        let ctx = RunContext::new(cfg, objective, delay)?;
        let dists = ctx.initial_distributions()?;
        let phi = ctx.cfg.phi;
        let tracker = Tracker::new(ctx.cfg.sense);
        Ok(Self { ctx, dists, iteration: 0, phi, tracker, started: Instant::now() })
    }

    pub fn config(&self) -> &RunConfig {
        &self.ctx.cfg
    }

    pub fn distributions(&self) -> &[SearchDistribution] {
        &self.dists
    }

    /// Replaces one process's distribution, e.g. to perturb a run in tests.
    pub fn set_distribution(&mut self, process: usize, dist: SearchDistribution) -> Result<()> {
        if dist.dim() != self.ctx.cfg.dim() {
            return Err(Error::DimensionMismatch { expected: self.ctx.cfg.dim(), actual: dist.dim() });
        }
        let slot = self.dists.get_mut(process).ok_or_else(|| {
            Error::InvalidDistribution(format!("process index {process} out of range"))
        })?;
        *slot = dist;
        Ok(())
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn evals(&self) -> u64 {
        self.tracker.evals
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// True if another full generation fits in the remaining budget.
    pub fn has_budget(&self) -> bool {
        self.tracker.evals + self.ctx.iteration_cost(self.iteration) <= self.ctx.cfg.budget_evals
    }

    /// Runs one generation. Returns `Ok(false)` without doing anything when
    /// the budget cannot cover another generation.
    pub fn iterate(&mut self) -> Result<bool> {
        if !self.has_budget() {
            return Ok(false);
        }
        let g = self.iteration;
        let cost = self.ctx.iteration_cost(g);
        let etas = self.ctx.step_sizes(self.tracker.evals);

        let mut locals = Vec::with_capacity(self.dists.len());
        for (i, dist) in self.dists.iter().enumerate() {
            let solutions = self.ctx.sample(i, g, dist);
            let fitnesses = solutions
                .iter()
                .enumerate()
                .map(|(k, x)| self.ctx.evaluate(i, g, k, x))
                .collect::<Result<Vec<_>>>()?;
            locals.push(self.ctx.local_step(i, dist, solutions, fitnesses)?);
        }

        if g == 0 {
            let fits: Vec<GradientPair> = locals.iter().map(|l| l.fit.clone()).collect();
            self.phi = self.ctx.resolve_phi(&fits, &self.dists)?;
        }

        let snapshot = &self.dists;
        let next = locals
            .iter()
            .enumerate()
            .map(|(i, local)| {
                let div = diversity_grad(i, snapshot)?;
                self.ctx.apply(&snapshot[i], local, &div, etas, self.phi)
            })
            .collect::<Result<Vec<_>>>()?;

        let outcomes: Vec<ProcessOutcome> = locals.into_iter().map(|l| l.outcome).collect();
        self.tracker.record(cost, &outcomes, &next)?;
        self.dists = next;
        self.iteration += 1;
        Ok(true)
    }

    pub fn report(&self) -> RunReport {
        self.tracker.clone().into_report(
            self.ctx.cfg.lambda,
            self.dists.clone(),
            self.phi,
            self.started.elapsed().as_secs_f64(),
            None,
        )
    }

    /// Iterates until the budget is spent. A failing generation aborts the
    /// run and yields the partial report with `failure` set.
    pub fn run_to_end(mut self) -> RunReport {
        loop {
            match self.iterate() {
                Ok(true) => {}
                Ok(false) => return self.report(),
                Err(e) => {
                    let mut report = self.report();
                    report.failure = Some(e.to_string());
                    return report;
                }
            }
        }
    }
}

/// Runs NCNES to budget exhaustion on a single thread.
pub fn run(cfg: RunConfig, objective: Arc<dyn Objective>) -> Result<RunReport> {
    Ok(Ncnes::new(cfg, objective)?.run_to_end())
}
