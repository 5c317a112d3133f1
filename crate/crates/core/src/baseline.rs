//! NCS-C (simplified): the heuristic negatively correlated search baseline.
//!
//! Each process keeps one parent solution and an isotropic mutation scale
//! `sigma`; its distribution is `N(parent, sigma² I)`. Every iteration each
//! process draws one offspring, and a sequential sweep decides survival by
//! comparing `f + phi * d̄` between parent and offspring, where `d̄` is the
//! smallest Bhattacharyya distance to any other process's current parent
//! distribution. Because later processes see the survivors chosen earlier in
//! the sweep, the sweep order matters and cannot be parallelized.
//!
//! Sigma follows a 1/5-success rule: every `epoch` iterations a process that
//! replaced its parent in more than a fifth of them multiplies sigma by
//! `factor`, one that succeeded less often divides by it.

use std::sync::Arc;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};

use crate::config::RunConfig;
use crate::error::Result;
use crate::gaussian::{bhattacharyya_unchecked, SearchDistribution};
use crate::gradient::Sense;
use crate::objective::Objective;
use crate::optimizer::{ProcessOutcome, RunContext, RunReport, Tracker};
use crate::stream::{Purpose, StreamId};

#[derive(Debug, Clone, PartialEq)]
pub struct NcsProcess {
    pub parent: Vec<f64>,
    pub parent_fitness: f64,
    pub sigma: f64,
}

impl NcsProcess {
    pub fn distribution(&self) -> Result<SearchDistribution> {
        SearchDistribution::isotropic(self.parent.clone(), self.sigma * self.sigma)
    }
}

fn min_distance(own: &SearchDistribution, peers: &[&NcsProcess]) -> Result<f64> {
    let mut best = f64::INFINITY;
    for p in peers {
        let other = p.distribution()?;
        if other.dim() != own.dim() {
            return Err(crate::error::Error::DimensionMismatch { expected: own.dim(), actual: other.dim() });
        }
        best = best.min(bhattacharyya_unchecked(own, &other));
    }
    Ok(best)
}

/// Distance from process `i` to its nearest peer; `+inf` when it has none.
pub fn decentralized_diversity(i: usize, procs: &[NcsProcess]) -> Result<f64> {
    let own = procs[i].distribution()?;
    let peers: Vec<&NcsProcess> = procs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).collect();
    min_distance(&own, &peers)
}

fn combined(sense: Sense, fitness: f64, diversity: f64, phi: f64) -> f64 {
    let f = match sense {
        Sense::Maximize => fitness,
        Sense::Minimize => -fitness,
    };
    // No peers: nothing constrains diversity, compare on fitness alone.
    if diversity.is_finite() { f + phi * diversity } else { f }
}

/// Keeps the offspring only if its combined score is strictly better than
/// the parent's; ties keep the parent.
pub fn heuristic_select(
    parent: &NcsProcess,
    offspring: &NcsProcess,
    peers: &[&NcsProcess],
    phi: f64,
    sense: Sense,
) -> Result<NcsProcess> {
    let d_parent = min_distance(&parent.distribution()?, peers)?;
    let d_offspring = min_distance(&offspring.distribution()?, peers)?;
    let keep_offspring = combined(sense, parent.parent_fitness, d_parent, phi)
        < combined(sense, offspring.parent_fitness, d_offspring, phi);
    Ok(if keep_offspring { offspring.clone() } else { parent.clone() })
}

/// Runs one selection sweep over `order`, updating `procs` in place.
/// Returns which processes adopted their offspring.
pub fn selection_sweep(
    procs: &mut [NcsProcess],
    offspring: &[NcsProcess],
    order: &[usize],
    phi: f64,
    sense: Sense,
) -> Result<Vec<bool>> {
    let mut replaced = vec![false; procs.len()];
    for &i in order {
        let peers: Vec<&NcsProcess> = procs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p).collect();
        let chosen = heuristic_select(&procs[i], &offspring[i], &peers, phi, sense)?;
        replaced[i] = chosen == offspring[i] && chosen != procs[i];
        procs[i] = chosen;
    }
    Ok(replaced)
}

/// Runs NCS-C to budget exhaustion. Each generation costs one (re-)evaluated
/// offspring per process; the initial parents are evaluated first and also
/// count against the budget.
pub fn run_ncs_c(cfg: RunConfig, objective: Arc<dyn Objective>) -> Result<RunReport> {
    let started = Instant::now();
    let ctx = RunContext::new(cfg, objective, None)?;
    let cfg = &ctx.cfg;
    let lambda = cfg.lambda;
    let sense = cfg.sense;
    let sigma0 = cfg.ncs.sigma_init.unwrap_or_else(|| {
        let b = &cfg.init_box;
        let width: f64 = b.lower.iter().zip(&b.upper).map(|(lo, hi)| hi - lo).sum();
        width / b.dim() as f64 / 4.0
    });

    let mut tracker = Tracker::new(sense);
    let init_cost: u64 = (0..lambda).map(|i| u64::from(ctx.reevals(i, 0, 0))).sum();
    let finish = |tracker: Tracker, procs: &[NcsProcess], failure: Option<String>| -> Result<RunReport> {
        let dists = procs.iter().map(NcsProcess::distribution).collect::<Result<Vec<_>>>()?;
        Ok(tracker.into_report(lambda, dists, ctx.cfg.phi, started.elapsed().as_secs_f64(), failure))
    };

    let means = ctx.initial_distributions()?;
    let mut procs = Vec::with_capacity(lambda);
    for (i, dist) in means.iter().enumerate() {
        let x = dist.mean().to_vec();
        let f = match ctx.evaluate(i, 0, 0, &x) {
            Ok(f) => f,
            Err(e) => return finish(tracker, &procs, Some(e.to_string())),
        };
        procs.push(NcsProcess { parent: x, parent_fitness: f, sigma: sigma0 });
    }
    if init_cost > cfg.budget_evals {
        return finish(tracker, &procs, None);
    }
    for p in &procs {
        if tracker.best_solution.is_empty() || sense.better(p.parent_fitness, tracker.best_fitness) {
            tracker.best_fitness = p.parent_fitness;
            tracker.best_solution = p.parent.clone();
        }
    }
    tracker.evals = init_cost;

    let order: Vec<usize> = (0..lambda).collect();
    let mut successes = vec![0u64; lambda];
    let mut g = 0u64;
    loop {
        let eval_iter = g + 1;
        let cost: u64 = (0..lambda).map(|i| u64::from(ctx.reevals(i, eval_iter, 0))).sum();
        if tracker.evals + cost > cfg.budget_evals {
            break;
        }
        let mut offspring = Vec::with_capacity(lambda);
        let mut outcomes = Vec::with_capacity(lambda);
        for (i, p) in procs.iter().enumerate() {
            let mut rng = StreamId::new(cfg.seed, Purpose::Mutation).process(i).iteration(g).rng();
            let x: Vec<f64> = p
                .parent
                .iter()
                .map(|&xd| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    xd + p.sigma * z
                })
                .collect();
            let f = match ctx.evaluate(i, eval_iter, 0, &x) {
                Ok(f) => f,
                Err(e) => return finish(tracker, &procs, Some(e.to_string())),
            };
            outcomes.push(ProcessOutcome { mean_fitness: 0.0, batch_best: (f, x.clone()) });
            offspring.push(NcsProcess { parent: x, parent_fitness: f, sigma: p.sigma });
        }

        let replaced = selection_sweep(&mut procs, &offspring, &order, cfg.phi, sense)?;
        for (i, r) in replaced.iter().enumerate() {
            successes[i] += u64::from(*r);
        }
        g += 1;
        if g.is_multiple_of(cfg.ncs.epoch) {
            for (p, s) in procs.iter_mut().zip(successes.iter_mut()) {
                let rate = *s as f64 / cfg.ncs.epoch as f64;
                if rate > 0.2 {
                    p.sigma *= cfg.ncs.factor;
                } else if rate < 0.2 {
                    p.sigma /= cfg.ncs.factor;
                }
                *s = 0;
            }
        }

        for (o, p) in outcomes.iter_mut().zip(&procs) {
            o.mean_fitness = p.parent_fitness;
        }
        let dists = procs.iter().map(NcsProcess::distribution).collect::<Result<Vec<_>>>()?;
        tracker.record(cost, &outcomes, &dists)?;
    }
    finish(tracker, &procs, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::build;

    fn proc1(x: f64, f: f64, sigma: f64) -> NcsProcess {
        NcsProcess { parent: vec![x], parent_fitness: f, sigma }
    }

    #[test]
    fn diversity_examples() {
        let twins = vec![proc1(1.0, 0.0, 1.0); 2];
        assert_eq!(decentralized_diversity(0, &twins).unwrap(), 0.0);
        let procs = vec![proc1(0.0, 0.0, 1.0), proc1(2.0, 0.0, 1.0), proc1(4.0, 0.0, 1.0)];
        assert!((decentralized_diversity(0, &procs).unwrap() - 0.5).abs() < 1e-15);
        let permuted = vec![procs[0].clone(), procs[2].clone(), procs[1].clone()];
        assert_eq!(decentralized_diversity(0, &permuted).unwrap(), decentralized_diversity(0, &procs).unwrap());
        assert_eq!(decentralized_diversity(0, &procs[..1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn select_examples() {
        // parent f=1, d̄=2; offspring f=2, d̄=0; phi=1 → 3 vs 2 → parent.
        // With a unit-sigma peer at 0: d̄ = x²/8, so x = 4 gives 2 and x = 0 gives 0.
        let peer = proc1(0.0, 0.0, 1.0);
        let parent = proc1(4.0, 1.0, 1.0);
        let offspring = proc1(0.0, 2.0, 1.0);
        assert_eq!(heuristic_select(&parent, &offspring, &[&peer], 1.0, Sense::Maximize).unwrap(), parent);
        // phi → 0 reduces to fitness.
        assert_eq!(heuristic_select(&parent, &offspring, &[&peer], 1e-12, Sense::Maximize).unwrap(), offspring);
        assert_eq!(heuristic_select(&parent, &offspring, &[&peer], 1e-12, Sense::Minimize).unwrap(), parent);
        // equal combined scores keep the parent: 1 + 2 == 3 + 0
        let offspring = proc1(0.0, 3.0, 1.0);
        assert_eq!(heuristic_select(&parent, &offspring, &[&peer], 1.0, Sense::Maximize).unwrap(), parent);
        // no peers: fitness only
        assert_eq!(heuristic_select(&parent, &offspring, &[], 1.0, Sense::Maximize).unwrap(), offspring);
    }

    #[test]
    fn sweep_order_changes_survivors() {
        let procs = vec![proc1(0.0, 0.0, 1.0), proc1(1.0, 0.0, 1.0)];
        let offspring = vec![proc1(3.0, 0.0, 1.0), proc1(3.5, 0.0, 1.0)];

        let mut forward = procs.clone();
        let r = selection_sweep(&mut forward, &offspring, &[0, 1], 1.0, Sense::Maximize).unwrap();
        assert_eq!(r, vec![true, false]);

        let mut backward = procs.clone();
        let r = selection_sweep(&mut backward, &offspring, &[1, 0], 1.0, Sense::Maximize).unwrap();
        assert_eq!(r, vec![false, true]);
    }

    #[test]
    fn runs_are_reproducible_and_within_budget() {
        let obj = build("rastrigin", 4, 0.0).unwrap();
        let mut cfg = RunConfig::for_objective(obj.spec(), 2000);
        cfg.seed = 12;
        let a = run_ncs_c(cfg.clone(), obj.clone()).unwrap();
        let b = run_ncs_c(cfg, obj).unwrap();
        assert!(a.bitwise_eq(&b));
        assert_eq!(a.evals, 2000);
        assert_eq!(a.curve.len(), (2000 - 5) / 5);
        for w in a.curve.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness);
        }
    }

    #[test]
    fn single_process_is_one_plus_one_es() {
        let obj = build("sphere", 3, 0.0).unwrap();
        let mut cfg = RunConfig::for_objective(obj.spec(), 400);
        cfg.lambda = 1;
        cfg.mu = 1;
        cfg.seed = 9;
        let report = run_ncs_c(cfg.clone(), obj.clone()).unwrap();

        // Reference (1+1)-ES with the same streams and 1/5 rule.
        let init = RunContext::new(cfg.clone(), obj.clone(), None).unwrap().initial_distributions().unwrap();
        let mut x = init[0].mean().to_vec();
        let mut fx = crate::objective::benchmarks::sphere(&x);
        let mut sigma = 10.0 / 4.0;
        let mut wins = 0;
        for g in 0..399u64 {
            let mut rng = StreamId::new(9, Purpose::Mutation).iteration(g).rng();
            let y: Vec<f64> = x.iter().map(|&v| { let z: f64 = StandardNormal.sample(&mut rng); v + sigma * z }).collect();
            let fy = crate::objective::benchmarks::sphere(&y);
            if fy < fx {
                x = y;
                fx = fy;
                wins += 1;
            }
            if (g + 1) % 10 == 0 {
                let rate = wins as f64 / 10.0;
                if rate > 0.2 {
                    sigma *= 1.1;
                } else if rate < 0.2 {
                    sigma /= 1.1;
                }
                wins = 0;
            }
        }
        assert_eq!(report.final_distributions[0].mean(), &x[..]);
        assert_eq!(report.curve.last().unwrap().process_mean_fitness[0], fx);
        assert_eq!(report.best_fitness, fx);
    }
}
