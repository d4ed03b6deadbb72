//! A (mu + lambda) evolution strategy with log-normal step-size
//! self-adaptation, and a port for injecting transferred knowledge.
//!
//! Bounds are handled by reflection. The evaluation budget is exact: the last
//! generation is truncated so that no more than `budget` objective calls are
//! made, and [`Evolver::inject`] spends one evaluation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{KernelError, Knowledge, ObservableProperty, PopulationStats, Task};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolverError {
    #[error("budget {budget} is smaller than mu = {mu}")]
    BudgetTooSmall { budget: usize, mu: usize },
    #[error("invalid evolver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolverConfig {
    pub mu: usize,
    pub lambda: usize,
    pub sigma0: f64,
    pub budget: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub self_adaptive: bool,
}

fn default_true() -> bool {
    true
}

impl EvolverConfig {
    /// The strong solver: self-adaptive steps from a moderate start.
    pub fn eo_a(budget: usize, seed: u64) -> Self {
        Self {
            mu: 10,
            lambda: 20,
            sigma0: 1.0,
            budget,
            seed,
            self_adaptive: true,
        }
    }

    /// The weak solver: a large fixed step size.
    pub fn eo_b(budget: usize, seed: u64) -> Self {
        Self {
            mu: 10,
            lambda: 20,
            sigma0: 2.0,
            budget,
            seed,
            self_adaptive: false,
        }
    }

    pub fn validate(&self) -> Result<(), EvolverError> {
        if self.mu == 0 || self.lambda < self.mu {
            return Err(EvolverError::InvalidConfig(format!(
                "need lambda >= mu >= 1, got mu = {}, lambda = {}",
                self.mu, self.lambda
            )));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(EvolverError::InvalidConfig(format!("sigma0 = {}", self.sigma0)));
        }
        if self.budget < self.mu {
            return Err(EvolverError::BudgetTooSmall {
                budget: self.budget,
                mu: self.mu,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    /// `(evaluations so far, best objective)` after initialization, after
    /// each generation and after each injection.
    pub best_per_generation: Vec<(usize, f64)>,
    pub final_population: Vec<Vec<f64>>,
    #[serde(skip)]
    pub incumbent: Knowledge,
}

impl RunTrace {
    pub fn best_objective(&self) -> f64 {
        self.best_per_generation.last().map_or(f64::INFINITY, |&(_, f)| f)
    }

    pub fn evaluations(&self) -> usize {
        self.best_per_generation.last().map_or(0, |&(n, _)| n)
    }

    /// First recorded evaluation count at which the best objective is at
    /// most `precision`.
    pub fn evaluations_to(&self, precision: f64) -> Option<usize> {
        self.best_per_generation
            .iter()
            .find(|&&(_, f)| f <= precision)
            .map(|&(n, _)| n)
    }
}

#[derive(Debug, Clone)]
struct Individual {
    x: Vec<f64>,
    sigma: f64,
    f: f64,
}

pub struct Evolver {
    task: Task,
    config: EvolverConfig,
    rng: ChaCha8Rng,
    population: Vec<Individual>,
    evaluations: usize,
    trace: Vec<(usize, f64)>,
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        return x;
    }
    let w = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * w);
    let y = if y > w { 2.0 * w - y } else { y };
    (lo + y).clamp(lo, hi)
}

impl Evolver {
    /// Samples and evaluates `mu` uniform initial points.
    pub fn new(task: Task, config: EvolverConfig) -> Result<Self, EvolverError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut population = Vec::with_capacity(config.mu);
        for _ in 0..config.mu {
            let x: Vec<f64> = task.bounds().iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            let f = task.evaluate(&x);
            population.push(Individual {
                x,
                sigma: config.sigma0,
                f,
            });
        }
        let mut ev = Self {
            task,
            config,
            rng,
            population,
            evaluations: 0,
            trace: Vec::new(),
        };
        ev.evaluations = ev.config.mu;
        ev.sort();
        ev.record();
        Ok(ev)
    }

    fn sort(&mut self) {
        self.population.sort_by(|a, b| a.f.total_cmp(&b.f));
    }

    fn record(&mut self) {
        let best = self.population[0].f;
        self.trace.push((self.evaluations, best));
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn remaining(&self) -> usize {
        self.config.budget - self.evaluations
    }

    pub fn best(&self) -> (&[f64], f64) {
        (&self.population[0].x, self.population[0].f)
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    /// One generation. Returns `false` once the budget is spent.
    pub fn step(&mut self) -> bool {
        let n = self.config.lambda.min(self.remaining());
        if n == 0 {
            return false;
        }
        let tau = 1.0 / (self.task.dim() as f64).sqrt();
        let mut offspring = Vec::with_capacity(n);
        for _ in 0..n {
            let p = &self.population[self.rng.gen_range(0..self.population.len())];
            let sigma = if self.config.self_adaptive {
                let z: f64 = self.rng.sample(StandardNormal);
                p.sigma * (tau * z).exp()
            } else {
                p.sigma
            };
            let x: Vec<f64> = p
                .x
                .iter()
                .zip(self.task.bounds())
                .map(|(&xi, &(lo, hi))| {
                    let z: f64 = self.rng.sample(StandardNormal);
                    reflect(xi + sigma * z, lo, hi)
                })
                .collect();
            offspring.push((x, sigma));
        }
        for (x, sigma) in offspring {
            let f = self.task.evaluate(&x);
            self.population.push(Individual { x, sigma, f });
        }
        self.evaluations += n;
        self.sort();
        self.population.truncate(self.config.mu);
        self.record();
        true
    }

    /// Evaluate `k` (one evaluation) and let it replace the worst
    /// individual; with `mu = 1` the better of the two survives. Consumes no
    /// randomness. Returns `false` without effect when the budget is spent.
    pub fn inject(&mut self, k: &Knowledge) -> bool {
        if self.remaining() == 0 {
            return false;
        }
        let (x, _) = self.task.clamp(&k.solution);
        let f = self.task.evaluate(&x);
        self.evaluations += 1;
        let sigma = self.population[0].sigma;
        let last = self.population.len() - 1;
        if last > 0 || f < self.population[last].f {
            self.population[last] = Individual { x, sigma, f };
        }
        self.sort();
        self.record();
        true
    }

    pub fn snapshot_observable(&self) -> Result<ObservableProperty, EvolverError> {
        let xs: Vec<Vec<f64>> = self.population.iter().map(|i| i.x.clone()).collect();
        Ok(ObservableProperty::PopulationStats(PopulationStats::from_samples(&xs)?))
    }

    pub fn trace(&self) -> &[(usize, f64)] {
        &self.trace
    }

    pub fn incumbent(&self) -> Knowledge {
        Knowledge::new(self.population[0].x.clone(), self.task.id())
    }

    pub fn finish(self) -> RunTrace {
        let incumbent = self.incumbent();
        RunTrace {
            best_per_generation: self.trace,
            final_population: self.population.into_iter().map(|i| i.x).collect(),
            incumbent,
        }
    }
}

/// Run to budget exhaustion.
pub fn run(task: &Task, config: &EvolverConfig) -> Result<RunTrace, EvolverError> {
    let mut ev = Evolver::new(task.clone(), config.clone())?;
    while ev.step() {}
    Ok(ev.finish())
}
