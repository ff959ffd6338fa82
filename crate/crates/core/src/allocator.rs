//! Measurement-driven tuning of per-class task granularity.
//!
//! Each class starts with one primitive task per worker item. The tuner
//! repeatedly doubles the granularity of every class, keeps the change when
//! the measured time drops and reverts it otherwise, until a full sweep makes
//! no improvement.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block::QuadBlock;
use crate::compiler::EriClass;
use crate::error::{Error, Result};
use crate::executor::{Executor, FockEngine, ReductionMode};

/// Upper bound on granularity regardless of block size.
pub const MAX_GRANULARITY: usize = 4096;
pub const DEFAULT_REPEATS: usize = 3;

/// Granularity per class; classes without an entry use 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkloadConfig {
    granularity: BTreeMap<EriClass, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Combined { previous: usize },
    Capped,
}

impl WorkloadConfig {
    pub fn get(&self, class: EriClass) -> usize {
        self.granularity.get(&class).copied().unwrap_or(1)
    }

    pub fn set(&mut self, class: EriClass, g: usize) {
        self.granularity.insert(class, g.max(1));
    }

    /// Doubles `g[class]`, clamped to `cap`.
    pub fn combine(&mut self, class: EriClass, cap: usize) -> Combine {
        let g = self.get(class);
        if g >= cap {
            return Combine::Capped;
        }
        self.set(class, (2 * g).min(cap));
        Combine::Combined { previous: g }
    }

    /// Undoes a [`WorkloadConfig::combine`].
    pub fn revert(&mut self, class: EriClass, previous: usize) {
        self.set(class, previous);
    }

    pub fn iter(&self) -> impl Iterator<Item = (EriClass, usize)> + '_ {
        self.granularity.iter().map(|(&c, &g)| (c, g))
    }
}

/// Median and spread of repeated timings, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub median: f64,
    pub variance: f64,
    pub samples: Vec<f64>,
}

impl Measurement {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        Ok(Measurement {
            median,
            variance,
            samples,
        })
    }
}

/// Something whose per-class execution time depends on granularity.
pub trait Workload {
    fn classes(&self) -> Vec<EriClass>;

    /// Largest useful granularity for `class`.
    fn cap(&self, class: EriClass) -> usize;

    /// Executes the class sample once at granularity `g` and returns seconds.
    fn run(&mut self, class: EriClass, g: usize) -> Result<f64>;
}

/// One discarded warm-up run, then the median of `repeats` runs.
pub fn measure<W: Workload + ?Sized>(workload: &mut W, class: EriClass, g: usize, repeats: usize) -> Result<Measurement> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    workload.run(class, g)?;
    let samples = (0..repeats).map(|_| workload.run(class, g)).collect::<Result<Vec<_>>>()?;
    Measurement::from_samples(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub g: usize,
    pub seconds: f64,
    pub variance: f64,
    pub accepted: bool,
}

/// Per-class tuning record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassHistory {
    /// Time at the currently kept granularity.
    pub last_time: Option<f64>,
    pub steps: Vec<Step>,
}

impl ClassHistory {
    /// Times of the starting point and every accepted step.
    pub fn accepted_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(first) = self.steps.first() {
            out.push(first.seconds);
        }
        out.extend(self.steps.iter().skip(1).filter(|s| s.accepted).map(|s| s.seconds));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    pub improved: bool,
    pub sweeps: usize,
    pub accepted_steps: usize,
    pub classes: BTreeMap<String, ClassHistory>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub config: WorkloadConfig,
    pub state: TuningState,
}

/// Runs the tuning loop from `initial`.
///
/// A measurement is a function of `(class, g)`: once taken it is reused for
/// the rest of the session, so the time compared against after a revert is
/// the one that justified keeping the current granularity.
pub fn tune<W: Workload + ?Sized>(workload: &mut W, initial: WorkloadConfig, repeats: usize) -> Result<TuneOutcome> {
    let classes = workload.classes();
    let mut config = initial;
    let mut state = TuningState::default();
    let mut cache: BTreeMap<(EriClass, usize), Measurement> = BTreeMap::new();
    let mut time = |w: &mut W, class: EriClass, g: usize, state: &mut TuningState, accepted: bool| -> Result<f64> {
        let m = match cache.get(&(class, g)) {
            Some(m) => m.clone(),
            None => {
                let m = measure(w, class, g, repeats)?;
                cache.insert((class, g), m.clone());
                m
            }
        };
        state.classes.entry(class.to_string()).or_default().steps.push(Step {
            g,
            seconds: m.median,
            variance: m.variance,
            accepted,
        });
        Ok(m.median)
    };

    for &class in &classes {
        let g = config.get(class).min(workload.cap(class)).max(1);
        config.set(class, g);
        let t = time(workload, class, g, &mut state, true)?;
        state.classes.entry(class.to_string()).or_default().last_time = Some(t);
    }

    state.improved = true;
    while state.improved {
        state.improved = false;
        state.sweeps += 1;
        for &class in &classes {
            let hist = state.classes.entry(class.to_string()).or_default();
            let t1 = hist.last_time.expect("measured at start");
            let previous = match config.combine(class, workload.cap(class)) {
                Combine::Combined { previous } => previous,
                Combine::Capped => continue,
            };
            let t2 = time(workload, class, config.get(class), &mut state, false)?;
            let hist = state.classes.get_mut(&class.to_string()).expect("inserted above");
            if t2 < t1 {
                state.improved = true;
                state.accepted_steps += 1;
                hist.last_time = Some(t2);
                hist.steps.last_mut().expect("just pushed").accepted = true;
            } else {
                config.revert(class, previous);
            }
        }
    }
    Ok(TuneOutcome { config, state })
}

type CostFn = Box<dyn Fn(usize) -> f64 + Send>;

/// Deterministic cost functions standing in for real execution.
pub struct MockWorkload {
    costs: BTreeMap<EriClass, (usize, CostFn)>,
    pub runs: usize,
}

impl MockWorkload {
    pub fn new() -> Self {
        MockWorkload {
            costs: BTreeMap::new(),
            runs: 0,
        }
    }

    pub fn with(mut self, class: EriClass, cap: usize, cost: impl Fn(usize) -> f64 + Send + 'static) -> Self {
        self.costs.insert(class, (cap, Box::new(cost)));
        self
    }
}

impl Default for MockWorkload {
    fn default() -> Self {
        Self::new()
    }
}

impl Workload for MockWorkload {
    fn classes(&self) -> Vec<EriClass> {
        self.costs.keys().copied().collect()
    }

    fn cap(&self, class: EriClass) -> usize {
        self.costs.get(&class).map_or(1, |c| c.0)
    }

    fn run(&mut self, class: EriClass, g: usize) -> Result<f64> {
        self.runs += 1;
        let (_, cost) = self.costs.get(&class).ok_or(Error::EmptySample)?;
        Ok(cost(g))
    }
}

/// Analytic throughput model of a kernel run by `workers` lanes.
///
/// Each worker item pays a fixed `latency` (memory or launch) plus `g` tasks
/// of `compute` each. Fusing tasks grows live state by `regs_per_task`; past
/// `reg_budget` the excess spills and inflates compute proportionally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticKernel {
    pub tasks: usize,
    pub workers: usize,
    pub compute: f64,
    pub latency: f64,
    pub regs_per_task: f64,
    pub reg_budget: f64,
}

impl SyntheticKernel {
    pub fn time(&self, g: usize) -> f64 {
        let g = g.max(1);
        let waves = self.tasks.div_ceil(g * self.workers) as f64;
        let spill = 1.0 + (g as f64 * self.regs_per_task - self.reg_budget).max(0.0) / self.reg_budget;
        waves * (g as f64 * self.compute * spill + self.latency)
    }

    pub fn cap(&self) -> usize {
        self.tasks.clamp(1, MAX_GRANULARITY)
    }
}

/// Times `build_g` on a fixed sample of real blocks per class.
pub struct BlockSampleWorkload<'a> {
    pub engine: &'a mut FockEngine,
    pub executor: &'a Executor,
    pub density: &'a DMatrix<f64>,
    pub mode: ReductionMode,
    samples: BTreeMap<EriClass, Vec<QuadBlock>>,
}

impl<'a> BlockSampleWorkload<'a> {
    /// Takes up to `per_class` evenly spaced blocks of every class.
    pub fn new(
        engine: &'a mut FockEngine,
        executor: &'a Executor,
        density: &'a DMatrix<f64>,
        per_class: usize,
    ) -> Result<Self> {
        if per_class == 0 {
            return Err(Error::EmptySample);
        }
        let mut by_class: BTreeMap<EriClass, Vec<QuadBlock>> = BTreeMap::new();
        for b in &engine.block_list {
            by_class.entry(b.class).or_default().push(*b);
        }
        let samples = by_class
            .into_iter()
            .map(|(c, blocks)| {
                let n = blocks.len();
                let k = per_class.min(n);
                (c, (0..k).map(|i| blocks[i * n / k]).collect())
            })
            .collect();
        Ok(BlockSampleWorkload {
            engine,
            executor,
            density,
            mode: ReductionMode::Concurrent,
            samples,
        })
    }

    pub fn sample(&self, class: EriClass) -> &[QuadBlock] {
        self.samples.get(&class).map_or(&[], Vec::as_slice)
    }
}

impl Workload for BlockSampleWorkload<'_> {
    fn classes(&self) -> Vec<EriClass> {
        self.samples.keys().copied().collect()
    }

    fn cap(&self, class: EriClass) -> usize {
        let most = self.sample(class).iter().map(|b| self.engine.block_tasks(b)).max().unwrap_or(1);
        most.clamp(1, MAX_GRANULARITY)
    }

    fn run(&mut self, class: EriClass, g: usize) -> Result<f64> {
        let sample = self.samples.get(&class).ok_or(Error::EmptySample)?;
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        self.engine.workload.set(class, g);
        let start = Instant::now();
        let g_mat = self.executor.build_g_blocks(self.engine, sample, self.density, self.mode)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(g_mat);
        Ok(elapsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: EriClass = EriClass([0, 0, 0, 0]);
    const B: EriClass = EriClass([1, 0, 0, 0]);

    #[test]
    fn combine_doubles_and_caps() {
        let mut c = WorkloadConfig::default();
        assert_eq!(c.combine(A, 8), Combine::Combined { previous: 1 });
        assert_eq!(c.get(A), 2);
        assert_eq!(c.get(B), 1);
        c.set(A, 8);
        assert_eq!(c.combine(A, 8), Combine::Capped);
        assert_eq!(c.get(A), 8);
        c.set(A, 6);
        assert_eq!(c.combine(A, 8), Combine::Combined { previous: 6 });
        assert_eq!(c.get(A), 8);
    }

    #[test]
    fn revert_restores() {
        let mut c = WorkloadConfig::default();
        c.set(B, 4);
        for g in [1, 2, 16] {
            c.set(A, g);
            if let Combine::Combined { previous } = c.combine(A, 4096) {
                c.revert(A, previous);
            }
            assert_eq!(c.get(A), g);
            assert_eq!(c.get(B), 4);
        }
    }

    #[test]
    fn measurement_statistics() {
        let m = Measurement::from_samples(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.median, 2.0);
        assert!((m.variance - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(Measurement::from_samples(vec![]), Err(Error::EmptySample)));
    }

    #[test]
    fn inverse_cost_halves() {
        let mut w = MockWorkload::new().with(A, 64, |g| 1.0 / g as f64);
        let t1 = measure(&mut w, A, 1, 3).unwrap().median;
        let t2 = measure(&mut w, A, 2, 3).unwrap().median;
        assert_eq!(t2, t1 / 2.0);
        assert_eq!(w.runs, 8);
    }

    #[test]
    fn converges_to_interior_minimum() {
        let mut w = MockWorkload::new().with(A, 4096, |g| (g as f64 - 4.0).abs() + 1.0);
        let out = tune(&mut w, WorkloadConfig::default(), 3).unwrap();
        assert_eq!(out.config.get(A), 4);
    }

    #[test]
    fn empty_workload_sample_errors() {
        let mut w = MockWorkload::new();
        assert!(matches!(measure(&mut w, A, 1, 3), Err(Error::EmptySample)));
    }
}
