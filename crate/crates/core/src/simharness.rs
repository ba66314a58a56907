//! Replicated simulation of the marked process: pair fractions and
//! interference at the window centre, with confidence intervals.
//!
//! Replicate `i` draws its pattern from `derive_seed(master_seed, i)` and
//! results are aggregated in replicate order, so summaries do not depend on
//! the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::PathlossModel;
use crate::error::{Error, Result};
use crate::marks::{ControlSet, MarkModel};
use crate::mnnr::{mnnr_partition_with, NeighborSearch};
use crate::pointprocess::{sample_ppp, MarkedPattern, Window};
use crate::rng::{derive_seed, SeededRng};

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub lambda: f64,
    pub window: Window,
    pub marks: MarkModel,
    pub control: ControlSet,
    pub replicates: usize,
    pub master_seed: u64,
    pub pathloss: Option<PathlossModel>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub search: NeighborSearch,
}

impl ExperimentConfig {
    pub fn new(lambda: f64, window: Window, marks: MarkModel, control: ControlSet) -> Self {
        Self {
            lambda,
            window,
            marks,
            control,
            replicates: 400,
            master_seed: 1,
            pathloss: None,
            workers: None,
            search: NeighborSearch::Grid,
        }
    }

    /// Checks the configuration; returns warnings about noisy setups.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "intensity must be positive, got {}",
                self.lambda
            )));
        }
        if self.replicates < 1 {
            return Err(Error::invalid("at least one replicate is required"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("worker count must be positive"));
        }
        if let Some(pl) = &self.pathloss {
            pl.validate()?;
        }
        let mut warnings = Vec::new();
        let expected = self.lambda * self.window.area();
        if expected < 10.0 {
            warnings.push(format!(
                "expected {expected:.1} atoms per window; pair statistics will be very noisy"
            ));
        }
        Ok(warnings)
    }

    /// Pattern of replicate `i`.
    pub fn replicate_pattern(&self, i: usize) -> Result<MarkedPattern> {
        let mut rng = SeededRng::new(derive_seed(self.master_seed, i as u64));
        sample_ppp(self.lambda, &self.window, &self.marks, &mut rng)
    }

    fn run_replicates<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.validate()?;
        let job = || (0..self.replicates).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
        match self.workers {
            None => job(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start {n} workers: {e}")))?
                .install(job),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub ci95: (f64, f64),
}

impl EstimateSummary {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (value - self.mean).abs() <= k * self.stderr
    }
}

/// Mean, standard error `sd / √n` and the normal 95% interval.
pub fn summarize(values: &[f64]) -> Result<EstimateSummary> {
    if values.len() < 2 {
        return Err(Error::invalid(format!(
            "a summary needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    Ok(EstimateSummary {
        mean,
        stderr,
        replicates: values.len(),
        ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
    })
}

/// Per-replicate pair counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCount {
    /// Atoms counted (inside the guard margin).
    pub atoms: usize,
    pub paired: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFractionRun {
    /// Mean of the per-replicate fractions.
    pub summary: EstimateSummary,
    /// Total paired atoms over total atoms.
    pub ratio_of_means: f64,
    /// Replicates without atoms, left out of the summary.
    pub empty_replicates: usize,
    pub counts: Vec<PairCount>,
}

pub fn run_pair_fraction(cfg: &ExperimentConfig) -> Result<EstimateSummary> {
    Ok(run_pair_fraction_detailed(cfg)?.summary)
}

pub fn run_pair_fraction_detailed(cfg: &ExperimentConfig) -> Result<PairFractionRun> {
    let counts = cfg.run_replicates(|i| {
        let p = cfg.replicate_pattern(i)?;
        let part = mnnr_partition_with(p.atoms(), &cfg.control, &p.metric(), cfg.search);
        let paired = part.paired_mask();
        let mut c = PairCount { atoms: 0, paired: 0 };
        for (a, &in_pair) in p.atoms().iter().zip(&paired) {
            if cfg.window.in_core(a.position()) {
                c.atoms += 1;
                c.paired += usize::from(in_pair);
            }
        }
        Ok(c)
    })?;
    let fractions: Vec<f64> = counts
        .iter()
        .filter(|c| c.atoms > 0)
        .map(|c| c.paired as f64 / c.atoms as f64)
        .collect();
    if fractions.is_empty() {
        return Err(Error::invalid("every replicate produced an empty pattern"));
    }
    let (atoms, paired) = counts
        .iter()
        .fold((0usize, 0usize), |(a, p), c| (a + c.atoms, p + c.paired));
    Ok(PairFractionRun {
        summary: summarize(&fractions)?,
        ratio_of_means: paired as f64 / atoms as f64,
        empty_replicates: counts.len() - fractions.len(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceRun {
    pub singles: EstimateSummary,
    pub pairs: EstimateSummary,
    pub total: EstimateSummary,
    /// The pathloss law actually simulated, cut off at the window half-width
    /// unless an outer radius was configured.
    pub pathloss: PathlossModel,
}

/// Interference at the window centre from singles and from paired atoms.
pub fn run_interference(cfg: &ExperimentConfig) -> Result<(EstimateSummary, EstimateSummary)> {
    let run = run_interference_detailed(cfg)?;
    Ok((run.singles, run.pairs))
}

pub fn run_interference_detailed(cfg: &ExperimentConfig) -> Result<InterferenceRun> {
    let base = cfg
        .pathloss
        .ok_or_else(|| Error::invalid("interference runs need a pathloss model"))?;
    let half = 0.5 * cfg.window.width().min(cfg.window.height());
    let pl = base.truncated(base.outer_radius.unwrap_or(half))?;
    let center = cfg.window.center();
    let metric = cfg.window.metric();

    let per = cfg.run_replicates(|i| {
        let p = cfg.replicate_pattern(i)?;
        let part = mnnr_partition_with(p.atoms(), &cfg.control, &metric, cfg.search);
        let paired = part.paired_mask();
        let (mut singles, mut pairs) = (0.0, 0.0);
        for (a, &in_pair) in p.atoms().iter().zip(&paired) {
            let g = pl.gain(metric.distance(center, a.position()));
            if in_pair {
                pairs += g;
            } else {
                singles += g;
            }
        }
        Ok((singles, pairs))
    })?;
    let singles: Vec<f64> = per.iter().map(|v| v.0).collect();
    let pairs: Vec<f64> = per.iter().map(|v| v.1).collect();
    let total: Vec<f64> = per.iter().map(|v| v.0 + v.1).collect();
    Ok(InterferenceRun {
        singles: summarize(&singles)?,
        pairs: summarize(&pairs)?,
        total: summarize(&total)?,
        pathloss: pl,
    })
}
