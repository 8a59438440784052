//! Many independent runs at once: strategy comparisons and seed sweeps.
//!
//! With the `parallel` feature (default) runs are spread over a rayon pool;
//! without it they run one after another. Results come back in input order
//! either way, and each run is deterministic, so both paths agree exactly.

use serde::{Deserialize, Serialize};

use crate::sim::engine::{run_scenario, SimError};
use crate::sim::metrics::MetricsReport;
use crate::sim::scenario::{ScenarioConfig, Strategy};

fn metrics_of(config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    run_scenario(config).map(|out| out.metrics)
}

/// Runs every config and keeps only the metrics.
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<MetricsReport, SimError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(metrics_of).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(configs)
    }
}

/// Single-threaded reference path.
pub fn run_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<MetricsReport, SimError>> {
    configs.iter().map(metrics_of).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    /// Total TUs per minute, averaged over seeds.
    pub mean_throughput: f64,
    pub min_throughput: f64,
    pub max_throughput: f64,
    /// Delivery-weighted mean process time in seconds, averaged over seeds.
    pub mean_process_time: f64,
    pub mean_delivered: f64,
}

/// Throughput of the first strategy relative to the second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Value(f64),
    /// The reference strategy delivered nothing.
    Undefined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub strategies: Vec<StrategySummary>,
    /// Present when at least two strategies were run.
    pub ratio: Option<Ratio>,
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "scenario {} over {} seed(s)\n",
            self.scenario,
            self.strategies.first().map_or(0, |x| x.seeds.len())
        );
        s.push_str(&format!(
            "{:<20} {:>10} {:>10} {:>10} {:>10} {:>12}\n",
            "strategy", "tu/min", "min", "max", "mean s", "delivered"
        ));
        for x in &self.strategies {
            s.push_str(&format!(
                "{:<20} {:>10.3} {:>10.3} {:>10.3} {:>10.2} {:>12.1}\n",
                x.strategy.as_str(),
                x.mean_throughput,
                x.min_throughput,
                x.max_throughput,
                x.mean_process_time,
                x.mean_delivered
            ));
        }
        match (self.ratio, self.strategies.first(), self.strategies.get(1)) {
            (Some(Ratio::Value(v)), Some(a), Some(b)) => {
                s.push_str(&format!("throughput ratio {}/{}: {v:.3}\n", a.strategy, b.strategy))
            }
            (Some(Ratio::Undefined), Some(a), Some(b)) => {
                s.push_str(&format!("throughput ratio {}/{}: undefined\n", a.strategy, b.strategy))
            }
            _ => {}
        }
        s
    }
}

fn summarize(strategy: Strategy, seeds: &[u64], reports: &[MetricsReport]) -> StrategySummary {
    let tp: Vec<f64> = reports.iter().map(|r| r.total_throughput).collect();
    let n = reports.len().max(1) as f64;
    let process_time = |r: &MetricsReport| {
        let delivered: usize = r.relations.iter().map(|x| x.delivered).sum();
        if delivered == 0 {
            0.0
        } else {
            r.relations.iter().map(|x| x.mean_process_time * x.delivered as f64).sum::<f64>() / delivered as f64
        }
    };
    StrategySummary {
        strategy,
        seeds: seeds.to_vec(),
        mean_throughput: tp.iter().sum::<f64>() / n,
        min_throughput: tp.iter().copied().fold(f64::INFINITY, f64::min).min(f64::MAX),
        max_throughput: tp.iter().copied().fold(0.0, f64::max),
        mean_process_time: reports.iter().map(process_time).sum::<f64>() / n,
        mean_delivered: reports.iter().map(|r| r.total_delivered as f64).sum::<f64>() / n,
    }
}

/// Runs `base` under each strategy and seed and aggregates throughput per strategy.
pub fn compare(base: &ScenarioConfig, strategies: &[Strategy], seeds: &[u64]) -> Result<Comparison, SimError> {
    base.validate()?;
    let configs: Vec<ScenarioConfig> = strategies
        .iter()
        .flat_map(|s| seeds.iter().map(move |seed| base.clone().with_strategy(*s).with_seed(*seed)))
        .collect();
    let reports = run_batch(&configs).into_iter().collect::<Result<Vec<_>, _>>()?;
    let summaries: Vec<StrategySummary> = strategies
        .iter()
        .zip(reports.chunks(seeds.len().max(1)))
        .map(|(s, chunk)| summarize(*s, seeds, chunk))
        .collect();
    let ratio = match summaries.as_slice() {
        [a, b, ..] if b.mean_throughput > 0.0 => Some(Ratio::Value(a.mean_throughput / b.mean_throughput)),
        [_, _, ..] => Some(Ratio::Undefined),
        _ => None,
    };
    Ok(Comparison { scenario: base.name.clone(), strategies: summaries, ratio })
}
