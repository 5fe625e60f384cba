//! Accuracy / energy-reduction sweeps over baselines and trained agents.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::ddqn::QPolicy;
use crate::error::Result;
use crate::metrics::{aecr, energy_reduction};
use crate::qnet::QNetwork;
use crate::schedulers::{run_policy, Policy, PolicySpec};
use crate::trace::EpisodeTrace;

/// A trained network entering a sweep.
#[derive(Debug, Clone)]
pub struct Agent {
    pub label: String,
    pub lambda: f64,
    pub net: QNetwork,
}

/// One policy on one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: String,
    pub family: String,
    pub seed: u64,
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub total_mj: f64,
    pub energy_reduction: f64,
}

/// Per-policy averages over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub policy: String,
    pub family: String,
    pub lambda: f64,
    pub seeds: usize,
    pub mean_accuracy: f64,
    pub mean_total_mj: f64,
    pub mean_energy_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AecrRow {
    pub policy: String,
    pub seed: u64,
    pub t: usize,
    pub aecr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aecr: Vec<AecrRow>,
}

enum Entry<'a> {
    Baseline(PolicySpec),
    Learned(&'a Agent),
}

impl Entry<'_> {
    fn id(&self) -> String {
        match self {
            Entry::Baseline(spec) => spec.to_string(),
            Entry::Learned(a) => a.label.clone(),
        }
    }

    fn family(&self) -> &'static str {
        match self {
            Entry::Baseline(spec) => spec.family(),
            Entry::Learned(_) => "rl",
        }
    }
}

/// Runs every baseline in `grid` and every agent over each seed.
///
/// The reference for each seed is the all-key rollout of the same sequence.
/// Rows are ordered by policy (grid order, then agents) and then by seed.
pub fn pareto_sweep(exp: &Experiment, grid: &[PolicySpec], agents: &[Agent], seeds: &[u64]) -> Result<SweepResult> {
    let base_lambda = exp.run.reward.lambda;
    let references: Vec<EpisodeTrace> = seeds
        .par_iter()
        .map(|&seed| rollout_spec(exp, &PolicySpec::AllKey, base_lambda, seed))
        .collect::<Result<_>>()?;

    let entries: Vec<Entry> = grid
        .iter()
        .cloned()
        .map(Entry::Baseline)
        .chain(agents.iter().map(Entry::Learned))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..seeds.len()).map(move |s| (e, s)))
        .collect();

    let evaluated: Vec<(SweepRow, Vec<AecrRow>)> = jobs
        .par_iter()
        .map(|&(e, s)| {
            let entry = &entries[e];
            let seed = seeds[s];
            let (trace, lambda) = match entry {
                Entry::Baseline(spec) => (rollout_spec(exp, spec, base_lambda, seed)?, base_lambda),
                Entry::Learned(agent) => {
                    let mut policy = QPolicy::new(agent.net.clone(), exp.policy_overhead(), agent.label.clone());
                    (rollout(exp, &mut policy, agent.lambda, seed)?, agent.lambda)
                }
            };
            let reference = &references[s];
            let id = entry.id();
            let series = aecr(&trace, reference)?
                .into_iter()
                .enumerate()
                .map(|(t, aecr)| AecrRow {
                    policy: id.clone(),
                    seed,
                    t,
                    aecr,
                })
                .collect();
            let row = SweepRow {
                policy: id,
                family: entry.family().to_string(),
                seed,
                lambda,
                mean_accuracy: trace.mean_accuracy(),
                total_mj: trace.total_consumed_mj(),
                energy_reduction: energy_reduction(&trace, reference)?,
            };
            Ok((row, series))
        })
        .collect::<Result<_>>()?;

    let mut out = SweepResult::default();
    for (row, series) in evaluated {
        out.rows.push(row);
        out.aecr.extend(series);
    }
    Ok(out)
}

fn rollout(exp: &Experiment, policy: &mut dyn Policy, lambda: f64, seed: u64) -> Result<EpisodeTrace> {
    let mut env = exp.env(lambda)?;
    env.reset_with(exp.run.sequence.sequence(seed))?;
    run_policy(&mut env, policy)
}

/// Rolls a baseline over the sequence `seed` draws from the experiment's sampler.
pub fn rollout_spec(exp: &Experiment, spec: &PolicySpec, lambda: f64, seed: u64) -> Result<EpisodeTrace> {
    let mut policy = spec.build();
    rollout(exp, policy.as_mut(), lambda, seed)
}

/// Averages rows per policy, keeping first-seen policy order.
pub fn means(rows: &[SweepRow]) -> Vec<SweepMean> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        let group = groups.entry(row.policy.clone()).or_default();
        if group.is_empty() {
            order.push(row.policy.clone());
        }
        group.push(row);
    }
    order
        .into_iter()
        .map(|policy| {
            let g = &groups[&policy];
            let n = g.len() as f64;
            SweepMean {
                family: g[0].family.clone(),
                lambda: g[0].lambda,
                seeds: g.len(),
                mean_accuracy: g.iter().map(|r| r.mean_accuracy).sum::<f64>() / n,
                mean_total_mj: g.iter().map(|r| r.total_mj).sum::<f64>() / n,
                mean_energy_reduction: g.iter().map(|r| r.energy_reduction).sum::<f64>() / n,
                policy,
            }
        })
        .collect()
}

/// Serializes `rows` as CSV with a header line.
pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
