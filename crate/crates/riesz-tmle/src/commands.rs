//! `estimate`, `simulate` and `truth`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use riesz_core::sim::{
    aggregate, efficiency_bound, monte_carlo_truth, run_replication, MetricsTable, ReplicationResult, SimConfig,
};
use riesz_core::tmle::estimate;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{load_csv, metrics_json, report_json, write_metrics_csv, write_text};

/// Fits the configured estimator to the configured CSV file.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Value> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::config("data.path is required by `estimate`"))?;
    let data = load_csv(path, &cfg.schema()?)?;
    let estimand = cfg.estimand_choice()?.build(data.schema())?;
    let report = estimate(&data, &estimand, cfg.estimator_kind()?, &cfg.options()?)?;
    Ok(report_json(&report))
}

fn estimand_for(cfg: &RunConfig) -> Result<riesz_core::Estimand> {
    let dgp = cfg.dgp()?;
    let schema = dgp.draw(1, 0)?.schema().clone();
    Ok(cfg.estimand_choice()?.build(&schema)?)
}

/// `{psi0, bound, mc_se}` from the oracles of the configured design.
pub fn cmd_truth(cfg: &RunConfig) -> Result<Value> {
    let dgp = cfg.dgp()?;
    let estimand = estimand_for(cfg)?;
    let t = monte_carlo_truth(&dgp, &estimand, cfg.sim.truth_draws, cfg.sim.seed)?;
    let b = efficiency_bound(&dgp, &estimand, cfg.sim.truth_draws, cfg.sim.seed)?;
    Ok(json!({ "psi0": t.psi0, "bound": b.bound, "mc_se": t.mc_se }))
}

/// Builds the replication settings, running the oracles for any truth or
/// bound the configuration leaves open.
pub fn sim_config(cfg: &RunConfig) -> Result<SimConfig> {
    let dgp = cfg.dgp()?;
    let estimand = estimand_for(cfg)?;
    let psi0 = match cfg.sim.psi0 {
        Some(p) => p,
        None => monte_carlo_truth(&dgp, &estimand, cfg.sim.truth_draws, cfg.sim.seed)?.psi0,
    };
    let bound = match cfg.sim.bound {
        Some(b) => b,
        None => efficiency_bound(&dgp, &estimand, cfg.sim.truth_draws, cfg.sim.seed)?.bound,
    };
    Ok(SimConfig {
        dgp,
        estimand: cfg.estimand_choice()?,
        estimators: cfg.sim_estimators()?,
        arms: cfg.arms()?,
        n_grid: cfg.sim.n_grid.clone(),
        reps: cfg.sim.reps,
        base_seed: cfg.sim.seed,
        options: cfg.options()?,
        psi0,
        bound: Some(bound),
    })
}

/// Runs every replication on `threads` workers (all cores when `None`).
/// Each replication owns its seed, so the table equals the serial one.
pub fn run_parallel(sim: &SimConfig, threads: Option<usize>) -> Result<MetricsTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("sim.threads: {e}")))?;
    let tasks = sim.tasks();
    let results: Vec<riesz_core::Result<Vec<ReplicationResult>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(n, rep)| run_replication(sim, n, rep))
            .collect()
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(aggregate(sim, all)?)
}

/// Runs the configured simulation and writes the metrics table.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(MetricsTable, Vec<PathBuf>)> {
    let sim = sim_config(cfg)?;
    let table = run_parallel(&sim, cfg.sim.threads)?;
    let written = write_metrics(cfg, &table)?;
    Ok((table, written))
}

fn write_metrics(cfg: &RunConfig, table: &MetricsTable) -> Result<Vec<PathBuf>> {
    let formats = cfg.formats()?;
    let Some(base) = cfg.output.path.as_deref() else {
        return Ok(Vec::new());
    };
    let mut written = Vec::new();
    if formats.csv {
        let p = base.with_extension("csv");
        let f = std::fs::File::create(&p).map_err(|e| CliError::io(&p, e))?;
        write_metrics_csv(table, f)?;
        written.push(p);
    }
    if formats.json {
        let p = base.with_extension("json");
        write_text(&p, &pretty(&metrics_json(table)))?;
        written.push(p);
    }
    Ok(written)
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Writes a JSON document to `output.path`, or returns it for stdout.
pub fn emit(cfg: &RunConfig, doc: &Value) -> Result<Option<String>> {
    let text = pretty(doc);
    match cfg.output.path.as_deref() {
        Some(p) => {
            write_text(with_json_default(p), &text)?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}

fn with_json_default(p: &Path) -> PathBuf {
    if p.extension().is_none() {
        p.with_extension("json")
    } else {
        p.to_path_buf()
    }
}
