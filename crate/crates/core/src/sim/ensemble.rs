//! Independent replicas with deterministic per-replica RNG streams.

use super::{simulate_stream, SimulationPath, SystemState};
use crate::error::Result;
use crate::model::ModelSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Summary statistics of a path functional over an ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub replicas: usize,
    pub mean: f64,
    pub var: f64,
    pub ci95: f64,
    /// Replica indices whose simulation failed.
    pub failures: Vec<usize>,
}

impl EnsembleStats {
    pub fn stderr(&self) -> f64 {
        let ok = self.replicas - self.failures.len();
        if ok == 0 {
            f64::NAN
        } else {
            (self.var / ok as f64).sqrt()
        }
    }
}

/// Runs `replicas` independent simulations (stream `i` of the seed drives
/// replica `i`) and reduces each path to a scalar. Replicas run in parallel;
/// the reduction over replicas is sequential in index order, so identical
/// inputs give identical statistics.
pub fn ensemble(
    model: &ModelSpec,
    initial: &SystemState,
    horizon: f64,
    replicas: usize,
    seed: u64,
    functional: impl Fn(&SimulationPath) -> f64 + Sync,
) -> Result<EnsembleStats> {
    if replicas == 0 {
        return Err(crate::error::Error::Invalid("need at least one replica".into()));
    }
    let values: Vec<Result<f64>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let path = simulate_stream(model, initial, horizon, seed, i as u64)?;
            Ok(functional(&path))
        })
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::with_capacity(replicas);
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Ok(x) => ok.push(x),
            Err(_) => failures.push(i),
        }
    }
    let n = ok.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / n as f64
    };
    let var = if n < 2 {
        0.0
    } else {
        ok.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0)
    };
    let ci95 = 1.96 * (var / n.max(1) as f64).sqrt();

    Ok(EnsembleStats {
        replicas,
        mean,
        var,
        ci95,
        failures,
    })
}
