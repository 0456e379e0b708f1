//! Model configuration files: named built-ins with parameters, or explicit
//! graphs with rates affine in the empirical measure.

use super::{retrial_model, wlan_model, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::simplex::SimplexVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// On-disk model description. Either `builtin` is set (with `params`) or the
/// `slow`/`fast` tables are.
///
/// A table edge fires at rate `(base + sum_x coeffs[x] xi(x))`, gated for
/// slow edges on the environment lying in `env_mask` (absent mask = no gate).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub slow: Option<TableChain>,
    #[serde(default)]
    pub fast: Option<TableChain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableChain {
    pub states: Vec<String>,
    pub edges: Vec<TableEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEdge {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub coeffs: BTreeMap<String, f64>,
    #[serde(default)]
    pub env_mask: Option<Vec<String>>,
}

fn config_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        location: location.into(),
        message: message.into(),
    }
}

/// Loads a model configuration file (JSON) and builds the model.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path.as_ref())?;
    model_from_json(&text)
}

/// Builds a model from configuration text.
pub fn model_from_json(text: &str) -> Result<ModelSpec> {
    let config: ModelConfig = serde_json::from_str(text).map_err(|e| {
        config_err(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    build_model(&config)
}

pub fn build_model(config: &ModelConfig) -> Result<ModelSpec> {
    if let Some(builtin) = &config.builtin {
        return build_builtin(builtin, &config.params);
    }
    let slow = config
        .slow
        .as_ref()
        .ok_or_else(|| config_err("slow", "missing table for a non-builtin model"))?;
    let fast = config
        .fast
        .as_ref()
        .ok_or_else(|| config_err("fast", "missing table for a non-builtin model"))?;

    let slow_graph = build_graph("slow", slow)?;
    let fast_graph = build_graph("fast", fast)?;

    // rate coefficients always index the *slow* states: every rate is a
    // function of the empirical measure of the particles
    let slow_rates = build_affine_rates("slow", slow, &slow_graph)?;
    let fast_rates = build_affine_rates("fast", fast, &slow_graph)?;
    let masks = build_env_masks(slow, &fast_graph)?;

    let name = config.name.clone().unwrap_or_else(|| "table-model".into());
    let slow_rate = {
        move |e: usize, xi: &SimplexVector, y: usize| -> f64 {
            if let Some(mask) = &masks[e] {
                if !mask[y] {
                    return 0.0;
                }
            }
            slow_rates[e].eval(xi)
        }
    };
    let fast_rate = move |e: usize, xi: &SimplexVector| -> f64 { fast_rates[e].eval(xi) };

    Ok(ModelSpec::new(
        name,
        slow_graph,
        fast_graph,
        Arc::new(slow_rate),
        Arc::new(fast_rate),
    ))
}

#[derive(Debug, Clone)]
struct AffineRate {
    base: f64,
    coeffs: Vec<f64>,
}

impl AffineRate {
    fn eval(&self, xi: &SimplexVector) -> f64 {
        let mut r = self.base;
        for (c, w) in self.coeffs.iter().zip(xi.as_slice()) {
            r += c * w;
        }
        r
    }
}

fn build_graph(which: &str, chain: &TableChain) -> Result<DirectedGraph> {
    let lookup: BTreeMap<&str, usize> = chain
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if lookup.len() != chain.states.len() {
        return Err(config_err(format!("{which}.states"), "duplicate state names"));
    }
    let mut edges = Vec::with_capacity(chain.edges.len());
    for (i, e) in chain.edges.iter().enumerate() {
        let loc = format!("{which}.edges[{i}]");
        let from = *lookup
            .get(e.from.as_str())
            .ok_or_else(|| config_err(&loc, format!("unknown state '{}'", e.from)))?;
        let to = *lookup
            .get(e.to.as_str())
            .ok_or_else(|| config_err(&loc, format!("unknown state '{}'", e.to)))?;
        edges.push((from, to));
    }
    DirectedGraph::new(chain.states.clone(), edges)
}

fn build_affine_rates(
    which: &str,
    chain: &TableChain,
    slow_graph: &DirectedGraph,
) -> Result<Vec<AffineRate>> {
    let lookup: BTreeMap<&str, usize> = slow_graph
        .labels()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let n = slow_graph.n_vertices();
    let mut rates = Vec::with_capacity(chain.edges.len());
    for (i, e) in chain.edges.iter().enumerate() {
        let loc = format!("{which}.edges[{i}]");
        if !e.base.is_finite() || e.base < 0.0 {
            return Err(config_err(&loc, format!("negative or non-finite base {}", e.base)));
        }
        let mut coeffs = vec![0.0; n];
        for (state, &c) in &e.coeffs {
            let j = *lookup
                .get(state.as_str())
                .ok_or_else(|| config_err(&loc, format!("unknown coeff state '{state}'")))?;
            if !c.is_finite() {
                return Err(config_err(&loc, format!("non-finite coeff {c}")));
            }
            coeffs[j] = c;
        }
        // an affine function attains its minimum over the simplex at a corner
        for (j, &c) in coeffs.iter().enumerate() {
            if e.base + c < 0.0 {
                return Err(config_err(
                    &loc,
                    format!("rate goes negative at corner '{}'", slow_graph.label(j)),
                ));
            }
        }
        rates.push(AffineRate { base: e.base, coeffs });
    }
    Ok(rates)
}

fn build_env_masks(
    slow: &TableChain,
    fast_graph: &DirectedGraph,
) -> Result<Vec<Option<Vec<bool>>>> {
    let lookup: BTreeMap<&str, usize> = fast_graph
        .labels()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut masks = Vec::with_capacity(slow.edges.len());
    for (i, e) in slow.edges.iter().enumerate() {
        match &e.env_mask {
            None => masks.push(None),
            Some(names) => {
                let mut mask = vec![false; fast_graph.n_vertices()];
                for name in names {
                    let j = *lookup.get(name.as_str()).ok_or_else(|| {
                        config_err(
                            format!("slow.edges[{i}].env_mask"),
                            format!("unknown fast state '{name}'"),
                        )
                    })?;
                    mask[j] = true;
                }
                masks.push(Some(mask));
            }
        }
    }
    Ok(masks)
}

fn build_builtin(
    builtin: &str,
    params: &serde_json::Map<String, serde_json::Value>,
) -> Result<ModelSpec> {
    let getf = |key: &str, default: f64| -> Result<f64> {
        match params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| config_err(format!("params.{key}"), "expected a number")),
        }
    };
    match builtin {
        "retrial" => {
            let lambda = getf("lambda", 1.0)?;
            let alpha = getf("alpha", 2.0)?;
            let k = match params.get("K") {
                None => 3,
                Some(v) => v
                    .as_u64()
                    .ok_or_else(|| config_err("params.K", "expected a nonnegative integer"))?
                    as usize,
            };
            retrial_model(lambda, alpha, k)
        }
        "wlan" => {
            let p: Vec<f64> = match params.get("p") {
                None => vec![0.6, 0.3],
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| config_err("params.p", e.to_string()))?,
            };
            let a: Vec<Vec<u8>> = match params.get("A") {
                None => vec![vec![1]],
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| config_err("params.A", e.to_string()))?,
            };
            let interference = a
                .into_iter()
                .map(|row| row.into_iter().map(|x| x != 0).collect())
                .collect();
            wlan_model(p, interference)
        }
        other => Err(config_err("builtin", format!("unknown builtin '{other}'"))),
    }
}
