//! Schedule spec strings: `paper-sec4`, `paper-sec5`, `identity:n=3`,
//! `arc-balanced:n=3,seed=7,...`, `cut-balanced:n=4,seed=7,...`, `file:PATH`
//! (explicit matrices), and `config:PATH` (generator parameters as JSON,
//! including explicit arc or pair topologies).

use anyhow::{anyhow, bail, Context, Result};
use consensus_core::schedule::{
    load_schedule, ArcBalancedConfig, CutBalancedConfig, WeightSchedule,
};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;

/// Generator parameters as a JSON document. Node indices are 1-based, like
/// everywhere else in the external interfaces.
#[derive(Debug, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
enum GeneratorFile {
    ArcBalanced {
        n: usize,
        seed: u64,
        #[serde(default)]
        t0: u64,
        #[serde(default = "default_floor")]
        min_self_weight: f64,
        #[serde(default = "default_ratio")]
        ratio_bound: f64,
        #[serde(default = "default_arc_window")]
        window: u64,
        /// Influence arcs `[from, to]`; defaults to a star rooted at node 1.
        persistent_arcs: Option<Vec<(usize, usize)>>,
        transient_arcs: Option<Vec<(usize, usize)>>,
        #[serde(default = "default_transient_cycles")]
        transient_cycles: u64,
    },
    CutBalanced {
        n: usize,
        seed: u64,
        #[serde(default)]
        t0: u64,
        #[serde(default = "default_floor")]
        min_self_weight: f64,
        #[serde(default = "default_ratio")]
        ratio_bound: f64,
        #[serde(default = "default_cut_window")]
        window: u64,
        /// Undirected pairs `[a, b]`; defaults to the path 1-2-..-n.
        pairs: Option<Vec<(usize, usize)>>,
        transient_pairs: Option<Vec<(usize, usize)>>,
        #[serde(default = "default_transient_cycles")]
        transient_cycles: u64,
    },
}

fn default_floor() -> f64 {
    0.4
}
fn default_ratio() -> f64 {
    2.0
}
fn default_arc_window() -> u64 {
    2
}
fn default_cut_window() -> u64 {
    3
}
fn default_transient_cycles() -> u64 {
    40
}

fn to_zero_based(arcs: Vec<(usize, usize)>) -> Result<Vec<(usize, usize)>> {
    arcs.into_iter()
        .map(|(a, b)| {
            if a == 0 || b == 0 {
                bail!("node indices in config files are 1-based");
            }
            Ok((a - 1, b - 1))
        })
        .collect()
}

fn load_generator_config(path: &Path) -> Result<WeightSchedule> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading generator config {}", path.display()))?;
    let file: GeneratorFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing generator config {}", path.display()))?;
    match file {
        GeneratorFile::ArcBalanced {
            n,
            seed,
            t0,
            min_self_weight,
            ratio_bound,
            window,
            persistent_arcs,
            transient_arcs,
            transient_cycles,
        } => {
            let mut config = ArcBalancedConfig::star(n, seed);
            config.t0 = t0;
            config.min_self_weight = min_self_weight;
            config.ratio_bound = ratio_bound;
            config.window = window;
            config.transient_cycles = transient_cycles;
            if let Some(arcs) = persistent_arcs {
                config.persistent_arcs = to_zero_based(arcs)?;
            }
            if let Some(arcs) = transient_arcs {
                config.transient_arcs = to_zero_based(arcs)?;
            }
            Ok(WeightSchedule::arc_balanced(config)?)
        }
        GeneratorFile::CutBalanced {
            n,
            seed,
            t0,
            min_self_weight,
            ratio_bound,
            window,
            pairs,
            transient_pairs,
            transient_cycles,
        } => {
            let mut config = CutBalancedConfig::path(n, seed);
            config.t0 = t0;
            config.min_self_weight = min_self_weight;
            config.ratio_bound = ratio_bound;
            config.window = window;
            config.transient_cycles = transient_cycles;
            if let Some(p) = pairs {
                config.pairs = to_zero_based(p)?;
            }
            if let Some(p) = transient_pairs {
                config.transient_pairs = to_zero_based(p)?;
            }
            Ok(WeightSchedule::cut_balanced(config)?)
        }
    }
}

fn parse_params(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("bad parameter {part:?}, expected key=value"))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn take<T: std::str::FromStr>(
    params: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match params.remove(key) {
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!("parameter {key}={v}: {e}")),
        None => Ok(None),
    }
}

fn reject_unknown(params: BTreeMap<String, String>) -> Result<()> {
    if let Some(key) = params.into_keys().next() {
        bail!("unknown schedule parameter {key:?}");
    }
    Ok(())
}

pub fn parse_schedule(spec: &str) -> Result<WeightSchedule> {
    if spec == "paper-sec4" {
        return Ok(WeightSchedule::four_agent_sorted_example());
    }
    if spec == "paper-sec5" {
        return Ok(WeightSchedule::three_agent_counterexample());
    }
    if let Some(path) = spec.strip_prefix("file:") {
        return load_schedule(Path::new(path))
            .with_context(|| format!("loading schedule file {path}"));
    }
    if let Some(path) = spec.strip_prefix("config:") {
        return load_generator_config(Path::new(path));
    }
    if let Some(rest) = spec.strip_prefix("identity:") {
        let mut params = parse_params(rest)?;
        let n: usize = take(&mut params, "n")?.ok_or_else(|| anyhow!("identity needs n"))?;
        let t0: u64 = take(&mut params, "t0")?.unwrap_or(0);
        reject_unknown(params)?;
        return Ok(WeightSchedule::identity(n, t0));
    }
    if let Some(rest) = spec.strip_prefix("arc-balanced:") {
        let mut params = parse_params(rest)?;
        let n: usize = take(&mut params, "n")?.ok_or_else(|| anyhow!("arc-balanced needs n"))?;
        let seed: u64 =
            take(&mut params, "seed")?.ok_or_else(|| anyhow!("arc-balanced needs seed"))?;
        let mut config = ArcBalancedConfig::star(n, seed);
        if let Some(k) = take(&mut params, "k")? {
            config.ratio_bound = k;
        }
        if let Some(l) = take(&mut params, "l")? {
            config.window = l;
        }
        if let Some(eta) = take(&mut params, "eta")? {
            config.min_self_weight = eta;
        }
        if let Some(t0) = take(&mut params, "t0")? {
            config.t0 = t0;
        }
        if let Some(cycles) = take(&mut params, "transient_cycles")? {
            config.transient_cycles = cycles;
        }
        reject_unknown(params)?;
        return Ok(WeightSchedule::arc_balanced(config)?);
    }
    if let Some(rest) = spec.strip_prefix("cut-balanced:") {
        let mut params = parse_params(rest)?;
        let n: usize = take(&mut params, "n")?.ok_or_else(|| anyhow!("cut-balanced needs n"))?;
        let seed: u64 =
            take(&mut params, "seed")?.ok_or_else(|| anyhow!("cut-balanced needs seed"))?;
        let mut config = CutBalancedConfig::path(n, seed);
        if let Some(k) = take(&mut params, "k")? {
            config.ratio_bound = k;
        }
        if let Some(l) = take(&mut params, "l")? {
            config.window = l;
        }
        if let Some(eta) = take(&mut params, "eta")? {
            config.min_self_weight = eta;
        }
        if let Some(t0) = take(&mut params, "t0")? {
            config.t0 = t0;
        }
        if let Some(cycles) = take(&mut params, "transient_cycles")? {
            config.transient_cycles = cycles;
        }
        reject_unknown(params)?;
        return Ok(WeightSchedule::cut_balanced(config)?);
    }
    bail!(
        "unrecognized schedule spec {spec:?}; expected paper-sec4, paper-sec5, \
         identity:n=..., arc-balanced:n=...,seed=..., cut-balanced:n=...,seed=..., \
         file:PATH, or config:PATH"
    )
}
