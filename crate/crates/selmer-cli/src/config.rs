//! Run configuration: command-line flags merged over a flat `key=value` file.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Law of ker(g − 1) on the selected cosets.
    KernelDist,
    /// Rudvalis–Shinoda law of dim ker(g − 1) on the full split group.
    RsExact,
    /// M_j = ∏ (ℓ^i + 1), or its product over the primes of a squarefree n.
    Moments,
    /// Orbits of the orthogonal group on V^m.
    OrbitCount,
    /// Generating function of dim ker(g − 1) on a named coset.
    CosetPgf,
    /// Joint rank/Selmer law of the BKLPR model.
    BklprSample,
    /// Markov property of the corank chain.
    MarkovVerify,
    /// Kernel model against the BKLPR model.
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::KernelDist => "kernel-dist",
            Command::RsExact => "rs-exact",
            Command::Moments => "moments",
            Command::OrbitCount => "orbit-count",
            Command::CosetPgf => "coset-pgf",
            Command::BklprSample => "bklpr-sample",
            Command::MarkovVerify => "markov-verify",
            Command::Compare => "compare",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "selmer", version, about = "Random kernel, Rudvalis–Shinoda and BKLPR models of Selmer groups")]
pub struct Cli {
    pub command: Command,
    /// Flat key=value file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RunConfig,
}

/// Every setting of a run. Unset values fall back to per-command defaults.
#[derive(clap::Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Modulus n.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Prime ℓ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<u64>,
    /// Exponent e (working modulus ℓᵉ).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<u32>,
    /// Height d; the half-rank is 6d − 2.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    /// Half-rank, matrix size, or tuple length depending on the command.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Half-rank of the group acted on (orbit-count, coset-pgf).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<u32>,
    /// Prime power q selecting the spinor coset through [q^{d−1}].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    /// Explicit square classes instead of q, e.g. "3:1,5:0" (1 = nonsquare).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<String>,
    /// Dickson target with --classes: zero, one, diagonal or any.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dickson: Option<String>,
    /// Named coset: full, dickson-kernel, dickson-complement, omega, a, b, c.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coset: Option<String>,
    /// exact, mc or closed-form.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Moment order.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    /// Truncation depth of infinite products.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    /// Largest group order that may be enumerated.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// Rejection rounds per coset sample.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retry_cap: Option<usize>,
    /// Torsion sampler of bklpr-sample: alternating or intersection.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler: Option<String>,
    /// Extra precision of the alternating sampler.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer: Option<u32>,
    /// Source of chains for markov-verify: exact, kernel or bklpr.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Emit per-sample chains d_1, …, d_e (bklpr-sample with the intersection sampler).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<bool>,
    /// Report the joint (rank, class) law instead of the class law.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<bool>,
    /// Half-rank of the BKLPR side of compare.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bklpr_m: Option<usize>,
    /// Absolute TV threshold for compare; without it a statistical bound is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_max: Option<f64>,
    /// Factor of the statistical bound for compare.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    /// json or csv.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Output file instead of stdout.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

/// Parse a flat `key=value` file. Blank lines and lines starting with `#`
/// are ignored; keys may use `-` or `_`.
pub fn parse_config_text(text: &str) -> Result<Map<String, Value>, String> {
    let mut map = Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let key = k.trim().replace('-', "_");
        let v = v.trim();
        let value = if let Ok(x) = v.parse::<u64>() {
            Value::from(x)
        } else if let Ok(x) = v.parse::<f64>() {
            Value::from(x)
        } else if let Ok(b) = v.parse::<bool>() {
            Value::Bool(b)
        } else {
            Value::String(v.to_string())
        };
        if map.insert(key.clone(), value).is_some() {
            return Err(format!("line {}: duplicate key {key}", i + 1));
        }
    }
    Ok(map)
}

impl RunConfig {
    /// Fill every setting the flags leave unset from `file`.
    pub fn merged_with(&self, file: Map<String, Value>) -> Result<RunConfig, String> {
        let mut base = match serde_json::to_value(self).map_err(|e| e.to_string())? {
            Value::Object(m) => m,
            _ => unreachable!("a struct serializes to an object"),
        };
        for (k, v) in file {
            if k == "threads" || k == "out" {
                continue;
            }
            match base.get(&k) {
                Some(Value::Null) | None => {
                    base.insert(k, v);
                }
                Some(_) => {}
            }
        }
        let mut merged: RunConfig = serde_json::from_value(Value::Object(base)).map_err(|e| format!("config: {e}"))?;
        merged.threads = self.threads;
        merged.out = self.out.clone();
        Ok(merged)
    }
}

/// Execution-only settings from the file, which are not part of the serialized config.
pub fn exec_settings(file: &Map<String, Value>) -> Result<(Option<usize>, Option<PathBuf>), String> {
    let threads = match file.get("threads") {
        None => None,
        Some(v) => Some(v.as_u64().ok_or("config: threads must be a positive integer")? as usize),
    };
    let out = match file.get("out") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err("config: out must be a path".into()),
    };
    Ok((threads, out))
}
