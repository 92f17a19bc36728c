//! JSON scenario files.
//!
//! Every key carries its unit: `_bytes`, `_bps` (bits per second, converted
//! to bytes per second on load), `_s` (seconds) or `_packets`. Unknown keys
//! are rejected. Policy parameters are optional and fall back to the
//! library defaults for the configured capacity.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use aqmlab::sim::{GatewaySpec, PolicyConfig, Scenario};
use aqmlab::traffic::{AimdSpec, SourceKind, SourceSpec};
use aqmlab::{Violation, Violations};
use serde::Deserialize;
use serde_json::Value;

pub const SEED_ENV: &str = "AQMLAB_SEED";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default = "default_sampling")]
    pub sampling_interval_s: f64,
    pub gateway: GatewayBlock,
    pub policy: PolicyBlock,
    pub sources: Vec<SourceBlock>,
    /// Used by `run` when no `-o` is given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_sampling() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayBlock {
    pub mu_bps: f64,
    pub capacity_bytes: u64,
    #[serde(default)]
    pub initial_backlog_bytes: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RedBlock {
    pub min_th_bytes: Option<f64>,
    pub max_th_bytes: Option<f64>,
    pub max_p: Option<f64>,
    pub w_q: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnBlock {
    pub q_opt_bytes: Option<f64>,
    pub t_const_s: Option<f64>,
    pub rate_time_constant_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyBlock {
    DropTail,
    Red(RedBlock),
    #[serde(alias = "gentle")]
    GentleRed(RedBlock),
    Fn(FnBlock),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceBlock {
    Poisson {
        rate_bps: f64,
        packet_size_bytes: u32,
        #[serde(default = "default_true")]
        ecn_capable: bool,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        feedback_delay_s: Option<f64>,
    },
    Cbr {
        rate_bps: f64,
        packet_size_bytes: u32,
        #[serde(default = "default_true")]
        ecn_capable: bool,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        feedback_delay_s: Option<f64>,
    },
    Aimd {
        rtt_s: f64,
        initial_window_packets: f64,
        max_window_packets: f64,
        packet_size_bytes: u32,
        #[serde(default = "default_true")]
        ecn_capable: bool,
        #[serde(default)]
        start_s: f64,
        #[serde(default)]
        feedback_delay_s: Option<f64>,
    },
}

impl PolicyBlock {
    fn to_config(&self, capacity: u64) -> PolicyConfig {
        match self {
            PolicyBlock::DropTail => PolicyConfig::DropTail,
            PolicyBlock::Red(b) | PolicyBlock::GentleRed(b) => {
                let gentle = matches!(self, PolicyBlock::GentleRed(_));
                let PolicyConfig::Red {
                    min_th,
                    max_th,
                    max_p,
                    w_q,
                    ..
                } = PolicyConfig::red_defaults(capacity, gentle)
                else {
                    unreachable!()
                };
                PolicyConfig::Red {
                    min_th: b.min_th_bytes.unwrap_or(min_th),
                    max_th: b.max_th_bytes.unwrap_or(max_th),
                    max_p: b.max_p.unwrap_or(max_p),
                    w_q: b.w_q.unwrap_or(w_q),
                    gentle,
                }
            }
            PolicyBlock::Fn(b) => {
                let PolicyConfig::Fn {
                    q_opt,
                    t_const,
                    rate_time_constant,
                } = PolicyConfig::fn_defaults(capacity)
                else {
                    unreachable!()
                };
                PolicyConfig::Fn {
                    q_opt: b.q_opt_bytes.unwrap_or(q_opt),
                    t_const: b.t_const_s.unwrap_or(t_const),
                    rate_time_constant: b.rate_time_constant_s.unwrap_or(rate_time_constant),
                }
            }
        }
    }
}

impl SourceBlock {
    fn to_spec(&self) -> SourceSpec {
        let (kind, size, ecn, start, delay) = match *self {
            SourceBlock::Poisson {
                rate_bps,
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            } => (
                SourceKind::Poisson {
                    rate: rate_bps / 8.0,
                },
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            ),
            SourceBlock::Cbr {
                rate_bps,
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            } => (
                SourceKind::Cbr {
                    rate: rate_bps / 8.0,
                },
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            ),
            SourceBlock::Aimd {
                rtt_s,
                initial_window_packets,
                max_window_packets,
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            } => (
                SourceKind::Aimd(AimdSpec {
                    rtt: rtt_s,
                    initial_window: initial_window_packets,
                    max_window: max_window_packets,
                }),
                packet_size_bytes,
                ecn_capable,
                start_s,
                feedback_delay_s,
            ),
        };
        let mut spec = SourceSpec::new(kind, size, ecn).starting_at(start);
        spec.feedback_delay = delay;
        spec
    }
}

impl ScenarioFile {
    /// Converts to a validated library scenario. Violations are reported
    /// with the file's key names.
    pub fn to_scenario(&self) -> Result<Scenario> {
        let scenario = Scenario {
            sources: self.sources.iter().map(SourceBlock::to_spec).collect(),
            gateway: GatewaySpec {
                mu: self.gateway.mu_bps / 8.0,
                capacity: self.gateway.capacity_bytes,
                policy: self.policy.to_config(self.gateway.capacity_bytes),
                initial_backlog: self.gateway.initial_backlog_bytes,
            },
            duration: self.duration_s,
            seed: self.seed,
            sampling_interval: self.sampling_interval_s,
        };
        scenario
            .validate()
            .map_err(|v| anyhow!("invalid scenario: {}", to_file_keys(v)))?;
        Ok(scenario)
    }
}

/// Parses a scenario document, reporting the JSON path of the offending key.
pub fn from_value(value: Value) -> Result<ScenarioFile> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            anyhow!("{}", e.inner())
        } else {
            anyhow!("{path}: {}", e.inner())
        }
    })
}

pub fn read_value(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads a scenario file and applies the seed override from the environment.
pub fn load(path: &Path) -> Result<ScenarioFile> {
    let mut file =
        from_value(read_value(path)?).with_context(|| format!("in {}", path.display()))?;
    if let Some(seed) = seed_override()? {
        file.seed = seed;
    }
    Ok(file)
}

pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned 64-bit integer, got {s:?}")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

fn file_key(leaf: &str) -> &str {
    match leaf {
        "duration" => "duration_s",
        "sampling_interval" => "sampling_interval_s",
        "mu" => "mu_bps",
        "capacity" => "capacity_bytes",
        "initial_backlog" => "initial_backlog_bytes",
        "q_opt" => "q_opt_bytes",
        "t_const" => "t_const_s",
        "rate_time_constant" | "ewma_time_constant" => "rate_time_constant_s",
        "min_th" => "min_th_bytes",
        "max_th" => "max_th_bytes",
        "rate" => "rate_bps",
        "rtt" => "rtt_s",
        "initial_window" => "initial_window_packets",
        "max_window" => "max_window_packets",
        "packet_size" => "packet_size_bytes",
        "start" => "start_s",
        "feedback_delay" => "feedback_delay_s",
        other => other,
    }
}

/// Rewrites library field paths (`gateway.policy.q_opt`) into scenario-file
/// paths (`policy.q_opt_bytes`).
pub fn to_file_keys(v: Violations) -> Violations {
    Violations(
        v.0.into_iter()
            .map(|Violation { field, message }| {
                let field = field
                    .strip_prefix("gateway.policy.")
                    .map_or(field.clone(), |rest| format!("policy.{rest}"));
                let (head, leaf) = field
                    .rsplit_once('.')
                    .map_or(("", field.as_str()), |(h, l)| (h, l));
                let key = file_key(leaf);
                let field = if head.is_empty() {
                    key.to_string()
                } else {
                    format!("{head}.{key}")
                };
                Violation { field, message }
            })
            .collect(),
    )
}

/// Sets the scalar at a dotted path such as `policy.t_const_s` or
/// `sources[0].rate_bps`. The parent object must exist; the final key may
/// be absent (optional parameters). Whether the key is allowed is decided
/// by the schema when the edited document is parsed.
pub fn set_path(doc: &mut Value, path: &str, new: Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if path.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(anyhow!("malformed parameter path {path:?}"));
    }
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let (name, index) = split_index(seg)
            .ok_or_else(|| anyhow!("malformed path segment {seg:?} in {path:?}"))?;
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("{path}: {name:?} is not inside an object"))?;
        if last && index.is_none() {
            if let Some(old) = obj.get(name) {
                if old.is_object() || old.is_array() {
                    return Err(anyhow!("{path} names a block, not a scalar"));
                }
            }
            obj.insert(name.to_string(), new);
            return Ok(());
        }
        let child = obj
            .get_mut(name)
            .ok_or_else(|| anyhow!("unknown parameter path {path:?}: no key {name:?}"))?;
        cur = match index {
            Some(k) => {
                let arr = child
                    .as_array_mut()
                    .ok_or_else(|| anyhow!("{path}: {name:?} is not a list"))?;
                let len = arr.len();
                let item = arr.get_mut(k).ok_or_else(|| {
                    anyhow!("{path}: index {k} out of range for {name:?} (length {len})")
                })?;
                if last {
                    return Err(anyhow!("{path} names a list entry, not a scalar"));
                }
                item
            }
            None => child,
        };
    }
    unreachable!("loop returns on the last segment")
}

fn split_index(seg: &str) -> Option<(&str, Option<usize>)> {
    match seg.split_once('[') {
        None => Some((seg, None)),
        Some((name, rest)) => {
            let idx = rest.strip_suffix(']')?.parse().ok()?;
            (!name.is_empty()).then_some((name, Some(idx)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc() -> Value {
        json!({
            "duration_s": 5.0,
            "seed": 3,
            "gateway": { "mu_bps": 1_000_000.0, "capacity_bytes": 40_000 },
            "policy": { "kind": "fn" },
            "sources": [
                { "kind": "cbr", "rate_bps": 500_000.0, "packet_size_bytes": 1000 },
                { "kind": "aimd", "rtt_s": 0.05, "initial_window_packets": 1, "max_window_packets": 64,
                  "packet_size_bytes": 1500, "ecn_capable": false }
            ]
        })
    }

    #[test]
    fn converts_units_and_fills_defaults() {
        let s = from_value(doc()).unwrap().to_scenario().unwrap();
        assert_eq!(s.gateway.mu, 125_000.0);
        assert_eq!(s.gateway.policy, PolicyConfig::fn_defaults(40_000));
        assert_eq!(s.sources[0].kind, SourceKind::Cbr { rate: 62_500.0 });
        assert!(!s.sources[1].ecn_capable);
        assert_eq!(s.sampling_interval, 0.1);
    }

    #[test]
    fn unknown_keys_are_named() {
        let mut d = doc();
        d["gateway"]["mu_mbps"] = json!(1);
        let err = from_value(d).unwrap_err().to_string();
        assert!(err.contains("mu_mbps"), "{err}");

        let mut d = doc();
        d["policy"]["q_opt"] = json!(1);
        let err = from_value(d).unwrap_err().to_string();
        assert!(err.contains("q_opt"), "{err}");

        let mut d = doc();
        d["sources"][0]["rate"] = json!(1);
        let err = from_value(d).unwrap_err().to_string();
        assert!(err.contains("rate"), "{err}");
    }

    #[test]
    fn violations_use_file_keys() {
        let mut d = doc();
        d["policy"]["q_opt_bytes"] = json!(40_000);
        d["sources"][1]["rtt_s"] = json!(0.0);
        let err = from_value(d)
            .unwrap()
            .to_scenario()
            .unwrap_err()
            .to_string();
        assert!(err.contains("policy.q_opt_bytes"), "{err}");
        assert!(err.contains("sources[1].rtt_s"), "{err}");
    }

    #[test]
    fn set_path_edits_scalars_only() {
        let mut d = doc();
        set_path(&mut d, "sources[0].rate_bps", json!(2.0)).unwrap();
        assert_eq!(d["sources"][0]["rate_bps"], json!(2.0));
        set_path(&mut d, "policy.t_const_s", json!(0.01)).unwrap();
        assert_eq!(d["policy"]["t_const_s"], json!(0.01));
        assert!(set_path(&mut d, "sources[9].rate_bps", json!(1)).is_err());
        assert!(set_path(&mut d, "nope.rate_bps", json!(1)).is_err());
        assert!(set_path(&mut d, "gateway", json!(1)).is_err());
        assert!(set_path(&mut d, "sources[0]", json!(1)).is_err());
        assert!(set_path(&mut d, "a..b", json!(1)).is_err());
    }
}
