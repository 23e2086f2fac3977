//! TOML run configuration. Relative paths inside a config file resolve
//! against the file's directory.

use std::path::{Path, PathBuf};

use ensemblex::agents::ContextBudget;
use ensemblex::simkit::SimParams;
use ensemblex::{SamplingConfig, TopologyConfig, TopologyMode};
use ensemblex_gateway::{CacheMode, EndpointConfig, RetryPolicy};
use serde::{Deserialize, Serialize};

use crate::submission::AbstainPolicy;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub mode: TopologyMode,
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub budget_tokens: usize,
    pub executor_temperature: f64,
    pub analyst_temperature: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            mode: TopologyMode::StratifiedEnsemble,
            n1: 2,
            n2: 3,
            k: TopologyConfig::DEFAULT_K,
            budget_tokens: ContextBudget::DEFAULT_MAX_TOKENS,
            executor_temperature: SamplingConfig::DEFAULT_TEMPERATURE,
            analyst_temperature: SamplingConfig::DEFAULT_TEMPERATURE,
        }
    }
}

impl TopologySection {
    pub fn to_config(&self) -> Result<TopologyConfig> {
        let mut cfg = TopologyConfig::new(self.mode, self.n1, self.n2).with_k(self.k);
        cfg.budget = ContextBudget::new(self.budget_tokens)?;
        cfg.sampling_exec = SamplingConfig::new(self.executor_temperature, 1)?;
        cfg.sampling_analyst = SamplingConfig::new(self.analyst_temperature, 1)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveBackend {
    pub executor_endpoint: String,
    pub analyst_endpoint: String,
    #[serde(default)]
    pub analyst_search: bool,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_mode: CacheMode,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_max_output_tokens() -> u32 {
    2048
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Simulated {
        #[serde(default)]
        sim: SimParams,
    },
    Live(LiveBackend),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Simulated {
            sim: SimParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub abstain_policy: AbstainPolicy,
    pub parallelism: usize,
    pub rules: Option<PathBuf>,
    pub topology: TopologySection,
    pub backend: BackendConfig,
    pub endpoints: Vec<EndpointConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: None,
            out: None,
            abstain_policy: AbstainPolicy::default(),
            parallelism: 8,
            rules: None,
            topology: TopologySection::default(),
            backend: BackendConfig::default(),
            endpoints: Vec::new(),
        }
    }
}

fn rebase(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.dataset);
        rebase(base, &mut cfg.out);
        rebase(base, &mut cfg.rules);
        if let BackendConfig::Live(live) = &mut cfg.backend {
            rebase(base, &mut live.cache_dir);
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.topology.to_config()?;
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        match &self.dataset {
            None => return Err(CliError::Usage("no dataset given (--dataset or `dataset`)".into())),
            Some(p) if !p.is_file() => {
                return Err(CliError::Config(format!("dataset {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(rules) = &self.rules {
            if !rules.is_file() {
                return Err(CliError::Config(format!("rules file {} does not exist", rules.display())));
            }
        }
        match &self.backend {
            BackendConfig::Simulated { sim } => sim.validate()?,
            BackendConfig::Live(live) => {
                for id in [&live.executor_endpoint, &live.analyst_endpoint] {
                    if !self.endpoints.iter().any(|e| &e.id == id) {
                        return Err(CliError::Config(format!(
                            "live backend refers to endpoint `{id}`, which has no [[endpoints]] entry"
                        )));
                    }
                }
                if live.cache_mode != CacheMode::Off && live.cache_dir.is_none() {
                    return Err(CliError::Config(format!(
                        "cache_mode {:?} needs a cache_dir",
                        live.cache_mode
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_live_config_parses() {
        let cfg = RunConfig::from_toml(
            r#"
seed = 7
dataset = "toy.jsonl"
abstain_policy = "leave_blank"

[topology]
mode = "pooling"
n1 = 6
n2 = 1
k = 1

[backend]
kind = "live"
executor_endpoint = "exec"
analyst_endpoint = "ana"
cache_dir = "cache"
cache_mode = "strict-replay"

[backend.retry]
max_attempts = 3
base_delay = 100
max_delay = 1000

[[endpoints]]
id = "exec"
base_url = "http://localhost:1"
model = "m"

[[endpoints]]
id = "ana"
base_url = "http://localhost:1"
model = "m"
rpm = 10
"#,
        )
        .unwrap();
        assert_eq!(cfg.topology.mode, TopologyMode::GlobalPooling);
        assert_eq!(cfg.abstain_policy, AbstainPolicy::LeaveBlank);
        let BackendConfig::Live(live) = &cfg.backend else { panic!() };
        assert_eq!(live.cache_mode, CacheMode::StrictReplay);
        assert_eq!(live.retry.max_attempts, 3);
        assert_eq!(cfg.endpoints[1].rpm, 10);
    }

    #[test]
    fn simulated_is_the_default_backend() {
        let cfg = RunConfig::from_toml("[backend]\nkind = \"simulated\"\n[backend.sim]\nq = 0.5\n").unwrap();
        let BackendConfig::Simulated { sim } = cfg.backend else { panic!() };
        assert_eq!(sim.q, 0.5);
        assert_eq!(sim.a_with, 0.95);
        assert_eq!(RunConfig::from_toml("").unwrap().backend, BackendConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
    }

    #[test]
    fn live_needs_endpoint_records() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        std::fs::write(&data, "").unwrap();
        let mut cfg = RunConfig {
            dataset: Some(data),
            ..RunConfig::default()
        };
        cfg.validate().unwrap();
        cfg.backend = BackendConfig::Live(LiveBackend {
            executor_endpoint: "e".into(),
            analyst_endpoint: "a".into(),
            analyst_search: false,
            max_output_tokens: 10,
            cache_dir: None,
            cache_mode: CacheMode::Off,
            retry: RetryPolicy::default(),
        });
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "dataset = \"d.jsonl\"\nout = \"/abs/out.csv\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.dataset.unwrap(), dir.path().join("d.jsonl"));
        assert_eq!(cfg.out.unwrap(), PathBuf::from("/abs/out.csv"));
    }
}
