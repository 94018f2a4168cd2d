//! Run configuration: a TOML file plus environment overrides.

use std::path::Path;

use anyhow::{Context, Result};
use cardbench_core::estimators::EstimatorConfig;
use cardbench_core::planner::CostParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "CARDBENCH_SEED";
pub const WORKERS_ENV: &str = "CARDBENCH_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 picks the number of CPUs.
    pub workers: usize,
    pub estimators: EstimatorConfig,
    pub cost: CostParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            workers: 0,
            estimators: EstimatorConfig::default(),
            cost: CostParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("invalid config")?;
        cfg.cost.validate()?;
        Ok(cfg)
    }

    /// Reads `path` if given, then applies `CARDBENCH_SEED` and
    /// `CARDBENCH_WORKERS`.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v.trim().parse().with_context(|| format!("{SEED_ENV}={v}"))?;
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            cfg.workers = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v}"))?;
        }
        Ok(cfg)
    }
}

/// Seed for one estimate call, independent of scheduling.
pub fn derive_seed(global: u64, query: &str, method: &str, subplan: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    for part in [query, method, subplan] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg =
            RunConfig::from_toml("seed = 7\n[estimators]\nsample_size = 500\n[cost]\nsort_factor = 3.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.estimators.sample_size, 500);
        assert_eq!(cfg.estimators.walks, 10_000);
        assert_eq!(cfg.cost.sort_factor, 3.0);
        assert_eq!(cfg.cost.cpu_tuple_cost, 0.01);
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(RunConfig::from_toml("sead = 1").is_err());
        assert!(RunConfig::from_toml("[cost]\nseq_page_cost = -1.0").is_err());
    }

    #[test]
    fn seeds_separate_fields() {
        assert_ne!(derive_seed(1, "ab", "c", "d"), derive_seed(1, "a", "bc", "d"));
        assert_eq!(derive_seed(1, "q", "m", "k"), derive_seed(1, "q", "m", "k"));
        assert_ne!(derive_seed(1, "q", "m", "k"), derive_seed(2, "q", "m", "k"));
    }
}
