//! Cardinality estimators.
//!
//! Every method is built once over a [`Catalog`] and then answers
//! [`CardinalityEstimator::estimate`] for sub-plan queries. Built models are
//! immutable; estimates depend only on the model, the sub-plan and the seed.

mod buckets;
pub mod chowliu;
pub mod histogram;
pub mod pessimistic;
pub mod sampling;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ColumnRef};
use crate::oracle::{execute_count, OracleError};
use crate::queryir::SubPlanQuery;

pub use buckets::{build_buckets, Bucket};
pub use chowliu::{ChowLiuModel, FanoutTable, TableBayesNet};
pub use histogram::{ColumnHistogram, HistogramModel};
pub use pessimistic::DegreeBoundModel;
pub use sampling::{UniSampleModel, WanderJoinModel};

const MODEL_MAGIC: &[u8; 8] = b"CBMODEL\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("unsupported estimation method `{0}`")]
    UnsupportedMethod(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("column `{table}.{column}` is not modeled")]
    UnmodeledColumn { table: String, column: String },
    #[error("table `{0}` is not covered by the model")]
    UnmodeledTable(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("model file: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "true")]
    TrueCard,
    #[serde(rename = "indep_hist")]
    IndepHist,
    #[serde(rename = "uni_sample")]
    UniSample,
    #[serde(rename = "wj_sample")]
    WjSample,
    #[serde(rename = "pess_bound")]
    PessBound,
    #[serde(rename = "chow_liu")]
    ChowLiu,
}

impl Method {
    pub const ESTIMATORS: [Method; 5] = [
        Method::IndepHist,
        Method::UniSample,
        Method::WjSample,
        Method::PessBound,
        Method::ChowLiu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TrueCard => "true",
            Method::IndepHist => "indep_hist",
            Method::UniSample => "uni_sample",
            Method::WjSample => "wj_sample",
            Method::PessBound => "pess_bound",
            Method::ChowLiu => "chow_liu",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Method::TrueCard]
            .into_iter()
            .chain(Method::ESTIMATORS)
            .find(|m| m.name() == s)
            .ok_or_else(|| EstimateError::UnsupportedMethod(s.to_string()))
    }
}

/// Build-time parameters of all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub histogram_buckets: usize,
    pub mcv_count: usize,
    pub sample_size: usize,
    pub walks: usize,
    /// Forces the wander-join walk to start at this table when present in
    /// the sub-plan.
    pub wj_root: Option<String>,
    pub chow_liu_bins: usize,
    /// `table.column` names left out of the Chow-Liu models.
    pub chow_liu_exclude: Vec<String>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            histogram_buckets: 100,
            mcv_count: 10,
            sample_size: 10_000,
            walks: 10_000,
            wj_root: None,
            chow_liu_bins: 64,
            chow_liu_exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub build_seconds: f64,
    pub model_bytes: u64,
}

/// The estimator interface. New methods plug in by implementing it.
pub trait CardinalityEstimator: Send + Sync {
    fn name(&self) -> &str;

    fn build_stats(&self) -> BuildStats;

    /// Raw estimate, finite and non-negative. Deterministic for a fixed seed.
    fn estimate(&self, subplan: &SubPlanQuery, seed: u64) -> Result<f64, EstimateError>;
}

/// Floor applied to estimates before they reach the planner.
pub fn floor_estimate(raw: f64) -> f64 {
    if raw.is_finite() {
        raw.max(1.0)
    } else if raw == f64::INFINITY {
        f64::MAX
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelState {
    TrueCard,
    IndepHist(HistogramModel),
    UniSample(UniSampleModel),
    WjSample(WanderJoinModel),
    PessBound(DegreeBoundModel),
    ChowLiu(ChowLiuModel),
}

impl ModelState {
    pub fn method(&self) -> Method {
        match self {
            ModelState::TrueCard => Method::TrueCard,
            ModelState::IndepHist(_) => Method::IndepHist,
            ModelState::UniSample(_) => Method::UniSample,
            ModelState::WjSample(_) => Method::WjSample,
            ModelState::PessBound(_) => Method::PessBound,
            ModelState::ChowLiu(_) => Method::ChowLiu,
        }
    }
}

/// A built-in estimator: model state plus the catalog it was built over.
pub struct Estimator {
    state: ModelState,
    catalog: Arc<Catalog>,
    stats: BuildStats,
}

impl Estimator {
    pub fn method(&self) -> Method {
        self.state.method()
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// Versioned binary form: magic, little-endian version, bincode payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        serialize_state(&self.state)
    }

    pub fn from_bytes(bytes: &[u8], catalog: Arc<Catalog>) -> Result<Estimator, EstimateError> {
        if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
            return Err(EstimateError::Model("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(EstimateError::Model(format!("unsupported version {version}")));
        }
        let state: ModelState = bincode::deserialize(&bytes[12..]).map_err(|e| EstimateError::Model(e.to_string()))?;
        Ok(Estimator {
            state,
            catalog,
            stats: BuildStats {
                build_seconds: 0.0,
                model_bytes: bytes.len() as u64,
            },
        })
    }
}

fn serialize_state(state: &ModelState) -> Vec<u8> {
    let mut out = MODEL_MAGIC.to_vec();
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend(bincode::serialize(state).expect("model state serializes"));
    out
}

impl CardinalityEstimator for Estimator {
    fn name(&self) -> &str {
        self.method().name()
    }

    fn build_stats(&self) -> BuildStats {
        self.stats
    }

    fn estimate(&self, subplan: &SubPlanQuery, seed: u64) -> Result<f64, EstimateError> {
        let cat = &self.catalog;
        let est = match &self.state {
            ModelState::TrueCard => execute_count(subplan, cat)? as f64,
            ModelState::IndepHist(m) => m.estimate(subplan)?,
            ModelState::UniSample(m) => m.estimate(cat, subplan, seed)?,
            ModelState::WjSample(m) => m.estimate(cat, subplan, seed)?,
            ModelState::PessBound(m) => m.estimate(cat, subplan)?,
            ModelState::ChowLiu(m) => m.estimate(subplan)?,
        };
        debug_assert!(est.is_finite() && est >= 0.0, "{est}");
        Ok(est)
    }
}

/// Builds the model for `method` and records build time and serialized size.
pub fn build(method: Method, catalog: Arc<Catalog>, config: &EstimatorConfig) -> Result<Estimator, EstimateError> {
    let start = Instant::now();
    let state = match method {
        Method::TrueCard => ModelState::TrueCard,
        Method::IndepHist => ModelState::IndepHist(HistogramModel::build(&catalog, config)),
        Method::UniSample => ModelState::UniSample(UniSampleModel::build(config)),
        Method::WjSample => ModelState::WjSample(WanderJoinModel::build(&catalog, config)),
        Method::PessBound => ModelState::PessBound(DegreeBoundModel::build(&catalog)),
        Method::ChowLiu => ModelState::ChowLiu(ChowLiuModel::build(&catalog, config)?),
    };
    let build_seconds = start.elapsed().as_secs_f64();
    let model_bytes = serialize_state(&state).len() as u64;
    Ok(Estimator {
        state,
        catalog,
        stats: BuildStats {
            build_seconds,
            model_bytes,
        },
    })
}

/// Classic join-uniformity combination along the sub-plan's join tree:
/// `|A ⋈ B| = |A_f| |B_f| / max(V_f(A.k), V_f(B.k))` per edge, where
/// `V_f = max(1, min(V, filtered rows))`.
pub(crate) fn uniformity_join(
    subplan: &SubPlanQuery,
    filtered: &BTreeMap<String, f64>,
    distinct: impl Fn(&ColumnRef) -> f64,
) -> f64 {
    let mut est: f64 = subplan.tables().iter().map(|t| filtered[t]).product();
    for e in &subplan.join_edges {
        let vf = |c: &ColumnRef| distinct(c).min(filtered[&c.table]).max(1.0);
        est /= vf(&e.left).max(vf(&e.right));
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ESTIMATORS {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("true".parse::<Method>().unwrap(), Method::TrueCard);
        assert!(matches!(
            "mscn".parse::<Method>(),
            Err(EstimateError::UnsupportedMethod(_))
        ));
    }

    #[test]
    fn floor() {
        assert_eq!(floor_estimate(0.0), 1.0);
        assert_eq!(floor_estimate(0.3), 1.0);
        assert_eq!(floor_estimate(12.5), 12.5);
        assert_eq!(floor_estimate(f64::NAN), 1.0);
    }
}
