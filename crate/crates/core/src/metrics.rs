//! Q-Error, P-Error, nearest-rank percentiles and Pearson correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::CardinalityMap;
use crate::planner::{ppc, CostParams, PlannerError};
use crate::queryir::Query;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    EmptyInput,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a series has zero variance")]
    DegenerateVariance,
    #[error("optimal plan has zero true cost")]
    ZeroCost,
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QError {
    pub value: f64,
    /// The true cardinality was 0 and was clamped to 1.
    pub zero_truth: bool,
}

/// `max(est/true, true/est)`, with both sides floored at one row.
pub fn q_error(estimated: f64, truth: f64) -> QError {
    let zero_truth = truth < 1.0;
    let t = truth.max(1.0);
    let e = estimated.max(1.0);
    QError {
        value: (e / t).max(t / e),
        zero_truth,
    }
}

/// Ratio of the true cost of the plan picked under `estimated` to the true
/// cost of the plan picked under `truth`.
pub fn p_error(
    query: &Query,
    estimated: &CardinalityMap,
    truth: &CardinalityMap,
    params: &CostParams,
) -> Result<f64, MetricError> {
    let num = ppc(query, estimated, truth, params)?;
    let den = ppc(query, truth, truth, params)?;
    if num == den {
        return Ok(1.0);
    }
    if den <= 0.0 {
        return Err(MetricError::ZeroCost);
    }
    Ok(num / den)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, MetricError> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricError::BadPercentile(p));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// p50/p90/p99 summary of one method's error values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub method: String,
    pub values: Vec<f64>,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

impl ErrorDistribution {
    pub fn new(method: impl Into<String>, values: Vec<f64>) -> Result<Self, MetricError> {
        Ok(ErrorDistribution {
            method: method.into(),
            p50: percentile(&values, 50.0)?,
            p90: percentile(&values, 90.0)?,
            p99: percentile(&values, 99.0)?,
            values,
        })
    }
}
