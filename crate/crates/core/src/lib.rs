//! Cardinality estimation benchmark core: catalog, query IR, exact counting,
//! estimators, a cost-based planner and error metrics.

pub mod catalog;
pub mod estimators;
pub mod filter;
pub mod metrics;
pub mod oracle;
pub mod planner;
pub mod queryir;
pub mod synth;
pub mod workloadgen;

pub use catalog::{load_catalog, Catalog, Column, ColumnKind, ColumnRef, JoinEdge, KeyRole, TableData};
pub use estimators::{build, CardinalityEstimator, Estimator, EstimatorConfig, Method};
pub use metrics::{p_error, percentile, q_error};
pub use oracle::{execute_count, true_cardinalities, CardinalityMap, TrueCardCache};
pub use planner::{optimize, CostParams, JoinOp, PhysicalPlan, PlanNode};
pub use queryir::{enumerate_subplans, parse_query, parse_workload, Query, Region, SubPlanKey, SubPlanQuery};
