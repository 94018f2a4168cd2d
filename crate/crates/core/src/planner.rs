//! Cost-based join planning over connected sub-plans.
//!
//! [`optimize`] runs a bushy dynamic program over the connected table subsets
//! of a query. Output rows of every node are read from the supplied
//! [`CardinalityMap`], never derived, so the same plan can be re-costed under
//! a different map with [`cost_plan`].

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::JoinEdge;
use crate::oracle::CardinalityMap;
use crate::queryir::{is_connected, Query, SubPlanKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("cardinality map has no entry for sub-plan `{0}`")]
    IncompleteCardinalityMap(String),
    #[error("cost parameter `{0}` must be strictly positive")]
    InvalidCostParams(&'static str),
    #[error("query has no tables")]
    EmptyQuery,
}

/// Cost constants, in abstract cost units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub seq_page_cost: f64,
    pub cpu_tuple_cost: f64,
    pub cpu_operator_cost: f64,
    pub sort_factor: f64,
    pub rows_per_page: f64,
    /// Hash-qual recheck charged per matched pair of a hash join. Zero turns
    /// the hash join's output charge into the plain per-tuple emit cost.
    pub hash_qual_cost: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            seq_page_cost: 1.0,
            cpu_tuple_cost: 0.01,
            cpu_operator_cost: 0.0025,
            sort_factor: 2.0,
            rows_per_page: 100.0,
            hash_qual_cost: 0.0025,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let checks = [
            ("seq_page_cost", self.seq_page_cost),
            ("cpu_tuple_cost", self.cpu_tuple_cost),
            ("cpu_operator_cost", self.cpu_operator_cost),
            ("sort_factor", self.sort_factor),
            ("rows_per_page", self.rows_per_page),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PlannerError::InvalidCostParams(name));
            }
        }
        if !(self.hash_qual_cost >= 0.0 && self.hash_qual_cost.is_finite()) {
            return Err(PlannerError::InvalidCostParams("hash_qual_cost"));
        }
        Ok(())
    }

    pub fn scan_cost(&self, rows: f64, predicates: usize) -> f64 {
        (rows / self.rows_per_page) * self.seq_page_cost
            + rows * self.cpu_tuple_cost
            + rows * predicates as f64 * self.cpu_operator_cost
    }

    /// Cost of the join operator itself, excluding its inputs.
    pub fn join_cost(&self, op: JoinOp, left: f64, right: f64, out: f64) -> f64 {
        let emit = out * self.cpu_tuple_cost;
        match op {
            JoinOp::HashJoin => {
                right * (self.cpu_operator_cost + self.cpu_tuple_cost)
                    + left * self.cpu_operator_cost
                    + emit
                    + out * self.hash_qual_cost
            }
            JoinOp::MergeJoin => {
                self.sort_factor * (left * (1.0 + left).log2() + right * (1.0 + right).log2()) * self.cpu_operator_cost
                    + (left + right) * self.cpu_operator_cost
                    + emit
            }
            JoinOp::NestedLoop => left * right * self.cpu_operator_cost + emit,
        }
    }
}

/// Physical join operators. Variant order is the name order used to break
/// cost ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JoinOp {
    HashJoin,
    MergeJoin,
    NestedLoop,
}

impl JoinOp {
    pub const ALL: [JoinOp; 3] = [JoinOp::HashJoin, JoinOp::MergeJoin, JoinOp::NestedLoop];
}

impl fmt::Display for JoinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JoinOp::HashJoin => "HashJoin",
            JoinOp::MergeJoin => "MergeJoin",
            JoinOp::NestedLoop => "NestedLoop",
        })
    }
}

/// Plan node. For a hash join `right` is the build side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanNode {
    SeqScan {
        table: String,
        key: SubPlanKey,
        predicates: usize,
        rows: f64,
    },
    Join {
        op: JoinOp,
        key: SubPlanKey,
        edge: JoinEdge,
        rows: f64,
        left: Box<PlanNode>,
        right: Box<PlanNode>,
    },
}

impl PlanNode {
    pub fn key(&self) -> &SubPlanKey {
        match self {
            PlanNode::SeqScan { key, .. } | PlanNode::Join { key, .. } => key,
        }
    }

    /// Rows this node was planned with.
    pub fn rows(&self) -> f64 {
        match self {
            PlanNode::SeqScan { rows, .. } | PlanNode::Join { rows, .. } => *rows,
        }
    }

    pub fn operator_name(&self) -> String {
        match self {
            PlanNode::SeqScan { .. } => "SeqScan".to_string(),
            PlanNode::Join { op, .. } => op.to_string(),
        }
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, out: &mut Vec<&'a PlanNode>) {
        out.push(self);
        if let PlanNode::Join { left, right, .. } = self {
            left.walk(out);
            right.walk(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub query: String,
    pub root: PlanNode,
}

impl PhysicalPlan {
    pub fn root_operator(&self) -> String {
        self.root.operator_name()
    }

    pub fn nodes(&self) -> Vec<&PlanNode> {
        let mut v = Vec::new();
        self.root.walk(&mut v);
        v
    }
}

fn card(cards: &CardinalityMap, key: &SubPlanKey) -> Result<f64, PlannerError> {
    cards
        .get(key)
        .ok_or_else(|| PlannerError::IncompleteCardinalityMap(key.to_string()))
}

#[derive(Clone)]
enum Choice {
    Scan,
    Join { op: JoinOp, left: u32, right: u32 },
}

#[derive(Clone)]
struct Best {
    cost: f64,
    choice: Choice,
    left_key: Option<SubPlanKey>,
}

/// Cheapest bushy plan under `cards`. Equal-cost candidates are ordered by
/// operator name, then by the left input's sub-plan key.
pub fn optimize(query: &Query, cards: &CardinalityMap, params: &CostParams) -> Result<PhysicalPlan, PlannerError> {
    params.validate()?;
    let n = query.tables.len();
    if n == 0 {
        return Err(PlannerError::EmptyQuery);
    }
    let adj = query.adjacency();
    let full = (1u32 << n) - 1;
    let mut masks: Vec<u32> = (1..=full).filter(|&m| is_connected(m, &adj)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));

    let mut rows = vec![0.0f64; (full as usize) + 1];
    let mut keys: Vec<Option<SubPlanKey>> = vec![None; (full as usize) + 1];
    for &m in &masks {
        let key = query.mask_key(m);
        rows[m as usize] = card(cards, &key)?;
        keys[m as usize] = Some(key);
    }
    let mut preds = vec![0usize; n];
    for p in &query.predicates {
        if let Some(i) = query.table_index(&p.table) {
            preds[i] += 1;
        }
    }

    let mut best: Vec<Option<Best>> = vec![None; (full as usize) + 1];
    for &m in &masks {
        if m.count_ones() == 1 {
            let i = m.trailing_zeros() as usize;
            best[m as usize] = Some(Best {
                cost: params.scan_cost(rows[m as usize], preds[i]),
                choice: Choice::Scan,
                left_key: None,
            });
            continue;
        }
        let mut cur: Option<Best> = None;
        let mut sub = (m - 1) & m;
        while sub != 0 {
            let other = m ^ sub;
            if let (Some(l), Some(r)) = (&best[sub as usize], &best[other as usize]) {
                if adjacent(sub, other, &adj) {
                    let left_key = keys[sub as usize].as_ref().unwrap();
                    for op in JoinOp::ALL {
                        let local = params.join_cost(op, rows[sub as usize], rows[other as usize], rows[m as usize]);
                        let cost = l.cost + r.cost + local;
                        let better = match &cur {
                            None => true,
                            Some(b) => {
                                cost < b.cost
                                    || (cost == b.cost && {
                                        let Choice::Join { op: bop, .. } = b.choice else {
                                            unreachable!()
                                        };
                                        (op, left_key) < (bop, b.left_key.as_ref().unwrap())
                                    })
                            }
                        };
                        if better {
                            cur = Some(Best {
                                cost,
                                choice: Choice::Join {
                                    op,
                                    left: sub,
                                    right: other,
                                },
                                left_key: Some(left_key.clone()),
                            });
                        }
                    }
                }
            }
            sub = (sub - 1) & m;
        }
        best[m as usize] = cur;
    }

    fn build(
        m: u32,
        query: &Query,
        best: &[Option<Best>],
        rows: &[f64],
        keys: &[Option<SubPlanKey>],
        preds: &[usize],
    ) -> PlanNode {
        let b = best[m as usize].as_ref().expect("connected subset planned");
        let key = keys[m as usize].clone().unwrap();
        match b.choice {
            Choice::Scan => {
                let i = m.trailing_zeros() as usize;
                PlanNode::SeqScan {
                    table: query.tables[i].clone(),
                    key,
                    predicates: preds[i],
                    rows: rows[m as usize],
                }
            }
            Choice::Join { op, left, right } => PlanNode::Join {
                op,
                edge: crossing_edge(query, left, right).clone(),
                key,
                rows: rows[m as usize],
                left: Box::new(build(left, query, best, rows, keys, preds)),
                right: Box::new(build(right, query, best, rows, keys, preds)),
            },
        }
    }

    Ok(PhysicalPlan {
        query: query.id.clone(),
        root: build(full, query, &best, &rows, &keys, &preds),
    })
}

fn adjacent(a: u32, b: u32, adj: &[u32]) -> bool {
    let mut bits = a;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        if adj[i] & b != 0 {
            return true;
        }
        bits &= bits - 1;
    }
    false
}

fn crossing_edge(query: &Query, a: u32, b: u32) -> &JoinEdge {
    let inside = |t: &str, m: u32| query.table_index(t).is_some_and(|i| m & (1 << i) != 0);
    query
        .join_edges
        .iter()
        .find(|e| {
            (inside(&e.left.table, a) && inside(&e.right.table, b))
                || (inside(&e.left.table, b) && inside(&e.right.table, a))
        })
        .expect("adjacent subsets share an edge")
}

/// Total cost of `plan` with every node's rows read from `cards`.
pub fn cost_plan(plan: &PhysicalPlan, cards: &CardinalityMap, params: &CostParams) -> Result<f64, PlannerError> {
    node_cost(&plan.root, cards, params)
}

pub fn node_cost(node: &PlanNode, cards: &CardinalityMap, params: &CostParams) -> Result<f64, PlannerError> {
    match node {
        PlanNode::SeqScan { key, predicates, .. } => Ok(params.scan_cost(card(cards, key)?, *predicates)),
        PlanNode::Join {
            op, key, left, right, ..
        } => {
            let lc = node_cost(left, cards, params)?;
            let rc = node_cost(right, cards, params)?;
            let local = params.join_cost(
                *op,
                card(cards, left.key())?,
                card(cards, right.key())?,
                card(cards, key)?,
            );
            Ok(lc + rc + local)
        }
    }
}

/// True cost of the plan chosen under `estimated`.
pub fn ppc(
    query: &Query,
    estimated: &CardinalityMap,
    truth: &CardinalityMap,
    params: &CostParams,
) -> Result<f64, PlannerError> {
    let plan = optimize(query, estimated, params)?;
    cost_plan(&plan, truth, params)
}

fn fmt_rows(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// EXPLAIN-style rendering: one line per node with operator, sub-plan key,
/// rows used, and cumulative cost under `cards`.
pub fn explain(plan: &PhysicalPlan, cards: &CardinalityMap, params: &CostParams) -> Result<String, PlannerError> {
    fn go(
        node: &PlanNode,
        depth: usize,
        cards: &CardinalityMap,
        params: &CostParams,
        out: &mut String,
    ) -> Result<(), PlannerError> {
        let cost = node_cost(node, cards, params)?;
        let rows = card(cards, node.key())?;
        let indent = "  ".repeat(depth);
        match node {
            PlanNode::SeqScan { table, key, .. } => {
                let _ = writeln!(
                    out,
                    "{indent}SeqScan {table} [{key}] rows={} cost={cost:.3}",
                    fmt_rows(rows)
                );
            }
            PlanNode::Join {
                op,
                key,
                edge,
                left,
                right,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "{indent}{op} [{key}] rows={} cost={cost:.3} on {edge}",
                    fmt_rows(rows)
                );
                go(left, depth + 1, cards, params, out)?;
                go(right, depth + 1, cards, params, out)?;
            }
        }
        Ok(())
    }
    let mut s = String::new();
    go(&plan.root, 0, cards, params, &mut s)?;
    Ok(s)
}

/// First node, in pre-order, where the two plans pick a different operator
/// or a different sub-plan.
pub fn first_divergence(a: &PhysicalPlan, b: &PhysicalPlan) -> Option<String> {
    fn go(a: &PlanNode, b: &PlanNode) -> Option<String> {
        if a.key() != b.key() || a.operator_name() != b.operator_name() {
            return Some(format!(
                "{} [{}] vs {} [{}]",
                a.operator_name(),
                a.key(),
                b.operator_name(),
                b.key()
            ));
        }
        match (a, b) {
            (
                PlanNode::Join {
                    left: la, right: ra, ..
                },
                PlanNode::Join {
                    left: lb, right: rb, ..
                },
            ) => go(la, lb).or_else(|| go(ra, rb)),
            _ => None,
        }
    }
    go(&a.root, &b.root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnRef, KeyRole};
    use crate::oracle::Provenance;

    fn chain() -> Query {
        let e = |a: &str, b: &str| JoinEdge::new(ColumnRef::new(a, "k"), ColumnRef::new(b, "k"), KeyRole::FkFk);
        Query::new(
            "chain",
            vec!["a".into(), "b".into(), "c".into()],
            vec![e("a", "b"), e("b", "c")],
            vec![],
        )
        .unwrap()
    }

    fn map(entries: &[(&str, f64)]) -> CardinalityMap {
        let mut m = CardinalityMap::new("q", Provenance::True);
        for (k, v) in entries {
            m.insert(SubPlanKey::parse(k), *v);
        }
        m
    }

    #[test]
    fn seq_scan_formula() {
        assert!((CostParams::default().scan_cost(1000.0, 1) - 22.5).abs() < 1e-12);
    }

    #[test]
    fn single_table_is_a_scan() {
        let q = Query::new("one", vec!["a".into()], vec![], vec![]).unwrap();
        let plan = optimize(&q, &map(&[("a", 5.0)]), &CostParams::default()).unwrap();
        assert!(matches!(plan.root, PlanNode::SeqScan { .. }));
    }

    #[test]
    fn join_order_follows_cards() {
        let q = chain();
        let p = CostParams::default();
        let base = [("a", 1000.0), ("b", 1000.0), ("c", 1000.0)];
        let mut small_bc = map(&base);
        small_bc.insert(SubPlanKey::parse("a|b"), 50_000.0);
        small_bc.insert(SubPlanKey::parse("b|c"), 10.0);
        small_bc.insert(SubPlanKey::parse("a|b|c"), 100.0);
        let plan = optimize(&q, &small_bc, &p).unwrap();
        let PlanNode::Join { left, right, .. } = &plan.root else {
            panic!()
        };
        let kids = [left.key().to_string(), right.key().to_string()];
        assert!(kids.contains(&"b|c".to_string()), "{kids:?}");

        let mut small_ab = small_bc.clone();
        small_ab.insert(SubPlanKey::parse("a|b"), 5.0);
        let plan = optimize(&q, &small_ab, &p).unwrap();
        let PlanNode::Join { left, right, .. } = &plan.root else {
            panic!()
        };
        let kids = [left.key().to_string(), right.key().to_string()];
        assert!(kids.contains(&"a|b".to_string()), "{kids:?}");
    }

    #[test]
    fn missing_card_is_reported() {
        let err = optimize(
            &chain(),
            &map(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]),
            &CostParams::default(),
        )
        .unwrap_err();
        assert_eq!(err, PlannerError::IncompleteCardinalityMap("a|b".into()));
    }

    #[test]
    fn recosting_only_root_changes_root_terms() {
        let q = chain();
        let p = CostParams::default();
        let m1 = map(&[
            ("a", 10.0),
            ("b", 20.0),
            ("c", 30.0),
            ("a|b", 40.0),
            ("b|c", 50.0),
            ("a|b|c", 60.0),
        ]);
        let mut m2 = m1.clone();
        m2.insert(SubPlanKey::parse("a|b|c"), 600.0);
        let plan = optimize(&q, &m1, &p).unwrap();
        let PlanNode::Join { op, left, right, .. } = &plan.root else {
            panic!()
        };
        let c1 = cost_plan(&plan, &m1, &p).unwrap();
        let c2 = cost_plan(&plan, &m2, &p).unwrap();
        let children = node_cost(left, &m1, &p).unwrap() + node_cost(right, &m1, &p).unwrap();
        let (l, r) = (m1.get(left.key()).unwrap(), m1.get(right.key()).unwrap());
        assert!((c1 - children - p.join_cost(*op, l, r, 60.0)).abs() < 1e-9);
        assert!((c2 - c1 - (p.join_cost(*op, l, r, 600.0) - p.join_cost(*op, l, r, 60.0))).abs() < 1e-9);
    }

    #[test]
    fn explain_format_is_stable() {
        let q = Query::new(
            "two",
            vec!["a".into(), "b".into()],
            vec![JoinEdge::new(
                ColumnRef::new("a", "k"),
                ColumnRef::new("b", "k"),
                KeyRole::FkFk,
            )],
            vec![],
        )
        .unwrap();
        let m = map(&[("a", 1_000_000.0), ("b", 10.0), ("a|b", 10.0)]);
        let p = CostParams::default();
        let plan = optimize(&q, &m, &p).unwrap();
        let text = explain(&plan, &m, &p).unwrap();
        let expected = "HashJoin [a|b] rows=10 cost=22500.450 on a.k = b.k\n  SeqScan a [a] rows=1000000 cost=20000.000\n  SeqScan b [b] rows=10 cost=0.200\n";
        assert_eq!(text, expected);
    }
}
