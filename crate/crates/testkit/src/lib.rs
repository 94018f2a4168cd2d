//! Brute-force reference implementations and random instance generators
//! used as test oracles.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use cardbench_core::catalog::{Catalog, Column, ColumnKind, ColumnRef, JoinEdge, KeyRole, TableData};
use cardbench_core::oracle::{CardinalityMap, Provenance};
use cardbench_core::planner::{JoinOp, PlanNode};
use cardbench_core::queryir::{Predicate, Query, Region, SubPlanKey, SubPlanQuery};
use rand::seq::SliceRandom;
use rand::Rng;

/// Counts join results by enumerating tuples table by table, checking each
/// predicate and join edge as soon as its columns are bound.
pub fn nested_loop_count(subplan: &SubPlanQuery, catalog: &Catalog) -> u64 {
    let tables = bfs_order(subplan.tables(), &subplan.join_edges);
    let data: Vec<&TableData> = tables.iter().map(|t| catalog.table(t).unwrap()).collect();
    let preds: Vec<Vec<(&Column, &Region)>> = (0..tables.len())
        .map(|i| {
            subplan
                .predicates_on(&tables[i])
                .map(|p| (data[i].column(&p.column).unwrap(), &p.region))
                .collect()
        })
        .collect();
    // Edges checked when table i is bound: (column on i, earlier table, its column).
    let checks: Vec<Vec<(&Column, usize, &Column)>> = (0..tables.len())
        .map(|i| {
            subplan
                .join_edges
                .iter()
                .filter_map(|e| {
                    let mine = e.side(&tables[i])?;
                    let other = e.other(&tables[i])?;
                    let j = tables.iter().position(|t| *t == other.table)?;
                    (j < i).then(|| {
                        (
                            data[i].column(&mine.column).unwrap(),
                            j,
                            data[j].column(&other.column).unwrap(),
                        )
                    })
                })
                .collect()
        })
        .collect();
    struct Ctx<'a> {
        rows: Vec<usize>,
        preds: Vec<Vec<(&'a Column, &'a Region)>>,
        checks: Vec<Vec<(&'a Column, usize, &'a Column)>>,
    }
    fn go(i: usize, bound: &mut Vec<usize>, ctx: &Ctx) -> u64 {
        if i == ctx.rows.len() {
            return 1;
        }
        let mut total = 0;
        for row in 0..ctx.rows[i] {
            let passes = ctx.preds[i]
                .iter()
                .all(|(c, region)| c.get(row).is_some_and(|v| region.contains(v)));
            let joins = passes
                && ctx.checks[i].iter().all(
                    |(mine, j, theirs)| matches!((mine.get(row), theirs.get(bound[*j])), (Some(a), Some(b)) if a == b),
                );
            if joins {
                bound.push(row);
                total += go(i + 1, bound, ctx);
                bound.pop();
            }
        }
        total
    }
    let ctx = Ctx {
        rows: data.iter().map(|t| t.rows()).collect(),
        preds,
        checks,
    };
    go(0, &mut Vec::new(), &ctx)
}

fn bfs_order(tables: &[String], edges: &[JoinEdge]) -> Vec<String> {
    let Some(first) = tables.first() else {
        return Vec::new();
    };
    let mut order = vec![first.clone()];
    let mut queue = VecDeque::from([first.clone()]);
    while let Some(t) = queue.pop_front() {
        for e in edges {
            if let Some(o) = e.other(&t) {
                if !order.contains(&o.table) {
                    order.push(o.table.clone());
                    queue.push_back(o.table.clone());
                }
            }
        }
    }
    order
}

fn connected(set: &BTreeSet<&String>, edges: &[JoinEdge]) -> bool {
    let Some(&start) = set.iter().next() else {
        return false;
    };
    let mut seen = BTreeSet::from([start.clone()]);
    let mut stack = vec![start.clone()];
    while let Some(t) = stack.pop() {
        for e in edges {
            if let Some(o) = e.other(&t) {
                if set.contains(&o.table) && seen.insert(o.table.clone()) {
                    stack.push(o.table.clone());
                }
            }
        }
    }
    seen.len() == set.len()
}

/// Every subset of the query's tables that induces a connected join graph.
pub fn connected_subsets(query: &Query) -> BTreeSet<SubPlanKey> {
    let n = query.tables.len();
    let mut out = BTreeSet::new();
    for bits in 1u64..(1u64 << n) {
        let set: BTreeSet<&String> = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| &query.tables[i])
            .collect();
        if connected(&set, &query.join_edges) {
            out.insert(SubPlanKey::new(set.into_iter().cloned()));
        }
    }
    out
}

/// Every bushy plan for the query: all splits of each connected set into
/// two connected sides linked by an edge, in both orders, with every
/// operator.
pub fn all_plans(query: &Query) -> Vec<PlanNode> {
    let all: Vec<String> = query.tables.clone();
    plans_for(query, &all)
}

fn plans_for(query: &Query, tables: &[String]) -> Vec<PlanNode> {
    let key = SubPlanKey::new(tables.iter().cloned());
    if tables.len() == 1 {
        let t = &tables[0];
        return vec![PlanNode::SeqScan {
            table: t.clone(),
            key,
            predicates: query.predicates.iter().filter(|p| p.table == *t).count(),
            rows: 0.0,
        }];
    }
    let n = tables.len();
    let mut out = Vec::new();
    for bits in 1u64..(1u64 << n) - 1 {
        let left: Vec<String> = (0..n)
            .filter(|i| bits >> i & 1 == 1)
            .map(|i| tables[i].clone())
            .collect();
        let right: Vec<String> = (0..n)
            .filter(|i| bits >> i & 1 == 0)
            .map(|i| tables[i].clone())
            .collect();
        let ls: BTreeSet<&String> = left.iter().collect();
        let rs: BTreeSet<&String> = right.iter().collect();
        if !connected(&ls, &query.join_edges) || !connected(&rs, &query.join_edges) {
            continue;
        }
        let Some(edge) = query.join_edges.iter().find(|e| {
            (ls.contains(&e.left.table) && rs.contains(&e.right.table))
                || (rs.contains(&e.left.table) && ls.contains(&e.right.table))
        }) else {
            continue;
        };
        let lp = plans_for(query, &left);
        let rp = plans_for(query, &right);
        for l in &lp {
            for r in &rp {
                for op in JoinOp::ALL {
                    out.push(PlanNode::Join {
                        op,
                        key: key.clone(),
                        edge: edge.clone(),
                        rows: 0.0,
                        left: Box::new(l.clone()),
                        right: Box::new(r.clone()),
                    });
                }
            }
        }
    }
    out
}

/// Mutual information of two discrete series, nulls as their own symbol.
pub fn mutual_information(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let n = a.len() as f64;
    let sym = |v: Option<f64>| v.map(f64::to_bits);
    let mut joint: BTreeMap<(Option<u64>, Option<u64>), f64> = BTreeMap::new();
    let mut ma: BTreeMap<Option<u64>, f64> = BTreeMap::new();
    let mut mb: BTreeMap<Option<u64>, f64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((sym(*x), sym(*y))).or_default() += 1.0;
        *ma.entry(sym(*x)).or_default() += 1.0;
        *mb.entry(sym(*y)).or_default() += 1.0;
    }
    joint
        .iter()
        .map(|((x, y), c)| c / n * ((c / n) / ((ma[x] / n) * (mb[y] / n))).ln())
        .sum()
}

/// Decodes a Prüfer sequence over `n` labels into tree edges `(min, max)`.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges.sort_unstable();
    edges
}

/// All labeled spanning trees of the complete graph on `n` vertices.
pub fn all_spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    match n {
        0 | 1 => return vec![Vec::new()],
        2 => return vec![vec![(0, 1)]],
        _ => {}
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let seq: Vec<usize> = (0..len)
                .map(|_| {
                    let d = code % n;
                    code /= n;
                    d
                })
                .collect();
            prufer_edges(&seq, n)
        })
        .collect()
}

/// Maximum total weight over all spanning trees, and every tree attaining
/// it within `tol`.
pub fn max_weight_trees(n: usize, weight: &dyn Fn(usize, usize) -> f64, tol: f64) -> (f64, Vec<Vec<(usize, usize)>>) {
    let scored: Vec<(f64, Vec<(usize, usize)>)> = all_spanning_trees(n)
        .into_iter()
        .map(|t| (t.iter().map(|&(i, j)| weight(i, j)).sum(), t))
        .collect();
    let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let trees = scored.into_iter().filter(|s| s.0 >= best - tol).map(|s| s.1).collect();
    (best, trees)
}

/// Shape of generated instances.
#[derive(Debug, Clone)]
pub struct InstanceSpec {
    pub min_tables: usize,
    pub max_tables: usize,
    pub max_rows: usize,
    pub key_domain: usize,
    pub null_rate: f64,
    pub predicate_rate: f64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec {
            min_tables: 1,
            max_tables: 4,
            max_rows: 200,
            key_domain: 40,
            null_rate: 0.05,
            predicate_rate: 0.5,
        }
    }
}

/// A random tree-shaped catalog and a query joining all of its tables.
/// Each table `tI` has a numeric column `a`, a categorical column `b`, and
/// one key column `jE` per incident edge `E`; some key columns are unique.
pub fn random_instance(rng: &mut impl Rng, spec: &InstanceSpec) -> (Catalog, Query) {
    let k = rng.gen_range(spec.min_tables..=spec.max_tables);
    let parents: Vec<usize> = (1..k).map(|i| rng.gen_range(0..i)).collect();
    let mut tables = Vec::with_capacity(k);
    let mut edges = Vec::new();
    let names: Vec<String> = (0..k).map(|i| format!("t{i}")).collect();
    let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=spec.max_rows)).collect();
    let mut key_cols: Vec<Vec<Column>> = vec![Vec::new(); k];
    for (e, &p) in parents.iter().enumerate() {
        let c = e + 1;
        let col = format!("j{e}");
        let unique_parent = rng.gen_bool(0.3);
        for (t, unique) in [(p, unique_parent), (c, false)] {
            let n = sizes[t];
            let values: Vec<Option<f64>> = if unique {
                let mut ids: Vec<f64> = (0..n).map(|v| v as f64).collect();
                ids.shuffle(rng);
                ids.into_iter().map(Some).collect()
            } else {
                (0..n)
                    .map(|_| {
                        (!rng.gen_bool(spec.null_rate)).then(|| {
                            // Squaring a uniform draw skews keys toward 0.
                            let u: f64 = rng.gen();
                            (u * u * spec.key_domain as f64).floor()
                        })
                    })
                    .collect()
            };
            key_cols[t].push(Column::from_options(col.clone(), ColumnKind::Categorical, values));
        }
        edges.push(JoinEdge::new(
            ColumnRef::new(&names[p], &col),
            ColumnRef::new(&names[c], &col),
            if unique_parent { KeyRole::PkFk } else { KeyRole::FkFk },
        ));
    }
    for (i, keys) in key_cols.into_iter().enumerate() {
        let n = sizes[i];
        let a: Vec<Option<f64>> = (0..n)
            .map(|_| (!rng.gen_bool(spec.null_rate)).then(|| rng.gen_range(0..20) as f64))
            .collect();
        let b: Vec<Option<f64>> = (0..n).map(|_| Some(rng.gen_range(0..5) as f64)).collect();
        let mut cols = vec![
            Column::from_options("a", ColumnKind::Continuous, a),
            Column::from_options("b", ColumnKind::Categorical, b),
        ];
        cols.extend(keys);
        tables.push(TableData::new(names[i].clone(), cols).unwrap());
    }
    let catalog = Catalog::new(tables, edges.clone()).unwrap();
    let mut predicates = Vec::new();
    for name in &names {
        if rng.gen_bool(spec.predicate_rate) {
            let lo = rng.gen_range(0..20) as f64;
            let hi = lo + rng.gen_range(0..12) as f64;
            predicates.push(Predicate {
                table: name.clone(),
                column: "a".into(),
                region: Region::closed(lo, hi),
            });
        }
        if rng.gen_bool(spec.predicate_rate / 2.0) {
            let vals: Vec<f64> = (0..5).filter(|_| rng.gen_bool(0.5)).map(f64::from).collect();
            predicates.push(Predicate {
                table: name.clone(),
                column: "b".into(),
                region: Region::values(vals),
            });
        }
    }
    let query = Query::new("r", names, edges, predicates).unwrap();
    (catalog, query)
}

/// Random cardinalities for every connected sub-plan, log-uniform in
/// `[1, 10^6]`.
pub fn random_cards(rng: &mut impl Rng, query: &Query) -> CardinalityMap {
    let mut map = CardinalityMap::new(query.id.clone(), Provenance::True);
    for key in connected_subsets(query) {
        let v = 10f64.powf(rng.gen_range(0.0..6.0)).round();
        map.insert(key, v);
    }
    map
}

/// Four or five small-domain attributes, some derived from others.
pub fn random_attributes(rng: &mut impl Rng) -> Vec<Column> {
    let n = rng.gen_range(200..600);
    let k = rng.gen_range(4..=5);
    let mut cols: Vec<Vec<Option<f64>>> = Vec::new();
    for i in 0..k {
        let domain = rng.gen_range(2..8);
        let noise = rng.gen_range(0.0..1.0);
        let col = (0..n)
            .map(|r| {
                if i > 0 && rng.gen_bool(0.7) {
                    let src: &Vec<Option<f64>> = &cols[rng.gen_range(0..i).min(i - 1)];
                    if !rng.gen_bool(noise) {
                        return src[r].map(|v| (v + i as f64) % domain as f64);
                    }
                }
                (!rng.gen_bool(0.03)).then(|| rng.gen_range(0..domain) as f64)
            })
            .collect();
        cols.push(col);
    }
    cols.into_iter()
        .enumerate()
        .map(|(i, v)| Column::from_options(format!("c{i}"), ColumnKind::Categorical, v))
        .collect()
}
