use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microdata::{AttributeKind, RoleHint, Schema, Table};
use crate::pipeline::{PublishedCell, PublishedTable};
use crate::rng::{stream_rng, Stream};
use crate::taxonomy::{value_matches, CellView, CompareOp, GeneralizedValue, Predicate, Rational, Value};

/// Conditions per query.
pub const QUERY_ATTRIBUTES: usize = 4;

const ROUND_EPS: f64 = 1e-9;

/// `SELECT SUM(sum_attr) WHERE c1 AND c2 AND c3 AND c4`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    /// Ascending attribute indices, each with one predicate.
    pub conditions: Vec<(usize, Predicate)>,
    pub sum_attr: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAnswer {
    pub lower: i128,
    pub upper: i128,
    pub actual: i128,
    /// `None` when `actual` is zero.
    pub r_error: Option<Rational>,
}

impl QueryAnswer {
    pub fn is_flagged(&self) -> bool {
        self.r_error.is_none()
    }
}

/// First numeric attribute declared sensitive.
pub fn default_sum_attribute(schema: &Schema) -> Result<usize> {
    schema
        .attrs()
        .iter()
        .position(|a| a.role == RoleHint::Sensitive && a.kind == AttributeKind::Numeric)
        .ok_or_else(|| Error::InvalidParameter("no numeric sensitive attribute to aggregate".into()))
}

fn check_sum_attr(schema: &Schema, sum_attr: usize) -> Result<()> {
    if sum_attr >= schema.len() || schema.attr(sum_attr).kind != AttributeKind::Numeric {
        return Err(Error::InvalidParameter("the SUM attribute must be numeric".into()));
    }
    Ok(())
}

/// `n` random queries over the QI and semi-sensitive attributes of `table`.
/// Numeric predicates draw an operator uniformly from the six comparisons
/// and a value from the observed values; categorical predicates draw
/// `m` uniform in `[1, min(5, leaves)]` distinct leaves.
pub fn gen_queries(seed: u64, n: usize, table: &Table, sum_attr: usize) -> Result<Vec<Query>> {
    let schema = table.schema();
    check_sum_attr(schema, sum_attr)?;
    let eligible: Vec<usize> = (0..schema.len())
        .filter(|&j| j != sum_attr && schema.attr(j).role != RoleHint::Sensitive)
        .collect();
    if eligible.len() < QUERY_ATTRIBUTES {
        return Err(Error::InvalidParameter(format!(
            "queries need {QUERY_ATTRIBUTES} QI or semi-sensitive attributes, found {}",
            eligible.len()
        )));
    }
    let observed: HashMap<usize, Vec<i64>> = eligible
        .iter()
        .filter(|&&j| schema.attr(j).kind == AttributeKind::Numeric)
        .map(|&j| {
            let set: BTreeSet<i64> = (0..table.len()).map(|r| table.value(r, j).ordinal()).collect();
            (j, set.into_iter().collect())
        })
        .collect();

    let mut rng = stream_rng(seed, Stream::Queries);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut attrs: Vec<usize> = sample(&mut rng, eligible.len(), QUERY_ATTRIBUTES)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        attrs.sort_unstable();
        let conditions = attrs
            .into_iter()
            .map(|j| {
                let pred = match schema.attr(j).kind {
                    AttributeKind::Numeric => {
                        let values = &observed[&j];
                        Predicate::Numeric {
                            op: CompareOp::ALL[rng.gen_range(0..CompareOp::ALL.len())],
                            value: values[rng.gen_range(0..values.len())],
                        }
                    }
                    AttributeKind::Categorical => {
                        let leaves = schema.attr(j).hierarchy().domain_size() as usize;
                        let m = rng.gen_range(1..=leaves.min(5));
                        Predicate::Categorical {
                            leaves: sample(&mut rng, leaves, m).into_iter().map(|r| r as u32).collect(),
                        }
                    }
                };
                (j, pred)
            })
            .collect();
        out.push(Query { conditions, sum_attr });
    }
    Ok(out)
}

/// Dense per-attribute numbering of the distinct published cells.
struct CellIndex {
    ids: Vec<Vec<u32>>,
    distinct: Vec<Vec<PublishedCell>>,
}

impl CellIndex {
    fn new(table: &PublishedTable) -> Self {
        let width = table.schema().len();
        let mut ids = vec![Vec::with_capacity(table.len()); width];
        let mut distinct = vec![Vec::new(); width];
        for j in 0..width {
            let mut seen: HashMap<PublishedCell, u32> = HashMap::new();
            for row in table.rows() {
                let cell = row.cells[j];
                let id = *seen.entry(cell).or_insert_with(|| {
                    distinct[j].push(cell);
                    distinct[j].len() as u32 - 1
                });
                ids[j].push(id);
            }
        }
        CellIndex { ids, distinct }
    }
}

fn cell_probability(table: &PublishedTable, attr: usize, cell: PublishedCell, pred: &Predicate) -> Result<f64> {
    let schema = table.schema().attr(attr);
    match cell {
        PublishedCell::General(g) => {
            let f = value_matches(schema, CellView::General(g), pred)?.fraction();
            Ok(*f.numer() as f64 / *f.denom() as f64)
        }
        PublishedCell::Bucket(b) => {
            let bucket = table
                .bucket(attr, b)
                .ok_or_else(|| Error::InvalidParameter(format!("missing bucket B{b} of `{}`", schema.name)))?;
            let mut hits = 0usize;
            for &v in &bucket.values {
                if pred.matches_raw(v)? {
                    hits += 1;
                }
            }
            Ok(hits as f64 / bucket.values.len() as f64)
        }
    }
}

fn bounds_count(s: f64, cap: usize) -> (usize, usize) {
    let lo = (s + ROUND_EPS).floor().max(0.0) as usize;
    let hi = (s - ROUND_EPS).ceil().max(0.0) as usize;
    (lo.min(cap), hi.min(cap))
}

fn num(v: Value) -> i128 {
    i128::from(v.ordinal())
}

fn actual_sum(original: &Table, q: &Query) -> Result<i128> {
    let mut total = 0i128;
    'rows: for r in 0..original.len() {
        for (a, pred) in &q.conditions {
            if !pred.matches_raw(original.value(r, *a))? {
                continue 'rows;
            }
        }
        total += num(original.value(r, q.sum_attr));
    }
    Ok(total)
}

fn answer_with(table: &PublishedTable, index: &CellIndex, original: &Table, q: &Query) -> Result<QueryAnswer> {
    let mut pro = vec![1.0f64; table.len()];
    for (a, pred) in &q.conditions {
        let probs: Vec<f64> = index.distinct[*a]
            .iter()
            .map(|&c| cell_probability(table, *a, c, pred))
            .collect::<Result<_>>()?;
        for (p, &id) in pro.iter_mut().zip(&index.ids[*a]) {
            *p *= probs[id as usize];
        }
    }

    let s = q.sum_attr;
    let mut lower = 0i128;
    let mut upper = 0i128;
    let mut per_bucket: HashMap<u32, f64> = HashMap::new();
    for (row, &p) in table.rows().iter().zip(&pro) {
        match row.cells[s] {
            PublishedCell::Bucket(b) => *per_bucket.entry(b).or_default() += p,
            PublishedCell::General(GeneralizedValue::Interval { lo, hi }) => {
                let (n_lo, n_hi) = bounds_count(p, 1);
                lower += n_lo as i128 * i128::from(lo);
                upper += n_hi as i128 * i128::from(hi);
            }
            PublishedCell::General(GeneralizedValue::Node(_)) => {
                return Err(Error::KindMismatch("the SUM attribute must be numeric".into()))
            }
        }
    }
    for (b, sum) in per_bucket {
        let values = &table.bucket(s, b).expect("checked while computing probabilities").values;
        let (n_lo, n_hi) = bounds_count(sum, values.len());
        lower += values[..n_lo].iter().map(|&v| num(v)).sum::<i128>();
        upper += values[values.len() - n_hi..].iter().map(|&v| num(v)).sum::<i128>();
    }

    let actual = actual_sum(original, q)?;
    let r_error = (actual != 0).then(|| Rational::new(upper - lower, actual));
    Ok(QueryAnswer {
        lower,
        upper,
        actual,
        r_error,
    })
}

fn check_compatible(table: &PublishedTable, original: &Table, q: Option<&Query>) -> Result<()> {
    if !table.schema().names().eq(original.schema().names()) {
        return Err(Error::Schema("release and original table have different attributes".into()));
    }
    if let Some(q) = q {
        check_sum_attr(table.schema(), q.sum_attr)?;
    }
    Ok(())
}

/// Bounds on the SUM answer from the release; `actual` comes from the
/// original table.
pub fn answer_query(table: &PublishedTable, original: &Table, q: &Query) -> Result<QueryAnswer> {
    check_compatible(table, original, Some(q))?;
    answer_with(table, &CellIndex::new(table), original, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub queries: usize,
    /// Queries with a non-zero actual answer.
    pub answered: usize,
    pub flagged: usize,
    /// Mean relative error over answered queries; `None` if there are none.
    pub mean_r_error: Option<f64>,
}

/// Answer every query, in parallel, and average the relative errors.
pub fn evaluate_workload(table: &PublishedTable, original: &Table, queries: &[Query]) -> Result<(Vec<QueryAnswer>, WorkloadSummary)> {
    check_compatible(table, original, None)?;
    for q in queries {
        check_sum_attr(table.schema(), q.sum_attr)?;
    }
    let index = CellIndex::new(table);
    let answers: Vec<QueryAnswer> = queries
        .par_iter()
        .map(|q| answer_with(table, &index, original, q))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = answers
        .iter()
        .filter_map(|a| a.r_error)
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect();
    let summary = WorkloadSummary {
        queries: answers.len(),
        answered: errors.len(),
        flagged: answers.len() - errors.len(),
        mean_r_error: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
    };
    Ok((answers, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generalize::Mode;
    use crate::microdata::{AttributeSchema, Tuple};
    use crate::pipeline::{lgb, lgb_with_params, Params};
    use crate::synthetic::{census_table, random_table, RandomTableSpec};
    use std::sync::Arc;

    fn census() -> Table {
        census_table(600, 0.2, 5).unwrap()
    }

    #[test]
    fn generation_is_seeded_and_well_formed() {
        let t = census();
        let s = default_sum_attribute(t.schema()).unwrap();
        let a = gen_queries(11, 1000, &t, s).unwrap();
        assert_eq!(a, gen_queries(11, 1000, &t, s).unwrap());
        assert_ne!(a, gen_queries(12, 1000, &t, s).unwrap());
        assert_eq!(a.len(), 1000);
        for q in &a {
            assert_eq!(q.conditions.len(), QUERY_ATTRIBUTES);
            assert!(q.conditions.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, pred) in &q.conditions {
                assert_ne!(*j, s);
                match (t.schema().attr(*j).kind, pred) {
                    (AttributeKind::Numeric, Predicate::Numeric { .. }) => {}
                    (AttributeKind::Categorical, Predicate::Categorical { leaves }) => {
                        assert!((1..=5).contains(&leaves.len()))
                    }
                    other => panic!("{other:?}"),
                }
            }
        }
    }

    #[test]
    fn attributes_are_drawn_uniformly() {
        let t = census();
        let s = default_sum_attribute(t.schema()).unwrap();
        let n = 10_000;
        let qs = gen_queries(3, n, &t, s).unwrap();
        let mut counts = vec![0usize; t.schema().len()];
        for q in &qs {
            for (j, _) in &q.conditions {
                counts[*j] += 1;
            }
        }
        let eligible = t.schema().len() - 1;
        let expected = (QUERY_ATTRIBUTES * n) as f64 / eligible as f64;
        for (j, &c) in counts.iter().enumerate() {
            if j == s {
                assert_eq!(c, 0);
            } else {
                assert!((c as f64 - expected).abs() <= 0.1 * expected, "attr {j}: {c} vs {expected}");
            }
        }
    }

    #[test]
    fn too_few_attributes() {
        let t = random_table(&RandomTableSpec { qi: 1, ..Default::default() }, 0);
        let s = t.schema().require("sa").unwrap();
        assert!(gen_queries(1, 5, &t, s).is_err());
    }

    #[test]
    fn impossible_conjunction_is_flagged() {
        let t = census();
        let p = lgb(&t, 5, 5, Mode::Mdp).unwrap();
        let s = default_sum_attribute(t.schema()).unwrap();
        let age = t.schema().require("age").unwrap();
        let hours = t.schema().require("hours").unwrap();
        let q = Query {
            conditions: vec![
                (age, Predicate::Numeric { op: CompareOp::Lt, value: 0 }),
                (hours, Predicate::Numeric { op: CompareOp::Gt, value: 1000 }),
            ],
            sum_attr: s,
        };
        let a = answer_query(&p, &t, &q).unwrap();
        assert_eq!((a.lower, a.upper, a.actual), (0, 0, 0));
        assert!(a.is_flagged());
    }

    /// One QI attribute `x` and a sensitive `pay` column.
    fn pay_table(rows: &[(i64, i64)]) -> Table {
        let schema = Arc::new(
            Schema::new(vec![
                AttributeSchema::new("x", AttributeKind::Numeric, RoleHint::Qi, None),
                AttributeSchema::new("pay", AttributeKind::Numeric, RoleHint::Sensitive, None),
            ])
            .unwrap(),
        );
        let tuples = rows
            .iter()
            .enumerate()
            .map(|(i, &(x, pay))| Tuple { id: i as u64 + 1, cells: vec![Value::Num(x), Value::Num(pay)] })
            .collect();
        Table::new(schema, tuples, vec![vec![false, true]; rows.len()]).unwrap()
    }

    #[test]
    fn single_bucket_floor_and_ceiling() {
        // Two tuples in one group and one pay bucket {10, 20}; x < 2 holds
        // for exactly one of the two generalized x values, so the expected
        // count in the bucket is 1.
        let t = pay_table(&[(1, 10), (2, 20)]);
        let p = lgb(&t, 2, 2, Mode::Mdp).unwrap();
        assert_eq!(p.buckets(1).len(), 1);
        let q = Query {
            conditions: vec![(0, Predicate::Numeric { op: CompareOp::Lt, value: 2 })],
            sum_attr: 1,
        };
        let a = answer_query(&p, &t, &q).unwrap();
        assert_eq!((a.lower, a.upper, a.actual), (10, 20, 10));
        assert_eq!(a.r_error, Some(Rational::from_integer(1)));
    }

    #[test]
    fn exact_release_answers_exactly() {
        // All attributes QI with distinct x values: k = 1 isolates every tuple.
        let schema = Arc::new(
            Schema::new(
                ["x", "y", "z", "w", "pay"]
                    .into_iter()
                    .map(|n| AttributeSchema::new(n, AttributeKind::Numeric, RoleHint::Qi, None))
                    .collect(),
            )
            .unwrap(),
        );
        let base = census();
        let tuples: Vec<Tuple> = (0..300)
            .map(|i| {
                let r = i % base.len();
                Tuple {
                    id: i as u64 + 1,
                    cells: vec![
                        Value::Num(i as i64),
                        base.value(r, 1),
                        base.value(r, 6),
                        Value::Num((i as i64 * 7) % 13),
                        base.value(r, 8),
                    ],
                }
            })
            .collect();
        let t = Table::new(schema, tuples, vec![vec![false; 5]; 300]).unwrap();
        let p = lgb_with_params(&t, Params::new(1, 1, Mode::Mdp)).unwrap();
        assert_eq!(p.groups().len(), 300);
        let qs = gen_queries(5, 200, &t, 4).unwrap();
        let (answers, summary) = evaluate_workload(&p, &t, &qs).unwrap();
        for a in &answers {
            assert_eq!((a.lower, a.upper), (a.actual, a.actual));
        }
        assert_eq!(summary.mean_r_error.unwrap_or(0.0), 0.0);
    }

    #[test]
    fn bounds_are_ordered_on_a_real_release() {
        let t = census();
        let s = default_sum_attribute(t.schema()).unwrap();
        let qs = gen_queries(9, 300, &t, s).unwrap();
        for mode in [Mode::Mdp, Mode::Ncp] {
            let p = lgb(&t, 5, 5, mode).unwrap();
            let (answers, summary) = evaluate_workload(&p, &t, &qs).unwrap();
            assert!(answers.iter().all(|a| a.lower <= a.upper));
            assert!(answers.iter().filter_map(|a| a.r_error).all(|r| r >= Rational::from_integer(0)));
            assert_eq!(summary.answered + summary.flagged, 300);
            for (q, a) in qs.iter().zip(&answers).take(20) {
                assert_eq!(&answer_query(&p, &t, q).unwrap(), a);
            }
        }
    }
}
