//! Adversary model and compliance checks for a release.
//!
//! The adversary knows some raw values of a target. A published row matches
//! when every generalized cell contains the known value; bucket ids carry no
//! constraint. Identity disclosure is uniform over the matching rows, and
//! value disclosure weighs every matching bucket by its share of matching
//! rows.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use num::bigint::BigInt;
use num::integer::Integer;
use num::{BigRational, One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microdata::{Schema, Table};
use crate::pipeline::{PublishedCell, PublishedTable};
use crate::taxonomy::Value;

/// Known raw values of one target, keyed by schema index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BackgroundKnowledge {
    pub values: BTreeMap<usize, Value>,
}

impl BackgroundKnowledge {
    pub fn new(values: impl IntoIterator<Item = (usize, Value)>) -> Self {
        BackgroundKnowledge {
            values: values.into_iter().collect(),
        }
    }

    /// The QI (unflagged) values of a tuple of the original table.
    pub fn from_row(table: &Table, id: u64) -> Result<Self> {
        let r = table.row_index(id).ok_or(Error::UnknownTuple(id))?;
        Ok(Self::new(
            (0..table.schema().len())
                .filter(|&j| !table.is_sensitive(r, j))
                .map(|j| (j, table.value(r, j))),
        ))
    }

    /// Build from `(attribute name, raw value)` pairs.
    pub fn parse<'a>(schema: &Schema, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (name, raw) in pairs {
            let j = schema.require(name)?;
            let attr = schema.attr(j);
            let v = attr
                .parse_value(raw)
                .ok_or_else(|| Error::InvalidParameter(format!("`{raw}` is not a value of `{name}`")))?;
            values.insert(j, v);
        }
        Ok(BackgroundKnowledge { values })
    }

    /// One knowledge record per CSV row; the header names attributes and
    /// empty cells are unknown.
    pub fn load(path: &Path, schema: &Schema) -> Result<Vec<Self>> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let mut out = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let pairs = header.iter().zip(rec.iter()).filter(|(_, v)| !v.is_empty());
            out.push(Self::parse(schema, pairs)?);
        }
        Ok(out)
    }
}

fn group_matches(table: &PublishedTable, g: &crate::generalize::LocalEquivalenceGroup, bk: &BackgroundKnowledge) -> bool {
    let schema = table.schema();
    bk.values.iter().all(|(&a, &v)| match g.generalized.get(&a) {
        Some(gv) => gv.contains(v, schema.attr(a).hierarchy_arc().map(|h| h.as_ref())),
        None => true,
    })
}

/// Ids of the rows consistent with the knowledge, ascending.
pub fn matching_tuples(table: &PublishedTable, bk: &BackgroundKnowledge) -> Vec<u64> {
    let mut ids: Vec<u64> = table
        .groups()
        .iter()
        .filter(|g| group_matches(table, g, bk))
        .flat_map(|g| g.members.iter().copied())
        .collect();
    ids.sort_unstable();
    ids
}

fn require_bucketized(table: &PublishedTable, attr: usize) -> Result<()> {
    if attr >= table.schema().len() {
        return Err(Error::UnknownAttribute(format!("#{attr}")));
    }
    if !table.bucketized_attributes().any(|a| a == attr) {
        return Err(Error::InvalidParameter(format!(
            "`{}` has no buckets",
            table.schema().attr(attr).name
        )));
    }
    Ok(())
}

/// Matching rows per bucket of `attr`.
fn bucket_hits(table: &PublishedTable, matches: &[u64], attr: usize) -> BTreeMap<u32, u64> {
    let mut hits = BTreeMap::new();
    for id in matches {
        if let Some(PublishedCell::Bucket(b)) = table.row(*id).map(|r| r.cells[attr]) {
            *hits.entry(b).or_insert(0) += 1;
        }
    }
    hits
}

/// BIDs of `attr` holding at least one matching row.
pub fn matching_buckets(table: &PublishedTable, bk: &BackgroundKnowledge, attr: usize) -> Result<BTreeSet<u32>> {
    require_bucketized(table, attr)?;
    Ok(bucket_hits(table, &matching_tuples(table, bk), attr).into_keys().collect())
}

/// `1 / |matches|`, or `None` when nothing matches.
pub fn identity_disclosure_prob(table: &PublishedTable, bk: &BackgroundKnowledge) -> Option<BigRational> {
    let m = matching_tuples(table, bk).len();
    (m > 0).then(|| BigRational::new(BigInt::one(), BigInt::from(m)))
}

/// Disclosure probability of every value of `attr` given the matching rows,
/// as exact numerators over a common denominator.
struct ValueOdds {
    numerators: HashMap<Value, BigInt>,
    denominator: BigInt,
}

impl ValueOdds {
    fn compute(table: &PublishedTable, matches: &[u64], attr: usize) -> Option<Self> {
        if matches.is_empty() {
            return None;
        }
        let hits = bucket_hits(table, matches, attr);
        let sizes: Vec<(u32, u64, u128)> = hits
            .iter()
            .map(|(&b, &m)| {
                let size = table.bucket(attr, b).map_or(0, |x| x.values.len()) as u128;
                (b, m, size)
            })
            .filter(|&(_, _, size)| size > 0)
            .collect();
        if let Some(odds) = Self::compute_u128(table, matches.len() as u128, attr, &sizes) {
            return Some(odds);
        }
        let mut lcm = BigInt::one();
        for &(_, _, size) in &sizes {
            lcm = lcm.lcm(&BigInt::from(size));
        }
        let mut numerators: HashMap<Value, BigInt> = HashMap::new();
        for &(b, m, size) in &sizes {
            let scale = &lcm / BigInt::from(size) * BigInt::from(m);
            for &v in &table.bucket(attr, b).expect("listed").values {
                *numerators.entry(v).or_insert_with(BigInt::zero) += &scale;
            }
        }
        Some(ValueOdds {
            numerators,
            denominator: lcm * BigInt::from(matches.len()),
        })
    }

    fn compute_u128(table: &PublishedTable, m_total: u128, attr: usize, sizes: &[(u32, u64, u128)]) -> Option<Self> {
        let mut lcm: u128 = 1;
        for &(_, _, size) in sizes {
            lcm = lcm.checked_mul(size / lcm.gcd(&size))?;
        }
        let denominator = lcm.checked_mul(m_total)?;
        let mut numerators: HashMap<Value, u128> = HashMap::new();
        for &(b, m, size) in sizes {
            let scale = (lcm / size).checked_mul(u128::from(m))?;
            for &v in &table.bucket(attr, b).expect("listed").values {
                let e = numerators.entry(v).or_insert(0);
                *e = e.checked_add(scale)?;
            }
        }
        Some(ValueOdds {
            numerators: numerators.into_iter().map(|(v, n)| (v, BigInt::from(n))).collect(),
            denominator: BigInt::from(denominator),
        })
    }

    fn prob(&self, v: Value) -> BigRational {
        let n = self.numerators.get(&v).cloned().unwrap_or_else(BigInt::zero);
        BigRational::new(n, self.denominator.clone())
    }

    /// Most exposed value; ties go to the smallest value.
    fn max(&self) -> Option<(Value, BigRational)> {
        let (v, n) = self
            .numerators
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))?;
        Some((*v, BigRational::new(n.clone(), self.denominator.clone())))
    }
}

/// Probability that the target's value on `attr` is `s`; `None` when
/// nothing matches.
pub fn value_disclosure_prob(
    table: &PublishedTable,
    bk: &BackgroundKnowledge,
    attr: usize,
    s: Value,
) -> Result<Option<BigRational>> {
    require_bucketized(table, attr)?;
    let matches = matching_tuples(table, bk);
    Ok(ValueOdds::compute(table, &matches, attr).map(|o| o.prob(s)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    GroupTooSmall { gid: u32, size: usize, k: usize },
    BucketTooSmall { attribute: String, bid: u32, size: usize, l: usize },
    DuplicateValue { attribute: String, bid: u32, value: String },
    BucketSizeMismatch { attribute: String, bid: u32, listed: usize, linked: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::GroupTooSmall { gid, size, k } => write!(f, "group {gid} has {size} tuples, fewer than k = {k}"),
            Violation::BucketTooSmall { attribute, bid, size, l } => {
                write!(f, "bucket ({attribute}, B{bid}) has {size} values, fewer than l = {l}")
            }
            Violation::DuplicateValue { attribute, bid, value } => {
                write!(f, "bucket ({attribute}, B{bid}) repeats value `{value}`")
            }
            Violation::BucketSizeMismatch { attribute, bid, listed, linked } => write!(
                f,
                "bucket ({attribute}, B{bid}) lists {listed} values but {linked} rows refer to it"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail { violation: Violation },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    fn from(v: Option<Violation>) -> Self {
        match v {
            None => Verdict::Pass,
            Some(violation) => Verdict::Fail { violation },
        }
    }
}

/// Every local equivalence group holds at least `k` tuples.
pub fn check_k(table: &PublishedTable, k: usize) -> Verdict {
    Verdict::from(
        table
            .groups()
            .iter()
            .find(|g| g.len() < k)
            .map(|g| Violation::GroupTooSmall { gid: g.gid, size: g.len(), k }),
    )
}

/// Every bucket holds at least `l` pairwise-distinct values and is linked
/// from exactly as many rows.
pub fn check_l(table: &PublishedTable, l: usize) -> Verdict {
    let schema = table.schema();
    for a in table.bucketized_attributes() {
        let attr = schema.attr(a);
        let mut linked: HashMap<u32, usize> = HashMap::new();
        for row in table.rows() {
            if let PublishedCell::Bucket(b) = row.cells[a] {
                *linked.entry(b).or_insert(0) += 1;
            }
        }
        for b in table.buckets(a) {
            let size = b.values.len();
            if size < l {
                return Verdict::from(Some(Violation::BucketTooSmall {
                    attribute: attr.name.clone(),
                    bid: b.bid,
                    size,
                    l,
                }));
            }
            let mut seen = HashSet::with_capacity(size);
            if let Some(&dup) = b.values.iter().find(|&&v| !seen.insert(v)) {
                return Verdict::from(Some(Violation::DuplicateValue {
                    attribute: attr.name.clone(),
                    bid: b.bid,
                    value: attr.render_value(dup),
                }));
            }
            let n = linked.get(&b.bid).copied().unwrap_or(0);
            if n != size {
                return Verdict::from(Some(Violation::BucketSizeMismatch {
                    attribute: attr.name.clone(),
                    bid: b.bid,
                    listed: size,
                    linked: n,
                }));
            }
        }
    }
    Verdict::Pass
}

/// Disclosure figures for one adversary target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    /// Tuple id when the knowledge comes from a row of the original table.
    pub target: Option<u64>,
    pub matches: usize,
    /// Exact probability as `n/d`.
    pub identity_prob: Option<String>,
    pub value_prob: Option<String>,
    pub value_attribute: Option<String>,
    pub value: Option<String>,
    #[serde(skip)]
    identity_exact: Option<BigRational>,
    #[serde(skip)]
    value_exact: Option<BigRational>,
}

/// Worst-case disclosure for one knowledge record.
pub fn assess(table: &PublishedTable, bk: &BackgroundKnowledge, target: Option<u64>) -> TargetReport {
    let matches = matching_tuples(table, bk);
    let identity = (!matches.is_empty()).then(|| BigRational::new(BigInt::one(), BigInt::from(matches.len())));
    let mut worst: Option<(usize, Value, BigRational)> = None;
    for a in table.bucketized_attributes() {
        if let Some((v, p)) = ValueOdds::compute(table, &matches, a).and_then(|o| o.max()) {
            if worst.as_ref().map_or(true, |w| p > w.2) {
                worst = Some((a, v, p));
            }
        }
    }
    let schema = table.schema();
    TargetReport {
        target,
        matches: matches.len(),
        identity_prob: identity.as_ref().map(ToString::to_string),
        value_prob: worst.as_ref().map(|w| w.2.to_string()),
        value_attribute: worst.as_ref().map(|w| schema.attr(w.0).name.clone()),
        value: worst.as_ref().map(|w| schema.attr(w.0).render_value(w.1)),
        identity_exact: identity,
        value_exact: worst.map(|w| w.2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub k: usize,
    pub l: usize,
    pub k_check: Verdict,
    pub l_check: Verdict,
    /// Largest probabilities over all assessed targets, exact.
    pub max_identity_prob: Option<String>,
    pub max_value_prob: Option<String>,
    /// Whether the maxima stay within `1/k` and `1/l`; `None` without targets.
    pub bounds_hold: Option<bool>,
    pub pass: bool,
    pub targets: Vec<TargetReport>,
}

/// Structural checks plus an adversary sweep over every row of `original`
/// (when given) and every extra knowledge record.
pub fn audit(
    table: &PublishedTable,
    k: usize,
    l: usize,
    original: Option<&Table>,
    extra: &[BackgroundKnowledge],
) -> Result<AuditReport> {
    let mut knowledge: Vec<(Option<u64>, BackgroundKnowledge)> = Vec::new();
    if let Some(t) = original {
        if !t.schema().names().eq(table.schema().names()) {
            return Err(Error::Schema("release and original table have different attributes".into()));
        }
        for row in t.rows() {
            knowledge.push((Some(row.id), BackgroundKnowledge::from_row(t, row.id)?));
        }
    }
    knowledge.extend(extra.iter().cloned().map(|bk| (None, bk)));
    let targets: Vec<TargetReport> = knowledge
        .par_iter()
        .map(|(id, bk)| assess(table, bk, *id))
        .collect();

    let max_identity = targets.iter().filter_map(|t| t.identity_exact.clone()).max();
    let max_value = targets.iter().filter_map(|t| t.value_exact.clone()).max();
    let bound = |n: usize| BigRational::new(BigInt::one(), BigInt::from(n.max(1)));
    let bounds_hold = (!targets.is_empty()).then(|| {
        max_identity.as_ref().map_or(true, |p| *p <= bound(k)) && max_value.as_ref().map_or(true, |p| *p <= bound(l))
    });
    let k_check = check_k(table, k);
    let l_check = check_l(table, l);
    let pass = k_check.is_pass() && l_check.is_pass() && bounds_hold != Some(false);
    Ok(AuditReport {
        k,
        l,
        k_check,
        l_check,
        max_identity_prob: max_identity.map(|p| p.to_string()),
        max_value_prob: max_value.map(|p| p.to_string()),
        bounds_hold,
        pass,
        targets,
    })
}

impl AuditReport {
    pub fn max_identity_exact(&self) -> Option<BigRational> {
        self.targets.iter().filter_map(|t| t.identity_exact.clone()).max()
    }

    pub fn max_value_exact(&self) -> Option<BigRational> {
        self.targets.iter().filter_map(|t| t.value_exact.clone()).max()
    }
}
