//! Local bucketization of one attribute's sensitive cells.
//!
//! The pairs are range-split at their weighted median for as long as both
//! halves stay l-eligible; each leaf set is then dealt into l-diverse buckets.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::Value;

/// `(tuple id, sensitive value)`.
pub type ValuePair = (u64, Value);

/// The sensitive cells of one attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValuePairSet {
    pub attr: String,
    pairs: Vec<ValuePair>,
}

impl ValuePairSet {
    /// Pairs are re-ordered by tuple id; ids must be unique.
    pub fn new(attr: impl Into<String>, mut pairs: Vec<ValuePair>) -> Result<Self> {
        let attr = attr.into();
        pairs.sort_unstable_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(format!(
                "tuple {} appears twice in the sensitive cells of `{attr}`",
                w[0].0
            )));
        }
        Ok(ValuePairSet { attr, pairs })
    }

    pub fn pairs(&self) -> &[ValuePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn value_counts(&self) -> BTreeMap<Value, usize> {
        value_counts(&self.pairs)
    }
}

fn value_counts(pairs: &[ValuePair]) -> BTreeMap<Value, usize> {
    let mut counts = BTreeMap::new();
    for &(_, v) in pairs {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
}

/// Most frequent value and its count; ties go to the smaller value.
fn max_frequency(pairs: &[ValuePair]) -> Option<(Value, usize)> {
    value_counts(pairs)
        .into_iter()
        .fold(None, |best, (v, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((v, c)),
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalBucket {
    pub attr: String,
    /// Dense within the attribute, starting at 1.
    pub bid: u32,
    pub members: Vec<ValuePair>,
}

impl LocalBucket {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// l-eligibility: `max frequency * l <= |pairs|`. Empty sets are not
/// eligible since they cannot form a bucket.
pub fn check_condition(pairs: &[ValuePair], l: usize) -> bool {
    match max_frequency(pairs) {
        Some((_, f)) => f.saturating_mul(l) <= pairs.len(),
        None => false,
    }
}

/// Smallest value `v` with at least `ceil(n/2)` pairs `<= v`.
pub fn weighted_median(pairs: &[ValuePair]) -> Option<Value> {
    let need = pairs.len().div_ceil(2);
    let mut seen = 0;
    for (v, c) in value_counts(pairs) {
        seen += c;
        if seen >= need {
            return Some(v);
        }
    }
    None
}

/// Extra acceptance test applied to both halves of a candidate split, on top
/// of l-eligibility. Lets other per-attribute principles veto splits.
pub trait Eligibility {
    fn is_eligible(&self, pairs: &[ValuePair], l: usize) -> bool;
}

/// No constraint beyond l-eligibility.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl Eligibility for AcceptAll {
    fn is_eligible(&self, _pairs: &[ValuePair], _l: usize) -> bool {
        true
    }
}

impl<F: Fn(&[ValuePair], usize) -> bool> Eligibility for F {
    fn is_eligible(&self, pairs: &[ValuePair], l: usize) -> bool {
        self(pairs, l)
    }
}

fn validate_l(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidParameter("l must be at least 1".into()));
    }
    Ok(())
}

fn infeasible(attr: &str, pairs: &[ValuePair], l: usize) -> Error {
    let (value, frequency) = max_frequency(pairs).unwrap_or((Value::Num(0), 0));
    Error::InfeasibleBuckets {
        attribute: attr.to_string(),
        value: match value {
            Value::Num(v) => v.to_string(),
            Value::Leaf(r) => format!("#{r}"),
        },
        frequency,
        size: pairs.len(),
        l,
    }
}

pub fn local_bucketize(vp: &ValuePairSet, l: usize) -> Result<Vec<LocalBucket>> {
    local_bucketize_with(vp, l, &AcceptAll)
}

/// Range-split recursion; buckets are numbered depth-first, smaller half
/// first.
pub fn local_bucketize_with<E: Eligibility + ?Sized>(
    vp: &ValuePairSet,
    l: usize,
    extra: &E,
) -> Result<Vec<LocalBucket>> {
    validate_l(l)?;
    if !check_condition(&vp.pairs, l) {
        return Err(infeasible(&vp.attr, &vp.pairs, l));
    }
    let eligible = |p: &[ValuePair]| check_condition(p, l) && extra.is_eligible(p, l);

    let mut buckets = Vec::new();
    let mut stack: Vec<Vec<ValuePair>> = vec![vp.pairs.clone()];
    while let Some(set) = stack.pop() {
        let median = weighted_median(&set).expect("non-empty set");
        let (small, big): (Vec<ValuePair>, Vec<ValuePair>) = set.iter().partition(|p| p.1 <= median);
        if eligible(&small) && eligible(&big) {
            stack.push(big);
            stack.push(small);
        } else {
            let first_bid = buckets.len() as u32 + 1;
            buckets.extend(deal(&vp.attr, &set, l, first_bid));
        }
    }
    Ok(buckets)
}

/// Assign an l-eligible set into `floor(n/l)` buckets with no repeated value.
pub fn divide_buckets(vp: &ValuePairSet, l: usize) -> Result<Vec<LocalBucket>> {
    validate_l(l)?;
    if !check_condition(&vp.pairs, l) {
        return Err(infeasible(&vp.attr, &vp.pairs, l));
    }
    Ok(deal(&vp.attr, &vp.pairs, l, 1))
}

/// Pairs grouped by value (most frequent group first, ties by value, ids
/// ascending within a group), dealt round-robin. Every frequency is at most
/// the bucket count, so equal values land in distinct buckets.
fn deal(attr: &str, pairs: &[ValuePair], l: usize, first_bid: u32) -> Vec<LocalBucket> {
    let n_buckets = pairs.len() / l;
    debug_assert!(n_buckets >= 1);
    let mut groups: BTreeMap<Value, Vec<u64>> = BTreeMap::new();
    for &(id, v) in pairs {
        groups.entry(v).or_default().push(id);
    }
    let mut groups: Vec<(Value, Vec<u64>)> = groups.into_iter().collect();
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut buckets: Vec<LocalBucket> = (0..n_buckets)
        .map(|i| LocalBucket {
            attr: attr.to_string(),
            bid: first_bid + i as u32,
            members: Vec::with_capacity(pairs.len() / n_buckets + 1),
        })
        .collect();
    let ordered = groups.into_iter().flat_map(|(v, mut ids)| {
        ids.sort_unstable();
        ids.into_iter().map(move |id| (id, v))
    });
    for (i, pair) in ordered.enumerate() {
        buckets[i % n_buckets].members.push(pair);
    }
    buckets
}

/// First bucket violating the size or distinctness condition.
pub fn first_violation(buckets: &[LocalBucket], l: usize) -> Option<&LocalBucket> {
    buckets.iter().find(|b| {
        let mut seen = HashSet::with_capacity(b.members.len());
        b.members.len() < l || !b.members.iter().all(|&(_, v)| seen.insert(v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nums(vals: &[i64]) -> Vec<ValuePair> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| (i as u64 + 1, Value::Num(v)))
            .collect()
    }

    fn set(vals: &[i64]) -> ValuePairSet {
        ValuePairSet::new("s", nums(vals)).unwrap()
    }

    fn values(b: &LocalBucket) -> Vec<i64> {
        let mut v: Vec<i64> = b.members.iter().map(|p| p.1.ordinal()).collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn condition_examples() {
        // a=1, b=2, c=3
        assert!(check_condition(&nums(&[1, 1, 2, 3]), 2));
        assert!(!check_condition(&nums(&[1, 1, 2, 3]), 3));
        assert!(check_condition(&nums(&[4, 7, 1, 9, 2]), 5));
        assert!(!check_condition(&[], 1));
    }

    #[test]
    fn median_examples() {
        assert_eq!(weighted_median(&nums(&[1, 2, 3, 4])), Some(Value::Num(2)));
        assert_eq!(weighted_median(&nums(&[5, 5, 5])), Some(Value::Num(5)));
        assert_eq!(weighted_median(&[]), None);
    }

    #[test]
    fn bucketize_four_distinct() {
        let b = local_bucketize(&set(&[1, 2, 3, 4]), 2).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(values(&b[0]), vec![1, 2]);
        assert_eq!(values(&b[1]), vec![3, 4]);
        assert_eq!((b[0].bid, b[1].bid), (1, 2));
    }

    #[test]
    fn bucketize_impossible() {
        match local_bucketize(&set(&[7, 7]), 2) {
            Err(Error::InfeasibleBuckets { attribute, value, frequency, .. }) => {
                assert_eq!((attribute.as_str(), value.as_str(), frequency), ("s", "7", 2));
            }
            other => panic!("{other:?}"),
        }
        assert!(local_bucketize(&set(&[1, 2]), 0).is_err());
    }

    #[test]
    fn divide_examples() {
        let b = divide_buckets(&set(&[1, 2, 3, 4]), 2).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|b| b.len() == 2));

        // {a,a,b,c,d}: the two a's are tuples 1 and 2.
        let b = divide_buckets(&set(&[1, 1, 2, 3, 4]), 2).unwrap();
        assert_eq!(b.len(), 2);
        let mut sizes: Vec<usize> = b.iter().map(LocalBucket::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);
        let holder = |id: u64| b.iter().position(|bk| bk.members.iter().any(|p| p.0 == id)).unwrap();
        assert_ne!(holder(1), holder(2));
        assert!(first_violation(&b, 2).is_none());

        assert!(divide_buckets(&set(&[1, 1]), 2).is_err());
    }

    #[test]
    fn extra_eligibility_can_veto_splits() {
        let vp = set(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let split = local_bucketize(&vp, 2).unwrap();
        assert_eq!(split.len(), 4);
        let never = |_: &[ValuePair], _: usize| false;
        let whole = local_bucketize_with(&vp, 2, &never).unwrap();
        assert_eq!(whole.len(), 4);
        // Without splitting, ranges interleave (round-robin over the full set).
        assert_eq!(values(&whole[0]), vec![1, 5]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(ValuePairSet::new("s", vec![(1, Value::Num(1)), (1, Value::Num(2))]).is_err());
    }

    /// Backtracking search for an assignment into floor(n/l) buckets, each of
    /// size >= l with distinct values.
    fn feasible_by_search(vals: &[u8], l: usize) -> bool {
        let n = vals.len();
        if n == 0 || n < l {
            return false;
        }
        let b = n / l;
        let mut buckets: Vec<Vec<u8>> = vec![Vec::new(); b];
        fn go(i: usize, vals: &[u8], l: usize, buckets: &mut Vec<Vec<u8>>) -> bool {
            if i == vals.len() {
                return buckets.iter().all(|bk| bk.len() >= l);
            }
            let remaining = vals.len() - i;
            let deficit: usize = buckets.iter().map(|bk| l.saturating_sub(bk.len())).sum();
            if deficit > remaining {
                return false;
            }
            let mut tried_empty = false;
            for j in 0..buckets.len() {
                if buckets[j].contains(&vals[i]) {
                    continue;
                }
                if buckets[j].is_empty() {
                    if tried_empty {
                        continue;
                    }
                    tried_empty = true;
                }
                buckets[j].push(vals[i]);
                if go(i + 1, vals, l, buckets) {
                    return true;
                }
                buckets[j].pop();
            }
            false
        }
        go(0, vals, l, &mut buckets)
    }

    #[test]
    fn backtracking_oracle_agrees_on_small_cases() {
        assert!(feasible_by_search(&[0, 0, 1, 2], 2));
        assert!(!feasible_by_search(&[0, 0, 1, 2], 3));
        assert!(!feasible_by_search(&[0, 0], 2));
    }

    fn as_pairs(vals: &[u8]) -> Vec<ValuePair> {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| (i as u64 + 1, Value::Num(i64::from(v))))
            .collect()
    }

    proptest! {
        #[test]
        fn divide_succeeds_iff_eligible(vals in proptest::collection::vec(0u8..4, 0..9), l in 1usize..4) {
            let vp = ValuePairSet::new("s", as_pairs(&vals)).unwrap();
            let ok = divide_buckets(&vp, l).is_ok();
            prop_assert_eq!(ok, check_condition(vp.pairs(), l));
            prop_assert_eq!(ok, feasible_by_search(&vals, l));
        }

        #[test]
        fn bucketize_partitions_and_diversifies(vals in proptest::collection::vec(0i64..30, 1..120), l in 1usize..6) {
            let vp = set(&vals);
            let Ok(buckets) = local_bucketize(&vp, l) else {
                prop_assert!(!check_condition(vp.pairs(), l));
                return Ok(());
            };
            let mut ids: Vec<u64> = buckets.iter().flat_map(|b| b.members.iter().map(|p| p.0)).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (1..=vals.len() as u64).collect::<Vec<_>>());
            prop_assert!(first_violation(&buckets, l).is_none());
            for (i, b) in buckets.iter().enumerate() {
                prop_assert_eq!(b.bid, i as u32 + 1);
            }
            prop_assert_eq!(local_bucketize(&vp, l).unwrap(), buckets);
        }

        #[test]
        fn sibling_branches_do_not_interleave(vals in proptest::collection::vec(0i64..1000, 4..200), l in 1usize..5) {
            // Re-run the recursion to record which leaf set each bucket came from.
            let vp = set(&vals);
            prop_assume!(check_condition(vp.pairs(), l));
            let mut leaves: Vec<(i64, i64)> = Vec::new();
            let mut stack = vec![vp.pairs().to_vec()];
            while let Some(s) = stack.pop() {
                let m = weighted_median(&s).unwrap();
                let (a, b): (Vec<ValuePair>, Vec<ValuePair>) = s.iter().partition(|p| p.1 <= m);
                if check_condition(&a, l) && check_condition(&b, l) {
                    stack.push(b);
                    stack.push(a);
                } else {
                    let lo = s.iter().map(|p| p.1.ordinal()).min().unwrap();
                    let hi = s.iter().map(|p| p.1.ordinal()).max().unwrap();
                    leaves.push((lo, hi));
                }
            }
            for w in leaves.windows(2) {
                prop_assert!(w[0].1 < w[1].0, "{:?}", leaves);
            }
            let buckets = local_bucketize(&vp, l).unwrap();
            let mut covered = 0;
            for &(lo, hi) in &leaves {
                let inside: usize = buckets.iter().filter(|b| b.members.iter().all(|p| (lo..=hi).contains(&p.1.ordinal()))).map(|b| b.len()).sum();
                covered += inside;
            }
            prop_assert_eq!(covered, vals.len());
        }

        #[test]
        fn median_matches_sort_oracle(vals in proptest::collection::vec(-20i64..20, 1..50)) {
            let mut sorted = vals.clone();
            sorted.sort_unstable();
            let expected = sorted[vals.len().div_ceil(2) - 1];
            prop_assert_eq!(weighted_median(&nums(&vals)), Some(Value::Num(expected)));
        }

        #[test]
        fn divide_sizes_are_balanced(vals in proptest::collection::vec(0i64..10, 1..60), l in 1usize..5) {
            let vp = set(&vals);
            prop_assume!(check_condition(vp.pairs(), l));
            let b = divide_buckets(&vp, l).unwrap();
            let n = vals.len();
            prop_assert_eq!(b.len(), n / l);
            let lo = n / b.len();
            let hi = n.div_ceil(b.len());
            prop_assert!(b.iter().all(|bk| bk.len() == lo || bk.len() == hi));
            prop_assert!(first_violation(&b, l).is_none());
        }
    }
}
