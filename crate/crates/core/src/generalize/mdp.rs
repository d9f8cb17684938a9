//! Multi-dimensional partition within each QI-signature subset.

use std::collections::HashSet;

use num::Zero;

use crate::error::{Error, Result};
use crate::generalize::{rows_with_signature, run, LocalEquivalenceGroup};
use crate::microdata::{AttributeKind, QiSignature, Table};
use crate::taxonomy::{AttributeDomain, Rational};

/// Normalized spread of `attr` over `rows`.
fn spread(table: &Table, rows: &[usize], attr: usize, domain: &AttributeDomain) -> Rational {
    match table.schema().attr(attr).kind {
        AttributeKind::Numeric => {
            let extent = domain.extent();
            if extent == 0 {
                return Rational::zero();
            }
            let vals = rows.iter().map(|&r| table.value(r, attr).ordinal());
            let lo = vals.clone().min().unwrap_or(0);
            let hi = vals.max().unwrap_or(0);
            Rational::new(i128::from(hi) - i128::from(lo), extent)
        }
        AttributeKind::Categorical => {
            let distinct: HashSet<i64> = rows.iter().map(|&r| table.value(r, attr).ordinal()).collect();
            Rational::new(distinct.len() as i128, domain.extent())
        }
    }
}

fn choose(table: &Table, rows: &[usize], qi_set: &[usize], domains: &[AttributeDomain]) -> Option<usize> {
    let schema = table.schema();
    qi_set
        .iter()
        .map(|&a| (a, spread(table, rows, a, &domains[a])))
        .max_by(|(a, sa), (b, sb)| {
            sa.cmp(sb)
                .then_with(|| schema.attr(*b).name.cmp(&schema.attr(*a).name))
        })
        .map(|(a, _)| a)
}

/// Attribute of `qi_set` with the widest normalized spread over the tuples;
/// ties go to the lexicographically smallest name.
pub fn choose_dimension(table: &Table, ids: &[u64], qi_set: &[usize]) -> Result<usize> {
    if qi_set.is_empty() {
        return Err(Error::InvalidParameter("empty QI set".into()));
    }
    let (rows, _) = rows_with_signature(table, ids)?;
    let domains = table.domain_stats();
    Ok(choose(table, &rows, qi_set, &domains).expect("non-empty qi_set"))
}

fn median_split(table: &Table, rows: &[usize], attr: usize) -> (Vec<usize>, Vec<usize>) {
    let mut keys: Vec<i64> = rows.iter().map(|&r| table.value(r, attr).ordinal()).collect();
    keys.sort_unstable();
    let median = keys[keys.len().div_ceil(2) - 1];
    rows.iter().partition(|&&r| table.value(r, attr).ordinal() <= median)
}

fn split_subset(table: &Table, rows: &[usize], signature: &QiSignature, k: usize, domains: &[AttributeDomain]) -> Vec<Vec<usize>> {
    let mut emitted = Vec::new();
    let mut work = vec![rows.to_vec()];
    while let Some(set) = work.pop() {
        let mut qi_set: Vec<usize> = signature.attrs().to_vec();
        let mut split = None;
        while let Some(attr) = choose(table, &set, &qi_set, domains) {
            let (left, right) = median_split(table, &set, attr);
            if left.len() >= k && right.len() >= k {
                split = Some((left, right));
                break;
            }
            qi_set.retain(|&a| a != attr);
        }
        match split {
            Some((left, right)) => {
                work.push(left);
                work.push(right);
            }
            None => emitted.push(set),
        }
    }
    emitted
}

pub fn generalize_mdp(table: &Table, k: usize) -> Result<Vec<LocalEquivalenceGroup>> {
    let domains = table.domain_stats();
    run(table, k, |t, rows, sig, k| split_subset(t, rows, sig, k, &domains))
}
