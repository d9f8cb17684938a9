//! Greedy top-down bisection minimizing NCP within each QI-signature subset.

use num::Zero;

use crate::error::{Error, Result};
use crate::generalize::{rows_with_signature, run, LocalEquivalenceGroup};
use crate::microdata::{AttributeKind, QiSignature, Table};
use crate::taxonomy::{generalize_values, ncp_cell, AttributeDomain, Hierarchy, Rational};

/// Farthest-point hops used by [`find_seeds`].
pub const SEED_ROUNDS: usize = 3;

const TIE_EPS: f64 = 1e-12;

/// Exact NCP of generalizing two tuples together over `qi_set`.
pub fn pair_ncp(table: &Table, a: u64, b: u64, qi_set: &[usize]) -> Result<Rational> {
    let (rows, _) = rows_with_signature(table, &[a, b])?;
    let sig = QiSignature::from_mask_row(&table.mask()[rows[0]]);
    if let Some(&attr) = qi_set.iter().find(|&&attr| !sig.contains(attr)) {
        return Err(Error::InvalidParameter(format!(
            "`{}` is not a QI attribute of tuple {a}",
            table.schema().attr(attr).name
        )));
    }
    let domains = table.domain_stats();
    let mut total = Rational::zero();
    for &attr in qi_set {
        let schema = table.schema().attr(attr);
        let g = generalize_values(schema, &[table.value(rows[0], attr), table.value(rows[1], attr)])?;
        total += ncp_cell(schema, &g, &domains[attr])?;
    }
    Ok(total)
}

/// Running generalization box of a set of tuples on one attribute.
#[derive(Debug, Clone, Copy)]
struct Extent {
    lo: i64,
    hi: i64,
}

/// Per-attribute view for floating-point NCP in the hot loops.
struct Dims<'a> {
    table: &'a Table,
    attrs: Vec<(usize, Option<&'a Hierarchy>, f64)>,
}

impl<'a> Dims<'a> {
    fn new(table: &'a Table, qi_set: &[usize], domains: &[AttributeDomain]) -> Self {
        let attrs = qi_set
            .iter()
            .map(|&a| {
                let schema = table.schema().attr(a);
                let h = match schema.kind {
                    AttributeKind::Categorical => Some(schema.hierarchy()),
                    AttributeKind::Numeric => None,
                };
                (a, h, domains[a].extent() as f64)
            })
            .collect();
        Dims { table, attrs }
    }

    fn cell(&self, i: usize, e: Extent) -> f64 {
        let (_, h, extent) = self.attrs[i];
        match h {
            None if extent == 0.0 => 0.0,
            None => (e.hi - e.lo) as f64 / extent,
            Some(h) => {
                let node = h.lca_of_range(e.lo as u32, e.hi as u32);
                f64::from(h.leaf_count(node)) / extent
            }
        }
    }

    fn point(&self, row: usize) -> Vec<Extent> {
        self.attrs
            .iter()
            .map(|&(a, _, _)| {
                let v = self.table.value(row, a).ordinal();
                Extent { lo: v, hi: v }
            })
            .collect()
    }

    /// NCP of the box extended by `row`.
    fn cost_with(&self, b: &[Extent], row: usize) -> f64 {
        b.iter()
            .enumerate()
            .map(|(i, &e)| {
                let v = self.table.value(row, self.attrs[i].0).ordinal();
                self.cell(i, Extent { lo: e.lo.min(v), hi: e.hi.max(v) })
            })
            .sum()
    }

    fn pair(&self, a: usize, b: usize) -> f64 {
        self.cost_with(&self.point(a), b)
    }
}

/// Row farthest from `from` by pair NCP; ties go to the lower id.
fn farthest(dims: &Dims, rows: &[usize], from: usize) -> usize {
    let ids = dims.table.rows();
    let mut best: Option<(usize, f64)> = None;
    for &r in rows {
        if r == from {
            continue;
        }
        let d = dims.pair(from, r);
        best = match best {
            Some((b, bd)) if bd > d + TIE_EPS || ((bd - d).abs() <= TIE_EPS && ids[b].id < ids[r].id) => Some((b, bd)),
            _ => Some((r, d)),
        };
    }
    best.expect("at least two rows").0
}

fn seeds(dims: &Dims, rows: &[usize]) -> (usize, usize) {
    let ids = dims.table.rows();
    let start = *rows.iter().min_by_key(|&&r| ids[r].id).expect("non-empty");
    let (mut prev, mut cur) = (start, start);
    for _ in 0..SEED_ROUNDS {
        let next = farthest(dims, rows, cur);
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Heuristic far pair: start at the smallest id and hop to the farthest
/// tuple [`SEED_ROUNDS`] times; the last two endpoints are the seeds.
pub fn find_seeds(table: &Table, ids: &[u64], qi_set: &[usize]) -> Result<(u64, u64)> {
    if ids.len() < 2 {
        return Err(Error::InvalidParameter("find_seeds needs at least two tuples".into()));
    }
    let (rows, _) = rows_with_signature(table, ids)?;
    let domains = table.domain_stats();
    let dims = Dims::new(table, qi_set, &domains);
    let (a, b) = seeds(&dims, &rows);
    Ok((table.rows()[a].id, table.rows()[b].id))
}

fn divide(dims: &Dims, rows: &[usize], sd1: usize, sd2: usize) -> (Vec<usize>, Vec<usize>) {
    let mut sides = [vec![sd1], vec![sd2]];
    for &r in rows {
        if r == sd1 || r == sd2 {
            continue;
        }
        let d = [dims.pair(sd1, r), dims.pair(sd2, r)];
        let side = if (d[0] - d[1]).abs() <= TIE_EPS {
            usize::from(sides[1].len() < sides[0].len())
        } else {
            usize::from(d[1] < d[0])
        };
        sides[side].push(r);
    }
    let [a, b] = sides;
    (a, b)
}

/// Assign every tuple to the seed with the smaller pair NCP; ties go to the
/// smaller side, then to `sd1`'s side. Tuples are placed in ascending id
/// order.
pub fn divide_table(table: &Table, ids: &[u64], sd1: u64, sd2: u64, qi_set: &[usize]) -> Result<(Vec<u64>, Vec<u64>)> {
    if sd1 == sd2 || !ids.contains(&sd1) || !ids.contains(&sd2) {
        return Err(Error::InvalidParameter("seeds must be two distinct members of the set".into()));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let (rows, _) = rows_with_signature(table, &sorted)?;
    let domains = table.domain_stats();
    let dims = Dims::new(table, qi_set, &domains);
    let r1 = table.row_index(sd1).expect("checked");
    let r2 = table.row_index(sd2).expect("checked");
    let (a, b) = divide(&dims, &rows, r1, r2);
    let to_ids = |v: Vec<usize>| {
        let mut out: Vec<u64> = v.into_iter().map(|r| table.rows()[r].id).collect();
        out.sort_unstable();
        out
    };
    Ok((to_ids(a), to_ids(b)))
}

fn split_subset(table: &Table, rows: &[usize], signature: &QiSignature, k: usize, domains: &[AttributeDomain]) -> Vec<Vec<usize>> {
    let dims = Dims::new(table, signature.attrs(), domains);
    let mut emitted = Vec::new();
    let mut work = vec![rows.to_vec()];
    while let Some(set) = work.pop() {
        if set.len() < 2 * k {
            emitted.push(set);
            continue;
        }
        let (sd1, sd2) = seeds(&dims, &set);
        let (left, right) = divide(&dims, &set, sd1, sd2);
        if left.len() >= k && right.len() >= k {
            work.push(left);
            work.push(right);
        } else {
            emitted.push(set);
        }
    }
    emitted
}

pub fn generalize_ncp(table: &Table, k: usize) -> Result<Vec<LocalEquivalenceGroup>> {
    let domains = table.domain_stats();
    run(table, k, |t, rows, sig, k| {
        let mut sorted = rows.to_vec();
        sorted.sort_unstable_by_key(|&r| t.rows()[r].id);
        split_subset(t, &sorted, sig, k, &domains)
    })
}
