//! End-to-end anonymization: local generalization of QI cells plus local
//! bucketization of every semi-sensitive and sensitive attribute.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bucketizer::{local_bucketize, LocalBucket, ValuePairSet};
use crate::error::{Error, Result};
use crate::generalize::{generalize, LocalEquivalenceGroup, Mode};
use crate::microdata::{RoleHint, Schema, Table};
use crate::taxonomy::{GeneralizedValue, Value};

mod io;

pub use io::{read_published, write_published, PUBLISHED_FILE};

/// Version string recorded in `params.json`.
pub const TOOL_VERSION: &str = concat!("lgb ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PublishedCell {
    General(GeneralizedValue),
    Bucket(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedRow {
    pub id: u64,
    pub gid: u32,
    pub cells: Vec<PublishedCell>,
}

/// Values of one bucket, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketValues {
    pub bid: u32,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub k: usize,
    pub l: usize,
    pub mode: Mode,
    pub seed: u64,
    pub density: Option<f64>,
    pub tool_version: String,
}

impl Params {
    pub fn new(k: usize, l: usize, mode: Mode) -> Self {
        Params {
            k,
            l,
            mode,
            seed: 0,
            density: None,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// The released table: rows ascending by id, bucket lists per bucketized
/// attribute and the local equivalence groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedTable {
    schema: Arc<Schema>,
    rows: Vec<PublishedRow>,
    buckets: BTreeMap<usize, Vec<BucketValues>>,
    groups: Vec<LocalEquivalenceGroup>,
    pub params: Params,
    index: HashMap<u64, usize>,
}

impl PublishedTable {
    pub(crate) fn assemble(
        schema: Arc<Schema>,
        mut rows: Vec<PublishedRow>,
        buckets: BTreeMap<usize, Vec<BucketValues>>,
        groups: Vec<LocalEquivalenceGroup>,
        params: Params,
    ) -> Self {
        rows.sort_by_key(|r| r.id);
        let index = rows.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        PublishedTable {
            schema,
            rows,
            buckets,
            groups,
            params,
            index,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn rows(&self) -> &[PublishedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: u64) -> Option<&PublishedRow> {
        self.index.get(&id).map(|&i| &self.rows[i])
    }

    pub fn groups(&self) -> &[LocalEquivalenceGroup] {
        &self.groups
    }

    /// Attributes with a bucket list, in schema order.
    pub fn bucketized_attributes(&self) -> impl Iterator<Item = usize> + '_ {
        self.buckets.keys().copied()
    }

    /// Buckets of `attr`, ascending by BID; empty for attributes without a
    /// bucket list.
    pub fn buckets(&self, attr: usize) -> &[BucketValues] {
        self.buckets.get(&attr).map_or(&[], Vec::as_slice)
    }

    pub fn bucket(&self, attr: usize, bid: u32) -> Option<&BucketValues> {
        let list = self.buckets.get(&attr)?;
        list.binary_search_by_key(&bid, |b| b.bid).ok().map(|i| &list[i])
    }
}

/// Attributes that get a bucket list: declared semi-sensitive or sensitive.
pub fn bucketized_attributes(schema: &Schema) -> Vec<usize> {
    schema
        .attrs()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.role != RoleHint::Qi)
        .map(|(j, _)| j)
        .collect()
}

/// Local buckets of every flagged column, keyed by schema index.
pub fn bucketize_table(table: &Table, l: usize) -> Result<BTreeMap<usize, Vec<LocalBucket>>> {
    if l == 0 {
        return Err(Error::InvalidParameter("l must be at least 1".into()));
    }
    let schema = table.schema();
    let results: Vec<Result<(usize, Vec<LocalBucket>)>> = bucketized_attributes(schema)
        .into_par_iter()
        .map(|j| {
            let attr = schema.attr(j);
            let pairs = (0..table.len())
                .filter(|&r| table.is_sensitive(r, j))
                .map(|r| (table.rows()[r].id, table.value(r, j)))
                .collect::<Vec<_>>();
            if pairs.is_empty() {
                return Ok((j, Vec::new()));
            }
            let vp = ValuePairSet::new(&attr.name, pairs)?;
            let buckets = local_bucketize(&vp, l).map_err(|e| match e {
                Error::InfeasibleBuckets { attribute, value, frequency, size, l } => Error::InfeasibleBuckets {
                    value: relabel(schema, j, &value),
                    attribute,
                    frequency,
                    size,
                    l,
                },
                other => other,
            })?;
            Ok((j, buckets))
        })
        .collect();
    results.into_iter().collect()
}

fn relabel(schema: &Schema, attr: usize, rendered: &str) -> String {
    rendered
        .strip_prefix('#')
        .and_then(|r| r.parse::<u32>().ok())
        .map(|rank| schema.attr(attr).render_value(Value::Leaf(rank)))
        .unwrap_or_else(|| rendered.to_string())
}

/// Run generalization and bucketization and assemble the published table.
pub fn lgb(table: &Table, k: usize, l: usize, mode: Mode) -> Result<PublishedTable> {
    lgb_with_params(table, Params::new(k, l, mode))
}

pub fn lgb_with_params(table: &Table, params: Params) -> Result<PublishedTable> {
    if params.l == 0 {
        return Err(Error::InvalidParameter("l must be at least 1".into()));
    }
    let (groups, buckets) = rayon::join(
        || generalize(table, params.k, params.mode),
        || bucketize_table(table, params.l),
    );
    let (groups, buckets) = (groups?, buckets?);
    Ok(assemble(table, groups, &buckets, params))
}

/// Combine a grouping and a bucketization of `table`.
pub fn assemble(
    table: &Table,
    groups: Vec<LocalEquivalenceGroup>,
    buckets: &BTreeMap<usize, Vec<LocalBucket>>,
    params: Params,
) -> PublishedTable {
    let n = table.len();
    let width = table.schema().len();
    let mut gid_of = vec![0u32; n];
    let mut cells: Vec<Vec<Option<PublishedCell>>> = vec![vec![None; width]; n];
    for g in &groups {
        for &id in &g.members {
            let r = table.row_index(id).expect("group members come from the table");
            gid_of[r] = g.gid;
            for (&a, &gv) in &g.generalized {
                cells[r][a] = Some(PublishedCell::General(gv));
            }
        }
    }
    let mut lists = BTreeMap::new();
    for (&a, list) in buckets {
        let mut values = Vec::with_capacity(list.len());
        for b in list {
            let mut vs = Vec::with_capacity(b.len());
            for &(id, v) in &b.members {
                let r = table.row_index(id).expect("bucket members come from the table");
                cells[r][a] = Some(PublishedCell::Bucket(b.bid));
                vs.push(v);
            }
            vs.sort_unstable();
            values.push(BucketValues { bid: b.bid, values: vs });
        }
        values.sort_by_key(|b| b.bid);
        lists.insert(a, values);
    }
    let rows = (0..n)
        .map(|r| PublishedRow {
            id: table.rows()[r].id,
            gid: gid_of[r],
            cells: cells[r]
                .iter()
                .map(|c| c.expect("every cell is generalized or bucketized"))
                .collect(),
        })
        .collect();
    PublishedTable::assemble(table.schema().clone(), rows, lists, groups, params)
}
