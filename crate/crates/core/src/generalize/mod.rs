//! Local generalization: split every QI-signature subset into local
//! equivalence groups of at least `k` tuples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microdata::{qi_partition, QiSignature, QiSubset, Table};
use crate::taxonomy::{generalize_values, GeneralizedValue, Value};

pub mod mdp;
pub mod ncp;

pub use mdp::{choose_dimension, generalize_mdp};
pub use ncp::{divide_table, find_seeds, generalize_ncp, pair_ncp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mdp,
    Ncp,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdp" => Ok(Mode::Mdp),
            "ncp" => Ok(Mode::Ncp),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}` (expected mdp or ncp)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Mdp => "mdp",
            Mode::Ncp => "ncp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalEquivalenceGroup {
    pub gid: u32,
    /// Ascending tuple ids.
    pub members: Vec<u64>,
    pub signature: QiSignature,
    /// One entry per signature attribute, keyed by schema index.
    pub generalized: BTreeMap<usize, GeneralizedValue>,
}

impl LocalEquivalenceGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn generalize(table: &Table, k: usize, mode: Mode) -> Result<Vec<LocalEquivalenceGroup>> {
    match mode {
        Mode::Mdp => generalize_mdp(table, k),
        Mode::Ncp => generalize_ncp(table, k),
    }
}

/// Row-index sets emitted for one subset, in emission order.
type Emitted = Vec<Vec<usize>>;

/// Shared driver: feasibility check, per-subset work in parallel, then a
/// deterministic merge numbering groups in emission order.
pub(crate) fn run<F>(table: &Table, k: usize, split_subset: F) -> Result<Vec<LocalEquivalenceGroup>>
where
    F: Fn(&Table, &[usize], &QiSignature, usize) -> Emitted + Sync,
{
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let subsets = qi_partition(table);
    check_subsets(table, &subsets, k)?;

    let per_subset: Vec<(QiSignature, Emitted)> = subsets
        .par_iter()
        .map(|s| {
            let rows: Vec<usize> = s
                .ids
                .iter()
                .map(|&id| table.row_index(id).expect("partition ids come from the table"))
                .collect();
            (s.signature.clone(), split_subset(table, &rows, &s.signature, k))
        })
        .collect();

    let mut groups = Vec::new();
    for (signature, emitted) in per_subset {
        for rows in emitted {
            let gid = groups.len() as u32 + 1;
            groups.push(build_group(table, gid, &signature, rows)?);
        }
    }
    Ok(groups)
}

fn check_subsets(table: &Table, subsets: &[QiSubset], k: usize) -> Result<()> {
    match subsets.iter().find(|s| s.ids.len() < k) {
        Some(s) => Err(Error::InfeasibleGroup {
            signature: s.signature.names(table.schema()),
            size: s.ids.len(),
            k,
        }),
        None => Ok(()),
    }
}

pub(crate) fn build_group(
    table: &Table,
    gid: u32,
    signature: &QiSignature,
    rows: Vec<usize>,
) -> Result<LocalEquivalenceGroup> {
    let mut generalized = BTreeMap::new();
    for &a in signature.attrs() {
        let values: Vec<Value> = rows.iter().map(|&r| table.value(r, a)).collect();
        generalized.insert(a, generalize_values(table.schema().attr(a), &values)?);
    }
    let mut members: Vec<u64> = rows.iter().map(|&r| table.rows()[r].id).collect();
    members.sort_unstable();
    Ok(LocalEquivalenceGroup {
        gid,
        members,
        signature: signature.clone(),
        generalized,
    })
}

/// Map tuple ids to row indices, requiring a shared QI signature.
pub(crate) fn rows_with_signature(table: &Table, ids: &[u64]) -> Result<(Vec<usize>, Option<QiSignature>)> {
    let mut rows = Vec::with_capacity(ids.len());
    let mut sig: Option<QiSignature> = None;
    for &id in ids {
        let r = table.row_index(id).ok_or(Error::UnknownTuple(id))?;
        let s = QiSignature::from_mask_row(&table.mask()[r]);
        match &sig {
            Some(prev) if *prev != s => {
                return Err(Error::InvalidParameter(format!(
                    "tuple {id} does not share the QI signature of the set"
                )))
            }
            None => sig = Some(s),
            _ => {}
        }
        rows.push(r);
    }
    Ok((rows, sig))
}

/// Structural check of a grouping: partition of the table, sizes, signature
/// homogeneity and value containment. Returns a description of the first
/// problem found.
pub fn audit_groups(table: &Table, groups: &[LocalEquivalenceGroup], k: usize) -> Option<String> {
    let mut seen = vec![false; table.len()];
    for g in groups {
        if g.len() < k {
            return Some(format!("group {} has {} < k = {k} members", g.gid, g.len()));
        }
        for &id in &g.members {
            let Some(r) = table.row_index(id) else {
                return Some(format!("group {} names unknown tuple {id}", g.gid));
            };
            if std::mem::replace(&mut seen[r], true) {
                return Some(format!("tuple {id} appears in two groups"));
            }
            if QiSignature::from_mask_row(&table.mask()[r]) != g.signature {
                return Some(format!("tuple {id} does not match the signature of group {}", g.gid));
            }
            for (&a, gv) in &g.generalized {
                let attr = table.schema().attr(a);
                if !gv.contains(table.value(r, a), attr.hierarchy_arc().map(|h| h.as_ref())) {
                    return Some(format!("group {}: value of tuple {id} on `{}` not covered", g.gid, attr.name));
                }
            }
        }
        if g.generalized.keys().copied().collect::<Vec<_>>() != g.signature.attrs() {
            return Some(format!("group {} generalizes attributes outside its signature", g.gid));
        }
    }
    seen.iter()
        .position(|s| !s)
        .map(|r| format!("tuple {} is in no group", table.rows()[r].id))
}
