//! Utility metrics: discernibility, table NCP and the aggregate-query
//! workload.

use num::bigint::BigInt;
use num::{BigRational, Zero};

use crate::error::Result;
use crate::generalize::LocalEquivalenceGroup;
use crate::microdata::{AttributeKind, Schema, Table};
use crate::pipeline::{PublishedCell, PublishedTable};
use crate::taxonomy::{ncp_cell, AttributeDomain, GeneralizedValue, Rational, Value};

mod density;
mod query;

pub use density::density_mask;
pub use query::{
    answer_query, default_sum_attribute, evaluate_workload, gen_queries, Query, QueryAnswer, WorkloadSummary,
    QUERY_ATTRIBUTES,
};

pub fn big(r: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Sum of squared group sizes.
pub fn c_dm(groups: &[LocalEquivalenceGroup]) -> u128 {
    groups.iter().map(|g| (g.len() as u128).pow(2)).sum()
}

/// NCP summed over every tuple and generalized cell, given per-attribute
/// domain statistics of the original table.
pub fn ncp_of_groups_with(
    schema: &Schema,
    groups: &[LocalEquivalenceGroup],
    domains: &[AttributeDomain],
) -> Result<BigRational> {
    // Per-attribute integer numerator over the attribute's extent.
    let mut numer = vec![0i128; schema.len()];
    for g in groups {
        for (&a, gv) in &g.generalized {
            let cell = ncp_cell(schema.attr(a), gv, &domains[a])?;
            if cell.is_zero() {
                continue;
            }
            let width = match *gv {
                GeneralizedValue::Interval { lo, hi } => i128::from(hi) - i128::from(lo),
                GeneralizedValue::Node(n) => i128::from(schema.attr(a).hierarchy().leaf_count(n)),
            };
            numer[a] += width * g.len() as i128;
        }
    }
    let mut total = BigRational::zero();
    for (a, n) in numer.into_iter().enumerate() {
        let extent = domains[a].extent();
        if n != 0 && extent != 0 {
            total += BigRational::new(BigInt::from(n), BigInt::from(extent));
        }
    }
    Ok(total)
}

pub fn ncp_of_groups(table: &Table, groups: &[LocalEquivalenceGroup]) -> Result<BigRational> {
    ncp_of_groups_with(table.schema(), groups, &table.domain_stats())
}

/// Domain statistics recoverable from a release alone: interval bounds and
/// bucket values reach the column extremes.
pub fn published_domains(table: &PublishedTable) -> Vec<AttributeDomain> {
    let schema = table.schema();
    (0..schema.len())
        .map(|j| match schema.attr(j).kind {
            AttributeKind::Categorical => AttributeDomain::Categorical {
                leaves: schema.attr(j).hierarchy().domain_size(),
            },
            AttributeKind::Numeric => {
                let mut lo = i64::MAX;
                let mut hi = i64::MIN;
                for row in table.rows() {
                    if let PublishedCell::General(GeneralizedValue::Interval { lo: a, hi: b }) = row.cells[j] {
                        lo = lo.min(a);
                        hi = hi.max(b);
                    }
                }
                for b in table.buckets(j) {
                    for v in &b.values {
                        if let Value::Num(x) = *v {
                            lo = lo.min(x);
                            hi = hi.max(x);
                        }
                    }
                }
                if lo > hi {
                    AttributeDomain::Numeric { min: 0, max: 0 }
                } else {
                    AttributeDomain::Numeric { min: lo, max: hi }
                }
            }
        })
        .collect()
}

/// NCP of a release. Bucketized cells contribute nothing.
pub fn ncp_table(table: &PublishedTable, domains: &[AttributeDomain]) -> Result<BigRational> {
    ncp_of_groups_with(table.schema(), table.groups(), domains)
}

/// Lossy conversion for reporting.
pub fn to_f64(r: &BigRational) -> f64 {
    use num::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}
