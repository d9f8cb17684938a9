//! Personalized privacy for microdata where every individual chooses which
//! of their values are sensitive.
//!
//! Cells a person marks sensitive are published through local buckets of at
//! least `l` distinct values; the remaining QI cells are generalized within
//! local equivalence groups of at least `k` tuples that share the same set of
//! QI attributes. The [`verifier`] re-derives the disclosure probabilities of
//! a release from the adversary's side.
//!
//! ```no_run
//! use std::path::Path;
//! use lgb_core::{lgb, Mode, Table};
//!
//! let dir = Path::new("data");
//! let table = Table::load(&dir.join("data.csv"), &dir.join("mask.csv"), &dir.join("schema.csv"))?;
//! let release = lgb(&table, 5, 4, Mode::Mdp)?;
//! lgb_core::write_published(&release, Path::new("out"))?;
//! # Ok::<(), lgb_core::Error>(())
//! ```

pub mod bucketizer;
pub mod error;
pub mod generalize;
pub mod metrics;
pub mod microdata;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod taxonomy;
pub mod verifier;

#[cfg(test)]
mod testutil;

pub use bucketizer::{check_condition, divide_buckets, local_bucketize, LocalBucket, ValuePairSet};
pub use error::{Error, Result};
pub use generalize::{generalize, LocalEquivalenceGroup, Mode};
pub use metrics::{c_dm, ncp_table};
pub use microdata::{AttributeKind, AttributeSchema, QiSignature, RoleHint, Schema, Table, Tuple};
pub use pipeline::{lgb, read_published, write_published, Params, PublishedCell, PublishedTable};
pub use taxonomy::{GeneralizedValue, Hierarchy, Value};
pub use verifier::{audit, AuditReport, BackgroundKnowledge};
