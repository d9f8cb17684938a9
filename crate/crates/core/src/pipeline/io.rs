//! On-disk layout of a release: `published.csv`, one `buckets_<attr>.csv`
//! per bucketized attribute, `params.json`, and the schema with its
//! hierarchies.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generalize::LocalEquivalenceGroup;
use crate::microdata::{csv_field, QiSignature, Schema};
use crate::pipeline::{bucketized_attributes, BucketValues, Params, PublishedCell, PublishedRow, PublishedTable};
use crate::taxonomy::GeneralizedValue;

pub const PUBLISHED_FILE: &str = "published.csv";
const PARAMS_FILE: &str = "params.json";
const SCHEMA_FILE: &str = "schema.csv";

fn bucket_file(attr: &str) -> String {
    format!("buckets_{attr}.csv")
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn render_cell(schema: &Schema, attr: usize, cell: &PublishedCell) -> String {
    match cell {
        PublishedCell::General(g) => csv_field(&schema.attr(attr).render_generalized(g)),
        PublishedCell::Bucket(b) => format!("B{b}"),
    }
}

/// Write a release into `dir`, creating it if needed.
pub fn write_published(table: &PublishedTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = table.schema();
    schema.write(dir)?;

    let mut body = String::from("id,GID");
    for name in schema.names() {
        body.push(',');
        body.push_str(name);
    }
    body.push('\n');
    for row in table.rows() {
        body.push_str(&format!("{},{}", row.id, row.gid));
        for (j, cell) in row.cells.iter().enumerate() {
            body.push(',');
            body.push_str(&render_cell(schema, j, cell));
        }
        body.push('\n');
    }
    write_file(&dir.join(PUBLISHED_FILE), &body)?;

    for j in table.bucketized_attributes() {
        let attr = schema.attr(j);
        let mut body = String::from("BID,value\n");
        for b in table.buckets(j) {
            for &v in &b.values {
                body.push_str(&format!("{},{}\n", b.bid, csv_field(&attr.render_value(v))));
            }
        }
        write_file(&dir.join(bucket_file(&attr.name)), &body)?;
    }

    let mut params = serde_json::to_string_pretty(&table.params).expect("params serialize");
    params.push('\n');
    write_file(&dir.join(PARAMS_FILE), &params)
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    if !path.exists() {
        return Err(Error::malformed(path, "file is missing"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))
}

fn parse_bid(raw: &str) -> Option<u32> {
    let digits = raw.strip_prefix('B')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&b| b > 0)
}

/// Read a release written by [`write_published`].
pub fn read_published(dir: &Path) -> Result<PublishedTable> {
    let schema_path = dir.join(SCHEMA_FILE);
    if !schema_path.exists() {
        return Err(Error::malformed(&schema_path, "file is missing"));
    }
    let schema = Arc::new(Schema::load(&schema_path)?);

    let params_path = dir.join(PARAMS_FILE);
    let raw = fs::read_to_string(&params_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::malformed(&params_path, "file is missing"),
        _ => Error::io(&params_path, e),
    })?;
    let params: Params = serde_json::from_str(&raw).map_err(|source| Error::Json {
        path: params_path.clone(),
        source,
    })?;

    let bucketized = bucketized_attributes(&schema);
    let path = dir.join(PUBLISHED_FILE);
    let records = read_records(&path)?;
    let (header, body) = records
        .split_first()
        .ok_or_else(|| Error::malformed(&path, "empty file"))?;
    let expected: Vec<&str> = ["id", "GID"].into_iter().chain(schema.names()).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::malformed(&path, format!("header does not read {}", expected.join(","))));
    }
    let mut rows = Vec::with_capacity(body.len());
    for (i, rec) in body.iter().enumerate() {
        let line = i + 2;
        if rec.len() != expected.len() {
            return Err(Error::malformed(&path, format!("line {line}: {} fields, expected {}", rec.len(), expected.len())));
        }
        let id = rec[0]
            .parse::<u64>()
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| Error::malformed(&path, format!("line {line}: invalid id `{}`", &rec[0])))?;
        let gid = rec[1]
            .parse::<u32>()
            .ok()
            .filter(|&g| g > 0)
            .ok_or_else(|| Error::malformed(&path, format!("line {line}: invalid GID `{}`", &rec[1])))?;
        let mut cells = Vec::with_capacity(schema.len());
        for (j, raw) in rec.iter().skip(2).enumerate() {
            let attr = schema.attr(j);
            let cell = match parse_bid(raw) {
                Some(b) if bucketized.contains(&j) => PublishedCell::Bucket(b),
                Some(_) => {
                    return Err(Error::malformed(
                        &path,
                        format!("line {line}: QI attribute `{}` holds bucket id `{raw}`", attr.name),
                    ))
                }
                None => PublishedCell::General(attr.parse_generalized(raw).ok_or_else(|| {
                    Error::malformed(&path, format!("line {line}, column `{}`: cannot parse `{raw}`", attr.name))
                })?),
            };
            cells.push(cell);
        }
        rows.push(PublishedRow { id, gid, cells });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = rows.iter().find(|r| !seen.insert(r.id)) {
        return Err(Error::malformed(&path, format!("duplicate id {}", dup.id)));
    }

    let mut buckets = BTreeMap::new();
    for &j in &bucketized {
        let attr = schema.attr(j);
        let bpath = dir.join(bucket_file(&attr.name));
        let records = read_records(&bpath)?;
        match records.first() {
            Some(h) if h.iter().eq(["BID", "value"]) => {}
            _ => return Err(Error::malformed(&bpath, "header does not read BID,value")),
        }
        let mut by_bid: BTreeMap<u32, Vec<_>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate().skip(1) {
            let line = i + 1;
            if rec.len() != 2 {
                return Err(Error::malformed(&bpath, format!("line {line}: expected BID,value")));
            }
            let bid = rec[0]
                .parse::<u32>()
                .ok()
                .filter(|&b| b > 0)
                .ok_or_else(|| Error::malformed(&bpath, format!("line {line}: invalid BID `{}`", &rec[0])))?;
            let v = attr
                .parse_value(&rec[1])
                .ok_or_else(|| Error::malformed(&bpath, format!("line {line}: invalid value `{}`", &rec[1])))?;
            by_bid.entry(bid).or_default().push(v);
        }
        let list: Vec<BucketValues> = by_bid
            .into_iter()
            .map(|(bid, mut values)| {
                values.sort_unstable();
                BucketValues { bid, values }
            })
            .collect();
        for r in &rows {
            if let PublishedCell::Bucket(b) = r.cells[j] {
                if list.binary_search_by_key(&b, |x| x.bid).is_err() {
                    return Err(Error::malformed(
                        &bpath,
                        format!("tuple {} refers to missing bucket B{b}", r.id),
                    ));
                }
            }
        }
        buckets.insert(j, list);
    }

    let groups = rebuild_groups(&rows).map_err(|detail| Error::malformed(&path, detail))?;
    Ok(PublishedTable::assemble(schema, rows, buckets, groups, params))
}

fn rebuild_groups(rows: &[PublishedRow]) -> std::result::Result<Vec<LocalEquivalenceGroup>, String> {
    let mut groups: BTreeMap<u32, LocalEquivalenceGroup> = BTreeMap::new();
    for r in rows {
        let generalized: BTreeMap<usize, GeneralizedValue> = r
            .cells
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match c {
                PublishedCell::General(g) => Some((j, *g)),
                PublishedCell::Bucket(_) => None,
            })
            .collect();
        match groups.get_mut(&r.gid) {
            Some(g) if g.generalized == generalized => g.members.push(r.id),
            Some(_) => return Err(format!("tuple {} disagrees with the other members of group {}", r.id, r.gid)),
            None => {
                let flags: Vec<bool> = (0..r.cells.len()).map(|j| !generalized.contains_key(&j)).collect();
                groups.insert(
                    r.gid,
                    LocalEquivalenceGroup {
                        gid: r.gid,
                        members: vec![r.id],
                        signature: QiSignature::from_mask_row(&flags),
                        generalized,
                    },
                );
            }
        }
    }
    Ok(groups
        .into_values()
        .map(|mut g| {
            g.members.sort_unstable();
            g
        })
        .collect())
}
