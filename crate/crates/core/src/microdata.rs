//! The microdata table: schema, rows, per-cell sensitivity flags, QI
//! signatures and the QI partition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{AttributeDomain, GeneralizedValue, Hierarchy, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

impl FromStr for AttributeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(AttributeKind::Numeric),
            "categorical" => Ok(AttributeKind::Categorical),
            other => Err(Error::Schema(format!("unknown attribute kind `{other}`"))),
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeKind::Numeric => "numeric",
            AttributeKind::Categorical => "categorical",
        })
    }
}

/// Declared role of an attribute. Checked against the mask, never trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoleHint {
    Qi,
    SemiSensitive,
    Sensitive,
}

impl FromStr for RoleHint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qi" => Ok(RoleHint::Qi),
            "semi-sensitive" => Ok(RoleHint::SemiSensitive),
            "sensitive" => Ok(RoleHint::Sensitive),
            other => Err(Error::Schema(format!("unknown role hint `{other}`"))),
        }
    }
}

impl fmt::Display for RoleHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoleHint::Qi => "qi",
            RoleHint::SemiSensitive => "semi-sensitive",
            RoleHint::Sensitive => "sensitive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub role: RoleHint,
    hierarchy: Option<Arc<Hierarchy>>,
}

impl AttributeSchema {
    /// Categorical attributes need a hierarchy; numeric ones ignore it.
    pub fn new(
        name: impl Into<String>,
        kind: AttributeKind,
        role: RoleHint,
        hierarchy: Option<Arc<Hierarchy>>,
    ) -> Self {
        let hierarchy = match kind {
            AttributeKind::Categorical => hierarchy,
            AttributeKind::Numeric => None,
        };
        AttributeSchema {
            name: name.into(),
            kind,
            role,
            hierarchy,
        }
    }

    /// The attribute's hierarchy.
    ///
    /// Panics for numeric attributes and for categorical attributes built
    /// without one; [`Schema::new`] rejects the latter.
    pub fn hierarchy(&self) -> &Hierarchy {
        self.hierarchy
            .as_deref()
            .unwrap_or_else(|| panic!("attribute `{}` has no hierarchy", self.name))
    }

    pub fn hierarchy_arc(&self) -> Option<&Arc<Hierarchy>> {
        self.hierarchy.as_ref()
    }

    pub fn parse_value(&self, raw: &str) -> Option<Value> {
        match self.kind {
            AttributeKind::Numeric => raw.parse::<i64>().ok().map(Value::Num),
            AttributeKind::Categorical => self.hierarchy().leaf_rank(raw).map(Value::Leaf),
        }
    }

    pub fn render_value(&self, v: Value) -> String {
        match v {
            Value::Num(x) => x.to_string(),
            Value::Leaf(r) => self.hierarchy().leaf_label(r).to_string(),
        }
    }

    /// `[lo-hi]` for intervals, the node label for hierarchy nodes.
    pub fn render_generalized(&self, g: &GeneralizedValue) -> String {
        match *g {
            GeneralizedValue::Interval { lo, hi } => format!("[{lo}-{hi}]"),
            GeneralizedValue::Node(n) => self.hierarchy().label(n).to_string(),
        }
    }

    pub fn parse_generalized(&self, raw: &str) -> Option<GeneralizedValue> {
        match self.kind {
            AttributeKind::Numeric => {
                let inner = raw.strip_prefix('[')?.strip_suffix(']')?;
                // The separator is the first '-' that is not a sign.
                let split = inner
                    .char_indices()
                    .skip(1)
                    .find(|&(_, c)| c == '-')
                    .map(|(i, _)| i)?;
                let lo = inner[..split].parse().ok()?;
                let hi = inner[split + 1..].parse().ok()?;
                (lo <= hi).then_some(GeneralizedValue::Interval { lo, hi })
            }
            AttributeKind::Categorical => self.hierarchy().node_by_label(raw).map(GeneralizedValue::Node),
        }
    }
}

/// Published cells use `[..]` for intervals and `B<j>` for bucket ids, so
/// hierarchy labels may not take either form.
pub(crate) fn is_reserved_label(label: &str) -> bool {
    label.starts_with('[')
        || (label.len() > 1 && label.starts_with('B') && label[1..].bytes().all(|b| b.is_ascii_digit()))
}

fn valid_attribute_name(name: &str) -> bool {
    !name.is_empty()
        && name != "id"
        && name != "GID"
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || b == b'.')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attrs: Vec<AttributeSchema>,
}

impl Schema {
    pub fn new(attrs: Vec<AttributeSchema>) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::Schema("no attributes".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if !valid_attribute_name(&a.name) {
                return Err(Error::Schema(format!("invalid attribute name `{}`", a.name)));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
            if a.kind == AttributeKind::Categorical {
                let h = a
                    .hierarchy
                    .as_ref()
                    .ok_or_else(|| Error::Schema(format!("categorical attribute `{}` has no hierarchy", a.name)))?;
                for n in 0..h.node_count() {
                    if is_reserved_label(h.label(n)) {
                        return Err(Error::Hierarchy {
                            source_name: a.name.clone(),
                            detail: format!("label `{}` collides with published cell syntax", h.label(n)),
                        });
                    }
                }
            }
        }
        Ok(Schema { attrs })
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn attrs(&self) -> &[AttributeSchema] {
        &self.attrs
    }

    pub fn attr(&self, index: usize) -> &AttributeSchema {
        &self.attrs[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attrs.iter().map(|a| a.name.as_str())
    }

    /// Write `schema.csv` plus one `hierarchy_<attr>.csv` per categorical
    /// attribute into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut lines = String::new();
        for a in &self.attrs {
            lines.push_str(&format!("{},{},{}", a.name, a.kind, a.role));
            if let Some(h) = &a.hierarchy {
                let file = format!("hierarchy_{}.csv", a.name);
                let mut body = String::from("parent,child\n");
                for (p, c) in h.edges() {
                    body.push_str(&csv_field(p));
                    body.push(',');
                    body.push_str(&csv_field(c));
                    body.push('\n');
                }
                let path = dir.join(&file);
                fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                lines.push(',');
                lines.push_str(&file);
            }
            lines.push('\n');
        }
        let path = dir.join("schema.csv");
        fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One schema line before hierarchies are resolved.
struct SchemaLine {
    name: String,
    kind: AttributeKind,
    role: RoleHint,
    hierarchy_file: Option<PathBuf>,
}

fn read_schema_lines(path: &Path) -> Result<Vec<SchemaLine>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        if i == 0 && rec.get(0) == Some("name") && rec.get(1) == Some("kind") {
            continue;
        }
        if !(3..=4).contains(&rec.len()) {
            return Err(Error::Schema(format!(
                "{} line {}: expected `name,kind,role-hint[,hierarchy-file]`",
                path.display(),
                i + 1
            )));
        }
        out.push(SchemaLine {
            name: rec[0].to_string(),
            kind: rec[1].parse()?,
            role: rec[2].parse()?,
            hierarchy_file: rec.get(3).filter(|s| !s.is_empty()).map(|f| base.join(f)),
        });
    }
    Ok(out)
}

impl Schema {
    /// Load a schema file whose categorical attributes all name a hierarchy
    /// file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut attrs = Vec::new();
        for line in read_schema_lines(path)? {
            let hierarchy = match (line.kind, &line.hierarchy_file) {
                (AttributeKind::Numeric, _) => None,
                (AttributeKind::Categorical, Some(f)) => Some(Arc::new(Hierarchy::load(f)?)),
                (AttributeKind::Categorical, None) => {
                    return Err(Error::Schema(format!(
                        "{}: categorical attribute `{}` names no hierarchy file",
                        path.display(),
                        line.name
                    )))
                }
            };
            attrs.push(AttributeSchema::new(&line.name, line.kind, line.role, hierarchy));
        }
        Schema::new(attrs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tuple {
    pub id: u64,
    pub cells: Vec<Value>,
}

/// How strictly role hints are checked against the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleCheck {
    /// Semi-sensitive attributes need both flagged and unflagged cells.
    Strict,
    /// Semi-sensitive attributes may be all-clear or all-flagged (density
    /// sweeps at 0% and 100%).
    Relaxed,
}

/// Immutable microdata table with per-cell sensitivity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    schema: Arc<Schema>,
    rows: Vec<Tuple>,
    mask: Vec<Vec<bool>>,
    index: HashMap<u64, usize>,
}

impl Table {
    pub fn new(schema: Arc<Schema>, rows: Vec<Tuple>, mask: Vec<Vec<bool>>) -> Result<Self> {
        Self::build(schema, rows, mask, RoleCheck::Strict)
    }

    pub fn build(schema: Arc<Schema>, rows: Vec<Tuple>, mask: Vec<Vec<bool>>, check: RoleCheck) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape {
                file: "rows".into(),
                detail: "table has no rows".into(),
            });
        }
        if mask.len() != rows.len() {
            return Err(Error::Shape {
                file: "mask".into(),
                detail: format!("{} mask rows for {} data rows", mask.len(), rows.len()),
            });
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (t, m)) in rows.iter().zip(&mask).enumerate() {
            let row = i + 1;
            if t.id == 0 {
                return Err(Error::Schema(format!("row {row}: ids must be positive")));
            }
            if index.insert(t.id, i).is_some() {
                return Err(Error::Schema(format!("row {row}: duplicate id {}", t.id)));
            }
            if t.cells.len() != schema.len() || m.len() != schema.len() {
                return Err(Error::Shape {
                    file: "rows".into(),
                    detail: format!(
                        "row {row}: {} cells and {} flags for {} attributes",
                        t.cells.len(),
                        m.len(),
                        schema.len()
                    ),
                });
            }
            for (a, &v) in schema.attrs().iter().zip(&t.cells) {
                let ok = match (a.kind, v) {
                    (AttributeKind::Numeric, Value::Num(_)) => true,
                    (AttributeKind::Categorical, Value::Leaf(r)) => r < a.hierarchy().domain_size(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::UnknownCategory {
                        row,
                        column: a.name.clone(),
                        value: format!("{v:?}"),
                    });
                }
            }
        }
        let table = Table {
            schema,
            rows,
            mask,
            index,
        };
        table.check_roles(check)?;
        Ok(table)
    }

    fn check_roles(&self, check: RoleCheck) -> Result<()> {
        let n = self.rows.len();
        for (j, a) in self.schema.attrs().iter().enumerate() {
            let flagged = self.mask.iter().filter(|m| m[j]).count();
            let observed = match flagged {
                0 => "has no sensitive cells".to_string(),
                f if f == n => "has only sensitive cells".to_string(),
                f => format!("has {f} sensitive cells out of {n}"),
            };
            let ok = match a.role {
                RoleHint::Qi => flagged == 0,
                RoleHint::Sensitive => flagged == n,
                RoleHint::SemiSensitive => check == RoleCheck::Relaxed || (flagged > 0 && flagged < n),
            };
            if !ok {
                return Err(Error::RoleContradiction {
                    attribute: a.name.clone(),
                    declared: a.role.to_string(),
                    observed,
                });
            }
        }
        Ok(())
    }

    /// Load data, mask and schema files.
    pub fn load(rows_file: &Path, mask_file: &Path, schema_file: &Path) -> Result<Self> {
        let lines = read_schema_lines(schema_file)?;
        let data = read_csv(rows_file)?;
        let (header, records) = data
            .split_first()
            .ok_or_else(|| Error::Shape {
                file: rows_file.display().to_string(),
                detail: "empty file".into(),
            })?;
        let expected: Vec<&str> = std::iter::once("id")
            .chain(lines.iter().map(|l| l.name.as_str()))
            .collect();
        if header.iter().map(String::as_str).collect::<Vec<_>>() != expected {
            return Err(Error::Shape {
                file: rows_file.display().to_string(),
                detail: format!("header {:?} does not match schema {:?}", header, expected),
            });
        }

        let mut attrs = Vec::with_capacity(lines.len());
        for (j, line) in lines.iter().enumerate() {
            let hierarchy = match (line.kind, &line.hierarchy_file) {
                (AttributeKind::Numeric, _) => None,
                (AttributeKind::Categorical, Some(f)) => Some(Arc::new(Hierarchy::load(f)?)),
                (AttributeKind::Categorical, None) => {
                    let distinct: BTreeSet<&str> = records
                        .iter()
                        .filter_map(|r| r.get(j + 1))
                        .map(String::as_str)
                        .filter(|v| !is_missing(v))
                        .collect();
                    Some(Arc::new(Hierarchy::flat(distinct)?))
                }
            };
            attrs.push(AttributeSchema::new(&line.name, line.kind, line.role, hierarchy));
        }
        let schema = Arc::new(Schema::new(attrs)?);

        let mut rows = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            if rec.len() != expected.len() {
                return Err(Error::Shape {
                    file: rows_file.display().to_string(),
                    detail: format!("row {row}: {} fields, expected {}", rec.len(), expected.len()),
                });
            }
            let id = rec[0]
                .parse::<u64>()
                .ok()
                .filter(|&id| id > 0)
                .ok_or_else(|| Error::Schema(format!("row {row}: invalid id `{}`", rec[0])))?;
            let mut cells = Vec::with_capacity(schema.len());
            for (a, raw) in schema.attrs().iter().zip(&rec[1..]) {
                if is_missing(raw) {
                    return Err(Error::MissingValue {
                        row,
                        column: a.name.clone(),
                    });
                }
                let v = a.parse_value(raw).ok_or_else(|| match a.kind {
                    AttributeKind::Numeric => Error::ParseNumeric {
                        row,
                        column: a.name.clone(),
                        value: raw.clone(),
                    },
                    AttributeKind::Categorical => Error::UnknownCategory {
                        row,
                        column: a.name.clone(),
                        value: raw.clone(),
                    },
                })?;
                cells.push(v);
            }
            rows.push(Tuple { id, cells });
        }

        let mask = read_mask(mask_file, &schema, rows.len())?;
        Table::new(schema, rows, mask)
    }

    /// Same rows under a different mask, with relaxed role checks.
    pub fn with_mask(&self, mask: Vec<Vec<bool>>) -> Result<Self> {
        Table::build(self.schema.clone(), self.rows.clone(), mask, RoleCheck::Relaxed)
    }

    /// Write `data.csv`, `mask.csv`, `schema.csv` and hierarchy files.
    pub fn write(&self, dir: &Path) -> Result<TableFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let schema = self.schema.write(dir)?;
        let header: Vec<&str> = self.schema.names().collect();
        let mut data = format!("id,{}\n", header.join(","));
        let mut mask = format!("{}\n", header.join(","));
        for (t, m) in self.rows.iter().zip(&self.mask) {
            data.push_str(&t.id.to_string());
            for (a, &v) in self.schema.attrs().iter().zip(&t.cells) {
                data.push(',');
                data.push_str(&csv_field(&a.render_value(v)));
            }
            data.push('\n');
            let flags: Vec<&str> = m.iter().map(|&f| if f { "1" } else { "0" }).collect();
            mask.push_str(&flags.join(","));
            mask.push('\n');
        }
        let files = TableFiles {
            data: dir.join("data.csv"),
            mask: dir.join("mask.csv"),
            schema,
        };
        fs::write(&files.data, data).map_err(|e| Error::io(&files.data, e))?;
        fs::write(&files.mask, mask).map_err(|e| Error::io(&files.mask, e))?;
        Ok(files)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Tuple] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    pub fn row_index(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn tuple(&self, id: u64) -> Option<&Tuple> {
        self.row_index(id).map(|i| &self.rows[i])
    }

    pub fn is_sensitive(&self, row: usize, attr: usize) -> bool {
        self.mask[row][attr]
    }

    pub fn value(&self, row: usize, attr: usize) -> Value {
        self.rows[row].cells[attr]
    }

    /// Attributes holding at least one sensitive cell, in schema order.
    pub fn sensitive_attributes(&self) -> Vec<usize> {
        (0..self.schema.len())
            .filter(|&j| self.mask.iter().any(|m| m[j]))
            .collect()
    }

    pub fn domain_stats(&self) -> Vec<AttributeDomain> {
        self.schema
            .attrs()
            .iter()
            .enumerate()
            .map(|(j, a)| match a.kind {
                AttributeKind::Numeric => {
                    let vals = self.rows.iter().map(|t| t.cells[j].ordinal());
                    let min = vals.clone().min().unwrap_or(0);
                    let max = vals.max().unwrap_or(0);
                    AttributeDomain::Numeric { min, max }
                }
                AttributeKind::Categorical => AttributeDomain::Categorical {
                    leaves: a.hierarchy().domain_size(),
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableFiles {
    pub data: PathBuf,
    pub mask: PathBuf,
    pub schema: PathBuf,
}

fn is_missing(raw: &str) -> bool {
    raw.is_empty() || raw == "?"
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::csv(path, e))
        })
        .collect()
}

fn read_mask(path: &Path, schema: &Schema, rows: usize) -> Result<Vec<Vec<bool>>> {
    let file = path.display().to_string();
    let records = read_csv(path)?;
    let (header, body) = records.split_first().ok_or_else(|| Error::Shape {
        file: file.clone(),
        detail: "empty file".into(),
    })?;
    if !header.iter().map(String::as_str).eq(schema.names()) {
        return Err(Error::Shape {
            file,
            detail: format!("header {header:?} does not match schema attributes"),
        });
    }
    if body.len() != rows {
        return Err(Error::Shape {
            file,
            detail: format!("{} mask rows for {rows} data rows", body.len()),
        });
    }
    body.iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.len() != schema.len() {
                return Err(Error::Shape {
                    file: file.clone(),
                    detail: format!("row {}: {} flags, expected {}", i + 1, rec.len(), schema.len()),
                });
            }
            rec.iter()
                .zip(schema.names())
                .map(|(f, col)| match f.as_str() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Shape {
                        file: file.clone(),
                        detail: format!("row {}, column `{col}`: flag `{other}` is not 0/1", i + 1),
                    }),
                })
                .collect()
        })
        .collect()
}

/// `QI[t]`: the attributes on which a tuple holds QI (unflagged) values,
/// as ascending schema indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QiSignature {
    attrs: Vec<usize>,
}

impl QiSignature {
    pub fn from_mask_row(flags: &[bool]) -> Self {
        QiSignature {
            attrs: flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| !f)
                .map(|(j, _)| j)
                .collect(),
        }
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn contains(&self, attr: usize) -> bool {
        self.attrs.binary_search(&attr).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    /// Attribute names, sorted lexicographically.
    pub fn names(&self, schema: &Schema) -> Vec<String> {
        let mut names: Vec<String> = self.attrs.iter().map(|&j| schema.attr(j).name.clone()).collect();
        names.sort();
        names
    }
}

pub fn qi_signature(t: &Tuple, table: &Table) -> Result<QiSignature> {
    let row = table.row_index(t.id).ok_or(Error::UnknownTuple(t.id))?;
    Ok(QiSignature::from_mask_row(&table.mask()[row]))
}

/// One class of the QI partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QiSubset {
    pub signature: QiSignature,
    /// Member ids, ascending.
    pub ids: Vec<u64>,
}

/// Group tuples by QI signature. Subsets come ordered by their sorted
/// attribute-name lists.
pub fn qi_partition(table: &Table) -> Vec<QiSubset> {
    let mut classes: BTreeMap<QiSignature, Vec<u64>> = BTreeMap::new();
    for (t, m) in table.rows().iter().zip(table.mask()) {
        classes.entry(QiSignature::from_mask_row(m)).or_default().push(t.id);
    }
    let mut out: Vec<(Vec<String>, QiSubset)> = classes
        .into_iter()
        .map(|(signature, mut ids)| {
            ids.sort_unstable();
            (signature.names(table.schema()), QiSubset { signature, ids })
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.into_iter().map(|(_, s)| s).collect()
}
