//! Seeded synthetic tables: small random tables for property checks and a
//! census-like table for experiments.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::density_mask;
use crate::microdata::{AttributeKind, AttributeSchema, QiSignature, RoleCheck, RoleHint, Schema, Table, Tuple};
use crate::rng::{stream_rng, Stream};
use crate::taxonomy::{Hierarchy, Value};

/// Balanced-ish hierarchy over `n` leaves named `<prefix>-<i>`. Leaves are
/// chunked by `fanouts[0]`, those nodes by `fanouts[1]`, and so on; a root
/// named `<prefix>` sits on top.
pub fn chunked_hierarchy(prefix: &str, n: usize, fanouts: &[usize]) -> Result<Hierarchy> {
    let width = n.to_string().len();
    let mut level: Vec<String> = (0..n).map(|i| format!("{prefix}-{i:0width$}")).collect();
    let mut edges = Vec::new();
    for (depth, &fan) in fanouts.iter().enumerate() {
        if level.len() <= 1 {
            break;
        }
        let mut next = Vec::new();
        for (g, chunk) in level.chunks(fan.max(1)).enumerate() {
            let node = format!("{prefix}-l{}g{g}", depth + 1);
            for c in chunk {
                edges.push((node.clone(), c.clone()));
            }
            next.push(node);
        }
        level = next;
    }
    for c in level {
        edges.push((prefix.to_string(), c));
    }
    Hierarchy::from_edges(prefix, &edges)
}

/// Shape of a random table. Attributes are named `q<i>` (QI), `s<i>`
/// (semi-sensitive) and `sa` (sensitive); even positions are numeric and odd
/// positions categorical.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomTableSpec {
    pub rows: usize,
    pub qi: usize,
    pub semi: usize,
    pub sensitive: bool,
    /// Probability that a semi-sensitive cell is flagged.
    pub density: f64,
    /// Every QI-signature class ends up with at least this many tuples.
    pub min_class: usize,
    /// Flagged values of every attribute admit buckets of this diversity.
    pub l: usize,
}

impl Default for RandomTableSpec {
    fn default() -> Self {
        RandomTableSpec {
            rows: 200,
            qi: 2,
            semi: 2,
            sensitive: true,
            density: 0.3,
            min_class: 8,
            l: 4,
        }
    }
}

fn random_attr(name: String, index: usize, role: RoleHint, leaves: usize) -> Result<(AttributeSchema, i64)> {
    if index % 2 == 0 {
        Ok((AttributeSchema::new(name, AttributeKind::Numeric, role, None), 3 * leaves as i64))
    } else {
        let h = chunked_hierarchy(&name, leaves, &[4])?;
        Ok((AttributeSchema::new(name, AttributeKind::Categorical, role, Some(Arc::new(h))), leaves as i64))
    }
}

fn draw(rng: &mut ChaCha8Rng, attr: &AttributeSchema, size: i64) -> Value {
    match attr.kind {
        AttributeKind::Numeric => Value::Num(rng.gen_range(0..size)),
        AttributeKind::Categorical => Value::Leaf(rng.gen_range(0..size as u32)),
    }
}

/// Random table honouring `spec`. Deterministic in `seed`.
pub fn random_table(spec: &RandomTableSpec, seed: u64) -> Table {
    try_random_table(spec, seed).expect("random table spec is satisfiable")
}

pub fn try_random_table(spec: &RandomTableSpec, seed: u64) -> Result<Table> {
    if spec.rows == 0 || spec.qi + spec.semi + usize::from(spec.sensitive) == 0 {
        return Err(Error::InvalidParameter("random table needs rows and attributes".into()));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let mut attrs = Vec::new();
    for i in 0..spec.qi {
        attrs.push(random_attr(format!("q{i}"), i, RoleHint::Qi, 12)?);
    }
    for i in 0..spec.semi {
        attrs.push(random_attr(format!("s{i}"), i, RoleHint::SemiSensitive, 20)?);
    }
    if spec.sensitive {
        attrs.push(random_attr("sa".into(), 0, RoleHint::Sensitive, 10)?);
    }
    let sizes: Vec<i64> = attrs.iter().map(|(_, s)| *s).collect();
    let schema = Arc::new(Schema::new(attrs.into_iter().map(|(a, _)| a).collect())?);

    let mut rows: Vec<Tuple> = (0..spec.rows)
        .map(|i| Tuple {
            id: i as u64 + 1,
            cells: schema
                .attrs()
                .iter()
                .zip(&sizes)
                .map(|(a, &s)| draw(&mut rng, a, s))
                .collect(),
        })
        .collect();

    let mut mask: Vec<Vec<bool>> = (0..spec.rows)
        .map(|_| {
            schema
                .attrs()
                .iter()
                .map(|a| match a.role {
                    RoleHint::Qi => false,
                    RoleHint::Sensitive => true,
                    RoleHint::SemiSensitive => rng.gen_bool(spec.density.clamp(0.0, 1.0)),
                })
                .collect()
        })
        .collect();
    merge_small_classes(&mut mask, spec.min_class);
    for j in 0..schema.len() {
        spread_flagged_values(&mut rows, &mask, j, spec.l, &sizes, &mut rng);
    }
    Table::build(schema, rows, mask, RoleCheck::Relaxed)
}

/// Give the tuples of undersized signature classes the mask row of the
/// largest class.
fn merge_small_classes(mask: &mut [Vec<bool>], min_class: usize) {
    let mut classes: BTreeMap<QiSignature, Vec<usize>> = BTreeMap::new();
    for (r, m) in mask.iter().enumerate() {
        classes.entry(QiSignature::from_mask_row(m)).or_default().push(r);
    }
    let Some(largest) = classes.values().max_by_key(|rows| rows.len()) else {
        return;
    };
    let template = mask[largest[0]].clone();
    for rows in classes.values().filter(|rows| rows.len() < min_class) {
        for &r in rows {
            mask[r] = template.clone();
        }
    }
}

/// Redraw values of the most frequent flagged value until every value
/// occurs at most `flagged / l` times among the flagged cells.
fn spread_flagged_values(rows: &mut [Tuple], mask: &[Vec<bool>], attr: usize, l: usize, sizes: &[i64], rng: &mut ChaCha8Rng) {
    let flagged: Vec<usize> = (0..rows.len()).filter(|&r| mask[r][attr]).collect();
    let n = flagged.len();
    if n == 0 || l <= 1 || (sizes[attr] as usize) < l {
        return;
    }
    loop {
        let mut counts: BTreeMap<Value, Vec<usize>> = BTreeMap::new();
        for &r in &flagged {
            counts.entry(rows[r].cells[attr]).or_default().push(r);
        }
        let (&top, holders) = counts.iter().max_by_key(|(_, v)| v.len()).expect("non-empty");
        if holders.len() * l <= n {
            return;
        }
        let victim = holders[rng.gen_range(0..holders.len())];
        let fresh = (0..10_000).find_map(|_| {
            let v = match top {
                Value::Num(_) => Value::Num(rng.gen_range(0..sizes[attr])),
                Value::Leaf(_) => Value::Leaf(rng.gen_range(0..sizes[attr] as u32)),
            };
            (counts.get(&v).map_or(0, Vec::len) + 1 < holders.len()).then_some(v)
        });
        let Some(fresh) = fresh else { return };
        rows[victim].cells[attr] = fresh;
    }
}

/// Number of distinct values per attribute of [`census_table`], in schema
/// order.
pub const CENSUS_DOMAIN_SIZES: [usize; 9] = [2, 73, 13, 6, 9, 11, 93, 257, 719];

pub fn census_schema() -> Result<Schema> {
    let cat = |name: &str, n: usize, fanouts: &[usize], role| -> Result<AttributeSchema> {
        let h = chunked_hierarchy(name, n, fanouts)?;
        Ok(AttributeSchema::new(name, AttributeKind::Categorical, role, Some(Arc::new(h))))
    };
    let num = |name: &str, role| AttributeSchema::new(name, AttributeKind::Numeric, role, None);
    Schema::new(vec![
        cat("sex", 2, &[], RoleHint::Qi)?,
        num("age", RoleHint::SemiSensitive),
        cat("relationship", 13, &[4], RoleHint::Qi)?,
        cat("marital", 6, &[3], RoleHint::Qi)?,
        cat("race", 9, &[3], RoleHint::Qi)?,
        cat("education", 11, &[4], RoleHint::Qi)?,
        num("hours", RoleHint::Qi),
        cat("occupation", 257, &[16, 4], RoleHint::SemiSensitive)?,
        num("salary", RoleHint::Sensitive),
    ])
}

fn tri(rng: &mut ChaCha8Rng) -> f64 {
    (rng.gen::<f64>() + rng.gen::<f64>()) / 2.0
}

fn pick(x: f64, n: usize) -> usize {
    ((x.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1)
}

/// Census-like table: sex, relationship, marital status, race, education
/// and weekly hours are QI; age and occupation are semi-sensitive with a
/// fraction `density` of their cells flagged; salary is sensitive.
pub fn census_table(rows: usize, density: f64, seed: u64) -> Result<Table> {
    let schema = Arc::new(census_schema()?);
    let mut rng = stream_rng(seed, Stream::Data);
    let tuples: Vec<Tuple> = (0..rows)
        .map(|i| {
            let z: f64 = rng.gen();
            let sex = rng.gen_range(0..2u32);
            let age_x = tri(&mut rng);
            let age = 17 + pick(age_x, 73) as i64;
            let relationship = pick(0.5 * age_x + 0.5 * rng.gen::<f64>(), 13) as u32;
            let marital = pick(0.6 * age_x + 0.4 * rng.gen::<f64>(), 6) as u32;
            let race = pick(rng.gen::<f64>().powf(1.5), 9) as u32;
            let edu_x = 0.6 * z + 0.4 * rng.gen::<f64>();
            let education = pick(edu_x, 11) as u32;
            let hours_x = tri(&mut rng);
            let hours = 1 + pick(hours_x, 93) as i64;
            let group = pick(0.5 * edu_x + 0.5 * rng.gen::<f64>(), 17);
            let in_group = if group == 16 { 1 } else { 16 };
            let occupation = (group * 16 + rng.gen_range(0..in_group)) as u32;
            let salary_x = 0.35 * z + 0.2 * edu_x + 0.15 * hours_x + 0.1 * age_x + 0.2 * rng.gen::<f64>();
            let salary = 10_000 + 100 * pick(salary_x, 719) as i64;
            Tuple {
                id: i as u64 + 1,
                cells: vec![
                    Value::Leaf(sex),
                    Value::Num(age),
                    Value::Leaf(relationship),
                    Value::Leaf(marital),
                    Value::Leaf(race),
                    Value::Leaf(education),
                    Value::Num(hours),
                    Value::Leaf(occupation),
                    Value::Num(salary),
                ],
            }
        })
        .collect();
    let base: Vec<Vec<bool>> = (0..rows)
        .map(|_| schema.attrs().iter().map(|a| a.role == RoleHint::Sensitive).collect())
        .collect();
    let table = Table::build(schema, tuples, base, RoleCheck::Relaxed)?;
    let mask = density_mask(&table, density, seed)?;
    table.with_mask(mask)
}
