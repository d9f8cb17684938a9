//! Generalization hierarchies, generalized values, NCP arithmetic and
//! predicate containment.
//!
//! Categorical cells are stored as *leaf ranks*: the index of the leaf in a
//! pre-order walk of the hierarchy. Every subtree therefore owns a contiguous
//! rank range, which turns lowest-common-ancestor queries and subtree
//! membership into range checks.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use num::rational::Ratio;
use num::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microdata::{AttributeKind, AttributeSchema};

/// Exact rational used for per-cell quantities.
pub type Rational = Ratio<i128>;

pub type NodeId = usize;

/// Label of the root of auto-generated flat hierarchies.
pub const FLAT_ROOT: &str = "*";

/// A raw cell value. Numeric attributes hold integers; categorical attributes
/// hold the leaf rank of the value in the attribute's hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Num(i64),
    Leaf(u32),
}

impl Value {
    /// Position of the value in the attribute's total order.
    pub fn ordinal(self) -> i64 {
        match self {
            Value::Num(v) => v,
            Value::Leaf(r) => i64::from(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    label: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    first_leaf: u32,
    last_leaf: u32,
}

/// A rooted, labeled generalization tree. Node ids follow pre-order, so the
/// root is always node 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
    by_label: HashMap<String, NodeId>,
}

impl Hierarchy {
    /// Build from `(parent, child)` edges. Child order in the input fixes the
    /// leaf order.
    pub fn from_edges<S: AsRef<str>>(source_name: &str, edges: &[(S, S)]) -> Result<Self> {
        let err = |detail: String| Error::Hierarchy {
            source_name: source_name.to_string(),
            detail,
        };
        if edges.is_empty() {
            return Err(err("no edges".into()));
        }

        let mut order: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |label: &str, order: &mut Vec<String>| -> usize {
            *index.entry(label.to_string()).or_insert_with(|| {
                order.push(label.to_string());
                order.len() - 1
            })
        };
        let mut parent_of: Vec<Option<usize>> = Vec::new();
        let mut children: Vec<Vec<usize>> = Vec::new();
        for (p, c) in edges {
            let (p, c) = (p.as_ref().trim(), c.as_ref().trim());
            if p.is_empty() || c.is_empty() {
                return Err(err("empty node label".into()));
            }
            if p == c {
                return Err(err(format!("self-loop on `{p}`")));
            }
            let pi = intern(p, &mut order);
            let ci = intern(c, &mut order);
            parent_of.resize(order.len(), None);
            children.resize(order.len(), Vec::new());
            if let Some(prev) = parent_of[ci] {
                return Err(err(format!(
                    "`{c}` has two parents (`{}` and `{p}`)",
                    order[prev]
                )));
            }
            parent_of[ci] = Some(pi);
            children[pi].push(ci);
        }

        let roots: Vec<usize> = (0..order.len()).filter(|&i| parent_of[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(err("no root (cycle)".into())),
            many => {
                let names: Vec<&str> = many.iter().map(|&i| order[i].as_str()).collect();
                return Err(err(format!("multiple roots: {}", names.join(", "))));
            }
        };

        // Pre-order walk; renumber nodes and assign leaf ranks.
        let mut nodes: Vec<Node> = Vec::with_capacity(order.len());
        let mut leaves = Vec::new();
        let mut new_id = vec![usize::MAX; order.len()];
        let mut stack = vec![(root, None::<NodeId>)];
        while let Some((old, parent)) = stack.pop() {
            let id = nodes.len();
            new_id[old] = id;
            nodes.push(Node {
                label: order[old].clone(),
                parent,
                children: Vec::new(),
                first_leaf: 0,
                last_leaf: 0,
            });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            if children[old].is_empty() {
                leaves.push(id);
            }
            for &c in children[old].iter().rev() {
                stack.push((c, Some(id)));
            }
        }
        if nodes.len() != order.len() {
            return Err(err("graph is not a tree (unreachable nodes or cycle)".into()));
        }

        // Leaf spans, bottom-up (children always have larger ids).
        let mut rank_of = vec![None; nodes.len()];
        for (rank, &leaf) in leaves.iter().enumerate() {
            rank_of[leaf] = Some(rank as u32);
        }
        for id in (0..nodes.len()).rev() {
            if let Some(r) = rank_of[id] {
                nodes[id].first_leaf = r;
                nodes[id].last_leaf = r;
            } else {
                let first = nodes[nodes[id].children[0]].first_leaf;
                let last = nodes[*nodes[id].children.last().unwrap()].last_leaf;
                nodes[id].first_leaf = first;
                nodes[id].last_leaf = last;
            }
        }

        let by_label = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.label.clone(), i))
            .collect();
        Ok(Hierarchy {
            nodes,
            leaves,
            by_label,
        })
    }

    /// Root `*` over the given labels, in the order given (duplicates dropped).
    pub fn flat<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let edges: Vec<(String, String)> = labels
            .into_iter()
            .filter(|l| seen.insert(l.as_ref().to_string()))
            .map(|l| (FLAT_ROOT.to_string(), l.as_ref().to_string()))
            .collect();
        Self::from_edges("flat", &edges)
    }

    /// Load a `parent,child` edge list. A first line of exactly `parent,child`
    /// is treated as a header.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let mut edges = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            if rec.len() != 2 {
                return Err(Error::Hierarchy {
                    source_name: path.display().to_string(),
                    detail: format!("line {}: expected `parent,child`", i + 1),
                });
            }
            if i == 0 && &rec[0] == "parent" && &rec[1] == "child" {
                continue;
            }
            edges.push((rec[0].to_string(), rec[1].to_string()));
        }
        Self::from_edges(&path.display().to_string(), &edges)
    }

    /// Edges in pre-order; feeding them back to [`Hierarchy::from_edges`]
    /// reproduces this hierarchy.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.children
                    .iter()
                    .map(move |&c| (n.label.as_str(), self.nodes[c].label.as_str()))
            })
            .collect()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node].label
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.nodes[node].parent
    }

    pub fn children(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node].children
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    /// Number of leaves in the whole tree, `|A_cat|`.
    pub fn domain_size(&self) -> u32 {
        self.leaves.len() as u32
    }

    pub fn leaf_node(&self, rank: u32) -> NodeId {
        self.leaves[rank as usize]
    }

    pub fn leaf_label(&self, rank: u32) -> &str {
        self.label(self.leaf_node(rank))
    }

    /// Rank of a leaf label; `None` for unknown labels and internal nodes.
    pub fn leaf_rank(&self, label: &str) -> Option<u32> {
        let id = self.node_by_label(label)?;
        self.is_leaf(id).then(|| self.nodes[id].first_leaf)
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.nodes[node].children.is_empty()
    }

    /// Inclusive leaf-rank range covered by `node`.
    pub fn span(&self, node: NodeId) -> (u32, u32) {
        (self.nodes[node].first_leaf, self.nodes[node].last_leaf)
    }

    /// `size(v*)`: number of leaves under `node`.
    pub fn leaf_count(&self, node: NodeId) -> u32 {
        let (a, b) = self.span(node);
        b - a + 1
    }

    pub fn covers(&self, node: NodeId, rank: u32) -> bool {
        let (a, b) = self.span(node);
        a <= rank && rank <= b
    }

    /// Deepest node whose span contains every rank in `lo..=hi`.
    pub fn lca_of_range(&self, lo: u32, hi: u32) -> NodeId {
        let mut node = self.leaf_node(lo);
        while !self.covers(node, hi) {
            node = self.nodes[node].parent.expect("root covers every rank");
        }
        node
    }
}

/// A generalized cell: `[lo, hi]` for numeric attributes or a hierarchy node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneralizedValue {
    Interval { lo: i64, hi: i64 },
    Node(NodeId),
}

impl GeneralizedValue {
    /// Whether the raw value lies inside the generalized region.
    pub fn contains(&self, value: Value, hierarchy: Option<&Hierarchy>) -> bool {
        match (*self, value) {
            (GeneralizedValue::Interval { lo, hi }, Value::Num(v)) => lo <= v && v <= hi,
            (GeneralizedValue::Node(n), Value::Leaf(r)) => {
                hierarchy.is_some_and(|h| n < h.node_count() && h.covers(n, r))
            }
            _ => false,
        }
    }
}

/// Per-attribute domain statistics over the full table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributeDomain {
    Numeric { min: i64, max: i64 },
    Categorical { leaves: u32 },
}

impl AttributeDomain {
    /// `range(A_num)` or `|A_cat|`.
    pub fn extent(&self) -> i128 {
        match *self {
            AttributeDomain::Numeric { min, max } => i128::from(max) - i128::from(min),
            AttributeDomain::Categorical { leaves } => i128::from(leaves),
        }
    }
}

/// Generalize a non-empty multiset of raw values of one attribute.
pub fn generalize_values(attr: &AttributeSchema, values: &[Value]) -> Result<GeneralizedValue> {
    let (first, rest) = values
        .split_first()
        .ok_or_else(|| Error::InvalidParameter(format!("no values to generalize for `{}`", attr.name)))?;
    match attr.kind {
        AttributeKind::Numeric => {
            let mut lo = num_of(attr, *first)?;
            let mut hi = lo;
            for &v in rest {
                let v = num_of(attr, v)?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            Ok(GeneralizedValue::Interval { lo, hi })
        }
        AttributeKind::Categorical => {
            let h = attr.hierarchy();
            let check = |v: Value| -> Result<u32> {
                match v {
                    Value::Leaf(r) if r < h.domain_size() => Ok(r),
                    Value::Leaf(r) => Err(Error::UnknownCategory {
                        row: 0,
                        column: attr.name.clone(),
                        value: format!("#{r}"),
                    }),
                    Value::Num(_) => Err(Error::KindMismatch(format!(
                        "numeric value for categorical attribute `{}`",
                        attr.name
                    ))),
                }
            };
            let mut lo = check(*first)?;
            let mut hi = lo;
            for &v in rest {
                let r = check(v)?;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Ok(GeneralizedValue::Node(h.lca_of_range(lo, hi)))
        }
    }
}

fn num_of(attr: &AttributeSchema, v: Value) -> Result<i64> {
    match v {
        Value::Num(x) => Ok(x),
        Value::Leaf(_) => Err(Error::KindMismatch(format!(
            "categorical value for numeric attribute `{}`",
            attr.name
        ))),
    }
}

/// Normalized certainty penalty of one generalized cell.
///
/// A zero-width numeric domain yields 0.
pub fn ncp_cell(attr: &AttributeSchema, g: &GeneralizedValue, domain: &AttributeDomain) -> Result<Rational> {
    match (attr.kind, *g, *domain) {
        (AttributeKind::Numeric, GeneralizedValue::Interval { lo, hi }, AttributeDomain::Numeric { min, max }) => {
            let range = i128::from(max) - i128::from(min);
            if range == 0 {
                return Ok(Rational::zero());
            }
            Ok(Rational::new(i128::from(hi) - i128::from(lo), range))
        }
        (AttributeKind::Categorical, GeneralizedValue::Node(n), AttributeDomain::Categorical { leaves }) => {
            let size = attr.hierarchy().leaf_count(n);
            Ok(Rational::new(i128::from(size), i128::from(leaves)))
        }
        _ => Err(Error::KindMismatch(format!(
            "generalized value {g:?} does not fit attribute `{}`",
            attr.name
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Gt,
    Lt,
    Eq,
    Ge,
    Le,
    Ne,
}

impl CompareOp {
    pub const ALL: [CompareOp; 6] = [
        CompareOp::Gt,
        CompareOp::Lt,
        CompareOp::Eq,
        CompareOp::Ge,
        CompareOp::Le,
        CompareOp::Ne,
    ];

    pub fn eval(self, x: i64, v: i64) -> bool {
        match self {
            CompareOp::Gt => x > v,
            CompareOp::Lt => x < v,
            CompareOp::Eq => x == v,
            CompareOp::Ge => x >= v,
            CompareOp::Le => x <= v,
            CompareOp::Ne => x != v,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Gt => ">",
            CompareOp::Lt => "<",
            CompareOp::Eq => "=",
            CompareOp::Ge => ">=",
            CompareOp::Le => "<=",
            CompareOp::Ne => "!=",
        }
    }
}

/// One query condition on a single attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    /// `A op v`.
    Numeric { op: CompareOp, value: i64 },
    /// `A = v1 or ... or A = vm`, values given as leaf ranks.
    Categorical { leaves: BTreeSet<u32> },
}

impl Predicate {
    pub fn matches_raw(&self, value: Value) -> Result<bool> {
        match (self, value) {
            (Predicate::Numeric { op, value: v }, Value::Num(x)) => Ok(op.eval(x, *v)),
            (Predicate::Categorical { leaves }, Value::Leaf(r)) => Ok(leaves.contains(&r)),
            _ => Err(Error::KindMismatch(format!("{self:?} against {value:?}"))),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Numeric { op, value } => write!(f, "A {} {value}", op.symbol()),
            Predicate::Categorical { leaves } => {
                let parts: Vec<String> = leaves.iter().map(|r| format!("A = #{r}")).collect();
                write!(f, "({})", parts.join(" or "))
            }
        }
    }
}

/// Outcome of testing a (possibly generalized) cell against a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Yes,
    No,
    /// Strictly between 0 and 1.
    Partial(Rational),
}

impl Containment {
    pub fn from_fraction(f: Rational) -> Self {
        if f.is_zero() {
            Containment::No
        } else if f == Rational::from_integer(1) {
            Containment::Yes
        } else {
            Containment::Partial(f)
        }
    }

    pub fn fraction(&self) -> Rational {
        match *self {
            Containment::Yes => Rational::from_integer(1),
            Containment::No => Rational::zero(),
            Containment::Partial(f) => f,
        }
    }
}

/// Either a raw cell or a generalized one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellView {
    Raw(Value),
    General(GeneralizedValue),
}

/// Probability that the cell satisfies the predicate, assuming the true value
/// is uniform over the integer points of an interval or the leaves of a node.
pub fn value_matches(attr: &AttributeSchema, cell: CellView, predicate: &Predicate) -> Result<Containment> {
    let mismatch = || Error::KindMismatch(format!("{cell:?} against {predicate} on `{}`", attr.name));
    match cell {
        CellView::Raw(v) => {
            let yes = predicate.matches_raw(v).map_err(|_| mismatch())?;
            Ok(if yes { Containment::Yes } else { Containment::No })
        }
        CellView::General(GeneralizedValue::Interval { lo, hi }) => match predicate {
            Predicate::Numeric { op, value } => {
                let hits = count_satisfying(lo, hi, *op, *value);
                let total = i128::from(hi) - i128::from(lo) + 1;
                Ok(Containment::from_fraction(Rational::new(hits, total)))
            }
            _ => Err(mismatch()),
        },
        CellView::General(GeneralizedValue::Node(n)) => match (predicate, attr.kind) {
            (Predicate::Categorical { leaves }, AttributeKind::Categorical) => {
                let h = attr.hierarchy();
                if n >= h.node_count() {
                    return Err(mismatch());
                }
                let (a, b) = h.span(n);
                let hits = leaves.range(a..=b).count() as i128;
                Ok(Containment::from_fraction(Rational::new(
                    hits,
                    i128::from(h.leaf_count(n)),
                )))
            }
            _ => Err(mismatch()),
        },
    }
}

/// Integers `x` in `[lo, hi]` with `x op v`.
fn count_satisfying(lo: i64, hi: i64, op: CompareOp, v: i64) -> i128 {
    let (lo, hi, v) = (i128::from(lo), i128::from(hi), i128::from(v));
    let span = |a: i128, b: i128| (b - a + 1).max(0);
    let eq = i128::from(lo <= v && v <= hi);
    match op {
        CompareOp::Lt => span(lo, hi.min(v - 1)),
        CompareOp::Le => span(lo, hi.min(v)),
        CompareOp::Gt => span(lo.max(v + 1), hi),
        CompareOp::Ge => span(lo.max(v), hi),
        CompareOp::Eq => eq,
        CompareOp::Ne => span(lo, hi) - eq,
    }
}
