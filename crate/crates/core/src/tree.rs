//! Decision trees over a [`Schema`], with C4.5-style classification of
//! examples that have missing values.
//!
//! Trees are stored as nested [`Node`]s. A node is addressed by its
//! [`NodePath`]: the child indices taken from the root. A threshold test
//! numbers its `<=` branch 0 and its `>` branch 1; a discrete test numbers its
//! children in declared value order.
//!
//! The text form indents each level by two spaces:
//!
//! ```text
//! test A <= 5
//!   test B <= 3
//!     leaf p [p=3,n=0]
//!     leaf n [p=0,n=0] grafted
//!   leaf n [p=0,n=7]
//! ```

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::dataset::{AttributeKind, Dataset, Schema, Value};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("expected {expected} attribute values, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("value {value} does not fit attribute `{attribute}`")]
    ValueMismatch { attribute: String, value: String },
    #[error("no node at path {0}")]
    NoSuchNode(NodePath),
    #[error("node at path {0} is not a leaf")]
    NotALeaf(NodePath),
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = TreeError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    /// Predicted class index.
    pub label: usize,
    /// Weighted count of training cases per class reaching this leaf.
    pub distribution: Vec<f64>,
    /// Whether this leaf was added by grafting.
    pub grafted: bool,
}

impl Leaf {
    pub fn new(label: usize, distribution: Vec<f64>) -> Self {
        Self {
            label,
            distribution,
            grafted: false,
        }
    }

    pub fn weight(&self) -> f64 {
        self.distribution.iter().sum()
    }

    /// Weight of training cases at this leaf not of the leaf's class.
    pub fn errors(&self) -> f64 {
        self.weight() - self.distribution[self.label]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// `attribute <= threshold` goes to `le`, otherwise `gt`.
    Cut {
        attribute: usize,
        threshold: f64,
        le: Box<Node>,
        gt: Box<Node>,
    },
    /// One child per declared value of a discrete attribute.
    Branch {
        attribute: usize,
        children: Vec<Node>,
    },
    Leaf(Leaf),
}

impl Node {
    pub fn leaf(label: usize, distribution: Vec<f64>) -> Node {
        Node::Leaf(Leaf::new(label, distribution))
    }

    pub fn cut(attribute: usize, threshold: f64, le: Node, gt: Node) -> Node {
        Node::Cut {
            attribute,
            threshold,
            le: Box::new(le),
            gt: Box::new(gt),
        }
    }

    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Cut { le, gt, .. } => vec![le, gt],
            Node::Branch { children, .. } => children.iter().collect(),
            Node::Leaf(_) => vec![],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Node> {
        match self {
            Node::Cut { le, gt, .. } => vec![le, gt],
            Node::Branch { children, .. } => children.iter_mut().collect(),
            Node::Leaf(_) => vec![],
        }
    }

    pub fn as_leaf(&self) -> Option<&Leaf> {
        match self {
            Node::Leaf(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }

    /// Internal nodes plus leaves.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            _ => self.children().iter().map(|c| c.leaf_count()).sum(),
        }
    }

    /// Total training weight of the leaves below this node.
    pub fn weight(&self) -> f64 {
        match self {
            Node::Leaf(l) => l.weight(),
            _ => self.children().iter().map(|c| c.weight()).sum(),
        }
    }

    /// Per-class training weight summed over the leaves below this node.
    pub fn distribution(&self, classes: usize) -> Vec<f64> {
        let mut dist = vec![0.0; classes];
        self.add_distribution(&mut dist);
        dist
    }

    fn add_distribution(&self, dist: &mut [f64]) {
        match self {
            Node::Leaf(l) => {
                for (d, w) in dist.iter_mut().zip(&l.distribution) {
                    *d += w;
                }
            }
            _ => self.children().iter().for_each(|c| c.add_distribution(dist)),
        }
    }

    /// Sum of leaf resubstitution errors below this node.
    pub fn errors(&self) -> f64 {
        match self {
            Node::Leaf(l) => l.errors(),
            _ => self.children().iter().map(|c| c.errors()).sum(),
        }
    }

    /// The branch taken by a known value at this internal node, or `None` if the
    /// value is missing.
    pub fn branch_for(&self, values: &[Value]) -> Option<usize> {
        match self {
            Node::Cut {
                attribute,
                threshold,
                ..
            } => match values[*attribute] {
                Value::Continuous(x) => Some(if x <= *threshold { 0 } else { 1 }),
                _ => None,
            },
            Node::Branch { attribute, .. } => match values[*attribute] {
                Value::Discrete(i) => Some(i),
                _ => None,
            },
            Node::Leaf(_) => None,
        }
    }

    /// Fraction of a case with a missing test value sent down each child:
    /// proportional to the training weight below each child, or uniform when
    /// no child has any.
    pub fn missing_fractions(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.children().iter().map(|c| c.weight()).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter().map(|w| w / total).collect()
        } else {
            vec![1.0 / weights.len() as f64; weights.len()]
        }
    }
}

/// Child indices from the root to a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, index: usize) -> Self {
        let mut p = self.0.clone();
        p.push(index);
        Self(p)
    }

    /// Paths of all proper ancestors, root first.
    pub fn ancestors(&self) -> impl Iterator<Item = NodePath> + '_ {
        (0..self.0.len()).map(|d| NodePath(self.0[..d].to_vec()))
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

/// Interval `(lower, upper]` a leaf's path imposes on each continuous attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PathBounds {
    fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn contains(&self, attribute: usize, x: f64) -> bool {
        self.lower[attribute] < x && x <= self.upper[attribute]
    }
}

/// A training case index and the fraction of it present at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedCase {
    pub index: usize,
    pub weight: f64,
}

pub type CaseSet = Vec<WeightedCase>;

/// Every example of `dataset` at its own weight, in data order.
pub fn all_cases(dataset: &Dataset) -> CaseSet {
    dataset
        .examples()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.weight > 0.0)
        .map(|(index, e)| WeightedCase {
            index,
            weight: e.weight,
        })
        .collect()
}

/// Distributes the cases at an internal node over its children. Cases with a
/// missing test value are split by [`Node::missing_fractions`]. Order is kept.
pub fn partition(node: &Node, dataset: &Dataset, cases: &[WeightedCase]) -> Vec<CaseSet> {
    let children = node.children().len();
    let mut parts = vec![CaseSet::new(); children];
    let mut fractions = None;
    for c in cases {
        let values = &dataset.examples()[c.index].values;
        match node.branch_for(values) {
            Some(b) => parts[b].push(*c),
            None => {
                let fr = fractions.get_or_insert_with(|| node.missing_fractions());
                for (part, f) in parts.iter_mut().zip(fr.iter()) {
                    if *f > 0.0 {
                        part.push(WeightedCase {
                            index: c.index,
                            weight: c.weight * f,
                        });
                    }
                }
            }
        }
    }
    parts
}

/// Weighted class counts of a case set.
pub fn class_weights(dataset: &Dataset, cases: &[WeightedCase]) -> Vec<f64> {
    let mut dist = vec![0.0; dataset.schema().class_count()];
    for c in cases {
        dist[dataset.examples()[c.index].label] += c.weight;
    }
    dist
}

/// Index of the largest entry; the earliest wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    schema: Arc<Schema>,
    root: Node,
}

impl Tree {
    pub fn new(schema: Arc<Schema>, root: Node) -> Result<Self> {
        validate(&schema, &root)?;
        Ok(Self { schema, root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn node(&self, path: &NodePath) -> Result<&Node> {
        let mut node = &self.root;
        for &i in &path.0 {
            node = *node
                .children()
                .get(i)
                .ok_or_else(|| TreeError::NoSuchNode(path.clone()))?;
        }
        Ok(node)
    }

    pub fn leaf(&self, path: &NodePath) -> Result<&Leaf> {
        self.node(path)?
            .as_leaf()
            .ok_or_else(|| TreeError::NotALeaf(path.clone()))
    }

    /// Replaces the node at `path`, validating the result.
    pub fn replace(&self, path: &NodePath, with: Node) -> Result<Tree> {
        let mut root = self.root.clone();
        let mut node = &mut root;
        for &i in &path.0 {
            node = node
                .children_mut()
                .into_iter()
                .nth(i)
                .ok_or_else(|| TreeError::NoSuchNode(path.clone()))?;
        }
        *node = with;
        Tree::new(Arc::clone(&self.schema), root)
    }

    /// Paths of every leaf, left to right.
    pub fn leaves(&self) -> Vec<NodePath> {
        fn walk(node: &Node, path: &mut Vec<usize>, out: &mut Vec<NodePath>) {
            if node.is_leaf() {
                out.push(NodePath(path.clone()));
            }
            for (i, c) in node.children().into_iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &Node) -> usize {
            n.children().iter().map(|c| 1 + depth(c)).max().unwrap_or(0)
        }
        depth(&self.root)
    }

    fn check_values(&self, values: &[Value]) -> Result<()> {
        let n = self.schema.feature_count();
        if values.len() != n {
            return Err(TreeError::Arity {
                expected: n,
                found: values.len(),
            });
        }
        for (attr, v) in self.schema.features().iter().zip(values) {
            let ok = match (&attr.kind, v) {
                (_, Value::Missing) => true,
                (AttributeKind::Continuous, Value::Continuous(x)) => !x.is_nan(),
                (AttributeKind::Discrete(vals), Value::Discrete(i)) => *i < vals.len(),
                _ => false,
            };
            if !ok {
                return Err(TreeError::ValueMismatch {
                    attribute: attr.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Class weights for `values`. A missing test value splits the case over
    /// all children by [`Node::missing_fractions`]; each leaf reached with
    /// weight `w` contributes `w` times its class proportions, or `w` to its
    /// label when it has no training weight.
    pub fn class_scores(&self, values: &[Value]) -> Result<Vec<f64>> {
        self.check_values(values)?;
        let mut scores = vec![0.0; self.schema.class_count()];
        score(&self.root, values, 1.0, &mut scores);
        Ok(scores)
    }

    /// Class with the greatest score; ties go to the earlier declared class.
    pub fn classify(&self, values: &[Value]) -> Result<usize> {
        Ok(argmax(&self.class_scores(values)?))
    }

    /// Intervals the tests on the path to `path` impose on each continuous
    /// attribute.
    pub fn bounds(&self, path: &NodePath) -> Result<PathBounds> {
        let mut b = PathBounds::unbounded(self.schema.feature_count());
        let mut node = &self.root;
        for &i in &path.0 {
            if let Node::Cut {
                attribute,
                threshold,
                ..
            } = node
            {
                if i == 0 {
                    b.upper[*attribute] = b.upper[*attribute].min(*threshold);
                } else {
                    b.lower[*attribute] = b.lower[*attribute].max(*threshold);
                }
            }
            node = *node
                .children()
                .get(i)
                .ok_or_else(|| TreeError::NoSuchNode(path.clone()))?;
        }
        Ok(b)
    }

    /// Renders the tree in the indented text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        write_node(&self.schema, &self.root, 0, &mut out);
        out
    }

    /// Parses the indented text form against `schema`.
    pub fn from_text(text: &str, schema: Arc<Schema>) -> Result<Tree> {
        let lines: Vec<(usize, usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let body = l.trim_start_matches(' ');
                (i + 1, l.len() - body.len(), body.trim_end())
            })
            .collect();
        let mut pos = 0;
        let root = parse_node(&schema, &lines, &mut pos, 0)?;
        if let Some((line, _, _)) = lines.get(pos) {
            return Err(TreeError::Parse {
                line: *line,
                message: "unexpected text after the tree".into(),
            });
        }
        Tree::new(schema, root).map_err(|e| TreeError::Parse {
            line: lines.first().map_or(1, |l| l.0),
            message: e.to_string(),
        })
    }
}

fn score(node: &Node, values: &[Value], w: f64, scores: &mut [f64]) {
    match node {
        Node::Leaf(l) => {
            let total = l.weight();
            if total > 0.0 {
                for (s, d) in scores.iter_mut().zip(&l.distribution) {
                    *s += w * d / total;
                }
            } else {
                scores[l.label] += w;
            }
        }
        _ => {
            let children = node.children();
            match node.branch_for(values) {
                Some(b) => score(children[b], values, w, scores),
                None => {
                    for (c, f) in children.into_iter().zip(node.missing_fractions()) {
                        if f > 0.0 {
                            score(c, values, w * f, scores);
                        }
                    }
                }
            }
        }
    }
}

fn validate(schema: &Schema, node: &Node) -> Result<()> {
    let invalid = |m: String| Err(TreeError::Invalid(m));
    match node {
        Node::Leaf(l) => {
            if l.label >= schema.class_count() {
                return invalid(format!("leaf label {} out of range", l.label));
            }
            if l.distribution.len() != schema.class_count() {
                return invalid(format!(
                    "leaf distribution has {} entries for {} classes",
                    l.distribution.len(),
                    schema.class_count()
                ));
            }
            if l.distribution.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return invalid("leaf distribution has a negative or non-finite weight".into());
            }
            Ok(())
        }
        Node::Cut {
            attribute,
            threshold,
            le,
            gt,
        } => {
            match schema.features().get(*attribute) {
                Some(a) if a.is_continuous() => {}
                _ => return invalid(format!("threshold test on non-continuous attribute {attribute}")),
            }
            if !threshold.is_finite() {
                return invalid(format!("threshold {threshold} is not finite"));
            }
            validate(schema, le)?;
            validate(schema, gt)
        }
        Node::Branch {
            attribute,
            children,
        } => {
            let Some(a) = schema.features().get(*attribute).filter(|a| !a.is_continuous()) else {
                return invalid(format!("value test on non-discrete attribute {attribute}"));
            };
            if children.len() != a.values().len() {
                return invalid(format!(
                    "test on `{}` has {} children for {} values",
                    a.name,
                    children.len(),
                    a.values().len()
                ));
            }
            children.iter().try_for_each(|c| validate(schema, c))
        }
    }
}

fn write_node(schema: &Schema, node: &Node, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match node {
        Node::Leaf(l) => {
            let dist: Vec<String> = schema
                .classes()
                .iter()
                .zip(&l.distribution)
                .map(|(c, w)| format!("{c}={w}"))
                .collect();
            out.push_str(&format!(
                "{indent}leaf {} [{}]{}\n",
                schema.class_name(l.label),
                dist.join(","),
                if l.grafted { " grafted" } else { "" }
            ));
        }
        Node::Cut {
            attribute,
            threshold,
            ..
        } => {
            out.push_str(&format!(
                "{indent}test {} <= {threshold}\n",
                schema.feature(*attribute).name
            ));
        }
        Node::Branch { attribute, .. } => {
            out.push_str(&format!("{indent}split {}\n", schema.feature(*attribute).name));
        }
    }
    for c in node.children() {
        write_node(schema, c, depth + 1, out);
    }
}

fn parse_node(
    schema: &Schema,
    lines: &[(usize, usize, &str)],
    pos: &mut usize,
    depth: usize,
) -> Result<Node> {
    let Some(&(line, indent, body)) = lines.get(*pos) else {
        return Err(TreeError::Parse {
            line: lines.last().map_or(1, |l| l.0),
            message: "tree ends early".into(),
        });
    };
    let err = |message: String| TreeError::Parse { line, message };
    if indent != 2 * depth {
        return Err(err(format!(
            "expected indentation {}, found {indent}",
            2 * depth
        )));
    }
    *pos += 1;
    let attribute = |name: &str| {
        schema
            .feature_index(name)
            .ok_or_else(|| err(format!("unknown attribute `{name}`")))
    };

    if let Some(rest) = body.strip_prefix("leaf ") {
        let (rest, grafted) = match rest.strip_suffix(" grafted") {
            Some(r) => (r, true),
            None => (rest, false),
        };
        let open = rest.rfind(" [").ok_or_else(|| err("leaf has no distribution".into()))?;
        let label_name = &rest[..open];
        let label = schema
            .class_index(label_name)
            .ok_or_else(|| err(format!("unknown class `{label_name}`")))?;
        let list = rest[open + 2..]
            .strip_suffix(']')
            .ok_or_else(|| err("unterminated distribution".into()))?;
        let mut distribution = vec![0.0; schema.class_count()];
        let mut seen = vec![false; schema.class_count()];
        if !list.is_empty() {
            for entry in list.split(',') {
                let (class, w) = entry
                    .rsplit_once('=')
                    .ok_or_else(|| err(format!("bad distribution entry `{entry}`")))?;
                let k = schema
                    .class_index(class)
                    .ok_or_else(|| err(format!("unknown class `{class}`")))?;
                if std::mem::replace(&mut seen[k], true) {
                    return Err(err(format!("class `{class}` listed twice")));
                }
                distribution[k] = w
                    .parse()
                    .map_err(|_| err(format!("bad weight `{w}`")))?;
            }
        }
        return Ok(Node::Leaf(Leaf {
            label,
            distribution,
            grafted,
        }));
    }
    if let Some(rest) = body.strip_prefix("test ") {
        let (name, threshold) = rest
            .rsplit_once(" <= ")
            .ok_or_else(|| err("expected `test <attribute> <= <threshold>`".into()))?;
        let attribute = attribute(name)?;
        let threshold: f64 = threshold
            .parse()
            .map_err(|_| err(format!("bad threshold `{threshold}`")))?;
        let le = parse_node(schema, lines, pos, depth + 1)?;
        let gt = parse_node(schema, lines, pos, depth + 1)?;
        return Ok(Node::cut(attribute, threshold, le, gt));
    }
    if let Some(name) = body.strip_prefix("split ") {
        let attribute = attribute(name)?;
        let arity = schema.feature(attribute).values().len();
        let children = (0..arity)
            .map(|_| parse_node(schema, lines, pos, depth + 1))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Node::Branch {
            attribute,
            children,
        });
    }
    Err(err(format!("unrecognised node `{body}`")))
}
