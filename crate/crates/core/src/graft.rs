//! Post-processing a tree by grafting new leaves onto existing ones.
//!
//! For each leaf, the training cases at its ancestors are searched for a
//! threshold on a continuous attribute that carves an empty region off the
//! leaf's region. If the cases in that region (seen from the ancestor) give
//! stronger Laplace-corrected support for another class than the leaf has for
//! its own, the leaf is replaced by a test that sends the region to a new
//! leaf of that class. The new leaves hold no training cases, so the tree
//! still classifies every training case as before.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::dataset::{Dataset, Value};
use crate::tree::{
    all_cases, class_weights, partition, CaseSet, Leaf, Node, NodePath, PathBounds, Tree,
    TreeError, WeightedCase,
};

#[derive(Debug, Error, PartialEq)]
pub enum GraftError {
    #[error("Laplace accuracy needs 0 <= positive <= total, got {positive} of {total}")]
    InvalidCounts { total: f64, positive: f64 },
    #[error("training data schema does not match the tree")]
    SchemaMismatch,
    #[error("grafting changed the class of training example {index} from {before} to {after}")]
    EquivalenceViolation {
        index: usize,
        before: String,
        after: String,
    },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub type Result<T, E = GraftError> = std::result::Result<T, E>;

/// Laplace accuracy estimate `(positive + 1) / (total + 2)`.
pub fn laplace(total: f64, positive: f64) -> Result<f64> {
    if !(positive >= 0.0 && positive <= total && total.is_finite()) {
        return Err(GraftError::InvalidCounts { total, positive });
    }
    Ok((positive + 1.0) / (total + 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Region `lower < a <= threshold`, below the leaf's cases.
    Below,
    /// Region `threshold < a <= upper`, above the leaf's cases.
    Above,
}

/// A proposed graft: the region of `attribute` beside the leaf's cases, the
/// class it would be labelled with, and the evidence from the cases in that
/// region at `ancestor`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraftCandidate {
    pub direction: Direction,
    pub ancestor: NodePath,
    pub attribute: usize,
    pub threshold: f64,
    pub label: usize,
    /// Weight of ancestor cases in the region.
    pub total: f64,
    /// Weight of those cases belonging to `label`.
    pub positive: f64,
    pub evidence: f64,
    /// Training index of the first case at the ancestor with value `threshold`.
    pub first_case: usize,
}

impl GraftCandidate {
    /// Orders candidates by evidence, then deeper ancestor, lower attribute,
    /// earlier first occurrence of the threshold, lower class.
    pub fn preference(&self, other: &Self) -> Ordering {
        self.evidence
            .total_cmp(&other.evidence)
            .then(self.ancestor.depth().cmp(&other.ancestor.depth()))
            .then(other.attribute.cmp(&self.attribute))
            .then(other.first_case.cmp(&self.first_case))
            .then(other.label.cmp(&self.label))
    }
}

fn keep_best(slot: &mut Option<GraftCandidate>, c: GraftCandidate) {
    if slot.as_ref().is_none_or(|b| c.preference(b) == Ordering::Greater) {
        *slot = Some(c);
    }
}

/// The training cases (with fractional weights) that reach `path`.
pub fn cases_at(tree: &Tree, path: &NodePath, train: &Dataset) -> Result<CaseSet> {
    check_schema(tree, train)?;
    let mut node = tree.root();
    let mut cases = all_cases(train);
    for &i in &path.0 {
        let children = node.children();
        let child = *children
            .get(i)
            .ok_or_else(|| TreeError::NoSuchNode(path.clone()))?;
        cases = partition(node, train, &cases).swap_remove(i);
        node = child;
    }
    Ok(cases)
}

fn check_schema(tree: &Tree, train: &Dataset) -> Result<()> {
    if tree.schema() != train.schema() {
        return Err(GraftError::SchemaMismatch);
    }
    Ok(())
}

/// Searches the cases at one ancestor for the best candidates on one attribute.
#[allow(clippy::too_many_arguments)]
fn search_ancestor(
    train: &Dataset,
    ancestor: &NodePath,
    cases: &[WeightedCase],
    attribute: usize,
    lower: f64,
    upper: f64,
    leaf_min: f64,
    leaf_max: f64,
    below: &mut Option<GraftCandidate>,
    above: &mut Option<GraftCandidate>,
) {
    let classes = train.schema().class_count();
    // (value, label, weight, training index) for cases inside the leaf's interval
    let mut entries: Vec<(f64, usize, f64, usize)> = cases
        .iter()
        .filter_map(|c| {
            let e = &train.examples()[c.index];
            match e.values[attribute] {
                Value::Continuous(x) if lower < x && x <= upper => {
                    Some((x, e.label, c.weight, c.index))
                }
                _ => None,
            }
        })
        .collect();
    if entries.is_empty() {
        return;
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.3.cmp(&b.3)));

    // Distinct values with class weights at or below each value.
    let mut groups: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    let mut running = vec![0.0; classes];
    for (i, &(x, label, w, index)) in entries.iter().enumerate() {
        running[label] += w;
        let last_of_group = entries.get(i + 1).is_none_or(|n| n.0 != x);
        if i == 0 || entries[i - 1].0 != x {
            groups.push((x, index, Vec::new()));
        }
        if last_of_group {
            groups.last_mut().unwrap().2 = running.clone();
        }
    }
    let all = running;
    let all_total: f64 = all.iter().sum();

    for (v, first_case, at_or_below) in &groups {
        let v = *v;
        let below_window = v < leaf_min && v < upper;
        let above_window = v > leaf_max && v < upper;
        if !(below_window || above_window) {
            continue;
        }
        let le_total: f64 = at_or_below.iter().sum();
        for k in 0..classes {
            let make = |direction, total: f64, positive: f64| GraftCandidate {
                direction,
                ancestor: ancestor.clone(),
                attribute,
                threshold: v,
                label: k,
                total,
                positive,
                evidence: (positive + 1.0) / (total + 2.0),
                first_case: *first_case,
            };
            if below_window {
                keep_best(below, make(Direction::Below, le_total, at_or_below[k]));
            }
            if above_window {
                let c = make(Direction::Above, all_total - le_total, all[k] - at_or_below[k]);
                keep_best(above, c);
            }
        }
    }
}

/// Best below-window and above-window candidates for the leaf at `path`,
/// given the case sets of its proper ancestors (root first) and of the leaf.
fn search_leaf(
    train: &Dataset,
    bounds: &PathBounds,
    ancestors: &[(NodePath, &CaseSet)],
    leaf_cases: &[WeightedCase],
) -> (Option<GraftCandidate>, Option<GraftCandidate>) {
    let mut below = None;
    let mut above = None;
    for (a, spec) in train.schema().features().iter().enumerate() {
        if !spec.is_continuous() {
            continue;
        }
        let (mut leaf_min, mut leaf_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in leaf_cases {
            if let Value::Continuous(x) = train.examples()[c.index].values[a] {
                leaf_min = leaf_min.min(x);
                leaf_max = leaf_max.max(x);
            }
        }
        for (path, cases) in ancestors {
            search_ancestor(
                train,
                path,
                cases,
                a,
                bounds.lower[a],
                bounds.upper[a],
                leaf_min,
                leaf_max,
                &mut below,
                &mut above,
            );
        }
    }
    (below, above)
}

/// The best candidates below and above the cases of the leaf at `leaf`.
pub fn best_candidates(
    tree: &Tree,
    leaf: &NodePath,
    train: &Dataset,
) -> Result<(Option<GraftCandidate>, Option<GraftCandidate>)> {
    check_schema(tree, train)?;
    tree.leaf(leaf)?;
    let bounds = tree.bounds(leaf)?;
    let sets: Vec<CaseSet> = leaf
        .ancestors()
        .map(|p| cases_at(tree, &p, train))
        .collect::<Result<_>>()?;
    let ancestors: Vec<(NodePath, &CaseSet)> = leaf.ancestors().zip(sets.iter()).collect();
    let leaf_cases = cases_at(tree, leaf, train)?;
    Ok(search_leaf(train, &bounds, &ancestors, &leaf_cases))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The leaf was itself added by grafting and is left alone.
    Skipped,
    /// No threshold lies outside the leaf's cases within its region.
    NoCandidate,
    /// No candidate beats the leaf's own evidence.
    Rejected,
    /// The winning candidate predicts the leaf's own class.
    SameClass(Direction),
    Grafted(Direction),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafReport {
    pub path: NodePath,
    pub label: usize,
    pub leaf_evidence: f64,
    pub below: Option<GraftCandidate>,
    pub above: Option<GraftCandidate>,
    pub outcome: Outcome,
}

impl LeafReport {
    /// The candidate that decided the outcome, if any.
    pub fn chosen(&self) -> Option<&GraftCandidate> {
        match self.outcome {
            Outcome::SameClass(Direction::Below) | Outcome::Grafted(Direction::Below) => {
                self.below.as_ref()
            }
            Outcome::SameClass(Direction::Above) | Outcome::Grafted(Direction::Above) => {
                self.above.as_ref()
            }
            _ => None,
        }
    }
}

fn decide(
    leaf: &Leaf,
    leaf_evidence: f64,
    below: &Option<GraftCandidate>,
    above: &Option<GraftCandidate>,
) -> Outcome {
    let above_evidence = above.as_ref().map_or(f64::NEG_INFINITY, |c| c.evidence);
    let pick = |direction, c: &GraftCandidate| {
        if c.label == leaf.label {
            Outcome::SameClass(direction)
        } else {
            Outcome::Grafted(direction)
        }
    };
    match (below, above) {
        (None, None) => Outcome::NoCandidate,
        (Some(b), _) if b.evidence > leaf_evidence && b.evidence >= above_evidence => {
            pick(Direction::Below, b)
        }
        (_, Some(a)) if a.evidence > leaf_evidence => pick(Direction::Above, a),
        _ => Outcome::Rejected,
    }
}

fn evaluate_leaf(
    train: &Dataset,
    path: &NodePath,
    leaf: &Leaf,
    bounds: &PathBounds,
    ancestors: &[(NodePath, &CaseSet)],
    leaf_cases: &[WeightedCase],
) -> Result<LeafReport> {
    let dist = class_weights(train, leaf_cases);
    let leaf_evidence = laplace(dist.iter().sum(), dist[leaf.label])?;
    if leaf.grafted {
        return Ok(LeafReport {
            path: path.clone(),
            label: leaf.label,
            leaf_evidence,
            below: None,
            above: None,
            outcome: Outcome::Skipped,
        });
    }
    let (below, above) = search_leaf(train, bounds, ancestors, leaf_cases);
    let outcome = decide(leaf, leaf_evidence, &below, &above);
    Ok(LeafReport {
        path: path.clone(),
        label: leaf.label,
        leaf_evidence,
        below,
        above,
        outcome,
    })
}

/// The subtree that replaces a leaf for a grafting outcome.
fn grafted_node(tree: &Tree, leaf: &Leaf, report: &LeafReport) -> Option<Node> {
    let Outcome::Grafted(direction) = report.outcome else {
        return None;
    };
    let c = report.chosen().expect("grafted outcome has a candidate");
    let new_leaf = Node::Leaf(Leaf {
        label: c.label,
        distribution: vec![0.0; tree.schema().class_count()],
        grafted: true,
    });
    let old = Node::Leaf(leaf.clone());
    Some(match direction {
        Direction::Below => Node::cut(c.attribute, c.threshold, new_leaf, old),
        Direction::Above => Node::cut(c.attribute, c.threshold, old, new_leaf),
    })
}

/// Decides and applies grafting for a single leaf.
pub fn graft_leaf(tree: &Tree, path: &NodePath, train: &Dataset) -> Result<(Tree, LeafReport)> {
    check_schema(tree, train)?;
    let leaf = tree.leaf(path)?;
    let bounds = tree.bounds(path)?;
    let sets: Vec<CaseSet> = path
        .ancestors()
        .map(|p| cases_at(tree, &p, train))
        .collect::<Result<_>>()?;
    let ancestors: Vec<(NodePath, &CaseSet)> = path.ancestors().zip(sets.iter()).collect();
    let leaf_cases = cases_at(tree, path, train)?;
    let report = evaluate_leaf(train, path, leaf, &bounds, &ancestors, &leaf_cases)?;
    let grafted = match grafted_node(tree, leaf, &report) {
        Some(node) => tree.replace(path, node)?,
        None => tree.clone(),
    };
    Ok((grafted, report))
}

/// Per-leaf outcomes of a grafting pass, leaves in left-to-right order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraftReport {
    pub leaves: Vec<LeafReport>,
}

impl GraftReport {
    fn count(&self, f: impl Fn(&Outcome) -> bool) -> usize {
        self.leaves.iter().filter(|l| f(&l.outcome)).count()
    }

    pub fn grafted(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Grafted(_)))
    }

    pub fn rejected(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Rejected))
    }

    pub fn same_class(&self) -> usize {
        self.count(|o| matches!(o, Outcome::SameClass(_)))
    }

    pub fn no_candidate(&self) -> usize {
        self.count(|o| matches!(o, Outcome::NoCandidate))
    }

    pub fn skipped(&self) -> usize {
        self.count(|o| matches!(o, Outcome::Skipped))
    }

    /// Human-readable listing against the tree's schema.
    pub fn render(&self, tree: &Tree) -> String {
        let s = tree.schema();
        let mut out = String::new();
        for l in &self.leaves {
            let status = match l.outcome {
                Outcome::Skipped => "skipped (grafted leaf)".to_string(),
                Outcome::NoCandidate => "no candidate".to_string(),
                Outcome::Rejected => "rejected".to_string(),
                Outcome::SameClass(_) | Outcome::Grafted(_) => {
                    let c = l.chosen().expect("candidate");
                    let test = match c.direction {
                        Direction::Below => format!("{} <= {}", s.feature(c.attribute).name, c.threshold),
                        Direction::Above => format!("{} > {}", s.feature(c.attribute).name, c.threshold),
                    };
                    let verb = if matches!(l.outcome, Outcome::Grafted(_)) {
                        "grafted"
                    } else {
                        "same class"
                    };
                    format!(
                        "{verb} {test} -> {} (evidence {:.4} from {}/{} at {})",
                        s.class_name(c.label),
                        c.evidence,
                        c.positive,
                        c.total,
                        c.ancestor
                    )
                }
            };
            out.push_str(&format!(
                "leaf {} [{}] evidence {:.4}: {status}\n",
                l.path,
                s.class_name(l.label),
                l.leaf_evidence
            ));
        }
        out.push_str(&format!(
            "grafted {} rejected {} same-class {} no-candidate {} skipped {}\n",
            self.grafted(),
            self.rejected(),
            self.same_class(),
            self.no_candidate(),
            self.skipped()
        ));
        out
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Skipped => "skipped",
            Outcome::NoCandidate => "no-candidate",
            Outcome::Rejected => "rejected",
            Outcome::SameClass(_) => "same-class",
            Outcome::Grafted(_) => "grafted",
        };
        f.write_str(s)
    }
}

/// Walks the tree depth-first, evaluating every leaf against the original tree.
fn evaluate_all(tree: &Tree, train: &Dataset) -> Result<Vec<LeafReport>> {
    struct Walk<'a> {
        tree: &'a Tree,
        train: &'a Dataset,
        reports: Vec<LeafReport>,
    }
    impl Walk<'_> {
        fn visit(
            &mut self,
            node: &Node,
            path: NodePath,
            cases: CaseSet,
            stack: &mut Vec<(NodePath, CaseSet)>,
        ) -> Result<()> {
            if let Node::Leaf(leaf) = node {
                let bounds = self.tree.bounds(&path)?;
                let ancestors: Vec<(NodePath, &CaseSet)> =
                    stack.iter().map(|(p, c)| (p.clone(), c)).collect();
                let r = evaluate_leaf(self.train, &path, leaf, &bounds, &ancestors, &cases)?;
                self.reports.push(r);
                return Ok(());
            }
            let parts = partition(node, self.train, &cases);
            stack.push((path.clone(), cases));
            for (i, (child, part)) in node.children().into_iter().zip(parts).enumerate() {
                self.visit(child, path.child(i), part, stack)?;
            }
            stack.pop();
            Ok(())
        }
    }
    let mut walk = Walk {
        tree,
        train,
        reports: Vec::new(),
    };
    walk.visit(tree.root(), NodePath::root(), all_cases(train), &mut Vec::new())?;
    Ok(walk.reports)
}

/// Grafts every leaf of `tree` (decisions all taken on the original tree) and
/// checks that each training example is classified as before.
pub fn post_process(tree: &Tree, train: &Dataset) -> Result<(Tree, GraftReport)> {
    check_schema(tree, train)?;
    let reports = evaluate_all(tree, train)?;
    let mut grafted = tree.clone();
    for r in &reports {
        let leaf = tree.leaf(&r.path)?;
        if let Some(node) = grafted_node(tree, leaf, r) {
            grafted = grafted.replace(&r.path, node)?;
        }
    }
    check_equivalence(tree, &grafted, train)?;
    Ok((grafted, GraftReport { leaves: reports }))
}

/// Fails if `after` classifies any example of `train` differently from `before`.
pub fn check_equivalence(before: &Tree, after: &Tree, train: &Dataset) -> Result<()> {
    for (index, e) in train.examples().iter().enumerate() {
        let b = before.classify(&e.values)?;
        let a = after.classify(&e.values)?;
        if a != b {
            return Err(GraftError::EquivalenceViolation {
                index,
                before: train.schema().class_name(b).to_string(),
                after: train.schema().class_name(a).to_string(),
            });
        }
    }
    Ok(())
}
