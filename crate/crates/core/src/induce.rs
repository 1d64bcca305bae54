//! Top-down tree induction by gain ratio and error-based pruning, following
//! the C4.5 recipe.

use thiserror::Error;

use crate::dataset::{AttributeKind, Dataset, Value};
use crate::stats::regularized_incomplete_beta;
use crate::tree::{all_cases, argmax, class_weights, partition, CaseSet, Node, Tree, TreeError, WeightedCase};

const EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum InduceError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub type Result<T, E = InduceError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InduceConfig {
    /// Minimum weight two or more branches of a test must receive.
    pub min_cases: f64,
    /// Confidence level for the pessimistic error estimate used in pruning.
    pub prune_confidence: f64,
}

impl Default for InduceConfig {
    fn default() -> Self {
        Self {
            min_cases: 2.0,
            prune_confidence: 0.25,
        }
    }
}

impl InduceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.min_cases >= 1.0 && self.min_cases.is_finite()) {
            return Err(InduceError::InvalidConfig(format!(
                "minimum cases {} must be at least 1",
                self.min_cases
            )));
        }
        if !(self.prune_confidence > 0.0 && self.prune_confidence < 1.0) {
            return Err(InduceError::InvalidConfig(format!(
                "pruning confidence {} must lie in (0, 1)",
                self.prune_confidence
            )));
        }
        Ok(())
    }
}

/// A test considered at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub attribute: usize,
    /// Cut point for a continuous attribute.
    pub threshold: Option<f64>,
    pub gain: f64,
    pub split_info: f64,
}

impl SplitCandidate {
    pub fn gain_ratio(&self) -> f64 {
        self.gain / self.split_info
    }
}

/// `sum(w) * entropy(w)`, in bits.
fn total_info(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let sum: f64 = weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * w.log2())
        .sum();
    total * total.log2() - sum
}

/// Evaluates the test on a discrete attribute. `None` when fewer than two
/// branches would receive `min_cases`.
fn evaluate_discrete(
    dataset: &Dataset,
    cases: &[WeightedCase],
    attribute: usize,
    arity: usize,
    total: f64,
    config: &InduceConfig,
) -> Option<SplitCandidate> {
    let classes = dataset.schema().class_count();
    let mut freq = vec![vec![0.0; classes]; arity];
    let mut unknown = 0.0;
    for c in cases {
        let e = &dataset.examples()[c.index];
        match e.values[attribute] {
            Value::Discrete(v) => freq[v][e.label] += c.weight,
            _ => unknown += c.weight,
        }
    }
    let branch: Vec<f64> = freq.iter().map(|f| f.iter().sum()).collect();
    let reasonable = branch.iter().filter(|w| **w >= config.min_cases).count();
    if reasonable < 2 {
        return None;
    }
    let known = total - unknown;
    let mut known_dist = vec![0.0; classes];
    for f in &freq {
        for (k, w) in known_dist.iter_mut().zip(f) {
            *k += w;
        }
    }
    let base = total_info(&known_dist) / known;
    let after: f64 = freq.iter().map(|f| total_info(f)).sum::<f64>() / known;
    let gain = (base - after) * known / total;
    let mut parts = branch;
    parts.push(unknown);
    Some(SplitCandidate {
        attribute,
        threshold: None,
        gain,
        split_info: total_info(&parts) / total,
    })
}

/// Evaluates the best binary cut on a continuous attribute. The threshold is
/// the largest observed value on the `<=` side.
fn evaluate_continuous(
    dataset: &Dataset,
    cases: &[WeightedCase],
    attribute: usize,
    total: f64,
    config: &InduceConfig,
) -> Option<SplitCandidate> {
    let classes = dataset.schema().class_count();
    let mut known: Vec<(f64, usize, f64)> = cases
        .iter()
        .filter_map(|c| {
            let e = &dataset.examples()[c.index];
            e.values[attribute]
                .as_continuous()
                .map(|x| (x, e.label, c.weight))
        })
        .collect();
    if known.len() < 2 {
        return None;
    }
    known.sort_by(|a, b| a.0.total_cmp(&b.0));
    let known_weight: f64 = known.iter().map(|k| k.2).sum();
    if known_weight < 2.0 * config.min_cases {
        return None;
    }
    let unknown = total - known_weight;
    let min_split = (0.1 * known_weight / classes as f64).clamp(config.min_cases, 25.0);

    let mut high = vec![0.0; classes];
    for k in &known {
        high[k.1] += k.2;
    }
    let base = total_info(&high) / known_weight;
    let mut low = vec![0.0; classes];
    let mut low_weight = 0.0;
    let mut best: Option<(f64, f64, f64)> = None; // (info after, threshold, low weight)
    for i in 0..known.len() - 1 {
        let (x, label, w) = known[i];
        low[label] += w;
        high[label] -= w;
        low_weight += w;
        let next = known[i + 1].0;
        if x >= next {
            continue;
        }
        let high_weight = known_weight - low_weight;
        if low_weight + EPSILON < min_split || high_weight + EPSILON < min_split {
            continue;
        }
        let high_clamped: Vec<f64> = high.iter().map(|h| h.max(0.0)).collect();
        let info = (total_info(&low) + total_info(&high_clamped)) / known_weight;
        if best.is_none_or(|b| info < b.0 - EPSILON * 1e-3) {
            best = Some((info, x, low_weight));
        }
    }
    let (info, threshold, low_weight) = best?;
    let gain = (base - info) * known_weight / total;
    let split_info = total_info(&[low_weight, known_weight - low_weight, unknown]) / total;
    Some(SplitCandidate {
        attribute,
        threshold: Some(threshold),
        gain,
        split_info,
    })
}

/// All attributes that admit a test at this node, in attribute order.
pub fn candidate_splits(
    dataset: &Dataset,
    cases: &[WeightedCase],
    config: &InduceConfig,
) -> Vec<SplitCandidate> {
    let total: f64 = cases.iter().map(|c| c.weight).sum();
    dataset
        .schema()
        .features()
        .iter()
        .enumerate()
        .filter_map(|(a, spec)| match &spec.kind {
            AttributeKind::Continuous => evaluate_continuous(dataset, cases, a, total, config),
            AttributeKind::Discrete(values) => {
                evaluate_discrete(dataset, cases, a, values.len(), total, config)
            }
            AttributeKind::Class(_) => None,
        })
        .collect()
}

/// Picks the candidate with the highest gain ratio among those whose gain is
/// positive and at least the average gain. Ties go to the lower attribute.
pub fn choose_split(candidates: &[SplitCandidate]) -> Option<SplitCandidate> {
    if candidates.is_empty() {
        return None;
    }
    let average = candidates.iter().map(|c| c.gain).sum::<f64>() / candidates.len() as f64;
    let mut best: Option<SplitCandidate> = None;
    for c in candidates {
        if c.gain <= EPSILON || c.gain < average - EPSILON || c.split_info <= EPSILON {
            continue;
        }
        if best.is_none_or(|b| c.gain_ratio() > b.gain_ratio()) {
            best = Some(*c);
        }
    }
    best
}

fn node_from_split(split: &SplitCandidate, children: Vec<Node>) -> Node {
    match split.threshold {
        Some(t) => {
            let mut it = children.into_iter();
            Node::cut(split.attribute, t, it.next().unwrap(), it.next().unwrap())
        }
        None => Node::Branch {
            attribute: split.attribute,
            children,
        },
    }
}

/// Sends each case down the branch of `split`; cases missing the attribute go
/// down every branch with weight in proportion to the known cases there.
fn split_cases(dataset: &Dataset, cases: &[WeightedCase], split: &SplitCandidate) -> Vec<CaseSet> {
    let arity = match split.threshold {
        Some(_) => 2,
        None => dataset.schema().feature(split.attribute).values().len(),
    };
    let branch_of = |c: &WeightedCase| -> Option<usize> {
        match (dataset.examples()[c.index].values[split.attribute], split.threshold) {
            (Value::Continuous(x), Some(t)) => Some(if x <= t { 0 } else { 1 }),
            (Value::Discrete(v), None) => Some(v),
            _ => None,
        }
    };
    let mut known = vec![0.0; arity];
    for c in cases {
        if let Some(b) = branch_of(c) {
            known[b] += c.weight;
        }
    }
    let known_total: f64 = known.iter().sum();
    let mut parts = vec![CaseSet::new(); arity];
    for c in cases {
        match branch_of(c) {
            Some(b) => parts[b].push(*c),
            None => {
                for (part, k) in parts.iter_mut().zip(&known) {
                    if *k > 0.0 {
                        part.push(WeightedCase {
                            index: c.index,
                            weight: c.weight * k / known_total,
                        });
                    }
                }
            }
        }
    }
    parts
}

fn grow_node(
    dataset: &Dataset,
    cases: &[WeightedCase],
    fallback_label: usize,
    config: &InduceConfig,
) -> Node {
    let dist = class_weights(dataset, cases);
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return Node::leaf(fallback_label, dist);
    }
    let label = argmax(&dist);
    let pure = dist.iter().filter(|w| **w > 0.0).count() <= 1;
    if pure || total < 2.0 * config.min_cases {
        return Node::leaf(label, dist);
    }
    let Some(split) = choose_split(&candidate_splits(dataset, cases, config)) else {
        return Node::leaf(label, dist);
    };
    let children = split_cases(dataset, cases, &split)
        .iter()
        .map(|part| grow_node(dataset, part, label, config))
        .collect();
    let node = node_from_split(&split, children);
    let leaf_errors = total - dist[label];
    if node.errors() >= leaf_errors - 1e-6 {
        return Node::leaf(label, dist);
    }
    node
}

/// Grows an unpruned tree from every example of `train`.
pub fn grow(train: &Dataset, config: &InduceConfig) -> Result<Tree> {
    config.validate()?;
    let cases = all_cases(train);
    if cases.is_empty() {
        return Err(InduceError::EmptyTrainingSet);
    }
    let root = grow_node(train, &cases, 0, config);
    Ok(Tree::new(train.shared_schema(), root)?)
}

/// Upper limit of the `cf` confidence interval for the error rate when `e`
/// errors are observed in `n` cases, from the binomial distribution.
pub fn upper_error_rate(n: f64, e: f64, cf: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    if e <= 1e-12 {
        return 1.0 - cf.powf(1.0 / n);
    }
    if e >= n {
        return 1.0;
    }
    // P(X <= e | n, p) = I_{1-p}(n - e, e + 1) falls as p rises.
    let cdf = |p: f64| regularized_incomplete_beta(1.0 - p, n - e, e + 1.0);
    let (mut lo, mut hi) = (e / n, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) > cf {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Predicted errors of a leaf covering `n` cases with `e` errors.
pub fn predicted_errors(n: f64, e: f64, cf: f64) -> f64 {
    n * upper_error_rate(n, e, cf)
}

fn prune_node(
    node: &Node,
    dataset: &Dataset,
    cases: &[WeightedCase],
    config: &InduceConfig,
) -> (Node, f64) {
    let dist = class_weights(dataset, cases);
    let total: f64 = dist.iter().sum();
    let cf = config.prune_confidence;
    match node {
        Node::Leaf(l) => {
            let e = total - dist[l.label];
            let mut leaf = l.clone();
            leaf.distribution = dist;
            (Node::Leaf(leaf), predicted_errors(total, e, cf))
        }
        _ => {
            let parts = partition(node, dataset, cases);
            let mut subtree_errors = 0.0;
            let mut children = Vec::new();
            for (child, part) in node.children().into_iter().zip(&parts) {
                let (pruned, errors) = prune_node(child, dataset, part, config);
                subtree_errors += errors;
                children.push(pruned);
            }
            let label = if total > 0.0 {
                argmax(&dist)
            } else {
                argmax(&node.distribution(dist.len()))
            };
            let leaf_errors = predicted_errors(total, total - dist[label], cf);
            if leaf_errors <= subtree_errors + 1e-9 {
                return (Node::leaf(label, dist), leaf_errors);
            }
            let rebuilt = match node {
                Node::Cut {
                    attribute,
                    threshold,
                    ..
                } => {
                    let mut it = children.into_iter();
                    Node::cut(*attribute, *threshold, it.next().unwrap(), it.next().unwrap())
                }
                Node::Branch { attribute, .. } => Node::Branch {
                    attribute: *attribute,
                    children,
                },
                Node::Leaf(_) => unreachable!(),
            };
            (rebuilt, subtree_errors)
        }
    }
}

/// Replaces subtrees bottom-up by a leaf whenever the leaf's predicted errors
/// do not exceed the sum over the subtree's leaves.
pub fn prune(tree: &Tree, train: &Dataset, config: &InduceConfig) -> Result<Tree> {
    config.validate()?;
    let cases = all_cases(train);
    let (root, _) = prune_node(tree.root(), train, &cases, config);
    Ok(Tree::new(tree.shared_schema(), root)?)
}

/// Grows a tree and returns it along with its pruned form.
pub fn train(train: &Dataset, config: &InduceConfig) -> Result<(Tree, Tree)> {
    let unpruned = grow(train, config)?;
    let pruned = prune(&unpruned, train, config)?;
    Ok((unpruned, pruned))
}
