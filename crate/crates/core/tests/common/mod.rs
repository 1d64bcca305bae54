//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use treegraft::dataset::{read_dataset, read_names, AttributeKind, Dataset, Example, Schema, Value};
use treegraft::graft::{Direction, GraftCandidate};
use treegraft::tree::{Node, NodePath, Tree};

pub const UCI: [&str; 8] = [
    "iris",
    "glass",
    "pima",
    "breast-cancer-wisconsin",
    "cleveland",
    "credit",
    "hepatitis",
    "new-thyroid",
];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load(name: &str) -> Dataset {
    let dir = data_dir();
    let schema = read_names(&dir.join(format!("{name}.names"))).expect("names file");
    read_dataset(&dir.join(format!("{name}.data")), &schema).expect("data file")
}

pub fn ab_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(vec![
            ("A".into(), AttributeKind::Continuous),
            ("B".into(), AttributeKind::Continuous),
            ("class".into(), AttributeKind::Class(vec!["+".into(), "-".into()])),
        ])
        .unwrap(),
    )
}

/// Ten points in the unit-free (A, B) plane: three positives with small A,
/// seven negatives with large A.
pub fn ten_points() -> Dataset {
    let pos = [(1.0, 0.5), (3.0, 0.2), (4.0, 0.8)];
    let neg = [(6.0, 6.0), (7.0, 8.0), (8.0, 7.0), (9.0, 9.0), (7.0, 9.0), (8.0, 3.0), (9.0, 5.0)];
    let examples = pos
        .iter()
        .map(|p| (p, 0))
        .chain(neg.iter().map(|p| (p, 1)))
        .map(|(&(a, b), c)| Example::new(vec![Value::Continuous(a), Value::Continuous(b)], c))
        .collect();
    Dataset::new(ab_schema(), examples).unwrap()
}

/// The tree `A <= 5 -> +, A > 5 -> -` with distributions from [`ten_points`].
pub fn ten_points_tree() -> Tree {
    Tree::new(
        ab_schema(),
        Node::cut(0, 5.0, Node::leaf(0, vec![3.0, 0.0]), Node::leaf(1, vec![0.0, 7.0])),
    )
    .unwrap()
}

pub struct Gen(Xoshiro256StarStar);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

pub struct SyntheticSpec {
    pub max_cases: usize,
    pub max_continuous: usize,
    pub max_discrete: usize,
    pub missing_rate: f64,
}

/// A random dataset with coarse integer-valued continuous attributes, optional
/// discrete attributes, and labels loosely tied to the first attribute.
pub fn synthetic(gen: &mut Gen, spec: &SyntheticSpec) -> Dataset {
    let n_cont = 1 + gen.below(spec.max_continuous);
    let n_disc = if spec.max_discrete == 0 { 0 } else { gen.below(spec.max_discrete + 1) };
    let n_classes = 2 + gen.below(2);
    let mut attrs = Vec::new();
    let mut kinds = Vec::new();
    for i in 0..n_cont {
        attrs.push((format!("c{i}"), AttributeKind::Continuous));
        kinds.push(None);
    }
    for i in 0..n_disc {
        let arity = 2 + gen.below(2);
        let values = (0..arity).map(|v| format!("v{v}")).collect();
        attrs.push((format!("d{i}"), AttributeKind::Discrete(values)));
        kinds.push(Some(arity));
    }
    let classes = (0..n_classes).map(|c| format!("k{c}")).collect();
    attrs.push(("class".into(), AttributeKind::Class(classes)));
    let schema = Arc::new(Schema::new(attrs).unwrap());

    let n = 4 + gen.below(spec.max_cases - 3);
    let spread = 3 + gen.below(12);
    let examples = (0..n)
        .map(|_| {
            let values: Vec<Value> = kinds
                .iter()
                .map(|k| {
                    if gen.chance(spec.missing_rate) {
                        return Value::Missing;
                    }
                    match k {
                        None => Value::Continuous(gen.below(spread) as f64 / 2.0),
                        Some(arity) => Value::Discrete(gen.below(*arity)),
                    }
                })
                .collect();
            let label = match values[0] {
                Value::Continuous(x) if gen.chance(0.7) => {
                    ((x * 2.0) as usize * n_classes / spread).min(n_classes - 1)
                }
                _ => gen.below(n_classes),
            };
            Example::new(values, label)
        })
        .collect();
    Dataset::new(schema, examples).unwrap()
}

/// Exhaustive candidate search for a tree over data without missing values.
///
/// Case membership is decided by checking every test on the path, bounds are
/// folded from the path, and every (ancestor, attribute, observed value, class)
/// tuple is scored by direct counting.
pub fn oracle_candidates(
    tree: &Tree,
    leaf: &NodePath,
    data: &Dataset,
) -> (Option<GraftCandidate>, Option<GraftCandidate>) {
    let classes = data.schema().class_count();
    // (attribute, threshold, took the <= branch), None for discrete tests
    let mut tests: Vec<Option<(usize, f64, bool)>> = Vec::new();
    let mut disc_tests: Vec<Option<(usize, usize)>> = Vec::new();
    let mut node = tree.root();
    for &i in &leaf.0 {
        match node {
            Node::Cut { attribute, threshold, le, gt } => {
                tests.push(Some((*attribute, *threshold, i == 0)));
                disc_tests.push(None);
                node = if i == 0 { le } else { gt };
            }
            Node::Branch { attribute, children } => {
                tests.push(None);
                disc_tests.push(Some((*attribute, i)));
                node = &children[i];
            }
            Node::Leaf(_) => panic!("path passes through a leaf"),
        }
    }
    let passes = |e: &Example, depth: usize| -> bool {
        (0..depth).all(|d| match (tests[d], disc_tests[d]) {
            (Some((a, t, le)), _) => match e.values[a] {
                Value::Continuous(x) => (x <= t) == le,
                _ => panic!("oracle needs complete data"),
            },
            (_, Some((a, v))) => e.values[a] == Value::Discrete(v),
            _ => unreachable!(),
        })
    };
    let value = |e: &Example, a: usize| match e.values[a] {
        Value::Continuous(x) => x,
        _ => panic!("oracle needs complete data"),
    };
    let depth = leaf.depth();
    let leaf_cases: Vec<&Example> = data.examples().iter().filter(|e| passes(e, depth)).collect();

    let mut best: [Option<(GraftCandidate, (f64, usize, i64, i64, i64))>; 2] = [None, None];
    for (a, spec) in data.schema().features().iter().enumerate() {
        if !spec.is_continuous() {
            continue;
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (attr, t, le) in tests.iter().flatten() {
            if *attr == a {
                if *le {
                    hi = hi.min(*t);
                } else {
                    lo = lo.max(*t);
                }
            }
        }
        let mn = leaf_cases.iter().map(|e| value(e, a)).fold(f64::INFINITY, f64::min);
        let mx = leaf_cases.iter().map(|e| value(e, a)).fold(f64::NEG_INFINITY, f64::max);
        for d in 0..depth {
            let ancestor: Vec<(usize, &Example)> = data
                .examples()
                .iter()
                .enumerate()
                .filter(|(_, e)| passes(e, d))
                .collect();
            for &(_, x) in &ancestor {
                let v = value(x, a);
                let first = ancestor.iter().find(|(_, y)| value(y, a) == v).unwrap().0;
                for (slot, direction) in [(0, Direction::Below), (1, Direction::Above)] {
                    let ok = match direction {
                        Direction::Below => lo < v && v < mn && v < hi,
                        Direction::Above => mx < v && v < hi && v > lo,
                    };
                    if !ok {
                        continue;
                    }
                    let region: Vec<&Example> = ancestor
                        .iter()
                        .map(|(_, y)| *y)
                        .filter(|y| {
                            let w = value(y, a);
                            match direction {
                                Direction::Below => lo < w && w <= v,
                                Direction::Above => v < w && w <= hi,
                            }
                        })
                        .collect();
                    for k in 0..classes {
                        let total = region.len() as f64;
                        let positive = region.iter().filter(|y| y.label == k).count() as f64;
                        let evidence = (positive + 1.0) / (total + 2.0);
                        let key = (evidence, d, -(a as i64), -(first as i64), -(k as i64));
                        let better = match &best[slot] {
                            None => true,
                            Some((_, b)) => {
                                key.0 > b.0
                                    || (key.0 == b.0 && (key.1, key.2, key.3, key.4) > (b.1, b.2, b.3, b.4))
                            }
                        };
                        if better {
                            let c = GraftCandidate {
                                direction,
                                ancestor: NodePath(leaf.0[..d].to_vec()),
                                attribute: a,
                                threshold: v,
                                label: k,
                                total,
                                positive,
                                evidence,
                                first_case: first,
                            };
                            best[slot] = Some((c, key));
                        }
                    }
                }
            }
        }
    }
    let [b, a] = best;
    (b.map(|x| x.0), a.map(|x| x.0))
}
