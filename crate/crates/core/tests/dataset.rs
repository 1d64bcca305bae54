mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use treegraft::dataset::{
    make_split, parse_data, parse_names, read_dataset, read_names, AttributeKind, Dataset,
    DatasetError, Example, Schema, Value,
};

use common::{data_dir, load, UCI};

/// (objects, attributes, continuous attributes, classes, most common class %)
fn expected(name: &str) -> (usize, usize, usize, usize, f64) {
    match name {
        "iris" => (150, 4, 4, 3, 100.0 * 50.0 / 150.0),
        "glass" => (214, 9, 9, 3, 100.0 * 87.0 / 214.0),
        "pima" => (768, 8, 8, 2, 100.0 * 500.0 / 768.0),
        "breast-cancer-wisconsin" => (699, 9, 9, 2, 100.0 * 458.0 / 699.0),
        "cleveland" => (303, 13, 6, 2, 100.0 * 164.0 / 303.0),
        "credit" => (690, 15, 6, 2, 100.0 * 383.0 / 690.0),
        "hepatitis" => (155, 19, 6, 2, 100.0 * 123.0 / 155.0),
        "new-thyroid" => (215, 5, 5, 3, 100.0 * 150.0 / 215.0),
        other => panic!("no expectation for {other}"),
    }
}

#[test]
fn bundled_datasets_load_with_expected_shape() {
    for name in UCI {
        let d = load(name);
        let (n, attrs, cont, classes, common) = expected(name);
        assert_eq!(d.len(), n, "{name} objects");
        assert_eq!(d.schema().feature_count(), attrs, "{name} attributes");
        let c = d.schema().features().iter().filter(|a| a.is_continuous()).count();
        assert_eq!(c, cont, "{name} continuous attributes");
        assert_eq!(d.schema().class_count(), classes, "{name} classes");
        let dist = d.class_distribution();
        let top = dist.iter().cloned().fold(0.0, f64::max);
        assert!((100.0 * top / n as f64 - common).abs() < 1e-9, "{name} majority");
    }
}

#[test]
fn iris_schema_and_missing() {
    let d = load("iris");
    assert!(d.schema().features().iter().all(|a| a.is_continuous()));
    assert_eq!(d.missing_percent(), 0.0);
    let dist = d.class_distribution();
    assert_eq!(dist, vec![50.0, 50.0, 50.0]);
}

#[test]
fn datasets_with_missing_values() {
    for name in ["credit", "hepatitis", "cleveland", "breast-cancer-wisconsin"] {
        assert!(load(name).missing_percent() > 0.0, "{name}");
    }
    for name in ["iris", "glass", "pima", "new-thyroid"] {
        assert_eq!(load(name).missing_percent(), 0.0, "{name}");
    }
}

#[test]
fn read_errors_name_the_file() {
    let dir = data_dir();
    let schema = read_names(&dir.join("iris.names")).unwrap();
    let missing = dir.join("no-such-file.data");
    let err = read_dataset(&missing, &schema).unwrap_err();
    assert!(matches!(err, DatasetError::Io { .. }));
    assert!(err.to_string().contains("no-such-file.data"));

    let tmp = std::env::temp_dir().join(format!("treegraft-bad-{}.data", std::process::id()));
    std::fs::write(&tmp, "1,2,3,4,Iris-setosa\n1,2,x,4,Iris-setosa\n").unwrap();
    let err = read_dataset(&tmp, &schema).unwrap_err().to_string();
    std::fs::remove_file(&tmp).ok();
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("treegraft-bad"), "{err}");
}

#[test]
fn split_seeds_vary() {
    let d = load("iris").subset(&(0..10).collect::<Vec<_>>());
    let plans: HashSet<Vec<usize>> = (0..100).map(|s| make_split(&d, s, 0.8).unwrap().train).collect();
    assert!(plans.len() > 1);
}

#[test]
fn split_full_size_dataset() {
    let d = load("iris");
    let plan = make_split(&d, 42, 0.8).unwrap();
    assert_eq!((plan.train.len(), plan.eval.len()), (120, 30));
}

fn mixed_schema() -> Arc<Schema> {
    Arc::new(
        Schema::new(vec![
            ("x".into(), AttributeKind::Continuous),
            ("colour".into(), AttributeKind::Discrete(vec!["red".into(), "green".into()])),
            ("y".into(), AttributeKind::Continuous),
            ("class".into(), AttributeKind::Class(vec!["yes".into(), "no".into()])),
        ])
        .unwrap(),
    )
}

fn value_strategy(kind: usize) -> BoxedStrategy<Value> {
    let cont = prop_oneof![
        4 => (-1e6f64..1e6).prop_map(Value::Continuous),
        1 => Just(Value::Missing),
    ];
    let disc = prop_oneof![
        4 => (0usize..2).prop_map(Value::Discrete),
        1 => Just(Value::Missing),
    ];
    if kind == 1 { disc.boxed() } else { cont.boxed() }
}

fn example_strategy() -> impl Strategy<Value = Example> {
    (value_strategy(0), value_strategy(1), value_strategy(2), 0usize..2)
        .prop_map(|(a, b, c, label)| Example::new(vec![a, b, c], label))
}

proptest! {
    #[test]
    fn data_text_round_trips(examples in prop::collection::vec(example_strategy(), 0..40)) {
        let d = Dataset::new(mixed_schema(), examples).unwrap();
        let reparsed = parse_data(&d.to_data_text(), d.schema()).unwrap();
        prop_assert_eq!(reparsed.examples(), d.examples());
    }

    #[test]
    fn names_text_round_trips(n_cont in 0usize..4, arities in prop::collection::vec(1usize..4, 0..3), classes in 1usize..5) {
        let mut attrs = Vec::new();
        for i in 0..n_cont {
            attrs.push((format!("c{i}"), AttributeKind::Continuous));
        }
        for (i, k) in arities.iter().enumerate() {
            attrs.push((format!("d {i}"), AttributeKind::Discrete((0..*k).map(|v| format!("v{v}")).collect())));
        }
        attrs.push(("class".into(), AttributeKind::Class((0..classes).map(|c| format!("k{c}")).collect())));
        let schema = Schema::new(attrs).unwrap();
        prop_assert_eq!(parse_names(&schema.to_names_text()).unwrap(), schema);
    }

    #[test]
    fn split_partitions_indices(n in 1usize..300, seed in any::<u64>(), f in 0.01f64..0.99) {
        let examples = (0..n).map(|i| Example::new(vec![Value::Continuous(i as f64), Value::Missing, Value::Missing], 0)).collect();
        let d = Dataset::new(mixed_schema(), examples).unwrap();
        let plan = make_split(&d, seed, f).unwrap();
        prop_assert_eq!(plan.train.len(), (f * n as f64).round() as usize);
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.eval).cloned().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(plan.train.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(plan.eval.windows(2).all(|w| w[0] < w[1]));
    }
}
