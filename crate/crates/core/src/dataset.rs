//! Attribute schemas, weighted examples, and the C4.5 `.names`/`.data` and CSV
//! readers used to load them.
//!
//! A `.names` file starts with the list of class labels, followed by one
//! declaration per attribute:
//!
//! ```text
//! | comments run from a bar to the end of the line
//! p, n.
//! A: continuous.
//! colour: red, green, blue.
//! ```
//!
//! Records in a `.data` file list the attribute values in declaration order with
//! the class label last. `?` marks a missing value.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use thiserror::Error;

/// Name given to the class attribute, which `.names` files leave anonymous.
pub const CLASS_ATTRIBUTE: &str = "class";

const MISSING: &str = "?";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: duplicate attribute name `{name}`")]
    DuplicateAttribute { line: usize, name: String },
    #[error("line {line}: duplicate value `{value}`")]
    DuplicateValue { line: usize, value: String },
    #[error("line {line}: empty class list")]
    EmptyClassList { line: usize },
    #[error("line {line}: entry is not terminated by a period")]
    Unterminated { line: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: `{value}` is not a number (attribute `{attribute}`)")]
    NotNumeric {
        line: usize,
        attribute: String,
        value: String,
    },
    #[error("line {line}: `{value}` is not a declared value of `{attribute}`")]
    UndeclaredValue {
        line: usize,
        attribute: String,
        value: String,
    },
    #[error("line {line}: `{value}` is not a declared class")]
    UndeclaredClass { line: usize, value: String },
    #[error("unknown column `{0}` in CSV header")]
    UnknownColumn(String),
    #[error("CSV header has no column for attribute `{0}`")]
    MissingColumn(String),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        source: Box<DatasetError>,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("example {index} does not conform to the schema: {message}")]
    Nonconforming { index: usize, message: String },
    #[error("train fraction {0} is outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("dataset is empty")]
    Empty,
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub enum AttributeKind {
    Continuous,
    Discrete(Vec<String>),
    Class(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub position: usize,
}

impl AttributeSpec {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, AttributeKind::Continuous)
    }

    /// Declared values of a discrete or class attribute.
    pub fn values(&self) -> &[String] {
        match &self.kind {
            AttributeKind::Continuous => &[],
            AttributeKind::Discrete(v) | AttributeKind::Class(v) => v,
        }
    }
}

/// Ordered attribute declarations. The class attribute is always last.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    attributes: Vec<AttributeSpec>,
}

impl Schema {
    /// Builds a schema from attribute declarations, assigning positions in order.
    pub fn new(attributes: Vec<(String, AttributeKind)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, kind) in &attributes {
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate attribute `{name}`"
                )));
            }
            match kind {
                AttributeKind::Continuous => {}
                AttributeKind::Discrete(values) | AttributeKind::Class(values) => {
                    if values.is_empty() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "`{name}` declares no values"
                        )));
                    }
                    let mut distinct = HashSet::new();
                    if let Some(dup) = values.iter().find(|v| !distinct.insert(v.as_str())) {
                        return Err(DatasetError::InvalidSchema(format!(
                            "`{name}` declares `{dup}` twice"
                        )));
                    }
                }
            }
        }
        let class_count = attributes
            .iter()
            .filter(|(_, k)| matches!(k, AttributeKind::Class(_)))
            .count();
        if class_count != 1 || !matches!(attributes.last(), Some((_, AttributeKind::Class(_)))) {
            return Err(DatasetError::InvalidSchema(
                "exactly one class attribute, declared last, is required".into(),
            ));
        }
        let attributes = attributes
            .into_iter()
            .enumerate()
            .map(|(position, (name, kind))| AttributeSpec {
                name,
                kind,
                position,
            })
            .collect();
        Ok(Self { attributes })
    }

    /// Every attribute, class last.
    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    /// The non-class attributes.
    pub fn features(&self) -> &[AttributeSpec] {
        &self.attributes[..self.attributes.len() - 1]
    }

    pub fn feature_count(&self) -> usize {
        self.attributes.len() - 1
    }

    pub fn feature(&self, index: usize) -> &AttributeSpec {
        &self.features()[index]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features().iter().position(|a| a.name == name)
    }

    pub fn class_attribute(&self) -> &AttributeSpec {
        self.attributes.last().expect("schema has a class attribute")
    }

    pub fn classes(&self) -> &[String] {
        self.class_attribute().values()
    }

    pub fn class_count(&self) -> usize {
        self.classes().len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == label)
    }

    pub fn class_name(&self, index: usize) -> &str {
        &self.classes()[index]
    }

    /// Renders the schema in `.names` syntax.
    pub fn to_names_text(&self) -> String {
        let mut out = format!("{}.\n", self.classes().join(", "));
        for a in self.features() {
            match &a.kind {
                AttributeKind::Continuous => out.push_str(&format!("{}: continuous.\n", a.name)),
                AttributeKind::Discrete(v) => {
                    out.push_str(&format!("{}: {}.\n", a.name, v.join(", ")))
                }
                AttributeKind::Class(_) => unreachable!("class attribute is never a feature"),
            }
        }
        out
    }
}

/// One attribute value of an example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Continuous(f64),
    /// Index into the attribute's declared value list.
    Discrete(usize),
    Missing,
}

impl Value {
    pub fn as_continuous(&self) -> Option<f64> {
        match *self {
            Value::Continuous(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub values: Vec<Value>,
    /// Index into the schema's class list.
    pub label: usize,
    pub weight: f64,
}

impl Example {
    pub fn new(values: Vec<Value>, label: usize) -> Self {
        Self {
            values,
            label,
            weight: 1.0,
        }
    }
}

/// A parsed row whose class label may be absent (inputs to classify).
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
    pub label: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    C45,
    Csv,
    Memory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub format: Format,
}

impl Provenance {
    fn memory() -> Self {
        Self {
            source: String::new(),
            format: Format::Memory,
        }
    }
}

/// A schema and its examples, in the order they were read.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    examples: Vec<Example>,
    provenance: Provenance,
}

impl Dataset {
    /// Validates that every example conforms to `schema`.
    pub fn new(schema: Arc<Schema>, examples: Vec<Example>) -> Result<Self> {
        for (index, e) in examples.iter().enumerate() {
            check_conforms(&schema, e).map_err(|message| DatasetError::Nonconforming {
                index,
                message,
            })?;
        }
        Ok(Self {
            schema,
            examples,
            provenance: Provenance::memory(),
        })
    }

    pub fn with_provenance(mut self, source: impl Into<String>, format: Format) -> Self {
        self.provenance = Provenance {
            source: source.into(),
            format,
        };
        self
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples at `indices`, in the order given.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Weighted count per class.
    pub fn class_distribution(&self) -> Vec<f64> {
        let mut dist = vec![0.0; self.schema.class_count()];
        for e in &self.examples {
            dist[e.label] += e.weight;
        }
        dist
    }

    /// Percentage of attribute values (excluding the class) that are missing.
    pub fn missing_percent(&self) -> f64 {
        let slots = self.examples.len() * self.schema.feature_count();
        if slots == 0 {
            return 0.0;
        }
        let missing = self
            .examples
            .iter()
            .flat_map(|e| &e.values)
            .filter(|v| v.is_missing())
            .count();
        100.0 * missing as f64 / slots as f64
    }

    /// Renders the examples in `.data` syntax. Weights are not written.
    pub fn to_data_text(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            for (attr, v) in self.schema.features().iter().zip(&e.values) {
                match v {
                    Value::Continuous(x) => out.push_str(&x.to_string()),
                    Value::Discrete(i) => out.push_str(&attr.values()[*i]),
                    Value::Missing => out.push_str(MISSING),
                }
                out.push(',');
            }
            out.push_str(self.schema.class_name(e.label));
            out.push('\n');
        }
        out
    }
}

fn check_conforms(schema: &Schema, e: &Example) -> std::result::Result<(), String> {
    if e.values.len() != schema.feature_count() {
        return Err(format!(
            "{} values for {} attributes",
            e.values.len(),
            schema.feature_count()
        ));
    }
    if e.label >= schema.class_count() {
        return Err(format!("class index {} out of range", e.label));
    }
    if !(e.weight >= 0.0 && e.weight.is_finite()) {
        return Err(format!("weight {} is not a finite non-negative number", e.weight));
    }
    for (attr, v) in schema.features().iter().zip(&e.values) {
        let ok = match (&attr.kind, v) {
            (_, Value::Missing) => true,
            (AttributeKind::Continuous, Value::Continuous(x)) => x.is_finite(),
            (AttributeKind::Discrete(values), Value::Discrete(i)) => *i < values.len(),
            _ => false,
        };
        if !ok {
            return Err(format!("value {v:?} does not fit attribute `{}`", attr.name));
        }
    }
    Ok(())
}

/// Splits `.names` text into period-terminated entries with their starting line.
fn names_entries(text: &str) -> Result<Vec<(usize, String)>> {
    let mut entries = Vec::new();
    let mut pending = String::new();
    let mut start = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('|').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if pending.is_empty() {
            start = i + 1;
        } else {
            pending.push(' ');
        }
        pending.push_str(line);
        if let Some(body) = pending.strip_suffix('.') {
            entries.push((start, body.trim().to_string()));
            pending.clear();
        }
    }
    if !pending.is_empty() {
        return Err(DatasetError::Unterminated { line: start });
    }
    Ok(entries)
}

fn split_list(body: &str) -> Vec<String> {
    body.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn distinct_list(line: usize, values: Vec<String>) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    for v in &values {
        if !seen.insert(v.as_str()) {
            return Err(DatasetError::DuplicateValue {
                line,
                value: v.clone(),
            });
        }
    }
    Ok(values)
}

/// Parses a C4.5 `.names` schema. The returned schema has the class attribute last.
pub fn parse_names(text: &str) -> Result<Schema> {
    let entries = names_entries(text)?;
    let mut classes: Option<(usize, Vec<String>)> = None;
    let mut attributes: Vec<(String, AttributeKind)> = Vec::new();
    let mut names = HashSet::new();

    for (n, (line, body)) in entries.into_iter().enumerate() {
        let Some((name, kind)) = body.split_once(':') else {
            if n == 0 {
                let labels = split_list(&body);
                if labels.is_empty() {
                    return Err(DatasetError::EmptyClassList { line });
                }
                classes = Some((line, distinct_list(line, labels)?));
                continue;
            }
            return Err(DatasetError::Malformed {
                line,
                message: format!("expected `name: type.`, found `{body}`"),
            });
        };
        let name = name.trim().to_string();
        if name.is_empty() {
            return Err(DatasetError::Malformed {
                line,
                message: "attribute name is empty".into(),
            });
        }
        if !names.insert(name.clone()) {
            return Err(DatasetError::DuplicateAttribute { line, name });
        }
        let kind = kind.trim();
        let kind = if kind == "continuous" {
            AttributeKind::Continuous
        } else {
            let values = split_list(kind);
            if values.is_empty() {
                return Err(DatasetError::Malformed {
                    line,
                    message: format!("attribute `{name}` declares no values"),
                });
            }
            AttributeKind::Discrete(distinct_list(line, values)?)
        };
        attributes.push((name, kind));
    }

    let Some((line, classes)) = classes else {
        return Err(DatasetError::EmptyClassList { line: 1 });
    };
    if names.contains(CLASS_ATTRIBUTE) {
        return Err(DatasetError::DuplicateAttribute {
            line,
            name: CLASS_ATTRIBUTE.into(),
        });
    }
    attributes.push((CLASS_ATTRIBUTE.to_string(), AttributeKind::Class(classes)));
    Schema::new(attributes)
}

fn parse_value(line: usize, attr: &AttributeSpec, field: &str) -> Result<Value> {
    let field = field.trim();
    if field == MISSING || field.is_empty() {
        return Ok(Value::Missing);
    }
    match &attr.kind {
        AttributeKind::Continuous => match field.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Continuous(x)),
            _ => Err(DatasetError::NotNumeric {
                line,
                attribute: attr.name.clone(),
                value: field.into(),
            }),
        },
        AttributeKind::Discrete(values) => values
            .iter()
            .position(|v| v == field)
            .map(Value::Discrete)
            .ok_or_else(|| DatasetError::UndeclaredValue {
                line,
                attribute: attr.name.clone(),
                value: field.into(),
            }),
        AttributeKind::Class(_) => unreachable!("class attribute is never a feature"),
    }
}

fn parse_label(line: usize, schema: &Schema, field: &str) -> Result<usize> {
    let field = field.trim();
    schema
        .class_index(field)
        .ok_or_else(|| DatasetError::UndeclaredClass {
            line,
            value: field.into(),
        })
}

/// Parses `.data` rows. With `require_label` unset, rows may omit the class column.
fn parse_data_records(text: &str, schema: &Schema, require_label: bool) -> Result<Vec<Record>> {
    let n = schema.feature_count();
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut row = raw.trim();
        if row.is_empty() {
            continue;
        }
        if let Some(stripped) = row.strip_suffix('.') {
            row = stripped;
        }
        let fields: Vec<&str> = row.split(',').collect();
        let labelled = fields.len() == n + 1;
        if !(labelled || (!require_label && fields.len() == n)) {
            return Err(DatasetError::Arity {
                line,
                expected: n + 1,
                found: fields.len(),
            });
        }
        let values = schema
            .features()
            .iter()
            .zip(&fields)
            .map(|(a, f)| parse_value(line, a, f))
            .collect::<Result<Vec<_>>>()?;
        let label = if labelled {
            Some(parse_label(line, schema, fields[n])?)
        } else {
            None
        };
        records.push(Record { values, label });
    }
    Ok(records)
}

fn into_dataset(schema: &Schema, records: Vec<Record>) -> Dataset {
    let examples = records
        .into_iter()
        .map(|r| Example::new(r.values, r.label.expect("label required")))
        .collect();
    Dataset {
        schema: Arc::new(schema.clone()),
        examples,
        provenance: Provenance::memory(),
    }
}

/// Parses a C4.5 `.data` file: comma-separated values with the class last,
/// `?` for missing, an optional trailing period, blank lines ignored.
pub fn parse_data(text: &str, schema: &Schema) -> Result<Dataset> {
    let records = parse_data_records(text, schema, true)?;
    Ok(into_dataset(schema, records).with_provenance("", Format::C45))
}

fn parse_csv_records(text: &str, schema: &Schema, require_label: bool) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let n = schema.feature_count();
    // column index of each schema attribute (features, then class)
    let mut columns: Vec<Option<usize>> = vec![None; n + 1];
    for (col, name) in header.iter().enumerate() {
        let slot = schema
            .attributes()
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))?;
        if columns[slot].replace(col).is_some() {
            return Err(DatasetError::Malformed {
                line: 1,
                message: format!("column `{name}` appears twice"),
            });
        }
    }
    for (slot, col) in columns.iter().enumerate() {
        if col.is_none() && (slot < n || require_label) {
            return Err(DatasetError::MissingColumn(
                schema.attributes()[slot].name.clone(),
            ));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != header.len() {
            return Err(DatasetError::Arity {
                line,
                expected: header.len(),
                found: row.len(),
            });
        }
        let values = schema
            .features()
            .iter()
            .zip(&columns)
            .map(|(a, col)| parse_value(line, a, &row[col.expect("feature column")]))
            .collect::<Result<Vec<_>>>()?;
        let label = columns[n]
            .map(|col| parse_label(line, schema, &row[col]))
            .transpose()?;
        records.push(Record { values, label });
    }
    Ok(records)
}

/// Parses CSV with a header row naming schema attributes in any order. The
/// class column is named [`CLASS_ATTRIBUTE`]. Empty cells and `?` are missing.
pub fn parse_csv(text: &str, schema: &Schema) -> Result<Dataset> {
    let records = parse_csv_records(text, schema, true)?;
    Ok(into_dataset(schema, records).with_provenance("", Format::Csv))
}

/// Parses rows whose class label is optional, in either format.
pub fn parse_records(text: &str, schema: &Schema, format: Format) -> Result<Vec<Record>> {
    match format {
        Format::Csv => parse_csv_records(text, schema, false),
        Format::C45 | Format::Memory => parse_data_records(text, schema, false),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| DatasetError::File {
        path: path.display().to_string(),
        source: Box::new(e),
    })
}

pub fn read_names(path: &Path) -> Result<Schema> {
    let text = read(path)?;
    in_file(path, parse_names(&text))
}

/// Reads a `.data` file, or CSV when the extension is `.csv`.
pub fn read_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let text = read(path)?;
    let format = format_for(path);
    let parsed = match format {
        Format::Csv => parse_csv(&text, schema),
        _ => parse_data(&text, schema),
    };
    Ok(in_file(path, parsed)?.with_provenance(path.display().to_string(), format))
}

pub fn read_records(path: &Path, schema: &Schema) -> Result<Vec<Record>> {
    let text = read(path)?;
    in_file(path, parse_records(&text, schema, format_for(path)))
}

fn format_for(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::C45,
    }
}

/// A seeded partition of example indices into training and evaluation sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Uniform draw from `0..bound` without modulo bias.
fn below(rng: &mut Xoshiro256StarStar, bound: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
    loop {
        let r = rng.next_u64();
        if r <= zone {
            return r % bound;
        }
    }
}

/// Shuffles `0..n` and takes the first `round(train_fraction * n)` indices for
/// training.
///
/// The permutation is a Fisher-Yates shuffle driven by xoshiro256** seeded
/// with `Xoshiro256StarStar::seed_from_u64(seed)` (SplitMix64 state
/// expansion), with rejection sampling for each bounded draw. Both index sets
/// are returned in ascending order so subsets keep the original example order.
pub fn make_split(dataset: &Dataset, seed: u64, train_fraction: f64) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::FractionOutOfRange(train_fraction));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(&mut rng, i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let cut = (train_fraction * n as f64).round() as usize;
    let mut train = order[..cut].to_vec();
    let mut eval = order[cut..].to_vec();
    train.sort_unstable();
    eval.sort_unstable();
    Ok(SplitPlan { seed, train, eval })
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Continuous(x) => write!(f, "{x}"),
            Value::Discrete(i) => write!(f, "#{i}"),
            Value::Missing => f.write_str(MISSING),
        }
    }
}
