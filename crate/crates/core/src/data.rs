//! Sparse instance storage and LibSVM-format text I/O.
//!
//! Feature vectors are kept in coordinate form (sorted indices + values) so
//! that inner products and per-instance updates cost O(nnz) rather than O(d).

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Errors produced while building or parsing datasets.
#[derive(Debug, Error)]
pub enum DataError {
    /// A malformed line in LibSVM-format input; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A structurally invalid vector or dataset built programmatically.
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse { line, msg: msg.into() }
}

/// A sparse feature vector: strictly increasing 0-based indices with
/// finite, nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector, validating the sparse-form invariants.
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self, DataError> {
        if indices.len() != values.len() {
            return Err(DataError::Invalid(format!(
                "index/value length mismatch: {} vs {}",
                indices.len(),
                values.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(DataError::Invalid(format!(
                    "indices not strictly increasing at {}..{}",
                    pair[0], pair[1]
                )));
            }
        }
        for &v in &values {
            if !v.is_finite() || v == 0.0 {
                return Err(DataError::Invalid(format!("invalid stored value {v}")));
            }
        }
        Ok(Self { indices, values })
    }

    /// An empty vector (no stored coordinates).
    pub fn empty() -> Self {
        Self { indices: Vec::new(), values: Vec::new() }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of stored (nonzero) coordinates.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Iterates stored coordinates as `(index, value)` in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Smallest dense dimension that can hold this vector.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i + 1)
    }

    /// Inner product against a dense vector.
    ///
    /// Panics if any stored index falls outside `w`; callers are expected to
    /// pass a vector of the owning dataset's dimension.
    pub fn dot(&self, w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, v) in self.iter() {
            acc += v * w[i];
        }
        acc
    }

    /// Squared Euclidean norm of the stored values.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// One training example: sparse features plus a real label.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: SparseVector,
    pub label: f64,
}

/// An in-memory dataset with a fixed dense dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<Instance>,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from instances. The dimension is the larger of
    /// `min_dim` and the highest feature index + 1.
    pub fn from_instances(instances: Vec<Instance>, min_dim: usize) -> Result<Self, DataError> {
        let mut dim = min_dim;
        for inst in &instances {
            if !inst.label.is_finite() {
                return Err(DataError::Invalid(format!("non-finite label {}", inst.label)));
            }
            dim = dim.max(inst.features.min_dim());
        }
        Ok(Self { instances, dim })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// Consumes the dataset, handing back the instances (for relabeling or
    /// other all-at-once rewrites).
    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    /// Number of instances.
    pub fn n(&self) -> usize {
        self.instances.len()
    }

    /// Dense feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when every label is exactly +1 or -1.
    pub fn labels_are_binary(&self) -> bool {
        self.instances.iter().all(|i| i.label == 1.0 || i.label == -1.0)
    }

    /// Largest squared feature norm over all instances (0 for an empty set).
    pub fn max_feature_norm_sq(&self) -> f64 {
        self.instances.iter().map(|i| i.features.norm_sq()).fold(0.0, f64::max)
    }

    /// Serializes in LibSVM format: `<label> <index+1>:<value> ...`, one
    /// instance per line. Values are written with enough digits to
    /// round-trip exactly.
    pub fn to_libsvm_string(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            write!(out, "{}", inst.label).unwrap();
            for (i, v) in inst.features.iter() {
                write!(out, " {}:{}", i + 1, v).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parses LibSVM-format text: each line `<label> <index>:<value> ...` with
/// 1-based, strictly increasing indices. Blank lines are skipped; explicit
/// zero values are dropped; comments are not supported and are rejected.
/// The dataset dimension is `max(max index + 1, min_dim)`.
pub fn parse_libsvm(text: &str, min_dim: usize) -> Result<Dataset, DataError> {
    let mut instances = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.contains('#') {
            return Err(parse_err(lineno, "comment markers ('#') are not supported"));
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label '{label_tok}'")))?;
        if !label.is_finite() {
            return Err(parse_err(lineno, format!("non-finite label '{label_tok}'")));
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev_index: Option<usize> = None;
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected index:value, got '{tok}'")))?;
            let idx1: usize = idx_s
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index '{idx_s}'")))?;
            if idx1 == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based; got 0"));
            }
            let value: f64 = val_s
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value '{val_s}'")))?;
            if !value.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature value '{val_s}'")));
            }
            if let Some(prev) = prev_index {
                if idx1 <= prev {
                    return Err(parse_err(
                        lineno,
                        format!("feature indices must be strictly increasing ({prev} then {idx1})"),
                    ));
                }
            }
            prev_index = Some(idx1);
            if value == 0.0 {
                continue; // explicit zeros carry no information in sparse form
            }
            indices.push(idx1 - 1);
            values.push(value);
        }
        let features = SparseVector::new(indices, values)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        instances.push(Instance { features, label });
    }
    Dataset::from_instances(instances, min_dim)
}

/// Reads and parses a LibSVM-format file.
pub fn read_libsvm(path: &Path, min_dim: usize) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm(&text, min_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_basic_lines() {
        let ds = parse_libsvm("+1 1:0.5 3:2\n-1 2:1\n", 0).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.dim(), 3);
        let first = &ds.instances()[0];
        assert_eq!(first.label, 1.0);
        assert_eq!(first.features.indices(), &[0, 2]);
        assert_eq!(first.features.values(), &[0.5, 2.0]);
    }

    #[test]
    fn skips_blank_lines_and_drops_explicit_zeros() {
        let ds = parse_libsvm("\n1 1:0 2:3\n\n   \n-1 1:1\n", 0).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.instances()[0].features.indices(), &[1]);
        assert_eq!(ds.instances()[0].features.nnz(), 1);
    }

    #[test]
    fn dimension_override_extends_but_never_shrinks() {
        let ds = parse_libsvm("1 5:1\n", 0).unwrap();
        assert_eq!(ds.dim(), 5);
        let ds = parse_libsvm("1 5:1\n", 100).unwrap();
        assert_eq!(ds.dim(), 100);
        let ds = parse_libsvm("1 5:1\n", 2).unwrap();
        assert_eq!(ds.dim(), 5);
    }

    #[test]
    fn rejects_malformed_input_with_line_numbers() {
        let cases = [
            ("1 2:1\n1 0:1\n", 2, "1-based"),
            ("1 3:1 2:1\n", 1, "strictly increasing"),
            ("1 2:1 2:5\n", 1, "strictly increasing"),
            ("abc 1:1\n", 1, "bad label"),
            ("1 1:x\n", 1, "bad feature value"),
            ("1 11\n", 1, "index:value"),
            ("1 1:1 # note\n", 1, "not supported"),
            ("1 1:nan\n", 1, "non-finite"),
        ];
        for (text, want_line, want_msg) in cases {
            let err = parse_libsvm(text, 0).unwrap_err();
            match err {
                DataError::Parse { line, ref msg } => {
                    assert_eq!(line, want_line, "in {text:?}");
                    assert!(msg.contains(want_msg), "msg {msg:?} for {text:?}");
                }
                other => panic!("expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn sparse_dot_matches_dense_expansion() {
        let x = SparseVector::new(vec![0, 2, 4], vec![1.0, -2.0, 0.5]).unwrap();
        let w = [3.0, 10.0, 1.0, 10.0, 4.0];
        assert_eq!(x.dot(&w), 3.0 - 2.0 + 2.0);
        assert_eq!(SparseVector::empty().dot(&w), 0.0);
    }

    #[test]
    fn vector_invariants_are_enforced() {
        assert!(SparseVector::new(vec![1, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(vec![2, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseVector::new(vec![0], vec![0.0]).is_err());
        assert!(SparseVector::new(vec![0], vec![f64::NAN]).is_err());
        assert!(SparseVector::new(vec![0, 1], vec![1.0]).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        let inst = (
            prop::collection::btree_set(0usize..40, 0..8),
            prop::num::f64::NORMAL,
        )
            .prop_flat_map(|(idxs, label)| {
                let k = idxs.len();
                let indices: Vec<usize> = idxs.into_iter().collect();
                (
                    Just(indices),
                    prop::collection::vec(
                        prop::num::f64::NORMAL.prop_filter("nonzero", |v| *v != 0.0),
                        k,
                    ),
                    Just(label),
                )
            })
            .prop_map(|(indices, values, label)| Instance {
                features: SparseVector::new(indices, values).unwrap(),
                label,
            });
        prop::collection::vec(inst, 0..12)
            .prop_map(|insts| Dataset::from_instances(insts, 0).unwrap())
    }

    proptest! {
        #[test]
        fn libsvm_round_trip_is_exact(ds in arb_dataset()) {
            let text = ds.to_libsvm_string();
            let back = parse_libsvm(&text, ds.dim()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn dot_agrees_with_dense_accumulation(
            pairs in prop::collection::btree_map(0usize..30, -5.0f64..5.0, 0..10),
            w in prop::collection::vec(-3.0f64..3.0, 30),
        ) {
            let (idx, vals): (Vec<_>, Vec<_>) =
                pairs.into_iter().filter(|(_, v)| *v != 0.0).unzip();
            let x = SparseVector::new(idx, vals).unwrap();
            let mut dense = vec![0.0; 30];
            for (i, v) in x.iter() { dense[i] = v; }
            let direct: f64 = dense.iter().zip(&w).map(|(a, b)| a * b).sum();
            prop_assert!((x.dot(&w) - direct).abs() <= 1e-12);
        }
    }
}
