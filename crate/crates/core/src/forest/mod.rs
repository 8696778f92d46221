//! Random forest of CART trees (Gini impurity) with bootstrap sampling,
//! out-of-bag accuracy, impurity-based feature reduction and a binary
//! model format.

mod eval;
mod io;
mod reduce;
mod train;

use thiserror::Error;

pub use eval::{evaluate, evaluate_predictions, EvalReport};
pub use io::{load_model, save_model};
pub use reduce::{importance, reduce_features, Reduction};
pub use train::{train, train_masked, FeatureSubsample, TrainParams, MIN_ROWS_PER_CLASS};

/// Child index of a leaf.
pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("class {class:?} has {count} rows; at least {min} are required")]
    TooFewSamples { class: String, count: usize, min: usize },
    #[error("training data needs at least two classes")]
    SingleClass,
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("row width {found} does not match the {expected}-feature schema")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("class {0:?} is not known to the model")]
    UnknownClass(String),
    #[error("row contains a non-finite value")]
    NonFinite,
    #[error("not a model file")]
    BadMagic,
    #[error("version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt model: {0}")]
    CorruptTree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labeled rows of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: String,
    pub n_features: usize,
    pub classes: Vec<String>,
    x: Vec<f64>,
    y: Vec<u32>,
}

impl Dataset {
    pub fn new(schema: impl Into<String>, n_features: usize) -> Self {
        Dataset {
            schema: schema.into(),
            n_features,
            classes: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    /// Like [`Dataset::new`] with a fixed class dictionary.
    pub fn with_classes(schema: impl Into<String>, n_features: usize, classes: &[&str]) -> Self {
        let mut d = Dataset::new(schema, n_features);
        d.classes = classes.iter().map(|c| c.to_string()).collect();
        d
    }

    pub fn class_id(&mut self, name: &str) -> u32 {
        match self.classes.iter().position(|c| c == name) {
            Some(i) => i as u32,
            None => {
                self.classes.push(name.to_string());
                (self.classes.len() - 1) as u32
            }
        }
    }

    pub fn push(&mut self, values: &[f64], label: &str) -> Result<(), ForestError> {
        let id = self.class_id(label);
        self.push_id(values, id)
    }

    pub fn push_id(&mut self, values: &[f64], class: u32) -> Result<(), ForestError> {
        if values.len() != self.n_features {
            return Err(ForestError::SchemaMismatch {
                expected: self.n_features,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite);
        }
        assert!((class as usize) < self.classes.len(), "unknown class id {class}");
        self.x.extend_from_slice(values);
        self.y.push(class);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.y
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &y in &self.y {
            c[y as usize] += 1;
        }
        c
    }

    /// Rows at `idx`, keeping the class dictionary.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut d = Dataset {
            schema: self.schema.clone(),
            n_features: self.n_features,
            classes: self.classes.clone(),
            x: Vec::with_capacity(idx.len() * self.n_features),
            y: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            d.x.extend_from_slice(self.row(i));
            d.y.push(self.y[i]);
        }
        d
    }

    /// Same rows with labels replaced.
    pub fn relabeled(&self, y: Vec<u32>) -> Dataset {
        assert_eq!(y.len(), self.len());
        Dataset { y, ..self.clone() }
    }
}

/// Split `value <= threshold` goes left. Every node keeps the weighted
/// class counts of the bootstrap rows that reached it.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub counts: Vec<u32>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.left == LEAF
    }
}

/// Nodes in preorder; the root is node 0 and children follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while !n.is_leaf() {
            let next = if x[n.feature as usize] <= n.threshold { n.left } else { n.right };
            n = &self.nodes[next as usize];
        }
        n
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub seed: u64,
    pub n_trees: u32,
    pub max_depth: u32,
    pub min_leaf: u32,
    /// Features tried per split.
    pub mtry: u32,
    pub bootstrap: bool,
    /// NaN when no row was ever out of bag.
    pub oob_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub schema: String,
    pub n_features: usize,
    pub classes: Vec<String>,
    /// Feature ids the trees may reference, ascending.
    pub kept: Vec<u32>,
    pub trees: Vec<DecisionTree>,
    pub meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probs: Vec<f64>,
}

impl ForestModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Averages the leaf class distributions of every tree.
    pub fn predict_proba_into(&self, x: &[f64], probs: &mut [f64]) -> Result<(), ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::SchemaMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        probs.fill(0.0);
        for t in &self.trees {
            let leaf = t.leaf_for(x);
            let total: u32 = leaf.counts.iter().sum();
            let w = 1.0 / total as f64;
            for (p, &c) in probs.iter_mut().zip(&leaf.counts) {
                *p += c as f64 * w;
            }
        }
        let n = self.trees.len() as f64;
        for p in probs.iter_mut() {
            *p /= n;
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        let mut probs = vec![0.0; self.n_classes()];
        self.predict_proba_into(x, &mut probs)?;
        Ok(Prediction {
            class: argmax(&probs),
            probs,
        })
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize, ForestError> {
        Ok(self.predict(x)?.class)
    }
}

/// First index of the maximum, so ties go to the lower class id.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}
