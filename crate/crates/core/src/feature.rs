//! Feature expression trees.
//!
//! A feature is either an input covariate (leaf) or a node built from other
//! features: a product, a unary nonlinearity, or a nonlinearity applied to an
//! affine combination ("projection"). Features are immutable once built and
//! shared through [`FeatureRef`].
//!
//! Products are commutative and associative, so nested products are flattened
//! and their factors sorted by key at construction. Two features with the same
//! canonical key always evaluate to the same column.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type FeatureRef = Arc<Feature>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("feature `{key}` produced a non-finite value at row {row}")]
    NonFinite { key: String, row: usize },
    #[error("leaf index {index} out of range for {columns} columns")]
    LeafOutOfRange { index: usize, columns: usize },
    #[error("unknown nonlinearity `{0}`")]
    UnknownNonlinearity(String),
}

/// Named unary transformations available to the modification and projection
/// operators. `Log` and `Sqrt` act on `|x|` (with a `+1` shift for `Log`) so
/// every transformation is total on the reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Cbrt,
    Square,
    Cube,
    Log,
    Sqrt,
    Sigmoid,
}

impl Nonlinearity {
    /// The nonlinearity set used for the planetary experiments.
    pub const NONLINEAR_SET: [Nonlinearity; 6] = [
        Nonlinearity::Cbrt,
        Nonlinearity::Square,
        Nonlinearity::Cube,
        Nonlinearity::Log,
        Nonlinearity::Sqrt,
        Nonlinearity::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Cbrt => "cbrt",
            Nonlinearity::Square => "sq",
            Nonlinearity::Cube => "cube",
            Nonlinearity::Log => "log",
            Nonlinearity::Sqrt => "sqrt",
            Nonlinearity::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Cbrt => x.cbrt(),
            Nonlinearity::Square => x * x,
            Nonlinearity::Cube => x * x * x,
            Nonlinearity::Log => (x.abs() + 1.0).ln(),
            Nonlinearity::Sqrt => x.abs().sqrt(),
            Nonlinearity::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cbrt" => Ok(Nonlinearity::Cbrt),
            "sq" | "square" => Ok(Nonlinearity::Square),
            "cube" => Ok(Nonlinearity::Cube),
            "log" => Ok(Nonlinearity::Log),
            "sqrt" => Ok(Nonlinearity::Sqrt),
            "sigmoid" => Ok(Nonlinearity::Sigmoid),
            other => Err(FeatureError::UnknownNonlinearity(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Leaf { index: usize, name: Arc<str> },
    /// Flattened, key-sorted factors; never contains another product.
    Product(Vec<FeatureRef>),
    Unary(Nonlinearity, FeatureRef),
    /// `g(sum_i w_i * child_i)`, terms sorted by child key then weight.
    Projection {
        g: Nonlinearity,
        terms: Vec<(f64, FeatureRef)>,
    },
}

#[derive(Debug, Clone)]
pub struct Feature {
    node: Node,
    key: Arc<str>,
    depth: usize,
    complexity: usize,
}

impl PartialEq for Feature {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Feature {}

impl std::hash::Hash for Feature {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.key.hash(state)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

fn format_weight(w: f64) -> String {
    if w.fract() == 0.0 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

impl Feature {
    pub fn leaf(index: usize, name: impl Into<Arc<str>>) -> FeatureRef {
        let name: Arc<str> = name.into();
        Arc::new(Feature {
            key: name.clone(),
            node: Node::Leaf { index, name },
            depth: 0,
            complexity: 1,
        })
    }

    /// Product of the given factors. Nested products are flattened. A single
    /// factor is returned unchanged.
    pub fn product<I>(factors: I) -> FeatureRef
    where
        I: IntoIterator<Item = FeatureRef>,
    {
        let mut flat = Vec::new();
        for f in factors {
            match &f.node {
                Node::Product(children) => flat.extend(children.iter().cloned()),
                _ => flat.push(f),
            }
        }
        assert!(!flat.is_empty(), "product needs at least one factor");
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        flat.sort_by(|a, b| a.key.cmp(&b.key));
        let key = flat
            .iter()
            .map(|c| c.key.as_ref())
            .collect::<Vec<_>>()
            .join("*");
        let depth = 1 + flat.iter().map(|c| c.depth).max().unwrap_or(0);
        let complexity = 1 + flat.iter().map(|c| c.complexity).sum::<usize>();
        Arc::new(Feature {
            node: Node::Product(flat),
            key: key.into(),
            depth,
            complexity,
        })
    }

    pub fn unary(g: Nonlinearity, child: FeatureRef) -> FeatureRef {
        let key = format!("{}({})", g.name(), child.key);
        Arc::new(Feature {
            depth: 1 + child.depth,
            complexity: 1 + child.complexity,
            node: Node::Unary(g, child),
            key: key.into(),
        })
    }

    pub fn projection(g: Nonlinearity, terms: Vec<(f64, FeatureRef)>) -> FeatureRef {
        assert!(!terms.is_empty(), "projection needs at least one term");
        let mut terms = terms;
        terms.sort_by(|a, b| a.1.key.cmp(&b.1.key).then(a.0.total_cmp(&b.0)));
        let mut inner = String::new();
        for (i, (w, child)) in terms.iter().enumerate() {
            if i > 0 && *w >= 0.0 {
                inner.push('+');
            }
            inner.push_str(&format_weight(*w));
            inner.push('*');
            if child.is_product() {
                inner.push('(');
                inner.push_str(&child.key);
                inner.push(')');
            } else {
                inner.push_str(&child.key);
            }
        }
        let key = format!("{}({})", g.name(), inner);
        let depth = 1 + terms.iter().map(|(_, c)| c.depth).max().unwrap_or(0);
        let complexity = 1 + terms.iter().map(|(_, c)| c.complexity).sum::<usize>();
        Arc::new(Feature {
            node: Node::Projection { g, terms },
            key: key.into(),
            depth,
            complexity,
        })
    }

    /// Canonical key: deterministic, identical for structurally equal features
    /// up to reordering and regrouping of product factors.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn key_arc(&self) -> &Arc<str> {
        &self.key
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of tree nodes.
    pub fn complexity(&self) -> usize {
        self.complexity
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.node, Node::Leaf { .. })
    }

    pub fn is_product(&self) -> bool {
        matches!(self.node, Node::Product(_))
    }

    /// Materializes the feature over column-major data. Any non-finite value
    /// is an error; callers discard such features.
    pub fn evaluate(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, FeatureError> {
        let out = self.eval_raw(columns)?;
        if let Some(row) = out.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                key: self.key.to_string(),
                row,
            });
        }
        Ok(out)
    }

    fn eval_raw(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>, FeatureError> {
        match &self.node {
            Node::Leaf { index, .. } => columns
                .get(*index)
                .cloned()
                .ok_or(FeatureError::LeafOutOfRange {
                    index: *index,
                    columns: columns.len(),
                }),
            Node::Product(children) => {
                let mut acc = children[0].eval_raw(columns)?;
                for child in &children[1..] {
                    let col = child.eval_raw(columns)?;
                    acc.iter_mut().zip(&col).for_each(|(a, b)| *a *= b);
                }
                Ok(acc)
            }
            Node::Unary(g, child) => {
                let mut col = child.eval_raw(columns)?;
                col.iter_mut().for_each(|v| *v = g.apply(*v));
                Ok(col)
            }
            Node::Projection { g, terms } => {
                let n = columns.first().map_or(0, Vec::len);
                let mut acc = vec![0.0; n];
                for (w, child) in terms {
                    let col = child.eval_raw(columns)?;
                    acc.iter_mut().zip(&col).for_each(|(a, b)| *a += w * b);
                }
                acc.iter_mut().for_each(|v| *v = g.apply(*v));
                Ok(acc)
            }
        }
    }
}
