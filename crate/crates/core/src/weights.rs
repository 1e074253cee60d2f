//! Non-negative weights on a sparse set of vertices.
//!
//! Measures and functions share this representation; the aliases only say
//! which role a value plays.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tree::{Node1, Node2, TreeShape, Vertex};

/// One `{"node": .., "mass": ..}` entry of the JSON atom list.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom<N> {
    pub node: N,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeights<N: Vertex> {
    shape: TreeShape,
    entries: BTreeMap<N, f64>,
}

pub type Measure = NodeWeights<Node2>;
pub type SparseFunction = NodeWeights<Node2>;
pub type Measure1 = NodeWeights<Node1>;
pub type Function1 = NodeWeights<Node1>;

impl<N: Vertex> NodeWeights<N> {
    pub fn new(shape: TreeShape) -> Self {
        NodeWeights { shape, entries: BTreeMap::new() }
    }

    /// Sums repeated nodes; zero masses are dropped.
    pub fn from_pairs<I: IntoIterator<Item = (N, f64)>>(shape: TreeShape, pairs: I) -> Result<Self> {
        let mut w = Self::new(shape);
        for (n, m) in pairs {
            w.add(n, m)?;
        }
        Ok(w)
    }

    pub fn from_atoms(shape: TreeShape, atoms: &[Atom<N>]) -> Result<Self> {
        Self::from_pairs(shape, atoms.iter().map(|a| (a.node, a.mass)))
    }

    pub fn to_atoms(&self) -> Vec<Atom<N>> {
        self.entries.iter().map(|(&node, &mass)| Atom { node, mass }).collect()
    }

    /// Point mass.
    pub fn point(shape: TreeShape, node: N, mass: f64) -> Result<Self> {
        Self::from_pairs(shape, [(node, mass)])
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn add(&mut self, node: N, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(CoreError::InvalidMass(value));
        }
        if !node.fits(self.shape) {
            return Err(CoreError::InvalidParameter(format!("{node:?} is outside depth {}", self.shape.depth())));
        }
        if value > 0.0 {
            *self.entries.entry(node).or_insert(0.0) += value;
        }
        Ok(())
    }

    pub fn get(&self, node: &N) -> f64 {
        self.entries.get(node).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (N, f64)> + '_ {
        self.entries.iter().map(|(&n, &v)| (n, v))
    }

    pub fn support(&self) -> impl Iterator<Item = N> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// `Σ value²`.
    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite());
        NodeWeights {
            shape: self.shape,
            entries: self.entries.iter().filter(|_| c > 0.0).map(|(&n, &v)| (n, v * c)).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch(self.shape.depth(), other.shape.depth()));
        }
        let mut out = self.clone();
        for (n, v) in other.iter() {
            out.add(n, v)?;
        }
        Ok(out)
    }

    /// Keeps the entries whose node satisfies `keep`.
    pub fn restricted<F: Fn(&N) -> bool>(&self, keep: F) -> Self {
        NodeWeights {
            shape: self.shape,
            entries: self.entries.iter().filter(|(n, _)| keep(n)).map(|(&n, &v)| (n, v)).collect(),
        }
    }

    pub fn map_nodes<F: Fn(N) -> N>(&self, f: F) -> Result<Self> {
        Self::from_pairs(self.shape, self.iter().map(|(n, v)| (f(n), v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_round_trip() {
        let shape = TreeShape::new(2).unwrap();
        let a = Node2::new(Node1::new(1, 1).unwrap(), Node1::ROOT);
        let mut m = Measure::new(shape);
        m.add(a, 0.5).unwrap();
        m.add(a, 0.25).unwrap();
        m.add(Node2::ROOT, 0.0).unwrap();
        assert_eq!(m.len(), 1);
        let json = serde_json::to_string(&m.to_atoms()).unwrap();
        assert_eq!(json, r#"[{"node":{"x":[1,1],"y":[0,0]},"mass":0.75}]"#);
        let atoms: Vec<Atom<Node2>> = serde_json::from_str(&json).unwrap();
        assert_eq!(Measure::from_atoms(shape, &atoms).unwrap(), m);
    }

    #[test]
    fn rejects_bad_values() {
        let shape = TreeShape::new(1).unwrap();
        let mut m = Measure::new(shape);
        assert!(m.add(Node2::ROOT, -1.0).is_err());
        assert!(m.add(Node2::ROOT, f64::NAN).is_err());
        let deep = Node2::new(Node1::new(2, 0).unwrap(), Node1::ROOT);
        assert!(m.add(deep, 1.0).is_err());
    }
}
