//! Sparse sets of bitree vertices and their down-closures.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tree::{Node1, Node2, TreeShape, Vertex};

/// How the stored vertices are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// Exactly the stored vertices.
    #[default]
    Exact,
    /// Every vertex at or below a stored one.
    DownClosure,
    /// Leaf pairs at or below a stored one.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSet {
    shape: TreeShape,
    kind: SetKind,
    nodes: BTreeSet<Node2>,
}

impl NodeSet {
    pub fn new<I: IntoIterator<Item = Node2>>(shape: TreeShape, kind: SetKind, nodes: I) -> Result<Self> {
        let nodes: BTreeSet<Node2> = nodes.into_iter().collect();
        for &n in &nodes {
            shape.check2(n)?;
        }
        let nodes = match kind {
            SetKind::Exact => nodes,
            _ => maximal_elements(&nodes).into_iter().collect(),
        };
        Ok(NodeSet { shape, kind, nodes })
    }

    pub fn exact<I: IntoIterator<Item = Node2>>(shape: TreeShape, nodes: I) -> Result<Self> {
        Self::new(shape, SetKind::Exact, nodes)
    }

    pub fn down_closure<I: IntoIterator<Item = Node2>>(shape: TreeShape, nodes: I) -> Result<Self> {
        Self::new(shape, SetKind::DownClosure, nodes)
    }

    pub fn boundary<I: IntoIterator<Item = Node2>>(shape: TreeShape, nodes: I) -> Result<Self> {
        Self::new(shape, SetKind::Boundary, nodes)
    }

    pub fn empty(shape: TreeShape) -> Self {
        NodeSet { shape, kind: SetKind::Exact, nodes: BTreeSet::new() }
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    /// Stored vertices (the generators, for the closure kinds).
    pub fn nodes(&self) -> &BTreeSet<Node2> {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, n: &Node2) -> bool {
        match self.kind {
            SetKind::Exact => self.nodes.contains(n),
            SetKind::DownClosure => self.covers(n),
            SetKind::Boundary => self.shape.is_leaf2(*n) && self.covers(n),
        }
    }

    fn covers(&self, n: &Node2) -> bool {
        n.predecessors().iter().any(|p| self.nodes.contains(p))
    }

    /// Maximal elements: stored vertices without a strict ancestor in the set.
    pub fn generators(&self) -> Vec<Node2> {
        match self.kind {
            SetKind::Exact => maximal_elements(&self.nodes),
            _ => self.nodes.iter().copied().collect(),
        }
    }

    /// The same set read as a down-set; idempotent.
    pub fn to_down_closure(&self) -> NodeSet {
        NodeSet { shape: self.shape, kind: SetKind::DownClosure, nodes: self.generators().into_iter().collect() }
    }

    /// `S_b(E)`: the leaf pairs lying under some vertex of `E`, kept as generators.
    pub fn boundary_projection(&self) -> NodeSet {
        NodeSet { shape: self.shape, kind: SetKind::Boundary, nodes: self.generators().into_iter().collect() }
    }

    /// The vertices where capacity constraints bind: the generators, or the
    /// leaf pairs under them for a boundary set.
    pub fn constraint_nodes(&self) -> Vec<Node2> {
        match self.kind {
            SetKind::Boundary => self.leaves().into_iter().collect(),
            _ => self.generators(),
        }
    }

    /// Leaf pairs at or below the generators.
    pub fn leaves(&self) -> BTreeSet<Node2> {
        let mut out = BTreeSet::new();
        for g in self.generators() {
            for x in leaves_under(self.shape, g.x) {
                for y in leaves_under(self.shape, g.y) {
                    out.insert(Node2::new(x, y));
                }
            }
        }
        out
    }
}

/// Leaves of the subtree rooted at `n`.
pub fn leaves_under(shape: TreeShape, n: Node1) -> impl Iterator<Item = Node1> {
    let h = shape.depth() - n.level();
    let base = n.pos() << h;
    let level = shape.depth();
    (0..(1u64 << h)).map(move |i| Node1::new(level, base + i).expect("in shape"))
}

/// Elements of `set` with no strict ancestor in `set`.
pub fn maximal_elements<N: Vertex>(set: &BTreeSet<N>) -> Vec<N> {
    set.iter()
        .copied()
        .filter(|n| !n.predecessors().iter().any(|p| p != n && set.contains(p)))
        .collect()
}
