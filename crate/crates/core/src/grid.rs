//! Dense fields over every vertex of a tree or bitree, stored in heap order.
//!
//! Subtree sums (the adjoint Hardy operator) sweep from the deepest level up;
//! path sums (the Hardy operator) sweep from the root down. On the bitree both
//! sweeps factor into one pass per coordinate.

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::NodeWeights;

/// Deepest shape for which a dense bitree field is allocated.
pub const DENSE_LIMIT: u32 = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid1 {
    shape: TreeShape,
    data: Vec<f64>,
}

impl Grid1 {
    pub fn zeros(shape: TreeShape) -> Result<Self> {
        if shape.depth() > 24 {
            return Err(CoreError::DenseLimit { depth: shape.depth(), limit: 24 });
        }
        Ok(Grid1 { shape, data: vec![0.0; shape.nodes_per_tree() as usize] })
    }

    pub fn from_weights(w: &NodeWeights<Node1>) -> Result<Self> {
        let mut g = Self::zeros(w.shape())?;
        for (n, v) in w.iter() {
            g.data[n.heap_index()] += v;
        }
        Ok(g)
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn get(&self, n: Node1) -> f64 {
        self.data[n.heap_index()]
    }

    pub fn set(&mut self, n: Node1, v: f64) {
        self.data[n.heap_index()] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Replaces each value by the sum over its subtree.
    pub fn subtree_sums(mut self) -> Self {
        subtree_sweep(&mut self.data);
        self
    }

    /// Replaces each value by the sum over its path to the root.
    pub fn path_sums(mut self) -> Self {
        path_sweep(&mut self.data);
        self
    }

    pub fn to_weights(&self) -> Result<NodeWeights<Node1>> {
        NodeWeights::from_pairs(
            self.shape,
            self.data.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (Node1::from_heap_index(i), v)),
        )
    }
}

fn subtree_sweep(v: &mut [f64]) {
    for i in (1..v.len()).rev() {
        v[(i - 1) / 2] += v[i];
    }
}

fn path_sweep(v: &mut [f64]) {
    for i in 1..v.len() {
        v[i] += v[(i - 1) / 2];
    }
}

/// Dense field on the bitree, row `x`, column `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2 {
    shape: TreeShape,
    n: usize,
    data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(shape: TreeShape) -> Result<Self> {
        if shape.depth() > DENSE_LIMIT {
            return Err(CoreError::DenseLimit { depth: shape.depth(), limit: DENSE_LIMIT });
        }
        let n = shape.nodes_per_tree() as usize;
        Ok(Grid2 { shape, n, data: vec![0.0; n * n] })
    }

    pub fn from_weights(w: &NodeWeights<Node2>) -> Result<Self> {
        let mut g = Self::zeros(w.shape())?;
        for (a, v) in w.iter() {
            let i = g.index(a);
            g.data[i] += v;
        }
        Ok(g)
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    /// Vertices per coordinate tree.
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn index(&self, a: Node2) -> usize {
        a.x.heap_index() * self.n + a.y.heap_index()
    }

    pub fn node(&self, i: usize) -> Node2 {
        Node2::new(Node1::from_heap_index(i / self.n), Node1::from_heap_index(i % self.n))
    }

    pub fn get(&self, a: Node2) -> f64 {
        self.data[self.index(a)]
    }

    pub fn set(&mut self, a: Node2, v: f64) {
        let i = self.index(a);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `𝕀*`: each value becomes the sum over its successor set.
    pub fn subtree_sums(mut self) -> Self {
        let n = self.n;
        self.data.par_chunks_mut(n).for_each(subtree_sweep);
        for i in (1..n).rev() {
            let p = (i - 1) / 2;
            let (head, tail) = self.data.split_at_mut(i * n);
            let dst = &mut head[p * n..(p + 1) * n];
            for (d, s) in dst.iter_mut().zip(&tail[..n]) {
                *d += s;
            }
        }
        self
    }

    /// `𝕀`: each value becomes the sum over its predecessor set.
    pub fn path_sums(mut self) -> Self {
        let n = self.n;
        self.data.par_chunks_mut(n).for_each(path_sweep);
        for i in 1..n {
            let p = (i - 1) / 2;
            let (head, tail) = self.data.split_at_mut(i * n);
            let src = &head[p * n..(p + 1) * n];
            for (d, s) in tail[..n].iter_mut().zip(src) {
                *d += s;
            }
        }
        self
    }

    pub fn dot(&self, other: &Grid2) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values at the leaf pairs, in lexicographic order.
    pub fn leaf_values(&self) -> impl Iterator<Item = (Node2, f64)> + '_ {
        let shape = self.shape;
        shape.leaves2().map(move |a| (a, self.get(a)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Node2, f64)> + '_ {
        self.data.iter().enumerate().map(move |(i, &v)| (self.node(i), v))
    }

    pub fn to_weights(&self) -> Result<NodeWeights<Node2>> {
        let mut pairs: Vec<(Node2, f64)> = self.iter().filter(|(_, v)| *v != 0.0).collect();
        pairs.sort_by_key(|a| a.0);
        NodeWeights::from_pairs(self.shape, pairs)
    }
}
