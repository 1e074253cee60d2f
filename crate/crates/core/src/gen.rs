//! Seeded random instances.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::{Measure, NodeWeights, SparseFunction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform vertex: level uniform in `0..=L`, then a uniform position.
pub fn node1<R: Rng>(shape: TreeShape, rng: &mut R) -> Node1 {
    let level = rng.gen_range(0..=shape.depth());
    leaf_at(level, rng)
}

fn leaf_at<R: Rng>(level: u32, rng: &mut R) -> Node1 {
    let pos = if level == 0 { 0 } else { rng.gen_range(0..1u64 << level) };
    Node1::new(level, pos).expect("in range")
}

pub fn node2<R: Rng>(shape: TreeShape, rng: &mut R) -> Node2 {
    Node2::new(node1(shape, rng), node1(shape, rng))
}

pub fn leaf1<R: Rng>(shape: TreeShape, rng: &mut R) -> Node1 {
    leaf_at(shape.depth(), rng)
}

pub fn leaf2<R: Rng>(shape: TreeShape, rng: &mut R) -> Node2 {
    Node2::new(leaf1(shape, rng), leaf1(shape, rng))
}

/// Each leaf independently with probability `p`; never empty.
pub fn leaf_set1<R: Rng>(shape: TreeShape, p: f64, rng: &mut R) -> BTreeSet<Node1> {
    let mut s: BTreeSet<Node1> = shape.leaves1().filter(|_| rng.gen_bool(p)).collect();
    if s.is_empty() {
        s.insert(leaf1(shape, rng));
    }
    s
}

/// A union of `count` random boxes, at levels no shallower than `min_level`.
pub fn boxes<R: Rng>(shape: TreeShape, count: usize, min_level: u32, rng: &mut R) -> Vec<Node2> {
    let lo = min_level.min(shape.depth());
    (0..count)
        .map(|_| {
            let lx = rng.gen_range(lo..=shape.depth());
            let ly = rng.gen_range(lo..=shape.depth());
            Node2::new(leaf_at(lx, rng), leaf_at(ly, rng))
        })
        .collect()
}

/// Leaf-pair measure with `atoms` atoms of mass in `(0, 1]`.
pub fn boundary_measure<R: Rng>(shape: TreeShape, atoms: usize, rng: &mut R) -> Result<Measure> {
    Measure::from_pairs(shape, (0..atoms).map(|_| (leaf2(shape, rng), 1.0 - rng.gen::<f64>())))
}

/// Measure with atoms anywhere in the bitree.
pub fn measure<R: Rng>(shape: TreeShape, atoms: usize, rng: &mut R) -> Result<Measure> {
    Measure::from_pairs(shape, (0..atoms).map(|_| (node2(shape, rng), 1.0 - rng.gen::<f64>())))
}

/// Non-negative function with `support` random vertices.
pub fn function<R: Rng>(shape: TreeShape, support: usize, rng: &mut R) -> Result<SparseFunction> {
    SparseFunction::from_pairs(shape, (0..support).map(|_| (node2(shape, rng), 1.0 - rng.gen::<f64>())))
}

/// Tree automorphism given by a child swap at each flagged vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct Automorphism {
    flips: Vec<bool>,
}

impl Automorphism {
    pub fn random<R: Rng>(shape: TreeShape, rng: &mut R) -> Self {
        Automorphism { flips: (0..shape.nodes_per_tree()).map(|_| rng.gen_bool(0.5)).collect() }
    }

    pub fn apply(&self, n: Node1) -> Node1 {
        let mut pos = 0u64;
        for j in 0..n.level() {
            let a = n.ancestor_at(j);
            let bit = (n.pos() >> (n.level() - j - 1)) & 1;
            let bit = bit ^ u64::from(self.flips[a.heap_index()]);
            pos = (pos << 1) | bit;
        }
        Node1::new(n.level(), pos).expect("same level")
    }
}

/// Independent automorphisms of the two coordinate trees.
#[derive(Clone, Debug, PartialEq)]
pub struct Automorphism2 {
    pub x: Automorphism,
    pub y: Automorphism,
}

impl Automorphism2 {
    pub fn random<R: Rng>(shape: TreeShape, rng: &mut R) -> Self {
        Automorphism2 { x: Automorphism::random(shape, rng), y: Automorphism::random(shape, rng) }
    }

    pub fn apply(&self, a: Node2) -> Node2 {
        Node2::new(self.x.apply(a.x), self.y.apply(a.y))
    }

    pub fn apply_weights(&self, w: &NodeWeights<Node2>) -> Result<NodeWeights<Node2>> {
        NodeWeights::from_pairs(w.shape(), w.iter().map(|(a, v)| (self.apply(a), v)))
    }
}
