//! Index arithmetic on truncated dyadic trees and their products.
//!
//! A vertex of the tree is a binary prefix: `(level, pos)` where the bits of
//! `pos` spell the path from the root. Level-`L` vertices double as the
//! boundary of the truncated tree.
//!
//! Order convention: `a ≤ b` when `b` lies on the path from `a` to the root,
//! so the root is the maximum. [`Node1::is_under`] tests exactly that.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Deepest tree supported by the `u64` position encoding.
pub const MAX_DEPTH: u32 = 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct TreeShape {
    depth: u32,
}

impl TreeShape {
    pub fn new(depth: u32) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(CoreError::InvalidDepth(depth as u64));
        }
        Ok(TreeShape { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Vertices in one coordinate tree, `2^{L+1} - 1`.
    pub fn nodes_per_tree(&self) -> u64 {
        (1u64 << (self.depth + 1)) - 1
    }

    pub fn leaves_per_tree(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn contains1(&self, n: Node1) -> bool {
        n.level <= self.depth
    }

    pub fn contains2(&self, n: Node2) -> bool {
        self.contains1(n.x) && self.contains1(n.y)
    }

    pub fn is_leaf1(&self, n: Node1) -> bool {
        n.level == self.depth
    }

    /// Both coordinates on the truncated boundary.
    pub fn is_leaf2(&self, n: Node2) -> bool {
        self.is_leaf1(n.x) && self.is_leaf1(n.y)
    }

    pub fn check1(&self, n: Node1) -> Result<()> {
        if self.contains1(n) {
            Ok(())
        } else {
            Err(CoreError::NodeOutOfShape { level: n.level as u64, pos: n.pos, depth: self.depth })
        }
    }

    pub fn check2(&self, n: Node2) -> Result<()> {
        self.check1(n.x)?;
        self.check1(n.y)
    }

    /// All vertices in heap order (level by level, left to right).
    pub fn nodes1(&self) -> impl Iterator<Item = Node1> {
        let depth = self.depth;
        (0..=depth).flat_map(|j| (0..(1u64 << j)).map(move |p| Node1 { level: j, pos: p }))
    }

    pub fn leaves1(&self) -> impl Iterator<Item = Node1> {
        let depth = self.depth;
        (0..(1u64 << depth)).map(move |p| Node1 { level: depth, pos: p })
    }

    /// All bitree vertices in lexicographic order.
    pub fn nodes2(&self) -> impl Iterator<Item = Node2> {
        let shape = *self;
        self.nodes1().flat_map(move |x| shape.nodes1().map(move |y| Node2 { x, y }))
    }

    pub fn leaves2(&self) -> impl Iterator<Item = Node2> {
        let shape = *self;
        self.leaves1().flat_map(move |x| shape.leaves1().map(move |y| Node2 { x, y }))
    }
}

impl TryFrom<u32> for TreeShape {
    type Error = CoreError;
    fn try_from(depth: u32) -> Result<Self> {
        TreeShape::new(depth)
    }
}

impl From<TreeShape> for u32 {
    fn from(s: TreeShape) -> u32 {
        s.depth
    }
}

/// Vertex of a dyadic tree. Serialized as `[level, pos]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u32, u64)", into = "(u32, u64)")]
pub struct Node1 {
    level: u32,
    pos: u64,
}

impl fmt::Debug for Node1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.pos)
    }
}

impl TryFrom<(u32, u64)> for Node1 {
    type Error = CoreError;
    fn try_from((level, pos): (u32, u64)) -> Result<Self> {
        Node1::new(level, pos)
    }
}

impl From<Node1> for (u32, u64) {
    fn from(n: Node1) -> (u32, u64) {
        (n.level, n.pos)
    }
}

impl Node1 {
    pub const ROOT: Node1 = Node1 { level: 0, pos: 0 };

    pub fn new(level: u32, pos: u64) -> Result<Self> {
        if level > MAX_DEPTH || pos >> level != 0 {
            return Err(CoreError::InvalidNode { level: level as u64, pos });
        }
        Ok(Node1 { level, pos })
    }

    pub fn root() -> Self {
        Self::ROOT
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn pos(&self) -> u64 {
        self.pos
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    pub fn child(&self, bit: u64) -> Node1 {
        debug_assert!(bit < 2 && self.level < MAX_DEPTH);
        Node1 { level: self.level + 1, pos: (self.pos << 1) | bit }
    }

    pub fn children(&self) -> [Node1; 2] {
        [self.child(0), self.child(1)]
    }

    pub fn parent(&self) -> Option<Node1> {
        (self.level > 0).then(|| Node1 { level: self.level - 1, pos: self.pos >> 1 })
    }

    /// Parent, with the root mapped to itself.
    pub fn parent_or_root(&self) -> Node1 {
        self.parent().unwrap_or(Node1::ROOT)
    }

    pub fn sibling(&self) -> Option<Node1> {
        (self.level > 0).then_some(Node1 { level: self.level, pos: self.pos ^ 1 })
    }

    /// The ancestor of `self` at `level` (which must not exceed `self.level`).
    pub fn ancestor_at(&self, level: u32) -> Node1 {
        debug_assert!(level <= self.level);
        Node1 { level, pos: self.pos >> (self.level - level) }
    }

    /// `true` when `ancestor` lies on the path from `self` to the root, `self` included.
    pub fn is_under(&self, ancestor: &Node1) -> bool {
        ancestor.level <= self.level && self.pos >> (self.level - ancestor.level) == ancestor.pos
    }

    /// Deepest common ancestor.
    pub fn meet(&self, other: &Node1) -> Node1 {
        let level = self.level.min(other.level);
        let a = self.pos >> (self.level - level);
        let b = other.pos >> (other.level - level);
        let strip = 64 - (a ^ b).leading_zeros();
        Node1 { level: level - strip, pos: a >> strip }
    }

    /// `d_T`, the number of vertices on the path to the root.
    pub fn ancestor_count(&self) -> u64 {
        self.level as u64 + 1
    }

    /// Path from the root down to `self`, both ends included.
    pub fn predecessors(&self) -> Vec<Node1> {
        (0..=self.level).map(|j| self.ancestor_at(j)).collect()
    }

    /// Position in a level-by-level array, `2^level - 1 + pos`.
    pub fn heap_index(&self) -> usize {
        ((1u64 << self.level) - 1 + self.pos) as usize
    }

    pub fn from_heap_index(idx: usize) -> Node1 {
        let k = idx as u64 + 1;
        let level = 63 - k.leading_zeros();
        Node1 { level, pos: k - (1u64 << level) }
    }
}

/// Vertex of the bitree.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node2 {
    pub x: Node1,
    pub y: Node1,
}

impl fmt::Debug for Node2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}x{:?}]", self.x, self.y)
    }
}

impl Node2 {
    pub const ROOT: Node2 = Node2 { x: Node1::ROOT, y: Node1::ROOT };

    pub fn new(x: Node1, y: Node1) -> Self {
        Node2 { x, y }
    }

    pub fn root() -> Self {
        Self::ROOT
    }

    pub fn is_under(&self, ancestor: &Node2) -> bool {
        self.x.is_under(&ancestor.x) && self.y.is_under(&ancestor.y)
    }

    pub fn meet(&self, other: &Node2) -> Node2 {
        Node2 { x: self.x.meet(&other.x), y: self.y.meet(&other.y) }
    }

    /// `d_{T²} = d_T(x) · d_T(y)`.
    pub fn ancestor_count(&self) -> u64 {
        self.x.ancestor_count() * self.y.ancestor_count()
    }

    /// `P(α) = P(α_x) × P(α_y)` in lexicographic order.
    pub fn predecessors(&self) -> Vec<Node2> {
        let ys = self.y.predecessors();
        self.x
            .predecessors()
            .into_iter()
            .flat_map(|x| ys.iter().map(move |&y| Node2 { x, y }))
            .collect()
    }

    /// `(parent(x), parent(y))`, each coordinate staying at the root if already there.
    pub fn grandparent(&self) -> Node2 {
        Node2 { x: self.x.parent_or_root(), y: self.y.parent_or_root() }
    }
}

/// `α ∈ S(β)`, equivalently `β ∈ P(α)`.
pub fn in_successors(beta: Node2, alpha: Node2) -> bool {
    alpha.is_under(&beta)
}

/// The metric δ on the closed bitree, with boundary points at finite depth.
pub fn metric_delta(zeta: Node2, xi: Node2) -> f64 {
    let w = |n: Node1| 0.5f64.powi(n.ancestor_count() as i32);
    w(zeta.x.meet(&xi.x)) + w(zeta.y.meet(&xi.y))
        - 0.5 * (w(zeta.x) + w(xi.x) + w(zeta.y) + w(xi.y))
}

/// A tree vertex type usable by the generic sparse operators.
pub trait Vertex: Copy + Ord + std::hash::Hash + fmt::Debug + Send + Sync {
    fn fits(&self, shape: TreeShape) -> bool;
    fn is_under(&self, ancestor: &Self) -> bool;
    fn predecessors(&self) -> Vec<Self>;
    fn ancestor_count(&self) -> u64;
    fn meet_count(&self, other: &Self) -> u64;
    fn is_leaf(&self, shape: TreeShape) -> bool;
}

impl Vertex for Node1 {
    fn fits(&self, shape: TreeShape) -> bool {
        shape.contains1(*self)
    }
    fn is_under(&self, ancestor: &Self) -> bool {
        Node1::is_under(self, ancestor)
    }
    fn predecessors(&self) -> Vec<Self> {
        Node1::predecessors(self)
    }
    fn ancestor_count(&self) -> u64 {
        Node1::ancestor_count(self)
    }
    fn meet_count(&self, other: &Self) -> u64 {
        self.meet(other).ancestor_count()
    }
    fn is_leaf(&self, shape: TreeShape) -> bool {
        shape.is_leaf1(*self)
    }
}

impl Vertex for Node2 {
    fn fits(&self, shape: TreeShape) -> bool {
        shape.contains2(*self)
    }
    fn is_under(&self, ancestor: &Self) -> bool {
        Node2::is_under(self, ancestor)
    }
    fn predecessors(&self) -> Vec<Self> {
        Node2::predecessors(self)
    }
    fn ancestor_count(&self) -> u64 {
        Node2::ancestor_count(self)
    }
    fn meet_count(&self, other: &Self) -> u64 {
        self.meet(other).ancestor_count()
    }
    fn is_leaf(&self, shape: TreeShape) -> bool {
        shape.is_leaf2(*self)
    }
}

/// Points whose pairwise kernel `d(a ∧ b)` is computable from meets alone.
pub trait MeetKernel {
    fn kernel(&self, other: &Self) -> f64;
}

impl MeetKernel for Node1 {
    fn kernel(&self, other: &Self) -> f64 {
        self.meet(other).ancestor_count() as f64
    }
}

impl MeetKernel for Node2 {
    fn kernel(&self, other: &Self) -> f64 {
        self.meet(other).ancestor_count() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(level: u32, pos: u64) -> Node1 {
        Node1::new(level, pos).unwrap()
    }

    fn meet_by_paths(a: Node1, b: Node1) -> Node1 {
        let pa = a.predecessors();
        let pb = b.predecessors();
        *pa.iter().filter(|x| pb.contains(x)).max_by_key(|x| x.level()).unwrap()
    }

    #[test]
    fn meet_examples() {
        assert_eq!(n(1, 0).meet(&n(1, 1)), Node1::ROOT);
        assert_eq!(n(3, 5).meet(&n(3, 5)), n(3, 5));
        assert_eq!(n(3, 5).meet(&n(3, 4)), n(2, 2));
        assert_eq!(n(3, 5).meet(&n(1, 1)), n(1, 1));
        assert_eq!(n(3, 5).meet(&n(2, 0)), Node1::ROOT);
    }

    #[test]
    fn meet_matches_path_walk() {
        let shape = TreeShape::new(4).unwrap();
        for a in shape.nodes1() {
            for b in shape.nodes1() {
                assert_eq!(a.meet(&b), meet_by_paths(a, b), "{a:?} {b:?}");
                assert_eq!(a.meet(&b), b.meet(&a));
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(Node2::ROOT.ancestor_count(), 1);
        let leaf = n(1, 1);
        assert_eq!(leaf.ancestor_count(), 2);
        assert_eq!(Node2::new(leaf, leaf).ancestor_count(), 4);
        assert_eq!(Node2::new(n(2, 0), n(1, 1)).ancestor_count(), 6);
    }

    #[test]
    fn predecessor_sets() {
        assert_eq!(Node2::ROOT.predecessors(), vec![Node2::ROOT]);
        let a = n(1, 0);
        let p = Node2::new(a, a).predecessors();
        let o = Node1::ROOT;
        assert_eq!(
            p,
            vec![Node2::new(o, o), Node2::new(o, a), Node2::new(a, o), Node2::new(a, a)]
        );
    }

    #[test]
    fn order_consistency_exhaustive() {
        let shape = TreeShape::new(3).unwrap();
        for a in shape.nodes1() {
            for b in shape.nodes1() {
                let in_p = a.predecessors().contains(&b);
                assert_eq!(in_p, a.is_under(&b));
            }
        }
        let shape = TreeShape::new(2).unwrap();
        for al in shape.nodes2() {
            let p = al.predecessors();
            assert_eq!(p.len() as u64, al.ancestor_count());
            for be in shape.nodes2() {
                assert_eq!(p.contains(&be), in_successors(be, al));
                let common = p.iter().filter(|g| be.predecessors().contains(g)).count() as u64;
                assert_eq!(common, al.meet(&be).ancestor_count());
            }
        }
    }

    #[test]
    fn heap_index_round_trip() {
        let shape = TreeShape::new(6).unwrap();
        for (i, a) in shape.nodes1().enumerate() {
            assert_eq!(a.heap_index(), i);
            assert_eq!(Node1::from_heap_index(i), a);
        }
    }

    #[test]
    fn metric_examples() {
        let shape = TreeShape::new(2).unwrap();
        let z = Node2::new(n(2, 0), n(2, 0));
        let x = Node2::new(n(2, 3), n(2, 2));
        assert_eq!(metric_delta(z, z), 0.0);
        assert!((metric_delta(z, x) - 0.75).abs() < 1e-15);
        for a in shape.nodes2() {
            for b in shape.nodes2() {
                assert_eq!(metric_delta(a, b), metric_delta(b, a));
            }
        }
    }

    #[test]
    fn node_validation_and_json() {
        assert!(Node1::new(2, 4).is_err());
        let a = n(3, 5);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[3,5]");
        let b: Node2 = serde_json::from_str(r#"{"x":[1,1],"y":[0,0]}"#).unwrap();
        assert_eq!(b, Node2::new(n(1, 1), Node1::ROOT));
        assert!(serde_json::from_str::<Node1>("[1,2]").is_err());
        assert!(TreeShape::new(0).is_err());
    }
}
