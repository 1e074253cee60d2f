//! Symmetry reduction for capacities of leaf sets.
//!
//! If a leaf set is a union of products `a × b` of whole subtrees ("cells"),
//! its equilibrium measure is uniform on each product, because swapping
//! children inside a cell is an automorphism fixing the set and the
//! equilibrium measure is unique. The problem then shrinks to one unknown per
//! product, with the kernel averaged over the leaves of each cell.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::Result;
use crate::nodeset::leaves_under;
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::Measure;

#[derive(Clone, Debug, PartialEq)]
pub struct CellProblem {
    shape: TreeShape,
    /// Products `(x cell, y cell)` making up the set.
    pub pairs: Vec<(Node1, Node1)>,
}

/// Average of `d_T(ω ∧ ω')` over pairs of leaves below `c`.
pub fn self_kernel(shape: TreeShape, c: Node1) -> f64 {
    let h = shape.depth() - c.level();
    let l = c.level() as f64;
    let mut acc = 0.5f64.powi(h as i32) * (shape.depth() as f64 + 1.0);
    for r in 0..h {
        acc += 0.5f64.powi(r as i32 + 1) * (l + r as f64 + 1.0);
    }
    acc
}

fn kernel1(shape: TreeShape, a: Node1, c: Node1) -> f64 {
    if a == c {
        self_kernel(shape, a)
    } else {
        a.meet(&c).ancestor_count() as f64
    }
}

impl CellProblem {
    /// Cells read off the generators of a boundary set: the maximal subtrees
    /// avoiding every strict ancestor of a generator coordinate.
    pub fn from_generators(shape: TreeShape, gens: &[Node2]) -> Self {
        let xs = cells_from_coords(gens.iter().map(|g| g.x));
        let ys = cells_from_coords(gens.iter().map(|g| g.y));
        let mut pairs = BTreeSet::new();
        for g in gens {
            let cx: Vec<Node1> = xs.iter().copied().filter(|c| c.is_under(&g.x)).collect();
            let cy: Vec<Node1> = ys.iter().copied().filter(|c| c.is_under(&g.y)).collect();
            for &a in &cx {
                for &b in &cy {
                    pairs.insert((a, b));
                }
            }
        }
        CellProblem { shape, pairs: pairs.into_iter().collect() }
    }

    /// Cells of an arbitrary leaf set: maximal subtrees on which every
    /// section of the set is constant.
    pub fn from_leaves(shape: TreeShape, leaves: &BTreeSet<Node2>) -> Self {
        let mut by_x: BTreeMap<Node1, BTreeSet<Node1>> = BTreeMap::new();
        let mut by_y: BTreeMap<Node1, BTreeSet<Node1>> = BTreeMap::new();
        for l in leaves {
            by_x.entry(l.x).or_default().insert(l.y);
            by_y.entry(l.y).or_default().insert(l.x);
        }
        let xs = uniform_cells(shape, &by_x);
        let ys = uniform_cells(shape, &by_y);
        let pairs: BTreeSet<(Node1, Node1)> =
            leaves.iter().map(|l| (cell_of(&xs, l.x), cell_of(&ys, l.y))).collect();
        CellProblem { shape, pairs: pairs.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Averaged kernel between products `i` and `j`.
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        let (a, b) = self.pairs[i];
        let (c, d) = self.pairs[j];
        kernel1(self.shape, a, c) * kernel1(self.shape, b, d)
    }

    /// Leaves in product `i`.
    pub fn size(&self, i: usize) -> f64 {
        let (a, b) = self.pairs[i];
        let h = 2 * self.shape.depth() - a.level() - b.level();
        2f64.powi(h as i32)
    }

    /// Spreads the product masses uniformly over their leaves.
    pub fn expand(&self, masses: &[f64]) -> Result<Measure> {
        let mut mu = Measure::new(self.shape);
        for (i, &m) in masses.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let (a, b) = self.pairs[i];
            let each = m / self.size(i);
            for x in leaves_under(self.shape, a) {
                for y in leaves_under(self.shape, b) {
                    mu.add(Node2::new(x, y), each)?;
                }
            }
        }
        Ok(mu)
    }
}

fn cells_from_coords<I: Iterator<Item = Node1>>(coords: I) -> Vec<Node1> {
    let mut split = BTreeSet::new();
    for c in coords {
        let mut p = c.parent();
        while let Some(q) = p {
            if !split.insert(q) {
                break;
            }
            p = q.parent();
        }
    }
    if split.is_empty() {
        return vec![Node1::ROOT];
    }
    let mut cells: Vec<Node1> = split.iter().flat_map(|s| s.children()).filter(|c| !split.contains(c)).collect();
    cells.sort();
    cells
}

/// Maximal nodes whose leaves all carry the same section.
fn uniform_cells(shape: TreeShape, sections: &BTreeMap<Node1, BTreeSet<Node1>>) -> HashSet<Node1> {
    let empty = BTreeSet::new();
    let depth = shape.depth();
    // uniform[node] = Some(section) when constant below node
    let mut level: Vec<(Node1, Option<&BTreeSet<Node1>>)> =
        shape.leaves1().map(|l| (l, Some(sections.get(&l).unwrap_or(&empty)))).collect();
    let mut cells = HashSet::new();
    for _ in 0..depth {
        let mut up = Vec::with_capacity(level.len() / 2);
        for pair in level.chunks(2) {
            let (l, sl) = pair[0];
            let (r, sr) = pair[1];
            let parent = l.parent().expect("not root");
            let merged = match (sl, sr) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => {
                    if sl.is_some() {
                        cells.insert(l);
                    }
                    if sr.is_some() {
                        cells.insert(r);
                    }
                    None
                }
            };
            up.push((parent, merged));
        }
        level = up;
    }
    if level[0].1.is_some() {
        cells.insert(Node1::ROOT);
    }
    cells
}

fn cell_of(cells: &HashSet<Node1>, leaf: Node1) -> Node1 {
    let mut n = leaf;
    loop {
        if cells.contains(&n) {
            return n;
        }
        n = n.parent().expect("every leaf lies in a cell");
    }
}
