//! The extended predecessor sets of the 𝔊-graph.
//!
//! Each tree vertex `(j, l)` labels the closed arc `[l, l+1] · 2π/2^j` of the
//! unit circle. A vertex `γ` is an extended predecessor of `a` when the arc
//! of `a` fits inside the arc of `γ` together with its two circular
//! neighbours at the same level.

use crate::tree::{Node1, TreeShape};

/// `P_𝔊(a)` in heap order. Levels below `level(a) + 1` never qualify.
pub fn g_predecessors(shape: TreeShape, a: Node1) -> Vec<Node1> {
    let mut out = Vec::new();
    for j in 0..=a.level() {
        let width = 1u64 << j;
        let p = a.ancestor_at(j).pos();
        let mut qs = [(p + width - 1) % width, p, (p + 1) % width];
        qs.sort_unstable();
        let mut last = None;
        for q in qs {
            if last != Some(q) {
                out.push(Node1::new(j, q).expect("in range"));
                last = Some(q);
            }
        }
    }
    if a.level() < shape.depth() {
        out.extend(a.children());
    }
    out
}

/// `d_𝔊(a ∧ b) = |P_𝔊(a) ∩ P_𝔊(b)|`.
pub fn g_ancestor_count(shape: TreeShape, a: Node1, b: Node1) -> u64 {
    let pa = g_predecessors(shape, a);
    let pb = g_predecessors(shape, b);
    pa.iter().filter(|g| pb.contains(g)).count() as u64
}
