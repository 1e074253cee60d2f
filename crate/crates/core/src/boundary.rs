//! Moving sets and measures to the distinguished boundary.

use crate::capacity::{capacity, CapacityProblem};
use crate::error::Result;
use crate::nodeset::{leaves_under, NodeSet};
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::Measure;

/// Leaves below some vertex of `set`, as a boundary set.
pub fn boundary_projection(set: &NodeSet) -> NodeSet {
    set.boundary_projection()
}

/// Spreads every atom uniformly over the leaf pairs below it.
///
/// A leaf coordinate has a single leaf below it, so mixed-level atoms only
/// spread in their interior coordinate. Total mass is preserved.
pub fn disintegrate_to_boundary(mu: &Measure) -> Result<Measure> {
    let shape = mu.shape();
    let mut out = Measure::new(shape);
    for (a, m) in mu.iter() {
        let hx = shape.depth() - a.x.level();
        let hy = shape.depth() - a.y.level();
        let each = m / 2f64.powi((hx + hy) as i32);
        for x in leaves_under(shape, a.x) {
            for y in leaves_under(shape, a.y) {
                out.add(Node2::new(x, y), each)?;
            }
        }
    }
    Ok(out)
}

/// Average of `d_T(ξ ∧ ω)` over leaves `ξ ≤ α`, `ω ≤ β`, divided by
/// `d_T(α ∧ β)`. Always in `[1, 3]`.
pub fn martingale_ratio_check(shape: TreeShape, alpha: Node1, beta: Node1) -> Result<f64> {
    shape.check1(alpha)?;
    shape.check1(beta)?;
    let top = if alpha.is_under(&beta) {
        beta
    } else if beta.is_under(&alpha) {
        alpha
    } else {
        return Ok(1.0);
    };
    // Below the higher vertex, the meet descends one more level with
    // probability 1/2 at each step until a leaf is reached.
    let l = top.level();
    let d = l as f64 + 1.0;
    let extra: f64 = (1..=shape.depth() - l).map(|r| 0.5f64.powi(r as i32)).sum();
    Ok((d + extra) / d)
}

/// `cap ∪S(p(α^j)) / cap ∪S(α^j)` with `p` the diagonal grandparent.
///
/// The parents' boxes contain the originals, so the ratio is at least 1.
pub fn grandparent_ratio(shape: TreeShape, points: &[Node2], tol: f64) -> Result<f64> {
    let orig = NodeSet::down_closure(shape, points.iter().copied())?;
    let parents = NodeSet::down_closure(shape, points.iter().map(|p| p.grandparent()))?;
    let a = capacity(&CapacityProblem::new(orig).with_tol(tol))?.cap;
    let b = capacity(&CapacityProblem::new(parents).with_tol(tol))?.cap;
    Ok(b / a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::potential_field;

    #[test]
    fn root_atom_spreads_to_corners() {
        let shape = TreeShape::new(1).unwrap();
        let mu = Measure::point(shape, Node2::ROOT, 1.0).unwrap();
        let b = disintegrate_to_boundary(&mu).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.iter().all(|(_, m)| m == 0.25));
        let v = potential_field(&b).unwrap();
        assert_eq!(v.get(Node2::ROOT), 1.0);
        let aa = Node2::new(Node1::new(1, 0).unwrap(), Node1::new(1, 0).unwrap());
        assert_eq!(v.get(aa), 2.25);
    }

    #[test]
    fn martingale_ratio_matches_enumeration() {
        let shape = TreeShape::new(4).unwrap();
        for a in shape.nodes1() {
            for b in shape.nodes1() {
                let xs: Vec<Node1> = leaves_under(shape, a).collect();
                let ws: Vec<Node1> = leaves_under(shape, b).collect();
                let mut s = 0.0;
                for x in &xs {
                    for w in &ws {
                        s += x.meet(w).ancestor_count() as f64;
                    }
                }
                let avg = s / (xs.len() * ws.len()) as f64;
                let expect = avg / a.meet(&b).ancestor_count() as f64;
                let r = martingale_ratio_check(shape, a, b).unwrap();
                assert!((r - expect).abs() < 1e-12, "{a:?} {b:?}");
                assert!((1.0..=3.0).contains(&r));
            }
        }
    }
}
