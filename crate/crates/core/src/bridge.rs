//! From atoms on the closed bidisc to measures on the bitree.
//!
//! A point `z = r e^{iθ}` of the closed disc lands in the dyadic half-box
//! at level `j` (radial band `1 − 2^{−j} ≤ r < 1 − 2^{−j−1}`) over the arc
//! `⌊θ/2π · 2^j⌋`. Points with `1 − r ≤ 2^{−L}` are clamped to leaves. A
//! point on the edge of two bands goes to the deeper one, and a point on the
//! edge of two arcs to the one with larger index.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::g_ancestor_count;
use crate::nodeset::NodeSet;
use crate::potential::trace_norm_estimate;
use crate::sci::{dyadic_floor, subcap_constant, trace_upper_bound_check, SubcapStrategy};
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::Measure;

/// Polar coordinates `[r, θ]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Polar {
    pub r: f64,
    pub theta: f64,
}

impl Polar {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) || !theta.is_finite() {
            return Err(CoreError::InvalidParameter(format!("point ({r}, {theta}) is not in the closed disc")));
        }
        Ok(Polar { r, theta })
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.r, self.theta)
    }
}

impl TryFrom<[f64; 2]> for Polar {
    type Error = CoreError;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Polar::new(v[0], v[1])
    }
}

impl From<Polar> for [f64; 2] {
    fn from(p: Polar) -> Self {
        [p.r, p.theta]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidiscAtom {
    pub z1: Polar,
    pub z2: Polar,
    pub mass: f64,
}

/// Level of the radial band holding `r`, clamped to `depth`.
fn band(r: f64, depth: u32) -> u32 {
    let u = 1.0 - r;
    if u <= 0.0 {
        return depth;
    }
    let k = dyadic_floor(u, false);
    let j = if 2f64.powi(k) == u { -k } else { -k - 1 };
    (j.max(0) as u32).min(depth)
}

/// The tree vertex whose half-box contains `z`.
pub fn node_of_point(z: Polar, depth: u32) -> Node1 {
    let j = band(z.r, depth);
    let t = (z.theta / std::f64::consts::TAU).rem_euclid(1.0);
    let scaled = t * 2f64.powi(j as i32);
    let pos = (scaled.floor() as u64) & ((1u64 << j) - 1);
    Node1::new(j, pos).expect("arc index below 2^j")
}

pub fn node2_of_atom(a: &BidiscAtom, depth: u32) -> Node2 {
    Node2::new(node_of_point(a.z1, depth), node_of_point(a.z2, depth))
}

/// `μ̃(α) = μ(Q_{α_x} × Q_{α_y})`.
pub fn pullback_measure(atoms: &[BidiscAtom], shape: TreeShape) -> Result<Measure> {
    let mut mu = Measure::new(shape);
    for a in atoms {
        if !(a.mass >= 0.0) || !a.mass.is_finite() {
            return Err(CoreError::InvalidMass(a.mass));
        }
        if a.mass > 0.0 {
            mu.add(node2_of_atom(a, shape.depth()), a.mass)?;
        }
    }
    Ok(mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelComparison {
    /// `|10 + log 1/(1−z̄₁w₁)|·|10 + log 1/(1−z̄₂w₂)|`.
    pub kernel: f64,
    /// `d_𝔊(α_x∧β_x)·d_𝔊(α_y∧β_y)`.
    pub tree: f64,
    pub ratio: f64,
}

fn log_factor(z: Polar, w: Polar) -> Option<f64> {
    let q = Complex64::new(1.0, 0.0) - z.to_complex().conj() * w.to_complex();
    if q.norm() == 0.0 {
        return None;
    }
    Some((Complex64::new(10.0, 0.0) - q.ln()).norm())
}

/// `None` when a coordinate pair coincides on the circle, where the kernel
/// is infinite.
pub fn kernel_vs_tree_check(z: (Polar, Polar), w: (Polar, Polar), shape: TreeShape) -> Option<KernelComparison> {
    let kernel = log_factor(z.0, w.0)? * log_factor(z.1, w.1)?;
    let d = shape.depth();
    let tree = g_ancestor_count(shape, node_of_point(z.0, d), node_of_point(w.0, d)) as f64
        * g_ancestor_count(shape, node_of_point(z.1, d), node_of_point(w.1, d)) as f64;
    Some(KernelComparison { kernel, tree, ratio: kernel / tree })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonReport {
    pub depth: u32,
    pub mass: f64,
    /// Embedding constant `‖𝕀‖²_{ℓ² → L²(ν)}`.
    pub trace: f64,
    /// Capacitary constant found by the strategy.
    pub subcap: f64,
    /// `trace / subcap`.
    pub ratio: f64,
    pub collection: Vec<Node2>,
    /// `ν(∪S) ≤ trace·cap(∪S)` on the achieving collection.
    pub easy_direction: bool,
}

/// Pull back, then compare the embedding and capacitary constants.
pub fn carleson_test(atoms: &[BidiscAtom], shape: TreeShape, strategy: &SubcapStrategy, tol: f64) -> Result<CarlesonReport> {
    let nu = pullback_measure(atoms, shape)?;
    if nu.is_empty() {
        return Err(CoreError::InvalidParameter("no mass to test".into()));
    }
    let trace = trace_norm_estimate(&nu, 1e-12, 100_000)?.norm_sq;
    let sub = subcap_constant(&nu, strategy, tol)?;
    let check = trace_upper_bound_check(&nu, &NodeSet::down_closure(shape, sub.collection.iter().copied())?, tol)?;
    Ok(CarlesonReport {
        depth: shape.depth(),
        mass: nu.total(),
        trace,
        subcap: sub.constant,
        ratio: trace / sub.constant,
        collection: sub.collection,
        easy_direction: check.holds,
    })
}

/// Unit mass spread evenly over the `2^L × 2^L` grid of arc midpoints on
/// the torus.
pub fn uniform_grid(depth: u32) -> Vec<BidiscAtom> {
    let n = 1usize << depth;
    let m = 1.0 / (n * n) as f64;
    let theta = |i: usize| std::f64::consts::TAU * (i as f64 + 0.5) / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| BidiscAtom { z1: Polar { r: 1.0, theta: theta(i) }, z2: Polar { r: 1.0, theta: theta(j) }, mass: m })
        .collect()
}
