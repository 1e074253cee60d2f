//! Level sets of `𝕀f`, the strong capacitary sum, and the trace and
//! subcapacitary constants of a measure.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{capacity, CapacityProblem, CapacityResult};
use crate::error::{CoreError, Result};
use crate::gen;
use crate::grid::Grid2;
use crate::nodeset::NodeSet;
use crate::potential::{co_hardy_field, hardy_field, trace_norm_estimate};
use crate::tree::{Node2, TreeShape};
use crate::weights::{Measure, SparseFunction};

/// Largest `k` with `2^k ≤ x` (or `2^k < x` when `strict`), for `x > 0`.
pub fn dyadic_floor(x: f64, strict: bool) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut k = x.log2().floor() as i32;
    while 2f64.powi(k) > x {
        k -= 1;
    }
    while 2f64.powi(k + 1) <= x {
        k += 1;
    }
    if strict && 2f64.powi(k) == x {
        k - 1
    } else {
        k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub k: i32,
    /// Maximal vertices of `{𝕀f ≥ 2^k}` (or `> 2^k`).
    pub generators: Vec<Node2>,
    /// Boundary projection of the level set.
    pub boundary: NodeSet,
    pub cap: f64,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetFamily {
    pub strict: bool,
    pub sets: Vec<LevelSet>,
}

impl LevelSetFamily {
    pub fn k_min(&self) -> Option<i32> {
        self.sets.first().map(|s| s.k)
    }

    pub fn k_max(&self) -> Option<i32> {
        self.sets.last().map(|s| s.k)
    }
}

fn passes(v: f64, t: f64, strict: bool) -> bool {
    if strict {
        v > t
    } else {
        v >= t
    }
}

/// Maximal vertices of the down-set `{α : keep(𝕀f(α))}`.
fn generators_of(field: &Grid2, keep: impl Fn(f64) -> bool) -> Vec<Node2> {
    let shape = field.shape();
    shape
        .nodes2()
        .filter(|&a| keep(field.get(a)))
        .filter(|a| {
            let px = a.x.parent().map(|p| Node2::new(p, a.y));
            let py = a.y.parent().map(|p| Node2::new(a.x, p));
            [px, py].into_iter().flatten().all(|p| !keep(field.get(p)))
        })
        .collect()
}

/// Dyadic level sets of `𝕀f` with the capacities of their boundary
/// projections. Levels below `k_min` repeat the `k_min` set.
pub fn level_sets(f: &SparseFunction, strict: bool, tol: f64) -> Result<LevelSetFamily> {
    if f.iter().any(|(_, v)| v < 0.0) {
        return Err(CoreError::InvalidParameter("f must be non-negative".into()));
    }
    let field = hardy_field(f)?;
    let max = field.max();
    let min_leaf = field.leaf_values().map(|(_, v)| v).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return Ok(LevelSetFamily { strict, sets: vec![] });
    }
    let k_max = dyadic_floor(max, strict);
    let k_min = dyadic_floor(min_leaf, strict);
    let shape = f.shape();
    let sets = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let t = 2f64.powi(k);
            let generators = generators_of(&field, |v| passes(v, t, strict));
            let boundary = NodeSet::boundary(shape, generators.iter().copied())?;
            let r = capacity(&CapacityProblem::new(boundary.clone()).with_tol(tol))?;
            Ok(LevelSet { k, generators, boundary, cap: r.cap, certified: r.certified })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelSetFamily { strict, sets })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SciTerm {
    pub k: i32,
    pub cap: f64,
    pub term: f64,
    pub cumulative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SciReport {
    pub norm_sq: f64,
    pub sum: f64,
    pub ratio: f64,
    pub terms: Vec<SciTerm>,
    pub certified: bool,
}

/// `Σ_k 4^k cap E_k / ‖f‖²`, the `k < k_min` tail summed in closed form.
pub fn sci_ratio(f: &SparseFunction, strict: bool, tol: f64) -> Result<SciReport> {
    let norm_sq = f.norm_sq();
    if !(norm_sq > 0.0) {
        return Err(CoreError::InvalidParameter("f is identically zero".into()));
    }
    let fam = level_sets(f, strict, tol)?;
    let mut terms = Vec::with_capacity(fam.sets.len());
    let mut cumulative = 0.0;
    for (i, s) in fam.sets.iter().enumerate() {
        let weight = 4f64.powi(s.k) * if i == 0 { 4.0 / 3.0 } else { 1.0 };
        let term = weight * s.cap;
        cumulative += term;
        terms.push(SciTerm { k: s.k, cap: s.cap, term, cumulative });
    }
    Ok(SciReport {
        norm_sq,
        sum: cumulative,
        ratio: cumulative / norm_sq,
        terms,
        certified: fam.sets.iter().all(|s| s.certified),
    })
}

/// Outcome of `ν(∪S(E)) ≤ ‖𝕀‖²_{L²(ν)}·cap E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceCheck {
    pub mass: f64,
    pub norm_sq: f64,
    pub cap: f64,
    pub holds: bool,
}

/// Checks the trace inequality on one set.
///
/// The trace norm is bounded below both by power iteration and by the
/// Rayleigh quotient of the equilibrium potential itself; the larger of the
/// two is used, since the inequality holds for the true norm.
pub fn trace_upper_bound_check(nu: &Measure, set: &NodeSet, tol: f64) -> Result<TraceCheck> {
    let closure = set.to_down_closure();
    let mass: f64 = nu.iter().filter(|(a, _)| closure.contains(a)).map(|(_, m)| m).sum();
    if set.is_empty() {
        return Ok(TraceCheck { mass, norm_sq: 0.0, cap: 0.0, holds: mass == 0.0 });
    }
    let r = capacity(&CapacityProblem::new(set.clone()).with_tol(tol))?;
    let norm_sq = if nu.is_empty() { 0.0 } else { trace_norm_estimate(nu, 1e-12, 100_000)?.norm_sq };
    let rq = rayleigh(nu, &r)?;
    let norm_sq = norm_sq.max(rq);
    let holds = mass <= norm_sq * r.cap * (1.0 + 10.0 * tol) + 1e-14;
    Ok(TraceCheck { mass, norm_sq, cap: r.cap, holds })
}

/// `∫(𝕀φ)² dν / ‖φ‖²` for `φ = 𝕀*μ_E`.
fn rayleigh(nu: &Measure, r: &CapacityResult) -> Result<f64> {
    if r.equilibrium.is_empty() {
        return Ok(0.0);
    }
    let phi = co_hardy_field(&r.equilibrium)?;
    let norm = phi.norm_sq();
    let v = phi.path_sums();
    Ok(nu.iter().map(|(a, m)| v.get(a).powi(2) * m).sum::<f64>() / norm)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SubcapStrategy {
    SingleBox,
    /// Random unions of up to `max_boxes` boxes charged by `ν`.
    RandomCollections { count: usize, max_boxes: usize, seed: u64 },
    /// Level sets of `𝕀f` for each `f`, plus those of `𝕀𝕀*ν`.
    LevelSetGuided { functions: Vec<SparseFunction> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubcapReport {
    /// Largest `ν(∪S(α^j)) / cap ∪S(α^j)` found.
    pub constant: f64,
    pub collection: Vec<Node2>,
    pub evaluated: usize,
}

/// Lower bound for the subcapacitary constant of `ν`. Every strategy also
/// scans all single boxes, so broader strategies never report less.
pub fn subcap_constant(nu: &Measure, strategy: &SubcapStrategy, tol: f64) -> Result<SubcapReport> {
    let shape = nu.shape();
    let c = co_hardy_field(nu)?;
    let mut best = SubcapReport { constant: 0.0, collection: vec![], evaluated: 0 };
    for (a, m) in c.iter() {
        best.evaluated += 1;
        let r = m * a.ancestor_count() as f64;
        if r > best.constant {
            best.constant = r;
            best.collection = vec![a];
        }
    }
    let collections: Vec<Vec<Node2>> = match strategy {
        SubcapStrategy::SingleBox => vec![],
        SubcapStrategy::RandomCollections { count, max_boxes, seed } => {
            let charged: Vec<Node2> = c.iter().filter(|(_, m)| *m > 0.0).map(|(a, _)| a).collect();
            let mut rng = gen::rng(*seed);
            (0..*count)
                .map(|_| {
                    let k = rng.gen_range(1..=(*max_boxes).max(1));
                    charged.choose_multiple(&mut rng, k).copied().collect()
                })
                .collect()
        }
        SubcapStrategy::LevelSetGuided { functions } => {
            let own = SparseFunction::from_pairs(shape, c.iter().filter(|(_, m)| *m > 0.0))?;
            let mut out = Vec::new();
            for f in functions.iter().chain(std::iter::once(&own)) {
                let field = hardy_field(f)?;
                let max = field.max();
                if !(max > 0.0) {
                    continue;
                }
                let lo = field.data().iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
                for k in dyadic_floor(lo, false)..=dyadic_floor(max, false) {
                    let t = 2f64.powi(k);
                    out.push(generators_of(&field, |v| v >= t));
                }
            }
            out
        }
    };
    let scored: Vec<(f64, Vec<Node2>)> = collections
        .into_par_iter()
        .map(|col| {
            let set = NodeSet::down_closure(shape, col.iter().copied())?;
            let mass: f64 = nu.iter().filter(|(a, _)| set.contains(a)).map(|(_, m)| m).sum();
            let cap = capacity(&CapacityProblem::new(set).with_tol(tol))?.cap;
            Ok((mass / cap, col))
        })
        .collect::<Result<_>>()?;
    for (r, col) in scored {
        best.evaluated += 1;
        if r > best.constant {
            best.constant = r;
            best.collection = col;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MixedEnergy {
    /// `∫ V^{μ_E} dμ_F`.
    pub lhs: f64,
    /// `(cap E)^{1/3} (cap F)^{2/3}`.
    pub rhs: f64,
    pub ratio: f64,
}

fn dense_mutual_energy(a: &Measure, b: &Measure) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Ok(0.0);
    }
    Ok(co_hardy_field(a)?.dot(&co_hardy_field(b)?))
}

/// Mixed energy of two equilibrium measures against the capacities; the
/// larger-capacity set plays the role of `E`.
pub fn mixed_energy_check(e: &NodeSet, f: &NodeSet, tol: f64) -> Result<MixedEnergy> {
    let re = capacity(&CapacityProblem::new(e.clone()).with_tol(tol))?;
    let rf = capacity(&CapacityProblem::new(f.clone()).with_tol(tol))?;
    let (re, rf) = if rf.cap > re.cap {
        log::info!("mixed energy: arguments reordered so that cap F ≤ cap E");
        (rf, re)
    } else {
        (re, rf)
    };
    let lhs = dense_mutual_energy(&re.equilibrium, &rf.equilibrium)?;
    let rhs = re.cap.cbrt() * rf.cap.cbrt().powi(2);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(MixedEnergy { lhs, rhs, ratio })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiagonalDomination {
    /// `Σ_k Σ_{j ≤ k} 2^{j+k} E[μ_k, μ_j]`, diagonal included.
    pub offdiag: f64,
    /// `Σ_k 4^k cap E_k`.
    pub diag: f64,
    pub ratio: f64,
}

/// `sets[i]` is weighted by `2^{ks[i]}`; the sets must shrink as `k` grows.
pub fn diagonal_domination_check(sets: &[NodeSet], ks: &[i32], tol: f64) -> Result<DiagonalDomination> {
    if sets.len() != ks.len() {
        return Err(CoreError::InvalidParameter("one exponent per set".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::InvalidParameter("exponents must increase".into()));
    }
    let eq: Vec<CapacityResult> = sets
        .par_iter()
        .map(|s| capacity(&CapacityProblem::new(s.clone()).with_tol(tol)))
        .collect::<Result<_>>()?;
    let fields: Vec<Option<Grid2>> = eq
        .iter()
        .map(|r| if r.equilibrium.is_empty() { Ok(None) } else { co_hardy_field(&r.equilibrium).map(Some) })
        .collect::<Result<_>>()?;
    let mut offdiag = 0.0;
    let mut diag = 0.0;
    for k in 0..sets.len() {
        diag += 4f64.powi(ks[k]) * eq[k].cap;
        for j in 0..=k {
            if let (Some(a), Some(b)) = (&fields[k], &fields[j]) {
                offdiag += 2f64.powi(ks[j] + ks[k]) * a.dot(b);
            }
        }
    }
    let ratio = if diag > 0.0 { offdiag / diag } else { 0.0 };
    Ok(DiagonalDomination { offdiag, diag, ratio })
}

/// Every vertex of `shape` where `𝕀f ≥ t` (or `> t`), by direct summation.
pub fn level_set_brute(f: &SparseFunction, t: f64, strict: bool) -> BTreeSet<Node2> {
    let shape: TreeShape = f.shape();
    shape.nodes2().filter(|&a| passes(crate::potential::hardy(f, a), t, strict)).collect()
}
