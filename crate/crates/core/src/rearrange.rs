//! Constructive rearrangement: the one-dimensional stopping-time measure,
//! its layer-by-layer lift to the bitree, and the estimates built on it.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{capacity, capacity_tree_exact, CapacityProblem};
use crate::error::{CoreError, Result};
use crate::nodeset::NodeSet;
use crate::potential::{co_hardy_field, co_hardy_map, energy, hardy, potential, potential_field};
use crate::tree::{Node1, Node2, TreeShape};
use crate::weights::{Function1, Measure, Measure1, SparseFunction};

const HYPOTHESIS_SLACK: f64 = 1e-10;

/// `V^ρ` on the ancestor closure of `supp ρ`.
fn potential_on_closure(rho: &Measure1) -> BTreeMap<Node1, f64> {
    let c = co_hardy_map(rho);
    c.keys().map(|&n| (n, n.predecessors().iter().map(|p| c.get(p).copied().unwrap_or(0.0)).sum())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StopNode {
    pub node: Node1,
    pub potential: f64,
}

/// First vertices on each root path where `V^ρ` exceeds `δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppingSet {
    pub delta: f64,
    pub nodes: Vec<StopNode>,
}

pub fn stopping_set(rho: &Measure1, delta: f64) -> StoppingSet {
    let v = potential_on_closure(rho);
    let nodes = v
        .iter()
        .filter(|(n, &p)| p > delta && n.parent().is_none_or(|q| v[&q] <= delta))
        .map(|(&node, &potential)| StopNode { node, potential })
        .collect();
    StoppingSet { delta, nodes }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rearrangement1d {
    pub rho: Measure1,
    pub stopping: StoppingSet,
    pub sigma: Measure1,
    /// `min_{ω ∈ F} (V^σ(ω) − If(ω))`; non-negative when the construction works.
    pub min_excess: f64,
    pub energy: f64,
    /// `E[σ] / (δ‖f‖²)`, zero for `f = 0`.
    pub constant: f64,
}

/// Measure `σ` on `F` with `V^σ ≥ If` on `F` and small energy, assuming
/// `V^ρ ≤ δ` on `supp f` for the equilibrium `ρ` of `F`.
pub fn rearrange_1d(shape: TreeShape, set: &BTreeSet<Node1>, f: &Function1, delta: f64) -> Result<Rearrangement1d> {
    if !(delta > 0.0 && delta <= 1.0 / 3.0) {
        return Err(CoreError::InvalidParameter(format!("delta must lie in (0, 1/3], got {delta}")));
    }
    if let Some(n) = set.iter().find(|n| !shape.is_leaf1(**n)) {
        return Err(CoreError::InvalidParameter(format!("{n:?} is not a leaf")));
    }
    let rho = capacity_tree_exact(shape, set)?.equilibrium;
    for (a, _) in f.iter() {
        let v = potential(&rho, a);
        if v > delta * (1.0 + HYPOTHESIS_SLACK) {
            return Err(CoreError::Hypothesis(format!("V^rho({a:?}) = {v} exceeds delta = {delta} on supp f")));
        }
    }
    let stopping = stopping_set(&rho, delta);
    let mut sigma = Measure1::new(shape);
    let scale = 1.0 / (1.0 - 2.0 * delta);
    for s in &stopping.nodes {
        let level = hardy(f, s.node);
        if level == 0.0 {
            continue;
        }
        for (w, m) in rho.iter().filter(|(w, _)| w.is_under(&s.node)) {
            sigma.add(w, scale * level * m)?;
        }
    }
    let min_excess =
        set.iter().map(|&w| potential(&sigma, w) - hardy(f, w)).fold(f64::INFINITY, f64::min);
    let e = energy(&sigma);
    let fn2 = f.norm_sq();
    let constant = if fn2 > 0.0 { e / (delta * fn2) } else { 0.0 };
    Ok(Rearrangement1d { rho, stopping, sigma, min_excess, energy: e, constant })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Layer {
    pub alpha_y: Node1,
    /// Leaves of `F_R`.
    pub width: usize,
    pub f_norm_sq: f64,
    pub phi_norm_sq: f64,
    pub constant_1d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificates {
    /// Size of `E_{δ,λ}`.
    pub exceedance: usize,
    /// `min 𝕀φ` over `E_{δ,λ}`, `+∞` when it is empty.
    pub min_hardy: f64,
    pub norm_sq: f64,
    /// `δ·E_δ[μ]/λ`.
    pub scale: f64,
    /// `‖φ‖² / scale`, zero when `φ = 0`.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RearrangementOutput {
    pub phi: SparseFunction,
    pub layers: Vec<Layer>,
    pub certificates: Certificates,
}

/// JSON form of [`RearrangementOutput`].
#[derive(Clone, Debug, Serialize)]
pub struct RearrangementReport {
    pub phi: Vec<crate::weights::Atom<Node2>>,
    pub layers: Vec<Layer>,
    pub certificates: Certificates,
}

impl RearrangementOutput {
    pub fn report(&self) -> RearrangementReport {
        RearrangementReport {
            phi: self.phi.to_atoms(),
            layers: self.layers.clone(),
            certificates: self.certificates.clone(),
        }
    }
}

/// Restricted potential data at `δ = 1` for a rescaled measure.
struct Restricted {
    /// `𝕀*μ` masked to `E^1`.
    masked: crate::grid::Grid2,
    /// `V^μ_1`.
    v1: crate::grid::Grid2,
}

fn restricted(mu: &Measure) -> Result<Restricted> {
    let c = co_hardy_field(mu)?;
    let v = c.clone().path_sums();
    let mut masked = c;
    for (x, &p) in masked.data_mut().iter_mut().zip(v.data()) {
        if p > 1.0 {
            *x = 0.0;
        }
    }
    let v1 = masked.clone().path_sums();
    Ok(Restricted { masked, v1 })
}

/// Builds `φ ≥ 0` with `𝕀φ > λ` on `E_{δ,λ}` and `‖φ‖² ≲ (δ/λ)E_δ[μ]`.
pub fn rearrange_2d(mu: &Measure, delta: f64, lambda: f64) -> Result<RearrangementOutput> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(CoreError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(lambda >= 9.0 * delta) {
        return Err(CoreError::InvalidParameter(format!("need lambda >= 9 delta, got {lambda} < 9*{delta}")));
    }
    let shape = mu.shape();
    if let Some((a, _)) = mu.iter().find(|(a, _)| !shape.is_leaf2(*a)) {
        return Err(CoreError::InvalidParameter(format!("{a:?} is not a boundary vertex")));
    }
    let scaled = mu.scaled(1.0 / delta);
    let lam = lambda / delta;
    let r = restricted(&scaled)?;
    let e_delta = delta * delta * r.masked.norm_sq();
    let exceed: Vec<Node2> = shape.leaves2().filter(|&w| r.v1.get(w) > lam).collect();

    let layers: Vec<(Layer, Vec<(Node2, f64)>)> = if exceed.is_empty() {
        vec![]
    } else {
        shape
            .nodes1()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|ay| layer(shape, &r, &exceed, ay, lam))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    };
    let mut pairs = Vec::new();
    let mut info = Vec::new();
    for (l, vals) in layers {
        info.push(l);
        pairs.extend(vals.into_iter().map(|(a, v)| (a, 1.5 * delta * v)));
    }
    let phi = SparseFunction::from_pairs(shape, pairs)?;
    let min_hardy = exceed.iter().map(|&w| hardy(&phi, w)).fold(f64::INFINITY, f64::min);
    let norm_sq = phi.norm_sq();
    let scale = delta * e_delta / lambda;
    let constant = if norm_sq > 0.0 { norm_sq / scale } else { 0.0 };
    Ok(RearrangementOutput {
        phi,
        layers: info,
        certificates: Certificates { exceedance: exceed.len(), min_hardy, norm_sq, scale, constant },
    })
}

/// A layer's summary and its contribution to `φ`.
type LayerPart = (Layer, Vec<(Node2, f64)>);

fn layer(
    shape: TreeShape,
    r: &Restricted,
    exceed: &[Node2],
    ay: Node1,
    lam: f64,
) -> Result<Option<LayerPart>> {
    let fr: BTreeSet<Node1> = exceed
        .iter()
        .filter(|w| w.y.is_under(&ay) && r.v1.get(Node2::new(w.x, ay)) > lam / 3.0)
        .map(|w| w.x)
        .collect();
    if fr.is_empty() {
        return Ok(None);
    }
    let f = Function1::from_pairs(
        shape,
        shape.nodes1().map(|ax| (ax, r.masked.get(Node2::new(ax, ay)))).filter(|(_, v)| *v > 0.0),
    )?;
    let out = rearrange_1d(shape, &fr, &f, 3.0 / lam)?;
    let phi = co_hardy_map(&out.sigma);
    let phi_norm_sq = phi.values().map(|v| v * v).sum();
    let vals = phi.into_iter().map(|(ax, v)| (Node2::new(ax, ay), v)).collect();
    Ok(Some((
        Layer { alpha_y: ay, width: fr.len(), f_norm_sq: f.norm_sq(), phi_norm_sq, constant_1d: out.constant },
        vals,
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxPrinciple {
    pub cap_e: f64,
    pub cap_e_lambda: f64,
    /// `λ³·cap E_λ / cap E`.
    pub ratio: f64,
    /// Leaves where `V^{μ_E} > λ`.
    pub exceedance: usize,
    pub max_potential: f64,
}

/// Capacity of the boundary points where the equilibrium potential of `E`
/// exceeds `λ`.
pub fn quantitative_max_principle(set: &NodeSet, lambda: f64, tol: f64) -> Result<MaxPrinciple> {
    if !(lambda > 1.0) {
        return Err(CoreError::InvalidParameter(format!("lambda must exceed 1, got {lambda}")));
    }
    let shape = set.shape();
    let eq = capacity(&CapacityProblem::new(set.clone()).with_tol(tol))?;
    if !(eq.cap > 0.0) {
        return Err(CoreError::InvalidParameter("cap E must be positive".into()));
    }
    let v = potential_field(&eq.equilibrium)?;
    let bad: Vec<Node2> = shape.leaves2().filter(|&w| v.get(w) > lambda).collect();
    let max_potential = v.leaf_values().map(|(_, x)| x).fold(0.0, f64::max);
    let cap_bad = if bad.is_empty() {
        0.0
    } else {
        capacity(&CapacityProblem::new(NodeSet::exact(shape, bad.iter().copied())?).with_tol(tol))?.cap
    };
    Ok(MaxPrinciple {
        cap_e: eq.cap,
        cap_e_lambda: cap_bad,
        ratio: lambda.powi(3) * cap_bad / eq.cap,
        exceedance: bad.len(),
        max_potential,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub delta: f64,
    pub e_delta: f64,
    /// `E_δ[μ] / (δ^{1/3} E[μ])`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyDecay {
    pub energy: f64,
    pub rows: Vec<DecayRow>,
    /// Smallest grid `δ` with `E − E_δ ≥ 0.9·E`, if any.
    pub witness: Option<f64>,
}

/// Restricted energies on a grid of `δ`, for `μ` with `V^μ ≥ 1` on its
/// support (up to `slack`).
pub fn energy_decay(mu: &Measure, deltas: &[f64], slack: f64) -> Result<EnergyDecay> {
    let c = co_hardy_field(mu)?;
    let v = c.clone().path_sums();
    for (a, _) in mu.iter() {
        if v.get(a) < 1.0 - slack {
            return Err(CoreError::Hypothesis(format!("V^mu({a:?}) = {} < 1 on supp mu", v.get(a))));
        }
    }
    let total = c.norm_sq();
    let mut rows = Vec::with_capacity(deltas.len());
    let mut witness: Option<f64> = None;
    for &d in deltas {
        if !(d > 0.0 && d <= 1.0) {
            return Err(CoreError::InvalidParameter(format!("delta must lie in (0, 1], got {d}")));
        }
        let e: f64 = c.data().iter().zip(v.data()).filter(|(_, &p)| p <= d).map(|(x, _)| x * x).sum();
        if total - e >= 0.9 * total {
            witness = Some(witness.map_or(d, |w: f64| w.max(d)));
        }
        rows.push(DecayRow { delta: d, e_delta: e, ratio: if total > 0.0 { e / (d.cbrt() * total) } else { 0.0 } });
    }
    Ok(EnergyDecay { energy: total, rows, witness })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(level: u32, pos: u64) -> Node1 {
        Node1::new(level, pos).unwrap()
    }

    #[test]
    fn one_dimensional_degenerate_cases() {
        let shape = TreeShape::new(1).unwrap();
        let both: BTreeSet<Node1> = shape.leaves1().collect();
        let zero = Function1::new(shape);
        let out = rearrange_1d(shape, &both, &zero, 1.0 / 3.0).unwrap();
        assert!(out.sigma.is_empty());
        let root = Function1::point(shape, Node1::ROOT, 1.0).unwrap();
        assert!(matches!(rearrange_1d(shape, &both, &root, 1.0 / 3.0), Err(CoreError::Hypothesis(_))));
        assert!(rearrange_1d(shape, &both, &zero, 0.4).is_err());
    }

    #[test]
    fn one_dimensional_far_support() {
        let shape = TreeShape::new(6).unwrap();
        let top = n(4, 5);
        let set: BTreeSet<Node1> = crate::nodeset::leaves_under(shape, top).collect();
        let rho = capacity_tree_exact(shape, &set).unwrap().equilibrium;
        let delta = 0.25;
        let f = Function1::from_pairs(
            shape,
            [n(0, 0), n(1, 1), n(2, 0), n(1, 0)].into_iter().filter(|&a| potential(&rho, a) <= delta).map(|a| (a, 0.7)),
        )
        .unwrap();
        assert!(!f.is_empty());
        let out = rearrange_1d(shape, &set, &f, delta).unwrap();
        assert!(out.min_excess >= -1e-12);
        for s in &out.stopping.nodes {
            assert!(s.potential > delta && s.potential <= 2.0 * delta + 1e-12);
        }
        let parts: f64 = out
            .stopping
            .nodes
            .iter()
            .map(|s| out.rho.iter().filter(|(w, _)| w.is_under(&s.node)).map(|(_, m)| m).sum::<f64>())
            .sum();
        assert!((parts - out.rho.total()).abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_vacuous_cases() {
        let shape = TreeShape::new(3).unwrap();
        let zero = Measure::new(shape);
        let out = rearrange_2d(&zero, 1.0, 9.0).unwrap();
        assert!(out.phi.is_empty());
        let w = Node2::new(n(3, 2), n(3, 7));
        let single = Measure::point(shape, w, 1.0 / 16.0).unwrap();
        let out = rearrange_2d(&single, 1.0, 9.0).unwrap();
        assert_eq!(out.certificates.exceedance, 0);
        assert!(rearrange_2d(&single, 1.0, 8.0).is_err());
    }

    #[test]
    fn staircase_exceedance() {
        let shape = TreeShape::new(3).unwrap();
        let pts = [Node2::new(n(3, 0), n(0, 0)), Node2::new(n(1, 0), n(1, 0)), Node2::new(n(0, 0), n(3, 0))];
        let set = NodeSet::exact(shape, pts).unwrap();
        let q = quantitative_max_principle(&set, 1.5, 1e-12).unwrap();
        assert!((q.cap_e - 5.0 / 12.0).abs() < 1e-10);
        assert!((q.max_potential - 5.0 / 3.0).abs() < 1e-9);
        assert_eq!(q.exceedance, 1);
        assert!((q.cap_e_lambda - 1.0 / 16.0).abs() < 1e-12);
        let q = quantitative_max_principle(&set, 2.0, 1e-12).unwrap();
        assert_eq!(q.ratio, 0.0);
    }

    #[test]
    fn decay_hand_case() {
        let shape = TreeShape::new(1).unwrap();
        let mu = Measure::point(shape, Node2::new(n(1, 0), n(1, 0)), 0.25).unwrap();
        let d = energy_decay(&mu, &[0.25, 0.5, 1.0], 0.0).unwrap();
        assert_eq!(d.energy, 0.25);
        assert_eq!(d.rows[0].e_delta, 1.0 / 16.0);
        assert!((d.rows[0].ratio - 0.0625 / 0.25 / 0.25f64.cbrt()).abs() < 1e-15);
        assert!(d.rows.windows(2).all(|w| w[0].e_delta <= w[1].e_delta));
        let root = Measure::point(shape, Node2::ROOT, 1.0).unwrap();
        assert_eq!(energy_decay(&root, &[0.5], 0.0).unwrap().rows[0].e_delta, 0.0);
    }
}
