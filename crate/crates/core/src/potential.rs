//! Hardy operators, potentials and energies.
//!
//! The sparse functions here work on either tree or bitree vertices and touch
//! only the ancestor closure of the data. The `*_field` variants evaluate on
//! every vertex at once through [`Grid2`] sweeps.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::grid::Grid2;
use crate::nodeset::NodeSet;
use crate::tree::{Node1, Node2, Vertex};
use crate::weights::{Function1, Measure, Measure1, NodeWeights, SparseFunction};

/// `𝕀φ(ζ) = Σ_{α ∈ P(ζ)} φ(α)`.
pub fn hardy<N: Vertex>(phi: &NodeWeights<N>, zeta: N) -> f64 {
    if phi.len() > zeta.ancestor_count() as usize {
        zeta.predecessors().iter().map(|a| phi.get(a)).sum()
    } else {
        phi.iter().filter(|(a, _)| zeta.is_under(a)).map(|(_, v)| v).sum()
    }
}

/// `𝕀*μ(β) = μ(S(β))`.
pub fn co_hardy<N: Vertex>(mu: &NodeWeights<N>, beta: N) -> f64 {
    mu.iter().filter(|(a, _)| a.is_under(&beta)).map(|(_, m)| m).sum()
}

/// `𝕀*μ` on the ancestor closure of `supp μ`; zero everywhere else.
pub fn co_hardy_map<N: Vertex>(mu: &NodeWeights<N>) -> BTreeMap<N, f64> {
    let mut out = BTreeMap::new();
    for (a, m) in mu.iter() {
        for p in a.predecessors() {
            *out.entry(p).or_insert(0.0) += m;
        }
    }
    out
}

/// `V^μ(α)` by the atom formula `Σ d(α ∧ a)·μ(a)`.
pub fn potential<N: Vertex>(mu: &NodeWeights<N>, alpha: N) -> f64 {
    mu.iter().map(|(a, m)| alpha.meet_count(&a) as f64 * m).sum()
}

/// `V^μ(α)` as the path sum of `𝕀*μ`.
pub fn potential_via_paths<N: Vertex>(mu: &NodeWeights<N>, alpha: N) -> f64 {
    alpha.predecessors().iter().map(|b| co_hardy(mu, *b)).sum()
}

pub fn potential_1d(mu: &NodeWeights<Node1>, alpha: Node1) -> f64 {
    potential(mu, alpha)
}

/// `E[μ, ν] = Σ_α 𝕀*μ(α)·𝕀*ν(α)`.
pub fn mutual_energy<N: Vertex>(mu: &NodeWeights<N>, nu: &NodeWeights<N>) -> f64 {
    let a = co_hardy_map(mu);
    let b = co_hardy_map(nu);
    a.iter().filter_map(|(n, x)| b.get(n).map(|y| x * y)).sum()
}

pub fn energy<N: Vertex>(mu: &NodeWeights<N>) -> f64 {
    co_hardy_map(mu).values().map(|v| v * v).sum()
}

/// `∫ V^μ dμ`, the second route to the energy.
pub fn energy_via_potential<N: Vertex>(mu: &NodeWeights<N>) -> f64 {
    mu.iter().map(|(a, m)| m * potential(mu, a)).sum()
}

/// `Σ_α f(α)·𝕀*μ(α)`, which equals `∫ 𝕀f dμ`.
pub fn pairing<N: Vertex>(f: &NodeWeights<N>, mu: &NodeWeights<N>) -> f64 {
    let c = co_hardy_map(mu);
    f.iter().map(|(a, v)| v * c.get(&a).copied().unwrap_or(0.0)).sum()
}

/// `(𝕀*_ν φ)(β) = Σ_{α ∈ S(β)} φ(α)·ν(α)`.
pub fn weighted_adjoint<N: Vertex>(phi: &NodeWeights<N>, nu: &NodeWeights<N>, beta: N) -> f64 {
    nu.iter().filter(|(a, _)| a.is_under(&beta)).map(|(a, m)| m * phi.get(&a)).sum()
}

/// `f(α) ≥ f(α⁺) + f(α⁻)` at every interior vertex, up to a relative `1e-12`
/// allowance for summation order.
pub fn superharmonic_check(f: &Function1) -> bool {
    let shape = f.shape();
    let parents: std::collections::BTreeSet<Node1> = f.support().filter_map(|n| n.parent()).collect();
    parents.into_iter().all(|p| {
        let c: f64 = p.children().iter().map(|c| f.get(c)).sum();
        debug_assert!(p.level() < shape.depth());
        f.get(&p) >= c * (1.0 - 1e-12)
    })
}

/// `𝕀*μ` on every vertex.
pub fn co_hardy_field(mu: &Measure) -> Result<Grid2> {
    Ok(Grid2::from_weights(mu)?.subtree_sums())
}

/// `V^μ` on every vertex.
pub fn potential_field(mu: &Measure) -> Result<Grid2> {
    Ok(co_hardy_field(mu)?.path_sums())
}

/// `𝕀φ` on every vertex.
pub fn hardy_field(phi: &SparseFunction) -> Result<Grid2> {
    Ok(Grid2::from_weights(phi)?.path_sums())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(CoreError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

/// `E^δ = {α : V^μ(α) ≤ δ}` as an exact vertex set.
pub fn level_set_edelta(mu: &Measure, delta: f64) -> Result<NodeSet> {
    check_delta(delta)?;
    let v = potential_field(mu)?;
    NodeSet::exact(mu.shape(), v.iter().filter(|(_, x)| *x <= delta).map(|(a, _)| a))
}

/// `V^μ_δ(α) = Σ_{β ∈ E^δ, β ≥ α} 𝕀*μ(β)`.
pub fn restricted_potential(mu: &Measure, delta: f64, alpha: Node2) -> Result<f64> {
    check_delta(delta)?;
    Ok(alpha
        .predecessors()
        .into_iter()
        .filter(|&b| potential(mu, b) <= delta)
        .map(|b| co_hardy(mu, b))
        .sum())
}

/// `V^μ_δ` on every vertex, together with the mask of `E^δ`.
pub fn restricted_potential_field(mu: &Measure, delta: f64) -> Result<(Grid2, Vec<bool>)> {
    check_delta(delta)?;
    let c = co_hardy_field(mu)?;
    let v = c.clone().path_sums();
    let mask: Vec<bool> = v.data().iter().map(|&x| x <= delta).collect();
    let mut r = c;
    for (x, &keep) in r.data_mut().iter_mut().zip(&mask) {
        if !keep {
            *x = 0.0;
        }
    }
    Ok((r.path_sums(), mask))
}

/// `E_δ[μ] = Σ_{α ∈ E^δ} (𝕀*μ(α))²`.
pub fn restricted_energy(mu: &Measure, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let c = co_hardy_field(mu)?;
    let v = c.clone().path_sums();
    Ok(c.data().iter().zip(v.data()).filter(|(_, &p)| p <= delta).map(|(x, _)| x * x).sum())
}

/// Result of the power iteration for `‖𝕀‖²_{ℓ² → L²(ν)}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceNorm {
    pub norm_sq: f64,
    pub iterations: usize,
}

/// Largest eigenvalue of `𝕀*_ν ∘ 𝕀` by power iteration from `𝕀*ν`.
///
/// Rayleigh quotients of the iterates increase monotonically toward the
/// answer, so the estimate is a lower bound at every step.
pub fn trace_norm_estimate(nu: &Measure, tol: f64, max_iters: usize) -> Result<TraceNorm> {
    if nu.is_empty() {
        return Err(CoreError::InvalidParameter("trace norm of the zero measure".into()));
    }
    let weights = Grid2::from_weights(nu)?;
    let mut x = weights.clone().subtree_sums();
    let scale = x.norm_sq().sqrt();
    x.data_mut().iter_mut().for_each(|v| *v /= scale);
    let mut last = 0.0;
    for it in 1..=max_iters {
        let mut y = x.clone().path_sums();
        for (v, w) in y.data_mut().iter_mut().zip(weights.data()) {
            *v *= w;
        }
        let y = y.subtree_sums();
        let rq = x.dot(&y) / x.norm_sq();
        let ny = y.norm_sq().sqrt();
        if ny == 0.0 {
            return Ok(TraceNorm { norm_sq: 0.0, iterations: it });
        }
        x = y;
        x.data_mut().iter_mut().for_each(|v| *v /= ny);
        if it > 1 && (rq - last).abs() <= tol * rq {
            return Ok(TraceNorm { norm_sq: rq, iterations: it });
        }
        last = rq;
    }
    Err(CoreError::NotConverged { iterations: max_iters, last })
}

/// Dense-field evaluation of `V^μ` at a list of vertices.
pub fn potential_at(mu: &Measure, nodes: &[Node2]) -> Result<Vec<f64>> {
    if mu.shape().depth() <= crate::grid::DENSE_LIMIT && nodes.len() > 64 {
        let v = potential_field(mu)?;
        Ok(nodes.iter().map(|&a| v.get(a)).collect())
    } else {
        Ok(nodes.iter().map(|&a| potential(mu, a)).collect())
    }
}

/// `sup_{T̄} V^μ − sup_{supp μ} V^μ` on a tree; never positive when the
/// maximum principle holds.
pub fn max_principle_gap_1d(mu: &Measure1) -> f64 {
    let shape = mu.shape();
    let everywhere = shape.nodes1().map(|a| potential(mu, a)).fold(0.0, f64::max);
    let on_support = mu.support().map(|a| potential(mu, a)).fold(0.0, f64::max);
    everywhere - on_support
}

/// `min_{T̄} (If − V^ν)` when `If ≥ V^ν` on `supp ν`, else `None`.
pub fn domination_margin_1d(f: &Function1, nu: &Measure1) -> Option<f64> {
    let shape = nu.shape();
    if nu.support().any(|a| hardy(f, a) < potential(nu, a)) {
        return None;
    }
    Some(shape.nodes1().map(|a| hardy(f, a) - potential(nu, a)).fold(f64::INFINITY, f64::min))
}
