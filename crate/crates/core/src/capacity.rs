//! Capacities and equilibrium measures.
//!
//! `cap E = inf ‖φ‖²` over `φ ≥ 0` with `𝕀φ ≥ 1` on `E`. Because `𝕀φ` grows
//! toward the leaves, only the maximal elements of `E` constrain anything.
//! The dual problem lives on measures supported there; see [`crate::solver`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cells::CellProblem;
use crate::error::{CoreError, Result};
use crate::nodeset::{maximal_elements, NodeSet, SetKind};
use crate::potential::{co_hardy_map, energy, potential_at};
use crate::solver::{nnls_equilibrium, solve_dual, DualOptions, DualSolution, ExplicitGram, TreeSweepOperator};
use crate::tree::{MeetKernel, Node1, Node2, TreeShape};
use crate::weights::{Atom, Measure, Measure1, NodeWeights, SparseFunction};

/// Largest explicit kernel matrix formed by [`capacity`].
pub const GRAM_LIMIT: usize = 3000;

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityProblem {
    pub target: NodeSet,
    pub tol: f64,
    pub max_iters: usize,
}

impl CapacityProblem {
    pub fn new(target: NodeSet) -> Self {
        let d = DualOptions::default();
        CapacityProblem { target, tol: d.tol, max_iters: d.max_iters }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn options(&self) -> DualOptions {
        DualOptions { tol: self.tol, max_iters: self.max_iters, kkt_tol: (100.0 * self.tol).clamp(1e-10, 1e-6) }
    }
}

/// JSON form of a capacity problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProblemSpec {
    pub depth: u32,
    pub set: Vec<Node2>,
    #[serde(default)]
    pub kind: SetKind,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

impl CapacityProblemSpec {
    pub fn into_problem(self) -> Result<CapacityProblem> {
        let shape = TreeShape::new(self.depth)?;
        let mut p = CapacityProblem::new(NodeSet::new(shape, self.kind, self.set)?);
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(CoreError::InvalidParameter(format!("tol must be positive, got {t}")));
            }
            p.tol = t;
        }
        if let Some(m) = self.max_iters {
            p.max_iters = m;
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityResult {
    pub cap: f64,
    pub equilibrium: Measure,
    pub gap: f64,
    pub iterations: usize,
    pub certified: bool,
}

/// JSON form of a capacity result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityReport {
    pub cap: f64,
    pub equilibrium: Vec<Atom<Node2>>,
    pub gap: f64,
    pub iterations: usize,
    pub certified: bool,
}

impl CapacityResult {
    fn empty(shape: TreeShape) -> Self {
        CapacityResult { cap: 0.0, equilibrium: Measure::new(shape), gap: 0.0, iterations: 0, certified: true }
    }

    /// `φ* = 𝕀*μ_E`, the optimal admissible function up to the gap.
    pub fn primal(&self) -> SparseFunction {
        SparseFunction::from_pairs(self.equilibrium.shape(), co_hardy_map(&self.equilibrium))
            .expect("sums of valid masses")
    }

    pub fn report(&self) -> CapacityReport {
        CapacityReport {
            cap: self.cap,
            equilibrium: self.equilibrium.to_atoms(),
            gap: self.gap,
            iterations: self.iterations,
            certified: self.certified,
        }
    }
}

/// Which kernel representation the solver uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    /// Explicit meet-kernel matrix on the constraint vertices.
    Gram,
    /// Matrix-free tree sweeps on the constraint vertices.
    Sweep,
    /// Leaf-set reduction to uniform products of subtrees.
    Cells,
}

pub fn capacity(problem: &CapacityProblem) -> Result<CapacityResult> {
    capacity_with(problem, Method::Auto)
}

pub fn capacity_with(problem: &CapacityProblem, method: Method) -> Result<CapacityResult> {
    let set = &problem.target;
    let shape = set.shape();
    let targets = set.constraint_nodes();
    if targets.is_empty() {
        return Ok(CapacityResult::empty(shape));
    }
    let opts = problem.options();
    let all_leaves = targets.iter().all(|t| shape.is_leaf2(*t));
    let method = match method {
        Method::Auto if all_leaves && targets.len() > 16 => Method::Cells,
        Method::Auto if targets.len() <= GRAM_LIMIT => Method::Gram,
        Method::Auto => Method::Sweep,
        m => m,
    };
    if method == Method::Cells {
        if !all_leaves {
            return Err(CoreError::InvalidParameter("cell reduction needs a leaf set".into()));
        }
        let cells = if set.kind() == SetKind::Boundary {
            CellProblem::from_generators(shape, &set.generators())
        } else {
            CellProblem::from_leaves(shape, &targets.iter().copied().collect())
        };
        if cells.len() <= GRAM_LIMIT {
            let gram = ExplicitGram::from_fn(cells.len(), |i, j| cells.kernel(i, j));
            let sol = solve_dual(&gram, &opts)?;
            let equilibrium = cells.expand(&sol.weights)?;
            return Ok(finish(sol, equilibrium));
        }
        let op = TreeSweepOperator::new(shape, targets.clone())?;
        let sol = solve_dual(&op, &opts)?;
        let eq = Measure::from_pairs(shape, targets.iter().copied().zip(sol.weights.iter().copied()))?;
        return Ok(finish(sol, eq));
    }
    let sol = match method {
        Method::Sweep => solve_dual(&TreeSweepOperator::new(shape, targets.clone())?, &opts)?,
        _ => solve_dual(&ExplicitGram::from_points(&targets), &opts)?,
    };
    let eq = Measure::from_pairs(shape, targets.iter().copied().zip(sol.weights.iter().copied()))?;
    Ok(finish(sol, eq))
}

fn finish(sol: DualSolution, equilibrium: Measure) -> CapacityResult {
    CapacityResult { cap: sol.cap, equilibrium, gap: sol.gap, iterations: sol.iterations, certified: sol.certified }
}

/// Capacity of the down-closure of a few vertices, with default settings.
pub fn cap_of(shape: TreeShape, gens: &[Node2]) -> Result<f64> {
    Ok(capacity(&CapacityProblem::new(NodeSet::down_closure(shape, gens.iter().copied())?))?.cap)
}

/// Independent check of a capacity result against its target set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// `min V^μ` over the constraint vertices.
    pub min_potential: f64,
    /// `max |V^μ − 1|` over the support.
    pub support_deviation: f64,
    /// `|cap − |μ|| / cap`.
    pub mass_error: f64,
    /// `|cap − E[μ]| / cap`.
    pub energy_error: f64,
}

impl Certificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_potential >= 1.0 - tol
            && self.support_deviation <= tol
            && self.mass_error <= tol
            && self.energy_error <= tol
    }
}

/// Recomputes potentials with the tree sweeps (or the atom formula) rather
/// than with the solver's kernel.
pub fn certify(result: &CapacityResult, target: &NodeSet) -> Result<Certificate> {
    let mu = &result.equilibrium;
    let targets = target.constraint_nodes();
    if targets.is_empty() {
        return Ok(Certificate { min_potential: 1.0, support_deviation: 0.0, mass_error: 0.0, energy_error: 0.0 });
    }
    let v = potential_at(mu, &targets)?;
    let support: Vec<Node2> = mu.support().collect();
    let vs = potential_at(mu, &support)?;
    let cap = result.cap;
    Ok(Certificate {
        min_potential: v.iter().copied().fold(f64::INFINITY, f64::min),
        support_deviation: vs.iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max),
        mass_error: (cap - mu.total()).abs() / cap,
        energy_error: (cap - energy(mu)).abs() / cap,
    })
}

/// Exact one-dimensional capacity by the conductance recursion.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeCapacity {
    pub cap: f64,
    pub equilibrium: Measure1,
    /// Effective conductance below each vertex of the ancestor closure.
    pub conductance: BTreeMap<Node1, f64>,
}

pub fn capacity_tree_exact(shape: TreeShape, set: &BTreeSet<Node1>) -> Result<TreeCapacity> {
    for &n in set {
        shape.check1(n)?;
    }
    let gens: BTreeSet<Node1> = maximal_elements(set).into_iter().collect();
    let mut closure: BTreeSet<Node1> = BTreeSet::new();
    for g in &gens {
        closure.extend(g.predecessors());
    }
    let mut cond: BTreeMap<Node1, f64> = BTreeMap::new();
    let mut order: Vec<Node1> = closure.iter().copied().collect();
    order.sort_by(|a, b| b.level().cmp(&a.level()).then(a.pos().cmp(&b.pos())));
    for &n in &order {
        let c = if gens.contains(&n) {
            1.0
        } else {
            let s: f64 = n.children().iter().filter_map(|c| cond.get(c)).sum();
            s / (1.0 + s)
        };
        cond.insert(n, c);
    }
    let mut eq = Measure1::new(shape);
    let Some(&cap) = cond.get(&Node1::ROOT) else {
        return Ok(TreeCapacity { cap: 0.0, equilibrium: eq, conductance: cond });
    };
    let mut flow: HashMap<Node1, f64> = HashMap::new();
    flow.insert(Node1::ROOT, cap);
    order.reverse();
    for &n in &order {
        let f = flow[&n];
        if gens.contains(&n) {
            eq.add(n, f)?;
            continue;
        }
        let kids: Vec<(Node1, f64)> = n.children().iter().filter_map(|c| cond.get(c).map(|v| (*c, *v))).collect();
        let s: f64 = kids.iter().map(|k| k.1).sum();
        for (c, v) in kids {
            flow.insert(c, f * v / s);
        }
    }
    Ok(TreeCapacity { cap, equilibrium: eq, conductance: cond })
}

/// Capacity of a one-dimensional vertex set by the iterative dual solver.
pub fn capacity_1d(shape: TreeShape, set: &BTreeSet<Node1>, tol: f64) -> Result<(f64, Measure1, DualSolution)> {
    for &n in set {
        shape.check1(n)?;
    }
    let gens = maximal_elements(set);
    let opts = DualOptions { tol, ..DualOptions::default() };
    let sol = solve_dual(&ExplicitGram::from_points(&gens), &opts)?;
    let eq = NodeWeights::from_pairs(shape, gens.iter().copied().zip(sol.weights.iter().copied()))?;
    Ok((sol.cap, eq, sol))
}

/// A finite point set with its meet-kernel Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicProblem<P> {
    pub points: Vec<P>,
    pub gram: DMatrix<f64>,
}

impl<P: MeetKernel + Clone + Eq + Hash + std::fmt::Debug> AtomicProblem<P> {
    /// Repeated points are merged, with a warning.
    pub fn from_points(points: &[P]) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut unique = Vec::with_capacity(points.len());
        for p in points {
            if seen.insert(p.clone()) {
                unique.push(p.clone());
            } else {
                log::warn!("duplicate point {p:?} merged");
            }
        }
        let n = unique.len();
        let gram = DMatrix::from_fn(n, n, |i, j| unique[i].kernel(&unique[j]));
        AtomicProblem { points: unique, gram }
    }
}

/// Equilibrium weights of an atomic problem, solved in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicSolution {
    pub weights: Vec<f64>,
    pub potential: Vec<f64>,
    pub cap: f64,
}

pub fn solve_atomic(gram: &DMatrix<f64>) -> Result<AtomicSolution> {
    let n = gram.nrows();
    if n == 0 {
        return Ok(AtomicSolution { weights: vec![], potential: vec![], cap: 0.0 });
    }
    let s = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let normalized = gram / s;
    let x = nnls_equilibrium(&normalized)?;
    let weights: Vec<f64> = x.iter().map(|v| v / s).collect();
    let potential: Vec<f64> = (0..n).map(|i| (0..n).map(|j| normalized[(i, j)] * x[j]).sum()).collect();
    Ok(AtomicSolution { cap: weights.iter().sum(), weights, potential })
}

/// Capacity of finitely many bitree vertices by the active-set solver.
pub fn capacity_atomic(shape: TreeShape, points: &[Node2]) -> Result<CapacityResult> {
    for &p in points {
        shape.check2(p)?;
    }
    let problem = AtomicProblem::from_points(points);
    let sol = solve_atomic(&problem.gram)?;
    let eq = Measure::from_pairs(shape, problem.points.iter().copied().zip(sol.weights.iter().copied()))?;
    Ok(CapacityResult { cap: sol.cap, equilibrium: eq, gap: 0.0, iterations: 0, certified: true })
}

/// Dual-solver capacity of an arbitrary point list (deep vertices included).
pub fn dual_capacity_points<P: MeetKernel + Sync>(points: &[P], tol: f64) -> Result<DualSolution> {
    solve_dual(&ExplicitGram::from_points(points), &DualOptions { tol, ..DualOptions::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(level: u32, pos: u64) -> Node1 {
        Node1::new(level, pos).unwrap()
    }

    #[test]
    fn singleton() {
        let shape = TreeShape::new(1).unwrap();
        let aa = Node2::new(n(1, 0), n(1, 0));
        let r = capacity(&CapacityProblem::new(NodeSet::exact(shape, [aa]).unwrap())).unwrap();
        assert!((r.cap - 0.25).abs() < 1e-14);
        assert!(r.certified);
    }

    #[test]
    fn whole_bitree() {
        let shape = TreeShape::new(3).unwrap();
        let set = NodeSet::down_closure(shape, [Node2::ROOT]).unwrap();
        let r = capacity(&CapacityProblem::new(set)).unwrap();
        assert!((r.cap - 1.0).abs() < 1e-14);
        let phi = r.primal();
        assert_eq!(phi.len(), 1);
    }

    #[test]
    fn four_corners() {
        let shape = TreeShape::new(1).unwrap();
        let set = NodeSet::exact(shape, shape.leaves2()).unwrap();
        for m in [Method::Gram, Method::Sweep, Method::Cells] {
            let r = capacity_with(&CapacityProblem::new(set.clone()), m).unwrap();
            assert!((r.cap - 4.0 / 9.0).abs() < 1e-12, "{m:?}");
            for (_, w) in r.equilibrium.iter() {
                assert!((w - 1.0 / 9.0).abs() < 1e-12);
            }
            assert!(certify(&r, &set).unwrap().holds(1e-9));
        }
    }

    #[test]
    fn full_grid_formula() {
        for depth in 1..=5u32 {
            let shape = TreeShape::new(depth).unwrap();
            let set = NodeSet::boundary(shape, [Node2::ROOT]).unwrap();
            let r = capacity(&CapacityProblem::new(set)).unwrap();
            let k = 2f64.powi(depth as i32 + 1) - 1.0;
            let expect = 4f64.powi(depth as i32) / (k * k);
            assert!((r.cap - expect).abs() < 1e-12 * expect, "L={depth}: {} vs {expect}", r.cap);
        }
    }

    #[test]
    fn tree_exact_examples() {
        let shape = TreeShape::new(1).unwrap();
        let both: BTreeSet<Node1> = shape.leaves1().collect();
        let t = capacity_tree_exact(shape, &both).unwrap();
        assert!((t.cap - 2.0 / 3.0).abs() < 1e-15);
        for (_, m) in t.equilibrium.iter() {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        let shape = TreeShape::new(6).unwrap();
        let one: BTreeSet<Node1> = [n(6, 17)].into();
        assert!((capacity_tree_exact(shape, &one).unwrap().cap - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(capacity_tree_exact(shape, &BTreeSet::new()).unwrap().cap, 0.0);
    }

    #[test]
    fn atomic_staircase() {
        let shape = TreeShape::new(3).unwrap();
        let pts = [
            Node2::new(n(3, 0), n(0, 0)),
            Node2::new(n(1, 0), n(1, 0)),
            Node2::new(n(0, 0), n(3, 0)),
        ];
        let r = capacity_atomic(shape, &pts).unwrap();
        assert!((r.cap - 5.0 / 12.0).abs() < 1e-14);
        let mut rev = pts;
        rev.reverse();
        assert!((capacity_atomic(shape, &rev).unwrap().cap - r.cap).abs() < 1e-15);
        let g = capacity(&CapacityProblem::new(NodeSet::exact(shape, pts).unwrap())).unwrap();
        assert!((g.cap - r.cap).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let spec: CapacityProblemSpec =
            serde_json::from_str(r#"{"depth":1,"set":[{"x":[1,0],"y":[1,0]}],"tol":1e-9}"#).unwrap();
        let r = capacity(&spec.into_problem().unwrap()).unwrap();
        let json = serde_json::to_value(r.report()).unwrap();
        assert!((json["cap"].as_f64().unwrap() - 0.25).abs() < 1e-14);
        assert!(json["equilibrium"].is_array());
    }
}
