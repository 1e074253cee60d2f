//! Discrete bi-parameter potential theory on truncated dyadic trees.
//!
//! The bitree `T²` is the product of two dyadic trees of depth `L`; the
//! level-`L` vertices stand in for the boundary. Everything here is exact
//! arithmetic on that finite model: Hardy operators and potentials,
//! capacities with certified equilibrium measures, the level-set and
//! rearrangement machinery behind the strong capacitary inequality, the
//! staircase counterexamples, and a bridge from atoms on the closed bidisc.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod bridge;
pub mod capacity;
pub mod cells;
pub mod deep;
pub mod error;
pub mod gen;
pub mod graph;
pub mod grid;
pub mod nodeset;
pub mod potential;
pub mod rearrange;
pub mod sci;
pub mod solver;
pub mod staircase;
pub mod tree;
pub mod weights;

pub use error::{CoreError, Result};
pub use nodeset::{NodeSet, SetKind};
pub use tree::{Node1, Node2, TreeShape};
pub use weights::{Atom, Function1, Measure, Measure1, SparseFunction};
