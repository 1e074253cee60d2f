//! Staircase configurations on which the maximum and domination principles
//! fail.
//!
//! The points `α^0, …, α^n` lie on the geodesics to one boundary point `ω`
//! with `d_T(α^i_x) = b^{n−i}` and `d_T(α^i_y) = b^i`. Every point has
//! `d_{T²}(α^i) = k = b^n`, and `d_{T²}(α^i ∧ α^j) = k·b^{−|i−j|}`, so in
//! units of `k` the kernel matrix is the Toeplitz matrix `b^{−|i−j|}` and the
//! depths never need to be materialized.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::solve_atomic;
use crate::deep::{DeepNode1, DeepNode2};
use crate::error::{CoreError, Result};
use crate::tree::{Node1, Node2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaircaseConfig {
    pub base: u32,
    pub steps: u32,
}

impl StaircaseConfig {
    pub fn new(base: u32, steps: u32) -> Result<Self> {
        if base < 2 {
            return Err(CoreError::InvalidParameter(format!("base must be at least 2, got {base}")));
        }
        if steps == 0 {
            return Err(CoreError::InvalidParameter("steps must be positive".into()));
        }
        Ok(StaircaseConfig { base, steps })
    }

    /// `k = b^n`, exactly.
    pub fn k(&self) -> BigUint {
        BigUint::from(self.base).pow(self.steps)
    }

    pub fn points(&self) -> usize {
        self.steps as usize + 1
    }

    /// `d_{T²}(α^i ∧ α^j) / k`.
    pub fn normalized_gram(&self) -> DMatrix<f64> {
        let b = self.base as f64;
        let n = self.points();
        DMatrix::from_fn(n, n, |i, j| b.powi(-(i.abs_diff(j) as i32)))
    }

    /// Largest row sum of the off-diagonal kernel, over `k`, in exact arithmetic.
    pub fn offdiag_row_max(&self) -> BigRational {
        let b = BigRational::from_integer(self.base.into());
        let n = self.points();
        let mut best = BigRational::zero();
        for i in 0..n {
            let mut s = BigRational::zero();
            for j in 0..n {
                if j != i {
                    s += BigRational::one() / num_traits::pow(b.clone(), i.abs_diff(j));
                }
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    /// The points as shallow vertices, when `k − 1` fits in a [`Node1`] level.
    pub fn shallow_points(&self) -> Option<Vec<Node2>> {
        let k = self.k().to_u32()?;
        if k - 1 > crate::tree::MAX_DEPTH {
            return None;
        }
        let b = self.base;
        Some(
            (0..=self.steps)
                .map(|i| {
                    let lx = b.pow(self.steps - i) - 1;
                    let ly = b.pow(i) - 1;
                    Node2::new(Node1::new(lx, 0).unwrap(), Node1::new(ly, 0).unwrap())
                })
                .collect(),
        )
    }

    /// The points as explicit deep paths following `anchor`, when `k` is at
    /// most `max_level`.
    pub fn deep_points(&self, anchor: &(DeepNode1, DeepNode1), max_level: u64) -> Option<Vec<DeepNode2>> {
        let k = self.k().to_u64()?;
        if k > max_level || anchor.0.level() < k - 1 || anchor.1.level() < k - 1 {
            return None;
        }
        let b = self.base as u64;
        Some(
            (0..=self.steps)
                .map(|i| {
                    let lx = b.pow(self.steps - i) - 1;
                    let ly = b.pow(i) - 1;
                    DeepNode2::new(anchor.0.truncate(lx), anchor.1.truncate(ly))
                })
                .collect(),
        )
    }

    /// A random boundary anchor deep enough for [`Self::deep_points`].
    pub fn random_anchor<R: Rng>(&self, rng: &mut R) -> Option<(DeepNode1, DeepNode1)> {
        let k = self.k().to_u64()?;
        Some((DeepNode1::random(k - 1, rng), DeepNode1::random(k - 1, rng)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Staircase {
    pub config: StaircaseConfig,
    /// `k` in decimal.
    pub k: String,
    /// `k·μ(α^i)`.
    pub weights: Vec<f64>,
    /// `k·cap E`.
    pub cap_normalized: f64,
    /// `V^μ(α^i)`.
    pub v_on_support: Vec<f64>,
    /// `V^μ(ω) = k·|μ|`.
    pub v_at_omega: f64,
    /// `sup_i μ(α^i) / inf_i μ(α^i)`.
    pub sup_inf_ratio: f64,
    /// Largest off-diagonal kernel row sum over `k`.
    pub offdiag_row_max: f64,
    /// Whether that row sum is at most `1/9`, decided exactly.
    pub offdiag_within_ninth: bool,
}

/// Equilibrium of the staircase by the active-set solver in units of `k`.
pub fn build_staircase(config: StaircaseConfig) -> Result<Staircase> {
    let g = config.normalized_gram();
    let sol = solve_atomic(&g)?;
    let x = sol.weights;
    let v_on_support: Vec<f64> = (0..x.len()).map(|i| (0..x.len()).map(|j| g[(i, j)] * x[j]).sum()).collect();
    let max = x.iter().copied().fold(0.0, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let off = config.offdiag_row_max();
    let ninth = BigRational::new(1.into(), 9.into());
    Ok(Staircase {
        config,
        k: config.k().to_string(),
        cap_normalized: x.iter().sum(),
        v_at_omega: x.iter().sum(),
        sup_inf_ratio: if min > 0.0 { max / min } else { f64::INFINITY },
        offdiag_row_max: off.to_f64().unwrap_or(f64::NAN),
        offdiag_within_ninth: off <= ninth,
        weights: x,
        v_on_support,
    })
}

/// A pair `μ`, `ν = δ_{root²}` with `V^ν ≥ V^μ` on `supp μ` but
/// `sup V^μ ≥ λ·sup V^ν`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationFailure {
    pub staircase: Staircase,
    /// `V^ν`, identically 1.
    pub nu_potential: f64,
    /// `max V^μ` on `supp μ`.
    pub mu_on_support: f64,
    /// `V^μ(ω)` at the witness `ω`.
    pub witness_value: f64,
}

/// Smallest base-2 staircase whose potential at `ω` reaches `λ`.
pub fn domination_failure(lambda: f64) -> Result<DominationFailure> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(CoreError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut steps = 1;
    loop {
        let s = build_staircase(StaircaseConfig::new(2, steps)?)?;
        let sup_support = s.v_on_support.iter().copied().fold(0.0, f64::max);
        if s.v_at_omega >= lambda && s.v_at_omega > sup_support {
            return Ok(DominationFailure {
                nu_potential: 1.0,
                mu_on_support: sup_support,
                witness_value: s.v_at_omega,
                staircase: s,
            });
        }
        steps += 1;
        if steps > 100_000 {
            return Err(CoreError::Numerical("staircase search did not reach lambda".into()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::potential;
    use crate::tree::{MeetKernel, TreeShape};
    use crate::weights::Measure;

    #[test]
    fn base_two_hand_case() {
        let s = build_staircase(StaircaseConfig::new(2, 2).unwrap()).unwrap();
        let expect = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (w, e) in s.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14);
        }
        assert!((s.cap_normalized / 4.0 - 5.0 / 12.0).abs() < 1e-14);
        assert!((s.v_at_omega - 5.0 / 3.0).abs() < 1e-14);
        assert!(!s.offdiag_within_ninth);
    }

    #[test]
    fn base_twenty_grows_linearly() {
        for n in [10, 20, 40] {
            let s = build_staircase(StaircaseConfig::new(20, n).unwrap()).unwrap();
            assert!(s.v_at_omega / n as f64 >= 9.0 / 50.0, "n = {n}: V(ω) = {}", s.v_at_omega);
            assert!(s.offdiag_within_ninth);
            assert!(s.v_on_support.iter().all(|v| (v - 1.0).abs() < 1e-9));
        }
    }

    #[test]
    fn shallow_points_match_gram() {
        let c = StaircaseConfig::new(2, 2).unwrap();
        let pts = c.shallow_points().unwrap();
        let shape = TreeShape::new(3).unwrap();
        let g = c.normalized_gram();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(pts[i].kernel(&pts[j]) / 4.0, g[(i, j)]);
            }
        }
        let s = build_staircase(c).unwrap();
        let mu = Measure::from_pairs(shape, pts.iter().copied().zip(s.weights.iter().map(|w| w / 4.0))).unwrap();
        let omega = Node2::new(Node1::new(3, 0).unwrap(), Node1::new(3, 0).unwrap());
        assert!((potential(&mu, omega) - s.v_at_omega).abs() < 1e-14);
    }

    #[test]
    fn deep_anchor_is_immaterial() {
        let c = StaircaseConfig::new(3, 4).unwrap();
        let g = c.normalized_gram();
        let mut rng = crate::gen::rng(5);
        for _ in 0..3 {
            let anchor = c.random_anchor(&mut rng).unwrap();
            let pts = c.deep_points(&anchor, 1 << 20).unwrap();
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    assert!((pts[i].kernel(&pts[j]) / 81.0 - g[(i, j)]).abs() < 1e-15);
                }
            }
        }
    }
}
