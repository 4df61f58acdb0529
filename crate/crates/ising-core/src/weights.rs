//! Ising weights `x_e = exp(-2βJ_e) = tan(θ_e / 2)`.

use crate::error::{Error, Result};
use crate::planar_map::{EdgeKind, PlanarMap};
use std::f64::consts::FRAC_PI_2;

/// The critical homogeneous weight on the square lattice, `tan(π/8)`.
pub const X_CRIT_SQUARE: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Per-edge weights of G. Edges on free arcs always carry `x = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingWeights {
    x: Vec<f64>,
}

impl IsingWeights {
    /// Weights for `map`; values given on free edges are overridden by 1.
    pub fn new(map: &PlanarMap, x: Vec<f64>) -> Result<Self> {
        if x.len() != map.num_edges() {
            return Err(Error::Input(format!("{} weights for {} edges", x.len(), map.num_edges())));
        }
        let mut x = x;
        for (e, w) in x.iter_mut().enumerate() {
            if map.edge_kind(e) == EdgeKind::Free {
                *w = 1.0;
            } else if !(0.0..=1.0).contains(w) || !w.is_finite() {
                return Err(Error::Input(format!("weight {w} of edge {e} is outside [0, 1]")));
            }
        }
        Ok(IsingWeights { x })
    }

    pub fn uniform(map: &PlanarMap, x: f64) -> Result<Self> {
        Self::new(map, vec![x; map.num_edges()])
    }

    pub fn from_theta(map: &PlanarMap, theta: &[f64]) -> Result<Self> {
        Self::new(map, theta.iter().map(|t| (t / 2.0).tan()).collect())
    }

    /// Weights from couplings: `x_e = exp(-2 β J_e)`.
    pub fn from_couplings(map: &PlanarMap, beta: f64, j: &[f64]) -> Result<Self> {
        Self::new(map, j.iter().map(|j| (-2.0 * beta * j).exp()).collect())
    }

    pub fn x(&self, e: usize) -> f64 {
        self.x[e]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }
    pub fn len(&self) -> usize {
        self.x.len()
    }
    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
    pub fn theta(&self, e: usize) -> f64 {
        theta_of(self.x[e])
    }
    pub fn thetas(&self) -> Vec<f64> {
        self.x.iter().map(|&x| theta_of(x)).collect()
    }
    /// `θ•_e = π/2 − θ_e`
    pub fn dual_theta(&self, e: usize) -> f64 {
        FRAC_PI_2 - self.theta(e)
    }
    /// Weights of the dual model, `x• = tan(θ•/2) = (1 − x)/(1 + x)`.
    pub fn dual_x(&self, e: usize) -> f64 {
        (1.0 - self.x[e]) / (1.0 + self.x[e])
    }
    /// `βJ_e = −½ log x_e`
    pub fn beta_j(&self, e: usize) -> f64 {
        -0.5 * self.x[e].ln()
    }
}

pub fn theta_of(x: f64) -> f64 {
    2.0 * x.atan()
}

pub fn x_of(theta: f64) -> f64 {
    (theta / 2.0).tan()
}

/// Critical inverse temperature of the homogeneous square lattice with `J = 1`.
pub fn beta_crit_square() -> f64 {
    -0.5 * X_CRIT_SQUARE.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn critical_constants() {
        assert!((X_CRIT_SQUARE - 0.41421356237309503).abs() < 1e-15);
        assert!((theta_of(X_CRIT_SQUARE) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((beta_crit_square() - 0.44068679350977147).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn theta_round_trip(x in 0.0f64..=1.0) {
            prop_assert!((x_of(theta_of(x)) - x).abs() < 1e-12);
        }

        #[test]
        fn dual_parameter(x in 0.0f64..=1.0) {
            let t = theta_of(x);
            let xd = (1.0 - x) / (1.0 + x);
            prop_assert!((theta_of(xd) - (FRAC_PI_2 - t)).abs() < 1e-12);
        }
    }
}
