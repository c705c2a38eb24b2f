//! Complex-affine maps `z ↦ a·z + b` and the real-affine cell charts
//! `z ↦ z + μ·z̄`.

use serde::{Deserialize, Serialize};

use crate::wire::complex_pair;
use crate::{Complex, Error, Result};

/// A complex-affine map `z ↦ a·z + b` with `a ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(with = "complex_pair")]
    pub a: Complex,
    #[serde(with = "complex_pair")]
    pub b: Complex,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        a: Complex::new(1.0, 0.0),
        b: Complex::new(0.0, 0.0),
    };

    pub fn new(a: Complex, b: Complex) -> Self {
        Affine { a, b }
    }

    /// The unique complex-affine map with `p1 ↦ q1` and `p2 ↦ q2`.
    pub fn from_two_points(p1: Complex, q1: Complex, p2: Complex, q2: Complex) -> Result<Affine> {
        let dp = p2 - p1;
        if dp.norm() == 0.0 {
            return Err(Error::DegenerateNormalization {
                first: p1,
                second: p2,
            });
        }
        let a = (q2 - q1) / dp;
        Ok(Affine { a, b: q1 - a * p1 })
    }

    #[inline]
    pub fn apply(&self, z: Complex) -> Complex {
        self.a * z + self.b
    }

    pub fn inverse(&self) -> Affine {
        let a = 1.0 / self.a;
        Affine { a, b: -self.b * a }
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Affine) -> Affine {
        Affine {
            a: self.a * other.a,
            b: self.a * other.b + self.b,
        }
    }

    /// Dilation factor `|a|`.
    pub fn dilation(&self) -> f64 {
        self.a.norm()
    }
}

/// The real-affine chart `z ↦ z + μ·z̄` attached to a cell with average `μ`.
///
/// It is orientation-preserving precisely when `|μ| < 1`, with Jacobian
/// determinant `1 − |μ|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellChart {
    #[serde(with = "complex_pair")]
    pub mu: Complex,
}

impl CellChart {
    pub fn new(mu: Complex) -> Self {
        CellChart { mu }
    }

    #[inline]
    pub fn apply(&self, z: Complex) -> Complex {
        z + self.mu * z.conj()
    }

    /// Inverse of `z ↦ z + μ·z̄`: `w ↦ (w − μ·w̄) / (1 − |μ|²)`.
    #[inline]
    pub fn invert(&self, w: Complex) -> Complex {
        (w - self.mu * w.conj()) / (1.0 - self.mu.norm_sqr())
    }

    pub fn jacobian_det(&self) -> f64 {
        1.0 - self.mu.norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cx;

    #[test]
    fn two_point_interpolation_round_trips() {
        let m = Affine::from_two_points(cx(1.0, 0.0), cx(0.0, 0.0), cx(3.0, 1.0), cx(1.0, 0.0))
            .unwrap();
        assert!((m.apply(cx(1.0, 0.0)) - cx(0.0, 0.0)).norm() < 1e-15);
        assert!((m.apply(cx(3.0, 1.0)) - cx(1.0, 0.0)).norm() < 1e-15);
        let back = m.inverse();
        let z = cx(0.3, -0.7);
        assert!((back.apply(m.apply(z)) - z).norm() < 1e-15);
    }

    #[test]
    fn composition_applies_right_to_left() {
        let f = Affine::new(cx(2.0, 0.0), cx(1.0, 0.0));
        let g = Affine::new(cx(0.0, 1.0), cx(0.0, 0.0));
        let fg = f.compose(&g);
        let z = cx(0.5, 0.25);
        assert!((fg.apply(z) - f.apply(g.apply(z))).norm() < 1e-15);
    }

    #[test]
    fn cell_chart_inverts() {
        let chart = CellChart::new(cx(0.3, -0.2));
        let z = cx(1.25, -0.5);
        assert!((chart.invert(chart.apply(z)) - z).norm() < 1e-14);
        assert!((chart.jacobian_det() - (1.0 - 0.13)).abs() < 1e-15);
    }
}
