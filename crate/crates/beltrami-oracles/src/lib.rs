//! Deliberately slow, simple reference computations used to cross-check the
//! main crate.
//!
//! Nothing here shares numerics with the main path: integration is composite
//! Simpson or plain trapezoid sums over explicit rational evaluation, and the
//! model maps are written out from first principles. The only dependency on
//! the main crate is its data types.

use beltrami::christoffel::ChristoffelSymbol;
use beltrami::{cx, Complex, Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// A named comparison between an oracle value and a main-path value.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub quantity: String,
    pub oracle: Complex,
    pub main: Complex,
    pub absolute_defect: f64,
    pub relative_defect: f64,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, oracle: Complex, main: Complex) -> Self {
        let absolute_defect = (oracle - main).norm();
        let scale = oracle.norm().max(main.norm());
        OracleReport {
            quantity: quantity.into(),
            oracle,
            main,
            absolute_defect,
            relative_defect: if scale == 0.0 {
                0.0
            } else {
                absolute_defect / scale
            },
        }
    }
}

/// Plain rational evaluation `Σ res/(z − pole)` (the oracle's own loop).
fn zeta(sym: &ChristoffelSymbol, z: Complex) -> Complex {
    sym.poles
        .iter()
        .map(|p| p.residue / (z - p.position))
        .sum()
}

/// Composite Simpson integration of `ζ` along a polyline, `panels` Simpson
/// panels (two subintervals each) per segment. No branch logic is needed: the
/// integrand is the single-valued rational `ζ` itself.
pub fn oracle_quadrature_transport(
    sym: &ChristoffelSymbol,
    path: &[Complex],
    panels: usize,
) -> Complex {
    let n = 2 * panels.max(1);
    let mut total = cx(0.0, 0.0);
    for seg in path.windows(2) {
        let step = (seg[1] - seg[0]) / n as f64;
        let mut acc = zeta(sym, seg[0]) + zeta(sym, seg[1]);
        for k in 1..n {
            let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += zeta(sym, seg[0] + step * k as f64) * weight;
        }
        total += acc * step / 3.0;
    }
    total
}

/// Trapezoid Cauchy integral `(1/2πi)∮ζ` over the circle of `radius` around
/// the indexed pole. Exact up to rounding once the circle separates the pole
/// from all others (the trapezoid rule is spectrally accurate on circles).
pub fn oracle_residue_recovery(
    sym: &ChristoffelSymbol,
    pole_index: usize,
    radius: f64,
    samples: usize,
) -> Result<Complex> {
    let center = sym.poles[pole_index].position;
    let guard = 1e-9 * (1.0 + radius + center.norm());
    for (j, p) in sym.poles.iter().enumerate() {
        if j == pole_index {
            continue;
        }
        let distance = (p.position - center).norm();
        if distance <= radius + guard {
            return Err(Error::PoleProximity {
                point: center,
                pole: p.position,
                distance,
                guard: radius + guard,
            });
        }
    }
    let mut acc = cx(0.0, 0.0);
    for k in 0..samples {
        let dir = Complex::from_polar(1.0, TAU * k as f64 / samples as f64);
        acc += zeta(sym, center + dir * radius) * dir;
    }
    Ok(acc * radius / samples as f64)
}

/// The explicit straightening of a constant-by-quadrant field around the
/// origin, quadrant values `(M₀ NE, M₁ NW, M₂ SW, M₃ SE)`.
///
/// Built from first principles: per-quadrant charts `z + M_k·z̄`; constants
/// `c_k` making consecutive charts agree along the half-axes (`c_0 = 1`); the
/// mismatch `τ` after a full turn; and the closing power `α = 2πi/(2πi +
/// log τ)` that turns the developed multi-sector into an honest punctured
/// disk. The logarithm branch follows the sector sequence continuously.
pub fn oracle_quadrant_model(m: [Complex; 4], z: Complex) -> Complex {
    let b = |k: usize, p: Complex| p + m[k] * p.conj();
    // Gluing constants along the +y, −x, −y half-axes.
    let c = [
        cx(1.0, 0.0),
        (1.0 - m[0]) / (1.0 - m[1]),
        (1.0 - m[0]) / (1.0 - m[1]) * ((1.0 + m[1]) / (1.0 + m[2])),
        (1.0 - m[0]) / (1.0 - m[1])
            * ((1.0 + m[1]) / (1.0 + m[2]))
            * ((1.0 - m[2]) / (1.0 - m[3])),
    ];
    // Mismatch after closing back across the +x half-axis.
    let tau = c[3] * (1.0 + m[3]) / (1.0 + m[0]);
    let alpha = cx(0.0, TAU) / (cx(0.0, TAU) + tau.ln());

    let quadrant = |p: Complex| -> usize {
        match (p.re >= 0.0, p.im >= 0.0) {
            (true, true) => 0,
            (false, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        }
    };
    let lift = |angle: f64, near: f64| angle + TAU * ((near - angle) / TAU).round();
    // Continuous reference angles: image of each quadrant's bisector, lifted
    // to advance by roughly a quarter turn per sector.
    let mut refs = [0.0; 4];
    for k in 0..4 {
        let bis = Complex::from_polar(1.0, (2 * k + 1) as f64 * TAU / 8.0);
        let image = c[k] * b(k, bis);
        refs[k] = if k == 0 {
            image.arg()
        } else {
            lift(image.arg(), refs[k - 1] + TAU / 4.0)
        };
    }
    let k = quadrant(z);
    let w = c[k] * b(k, z);
    let log_w = cx(w.norm().ln(), lift(w.arg(), refs[k]));
    (alpha * log_w).exp()
}

/// Exact straightening of the strip field (`μ = κ` on `2n+1 ≤ x < 2n+2`,
/// zero on the even strips): `f(x + iy) = g(x) + iy` with `g(0) = 0`,
/// `g' = 1` on even strips and `g' = K = (1+κ)/(1−κ)` on odd ones, integrated
/// one integer cell at a time.
pub fn oracle_strip_solution(kappa: f64, point: Complex) -> Complex {
    let big_k = (1.0 + kappa) / (1.0 - kappa);
    let slope = |cell: f64| {
        if (cell as i64).rem_euclid(2) == 1 {
            big_k
        } else {
            1.0
        }
    };
    let x = point.re;
    let mut g = 0.0;
    if x >= 0.0 {
        let mut pos = 0.0_f64;
        while pos < x {
            let next = (pos.floor() + 1.0).min(x);
            g += slope(pos.floor()) * (next - pos);
            pos = next;
        }
    } else {
        let mut pos = 0.0_f64;
        while pos > x {
            let next = (pos.ceil() - 1.0).max(x);
            g -= slope(next.floor()) * (pos - next);
            pos = next;
        }
    }
    cx(g, point.im)
}

/// The three dilatation constants of the `κ = 1/2` strip fixture: the strip
/// value `K`, the coarse-scale slope `K' = g(2n)/(2n)`, and the dilatation
/// `K''` of the naive half-cell average `κ/2` (which differs from `K'` — the
/// reason cell averaging runs through the half-plane transform).
pub fn strip_constants(kappa: f64) -> (f64, f64, f64) {
    let big_k = (1.0 + kappa) / (1.0 - kappa);
    let coarse = (1.0 + big_k) / 2.0;
    let averaged = (1.0 + kappa / 2.0) / (1.0 - kappa / 2.0);
    (big_k, coarse, averaged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use beltrami::christoffel::Pole;

    fn single_pole(position: Complex, residue: Complex) -> ChristoffelSymbol {
        ChristoffelSymbol::with_implied_infinity(vec![Pole { position, residue }])
    }

    #[test]
    fn report_defects_are_consistent() {
        let report = OracleReport::new("q", cx(1.0, 0.0), cx(1.0, 1e-3));
        assert!((report.absolute_defect - 1e-3).abs() < 1e-12);
        assert!(report.relative_defect <= 1e-3 && report.relative_defect > 9e-4);
    }

    #[test]
    fn simpson_loop_recovers_residue_theorem() {
        let res = cx(0.3, -0.7);
        let p = cx(0.3, 0.2);
        let sym = single_pole(p, res);
        let loop_path = [
            p + cx(0.5, 0.5),
            p + cx(-0.5, 0.5),
            p + cx(-0.5, -0.5),
            p + cx(0.5, -0.5),
            p + cx(0.5, 0.5),
        ];
        let value = oracle_quadrature_transport(&sym, &loop_path, 10_000);
        let expected = cx(0.0, TAU) * res;
        assert!((value - expected).norm() < 1e-8, "loop integral {value}");
    }

    #[test]
    fn simpson_segment_matches_logarithm() {
        let res = cx(1.25, 0.5);
        let sym = single_pole(cx(0.0, 0.0), res);
        let value = oracle_quadrature_transport(&sym, &[cx(1.0, 0.0), cx(2.0, 0.0)], 2_000);
        let expected = res * 2.0_f64.ln();
        assert!((value - expected).norm() < 1e-12, "segment integral {value}");
    }

    #[test]
    fn trapezoid_recovers_single_pole_residue() {
        let res = cx(-0.4, 0.9);
        let sym = single_pole(cx(1.0, -2.0), res);
        let value = oracle_residue_recovery(&sym, 0, 0.7, 64).unwrap();
        assert!((value - res).norm() < 1e-12, "recovered {value}");
    }

    #[test]
    fn recovery_rejects_circle_through_other_pole() {
        let sym = ChristoffelSymbol::with_implied_infinity(vec![
            Pole {
                position: cx(0.0, 0.0),
                residue: cx(0.5, 0.0),
            },
            Pole {
                position: cx(0.5, 0.0),
                residue: cx(-0.5, 0.0),
            },
        ]);
        assert!(oracle_residue_recovery(&sym, 0, 0.6, 64).is_err());
    }

    #[test]
    fn quadrant_model_is_identity_for_zero_field() {
        let m = [cx(0.0, 0.0); 4];
        for &z in &[cx(0.3, 0.4), cx(-0.2, 0.5), cx(-0.1, -0.1), cx(0.4, -0.3)] {
            let w = oracle_quadrant_model(m, z);
            assert!((w - z).norm() < 1e-14, "Φ({z}) = {w}");
        }
    }

    #[test]
    fn quadrant_model_with_equal_values_is_a_single_chart() {
        let mu = cx(0.2, -0.1);
        let m = [mu; 4];
        for &z in &[cx(0.3, 0.4), cx(-0.2, 0.5), cx(-0.1, -0.1), cx(0.4, -0.3)] {
            let w = oracle_quadrant_model(m, z);
            let expected = z + mu * z.conj();
            assert!((w - expected).norm() < 1e-14, "Φ({z}) = {w}");
        }
    }

    #[test]
    fn strip_solution_closed_forms() {
        // κ = 0: identity.
        for &z in &[cx(0.7, -0.4), cx(-2.3, 1.0)] {
            assert!((oracle_strip_solution(0.0, z) - z).norm() < 1e-15);
        }
        // κ = 1/2: unit increment on the even strip, K = 3 on the odd one.
        let g = |x: f64| oracle_strip_solution(0.5, cx(x, 0.0)).re;
        assert!((g(1.0) - g(0.0) - 1.0).abs() < 1e-15);
        assert!((g(2.0) - g(1.0) - 3.0).abs() < 1e-15);
        // Coarse-scale slope K' = 2 over whole periods, both directions.
        for n in [1_i32, 3, 7, -2, -5] {
            let x = 2.0 * n as f64;
            assert!((g(x) / x - 2.0).abs() < 1e-14, "g({x})/{x}");
        }
        // Fixture constants.
        let (k, k1, k2) = strip_constants(0.5);
        assert_eq!(k, 3.0);
        assert_eq!(k1, 2.0);
        assert!((k2 - 5.0 / 3.0).abs() < 1e-15);
    }
}
