//! Oracle-versus-main-path comparisons. Each check pits an independent
//! brute-force computation against the corresponding production routine.

use beltrami::christoffel::{ChristoffelSymbol, Pole};
use beltrami::fields::{average_field, AveragingTransform, BeltramiField, GridSpec};
use beltrami::gluing::{build_grid_complex, corner_monodromy, triangle_fixture};
use beltrami::transport::{parallel_transport, PolylinePath};
use beltrami::{cx, Complex};
use beltrami_oracles::{
    oracle_quadrant_model, oracle_quadrature_transport, oracle_residue_recovery,
    oracle_strip_solution, strip_constants, OracleReport,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TAU: f64 = std::f64::consts::TAU;

#[test]
fn transport_matches_simpson_on_random_symbols() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        // Five poles in the unit disk, zero-sum residues not required.
        let poles: Vec<Pole> = (0..5)
            .map(|_| Pole {
                position: cx(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)),
                residue: cx(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            })
            .collect();
        let sym = ChristoffelSymbol::with_implied_infinity(poles);
        // A three-leg path staying well clear of the disk.
        let path = PolylinePath {
            points: vec![cx(2.5, 0.0), cx(0.0, 2.5), cx(-2.5, 0.0), cx(0.0, -2.5)],
        };
        let main = parallel_transport(&sym, &path).unwrap().log_factor;
        let oracle = oracle_quadrature_transport(&sym, &path.points, 4_000);
        let report = OracleReport::new("transport log-factor", oracle, main);
        assert!(
            report.absolute_defect < 1e-8,
            "oracle {oracle} vs main {main}"
        );
    }
}

#[test]
fn residue_recovery_reproduces_triangle_values() {
    let (_, facts) = triangle_fixture();
    // Frozen closed forms: res_A/B = 7/24 − 1 ∓ i·ln√2/(2π), res_C = −7/12.
    let ln_sqrt2 = 0.5 * 2.0_f64.ln();
    let res_a = cx(7.0 / 24.0 - 1.0, -ln_sqrt2 / TAU);
    let res_b = cx(7.0 / 24.0 - 1.0, ln_sqrt2 / TAU);
    assert!((facts.res_a - res_a).norm() < 1e-15);
    assert!((facts.res_b - res_b).norm() < 1e-15);
    assert!((facts.res_c - cx(-7.0 / 12.0, 0.0)).norm() < 1e-15);

    // The uniformized symbol puts A at −1 and B at +1; the Cauchy-circle
    // oracle recovers the residues from the rational function alone.
    let sym = ChristoffelSymbol::with_implied_infinity(vec![
        Pole {
            position: cx(-1.0, 0.0),
            residue: facts.res_a,
        },
        Pole {
            position: cx(1.0, 0.0),
            residue: facts.res_b,
        },
    ]);
    assert!((sym.infinity_residue - facts.res_c).norm() < 1e-15);
    let recovered = oracle_residue_recovery(&sym, 0, 0.8, 64).unwrap();
    assert!(
        (recovered - res_a).norm() < 1e-12,
        "recovered {recovered} vs {res_a}"
    );
}

#[test]
fn residue_recovery_matches_grid_symbol() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let grid = GridSpec::new(1.0, 3);
    let values: Vec<Complex> = (0..grid.cell_count())
        .map(|_| cx(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
        .collect();
    let field = BeltramiField::GridSampled {
        grid,
        values: values.clone(),
    };
    let pw = average_field(&field, &grid, AveragingTransform::Identity).unwrap();
    let gc = build_grid_complex(&pw).unwrap();
    // Symbol at the initial (lattice) pole positions.
    let poles: Vec<Pole> = gc
        .corner_residues
        .iter()
        .enumerate()
        .map(|(k, &residue)| {
            let (i, j) = grid.corner_coords(k);
            Pole {
                position: grid.corner(i, j),
                residue,
            }
        })
        .collect();
    let sym = ChristoffelSymbol::with_implied_infinity(poles);
    // An interior corner with all four quadrants distinct.
    let index = grid.corner_index(1, 2);
    let recovered = oracle_residue_recovery(&sym, index, 0.2, 256).unwrap();
    let stored = sym.poles[index].residue;
    assert!(
        (recovered - stored).norm() < 1e-10,
        "recovered {recovered} vs stored {stored}"
    );
}

#[test]
fn quadrant_model_loop_reproduces_corner_monodromy() {
    let m = [cx(0.1, 0.0), cx(0.2, 0.0), cx(0.3, 0.0), cx(0.4, 0.0)];
    let (factor, _) = corner_monodromy(m);
    // Numeric loop transport under the model: unwrap log Φ along a small
    // anticlockwise circle and exponentiate the increment divided by the
    // closing exponent α (recomputed here from the model's own mismatch).
    let l = |v: Complex| (1.0 + v) / (1.0 - v);
    let tau = l(m[1]) * l(m[3]) / (l(m[0]) * l(m[2]));
    let alpha = cx(0.0, TAU) / (cx(0.0, TAU) + tau.ln());
    let samples = 2_000;
    let radius = 0.1;
    let mut log_phi: Vec<Complex> = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let z = Complex::from_polar(radius, TAU * k as f64 / samples as f64 + 0.05);
        let phi = oracle_quadrant_model(m, z);
        let mut angle = phi.arg();
        if let Some(prev) = log_phi.last() {
            angle += TAU * ((prev.im - angle) / TAU).round();
        }
        log_phi.push(cx(phi.norm().ln(), angle));
    }
    let increment = log_phi[samples] - log_phi[0];
    let loop_factor = (increment / alpha).exp();
    assert!(
        (loop_factor - factor).norm() < 1e-9,
        "loop factor {loop_factor} vs Λ {factor}"
    );
}

#[test]
fn strip_fixture_constants_come_out_of_the_generator() {
    let kappa = 0.5;
    let (k, k_coarse, k_averaged) = strip_constants(kappa);

    // K: the exact solution stretches odd strips by K = 3.
    let g = |x: f64| oracle_strip_solution(kappa, cx(x, 0.0)).re;
    assert!((g(2.0) - g(1.0) - k).abs() < 1e-14);

    // K' = 2: coarse-scale slope of the exact solution.
    assert!((g(8.0) / 8.0 - k_coarse).abs() < 1e-14);

    // K'' = 5/3: the naive cell average of μ over half-filled cells is κ/2,
    // whose dilatation differs from the true coarse constant...
    let field = BeltramiField::VerticalStrips { kappa };
    let grid = GridSpec::new(2.0, 2);
    let naive = average_field(&field, &grid, AveragingTransform::Identity).unwrap();
    for j in 0..2 {
        for i in 0..2 {
            let mu = naive.value(i, j);
            assert!((mu - cx(kappa / 2.0, 0.0)).norm() < 1e-12);
            let dil = (1.0 + mu.norm()) / (1.0 - mu.norm());
            assert!((dil - k_averaged).abs() < 1e-12);
        }
    }

    // ...while the half-plane-transform average recovers K' exactly.
    let transformed = average_field(&field, &grid, AveragingTransform::Cayley).unwrap();
    for j in 0..2 {
        for i in 0..2 {
            let mu = transformed.value(i, j);
            let dil = (1.0 + mu.norm()) / (1.0 - mu.norm());
            assert!((dil - k_coarse).abs() < 1e-12, "cell ({i},{j}): K = {dil}");
        }
    }
}
