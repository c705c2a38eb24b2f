//! Numeric conventions: guard radii, solver knobs, and quadrature tables.
//!
//! Every tolerance or magic number used by more than one routine lives here,
//! with a note on how it was chosen. Scale-dependent guards are expressed as
//! dimensionless factors multiplied by a local scale (`1 + |z|` for absolute
//! positions, the complex diameter for gluing data).

use std::sync::OnceLock;

/// Evaluating a symbol closer to a pole than `POLE_PROXIMITY_FACTOR · (1 + |z|)`
/// is refused: the 1/(z − z_k) term has lost all relative accuracy there.
pub const POLE_PROXIMITY_FACTOR: f64 = 1e-14;

/// Transport segments must stay `POLE_CLEARANCE_FACTOR · diameter` away from
/// every pole that is not a declared endpoint. The guard only rejects genuine
/// hits; grazing passes are handled by subdivision.
pub const POLE_CLEARANCE_FACTOR: f64 = 1e-9;

/// A geodesic is considered captured by a singularity when it enters the disk
/// of radius `CAPTURE_RADIUS_FACTOR · diameter`; inside it the ODE stiffens
/// beyond what step control can usefully resolve.
pub const CAPTURE_RADIUS_FACTOR: f64 = 1e-4;

/// Two poles closer than `COLLISION_RADIUS_FACTOR · diameter` abort a solve:
/// the parameter problem is about to degenerate and residuals become
/// meaningless.
pub const COLLISION_RADIUS_FACTOR: f64 = 1e-6;

/// Truncated symbols drop poles within `cell side / CUTOFF_DIVISOR` of a path
/// endpoint. One twentieth of a cell removes at most the endpoint's own
/// corner atoms without touching the next lattice site.
pub const CUTOFF_DIVISOR: f64 = 20.0;

/// Order (number of series coefficients past the leading term) carried by
/// normal forms. Eight terms keep the truncation error below quadrature
/// noise at the working radii.
pub const NORMAL_FORM_ORDER: usize = 8;

/// Forward-difference step factor for solver Jacobian columns:
/// `step = FD_STEP_FACTOR · (1 + |pole|)`. Balances truncation against
/// cancellation for residuals evaluated to ~1e-12.
pub const FD_STEP_FACTOR: f64 = 1e-7;

/// Initial Levenberg-Marquardt damping.
pub const LM_LAMBDA_INIT: f64 = 1e-3;

/// Damping is multiplied by this on a rejected step …
pub const LM_LAMBDA_INCREASE: f64 = 10.0;

/// … and by this on an accepted step.
pub const LM_LAMBDA_DECREASE: f64 = 0.1;

/// Damping is clamped to this range to avoid frozen or exploding steps.
pub const LM_LAMBDA_RANGE: (f64, f64) = (1e-14, 1e12);

/// Amplitude continuation halves its step on failure down to this minimum.
pub const CONTINUATION_MIN_STEP: f64 = 1.0 / 1024.0;

/// Default relative tolerance for developed-chart quadrature panels.
pub const DEVELOP_TOL: f64 = 1e-12;

/// Relative convergence threshold for Newton inversion of developed charts.
pub const NEWTON_TOL: f64 = 1e-13;

/// Iteration cap for Newton inversion.
pub const NEWTON_MAX_ITER: usize = 40;

/// Iteration cap for secant refinement in saddle-connection shooting.
pub const SHOOTING_MAX_ITER: usize = 60;

/// Angular × radial node counts for the polar sub-quadrature that handles the
/// singular cell of the limit-connection convolution.
pub const POLAR_ANGULAR_NODES: usize = 8;
/// See [`POLAR_ANGULAR_NODES`].
pub const POLAR_RADIAL_NODES: usize = 4;

/// Significant digits written to CSV / JSON number fields; 17 round-trips
/// every finite f64 exactly.
pub const CSV_SIG_DIGITS: usize = 17;

/// Gauss–Legendre rule on [-1, 1]: paired (node, weight) lists.
#[derive(Debug, Clone, Copy)]
pub struct GaussRule {
    pub nodes: &'static [f64],
    pub weights: &'static [f64],
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton iteration on P_n with Chebyshev-like initial guesses; standard
    // Golub-Welsch-free construction, accurate to machine precision.
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0_f64, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn leaked_rule(n: usize) -> GaussRule {
    let (nodes, weights) = legendre_rule(n);
    GaussRule {
        nodes: Box::leak(nodes.into_boxed_slice()),
        weights: Box::leak(weights.into_boxed_slice()),
    }
}

/// 4-point Gauss–Legendre rule (exact through degree 7) used for cell
/// averages and other tensor quadratures.
pub fn gauss4() -> GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    *RULE.get_or_init(|| leaked_rule(4))
}

/// 15-point Gauss–Legendre rule used for chart-development panels.
pub fn gauss15() -> GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    *RULE.get_or_init(|| leaked_rule(15))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss4_integrates_degree_seven_exactly() {
        let rule = gauss4();
        // ∫_{-1}^{1} x^6 dx = 2/7, degree 6 < 2·4 - 1.
        let val: f64 = rule
            .nodes
            .iter()
            .zip(rule.weights)
            .map(|(x, w)| w * x.powi(6))
            .sum();
        assert!((val - 2.0 / 7.0).abs() < 1e-15);
        // x^7 integrates to zero by symmetry.
        let odd: f64 = rule
            .nodes
            .iter()
            .zip(rule.weights)
            .map(|(x, w)| w * x.powi(7))
            .sum();
        assert!(odd.abs() < 1e-15);
    }

    #[test]
    fn gauss15_matches_known_values() {
        let rule = gauss15();
        assert_eq!(rule.nodes.len(), 15);
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        // Central node of an odd rule is zero; its weight is the known
        // 15-point value 0.2025782419255613.
        assert!(rule.nodes[7].abs() < 1e-15);
        assert!((rule.weights[7] - 0.202_578_241_925_561_3).abs() < 1e-13);
        // ∫ exp(x) over [-1,1] = e - 1/e to machine precision at this order.
        let val: f64 = rule
            .nodes
            .iter()
            .zip(rule.weights)
            .map(|(x, w)| w * x.exp())
            .sum();
        assert!((val - (1.0_f64.exp() - (-1.0_f64).exp())).abs() < 1e-14);
    }
}
