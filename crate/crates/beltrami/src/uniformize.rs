//! The accessory-parameter problem and the straightening map it produces.
//!
//! A glued grid complex prescribes, for every face, the polygon the face must
//! develop onto (its deformed cell, or the undeformed square ring for the
//! exterior). The free data is the position of every pole of the rational
//! symbol; residues are fixed by the vertex cycles. This module places the
//! poles so that, for each face, developing the symbol from an interior
//! basepoint to the face's corner poles reproduces the prescribed polygon up
//! to a complex-affine map, then packages the result as an invertible
//! piecewise map of the plane.
//!
//! Residuals compare affinely normalized corner configurations: each face's
//! resting values and target corners are both mapped so the first two finite
//! corners land on 0 and 1, and the remaining entries are compared. This
//! makes the residual exactly invariant under the germ and basepoint choices,
//! so basepoints may move with the poles without contributing derivative
//! terms.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::affine::Affine;
use crate::christoffel::{ChristoffelSymbol, Pole};
use crate::defaults::{self, gauss15};
use crate::fields::PiecewiseField;
use crate::gluing::{boundary_loop, build_grid_complex, GridComplex};
use crate::transport::{develop_chart, develop_to_infinity, log_increments, ChartGerm};
use crate::wire::complex_list;
use crate::{cx, Complex, Error, Result};

/// A corner of a face: either a finite pole (by index into the symbol's pole
/// list) or the point at infinity, approached along a ray from the face
/// basepoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CornerRef {
    Finite(usize),
    Infinity { ray: Complex },
}

/// One face of the parameter problem: its corners in boundary order and the
/// polygon vertices they must develop onto (always finite points).
#[derive(Debug, Clone)]
pub struct FaceSpec {
    pub corners: Vec<CornerRef>,
    pub targets: Vec<Complex>,
    /// Development basepoint; `None` means the centroid of the finite corner
    /// poles, recomputed at the current positions.
    pub basepoint: Option<Complex>,
    /// Walk the corners along an offset ring (used by the exterior face,
    /// whose basepoint cannot see its corners along straight segments).
    pub ring: bool,
}

impl FaceSpec {
    /// Indices of the two corners used to normalize configurations: the
    /// first two finite corners in boundary order.
    pub fn anchors(&self) -> Result<(usize, usize)> {
        let mut found = Vec::with_capacity(2);
        for (i, c) in self.corners.iter().enumerate() {
            if matches!(c, CornerRef::Finite(_)) {
                found.push(i);
                if found.len() == 2 {
                    return Ok((found[0], found[1]));
                }
            }
        }
        Err(Error::InvalidInput(
            "face needs at least two finite corners to normalize".into(),
        ))
    }

    /// Targets mapped so the anchor corners land on 0 and 1.
    pub fn normalized_targets(&self) -> Result<Vec<Complex>> {
        let (a, b) = self.anchors()?;
        normalize_config(&self.targets, a, b)
    }
}

/// Affinely normalizes `values` so entries `a` and `b` land on 0 and 1.
fn normalize_config(values: &[Complex], a: usize, b: usize) -> Result<Vec<Complex>> {
    let denom = values[b] - values[a];
    if denom.norm() < 1e-12 * (1.0 + values[a].norm()) {
        return Err(Error::DegenerateNormalization {
            first: values[a],
            second: values[b],
        });
    }
    Ok(values.iter().map(|v| (v - values[a]) / denom).collect())
}

/// The accessory-parameter problem: fixed residues, face prescriptions,
/// pinned poles (gauge), and an initial position guess.
#[derive(Debug, Clone)]
pub struct ParameterProblem {
    /// Residue of each pole slot (zero residues are legal and stay in the
    /// slot list so corner indices remain stable).
    pub residues: Vec<Complex>,
    pub faces: Vec<FaceSpec>,
    /// `(pole index, fixed position)`: gauge-fixing choices removed from the
    /// unknown vector.
    pub pinned: Vec<(usize, Complex)>,
    /// Initial positions for every pole slot (pinned ones included).
    pub initial: Vec<Complex>,
}

impl ParameterProblem {
    /// Pole indices that are solved for, in ascending order.
    pub fn unknowns(&self) -> Vec<usize> {
        (0..self.residues.len())
            .filter(|k| !self.pinned.iter().any(|(p, _)| p == k))
            .collect()
    }

    /// Full position vector from unknown values plus pinned entries.
    pub fn positions_from(&self, unknown_values: &[Complex]) -> Vec<Complex> {
        let unknowns = self.unknowns();
        let mut positions = self.initial.clone();
        for (&k, &v) in unknowns.iter().zip(unknown_values) {
            positions[k] = v;
        }
        for &(k, v) in &self.pinned {
            positions[k] = v;
        }
        positions
    }

    /// The symbol at the given positions; the infinity residue is implied so
    /// the sphere ledger closes exactly.
    pub fn symbol(&self, positions: &[Complex]) -> ChristoffelSymbol {
        let poles = positions
            .iter()
            .zip(&self.residues)
            .map(|(&position, &residue)| Pole { position, residue })
            .collect();
        ChristoffelSymbol::with_implied_infinity(poles)
    }
}

/// Builds the parameter problem of a glued grid complex: one face per cell
/// (targets are the chart images of its corners) plus the exterior ring face
/// (targets are the undeformed boundary corners). The poles at lattice
/// corners `(0,0)` and `(m,0)` are pinned to kill the global affine gauge.
pub fn grid_parameter_problem(gc: &GridComplex) -> ParameterProblem {
    let grid = gc.grid;
    let m = grid.subdivisions;
    let mut faces = Vec::with_capacity(grid.cell_count() + 1);
    for j in 0..m {
        for i in 0..m {
            let chart = gc.field.chart(i, j);
            let corners = grid
                .cell_corner_indices(i, j)
                .iter()
                .map(|&k| CornerRef::Finite(k))
                .collect();
            let targets = grid
                .cell_corners(i, j)
                .iter()
                .map(|&q| chart.apply(q))
                .collect();
            faces.push(FaceSpec {
                corners,
                targets,
                basepoint: None,
                ring: false,
            });
        }
    }
    let boundary = boundary_loop(m);
    faces.push(FaceSpec {
        corners: boundary
            .iter()
            .map(|&(i, j)| CornerRef::Finite(grid.corner_index(i, j)))
            .collect(),
        targets: boundary.iter().map(|&(i, j)| grid.corner(i, j)).collect(),
        basepoint: None,
        ring: true,
    });
    let initial: Vec<Complex> = (0..=m)
        .flat_map(|j| (0..=m).map(move |i| (i, j)))
        .map(|(i, j)| grid.corner(i, j))
        .collect();
    ParameterProblem {
        residues: gc.corner_residues.clone(),
        faces,
        pinned: vec![
            (grid.corner_index(0, 0), grid.corner(0, 0)),
            (grid.corner_index(m, 0), grid.corner(m, 0)),
        ],
        initial,
    }
}

/// How far a radial hop starts from its pole: half the remaining distance,
/// clamped by the nearest other active pole.
fn approach_point(sym: &ChristoffelSymbol, from: Complex, terminal: usize) -> Complex {
    let xi = sym.poles[terminal].position;
    let offset = from - xi;
    let dist = offset.norm();
    let mut clearance = f64::INFINITY;
    for (k, p) in sym.poles.iter().enumerate() {
        if k != terminal && p.residue != cx(0.0, 0.0) {
            clearance = clearance.min((p.position - xi).norm());
        }
    }
    let rho = (0.5 * dist).min(0.4 * clearance);
    xi + offset * (rho / dist)
}

/// Per-node sums needed by the analytic Jacobian: `s[k] = Σ ω·e^{A}/(u − z_k)`
/// over the quadrature nodes seen so far (radial nodes of a pole's own hop
/// are booked at the approach point instead, which is exactly the chain-rule
/// contribution of the `e^{A(approach)}` prefactor).
#[derive(Debug, Clone)]
struct NodeSums {
    s: Vec<Complex>,
}

impl NodeSums {
    fn new(n: usize) -> Self {
        NodeSums {
            s: vec![cx(0.0, 0.0); n],
        }
    }

    fn add(&mut self, active: &[usize], poles: &[Pole], value: Complex, at: Complex) {
        for &k in active {
            self.s[k] += value / (at - poles[k].position);
        }
    }
}

/// Gauss panel of `∫ exp(A) dz` over `[from, to]`, `A(from) = from_log`.
/// Accumulates node sums when given.
fn g15_panel(
    sym: &ChristoffelSymbol,
    guard: f64,
    from: Complex,
    from_log: Complex,
    to: Complex,
    active: &[usize],
    mut sums: Option<&mut NodeSums>,
) -> Result<Complex> {
    let rule = gauss15();
    let mid = 0.5 * (from + to);
    let half = 0.5 * (to - from);
    let mut acc = cx(0.0, 0.0);
    for (&x, &w) in rule.nodes.iter().zip(rule.weights) {
        let u = mid + half * x;
        let (inc, _) = log_increments(sym, from, u, None, guard)?;
        let value = half * w * (from_log + inc).exp();
        acc += value;
        if let Some(s) = sums.as_deref_mut() {
            s.add(active, &sym.poles, value, u);
        }
    }
    Ok(acc)
}

/// Adaptive development section: integrates `exp(A)` along `[from, to]`,
/// refining until a coarse panel agrees with its two halves. Returns the
/// integral and `A(to)`. Node sums are accumulated on the accepted fine
/// panels only.
fn develop_section(
    sym: &ChristoffelSymbol,
    guard: f64,
    from: Complex,
    from_log: Complex,
    to: Complex,
    active: &[usize],
    sums: Option<&mut NodeSums>,
) -> Result<(Complex, Complex)> {
    fn recurse(
        sym: &ChristoffelSymbol,
        guard: f64,
        from: Complex,
        from_log: Complex,
        to: Complex,
        depth: usize,
        active: &[usize],
        mut sums: Option<&mut NodeSums>,
    ) -> Result<Complex> {
        let coarse = g15_panel(sym, guard, from, from_log, to, active, None)?;
        let mid = 0.5 * (from + to);
        let (inc, _) = log_increments(sym, from, mid, None, guard)?;
        let mid_log = from_log + inc;
        let left = g15_panel(sym, guard, from, from_log, mid, active, None)?;
        let right = g15_panel(sym, guard, mid, mid_log, to, active, None)?;
        let fine = left + right;
        let tol = defaults::DEVELOP_TOL * (1.0 + fine.norm());
        if (coarse - fine).norm() <= tol || depth >= 48 {
            if depth >= 48 && (coarse - fine).norm() > 1e3 * tol {
                return Err(Error::QuadratureFailed {
                    start: from,
                    end: to,
                    reason: "development panel did not converge".into(),
                });
            }
            if let Some(s) = sums.as_deref_mut() {
                g15_panel(sym, guard, from, from_log, mid, active, Some(s))?;
                g15_panel(sym, guard, mid, mid_log, to, active, Some(s))?;
            }
            return Ok(fine);
        }
        let lv = recurse(sym, guard, from, from_log, mid, depth + 1, active, sums.as_deref_mut())?;
        let rv = recurse(sym, guard, mid, mid_log, to, depth + 1, active, sums)?;
        Ok(lv + rv)
    }

    if (to - from).norm() == 0.0 {
        return Ok((cx(0.0, 0.0), from_log));
    }
    let value = recurse(sym, guard, from, from_log, to, 0, active, sums)?;
    let (inc, _) = log_increments(sym, from, to, None, guard)?;
    Ok((value, from_log + inc))
}

/// The radial piece of a resting value: `∫ exp(A) dz` along the straight hop
/// from `approach` onto the endpoint `xi` of pole `terminal`, including the
/// closed-form tail below the last dyadic panel. `exp_a` is `e^{A(approach)}`.
/// `xi` may be displaced off the pole's stored position (used for the
/// finite-difference endpoint column); the integrand's `s^res` grading always
/// uses the terminal residue.
fn radial_piece(
    sym: &ChristoffelSymbol,
    guard: f64,
    approach: Complex,
    exp_a: Complex,
    terminal: usize,
    xi: Complex,
    active: &[usize],
    mut sums: Option<&mut NodeSums>,
) -> Result<Complex> {
    let res = sym.poles[terminal].residue;
    if res.re <= -1.0 + 1e-9 {
        return Err(Error::NonIntegrableEndpoint { residue: res });
    }
    let rule = gauss15();
    let prefactor = exp_a * (xi - approach);
    let panels = ((50.0 / (res.re + 2.0)).ceil() as usize).clamp(12, 60);
    let at = |s: f64| xi + (approach - xi) * s;
    let mut acc = cx(0.0, 0.0);
    // B(s) tracks the non-terminal poles' log sum along the hop, anchored by
    // B(1) = 0 at the approach point and chained panel to panel.
    let mut s_hi = 1.0;
    let mut b_hi = cx(0.0, 0.0);
    for _ in 0..panels {
        let s_lo = 0.5 * s_hi;
        let mid = 0.5 * (s_hi + s_lo);
        let half = 0.5 * (s_lo - s_hi);
        for (&x, &w) in rule.nodes.iter().zip(rule.weights) {
            let s = mid + half * x;
            let (b_inc, _) = log_increments(sym, at(s_hi), at(s), Some(terminal), guard)?;
            let value =
                prefactor * (half.abs() * w) * (res * s.ln() + b_hi + b_inc).exp();
            acc += value;
            if let Some(out) = sums.as_deref_mut() {
                for &k in active {
                    if k != terminal {
                        out.s[k] += value / (at(s) - sym.poles[k].position);
                    }
                }
                out.s[terminal] += value / (approach - sym.poles[terminal].position);
            }
        }
        let (b_step, _) = log_increments(sym, at(s_hi), at(s_lo), Some(terminal), guard)?;
        b_hi += b_step;
        s_hi = s_lo;
    }
    // Tail below s_hi: B is flat there to machine precision, so the integral
    // closes as e^{B(0)}·s^{res+1}/(res+1).
    let (b_last, _) = log_increments(sym, at(s_hi), xi, Some(terminal), guard)?;
    let b0 = b_hi + b_last;
    let tail = prefactor * b0.exp() * ((res + 1.0) * s_hi.ln()).exp() / (res + 1.0);
    acc += tail;
    if let Some(out) = sums.as_deref_mut() {
        for &k in active {
            if k != terminal {
                out.s[k] += tail / (xi - sym.poles[k].position);
            }
        }
        out.s[terminal] += tail / (approach - sym.poles[terminal].position);
    }
    Ok(acc)
}

/// Resting value of one corner, developed from `(start, start_value,
/// start_log)`, with optional derivative bookkeeping.
struct CornerEval {
    value: Complex,
    /// Integral contributed past the start germ (the `V` of the uniform
    /// derivative formula when added to the caller's prefix).
    local_integral: Complex,
    sums: Option<NodeSums>,
    terminal: Option<usize>,
    /// Complete extra term of `∂w/∂z_terminal` beyond the uniform formula:
    /// the finite-difference endpoint column (or the Leibniz boundary term
    /// `e^{A(ξ)}` when the terminal residue vanishes).
    terminal_extra: Complex,
}

fn develop_corner(
    sym: &ChristoffelSymbol,
    guard: f64,
    active: &[usize],
    start: Complex,
    start_value: Complex,
    start_log: Complex,
    corner: &CornerRef,
    want_jac: bool,
    fd_terminal: bool,
) -> Result<CornerEval> {
    let mut sums = want_jac.then(|| NodeSums::new(sym.poles.len()));
    match *corner {
        CornerRef::Infinity { ray } => {
            if want_jac {
                return Err(Error::InvalidInput(
                    "derivatives at infinity corners are not supported".into(),
                ));
            }
            let germ = ChartGerm {
                base: start,
                value: start_value,
                log_derivative: start_log,
            };
            let value = develop_to_infinity(sym, &germ, ray)?;
            Ok(CornerEval {
                value,
                local_integral: value - start_value,
                sums: None,
                terminal: None,
                terminal_extra: cx(0.0, 0.0),
            })
        }
        CornerRef::Finite(t) => {
            let xi = sym.poles[t].position;
            let res = sym.poles[t].residue;
            if res == cx(0.0, 0.0) {
                // The endpoint is not singular: develop straight onto it. The
                // only derivative in its own position is the moving-endpoint
                // boundary term e^{A(ξ)}.
                let (integral, end_log) =
                    develop_section(sym, guard, start, start_log, xi, active, sums.as_mut())?;
                return Ok(CornerEval {
                    value: start_value + integral,
                    local_integral: integral,
                    sums,
                    terminal: Some(t),
                    terminal_extra: end_log.exp(),
                });
            }
            let approach = approach_point(sym, start, t);
            let (regular, a_log) =
                develop_section(sym, guard, start, start_log, approach, active, sums.as_mut())?;
            let exp_a = a_log.exp();
            let radial = radial_piece(
                sym,
                guard,
                approach,
                exp_a,
                t,
                xi,
                active,
                sums.as_mut(),
            )?;
            let mut terminal_extra = cx(0.0, 0.0);
            if want_jac && fd_terminal {
                let h = defaults::FD_STEP_FACTOR * (1.0 + xi.norm());
                let plus =
                    radial_piece(sym, guard, approach, exp_a, t, xi + h, active, None)?;
                let minus =
                    radial_piece(sym, guard, approach, exp_a, t, xi - h, active, None)?;
                terminal_extra = (plus - minus) / (2.0 * h);
            }
            Ok(CornerEval {
                value: start_value + regular + radial,
                local_integral: regular + radial,
                sums,
                terminal: Some(t),
                terminal_extra,
            })
        }
    }
}

/// Derivative data for one resting value.
struct CornerDeriv {
    total_integral: Complex,
    s: Vec<Complex>,
    terminal: Option<usize>,
    terminal_extra: Complex,
}

impl CornerDeriv {
    /// `∂w/∂z_k` from the uniform node formula plus the terminal extra.
    fn dw(&self, sym: &ChristoffelSymbol, basepoint: Complex, k: usize) -> Complex {
        let res = sym.poles[k].residue;
        let mut d = cx(0.0, 0.0);
        if res != cx(0.0, 0.0) {
            d += res
                * (self.total_integral / (basepoint - sym.poles[k].position) - self.s[k]);
        }
        if self.terminal == Some(k) {
            d += self.terminal_extra;
        }
        d
    }
}

/// Develops every corner of a face. Returns the resting values and, when
/// requested, per-corner derivative data and/or the germs accumulated at the
/// ring waypoints of a ring face.
fn face_restings(
    sym: &ChristoffelSymbol,
    guard: f64,
    active: &[usize],
    face: &FaceSpec,
    want_jac: bool,
    fd_needed: &dyn Fn(usize) -> bool,
    mut ring_out: Option<&mut Vec<ChartGerm>>,
) -> Result<(Complex, Vec<Complex>, Option<Vec<CornerDeriv>>)> {
    let finite_positions: Vec<Complex> = face
        .corners
        .iter()
        .filter_map(|c| match c {
            CornerRef::Finite(k) => Some(sym.poles[*k].position),
            CornerRef::Infinity { .. } => None,
        })
        .collect();
    if finite_positions.is_empty() {
        return Err(Error::InvalidInput("face has no finite corners".into()));
    }
    let centroid =
        finite_positions.iter().sum::<Complex>() / finite_positions.len() as f64;

    let mut restings = Vec::with_capacity(face.corners.len());
    let mut derivs = want_jac.then(Vec::new);

    if face.ring {
        // Walk an offset ring outside the corner poles, resting on each pole
        // by a short radial hop from its waypoint. The prefix of the walk is
        // shared between corners, so node sums accumulate once.
        let waypoints: Vec<Complex> = finite_positions
            .iter()
            .map(|&xi| centroid + 1.25 * (xi - centroid))
            .collect();
        let base = waypoints[0];
        let mut value = cx(0.0, 0.0);
        let mut a_log = cx(0.0, 0.0);
        let mut prefix = want_jac.then(|| NodeSums::new(sym.poles.len()));
        if let Some(out) = ring_out.as_deref_mut() {
            out.clear();
        }
        for (i, corner) in face.corners.iter().enumerate() {
            if let Some(out) = ring_out.as_deref_mut() {
                out.push(ChartGerm {
                    base: waypoints[i],
                    value,
                    log_derivative: a_log,
                });
            }
            let t = match corner {
                CornerRef::Finite(t) => *t,
                CornerRef::Infinity { .. } => {
                    return Err(Error::InvalidInput(
                        "ring faces require finite corners".into(),
                    ))
                }
            };
            let fd = want_jac && fd_needed(t);
            let eval = develop_corner(
                sym,
                guard,
                active,
                waypoints[i],
                value,
                a_log,
                corner,
                want_jac,
                fd,
            )?;
            restings.push(eval.value);
            if let Some(rows) = derivs.as_mut() {
                let mut s = prefix.as_ref().expect("prefix sums").s.clone();
                let local = eval.sums.expect("corner sums");
                for (dst, src) in s.iter_mut().zip(&local.s) {
                    *dst += src;
                }
                rows.push(CornerDeriv {
                    total_integral: value - cx(0.0, 0.0) + eval.local_integral,
                    s,
                    terminal: eval.terminal,
                    terminal_extra: eval.terminal_extra,
                });
            }
            if i + 1 < waypoints.len() {
                let (seg, next_log) = develop_section(
                    sym,
                    guard,
                    waypoints[i],
                    a_log,
                    waypoints[i + 1],
                    active,
                    prefix.as_mut(),
                )?;
                value += seg;
                a_log = next_log;
            }
        }
        return Ok((base, restings, derivs));
    }

    let basepoint = face.basepoint.unwrap_or(centroid);
    let scale = sym.diameter();
    if finite_positions
        .iter()
        .any(|&p| (p - basepoint).norm() < 1e-6 * scale)
    {
        return Err(Error::FaceBasepointFailed { face: 0 });
    }
    for corner in &face.corners {
        let fd = want_jac
            && match corner {
                CornerRef::Finite(t) => fd_needed(*t),
                CornerRef::Infinity { .. } => false,
            };
        let eval = develop_corner(
            sym,
            guard,
            active,
            basepoint,
            cx(0.0, 0.0),
            cx(0.0, 0.0),
            corner,
            want_jac,
            fd,
        )?;
        restings.push(eval.value);
        if let Some(rows) = derivs.as_mut() {
            rows.push(CornerDeriv {
                total_integral: eval.local_integral,
                s: eval.sums.expect("corner sums").s,
                terminal: eval.terminal,
                terminal_extra: eval.terminal_extra,
            });
        }
    }
    Ok((basepoint, restings, derivs))
}

/// One face's developed configuration.
#[derive(Debug, Clone)]
pub struct FaceConfig {
    pub basepoint: Complex,
    pub restings: Vec<Complex>,
    pub normalized: Vec<Complex>,
    pub normalized_targets: Vec<Complex>,
}

fn check_collisions(sym: &ChristoffelSymbol) -> Result<()> {
    let guard = defaults::COLLISION_RADIUS_FACTOR * sym.diameter();
    for (i, p) in sym.poles.iter().enumerate() {
        for q in sym.poles.iter().skip(i + 1) {
            let d = (p.position - q.position).norm();
            if d < guard {
                return Err(Error::PoleCollision {
                    first: p.position,
                    second: q.position,
                    distance: d,
                    guard,
                });
            }
        }
    }
    Ok(())
}

/// Develops every face of the problem at the given pole positions.
pub fn per_map(problem: &ParameterProblem, positions: &[Complex]) -> Result<Vec<FaceConfig>> {
    let sym = problem.symbol(positions);
    check_collisions(&sym)?;
    let guard = defaults::POLE_CLEARANCE_FACTOR * sym.diameter();
    let active: Vec<usize> = (0..sym.poles.len())
        .filter(|&k| sym.poles[k].residue != cx(0.0, 0.0))
        .collect();
    let mut out = Vec::with_capacity(problem.faces.len());
    for face in &problem.faces {
        let (basepoint, restings, _) =
            face_restings(&sym, guard, &active, face, false, &|_| false, None)?;
        let (a, b) = face.anchors()?;
        out.push(FaceConfig {
            basepoint,
            restings: restings.clone(),
            normalized: normalize_config(&restings, a, b)?,
            normalized_targets: face.normalized_targets()?,
        });
    }
    Ok(out)
}

/// Residual vector: per face, the normalized restings minus the normalized
/// targets at every non-anchor corner, in face-then-corner order.
pub fn residual_vector(
    problem: &ParameterProblem,
    positions: &[Complex],
) -> Result<Vec<Complex>> {
    let configs = per_map(problem, positions)?;
    let mut r = Vec::new();
    for (face, config) in problem.faces.iter().zip(&configs) {
        let (a, b) = face.anchors()?;
        for i in 0..config.normalized.len() {
            if i == a || i == b {
                continue;
            }
            r.push(config.normalized[i] - config.normalized_targets[i]);
        }
    }
    Ok(r)
}

/// Residual and (optionally) the analytic Jacobian with respect to the
/// unknown pole positions. All quantities are holomorphic in the positions,
/// so a complex Jacobian captures the full derivative.
fn system_eval(
    problem: &ParameterProblem,
    positions: &[Complex],
    want_jac: bool,
) -> Result<(DVector<Complex>, Option<DMatrix<Complex>>)> {
    let sym = problem.symbol(positions);
    check_collisions(&sym)?;
    let guard = defaults::POLE_CLEARANCE_FACTOR * sym.diameter();
    let active: Vec<usize> = (0..sym.poles.len())
        .filter(|&k| sym.poles[k].residue != cx(0.0, 0.0))
        .collect();
    let unknowns = problem.unknowns();
    let mut col_of = vec![usize::MAX; problem.residues.len()];
    for (slot, &k) in unknowns.iter().enumerate() {
        col_of[k] = slot;
    }
    let fd_needed = |t: usize| col_of[t] != usize::MAX;

    let mut residuals: Vec<Complex> = Vec::new();
    let mut rows: Vec<Vec<Complex>> = Vec::new();
    for face in &problem.faces {
        let (basepoint, restings, derivs) =
            face_restings(&sym, guard, &active, face, want_jac, &fd_needed, None)?;
        let (a, b) = face.anchors()?;
        let normalized = normalize_config(&restings, a, b)?;
        let targets = face.normalized_targets()?;
        let denom = restings[b] - restings[a];
        for i in 0..restings.len() {
            if i == a || i == b {
                continue;
            }
            residuals.push(normalized[i] - targets[i]);
            if let Some(derivs) = derivs.as_ref() {
                let mut row = vec![cx(0.0, 0.0); unknowns.len()];
                for &k in &unknowns {
                    let dwi = derivs[i].dw(&sym, basepoint, k);
                    let dwa = derivs[a].dw(&sym, basepoint, k);
                    let dwb = derivs[b].dw(&sym, basepoint, k);
                    row[col_of[k]] =
                        (dwi - dwa - normalized[i] * (dwb - dwa)) / denom;
                }
                rows.push(row);
            }
        }
    }
    let m = residuals.len();
    let r = DVector::from_iterator(m, residuals.into_iter());
    let j = want_jac.then(|| {
        DMatrix::from_fn(m, unknowns.len(), |i, c| rows[i][c])
    });
    Ok((r, j))
}

/// Solver knobs; all fields have serde defaults so scenarios can override
/// only what they need.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SolverSettings {
    /// Max-norm residual target.
    pub tol: f64,
    /// Levenberg-Marquardt iteration cap per continuation stage.
    pub max_iter: usize,
    /// Number of amplitude continuation stages from 0 to 1.
    pub continuation_steps: usize,
    pub lambda_init: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            max_iter: 60,
            continuation_steps: 4,
            lambda_init: defaults::LM_LAMBDA_INIT,
        }
    }
}

/// What a solve did, for reports and regression baselines.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveReport {
    pub iterations: usize,
    pub rejected_steps: usize,
    /// Field amplitudes at which a stage converged, ending at 1.
    pub continuation_stages: Vec<f64>,
    /// Max-norm residual after each accepted step, across all stages.
    pub residual_history: Vec<f64>,
    pub residual_max: f64,
    pub runtime_ms: u64,
}

fn max_norm(v: &DVector<Complex>) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Levenberg-Marquardt on the complex normal equations `(JᴴJ + λ·diag)d = −Jᴴr`.
fn lm_solve(
    problem: &ParameterProblem,
    seed: &[Complex],
    settings: &SolverSettings,
    amplitude: f64,
    report: &mut SolveReport,
) -> Result<Vec<Complex>> {
    let unknowns = problem.unknowns();
    let mut values: Vec<Complex> = unknowns.iter().map(|&k| seed[k]).collect();
    if unknowns.is_empty() {
        let positions = problem.positions_from(&values);
        let (r, _) = system_eval(problem, &positions, false)?;
        report.residual_max = max_norm(&r);
        return if report.residual_max <= settings.tol {
            Ok(positions)
        } else {
            Err(Error::SolverStagnation {
                amplitude,
                residual: report.residual_max,
                iterations: 0,
                tol: settings.tol,
            })
        };
    }

    let mut lambda = settings.lambda_init;
    let positions = problem.positions_from(&values);
    let (mut r, mut jac) = system_eval(problem, &positions, true)?;
    let mut rnorm = max_norm(&r);
    for iter in 0..settings.max_iter {
        if rnorm <= settings.tol {
            report.residual_max = rnorm;
            return Ok(problem.positions_from(&values));
        }
        let j = jac.as_ref().expect("jacobian present");
        let jh = j.adjoint();
        let h = &jh * j;
        let g = &jh * &r;
        loop {
            let mut a = h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] = h[(i, i)] * (1.0 + lambda) + cx(1e-300, 0.0);
            }
            let step = nalgebra::linalg::Cholesky::new(a).map(|c| c.solve(&(-&g)));
            let accepted = step.and_then(|d| {
                let candidate: Vec<Complex> = values
                    .iter()
                    .zip(d.iter())
                    .map(|(v, dv)| v + dv)
                    .collect();
                let positions = problem.positions_from(&candidate);
                match system_eval(problem, &positions, false) {
                    Ok((rc, _)) if rc.norm_squared() < r.norm_squared() => {
                        Some((candidate, rc))
                    }
                    _ => None,
                }
            });
            match accepted {
                Some((candidate, _)) => {
                    values = candidate;
                    lambda = (lambda * defaults::LM_LAMBDA_DECREASE)
                        .max(defaults::LM_LAMBDA_RANGE.0);
                    let positions = problem.positions_from(&values);
                    let (rn, jn) = system_eval(problem, &positions, true)?;
                    r = rn;
                    jac = jn;
                    rnorm = max_norm(&r);
                    report.iterations += 1;
                    report.residual_history.push(rnorm);
                    break;
                }
                None => {
                    report.rejected_steps += 1;
                    lambda *= defaults::LM_LAMBDA_INCREASE;
                    if lambda > defaults::LM_LAMBDA_RANGE.1 {
                        return Err(Error::SolverStagnation {
                            amplitude,
                            residual: rnorm,
                            iterations: iter,
                            tol: settings.tol,
                        });
                    }
                }
            }
        }
    }
    report.residual_max = rnorm;
    if rnorm <= settings.tol {
        Ok(problem.positions_from(&values))
    } else {
        Err(Error::SolverStagnation {
            amplitude: 1.0,
            residual: rnorm,
            iterations: settings.max_iter,
            tol: settings.tol,
        })
    }
}

/// Solves a fixed parameter problem (no continuation).
pub fn solve_parameter_problem(
    problem: &ParameterProblem,
    settings: &SolverSettings,
) -> Result<(Vec<Complex>, SolveReport)> {
    let start = Instant::now();
    let mut report = SolveReport::default();
    let positions = lm_solve(problem, &problem.initial, settings, 1.0, &mut report)?;
    let (r, _) = system_eval(problem, &positions, false)?;
    report.residual_max = max_norm(&r);
    report.continuation_stages = vec![1.0];
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok((positions, report))
}

/// The solved straightening map `f`. On cell `(i, j)` it is
/// `W_j ∘ chart_{ij}` where `W_j` inverts the face's aligned developed chart;
/// outside the grid it continues through the exterior face. Lattice corners
/// map exactly onto the solved poles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StraighteningMap {
    pub field: PiecewiseField,
    pub symbol: ChristoffelSymbol,
    /// Per-face affine maps sending developed-chart values onto the face's
    /// prescribed polygon (cells row-major, exterior last).
    pub alignments: Vec<Affine>,
    /// Development basepoints of the cell faces.
    #[serde(with = "complex_list")]
    pub basepoints: Vec<Complex>,
    /// Developed germs at the exterior ring waypoints.
    pub ring: Vec<ChartGerm>,
    pub report: SolveReport,
}

/// Solves the grid problem for `pw` with amplitude continuation: stages
/// `t·pw` walk `t` from 0 to 1, halving the stride on stagnation down to the
/// minimum step.
pub fn solve_grid(pw: &PiecewiseField, settings: &SolverSettings) -> Result<StraighteningMap> {
    let start = Instant::now();
    let mut report = SolveReport::default();
    let base_step = 1.0 / settings.continuation_steps.max(1) as f64;
    let mut step = base_step;
    let mut t = 0.0;
    let mut positions = grid_parameter_problem(&build_grid_complex(&pw.scaled(0.0))?).initial;
    while t < 1.0 {
        let t_next = (t + step).min(1.0);
        let scaled = pw.scaled(t_next);
        let gc = build_grid_complex(&scaled)?;
        let problem = grid_parameter_problem(&gc);
        match lm_solve(&problem, &positions, settings, t_next, &mut report) {
            Ok(solution) => {
                positions = solution;
                t = t_next;
                report.continuation_stages.push(t);
                step = (step * 2.0).min(base_step);
            }
            Err(err) => {
                step *= 0.5;
                if step < defaults::CONTINUATION_MIN_STEP {
                    return Err(match err {
                        Error::SolverStagnation { .. } => Error::ContinuationFailed {
                            amplitude: t_next,
                            min_step: defaults::CONTINUATION_MIN_STEP,
                        },
                        other => other,
                    });
                }
            }
        }
    }

    // Final pass at t = 1: record basepoints, alignments, and ring germs.
    let gc = build_grid_complex(pw)?;
    let problem = grid_parameter_problem(&gc);
    let sym = problem.symbol(&positions);
    let guard = defaults::POLE_CLEARANCE_FACTOR * sym.diameter();
    let active: Vec<usize> = (0..sym.poles.len())
        .filter(|&k| sym.poles[k].residue != cx(0.0, 0.0))
        .collect();
    let mut alignments = Vec::with_capacity(problem.faces.len());
    let mut basepoints = Vec::with_capacity(problem.faces.len() - 1);
    let mut ring = Vec::new();
    let mut residual_max: f64 = 0.0;
    for face in &problem.faces {
        let mut ring_out = face.ring.then(Vec::new);
        let (basepoint, restings, _) = face_restings(
            &sym,
            guard,
            &active,
            face,
            false,
            &|_| false,
            ring_out.as_mut(),
        )?;
        let (a, b) = face.anchors()?;
        let normalized = normalize_config(&restings, a, b)?;
        for (n, tgt) in normalized.iter().zip(face.normalized_targets()?) {
            residual_max = residual_max.max((n - tgt).norm());
        }
        alignments.push(Affine::from_two_points(
            restings[a],
            face.targets[a],
            restings[b],
            face.targets[b],
        )?);
        if let Some(germs) = ring_out {
            ring = germs;
        } else {
            basepoints.push(basepoint);
        }
    }
    report.residual_max = residual_max;
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(StraighteningMap {
        field: pw.clone(),
        symbol: sym,
        alignments,
        basepoints,
        ring,
        report,
    })
}

impl StraighteningMap {
    fn pole_of_corner(&self, i: usize, j: usize) -> Complex {
        self.symbol.poles[self.field.grid.corner_index(i, j)].position
    }

    /// Newton-inverts the developed chart `φ` (germ at `germ`) at `target`,
    /// starting from `seed`. Backtracks when a trial step lands in a pole
    /// guard zone.
    fn invert_chart(&self, germ: &ChartGerm, target: Complex, seed: Complex) -> Result<Complex> {
        let mut z = seed;
        let scale = 1.0 + target.norm();
        for _ in 0..defaults::NEWTON_MAX_ITER {
            let mut developed = None;
            let mut step_scale = 1.0;
            for _ in 0..8 {
                let candidate = germ.base + (z - germ.base) * step_scale;
                match develop_chart(&self.symbol, germ, &[germ.base, candidate]) {
                    Ok(g) => {
                        z = candidate;
                        developed = Some(g);
                        break;
                    }
                    Err(_) => step_scale *= 0.5,
                }
            }
            let g = developed.ok_or(Error::NewtonStalled {
                point: z,
                iterations: defaults::NEWTON_MAX_ITER,
            })?;
            let f = g.value - target;
            if f.norm() <= defaults::NEWTON_TOL * scale {
                return Ok(z);
            }
            z -= f * (-g.log_derivative).exp();
        }
        Err(Error::NewtonStalled {
            point: z,
            iterations: defaults::NEWTON_MAX_ITER,
        })
    }

    /// Evaluates `f(z)`.
    pub fn evaluate(&self, z: Complex) -> Result<Complex> {
        let grid = self.field.grid;
        let m = grid.subdivisions;
        let s = grid.cell_side();
        // Lattice corners map onto their solved poles exactly.
        let fi = ((z.re + grid.half_side) / s).round();
        let fj = ((z.im + grid.half_side) / s).round();
        if fi >= 0.0 && fj >= 0.0 && fi <= m as f64 && fj <= m as f64 {
            let (ci, cj) = (fi as usize, fj as usize);
            if (z - grid.corner(ci, cj)).norm() <= 1e-9 * s {
                return Ok(self.pole_of_corner(ci, cj));
            }
        }
        match grid.locate_cell(z) {
            Some((i, j)) => {
                let face = j * m + i;
                let chart = self.field.chart(i, j);
                let target = self.alignments[face].inverse().apply(chart.apply(z));
                // Bilinear interpolation of the corner poles seeds Newton.
                let sw = grid.corner(i, j);
                let u = ((z.re - sw.re) / s).clamp(0.0, 1.0);
                let v = ((z.im - sw.im) / s).clamp(0.0, 1.0);
                let seed = self.pole_of_corner(i, j) * ((1.0 - u) * (1.0 - v))
                    + self.pole_of_corner(i + 1, j) * (u * (1.0 - v))
                    + self.pole_of_corner(i + 1, j + 1) * (u * v)
                    + self.pole_of_corner(i, j + 1) * ((1.0 - u) * v);
                let germ = ChartGerm::normalized(self.basepoints[face]);
                self.invert_chart(&germ, target, seed)
            }
            None => {
                let target = self
                    .alignments
                    .last()
                    .expect("exterior alignment")
                    .inverse()
                    .apply(z);
                // Anchor at the ring waypoint best aligned with z.
                let c = self.ring.iter().map(|g| g.base).sum::<Complex>()
                    / self.ring.len() as f64;
                let germ = self
                    .ring
                    .iter()
                    .max_by(|p, q| {
                        let score = |g: &ChartGerm| {
                            let a = g.base - c;
                            let b = z - c;
                            (a.re * b.re + a.im * b.im) / a.norm().max(1e-300)
                        };
                        score(p)
                            .partial_cmp(&score(q))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("nonempty ring");
                self.invert_chart(germ, target, z)
            }
        }
    }

    /// Inverts `f` as a real map by Newton with finite-difference frames.
    pub fn inverse(&self, w: Complex) -> Result<Complex> {
        let mut z = w;
        let scale = 1.0 + w.norm();
        for _ in 0..defaults::NEWTON_MAX_ITER {
            let f0 = self.evaluate(z)? - w;
            if f0.norm() <= 1e-11 * scale {
                return Ok(z);
            }
            let h = 1e-6 * (1.0 + z.norm());
            let fx = (self.evaluate(z + h)? - self.evaluate(z - h)?) / (2.0 * h);
            let fy = (self.evaluate(z + cx(0.0, h))? - self.evaluate(z - cx(0.0, h))?)
                / (2.0 * h);
            let det = fx.re * fy.im - fx.im * fy.re;
            if det.abs() < 1e-300 {
                return Err(Error::NewtonStalled {
                    point: z,
                    iterations: 0,
                });
            }
            let dx = (-f0.re * fy.im + f0.im * fy.re) / det;
            let dy = (-fx.re * f0.im + fx.im * f0.re) / det;
            z += cx(dx, dy);
        }
        Err(Error::NewtonStalled {
            point: z,
            iterations: defaults::NEWTON_MAX_ITER,
        })
    }

    /// Post-composes with the affine map sending `f(0) ↦ 0`, `f(1) ↦ 1`.
    /// Affine bookkeeping only: poles, basepoints, and ring data transform;
    /// developed log-derivatives are invariant.
    pub fn normalize(mut self) -> Result<StraighteningMap> {
        let f0 = self.evaluate(cx(0.0, 0.0))?;
        let f1 = self.evaluate(cx(1.0, 0.0))?;
        let t = Affine::from_two_points(f0, cx(0.0, 0.0), f1, cx(1.0, 0.0))?;
        for pole in &mut self.symbol.poles {
            pole.position = t.apply(pole.position);
        }
        for b in &mut self.basepoints {
            *b = t.apply(*b);
        }
        for germ in &mut self.ring {
            germ.base = t.apply(germ.base);
            germ.value *= t.a;
        }
        for align in &mut self.alignments {
            align.a /= t.a;
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;

    fn constant_field(half_side: f64, m: usize, value: Complex) -> PiecewiseField {
        let grid = GridSpec::new(half_side, m);
        PiecewiseField::new(grid, vec![value; grid.cell_count()]).unwrap()
    }

    #[test]
    fn grid_problem_has_expected_shape() {
        let pw = constant_field(2.0, 2, cx(0.0, 0.0));
        let gc = build_grid_complex(&pw).unwrap();
        let problem = grid_parameter_problem(&gc);
        assert_eq!(problem.faces.len(), 5);
        assert_eq!(problem.unknowns().len(), 7);
        let residuals = residual_vector(&problem, &problem.initial).unwrap();
        // Two entries per cell face, boundary length minus anchors for the
        // exterior: 2·4 + (8 − 2).
        assert_eq!(residuals.len(), 14);
    }

    #[test]
    fn zero_field_is_already_solved() {
        let pw = constant_field(2.0, 2, cx(0.0, 0.0));
        let gc = build_grid_complex(&pw).unwrap();
        let problem = grid_parameter_problem(&gc);
        let residuals = residual_vector(&problem, &problem.initial).unwrap();
        for r in residuals {
            assert!(r.norm() < 1e-12, "residual {r} should vanish");
        }
        let map = solve_grid(&pw, &SolverSettings::default()).unwrap();
        for (k, pole) in map.symbol.poles.iter().enumerate() {
            assert!(
                (pole.position - problem.initial[k]).norm() < 1e-9,
                "pole {k} moved: {}",
                pole.position
            );
        }
        for &z in &[cx(0.3, -0.4), cx(-1.1, 0.9), cx(1.7, 1.3)] {
            let w = map.evaluate(z).unwrap();
            assert!((w - z).norm() < 1e-9, "f({z}) = {w}");
        }
        // Exterior evaluation continues the identity.
        let w = map.evaluate(cx(3.0, -2.5)).unwrap();
        assert!((w - cx(3.0, -2.5)).norm() < 1e-8, "exterior f = {w}");
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let pw = constant_field(1.0, 1, cx(0.15, 0.1));
        let gc = build_grid_complex(&pw).unwrap();
        let problem = grid_parameter_problem(&gc);
        // Perturb the initial guess so the Jacobian is generic.
        let unknowns = problem.unknowns();
        let mut positions = problem.initial.clone();
        for (n, &k) in unknowns.iter().enumerate() {
            positions[k] += cx(0.02, -0.015) * (n as f64 + 1.0);
        }
        let (r0, jac) = system_eval(&problem, &positions, true).unwrap();
        let jac = jac.unwrap();
        let h = 1e-6;
        for (col, &k) in unknowns.iter().enumerate() {
            let mut plus = positions.clone();
            plus[k] += h;
            let mut minus = positions.clone();
            minus[k] -= h;
            let (rp, _) = system_eval(&problem, &plus, false).unwrap();
            let (rm, _) = system_eval(&problem, &minus, false).unwrap();
            for row in 0..r0.len() {
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let an = jac[(row, col)];
                assert!(
                    (fd - an).norm() <= 1e-5 * (1.0 + an.norm()),
                    "d r[{row}]/d z[{k}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn single_cell_solve_round_trips() {
        let pw = constant_field(1.0, 1, cx(0.0, 0.2));
        let map = solve_grid(&pw, &SolverSettings::default()).unwrap();
        assert!(map.report.residual_max < 1e-9, "residual {}", map.report.residual_max);
        // Corner snap: lattice corners land exactly on the poles.
        let grid = pw.grid;
        let corner = map.evaluate(grid.corner(1, 1)).unwrap();
        assert_eq!(corner, map.symbol.poles[grid.corner_index(1, 1)].position);
        // Interior round trip.
        let z = cx(0.25, -0.3);
        let w = map.evaluate(z).unwrap();
        let back = map.inverse(w).unwrap();
        assert!((back - z).norm() < 1e-8, "round trip {back} vs {z}");
        // The configurations of the solved map match the prescriptions.
        let gc = build_grid_complex(&pw).unwrap();
        let problem = grid_parameter_problem(&gc);
        let positions: Vec<Complex> =
            map.symbol.poles.iter().map(|p| p.position).collect();
        for config in per_map(&problem, &positions).unwrap() {
            for (n, t) in config.normalized.iter().zip(&config.normalized_targets) {
                assert!((n - t).norm() < 1e-8, "config {n} vs target {t}");
            }
        }
    }

    #[test]
    fn normalization_pins_zero_and_one() {
        let pw = constant_field(2.0, 1, cx(0.2, 0.05));
        let map = solve_grid(&pw, &SolverSettings::default())
            .unwrap()
            .normalize()
            .unwrap();
        let f0 = map.evaluate(cx(0.0, 0.0)).unwrap();
        let f1 = map.evaluate(cx(1.0, 0.0)).unwrap();
        assert!(f0.norm() < 1e-9, "f(0) = {f0}");
        assert!((f1 - cx(1.0, 0.0)).norm() < 1e-9, "f(1) = {f1}");
    }

    #[test]
    fn exterior_round_trip() {
        let pw = constant_field(1.0, 1, cx(0.1, -0.15));
        let map = solve_grid(&pw, &SolverSettings::default()).unwrap();
        let z = cx(1.8, 1.1);
        let w = map.evaluate(z).unwrap();
        assert!(w.is_finite());
        let back = map.inverse(w).unwrap();
        assert!((back - z).norm() < 1e-8, "exterior round trip {back} vs {z}");
    }
}
