//! Refinement limits of the discrete construction.
//!
//! As the grid is refined, the corner residues of a smooth field shrink like
//! the cell area with a universal smooth density
//!
//! `h = −(1/2π)·[2·μ_xy/(1 − μ²) + 4·μ·μ_x·μ_y/(1 − μ²)²]`,
//!
//! so the atomic measure `Σ res_k δ_{z_k}` converges weakly to the pushforward
//! of `−i·h·dA` under the straightening map, and the discrete connection
//! converges to its Cauchy convolution. (The factor `−i` is forced by
//! `log Λ ≈ 2π·h·ε²` together with `res = log Λ/(2πi)`; the linearized
//! Cauchy-transform computation confirms the convolution then agrees with the
//! frame connection `−∂_A B/(A·B)` of the straightened frame `A = f_x`,
//! `B = f_y`.) This module computes every side of those statements.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::christoffel::{ChristoffelSymbol, Pole};
use crate::defaults::{self, gauss4};
use crate::fields::{average_field, AveragingTransform, BeltramiField, GridSpec};
use crate::gluing::corner_monodromy;
use crate::transport::{parallel_transport, PolylinePath};
use crate::uniformize::{solve_grid, SolverSettings, StraighteningMap};
use crate::wire::complex_pair;
use crate::{cx, Complex, Error, Result, I};

const TAU: f64 = std::f64::consts::TAU;

/// The smooth residue density `h` of a twice-differentiable field.
pub fn limit_density(field: &BeltramiField, z: Complex) -> Result<Complex> {
    let jet = field.jet2(z)?;
    let one_minus = 1.0 - jet.mu * jet.mu;
    Ok(-(2.0 * jet.mu_xy / one_minus
        + 4.0 * jet.mu * jet.mu_x * jet.mu_y / (one_minus * one_minus))
        / TAU)
}

/// One row of the quadrant-expansion check.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpansionRow {
    pub epsilon: f64,
    /// `log Λ / ε²` from exact quadrant averages.
    #[serde(with = "complex_pair")]
    pub measured: Complex,
    /// `2π·h(center)`.
    #[serde(with = "complex_pair")]
    pub predicted: Complex,
    pub defect: f64,
}

/// Averages `field` over the square `[x0, x0+ε] × [y0, y0+ε]` with a tensor
/// Gauss rule (exact for the polynomial bump profiles).
fn square_average(field: &BeltramiField, x0: f64, y0: f64, eps: f64) -> Complex {
    let rule = gauss4();
    let half = 0.5 * eps;
    let (cx0, cy0) = (x0 + half, y0 + half);
    let mut acc = cx(0.0, 0.0);
    let mut weight = 0.0;
    for (&nx, &wx) in rule.nodes.iter().zip(rule.weights) {
        for (&ny, &wy) in rule.nodes.iter().zip(rule.weights) {
            acc += field.eval(cx(cx0 + half * nx, cy0 + half * ny)) * (wx * wy);
            weight += wx * wy;
        }
    }
    acc / weight
}

/// Measures `log Λ/ε²` of the four quadrant averages at `center` against
/// `2π·h(center)` for each requested `ε`. The defect shrinks like `ε²`.
pub fn lambda_expansion_check(
    field: &BeltramiField,
    center: Complex,
    epsilons: &[f64],
) -> Result<Vec<ExpansionRow>> {
    let predicted = TAU * limit_density(field, center)?;
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let (x, y) = (center.re, center.im);
        let quadrants = [
            square_average(field, x, y, eps),        // NE
            square_average(field, x - eps, y, eps),  // NW
            square_average(field, x - eps, y - eps, eps), // SW
            square_average(field, x, y - eps, eps),  // SE
        ];
        let (factor, _) = corner_monodromy(quadrants);
        let measured = factor.ln() / (eps * eps);
        rows.push(ExpansionRow {
            epsilon: eps,
            measured,
            predicted,
            defect: (measured - predicted).norm(),
        });
    }
    Ok(rows)
}

/// The atoms of a solved map: lattice corners (source) or solved poles
/// (pushforward) weighted by their residues, zero weights filtered out.
pub fn atomic_measure(map: &StraighteningMap, pushforward: bool) -> Vec<Pole> {
    let grid = map.field.grid;
    map.symbol
        .poles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.residue != cx(0.0, 0.0))
        .map(|(k, p)| {
            let position = if pushforward {
                p.position
            } else {
                let (i, j) = grid.corner_coords(k);
                grid.corner(i, j)
            };
            Pole {
                position,
                residue: p.residue,
            }
        })
        .collect()
}

/// Pairs the atomic measure against a test function: `Σ res_k·τ(z_k)`.
pub fn pair_atoms(atoms: &[Pole], test: impl Fn(Complex) -> Complex) -> Complex {
    atoms.iter().map(|p| p.residue * test(p.position)).sum()
}

/// Pairs the limit measure against a test function: the source-side integral
/// `−i·∫ h(c)·τ(f(c)) dA`, computed with a tensor Gauss rule on `refine ×
/// refine` panels per grid cell. This is the accurate continuum side of the
/// weak convergence; the atomic pairing approaches it as the grid refines.
pub fn pair_density(
    field: &BeltramiField,
    map: &StraighteningMap,
    test: impl Fn(Complex) -> Complex,
    refine: usize,
) -> Result<Complex> {
    let grid = map.field.grid;
    let rule = gauss4();
    let q = refine.max(1);
    let half = 0.5 * grid.cell_side() / q as f64;
    let mut acc = cx(0.0, 0.0);
    for j in 0..grid.subdivisions {
        for i in 0..grid.subdivisions {
            let sw = grid.corner(i, j);
            for pj in 0..q {
                for pi in 0..q {
                    let c0 = sw
                        + cx(
                            (2 * pi + 1) as f64 * half,
                            (2 * pj + 1) as f64 * half,
                        );
                    for (&nx, &wx) in rule.nodes.iter().zip(rule.weights) {
                        for (&ny, &wy) in rule.nodes.iter().zip(rule.weights) {
                            let p = c0 + cx(half * nx, half * ny);
                            let h = limit_density(field, p)?;
                            if h == cx(0.0, 0.0) {
                                continue;
                            }
                            acc += h
                                * test(map.evaluate(p)?)
                                * (wx * wy * half * half);
                        }
                    }
                }
            }
        }
    }
    Ok(-I * acc)
}

/// A symbol with the poles near a path's endpoints taken out, together with
/// the record of what was removed.
#[derive(Debug, Clone)]
pub struct TruncatedSymbol {
    /// The remaining symbol (infinity residue recomputed from the survivors).
    pub symbol: ChristoffelSymbol,
    /// The poles that were dropped, in their original order.
    pub removed: Vec<Pole>,
}

/// Copy of `symbol` with every pole within `cutoff` of `start` or `end`
/// removed. Used to transport along paths whose endpoints sit on top of
/// lattice atoms; the removals are returned so callers can report them.
pub fn truncated_symbol(
    symbol: &ChristoffelSymbol,
    start: Complex,
    end: Complex,
    cutoff: f64,
) -> TruncatedSymbol {
    let mut kept = Vec::with_capacity(symbol.poles.len());
    let mut removed = Vec::new();
    for &p in &symbol.poles {
        let near = (p.position - start).norm() < cutoff || (p.position - end).norm() < cutoff;
        if near {
            removed.push(p);
        } else {
            kept.push(p);
        }
    }
    TruncatedSymbol {
        symbol: ChristoffelSymbol::with_implied_infinity(kept),
        removed,
    }
}

/// One cell's worth of limit-connection data.
#[derive(Debug, Clone)]
struct LimitCell {
    source_center: Complex,
    /// Measure density of the cell (already carries the measure's scale).
    density: Complex,
    image_center: Complex,
    /// Image quadrilateral (corner poles, boundary order SW, SE, NE, NW).
    image_polygon: [Complex; 4],
    /// Straightened frame of the cell's affine approximation: images of unit
    /// source steps in x and y.
    frame_x: Complex,
    frame_y: Complex,
}

/// A measure with a cellwise density, convolved against the Cauchy kernel:
/// `ζ(w) = Σ density(c)·area/(w − center(c))`, with a polar treatment of the
/// cell containing `w`.
#[derive(Debug, Clone)]
pub struct LimitConnection {
    field: BeltramiField,
    /// Factor mapping raw field densities to measure densities (`−i` for the
    /// refinement limit of a solved map, `1` for a directly given density).
    scale: Complex,
    cells: Vec<LimitCell>,
    area: f64,
}

/// Builds the limit connection of a smooth field along a solved map: the
/// measure `−i·h·dA` pushed forward through the map, with each cell carried
/// by its straightened affine frame.
pub fn limit_connection(
    field: &BeltramiField,
    map: &StraighteningMap,
) -> Result<LimitConnection> {
    let grid = map.field.grid;
    let s = grid.cell_side();
    let mut cells = Vec::new();
    for j in 0..grid.subdivisions {
        for i in 0..grid.subdivisions {
            let c = grid.cell_center(i, j);
            let h = limit_density(field, c)?;
            if h == cx(0.0, 0.0) {
                continue;
            }
            let idx = grid.cell_corner_indices(i, j);
            let poles: Vec<Complex> = idx
                .iter()
                .map(|&k| map.symbol.poles[k].position)
                .collect();
            cells.push(LimitCell {
                source_center: c,
                density: -I * h,
                image_center: map.evaluate(c)?,
                image_polygon: [poles[0], poles[1], poles[2], poles[3]],
                frame_x: (poles[1] - poles[0]) / s,
                frame_y: (poles[3] - poles[0]) / s,
            });
        }
    }
    Ok(LimitConnection {
        field: field.clone(),
        scale: -I,
        cells,
        area: s * s,
    })
}

/// Builds the connection of a raw density sampled at the cell centers of
/// `grid` (one value per cell, row-major), under the identity map. The grid
/// must cover the density's support.
pub fn density_connection(grid: GridSpec, values: &[Complex]) -> Result<LimitConnection> {
    if values.len() != grid.cell_count() {
        return Err(Error::InvalidInput(format!(
            "density needs one value per cell: got {}, grid has {}",
            values.len(),
            grid.cell_count()
        )));
    }
    let s = grid.cell_side();
    let mut cells = Vec::new();
    for j in 0..grid.subdivisions {
        for i in 0..grid.subdivisions {
            let g = values[grid.cell_index(i, j)];
            if g == cx(0.0, 0.0) {
                continue;
            }
            let c = grid.cell_center(i, j);
            let half = 0.5 * s;
            cells.push(LimitCell {
                source_center: c,
                density: g,
                image_center: c,
                image_polygon: [
                    c + cx(-half, -half),
                    c + cx(half, -half),
                    c + cx(half, half),
                    c + cx(-half, half),
                ],
                frame_x: cx(1.0, 0.0),
                frame_y: cx(0.0, 1.0),
            });
        }
    }
    Ok(LimitConnection {
        field: BeltramiField::GridSampled {
            grid,
            values: values.to_vec(),
        },
        scale: cx(1.0, 0.0),
        cells,
        area: s * s,
    })
}

fn point_in_quad(q: &[Complex; 4], w: Complex) -> bool {
    // Ray-crossing parity test.
    let mut inside = false;
    for i in 0..4 {
        let a = q[i];
        let b = q[(i + 1) % 4];
        if (a.im > w.im) != (b.im > w.im) {
            let t = (w.im - a.im) / (b.im - a.im);
            if a.re + t * (b.re - a.re) > w.re {
                inside = !inside;
            }
        }
    }
    inside
}

/// Distance from `w` to the quad boundary along direction `θ`.
fn ray_exit_distance(q: &[Complex; 4], w: Complex, theta: f64) -> f64 {
    let dir = cx(theta.cos(), theta.sin());
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let a = q[i];
        let b = q[(i + 1) % 4];
        let e = b - a;
        let det = dir.re * (-e.im) - dir.im * (-e.re);
        if det.abs() < 1e-300 {
            continue;
        }
        let rhs = a - w;
        let t = (rhs.re * (-e.im) - rhs.im * (-e.re)) / det;
        let u = (dir.re * rhs.im - dir.im * rhs.re) / det;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
            best = best.min(t);
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

impl LimitConnection {
    /// Evaluates the connection at a target point `w`.
    pub fn evaluate(&self, w: Complex) -> Complex {
        let mut acc = cx(0.0, 0.0);
        for cell in &self.cells {
            if point_in_quad(&cell.image_polygon, w) {
                acc += self.singular_cell(cell, w);
                continue;
            }
            let diagonal = (cell.image_polygon[2] - cell.image_polygon[0]).norm();
            let distance = (w - cell.image_center).norm();
            if distance < 4.0 * diagonal {
                acc += self.near_cell(cell, w, diagonal, distance);
            } else {
                acc += cell.density * self.area / (w - cell.image_center);
            }
        }
        acc
    }

    /// Distance-graded sub-grid rule for a cell close to (but not under) the
    /// target: the one-point rule's error relative to the cell's contribution
    /// grows like (size/distance)², so the cell is split until the sub-cells
    /// are comfortably smaller than their distance to `w`.
    fn near_cell(&self, cell: &LimitCell, w: Complex, diagonal: f64, distance: f64) -> Complex {
        let n = ((4.0 * diagonal / distance).ceil() as usize).clamp(2, 8);
        let side = self.area.sqrt();
        let sub = side / n as f64;
        let sub_area = self.area / (n * n) as f64;
        let mut acc = cx(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let dx = -0.5 * side + (a as f64 + 0.5) * sub;
                let dy = -0.5 * side + (b as f64 + 0.5) * sub;
                let source = cell.source_center + cx(dx, dy);
                let image = cell.image_center + cell.frame_x * dx + cell.frame_y * dy;
                let g = limit_density(&self.field, source)
                    .map(|h| self.scale * h)
                    .unwrap_or(cell.density);
                acc += g * sub_area / (w - image);
            }
        }
        acc
    }

    /// Polar target-side quadrature of `∫ h/(w − ω) dA_source` over the cell
    /// containing `w`: the angular trapezoid × radial Gauss form of the
    /// principal-value-free singular integral, with the source density pulled
    /// back through the cell's affine frame.
    fn singular_cell(&self, cell: &LimitCell, w: Complex) -> Complex {
        let rule = gauss4();
        let det = cell.frame_x.re * cell.frame_y.im - cell.frame_x.im * cell.frame_y.re;
        if det.abs() < 1e-300 {
            return cx(0.0, 0.0);
        }
        let nodes = defaults::POLAR_ANGULAR_NODES;
        let dtheta = TAU / nodes as f64;
        let mut acc = cx(0.0, 0.0);
        for a in 0..nodes {
            let theta = (a as f64 + 0.5) * dtheta;
            let radius = ray_exit_distance(&cell.image_polygon, w, theta);
            if radius == 0.0 {
                continue;
            }
            let dir = Complex::from_polar(1.0, theta);
            let mut radial = cx(0.0, 0.0);
            for (&x, &wt) in rule.nodes.iter().zip(rule.weights) {
                let rho = 0.5 * radius * (1.0 + x);
                let offset = w + dir * rho - cell.image_center;
                let dx = (offset.re * cell.frame_y.im - offset.im * cell.frame_y.re) / det;
                let dy = (cell.frame_x.re * offset.im - cell.frame_x.im * offset.re) / det;
                let source = cell.source_center + cx(dx, dy);
                let g = limit_density(&self.field, source)
                    .map(|h| self.scale * h)
                    .unwrap_or(cell.density);
                radial += g * (wt * 0.5 * radius);
            }
            acc -= Complex::from_polar(1.0, -theta) * dtheta * radial / det.abs();
        }
        acc
    }
}

/// Evaluates the limit connection at `w` (the Cauchy convolution of its
/// measure).
pub fn limit_symbol(connection: &LimitConnection, w: Complex) -> Complex {
    connection.evaluate(w)
}

/// The connection read directly off the straightened frame:
/// `ζ̃(w) = −∂_A B / (A·B)` at `z = f⁻¹(w)`, with `A = f_x`, `B = f_y` built
/// from Richardson-extrapolated central differences of step `h·(1 + |z|)`.
/// Since `A` is the image of the unit x-step, differentiating `B` along the
/// field `A` is differentiating it in source-x: `∂_A B = f_xy`. Written this
/// way the value transforms like a one-form: post-composing the map with
/// `w ↦ aw + c` divides it by `a`.
pub fn frame_connection(map: &StraighteningMap, w: Complex, step: f64) -> Result<Complex> {
    let z = map.inverse(w)?;
    let h = step * (1.0 + z.norm());
    let diff = |p: Complex, d: Complex, hh: f64| -> Result<Complex> {
        Ok((map.evaluate(p + d * hh)? - map.evaluate(p - d * hh)?) / (2.0 * hh))
    };
    let richardson = |p: Complex, d: Complex| -> Result<Complex> {
        Ok((4.0 * diff(p, d, 0.5 * h)? - diff(p, d, h)?) / 3.0)
    };
    let a = richardson(z, cx(1.0, 0.0))?;
    let b = richardson(z, cx(0.0, 1.0))?;
    // f_xy by the same two-level differencing of B in source-x.
    let b_at = |p: Complex| -> Result<Complex> { richardson(p, cx(0.0, 1.0)) };
    let d_ab = {
        let e1 = cx(1.0, 0.0);
        let coarse = (b_at(z + e1 * h)? - b_at(z - e1 * h)?) / (2.0 * h);
        let fine = (b_at(z + e1 * (0.5 * h))? - b_at(z - e1 * (0.5 * h))?) / h;
        (4.0 * fine - coarse) / 3.0
    };
    Ok(-d_ab / (a * b))
}

/// One refinement row of the transport-vs-limit comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareRow {
    pub refinement: usize,
    /// Log-factor of discrete parallel transport along the mapped path.
    #[serde(with = "complex_pair")]
    pub discrete: Complex,
    /// Integral of the limit connection along the same path.
    #[serde(with = "complex_pair")]
    pub limit: Complex,
    pub defect: f64,
    pub runtime_ms: u64,
}

/// For each refinement `m`: discretizes `field`, solves, maps a horizontal
/// source path (nudged onto the row of cell centers nearest `y0`) pointwise,
/// and compares discrete parallel transport of the solved symbol against the
/// sampled line integral of the limit connection along the same polyline.
pub fn transport_limit_compare(
    field: &BeltramiField,
    half_side: f64,
    refinements: &[usize],
    y0: f64,
    span: f64,
    settings: &SolverSettings,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(refinements.len());
    for &m in refinements {
        let start = Instant::now();
        let grid = GridSpec::new(half_side, m);
        let pw = average_field(field, &grid, AveragingTransform::Cayley)?;
        let map = solve_grid(&pw, settings)?;
        let s = grid.cell_side();
        // Snap to the nearest row of cell centers.
        let k = (((y0 + half_side) / s - 0.5).round().max(0.0) as usize).min(m - 1);
        let y = -half_side + (k as f64 + 0.5) * s;
        let x_max = span * half_side;
        let samples = 8 * m + 1;
        let mut mapped = Vec::with_capacity(samples);
        for n in 0..samples {
            let x = -x_max + 2.0 * x_max * n as f64 / (samples - 1) as f64;
            mapped.push(map.evaluate(cx(x, y))?);
        }
        let trimmed = truncated_symbol(
            &map.symbol,
            mapped[0],
            mapped[samples - 1],
            s / defaults::CUTOFF_DIVISOR,
        );
        let discrete = parallel_transport(
            &trimmed.symbol,
            &PolylinePath {
                points: mapped.clone(),
            },
        )?
        .log_factor;
        let connection = limit_connection(field, &map)?;
        let rule = gauss4();
        let mut limit = cx(0.0, 0.0);
        for pair in mapped.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let half = 0.5 * (pair[1] - pair[0]);
            for (&x, &wt) in rule.nodes.iter().zip(rule.weights) {
                limit += connection.evaluate(mid + half * x) * wt * half;
            }
        }
        rows.push(CompareRow {
            refinement: m,
            discrete,
            limit,
            defect: (discrete - limit).norm(),
            runtime_ms: start.elapsed().as_millis() as u64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BumpProfile;

    fn mixed_bump(amplitude: f64) -> BeltramiField {
        BeltramiField::SmoothBump {
            amplitude: cx(amplitude, 0.0),
            center: cx(0.0, 0.0),
            radius: 0.9,
            profile: BumpProfile::MixedXy,
        }
    }

    #[test]
    fn density_at_bump_center_is_minus_amplitude_over_pi() {
        let field = mixed_bump(0.2);
        let h = limit_density(&field, cx(0.0, 0.0)).unwrap();
        let expected = cx(-0.2 / std::f64::consts::PI, 0.0);
        assert!((h - expected).norm() < 1e-15, "h(0) = {h}");
    }

    #[test]
    fn separable_fields_have_zero_density() {
        let mut fields = vec![BeltramiField::Constant {
            value: cx(0.3, 0.2),
        }];
        for profile in [BumpProfile::XOnly, BumpProfile::YOnly] {
            fields.push(BeltramiField::SmoothBump {
                amplitude: cx(0.3, 0.0),
                center: cx(0.1, -0.2),
                radius: 0.8,
                profile,
            });
        }
        for field in &fields {
            for &z in &[cx(0.0, 0.0), cx(0.2, 0.1), cx(-0.3, -0.4)] {
                let h = limit_density(field, z).unwrap();
                assert!(h.norm() < 1e-15, "h({z}) = {h} for {field:?}");
            }
        }
    }

    #[test]
    fn quadrant_expansion_defect_shrinks_quadratically() {
        let field = mixed_bump(0.2);
        let rows =
            lambda_expansion_check(&field, cx(0.0, 0.0), &[0.2, 0.1, 0.05, 0.025]).unwrap();
        for pair in rows.windows(2) {
            assert!(
                pair[0].defect > 1.5 * pair[1].defect,
                "defects {} -> {} did not shrink",
                pair[0].defect,
                pair[1].defect
            );
        }
        // The measured slope itself should be close to the prediction.
        assert!(rows[3].defect < 0.02 * rows[3].predicted.norm());
    }

    #[test]
    fn truncation_drops_only_endpoint_poles() {
        let sym = ChristoffelSymbol::with_implied_infinity(vec![
            Pole {
                position: cx(0.0, 0.0),
                residue: cx(0.0, 0.1),
            },
            Pole {
                position: cx(1.0, 0.0),
                residue: cx(0.0, -0.1),
            },
            Pole {
                position: cx(2.0, 0.0),
                residue: cx(0.05, 0.0),
            },
        ]);
        let trimmed = truncated_symbol(&sym, cx(0.001, 0.0), cx(2.0, 0.001), 0.025);
        assert_eq!(trimmed.symbol.poles.len(), 1);
        assert_eq!(trimmed.symbol.poles[0].position, cx(1.0, 0.0));
        assert_eq!(trimmed.removed.len(), 2);
        assert_eq!(trimmed.removed[0].position, cx(0.0, 0.0));
        assert_eq!(trimmed.removed[1].position, cx(2.0, 0.0));
    }

    #[test]
    fn truncation_below_half_spacing_removes_at_most_two() {
        // Poles on a unit-spaced line; any cutoff below half the spacing can
        // catch at most one pole per endpoint.
        let poles: Vec<Pole> = (0..7)
            .map(|k| Pole {
                position: cx(k as f64, 0.0),
                residue: cx(0.0, 0.01 * (k as f64 - 3.0)),
            })
            .collect();
        let sym = ChristoffelSymbol::with_implied_infinity(poles);
        for &(start, end) in &[
            (cx(0.1, 0.0), cx(5.9, 0.0)),
            (cx(3.0, 0.2), cx(3.4, -0.1)),
            (cx(-4.0, 0.0), cx(10.0, 0.0)),
        ] {
            let trimmed = truncated_symbol(&sym, start, end, 0.49);
            assert!(
                trimmed.removed.len() <= 2,
                "removed {} poles for endpoints {start}, {end}",
                trimmed.removed.len()
            );
        }
    }

    #[test]
    fn atoms_pair_like_the_density() {
        // A solved coarse map: the atomic pairing should already be close to
        // the smooth pairing (the mismatch is a Riemann-sum gap of order
        // cell-side squared, and any wrong constant in the limit measure
        // would show up as a relative error of at least √2). The test
        // functions are chosen so the leading moment of the odd-odd bump
        // survives.
        let field = mixed_bump(0.45);
        let grid = GridSpec::new(1.0, 4);
        let pw = average_field(&field, &grid, AveragingTransform::Cayley).unwrap();
        let settings = SolverSettings {
            continuation_steps: 1,
            ..SolverSettings::default()
        };
        let map = solve_grid(&pw, &settings).unwrap();
        let atoms = atomic_measure(&map, true);
        assert!(!atoms.is_empty());
        for test in [
            |z: Complex| z * z * z * z,
            |z: Complex| cx(z.re * z.re * z.im * z.im, 0.0),
        ] {
            let discrete = pair_atoms(&atoms, test);
            let smooth = pair_density(&field, &map, test, 2).unwrap();
            assert!(
                (discrete - smooth).norm() <= 0.45 * smooth.norm() + 1e-4,
                "pairing mismatch: atoms {discrete} vs density {smooth}"
            );
        }
        // The constant test function sees the total mass: zero, because the
        // finite residues of any closed complex cancel.
        let total = pair_atoms(&atoms, |_| cx(1.0, 0.0));
        assert!(total.norm() < 1e-10, "total mass {total}");
        // Source atoms carry the same weights at the lattice corners.
        let source = atomic_measure(&map, false);
        assert_eq!(source.len(), atoms.len());
        let m = grid.subdivisions as f64;
        for atom in &source {
            let x = (atom.position.re + 1.0) * m / 2.0;
            let y = (atom.position.im + 1.0) * m / 2.0;
            assert!((x - x.round()).abs() < 1e-12 && (y - y.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_connection_of_identity_vanishes() {
        let grid = GridSpec::new(1.0, 2);
        let pw = average_field(&BeltramiField::Zero, &grid, AveragingTransform::Cayley)
            .unwrap();
        let map = solve_grid(&pw, &SolverSettings::default()).unwrap();
        for &w in &[cx(0.3, 0.2), cx(-0.4, -0.1)] {
            let zeta = frame_connection(&map, w, 1e-4).unwrap();
            assert!(zeta.norm() < 1e-4, "ζ̃({w}) = {zeta}");
        }
    }

    #[test]
    fn frame_connection_transforms_like_a_one_form() {
        // Post-composing the map with an affine `w ↦ aw + c` divides the
        // connection value at the corresponding point by `a`. Normalization
        // is exactly such a post-composition.
        let field = mixed_bump(0.3);
        let grid = GridSpec::new(1.0, 2);
        let pw = average_field(&field, &grid, AveragingTransform::Cayley).unwrap();
        let map = solve_grid(&pw, &SolverSettings::default()).unwrap();
        let normalized = map.clone().normalize().unwrap();
        // Recover the affine factor from the two pinned source corners.
        let z0 = cx(-1.0, -1.0);
        let z1 = cx(1.0, -1.0);
        let a = (normalized.evaluate(z1).unwrap() - normalized.evaluate(z0).unwrap())
            / (map.evaluate(z1).unwrap() - map.evaluate(z0).unwrap());
        for &z in &[cx(0.2, 0.3), cx(-0.35, 0.1)] {
            let raw = frame_connection(&map, map.evaluate(z).unwrap(), 1e-4).unwrap();
            let post =
                frame_connection(&normalized, normalized.evaluate(z).unwrap(), 1e-4).unwrap();
            assert!(
                (post * a - raw).norm() < 1e-4 * (1.0 + raw.norm()),
                "covariance broke: a·ζ̃' = {} vs ζ̃ = {raw}",
                post * a
            );
        }
    }

    #[test]
    fn disk_indicator_convolves_to_its_mean_value() {
        // Indicator of a disk of radius R: outside, the Cauchy convolution is
        // exactly πR²/z by the mean-value property; the cellwise sum gets it
        // to quadrature accuracy.
        let radius = 0.7;
        let grid = GridSpec::new(1.0, 32);
        let mut values = vec![cx(0.0, 0.0); grid.cell_count()];
        for j in 0..grid.subdivisions {
            for i in 0..grid.subdivisions {
                if grid.cell_center(i, j).norm() <= radius {
                    values[grid.cell_index(i, j)] = cx(1.0, 0.0);
                }
            }
        }
        let connection = density_connection(grid, &values).unwrap();
        let mass: Complex = values.iter().sum::<Complex>() * grid.cell_side().powi(2);
        let disk_area = std::f64::consts::PI * radius * radius;
        assert!((mass.re - disk_area).abs() < 0.02 * disk_area);
        for &z in &[cx(1.5, 0.0), cx(0.0, -2.0), cx(1.1, 1.1)] {
            let got = limit_symbol(&connection, z);
            let want = mass / z;
            assert!(
                (got - want).norm() < 0.02 * want.norm(),
                "convolution at {z}: {got} vs {want}"
            );
        }
    }
}
