//! The nine subcommands: each consumes the scenario, runs its slice of the
//! pipeline, records invariants and artifacts in a [`RunReport`], and leaves
//! exit-code policy to `main`.

use std::f64::consts::TAU;
use std::path::PathBuf;

use anyhow::bail;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use beltrami::christoffel::{ChristoffelSymbol, Pole};
use beltrami::fields::{average_field, BeltramiField, FieldFile, PiecewiseField};
use beltrami::gluing::{build_grid_complex, triangle_fixture, GridComplex, TriangleFacts};
use beltrami::limits::{lambda_expansion_check, transport_limit_compare, CompareRow};
use beltrami::transport::{
    parallel_transport, trace_geodesic, GeodesicEnd, GeodesicOptions, PolylinePath,
};
use beltrami::uniformize::{
    grid_parameter_problem, per_map, solve_grid, solve_parameter_problem, CornerRef, FaceSpec,
    ParameterProblem, StraighteningMap,
};
use beltrami::{cx, Complex, I};

use crate::emit::{fmt_f64, write_json, Table};
use crate::report::RunReport;
use crate::scenario::{OutputKind, Scenario};

/// Everything a subcommand needs besides its own logic.
pub struct Ctx {
    pub scenario: Scenario,
    pub scenario_dir: PathBuf,
    pub out: PathBuf,
    pub verbose: bool,
}

impl Ctx {
    fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("[beltrami] {msg}");
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn field(&self) -> anyhow::Result<BeltramiField> {
        self.scenario.field.build(&self.scenario_dir)
    }

    fn discretize(&self, report: &mut RunReport) -> anyhow::Result<PiecewiseField> {
        let field = self.field()?;
        let grid = self.scenario.grid;
        let averaging = self.scenario.averaging;
        report.stage("discretize", || {
            Ok(average_field(&field, &grid, averaging)?)
        })
    }

    /// Discretize → solve; residual history lands in the report. The map is
    /// left in the solver's pinned gauge (see [`cmd_solve`] for the
    /// normalized variant).
    fn solve_raw(&self, report: &mut RunReport) -> anyhow::Result<StraighteningMap> {
        let pw = self.discretize(report)?;
        let settings = self.scenario.solver.settings();
        self.note(&format!(
            "solving {}×{} grid (κ = {:.3})",
            pw.grid.subdivisions,
            pw.grid.subdivisions,
            pw.kappa()
        ));
        let map = report.stage("solve", || Ok(solve_grid(&pw, &settings)?))?;
        report.residual_history = map.report.residual_history.clone();
        Ok(map)
    }
}

// --- discretize ------------------------------------------------------------

pub fn cmd_discretize(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let pw = ctx.discretize(report)?;
    let file = FieldFile {
        grid: pw.grid,
        values: pw.values.clone(),
    };
    write_json(report, &ctx.path("field.json"), "sampled-field", &file)
}

// --- glue ------------------------------------------------------------------

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GlueSummary {
    corner_count: usize,
    cell_count: usize,
    residue_sum: [f64; 2],
}

pub fn cmd_glue(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let pw = ctx.discretize(report)?;
    let gc = report.stage("glue", || Ok(build_grid_complex(&pw)?))?;
    let sum: Complex = gc.corner_residues.iter().sum();
    report.check("residue-sum", sum.norm(), 1e-10);

    let mut table = Table::new(&["corner", "i", "j", "residue_re", "residue_im"]);
    for (k, res) in gc.corner_residues.iter().enumerate() {
        let (i, j) = gc.grid.corner_coords(k);
        table.row(vec![
            k.to_string(),
            i.to_string(),
            j.to_string(),
            fmt_f64(res.re),
            fmt_f64(res.im),
        ]);
    }
    table.write(report, &ctx.path("residues.csv"), "corner-residues")?;
    let summary = GlueSummary {
        corner_count: gc.grid.corner_count(),
        cell_count: gc.grid.cell_count(),
        residue_sum: [sum.re, sum.im],
    };
    write_json(report, &ctx.path("glue.json"), "glue-summary", &summary)
}

// --- solve -----------------------------------------------------------------

/// The closed-form residues of the two-triangle fixture.
fn triangle_reference() -> (Complex, Complex, Complex) {
    let im = 0.5 * std::f64::consts::LN_2 / TAU;
    (
        cx(7.0 / 24.0 - 1.0, -im),
        cx(7.0 / 24.0 - 1.0, im),
        cx(-7.0 / 12.0, 0.0),
    )
}

/// Accessory-parameter problem of the two-triangle fixture: poles for the
/// two finite vertex classes, one face per triangle (the upper half-plane
/// develops onto the equilateral face, the lower one onto the isosceles
/// face), gauge pinned to (−1, +1).
fn triangle_problem(facts: &TriangleFacts) -> ParameterProblem {
    let apex = cx(0.5, 0.5 * 3.0_f64.sqrt());
    ParameterProblem {
        residues: vec![facts.res_a, facts.res_b],
        faces: vec![
            FaceSpec {
                corners: vec![
                    CornerRef::Finite(0),
                    CornerRef::Finite(1),
                    CornerRef::Infinity { ray: I },
                ],
                targets: vec![cx(0.0, 0.0), cx(1.0, 0.0), apex],
                basepoint: Some(cx(0.0, 0.9)),
                ring: false,
            },
            FaceSpec {
                corners: vec![
                    CornerRef::Finite(0),
                    CornerRef::Infinity { ray: -I },
                    CornerRef::Finite(1),
                ],
                targets: vec![cx(0.0, 0.0), cx(0.5, -0.5), cx(1.0, 0.0)],
                basepoint: Some(cx(0.0, -0.9)),
                ring: false,
            },
        ],
        pinned: vec![(0, cx(-1.0, 0.0)), (1, cx(1.0, 0.0))],
        initial: vec![cx(-1.0, 0.0), cx(1.0, 0.0)],
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TriangleSolution {
    poles: Vec<[f64; 2]>,
    residues: Vec<[f64; 2]>,
    infinity_residue: [f64; 2],
    residual_max: f64,
}

fn solve_triangle(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let (_, facts) = triangle_fixture();
    let problem = triangle_problem(&facts);
    let settings = ctx.scenario.solver.settings();
    let (positions, solve_report) =
        report.stage("solve", || Ok(solve_parameter_problem(&problem, &settings)?))?;
    report.residual_history = solve_report.residual_history.clone();
    report.check("solve-residual", solve_report.residual_max, 1e-8);

    let (ref_a, ref_b, ref_c) = triangle_reference();
    report.check("residue-a", (facts.res_a - ref_a).norm(), 1e-12);
    report.check("residue-b", (facts.res_b - ref_b).norm(), 1e-12);
    report.check("residue-c", (facts.res_c - ref_c).norm(), 1e-12);
    report.check(
        "residue-sum",
        (facts.res_a + facts.res_b + facts.res_c + cx(2.0, 0.0)).norm(),
        1e-12,
    );

    let solution = TriangleSolution {
        poles: positions.iter().map(|p| [p.re, p.im]).collect(),
        residues: vec![
            [facts.res_a.re, facts.res_a.im],
            [facts.res_b.re, facts.res_b.im],
        ],
        infinity_residue: [facts.res_c.re, facts.res_c.im],
        residual_max: solve_report.residual_max,
    };
    write_json(report, &ctx.path("triangle.json"), "triangle-solution", &solution)
}

fn write_poles_csv(
    ctx: &Ctx,
    report: &mut RunReport,
    map: &StraighteningMap,
) -> anyhow::Result<()> {
    let grid = map.field.grid;
    let mut table = Table::new(&[
        "pole",
        "i",
        "j",
        "position_re",
        "position_im",
        "residue_re",
        "residue_im",
    ]);
    for (k, p) in map.symbol.poles.iter().enumerate() {
        let (i, j) = grid.corner_coords(k);
        table.row(vec![
            k.to_string(),
            i.to_string(),
            j.to_string(),
            fmt_f64(p.position.re),
            fmt_f64(p.position.im),
            fmt_f64(p.residue.re),
            fmt_f64(p.residue.im),
        ]);
    }
    table.write(report, &ctx.path("poles.csv"), "poles")
}

pub fn cmd_solve(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    if ctx.scenario.field.is_triangle() {
        return solve_triangle(ctx, report);
    }
    let map = ctx.solve_raw(report)?;
    let map = report.stage("normalize", || Ok(map.normalize()?))?;
    report.check(
        "solve-residual",
        map.report.residual_max,
        ctx.scenario.solver.tol.max(1e-8),
    );
    write_json(report, &ctx.path("symbol.json"), "symbol", &map.symbol)?;
    write_json(report, &ctx.path("map.json"), "straightening-map", &map)?;
    if ctx.scenario.requests(OutputKind::Poles) {
        write_poles_csv(ctx, report, &map)?;
    }
    Ok(())
}

// --- eval ------------------------------------------------------------------

pub fn cmd_eval(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    if ctx.scenario.field.is_triangle() {
        bail!("eval needs a planar field scenario (the triangle fixture has no source grid)");
    }
    let map = ctx.solve_raw(report)?.normalize()?;
    let half = 0.9 * ctx.scenario.grid.half_side;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.scenario.seed);
    let mut table = Table::new(&["probe", "z_re", "z_im", "w_re", "w_im", "round_trip"]);
    let mut worst = 0.0_f64;
    report.stage("eval", || {
        for k in 0..20 {
            let z = cx(rng.random_range(-half..half), rng.random_range(-half..half));
            let w = map.evaluate(z)?;
            let back = map.inverse(w)?;
            let defect = (back - z).norm();
            worst = worst.max(defect);
            table.row(vec![
                k.to_string(),
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(w.re),
                fmt_f64(w.im),
                fmt_f64(defect),
            ]);
        }
        Ok(())
    })?;
    report.check("probe-round-trip", worst, 1e-8);
    table.write(report, &ctx.path("probes.csv"), "probes")
}

// --- trace -----------------------------------------------------------------

/// Symbol and a generic interior launch point for geodesic tracing.
fn traced_symbol(
    ctx: &Ctx,
    report: &mut RunReport,
) -> anyhow::Result<(ChristoffelSymbol, Complex)> {
    if ctx.scenario.field.is_triangle() {
        let (_, facts) = triangle_fixture();
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
        Ok((sym, cx(0.0, 0.9)))
    } else {
        let map = ctx.solve_raw(report)?;
        let grid = map.field.grid;
        let m = grid.subdivisions;
        let launch = map.evaluate(grid.cell_center(m / 2, m / 2))?;
        Ok((map.symbol, launch))
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TraceEnd {
    trace: usize,
    end: String,
    length: f64,
}

pub fn cmd_trace(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let (sym, launch) = traced_symbol(ctx, report)?;
    let opts = GeodesicOptions::default();
    let mut table = Table::new(&["trace", "point", "re", "im"]);
    let mut ends = Vec::new();
    report.stage("trace", || {
        for k in 0..8 {
            let dir = Complex::from_polar(1.0, TAU * k as f64 / 8.0);
            let trace = trace_geodesic(&sym, launch, dir, &opts)?;
            for (n, p) in trace.points.iter().enumerate() {
                table.row(vec![
                    k.to_string(),
                    n.to_string(),
                    fmt_f64(p.re),
                    fmt_f64(p.im),
                ]);
            }
            ends.push(TraceEnd {
                trace: k,
                end: match trace.end {
                    GeodesicEnd::Captured { pole } => format!("captured({pole})"),
                    GeodesicEnd::Escaped => "escaped".to_string(),
                    GeodesicEnd::ExhaustedLength => "length-budget".to_string(),
                    GeodesicEnd::ExhaustedSteps => "step-budget".to_string(),
                },
                length: trace.length,
            });
        }
        Ok(())
    })?;
    table.write(report, &ctx.path("geodesics.csv"), "geodesics")?;
    write_json(report, &ctx.path("trace_ends.json"), "trace-ends", &ends)
}

// --- transport -------------------------------------------------------------

/// Loop transport around every cone point: holonomy must equal
/// `exp(−2πi·res)`.
fn holonomy_defects(sym: &ChristoffelSymbol) -> anyhow::Result<(Table, f64)> {
    let mut table = Table::new(&["pole", "residue_re", "residue_im", "holonomy_defect"]);
    let mut worst = 0.0_f64;
    for (k, pole) in sym.poles.iter().enumerate() {
        if pole.residue == cx(0.0, 0.0) {
            continue;
        }
        let nearest = sym
            .poles
            .iter()
            .enumerate()
            .filter(|&(j, q)| j != k && q.residue != cx(0.0, 0.0))
            .map(|(_, q)| (q.position - pole.position).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = if nearest.is_finite() {
            0.3 * nearest
        } else {
            0.5
        };
        let path = PolylinePath::circle(pole.position, radius, 16);
        let result = parallel_transport(sym, &path)?;
        let expected = (-I * TAU * pole.residue).exp();
        let defect = (result.holonomy - expected).norm();
        worst = worst.max(defect);
        table.row(vec![
            k.to_string(),
            fmt_f64(pole.residue.re),
            fmt_f64(pole.residue.im),
            fmt_f64(defect),
        ]);
    }
    Ok((table, worst))
}

pub fn cmd_transport(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let (sym, _) = traced_symbol(ctx, report)?;
    let (table, worst) = report.stage("transport", || holonomy_defects(&sym))?;
    report.check("holonomy-loops", worst, 1e-8);
    table.write(report, &ctx.path("transport.csv"), "holonomy-loops")
}

// --- limits ----------------------------------------------------------------

/// Consecutive-defect ratio of the expansion table (the largest, so a pass
/// means every halving shrank the defect by ≥ 1.5×); 0 when the defects are
/// all at rounding level.
fn expansion_trend(defects: &[f64]) -> f64 {
    if defects.iter().all(|d| *d < 1e-14) {
        return 0.0;
    }
    defects
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max)
}

/// Final/first defect ratio of the comparison table; 0 when both ends are at
/// quadrature-rounding level.
fn compare_trend(rows: &[CompareRow]) -> f64 {
    let first = rows.first().map(|r| r.defect).unwrap_or(0.0);
    let last = rows.last().map(|r| r.defect).unwrap_or(0.0);
    if first < 1e-12 && last < 1e-12 {
        return 0.0;
    }
    last / first
}

fn limit_refinements(m: usize) -> Vec<usize> {
    let mut refs = vec![(m / 2).max(2), m];
    refs.dedup();
    refs
}

pub fn cmd_limits(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    if !ctx.scenario.field.is_smooth() {
        bail!(
            "limit tables need a field with a smooth 2-jet (zero, constant, or smooth-bump); \
             got {:?}",
            ctx.scenario.field
        );
    }
    let field = ctx.field()?;
    let center = ctx.scenario.field.center();

    let rows = report.stage("expansion", || {
        Ok(lambda_expansion_check(&field, center, &[0.1, 0.05, 0.025])?)
    })?;
    let mut expansion = Table::new(&[
        "epsilon",
        "measured_re",
        "measured_im",
        "predicted_re",
        "predicted_im",
        "defect",
    ]);
    for r in &rows {
        expansion.row(vec![
            fmt_f64(r.epsilon),
            fmt_f64(r.measured.re),
            fmt_f64(r.measured.im),
            fmt_f64(r.predicted.re),
            fmt_f64(r.predicted.im),
            fmt_f64(r.defect),
        ]);
    }
    expansion.write(report, &ctx.path("expansion.csv"), "expansion-table")?;
    let defects: Vec<f64> = rows.iter().map(|r| r.defect).collect();
    report.check("expansion-trend", expansion_trend(&defects), 1.0 / 1.5);

    let settings = ctx.scenario.solver.settings();
    let compare = report.stage("transport-limit", || {
        Ok(transport_limit_compare(
            &field,
            ctx.scenario.grid.half_side,
            &limit_refinements(ctx.scenario.grid.subdivisions),
            center.im,
            0.9,
            &settings,
        )?)
    })?;
    let mut table = Table::new(&["refinement", "defect", "runtime_ms"]);
    for r in &compare {
        table.row(vec![
            r.refinement.to_string(),
            fmt_f64(r.defect),
            r.runtime_ms.to_string(),
        ]);
    }
    table.write(report, &ctx.path("compare.csv"), "transport-limit-table")?;
    write_json(report, &ctx.path("compare.json"), "transport-limit-rows", &compare)?;
    report.check("compare-trend", compare_trend(&compare), 1.0);
    Ok(())
}

// --- render ----------------------------------------------------------------

mod svg {
    use super::*;
    use crate::render::SvgDoc;

    const SKELETON_STROKE: &str = "#1a5fb4";
    const HATCH_STROKE: &str = "#9ec5e8";
    const POLE_FILL: &str = "#241f31";

    fn bounds(points: &[Complex]) -> (Complex, Complex) {
        let mut lo = cx(f64::INFINITY, f64::INFINITY);
        let mut hi = cx(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = cx(lo.re.min(p.re), lo.im.min(p.im));
            hi = cx(hi.re.max(p.re), hi.im.max(p.im));
        }
        (lo, hi)
    }

    pub fn triangle() -> String {
        let apex_upper = cx(0.5, 0.5 * 3.0_f64.sqrt());
        let apex_lower = cx(0.5, -0.5);
        let a = cx(0.0, 0.0);
        let b = cx(1.0, 0.0);
        let (lo, hi) = bounds(&[a, b, apex_upper, apex_lower]);
        let mut doc = SvgDoc::new(lo, hi, 640.0);
        doc.path(&[a, b, apex_upper], SKELETON_STROKE, 1.5, true);
        doc.path(&[a, apex_lower, b], SKELETON_STROKE, 1.5, true);
        // One marker per vertex class: the two finite classes and the apex
        // class shared by both triangles.
        for v in [a, b, apex_upper] {
            doc.circle(v, 0.018, POLE_FILL);
        }
        doc.finish()
    }

    /// Image of the source segment `[from, to]` under the map, sampled at
    /// `steps` intervals.
    fn mapped_segment(
        map: &StraighteningMap,
        from: Complex,
        to: Complex,
        steps: usize,
    ) -> anyhow::Result<Vec<Complex>> {
        let mut points = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            points.push(map.evaluate(from + t * (to - from))?);
        }
        Ok(points)
    }

    pub fn grid_map(map: &StraighteningMap, hatch: bool) -> anyhow::Result<String> {
        let grid = map.field.grid;
        let m = grid.subdivisions;
        let steps_per_cell = 6;

        let mut skeleton: Vec<Vec<Complex>> = Vec::new();
        for j in 0..=m {
            skeleton.push(mapped_segment(
                map,
                grid.corner(0, j),
                grid.corner(m, j),
                steps_per_cell * m,
            )?);
        }
        for i in 0..=m {
            skeleton.push(mapped_segment(
                map,
                grid.corner(i, 0),
                grid.corner(i, m),
                steps_per_cell * m,
            )?);
        }

        let mut hatching: Vec<Vec<Complex>> = Vec::new();
        if hatch {
            let s = grid.cell_side();
            for j in 0..m {
                for q in 1..4 {
                    let y = grid.corner(0, j).im + 0.25 * q as f64 * s;
                    hatching.push(mapped_segment(
                        map,
                        cx(-grid.half_side, y),
                        cx(grid.half_side, y),
                        steps_per_cell * m,
                    )?);
                }
            }
            for i in 0..m {
                for q in 1..4 {
                    let x = grid.corner(i, 0).re + 0.25 * q as f64 * s;
                    hatching.push(mapped_segment(
                        map,
                        cx(x, -grid.half_side),
                        cx(x, grid.half_side),
                        steps_per_cell * m,
                    )?);
                }
            }
        }

        let all: Vec<Complex> = skeleton
            .iter()
            .flatten()
            .copied()
            .chain(map.symbol.poles.iter().map(|p| p.position))
            .collect();
        let (lo, hi) = bounds(&all);
        let mut doc = SvgDoc::new(lo, hi, 640.0);
        for line in &hatching {
            doc.path(line, HATCH_STROKE, 0.5, false);
        }
        for line in &skeleton {
            doc.path(line, SKELETON_STROKE, 1.2, false);
        }
        let pole_radius = 0.008 * (hi - lo).norm();
        for p in &map.symbol.poles {
            doc.circle(p.position, pole_radius, POLE_FILL);
        }
        Ok(doc.finish())
    }
}

pub fn cmd_render(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let text = if ctx.scenario.field.is_triangle() {
        report.stage("render", || Ok(svg::triangle()))?
    } else {
        let map = ctx.solve_raw(report)?.normalize()?;
        let hatch = ctx.scenario.requests(OutputKind::ImageGrid);
        report.stage("render", || svg::grid_map(&map, hatch))?
    };
    crate::emit::write_atomic(&ctx.path("render.svg"), text.as_bytes())?;
    report.outputs.push(crate::report::OutputRecord {
        name: "render".to_string(),
        file: ctx.path("render.svg").display().to_string(),
        bytes: text.len() as u64,
    });
    Ok(())
}

// --- verify ----------------------------------------------------------------

/// `exp(2πi·res)` versus the cycle's measured `λ·e^{iσ}`, maximized over the
/// given cycles.
fn cycle_consistency(gc: &GridComplex) -> f64 {
    let mut worst = 0.0_f64;
    for (cycle, res) in gc.corner_cycles.iter().zip(&gc.corner_residues) {
        let lhs = (I * TAU * res).exp();
        worst = worst.max((lhs - cycle.monodromy_factor()).norm());
    }
    worst
}

fn verify_triangle(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    solve_triangle(ctx, report)?;
    let (complex, facts) = triangle_fixture();

    // Measured cone data versus the residues, for every vertex class.
    let cycles = complex.vertex_cycles()?;
    let mut worst = 0.0_f64;
    for cycle in &cycles {
        let lhs = (I * TAU * cycle.residue()).exp();
        worst = worst.max((lhs - cycle.monodromy_factor()).norm());
    }
    report.check("cycle-consistency", worst, 1e-12);

    // Loop transport around the solved poles.
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
    let (_, worst) = holonomy_defects(&sym)?;
    report.check("holonomy-loops", worst, 1e-8);
    Ok(())
}

fn verify_grid(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    let pw = ctx.discretize(report)?;
    let gc = report.stage("glue", || Ok(build_grid_complex(&pw)?))?;
    let sum: Complex = gc.corner_residues.iter().sum();
    report.check("residue-sum", sum.norm(), 1e-10);
    report.check("cycle-consistency", cycle_consistency(&gc), 1e-12);

    let settings = ctx.scenario.solver.settings();
    let map = report.stage("solve", || Ok(solve_grid(&pw, &settings)?))?;
    report.residual_history = map.report.residual_history.clone();
    report.check("solve-residual", map.report.residual_max, 1e-8);

    // Per ∘ Glu: the developed periods at the solution reproduce each face's
    // normalized targets.
    let problem = grid_parameter_problem(&gc);
    let positions: Vec<Complex> = map.symbol.poles.iter().map(|p| p.position).collect();
    let per_defect = report.stage("per-map", || {
        let configs = per_map(&problem, &positions)?;
        let mut worst = 0.0_f64;
        for config in &configs {
            for (got, want) in config.normalized.iter().zip(&config.normalized_targets) {
                worst = worst.max((got - want).norm());
            }
        }
        Ok(worst)
    })?;
    report.check("per-glu-round-trip", per_defect, 1e-7);

    let (_, worst) = report.stage("holonomy", || holonomy_defects(&map.symbol))?;
    report.check("holonomy-loops", worst, 1e-8);

    // Probe round trips through the normalized map.
    let normalized = map.normalize()?;
    let half = 0.9 * ctx.scenario.grid.half_side;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.scenario.seed);
    let probe_defect = report.stage("probes", || {
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let z = cx(rng.random_range(-half..half), rng.random_range(-half..half));
            let w = normalized.evaluate(z)?;
            worst = worst.max((normalized.inverse(w)? - z).norm());
        }
        Ok(worst)
    })?;
    report.check("probe-round-trip", probe_defect, 1e-8);

    if ctx.scenario.field.is_smooth() {
        let field = ctx.field()?;
        let center = ctx.scenario.field.center();
        let rows = report.stage("expansion", || {
            Ok(lambda_expansion_check(&field, center, &[0.1, 0.05, 0.025])?)
        })?;
        let defects: Vec<f64> = rows.iter().map(|r| r.defect).collect();
        report.check("expansion-trend", expansion_trend(&defects), 1.0 / 1.5);

        let compare = report.stage("transport-limit", || {
            Ok(transport_limit_compare(
                &field,
                ctx.scenario.grid.half_side,
                &limit_refinements(ctx.scenario.grid.subdivisions),
                center.im,
                0.9,
                &settings,
            )?)
        })?;
        report.check("compare-trend", compare_trend(&compare), 1.0);
    } else {
        report.skip("expansion-trend");
        report.skip("compare-trend");
    }
    Ok(())
}

pub fn cmd_verify(ctx: &Ctx, report: &mut RunReport) -> anyhow::Result<()> {
    if ctx.scenario.field.is_triangle() {
        verify_triangle(ctx, report)?;
    } else {
        verify_grid(ctx, report)?;
    }
    let mut table = Table::new(&["check", "status", "defect", "budget"]);
    for check in &report.invariants {
        table.row(vec![
            check.name.clone(),
            match check.status {
                crate::report::CheckStatus::Pass => "pass".to_string(),
                crate::report::CheckStatus::Fail => "fail".to_string(),
                crate::report::CheckStatus::Skipped => "skipped".to_string(),
            },
            fmt_f64(check.defect),
            fmt_f64(check.budget),
        ]);
    }
    table.write(report, &ctx.path("verify.csv"), "verify-battery")
}
