//! Polygons glued along edges by complex-affine maps.
//!
//! A gluing complex is a finite set of positively oriented planar polygons
//! together with a pairing of their edges; each pair carries the unique
//! complex-affine map sending one edge onto the other with reversed
//! orientation. Walking the corner flags around an identified vertex yields
//! its cone data: total angle `θ` (sum of sector angles), dilation `λ`
//! (inverse of the product of crossing dilations), monodromy factor `λ·e^{iσ}`
//! with `σ = ±θ`, and residue `(log λ + iσ)/(2πi) − 1`.
//!
//! Flag convention: the flag at vertex `v` of a polygon stores the edge
//! *leaving* `v` (its "before" edge); sweeping anticlockwise around `v`
//! crosses the before edge, then the sector, then the edge *arriving* at `v`
//! (the "after" edge). The successor flag crosses the after edge through its
//! pairing map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affine::Affine;
use crate::fields::{GridSpec, PiecewiseField};
use crate::wire::{complex_list, complex_opt, complex_pair};
use crate::{cx, Complex, Error, Result, I};

const TAU: f64 = std::f64::consts::TAU;

/// Geometric kind of a polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolygonKind {
    /// Ordinary bounded polygon, vertex loop CCW.
    Bounded,
    /// Bounded vertex loop enclosing the *unbounded* region: the polygon is
    /// the outside of the loop (plus the point at infinity in its interior).
    /// The stored loop is clockwise in the plane, which is CCW as the
    /// boundary of the region.
    ContainsInfinity,
    /// Unbounded polygon with two half-line edges: one leaving the last
    /// vertex along `dir_out`, one arriving at the first vertex along
    /// `dir_in` (pointing away from the vertex). Gluing half-line edges
    /// requires marked points on both rays.
    Unbounded {
        #[serde(with = "complex_pair")]
        dir_out: Complex,
        #[serde(with = "complex_pair")]
        dir_in: Complex,
        #[serde(with = "complex_opt", default)]
        marked_out: Option<Complex>,
        #[serde(with = "complex_opt", default)]
        marked_in: Option<Complex>,
    },
}

/// A planar polygon with finite vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPolygon {
    #[serde(with = "complex_list")]
    pub vertices: Vec<Complex>,
    #[serde(flatten)]
    pub kind: PolygonKind,
}

/// Edge geometry, oriented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeGeometry {
    /// Finite edge from `start` to `end`.
    Segment { start: Complex, end: Complex },
    /// Half line leaving `from` along `dir`.
    RayOut { from: Complex, dir: Complex },
    /// Half line arriving at `to`; the ray extends from `to` along `dir`.
    RayIn { to: Complex, dir: Complex },
}

impl PlanarPolygon {
    pub fn bounded(vertices: Vec<Complex>) -> Self {
        PlanarPolygon {
            vertices,
            kind: PolygonKind::Bounded,
        }
    }

    pub fn containing_infinity(vertices: Vec<Complex>) -> Self {
        PlanarPolygon {
            vertices,
            kind: PolygonKind::ContainsInfinity,
        }
    }

    pub fn edge_count(&self) -> usize {
        match self.kind {
            PolygonKind::Bounded | PolygonKind::ContainsInfinity => self.vertices.len(),
            PolygonKind::Unbounded { .. } => self.vertices.len() + 1,
        }
    }

    pub fn edge(&self, index: usize) -> EdgeGeometry {
        let r = self.vertices.len();
        match &self.kind {
            PolygonKind::Bounded | PolygonKind::ContainsInfinity => EdgeGeometry::Segment {
                start: self.vertices[index],
                end: self.vertices[(index + 1) % r],
            },
            PolygonKind::Unbounded {
                dir_out, dir_in, ..
            } => {
                if index + 2 <= r {
                    EdgeGeometry::Segment {
                        start: self.vertices[index],
                        end: self.vertices[index + 1],
                    }
                } else if index == r - 1 {
                    EdgeGeometry::RayOut {
                        from: self.vertices[r - 1],
                        dir: *dir_out,
                    }
                } else {
                    EdgeGeometry::RayIn {
                        to: self.vertices[0],
                        dir: *dir_in,
                    }
                }
            }
        }
    }

    /// Index of the edge leaving vertex `v` (the flag's "before" edge).
    pub fn edge_leaving(&self, v: usize) -> usize {
        v
    }

    /// Index of the edge arriving at vertex `v` (the flag's "after" edge).
    pub fn edge_arriving(&self, v: usize) -> usize {
        let r = self.vertices.len();
        match self.kind {
            PolygonKind::Bounded | PolygonKind::ContainsInfinity => (v + r - 1) % r,
            PolygonKind::Unbounded { .. } => {
                if v == 0 {
                    r // the incoming ray
                } else {
                    v - 1
                }
            }
        }
    }

    /// Direction in which an edge leaves one of its finite endpoints.
    fn edge_direction_from(&self, edge: usize, vertex: Complex) -> Complex {
        match self.edge(edge) {
            EdgeGeometry::Segment { start, end } => {
                if (vertex - start).norm() <= (vertex - end).norm() {
                    end - start
                } else {
                    start - end
                }
            }
            EdgeGeometry::RayOut { dir, .. } => dir,
            EdgeGeometry::RayIn { dir, .. } => dir,
        }
    }

    /// Interior sector angle at vertex `v`, in `(0, 2π)`; flat (π) and reflex
    /// angles are allowed.
    pub fn sector_angle(&self, v: usize) -> f64 {
        let p = self.vertices[v];
        let before = self.edge_direction_from(self.edge_leaving(v), p);
        let after = self.edge_direction_from(self.edge_arriving(v), p);
        let ang = (after / before).arg().rem_euclid(TAU);
        if ang == 0.0 {
            TAU
        } else {
            ang
        }
    }

    fn signed_area(&self) -> f64 {
        let r = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..r {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % r];
            acc += a.re * b.im - b.re * a.im;
        }
        0.5 * acc
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidPolygon {
                reason: format!("needs at least 3 vertices, has {}", self.vertices.len()),
            });
        }
        if self.vertices.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidPolygon {
                reason: "non-finite vertex".into(),
            });
        }
        match &self.kind {
            PolygonKind::Bounded => {
                if self.signed_area() <= 0.0 {
                    return Err(Error::InvalidPolygon {
                        reason: "bounded polygon must be positively oriented".into(),
                    });
                }
            }
            PolygonKind::ContainsInfinity => {
                if self.signed_area() >= 0.0 {
                    return Err(Error::InvalidPolygon {
                        reason: "loop around infinity must be clockwise in the plane".into(),
                    });
                }
            }
            PolygonKind::Unbounded {
                dir_out, dir_in, ..
            } => {
                if dir_out.norm() == 0.0 || dir_in.norm() == 0.0 {
                    return Err(Error::InvalidPolygon {
                        reason: "ray directions must be nonzero".into(),
                    });
                }
            }
        }
        // Simplicity: non-adjacent finite edges must not intersect.
        let n = self.vertices.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                if let (
                    EdgeGeometry::Segment { start: a, end: b },
                    EdgeGeometry::Segment { start: c, end: d },
                ) = (self.edge(i.min(self.edge_count() - 1)), self.edge(j.min(self.edge_count() - 1)))
                {
                    if segments_cross(a, b, c, d) {
                        return Err(Error::InvalidPolygon {
                            reason: format!("edges {i} and {j} intersect"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn orient(a: Complex, b: Complex, c: Complex) -> f64 {
    (b.re - a.re) * (c.im - a.im) - (b.im - a.im) * (c.re - a.re)
}

fn segments_cross(a: Complex, b: Complex, c: Complex, d: Complex) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Reference to one edge of one polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef {
    pub polygon: usize,
    pub edge: usize,
}

/// A glued pair of edges with the complex-affine map sending the first onto
/// the second with reversed orientation (`map(start₁) = end₂`,
/// `map(end₁) = start₂`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePairing {
    pub first: EdgeRef,
    pub second: EdgeRef,
    pub map: Affine,
}

/// Computes the pairing map for two edges, reversing orientation.
pub fn pairing_map(e1: EdgeGeometry, e2: EdgeGeometry) -> Result<Affine> {
    match (e1, e2) {
        (
            EdgeGeometry::Segment { start: a, end: b },
            EdgeGeometry::Segment { start: c, end: d },
        ) => Affine::from_two_points(a, d, b, c),
        (
            EdgeGeometry::RayOut { from: v1, dir: d1 },
            EdgeGeometry::RayIn { to: v2, dir: d2 },
        )
        | (
            EdgeGeometry::RayIn { to: v1, dir: d1 },
            EdgeGeometry::RayOut { from: v2, dir: d2 },
        ) => {
            // One-parameter family a·(z − v1) + v2 with a·d1 ∝ d2; the scale
            // must come from marked points, which the caller supplies through
            // `pairing_map_marked`.
            let _ = (v1, v2, d1, d2);
            Err(Error::MissingMarkedPoints)
        }
        _ => Err(Error::InconsistentPairing {
            first_polygon: usize::MAX,
            first_edge: usize::MAX,
            second_polygon: usize::MAX,
            second_edge: usize::MAX,
            reason: "edge kinds cannot be glued orientation-reversingly".into(),
        }),
    }
}

/// Pairing map for unbounded edges, pinned by one marked point on each ray.
pub fn pairing_map_marked(
    e1: EdgeGeometry,
    m1: Complex,
    e2: EdgeGeometry,
    m2: Complex,
) -> Result<Affine> {
    let (v1, v2) = match (e1, e2) {
        (EdgeGeometry::RayOut { from, .. }, EdgeGeometry::RayIn { to, .. }) => (from, to),
        (EdgeGeometry::RayIn { to, .. }, EdgeGeometry::RayOut { from, .. }) => (to, from),
        _ => {
            return Err(Error::InconsistentPairing {
                first_polygon: usize::MAX,
                first_edge: usize::MAX,
                second_polygon: usize::MAX,
                second_edge: usize::MAX,
                reason: "marked pairing applies to ray edges only".into(),
            })
        }
    };
    Affine::from_two_points(v1, v2, m1, m2)
}

/// Corner flag: vertex `vertex` of polygon `polygon` with its before-edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flag {
    pub polygon: usize,
    pub vertex: usize,
}

/// One step of a vertex cycle: the flag, its sector angle, and the dilation
/// of the crossing that leads to the next flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStep {
    pub flag: Flag,
    pub angle: f64,
    pub crossing_dilation: f64,
}

/// Cone data of one identified vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCycle {
    pub steps: Vec<CycleStep>,
    /// Total cone angle `θ`.
    pub angle: f64,
    /// Dilation `λ`: inverse of the product of crossing dilations around the
    /// cycle.
    pub dilation: f64,
    /// Whether the identified vertex lies at infinity (`σ = −θ`).
    pub infinite: bool,
    /// Position of the first flag's vertex (reporting only).
    #[serde(with = "complex_pair")]
    pub representative: Complex,
}

impl VertexCycle {
    /// Builds cone data directly from `(θ, λ)`, for tests and assigned
    /// (non-enumerated) vertices.
    pub fn synthetic(angle: f64, dilation: f64, infinite: bool) -> Self {
        VertexCycle {
            steps: Vec::new(),
            angle,
            dilation,
            infinite,
            representative: cx(0.0, 0.0),
        }
    }

    /// `σ`: the angle with the sign convention `+θ` finite, `−θ` infinite.
    pub fn sigma(&self) -> f64 {
        if self.infinite {
            -self.angle
        } else {
            self.angle
        }
    }

    /// Monodromy factor `λ·e^{iσ}` of the anticlockwise loop around the
    /// vertex.
    pub fn monodromy_factor(&self) -> Complex {
        Complex::from_polar(self.dilation, self.sigma())
    }

    /// Residue `(log λ + iσ)/(2πi) − 1`.
    pub fn residue(&self) -> Complex {
        (cx(self.dilation.ln(), self.sigma())) / (I * TAU) - 1.0
    }
}

/// Residue of a vertex cycle (free-function form of [`VertexCycle::residue`]).
pub fn residue_of_cycle(cycle: &VertexCycle) -> Complex {
    cycle.residue()
}

/// Monodromy factor `Λ` and residue of a lattice corner from the four
/// adjacent cell values `(M₀ NE, M₁ NW, M₂ SW, M₃ SE)`.
///
/// `Λ = L₁·L₃/(L₀·L₂)` with `L = (1 + M)/(1 − M)`; the residue is
/// `log_p(Λ)/(2πi)`.
pub fn corner_monodromy(values: [Complex; 4]) -> (Complex, Complex) {
    let l = |m: Complex| (1.0 + m) / (1.0 - m);
    let factor = l(values[1]) * l(values[3]) / (l(values[0]) * l(values[2]));
    (factor, factor.ln() / (I * TAU))
}

/// Descriptor of the local Riemann chart at a cone point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChart {
    /// Similarity-chart exponent `α = (log λ + iθ)/(2πi) = res + 1`: near the
    /// vertex the developed chart behaves like `w ↦ w^α`.
    #[serde(with = "complex_pair")]
    pub alpha: Complex,
    /// Exponent `2πi/(log λ + iθ)` closing the developed sector stack onto a
    /// punctured disk (the reciprocal of `alpha`).
    #[serde(with = "complex_pair")]
    pub closing_exponent: Complex,
    /// Scale/rotate constants of the sector development, one per flag:
    /// `(sector angle, crossing dilation)`.
    pub sector_steps: Vec<(f64, f64)>,
}

/// Local model chart of a vertex cycle.
///
/// With `θ = 2π`, `λ = 1` the exponent is 1 and the chart is the identity.
pub fn local_model_chart(cycle: &VertexCycle) -> ModelChart {
    let u = cx(cycle.dilation.ln(), cycle.angle);
    ModelChart {
        alpha: u / (I * TAU),
        closing_exponent: I * TAU / u,
        sector_steps: cycle
            .steps
            .iter()
            .map(|s| (s.angle, s.crossing_dilation))
            .collect(),
    }
}

/// A set of polygons glued along paired edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluingComplex {
    pub polygons: Vec<PlanarPolygon>,
    pub pairings: Vec<EdgePairing>,
}

impl GluingComplex {
    /// Largest pairwise vertex distance (guard-radius scale).
    pub fn diameter(&self) -> f64 {
        let (mut xlo, mut xhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.polygons {
            for v in &p.vertices {
                xlo = xlo.min(v.re);
                xhi = xhi.max(v.re);
                ylo = ylo.min(v.im);
                yhi = yhi.max(v.im);
            }
        }
        ((xhi - xlo).powi(2) + (yhi - ylo).powi(2)).sqrt().max(1e-300)
    }

    /// Lookup table edge → (pairing index, is-first-slot).
    fn edge_table(&self) -> Result<BTreeMap<EdgeRef, (usize, bool)>> {
        let mut table = BTreeMap::new();
        for (k, pairing) in self.pairings.iter().enumerate() {
            for (edge, slot) in [(pairing.first, true), (pairing.second, false)] {
                if table.insert(edge, (k, slot)).is_some() {
                    return Err(Error::InconsistentPairing {
                        first_polygon: edge.polygon,
                        first_edge: edge.edge,
                        second_polygon: edge.polygon,
                        second_edge: edge.edge,
                        reason: "edge appears in more than one pairing".into(),
                    });
                }
            }
        }
        for (pi, poly) in self.polygons.iter().enumerate() {
            for e in 0..poly.edge_count() {
                let edge = EdgeRef {
                    polygon: pi,
                    edge: e,
                };
                if !table.contains_key(&edge) {
                    return Err(Error::InconsistentPairing {
                        first_polygon: pi,
                        first_edge: e,
                        second_polygon: pi,
                        second_edge: e,
                        reason: "edge is not glued".into(),
                    });
                }
            }
        }
        Ok(table)
    }

    /// Structural validation: polygons, pairing maps against edge geometry,
    /// full edge cover, and the Euler check `V − E + F = 2`.
    pub fn validate(&self) -> Result<()> {
        for p in &self.polygons {
            p.validate()?;
        }
        let tol = 1e-9 * self.diameter();
        for pairing in &self.pairings {
            let e1 = self.polygons[pairing.first.polygon].edge(pairing.first.edge);
            let e2 = self.polygons[pairing.second.polygon].edge(pairing.second.edge);
            let bad = |reason: String| Error::InconsistentPairing {
                first_polygon: pairing.first.polygon,
                first_edge: pairing.first.edge,
                second_polygon: pairing.second.polygon,
                second_edge: pairing.second.edge,
                reason,
            };
            match (e1, e2) {
                (
                    EdgeGeometry::Segment { start: a, end: b },
                    EdgeGeometry::Segment { start: c, end: d },
                ) => {
                    let err1 = (pairing.map.apply(a) - d).norm();
                    let err2 = (pairing.map.apply(b) - c).norm();
                    if err1 > tol || err2 > tol {
                        return Err(bad(format!(
                            "map misses endpoints by {:.3e}, {:.3e}",
                            err1, err2
                        )));
                    }
                }
                (
                    EdgeGeometry::RayOut { from: v1, dir: d1 },
                    EdgeGeometry::RayIn { to: v2, dir: d2 },
                )
                | (
                    EdgeGeometry::RayIn { to: v1, dir: d1 },
                    EdgeGeometry::RayOut { from: v2, dir: d2 },
                ) => {
                    if (pairing.map.apply(v1) - v2).norm() > tol {
                        return Err(bad("map misses the finite ray endpoint".into()));
                    }
                    let image_dir = pairing.map.a * d1;
                    let cross = image_dir.re * d2.im - image_dir.im * d2.re;
                    let dot = image_dir.re * d2.re + image_dir.im * d2.im;
                    if cross.abs() > tol * d2.norm() || dot <= 0.0 {
                        return Err(bad("map does not carry the ray onto its partner".into()));
                    }
                }
                _ => return Err(bad("edge kinds cannot be glued".into())),
            }
        }
        let cycles = self.vertex_cycles()?;
        let chi = cycles.len() as i64 - self.pairings.len() as i64 + self.polygons.len() as i64;
        if chi != 2 {
            return Err(Error::EulerCheckFailed { chi });
        }
        Ok(())
    }

    /// Successor of a flag: cross the after-edge through its pairing.
    /// Returns the next flag and the dilation of the crossing map.
    fn successor(
        &self,
        flag: Flag,
        table: &BTreeMap<EdgeRef, (usize, bool)>,
    ) -> Result<(Flag, f64)> {
        let poly = &self.polygons[flag.polygon];
        let after = EdgeRef {
            polygon: flag.polygon,
            edge: poly.edge_arriving(flag.vertex),
        };
        let (k, is_first) = *table.get(&after).ok_or(Error::InconsistentPairing {
            first_polygon: after.polygon,
            first_edge: after.edge,
            second_polygon: after.polygon,
            second_edge: after.edge,
            reason: "edge is not glued".into(),
        })?;
        let pairing = &self.pairings[k];
        let (map, target) = if is_first {
            (pairing.map, pairing.second)
        } else {
            (pairing.map.inverse(), pairing.first)
        };
        let successor = Flag {
            polygon: target.polygon,
            vertex: target.edge, // image edge leaves the image vertex
        };
        let v = poly.vertices[flag.vertex];
        let image = map.apply(v);
        let succ_pos = self.polygons[successor.polygon].vertices[successor.vertex];
        let tol = 1e-7 * self.diameter();
        if (image - succ_pos).norm() > tol {
            return Err(Error::InconsistentPairing {
                first_polygon: after.polygon,
                first_edge: after.edge,
                second_polygon: target.polygon,
                second_edge: target.edge,
                reason: format!(
                    "vertex image {image} does not land on successor vertex {succ_pos}"
                ),
            });
        }
        Ok((successor, map.dilation()))
    }

    /// Enumerates all vertex cycles (finite vertices; ray endpoints at
    /// infinity are never stored as vertices).
    pub fn vertex_cycles(&self) -> Result<Vec<VertexCycle>> {
        let table = self.edge_table()?;
        let mut visited: Vec<Vec<bool>> = self
            .polygons
            .iter()
            .map(|p| vec![false; p.vertices.len()])
            .collect();
        let mut cycles = Vec::new();
        for p0 in 0..self.polygons.len() {
            for v0 in 0..self.polygons[p0].vertices.len() {
                if visited[p0][v0] {
                    continue;
                }
                let start = Flag {
                    polygon: p0,
                    vertex: v0,
                };
                let mut steps = Vec::new();
                let mut angle = 0.0;
                let mut dilation_product = 1.0;
                let mut flag = start;
                loop {
                    if visited[flag.polygon][flag.vertex] {
                        return Err(Error::InconsistentPairing {
                            first_polygon: flag.polygon,
                            first_edge: flag.vertex,
                            second_polygon: start.polygon,
                            second_edge: start.vertex,
                            reason: "flag revisited before closing its cycle".into(),
                        });
                    }
                    visited[flag.polygon][flag.vertex] = true;
                    let sector = self.polygons[flag.polygon].sector_angle(flag.vertex);
                    let (next, crossing) = self.successor(flag, &table)?;
                    steps.push(CycleStep {
                        flag,
                        angle: sector,
                        crossing_dilation: crossing,
                    });
                    angle += sector;
                    dilation_product *= crossing;
                    flag = next;
                    if flag == start {
                        break;
                    }
                }
                cycles.push(VertexCycle {
                    representative: self.polygons[p0].vertices[v0],
                    steps,
                    angle,
                    dilation: 1.0 / dilation_product,
                    infinite: false,
                });
            }
        }
        Ok(cycles)
    }
}

/// A grid complex: cell parallelograms `a_j(Q_j)` for `a_j(z) = z + μ_j·z̄`
/// plus the undeformed exterior, glued along shared lattice edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridComplex {
    pub complex: GluingComplex,
    pub grid: GridSpec,
    pub field: PiecewiseField,
    /// Cycles indexed by lattice corner.
    pub corner_cycles: Vec<VertexCycle>,
    /// Residues indexed by lattice corner.
    #[serde(with = "complex_list")]
    pub corner_residues: Vec<Complex>,
    /// Polygon index of the exterior face.
    pub exterior_face: usize,
}

/// Assigned cone data of the exterior face's point at infinity:
/// `θ = 2π`, `λ = 1`, so the residue is −2.
pub fn exterior_infinity_cycle() -> VertexCycle {
    let mut c = VertexCycle::synthetic(TAU, 1.0, true);
    c.representative = cx(f64::INFINITY, f64::INFINITY);
    c
}

/// Boundary lattice corners `(i, j)` in the clockwise-in-plane order used by
/// the exterior polygon, starting at `(0, 0)`.
pub(crate) fn boundary_loop(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(4 * m);
    for j in 0..m {
        out.push((0, j));
    }
    for i in 0..m {
        out.push((i, m));
    }
    for j in (1..=m).rev() {
        out.push((m, j));
    }
    for i in (1..=m).rev() {
        out.push((i, 0));
    }
    out
}

/// Builds the gluing complex of a piecewise-constant field: one parallelogram
/// per cell, the exterior as a single clockwise loop, shared edges paired via
/// `a_k ∘ a_j⁻¹` restricted to the edge (a complex-affine map determined by
/// the two shared lattice corners).
pub fn build_grid_complex(pw: &PiecewiseField) -> Result<GridComplex> {
    let grid = pw.grid;
    let m = grid.subdivisions;
    let mut polygons = Vec::with_capacity(grid.cell_count() + 1);
    for j in 0..m {
        for i in 0..m {
            let chart = pw.chart(i, j);
            let vertices = grid.cell_corners(i, j).map(|q| chart.apply(q)).to_vec();
            polygons.push(PlanarPolygon::bounded(vertices));
        }
    }
    let loop_corners = boundary_loop(m);
    let exterior_vertices: Vec<Complex> =
        loop_corners.iter().map(|&(i, j)| grid.corner(i, j)).collect();
    polygons.push(PlanarPolygon::containing_infinity(exterior_vertices));
    let exterior_face = m * m;

    // Exterior edge index by (sorted) lattice-corner pair.
    let mut exterior_edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (e, k) in loop_corners.iter().enumerate() {
        let next = loop_corners[(e + 1) % loop_corners.len()];
        let a = grid.corner_index(k.0, k.1);
        let b = grid.corner_index(next.0, next.1);
        exterior_edges.insert((a.min(b), a.max(b)), e);
    }

    // Cell edge e spans lattice corners (corner_of[e], corner_of[e+1]).
    let mut pairings = Vec::new();
    for j in 0..m {
        for i in 0..m {
            let cell = grid.cell_index(i, j);
            let idx = grid.cell_corner_indices(i, j);
            let corners = grid.cell_corners(i, j);
            let chart = pw.chart(i, j);
            // (edge, neighbor cell, neighbor edge)
            let neighbors: [(usize, Option<(usize, usize)>, usize); 4] = [
                (0, (j > 0).then(|| (i, j - 1)), 2),
                (1, (i + 1 < m).then(|| (i + 1, j)), 3),
                (2, (j + 1 < m).then(|| (i, j + 1)), 0),
                (3, (i > 0).then(|| (i - 1, j)), 1),
            ];
            for (e, neighbor, opposite) in neighbors {
                let (q1, q2) = (corners[e], corners[(e + 1) % 4]);
                match neighbor {
                    Some((ni, nj)) => {
                        let ncell = grid.cell_index(ni, nj);
                        if ncell < cell {
                            continue; // already paired from the other side
                        }
                        let nchart = pw.chart(ni, nj);
                        let map = Affine::from_two_points(
                            chart.apply(q1),
                            nchart.apply(q1),
                            chart.apply(q2),
                            nchart.apply(q2),
                        )?;
                        pairings.push(EdgePairing {
                            first: EdgeRef {
                                polygon: cell,
                                edge: e,
                            },
                            second: EdgeRef {
                                polygon: ncell,
                                edge: opposite,
                            },
                            map,
                        });
                    }
                    None => {
                        let a = idx[e];
                        let b = idx[(e + 1) % 4];
                        let ext_edge = exterior_edges[&(a.min(b), a.max(b))];
                        // Exterior chart is the identity.
                        let map =
                            Affine::from_two_points(chart.apply(q1), q1, chart.apply(q2), q2)?;
                        pairings.push(EdgePairing {
                            first: EdgeRef {
                                polygon: cell,
                                edge: e,
                            },
                            second: EdgeRef {
                                polygon: exterior_face,
                                edge: ext_edge,
                            },
                            map,
                        });
                    }
                }
            }
        }
    }

    let complex = GluingComplex { polygons, pairings };
    let cycles = complex.vertex_cycles()?;

    // Attach each cycle to its lattice corner through any cell flag.
    let mut corner_cycles: Vec<Option<VertexCycle>> = vec![None; grid.corner_count()];
    for cycle in cycles {
        let cell_flag = cycle
            .steps
            .iter()
            .find(|s| s.flag.polygon < exterior_face)
            .map(|s| s.flag)
            .ok_or_else(|| Error::InvalidInput("cycle without cell flag".into()))?;
        let (ci, cj) = (
            cell_flag.polygon % grid.subdivisions,
            cell_flag.polygon / grid.subdivisions,
        );
        let corner = grid.cell_corner_indices(ci, cj)[cell_flag.vertex];
        corner_cycles[corner] = Some(cycle);
    }
    let corner_cycles: Vec<VertexCycle> = corner_cycles
        .into_iter()
        .enumerate()
        .map(|(k, c)| c.ok_or(Error::InvalidInput(format!("corner {k} has no cycle"))))
        .collect::<Result<_>>()?;
    let corner_residues = corner_cycles.iter().map(|c| c.residue()).collect();

    let gc = GridComplex {
        complex,
        grid,
        field: pw.clone(),
        corner_cycles,
        corner_residues,
        exterior_face,
    };
    gc.complex.validate()?;
    Ok(gc)
}

/// Exact cone data of the worked two-triangle example.
#[derive(Debug, Clone, Copy)]
pub struct TriangleFacts {
    pub res_a: Complex,
    pub res_b: Complex,
    pub res_c: Complex,
    pub theta_a: f64,
    pub theta_c: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
}

/// The two-triangle fixture: an equilateral triangle `(0, 1, (1+i√3)/2)`
/// glued to a right isosceles triangle `(0, (1−i)/2, 1)` along all three
/// edges (`AB↔BA` by the identity, `CA↔AC`, `BC↔CB`).
///
/// Its three vertex cycles carry `λ_A = √2`, `λ_B = 1/√2`, `λ_C = 1` and
/// `θ_A = θ_B = 7π/12`, `θ_C = 5π/6`; the residues sum to −2 exactly.
pub fn triangle_fixture() -> (GluingComplex, TriangleFacts) {
    let c1 = cx(0.5, 0.5 * 3.0_f64.sqrt());
    let c2 = cx(0.5, -0.5);
    let t1 = PlanarPolygon::bounded(vec![cx(0.0, 0.0), cx(1.0, 0.0), c1]);
    let t2 = PlanarPolygon::bounded(vec![cx(0.0, 0.0), c2, cx(1.0, 0.0)]);
    // T1 edges: 0 = A→B, 1 = B→C, 2 = C→A. T2 edges: 0 = A→C, 1 = C→B, 2 = B→A.
    let pair = |p1, e1, p2, e2, map| EdgePairing {
        first: EdgeRef {
            polygon: p1,
            edge: e1,
        },
        second: EdgeRef {
            polygon: p2,
            edge: e2,
        },
        map,
    };
    let id = Affine::IDENTITY;
    let map_ca = Affine::new(c2 / c1, cx(0.0, 0.0));
    let map_bc = Affine::from_two_points(cx(1.0, 0.0), cx(1.0, 0.0), c1, c2).unwrap();
    let complex = GluingComplex {
        polygons: vec![t1, t2],
        pairings: vec![
            pair(0, 0, 1, 2, id),
            pair(0, 2, 1, 0, map_ca),
            pair(0, 1, 1, 1, map_bc),
        ],
    };
    let ln_sqrt2 = 0.5 * std::f64::consts::LN_2;
    let facts = TriangleFacts {
        res_a: cx(7.0 / 24.0 - 1.0, -ln_sqrt2 / TAU),
        res_b: cx(7.0 / 24.0 - 1.0, ln_sqrt2 / TAU),
        res_c: cx(5.0 / 12.0 - 1.0, 0.0),
        theta_a: 7.0 * TAU / 24.0,
        theta_c: 5.0 * TAU / 12.0,
        lambda_a: 2.0_f64.sqrt(),
        lambda_b: 1.0 / 2.0_f64.sqrt(),
    };
    (complex, facts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{average_field, AveragingTransform, BeltramiField};

    #[test]
    fn sector_angles_of_a_square() {
        let p = PlanarPolygon::bounded(vec![
            cx(0.0, 0.0),
            cx(1.0, 0.0),
            cx(1.0, 1.0),
            cx(0.0, 1.0),
        ]);
        for v in 0..4 {
            assert!((p.sector_angle(v) - TAU / 4.0).abs() < 1e-15);
        }
        p.validate().unwrap();
    }

    #[test]
    fn exterior_loop_angles() {
        // Exterior of the unit square: clockwise loop, reflex angles 3π/2.
        let p = PlanarPolygon::containing_infinity(vec![
            cx(0.0, 0.0),
            cx(0.0, 1.0),
            cx(1.0, 1.0),
            cx(1.0, 0.0),
        ]);
        for v in 0..4 {
            assert!((p.sector_angle(v) - 3.0 * TAU / 4.0).abs() < 1e-15);
        }
        p.validate().unwrap();
    }

    #[test]
    fn synthetic_cycle_monodromy_and_chart() {
        // Two sectors of angles τ/6 and τ/12 glued with dilation 2: the loop
        // multiplies by (i/2).
        let cycle = VertexCycle::synthetic(TAU / 4.0, 0.5, false);
        let mono = cycle.monodromy_factor();
        assert!((mono - cx(0.0, 0.5)).norm() < 1e-15);
        let chart = local_model_chart(&cycle);
        let expected_alpha = cx(0.25, 2.0_f64.ln() / TAU);
        assert!((chart.alpha - expected_alpha).norm() < 1e-15);
        assert!((chart.alpha * chart.closing_exponent - cx(1.0, 0.0)).norm() < 1e-15);
        // exp(2πi·res) reproduces the monodromy factor.
        let back = (I * TAU * cycle.residue()).exp();
        assert!((back - mono).norm() < 1e-15);
    }

    #[test]
    fn flat_cycle_chart_is_identity() {
        let cycle = VertexCycle::synthetic(TAU, 1.0, false);
        let chart = local_model_chart(&cycle);
        assert!((chart.alpha - cx(1.0, 0.0)).norm() < 1e-15);
        assert!(cycle.residue().norm() < 1e-15);
    }

    #[test]
    fn triangle_fixture_matches_worked_values() {
        let (complex, facts) = triangle_fixture();
        complex.validate().unwrap();
        let cycles = complex.vertex_cycles().unwrap();
        assert_eq!(cycles.len(), 3);
        // Identify cycles by their representatives (vertex positions of T1).
        for cycle in &cycles {
            let rep = cycle.representative;
            let (lambda, theta, res) = if rep.norm() < 1e-12 {
                (facts.lambda_a, facts.theta_a, facts.res_a)
            } else if (rep - cx(1.0, 0.0)).norm() < 1e-12 {
                (facts.lambda_b, facts.theta_a, facts.res_b)
            } else {
                (1.0, facts.theta_c, facts.res_c)
            };
            assert!(
                (cycle.dilation - lambda).abs() < 1e-12,
                "λ at {rep}: {} vs {lambda}",
                cycle.dilation
            );
            assert!((cycle.angle - theta).abs() < 1e-12);
            assert!((cycle.residue() - res).norm() < 1e-12);
        }
        let sum: Complex = cycles.iter().map(|c| c.residue()).sum();
        assert!((sum + 2.0).norm() < 1e-12);
    }

    #[test]
    fn grid_complex_of_zero_field_is_flat() {
        let grid = GridSpec::new(2.0, 3);
        let pw = average_field(&BeltramiField::Zero, &grid, AveragingTransform::Identity).unwrap();
        let gc = build_grid_complex(&pw).unwrap();
        assert_eq!(gc.complex.polygons.len(), 10);
        assert_eq!(gc.complex.pairings.len(), 24);
        assert_eq!(gc.corner_cycles.len(), 16);
        for cycle in &gc.corner_cycles {
            assert!((cycle.angle - TAU).abs() < 1e-12);
            assert!((cycle.dilation - 1.0).abs() < 1e-12);
            assert!(cycle.residue().norm() < 1e-13);
        }
    }

    #[test]
    fn single_cell_corner_matches_quadrant_monodromy() {
        let grid = GridSpec::new(1.0, 1);
        let c = cx(0.0, 0.2);
        let pw = PiecewiseField::new(grid, vec![c]).unwrap();
        let gc = build_grid_complex(&pw).unwrap();
        assert_eq!(gc.corner_cycles.len(), 4);
        // South-west lattice corner: the cell sits in the NE quadrant.
        let (_, expected) = corner_monodromy([c, cx(0.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0)]);
        let sw = &gc.corner_cycles[grid.corner_index(0, 0)];
        assert!(
            (sw.residue() - expected).norm() < 1e-12,
            "{} vs {expected}",
            sw.residue()
        );
        // All four corner residues cancel.
        let sum: Complex = gc.corner_residues.iter().sum();
        assert!(sum.norm() < 1e-12);
        // Monodromy factors agree with exp(2πi·res).
        for cycle in &gc.corner_cycles {
            let back = (I * TAU * cycle.residue()).exp();
            assert!((back - cycle.monodromy_factor()).norm() < 1e-12);
        }
    }

    #[test]
    fn aligned_strip_corners_are_silent() {
        let field = BeltramiField::VerticalStrips { kappa: 0.5 };
        let grid = GridSpec::new(2.0, 4);
        let pw = average_field(&field, &grid, AveragingTransform::Identity).unwrap();
        let gc = build_grid_complex(&pw).unwrap();
        // Interior corners: quadrant patterns (0,κ,κ,0) or (κ,0,0,κ) cancel.
        for j in 1..4 {
            for i in 1..4 {
                let res = gc.corner_residues[grid.corner_index(i, j)];
                assert!(
                    res.norm() < 1e-12,
                    "interior corner ({i},{j}) carries {res}"
                );
            }
        }
    }

    #[test]
    fn unglued_edge_is_rejected() {
        let (mut complex, _) = triangle_fixture();
        complex.pairings.pop();
        assert!(matches!(
            complex.vertex_cycles(),
            Err(Error::InconsistentPairing { .. })
        ));
    }

    #[test]
    fn unbounded_pairing_requires_marks() {
        let e1 = EdgeGeometry::RayOut {
            from: cx(0.0, 0.0),
            dir: cx(1.0, 0.0),
        };
        let e2 = EdgeGeometry::RayIn {
            to: cx(0.0, 2.0),
            dir: cx(1.0, 0.0),
        };
        assert!(matches!(pairing_map(e1, e2), Err(Error::MissingMarkedPoints)));
        let map = pairing_map_marked(e1, cx(3.0, 0.0), e2, cx(6.0, 2.0)).unwrap();
        assert!((map.apply(cx(1.0, 0.0)) - cx(2.0, 2.0)).norm() < 1e-14);
    }
}
