//! Beltrami fields and their cell-average discretization.
//!
//! A Beltrami field is a measurable `μ: ℂ → 𝔻` with `‖μ‖_∞ = κ < 1`.
//! Discretization replaces `μ` by its average on each cell of a square grid;
//! optionally the average is taken after a diffeomorphism `ν` of the disk
//! onto a convex set (averaging `ν∘μ` and mapping back), which changes the
//! discretization only at second order in the cell size.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::affine::CellChart;
use crate::defaults::gauss4;
use crate::wire::complex_list;
use crate::{cx, Complex, Error, Result};

/// Square grid `[-L, L]²` split into `m × m` congruent cells.
///
/// Lattice corners are indexed `(i, j)` with `0 ≤ i, j ≤ m`, corner `(0, 0)`
/// at `(-L, -L)`; cells are indexed `(i, j)` with `0 ≤ i, j < m`, cell
/// `(0, 0)` in the south-west corner. Flat indices are row-major in `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half side length `L`.
    #[serde(rename = "L")]
    pub half_side: f64,
    /// Cells per side `m`.
    #[serde(rename = "m")]
    pub subdivisions: usize,
}

impl GridSpec {
    pub fn new(half_side: f64, subdivisions: usize) -> Self {
        GridSpec {
            half_side,
            subdivisions,
        }
    }

    /// Side length of one cell.
    pub fn cell_side(&self) -> f64 {
        2.0 * self.half_side / self.subdivisions as f64
    }

    pub fn cell_count(&self) -> usize {
        self.subdivisions * self.subdivisions
    }

    pub fn corner_count(&self) -> usize {
        (self.subdivisions + 1) * (self.subdivisions + 1)
    }

    /// Lattice corner `(i, j)`.
    pub fn corner(&self, i: usize, j: usize) -> Complex {
        let s = self.cell_side();
        cx(
            -self.half_side + s * i as f64,
            -self.half_side + s * j as f64,
        )
    }

    /// Flat index of lattice corner `(i, j)`.
    pub fn corner_index(&self, i: usize, j: usize) -> usize {
        j * (self.subdivisions + 1) + i
    }

    /// Inverse of [`GridSpec::corner_index`].
    pub fn corner_coords(&self, index: usize) -> (usize, usize) {
        (index % (self.subdivisions + 1), index / (self.subdivisions + 1))
    }

    /// Flat index of cell `(i, j)`.
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.subdivisions + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Complex {
        let s = self.cell_side();
        self.corner(i, j) + cx(0.5 * s, 0.5 * s)
    }

    /// Cell corners in CCW order starting at the south-west corner.
    pub fn cell_corners(&self, i: usize, j: usize) -> [Complex; 4] {
        [
            self.corner(i, j),
            self.corner(i + 1, j),
            self.corner(i + 1, j + 1),
            self.corner(i, j + 1),
        ]
    }

    /// Corner indices of a cell in the same CCW order as
    /// [`GridSpec::cell_corners`].
    pub fn cell_corner_indices(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.corner_index(i, j),
            self.corner_index(i + 1, j),
            self.corner_index(i + 1, j + 1),
            self.corner_index(i, j + 1),
        ]
    }

    /// Cell containing `z` (points on shared boundaries resolve to the cell
    /// whose south-west corner is nearest; points outside return `None`).
    pub fn locate_cell(&self, z: Complex) -> Option<(usize, usize)> {
        let s = self.cell_side();
        let fx = (z.re + self.half_side) / s;
        let fy = (z.im + self.half_side) / s;
        let eps = 1e-12 * (1.0 + self.half_side);
        if fx < -eps || fy < -eps {
            return None;
        }
        let m = self.subdivisions as isize;
        let ix = (fx.floor() as isize).clamp(0, m - 1);
        let iy = (fy.floor() as isize).clamp(0, m - 1);
        if fx > self.subdivisions as f64 + eps || fy > self.subdivisions as f64 + eps {
            return None;
        }
        if z.re > self.half_side + eps * s || z.im > self.half_side + eps * s {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    /// Diameter of the grid square.
    pub fn diameter(&self) -> f64 {
        2.0 * self.half_side * std::f64::consts::SQRT_2
    }
}

/// Mixed-derivative profile of the smooth bump kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpProfile {
    /// `μ = A·x̃·ỹ·(1 − ρ²)³` inside radius `R`; the mixed derivative at the
    /// center is exactly `A`.
    MixedXy,
    /// `μ = A·x̃·(1 − x̃²/R²)³`, a function of `x` alone.
    XOnly,
    /// `μ = A·ỹ·(1 − ỹ²/R²)³`, a function of `y` alone.
    YOnly,
}

/// Exact 2-jet of a field at a point (the entries the refinement-limit
/// density needs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub mu: Complex,
    pub mu_x: Complex,
    pub mu_y: Complex,
    pub mu_xy: Complex,
}

type ExternalFn = dyn Fn(Complex) -> Complex + Send + Sync;

/// A Beltrami coefficient field.
#[derive(Clone)]
pub enum BeltramiField {
    /// `μ ≡ 0`.
    Zero,
    /// `μ ≡ value` with `|value| < 1`.
    Constant { value: Complex },
    /// `μ(x + iy) = 0` on strips `2k ≤ x < 2k+1` and `κ` on `2k+1 ≤ x < 2k+2`.
    VerticalStrips { kappa: f64 },
    /// Smooth compactly supported bump, see [`BumpProfile`].
    SmoothBump {
        amplitude: Complex,
        center: Complex,
        radius: f64,
        profile: BumpProfile,
    },
    /// Piecewise-constant samples on a grid (the interchange kind).
    GridSampled { grid: GridSpec, values: Vec<Complex> },
    /// Caller-supplied closure with a declared sup-norm bound.
    External {
        kappa_bound: f64,
        eval: Arc<ExternalFn>,
    },
}

impl fmt::Debug for BeltramiField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeltramiField::Zero => write!(f, "Zero"),
            BeltramiField::Constant { value } => write!(f, "Constant({value})"),
            BeltramiField::VerticalStrips { kappa } => write!(f, "VerticalStrips(κ={kappa})"),
            BeltramiField::SmoothBump {
                amplitude,
                center,
                radius,
                profile,
            } => write!(
                f,
                "SmoothBump(A={amplitude}, c={center}, R={radius}, {profile:?})"
            ),
            BeltramiField::GridSampled { grid, .. } => {
                write!(f, "GridSampled({}×{})", grid.subdivisions, grid.subdivisions)
            }
            BeltramiField::External { kappa_bound, .. } => {
                write!(f, "External(κ≤{kappa_bound})")
            }
        }
    }
}

impl BeltramiField {
    pub fn eval(&self, z: Complex) -> Complex {
        match self {
            BeltramiField::Zero => Complex::new(0.0, 0.0),
            BeltramiField::Constant { value } => *value,
            BeltramiField::VerticalStrips { kappa } => {
                let k = z.re.floor() as i64;
                if k.rem_euclid(2) == 1 {
                    cx(*kappa, 0.0)
                } else {
                    cx(0.0, 0.0)
                }
            }
            BeltramiField::SmoothBump {
                amplitude,
                center,
                radius,
                profile,
            } => bump_eval(*amplitude, *center, *radius, *profile, z),
            BeltramiField::GridSampled { grid, values } => match grid.locate_cell(z) {
                Some((i, j)) => values[grid.cell_index(i, j)],
                None => Complex::new(0.0, 0.0),
            },
            BeltramiField::External { eval, .. } => eval(z),
        }
    }

    /// Sup-norm bound `κ` (exact for the analytic kinds, declared for
    /// external closures).
    pub fn kappa(&self) -> f64 {
        match self {
            BeltramiField::Zero => 0.0,
            BeltramiField::Constant { value } => value.norm(),
            BeltramiField::VerticalStrips { kappa } => *kappa,
            BeltramiField::SmoothBump {
                amplitude,
                radius,
                profile,
                ..
            } => match profile {
                // max of s·t·(1-s²-t²)³ over the unit disk is 27/512 · R².
                BumpProfile::MixedXy => amplitude.norm() * 27.0 * radius * radius / 512.0,
                // max of s·(1-s²)³ on [0,1] is at s = 1/√7.
                BumpProfile::XOnly | BumpProfile::YOnly => {
                    amplitude.norm() * radius * 216.0 / (343.0 * 7.0_f64.sqrt())
                }
            },
            BeltramiField::GridSampled { values, .. } => {
                values.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
            BeltramiField::External { kappa_bound, .. } => *kappa_bound,
        }
    }

    /// Checks `κ < 1`.
    pub fn check(&self) -> Result<()> {
        let kappa = self.kappa();
        if kappa < 1.0 {
            Ok(())
        } else {
            Err(Error::FieldOutOfDisk {
                point: cx(0.0, 0.0),
                value: cx(kappa, 0.0),
                modulus: kappa,
            })
        }
    }

    /// Exact 2-jet for the kinds that have one.
    pub fn jet2(&self, z: Complex) -> Result<FieldJet> {
        let zero = Complex::new(0.0, 0.0);
        match self {
            BeltramiField::Zero => Ok(FieldJet {
                mu: zero,
                mu_x: zero,
                mu_y: zero,
                mu_xy: zero,
            }),
            BeltramiField::Constant { value } => Ok(FieldJet {
                mu: *value,
                mu_x: zero,
                mu_y: zero,
                mu_xy: zero,
            }),
            BeltramiField::SmoothBump {
                amplitude,
                center,
                radius,
                profile,
            } => Ok(bump_jet(*amplitude, *center, *radius, *profile, z)),
            BeltramiField::VerticalStrips { .. } => Err(Error::FieldNotSmooth {
                kind: "vertical-strips",
            }),
            BeltramiField::GridSampled { .. } => Err(Error::FieldNotSmooth {
                kind: "grid-sampled",
            }),
            BeltramiField::External { .. } => Err(Error::FieldNotSmooth { kind: "external" }),
        }
    }
}

fn bump_eval(
    amplitude: Complex,
    center: Complex,
    radius: f64,
    profile: BumpProfile,
    z: Complex,
) -> Complex {
    let x = z.re - center.re;
    let y = z.im - center.im;
    let r2 = radius * radius;
    match profile {
        BumpProfile::MixedXy => {
            let rho2 = (x * x + y * y) / r2;
            if rho2 >= 1.0 {
                Complex::new(0.0, 0.0)
            } else {
                amplitude * x * y * (1.0 - rho2).powi(3)
            }
        }
        BumpProfile::XOnly => {
            let s = x * x / r2;
            if s >= 1.0 {
                Complex::new(0.0, 0.0)
            } else {
                amplitude * x * (1.0 - s).powi(3)
            }
        }
        BumpProfile::YOnly => {
            let s = y * y / r2;
            if s >= 1.0 {
                Complex::new(0.0, 0.0)
            } else {
                amplitude * y * (1.0 - s).powi(3)
            }
        }
    }
}

fn bump_jet(
    amplitude: Complex,
    center: Complex,
    radius: f64,
    profile: BumpProfile,
    z: Complex,
) -> FieldJet {
    let zero = Complex::new(0.0, 0.0);
    let x = z.re - center.re;
    let y = z.im - center.im;
    let r2 = radius * radius;
    match profile {
        BumpProfile::MixedXy => {
            let u = (x * x + y * y) / r2;
            if u >= 1.0 {
                return FieldJet {
                    mu: zero,
                    mu_x: zero,
                    mu_y: zero,
                    mu_xy: zero,
                };
            }
            let b = (1.0 - u).powi(3);
            let db = -3.0 * (1.0 - u) * (1.0 - u);
            let ddb = 6.0 * (1.0 - u);
            FieldJet {
                mu: amplitude * (x * y * b),
                mu_x: amplitude * (y * (b + 2.0 * x * x * db / r2)),
                mu_y: amplitude * (x * (b + 2.0 * y * y * db / r2)),
                mu_xy: amplitude
                    * (b + 2.0 * (x * x + y * y) * db / r2 + 4.0 * x * x * y * y * ddb / (r2 * r2)),
            }
        }
        BumpProfile::XOnly => {
            let s = x * x / r2;
            if s >= 1.0 {
                return FieldJet {
                    mu: zero,
                    mu_x: zero,
                    mu_y: zero,
                    mu_xy: zero,
                };
            }
            let b = (1.0 - s).powi(3);
            let db = -3.0 * (1.0 - s) * (1.0 - s);
            FieldJet {
                mu: amplitude * (x * b),
                mu_x: amplitude * (b + 2.0 * x * x * db / r2),
                mu_y: zero,
                mu_xy: zero,
            }
        }
        BumpProfile::YOnly => {
            let s = y * y / r2;
            if s >= 1.0 {
                return FieldJet {
                    mu: zero,
                    mu_x: zero,
                    mu_y: zero,
                    mu_xy: zero,
                };
            }
            let b = (1.0 - s).powi(3);
            let db = -3.0 * (1.0 - s) * (1.0 - s);
            FieldJet {
                mu: amplitude * (y * b),
                mu_x: zero,
                mu_y: amplitude * (b + 2.0 * y * y * db / r2),
                mu_xy: zero,
            }
        }
    }
}

/// Disk diffeomorphism applied before averaging.
///
/// Averaging `ν∘μ` over a cell and mapping the mean back with `ν⁻¹` is an
/// admissible discretization whenever `ν` maps the disk onto a convex set;
/// it agrees with plain averaging to second order in the cell size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragingTransform {
    /// Plain cell average.
    Identity,
    /// `ν(μ) = (1 + μ)/(1 − μ)`, disk onto the right half-plane.
    Cayley,
}

impl AveragingTransform {
    pub fn apply(&self, mu: Complex) -> Complex {
        match self {
            AveragingTransform::Identity => mu,
            AveragingTransform::Cayley => (1.0 + mu) / (1.0 - mu),
        }
    }

    pub fn invert(&self, w: Complex) -> Complex {
        match self {
            AveragingTransform::Identity => w,
            AveragingTransform::Cayley => (w - 1.0) / (w + 1.0),
        }
    }
}

/// Cell averages of a field on a grid: the discrete object the gluing stage
/// consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseField {
    pub grid: GridSpec,
    /// Row-major cell values (`index = j·m + i`).
    #[serde(with = "complex_list")]
    pub values: Vec<Complex>,
}

impl PiecewiseField {
    pub fn new(grid: GridSpec, values: Vec<Complex>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} cell values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        let pw = PiecewiseField { grid, values };
        for (idx, v) in pw.values.iter().enumerate() {
            if v.norm() >= 1.0 {
                let (i, j) = (idx % grid.subdivisions, idx / grid.subdivisions);
                return Err(Error::FieldOutOfDisk {
                    point: grid.cell_center(i, j),
                    value: *v,
                    modulus: v.norm(),
                });
            }
        }
        Ok(pw)
    }

    pub fn value(&self, i: usize, j: usize) -> Complex {
        self.values[self.grid.cell_index(i, j)]
    }

    pub fn chart(&self, i: usize, j: usize) -> CellChart {
        CellChart::new(self.value(i, j))
    }

    pub fn kappa(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Piecewise-constant evaluation (zero outside the grid).
    pub fn eval(&self, z: Complex) -> Complex {
        match self.grid.locate_cell(z) {
            Some((i, j)) => self.value(i, j),
            None => Complex::new(0.0, 0.0),
        }
    }

    /// Multiplies every cell value by `t` (amplitude continuation).
    pub fn scaled(&self, t: f64) -> PiecewiseField {
        PiecewiseField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * t).collect(),
        }
    }

    /// True when every cell touching the grid boundary is exactly zero.
    pub fn support_strictly_interior(&self) -> bool {
        let m = self.grid.subdivisions;
        for j in 0..m {
            for i in 0..m {
                let boundary = i == 0 || j == 0 || i == m - 1 || j == m - 1;
                if boundary && self.value(i, j).norm() != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn as_field(&self) -> BeltramiField {
        BeltramiField::GridSampled {
            grid: self.grid,
            values: self.values.clone(),
        }
    }
}

/// Averages `field` over each cell of `grid` with a 4×4 tensor Gauss rule
/// (exact through bi-degree 7), optionally through an
/// [`AveragingTransform`].
pub fn average_field(
    field: &BeltramiField,
    grid: &GridSpec,
    transform: AveragingTransform,
) -> Result<PiecewiseField> {
    field.check()?;
    let rule = gauss4();
    let m = grid.subdivisions;
    let mut values = Vec::with_capacity(grid.cell_count());
    for j in 0..m {
        for i in 0..m {
            let center = grid.cell_center(i, j);
            let h = 0.5 * grid.cell_side();
            let mut acc = Complex::new(0.0, 0.0);
            let mut weight = 0.0;
            let mut all_zero = true;
            for (xs, wx) in rule.nodes.iter().zip(rule.weights) {
                for (ys, wy) in rule.nodes.iter().zip(rule.weights) {
                    let z = center + cx(h * xs, h * ys);
                    let mu = field.eval(z);
                    if mu.norm() >= 1.0 {
                        return Err(Error::FieldOutOfDisk {
                            point: z,
                            value: mu,
                            modulus: mu.norm(),
                        });
                    }
                    all_zero &= mu == Complex::new(0.0, 0.0);
                    acc += transform.apply(mu) * (wx * wy);
                    weight += wx * wy;
                }
            }
            // Cells the field vanishes on stay exactly zero; elsewhere divide
            // by the accumulated weight (Σ = 4 up to rounding) so constants
            // round-trip through the transform bit-exactly.
            if all_zero {
                values.push(Complex::new(0.0, 0.0));
            } else {
                values.push(transform.invert(acc / weight));
            }
        }
    }
    PiecewiseField::new(*grid, values)
}

/// Axis-aligned rectangle used as an integration region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    #[serde(with = "crate::wire::complex_pair")]
    pub lo: Complex,
    #[serde(with = "crate::wire::complex_pair")]
    pub hi: Complex,
}

impl Rect {
    pub fn new(lo: Complex, hi: Complex) -> Self {
        Rect { lo, hi }
    }

    pub fn of_grid(grid: &GridSpec) -> Self {
        Rect {
            lo: cx(-grid.half_side, -grid.half_side),
            hi: cx(grid.half_side, grid.half_side),
        }
    }
}

/// Midpoint-rule `L¹` distance between two fields over a rectangle, sampled
/// on a `resolution × resolution` lattice.
pub fn l1_distance<F, G>(a: F, b: G, region: Rect, resolution: usize) -> f64
where
    F: Fn(Complex) -> Complex,
    G: Fn(Complex) -> Complex,
{
    let nx = resolution.max(1);
    let dx = (region.hi.re - region.lo.re) / nx as f64;
    let dy = (region.hi.im - region.lo.im) / nx as f64;
    let mut acc = 0.0;
    for j in 0..nx {
        for i in 0..nx {
            let z = cx(
                region.lo.re + (i as f64 + 0.5) * dx,
                region.lo.im + (j as f64 + 0.5) * dy,
            );
            acc += (a(z) - b(z)).norm();
        }
    }
    acc * dx * dy
}

/// Grid-sampled field interchange file: `{"grid": {"L": …, "m": …},
/// "values": [[re, im], …]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldFile {
    pub grid: GridSpec,
    #[serde(with = "complex_list")]
    pub values: Vec<Complex>,
}

/// Reads a grid-sampled field from the JSON interchange format.
pub fn load_field(path: &Path) -> Result<BeltramiField> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: FieldFile = serde_json::from_str(&text)?;
    if file.values.len() != file.grid.cell_count() {
        return Err(Error::InvalidInput(format!(
            "field file {}: expected {} values, got {}",
            path.display(),
            file.grid.cell_count(),
            file.values.len()
        )));
    }
    let field = BeltramiField::GridSampled {
        grid: file.grid,
        values: file.values,
    };
    field.check()?;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> BeltramiField {
        BeltramiField::SmoothBump {
            amplitude: cx(0.2, 0.0),
            center: cx(0.0, 0.0),
            radius: 0.9,
            profile: BumpProfile::MixedXy,
        }
    }

    #[test]
    fn strips_alternate_on_integer_cells() {
        let f = BeltramiField::VerticalStrips { kappa: 0.5 };
        assert_eq!(f.eval(cx(0.5, 3.0)).re, 0.0);
        assert_eq!(f.eval(cx(1.5, -2.0)).re, 0.5);
        assert_eq!(f.eval(cx(-0.5, 0.0)).re, 0.5);
        assert_eq!(f.eval(cx(-1.5, 0.0)).re, 0.0);
        assert_eq!(f.eval(cx(2.25, 0.0)).re, 0.0);
    }

    #[test]
    fn bump_jet_matches_finite_differences() {
        let f = bump();
        let z = cx(0.21, -0.13);
        let jet = f.jet2(z).unwrap();
        let h = 1e-5;
        let fd_x = (f.eval(z + cx(h, 0.0)) - f.eval(z - cx(h, 0.0))) / (2.0 * h);
        let fd_y = (f.eval(z + cx(0.0, h)) - f.eval(z - cx(0.0, h))) / (2.0 * h);
        let fd_xy = (f.eval(z + cx(h, h)) - f.eval(z + cx(h, -h)) - f.eval(z + cx(-h, h))
            + f.eval(z + cx(-h, -h)))
            / (4.0 * h * h);
        assert!((jet.mu_x - fd_x).norm() < 1e-8);
        assert!((jet.mu_y - fd_y).norm() < 1e-8);
        assert!((jet.mu_xy - fd_xy).norm() < 1e-6);
        // Mixed derivative at the center equals the amplitude exactly.
        let at0 = f.jet2(cx(0.0, 0.0)).unwrap();
        assert!((at0.mu_xy - cx(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bump_kappa_bound_is_attained_nowhere_above() {
        let f = bump();
        let kappa = f.kappa();
        let mut observed: f64 = 0.0;
        for j in 0..200 {
            for i in 0..200 {
                let z = cx(-1.0 + i as f64 * 0.01, -1.0 + j as f64 * 0.01);
                observed = observed.max(f.eval(z).norm());
            }
        }
        assert!(observed <= kappa + 1e-12);
        assert!(observed > 0.9 * kappa, "bound should be near-sharp");
    }

    #[test]
    fn averaging_is_idempotent_on_aligned_piecewise_fields() {
        let grid = GridSpec::new(2.0, 4);
        let values: Vec<Complex> = (0..16).map(|k| cx(0.02 * k as f64, -0.01 * k as f64)).collect();
        let pw = PiecewiseField::new(grid, values).unwrap();
        let avg = average_field(&pw.as_field(), &grid, AveragingTransform::Identity).unwrap();
        for (a, b) in avg.values.iter().zip(&pw.values) {
            assert!((a - b).norm() < 1e-15);
        }
        // Through the Cayley transform as well: ν and ν⁻¹ cancel exactly on
        // constants.
        let avg2 = average_field(&pw.as_field(), &grid, AveragingTransform::Cayley).unwrap();
        for (a, b) in avg2.values.iter().zip(&pw.values) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn strip_averages_alternate_exactly_on_unit_cells() {
        let field = BeltramiField::VerticalStrips { kappa: 0.5 };
        let grid = GridSpec::new(2.0, 4); // unit cells aligned with the strips
        let avg = average_field(&field, &grid, AveragingTransform::Identity).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                let expected = if i % 2 == 1 { 0.5 } else { 0.0 };
                assert!((avg.value(i, j) - cx(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!(!avg.support_strictly_interior());
    }

    #[test]
    fn averages_stay_inside_kappa_disk() {
        let f = bump();
        let grid = GridSpec::new(2.0, 8);
        for transform in [AveragingTransform::Identity, AveragingTransform::Cayley] {
            let avg = average_field(&f, &grid, transform).unwrap();
            assert!(avg.kappa() <= f.kappa() + 1e-12);
            assert!(avg.support_strictly_interior());
        }
    }

    #[test]
    fn l1_distance_decreases_under_refinement() {
        let f = bump();
        let mut last = f64::INFINITY;
        for m in [4usize, 8, 16] {
            let grid = GridSpec::new(2.0, m);
            let avg = average_field(&f, &grid, AveragingTransform::Identity).unwrap();
            let d = l1_distance(
                |z| f.eval(z),
                |z| avg.eval(z),
                Rect::of_grid(&grid),
                128,
            );
            assert!(d < last, "m={m}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn field_file_round_trips() {
        let grid = GridSpec::new(1.5, 2);
        let pw = PiecewiseField::new(
            grid,
            vec![cx(0.1, 0.0), cx(0.0, 0.2), cx(-0.1, 0.1), cx(0.0, 0.0)],
        )
        .unwrap();
        let file = FieldFile {
            grid: pw.grid,
            values: pw.values.clone(),
        };
        let text = serde_json::to_string(&file).unwrap();
        let dir = std::env::temp_dir().join("beltrami-field-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.json");
        std::fs::write(&path, text).unwrap();
        let loaded = load_field(&path).unwrap();
        assert!((loaded.eval(grid.cell_center(1, 0)) - cx(0.0, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn oversized_values_are_rejected() {
        let grid = GridSpec::new(1.0, 1);
        let err = PiecewiseField::new(grid, vec![cx(1.0, 0.5)]);
        assert!(matches!(err, Err(Error::FieldOutOfDisk { .. })));
    }
}
