//! Rational Christoffel symbols `ζ(z) = Σ res_k/(z − z_k)` and their
//! calculus: pullbacks under chart changes, the `N` operator
//! `Nφ = φ''/φ'`, and normal forms at poles.
//!
//! A symbol transforms under a chart change `ψ` by
//! `ζ ↦ (ζ∘ψ)·ψ' + Nψ`, so affine maps relabel poles without touching
//! residues, while the inversion `z ↦ 1/z` swaps the point at infinity into
//! the finite plane according to `ζ(z) ↦ −z⁻²·ζ(1/z) − 2·z⁻¹`. On the sphere
//! the residues (including the implied one at infinity) always sum to −2.

use serde::{Deserialize, Serialize};

use crate::affine::Affine;
use crate::defaults::POLE_PROXIMITY_FACTOR;
use crate::wire::complex_pair;
use crate::{Complex, Error, Result, I};

const TAU: f64 = std::f64::consts::TAU;

/// One finite pole of a symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    #[serde(with = "complex_pair")]
    pub position: Complex,
    #[serde(with = "complex_pair")]
    pub residue: Complex,
}

/// A rational Christoffel symbol with simple poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChristoffelSymbol {
    pub poles: Vec<Pole>,
    /// Residue carried at infinity; on a sphere it equals
    /// `−2 − Σ finite residues`.
    #[serde(with = "complex_pair")]
    pub infinity_residue: Complex,
}

impl ChristoffelSymbol {
    pub fn new(poles: Vec<Pole>, infinity_residue: Complex) -> Self {
        ChristoffelSymbol {
            poles,
            infinity_residue,
        }
    }

    /// Builds a symbol whose infinity residue is implied by the finite ones.
    pub fn with_implied_infinity(poles: Vec<Pole>) -> Self {
        let sum: Complex = poles.iter().map(|p| p.residue).sum();
        ChristoffelSymbol {
            poles,
            infinity_residue: -2.0 - sum,
        }
    }

    pub fn finite_residue_sum(&self) -> Complex {
        self.poles.iter().map(|p| p.residue).sum()
    }

    /// `|Σ res_k + res_∞ + 2|`: zero exactly when the residue ledger closes.
    pub fn residue_sum_defect(&self) -> f64 {
        (self.finite_residue_sum() + self.infinity_residue + 2.0).norm()
    }

    /// Diagonal of the bounding box of the poles (scale for guard radii).
    pub fn diameter(&self) -> f64 {
        if self.poles.len() < 2 {
            return 1.0;
        }
        let (mut xlo, mut xhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.poles {
            xlo = xlo.min(p.position.re);
            xhi = xhi.max(p.position.re);
            ylo = ylo.min(p.position.im);
            yhi = yhi.max(p.position.im);
        }
        ((xhi - xlo).powi(2) + (yhi - ylo).powi(2)).sqrt().max(1e-300)
    }

    /// Evaluates `ζ(z)`, refusing points inside the pole guard disks.
    pub fn evaluate(&self, z: Complex) -> Result<Complex> {
        let guard = POLE_PROXIMITY_FACTOR * (1.0 + z.norm());
        let mut acc = Complex::new(0.0, 0.0);
        for p in &self.poles {
            if p.residue.norm() == 0.0 {
                continue;
            }
            let d = z - p.position;
            let dist = d.norm();
            if dist < guard {
                return Err(Error::PoleProximity {
                    point: z,
                    pole: p.position,
                    distance: dist,
                    guard,
                });
            }
            acc += p.residue / d;
        }
        Ok(acc)
    }

    /// Pulls the symbol back under a chart change.
    pub fn pullback(&self, map: &PullbackMap) -> Result<ChristoffelSymbol> {
        match map {
            PullbackMap::Affine(aff) => {
                // ζ̃(w) = a·ζ(aw + b): poles move by the inverse map,
                // residues are untouched, and Nψ = 0 keeps infinity's share.
                let inv = aff.inverse();
                let poles = self
                    .poles
                    .iter()
                    .map(|p| Pole {
                        position: inv.apply(p.position),
                        residue: p.residue,
                    })
                    .collect();
                Ok(ChristoffelSymbol {
                    poles,
                    infinity_residue: self.infinity_residue,
                })
            }
            PullbackMap::Inversion => {
                // ζ̃(w) = −w⁻²·ζ(1/w) − 2/w. In partial fractions: each pole
                // z_k ≠ 0 moves to 1/z_k with the same residue; the old
                // infinity residue lands at w = 0; a pole at the origin (if
                // any) becomes the new infinity residue.
                let mut poles = Vec::with_capacity(self.poles.len() + 1);
                let mut new_infinity = None;
                for p in &self.poles {
                    if p.position.norm() == 0.0 {
                        new_infinity = Some(p.residue);
                    } else {
                        poles.push(Pole {
                            position: 1.0 / p.position,
                            residue: p.residue,
                        });
                    }
                }
                if self.infinity_residue.norm() > 0.0 || new_infinity.is_none() {
                    poles.push(Pole {
                        position: Complex::new(0.0, 0.0),
                        residue: self.infinity_residue,
                    });
                }
                let infinity_residue = match new_infinity {
                    Some(r) => r,
                    // No finite pole sat at the origin: infinity becomes a
                    // regular point of the similarity structure, which in the
                    // inverted chart still reads residue −2 − Σ.
                    None => {
                        let sum: Complex = poles.iter().map(|p| p.residue).sum();
                        -2.0 - sum
                    }
                };
                Ok(ChristoffelSymbol {
                    poles,
                    infinity_residue,
                })
            }
        }
    }

    /// Index of the pole nearest to `z`.
    pub fn nearest_pole(&self, z: Complex) -> Option<usize> {
        self.poles
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (a.position - z)
                    .norm()
                    .partial_cmp(&(b.position - z).norm())
                    .unwrap()
            })
            .map(|(k, _)| k)
    }
}

/// Chart changes a symbol can be pulled back under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PullbackMap {
    Affine(Affine),
    /// `z ↦ 1/z`.
    Inversion,
}

/// Discrete `N` operator: `Nφ(z) = φ''(z)/φ'(z)` by central differences with
/// step `h` (real step; valid for holomorphic charts).
pub fn n_operator<F>(chart: F, z: Complex, h: f64) -> Result<Complex>
where
    F: Fn(Complex) -> Result<Complex>,
{
    let fp = chart(z + h)?;
    let f0 = chart(z)?;
    let fm = chart(z - h)?;
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    Ok(d2 / d1)
}

/// Truncated normal-form coordinate at a pole: `w(z) = Σ c_n·(z − z₀)ⁿ`
/// (`c_1 = 1`), in which the symbol reduces to `res/w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    #[serde(with = "complex_pair")]
    pub pole: Complex,
    #[serde(with = "complex_pair")]
    pub residue: Complex,
    /// Coefficients `c_1, c_2, …` of the series in `z − z₀`.
    #[serde(with = "crate::wire::complex_list")]
    pub coefficients: Vec<Complex>,
}

impl NormalForm {
    pub fn evaluate(&self, z: Complex) -> Complex {
        let eps = z - self.pole;
        let mut acc = Complex::new(0.0, 0.0);
        for c in self.coefficients.iter().rev() {
            acc = acc * eps + c;
        }
        acc * eps
    }
}

fn series_exp(a: &[Complex]) -> Vec<Complex> {
    // exp of a series with a[0] = 0: e_n = (1/n)·Σ_{k=1..n} k·a_k·e_{n−k}.
    let n = a.len();
    let mut e = vec![Complex::new(0.0, 0.0); n];
    e[0] = Complex::new(1.0, 0.0);
    for m in 1..n {
        let mut acc = Complex::new(0.0, 0.0);
        for k in 1..=m {
            acc += a[k] * e[m - k] * k as f64;
        }
        e[m] = acc / m as f64;
    }
    e
}

fn series_log(t: &[Complex]) -> Vec<Complex> {
    // log of a series with t[0] = 1: r_n = t_n − (1/n)·Σ_{k=1..n−1} k·r_k·t_{n−k}.
    let n = t.len();
    let mut r = vec![Complex::new(0.0, 0.0); n];
    for m in 1..n {
        let mut acc = Complex::new(0.0, 0.0);
        for k in 1..m {
            acc += r[k] * t[m - k] * k as f64;
        }
        r[m] = t[m] - acc / m as f64;
    }
    r
}

/// Computes the normal form of `sym` at `sym.poles[pole_index]` to the given
/// series order.
///
/// Construction: with the pole shifted to the origin and
/// `ζ = res/ε + Σ a_m·ε^m`, one primitive of `exp(∫ζ)` is
/// `ε^{res+1}·Σ b_n·ε^n/(res + n + 1)` with `Σ b_n·ε^n = exp(Σ a_m ε^{m+1}/(m+1))`;
/// writing that primitive as `((res+1)⁻¹)·w^{res+1}` defines `w` up to a
/// multiplicative constant, which is fixed by `w'(z₀) = 1` so the pure pole's
/// normal form is the identity. Residues in `{−1, −2, …}` (where some
/// denominator vanishes) are rejected.
pub fn normal_form_series(
    sym: &ChristoffelSymbol,
    pole_index: usize,
    order: usize,
) -> Result<NormalForm> {
    let pole = sym.poles[pole_index];
    let res = pole.residue;
    // Guard the excluded set res ∈ {−1, −2, …, −(order+1)}.
    for k in 1..=(order as i64 + 1) {
        let d = (res + k as f64).norm();
        if d < 1e-9 {
            return Err(Error::UnsupportedResidue {
                residue: res,
                nearest: -k,
                distance: d,
            });
        }
    }
    let n = order + 1;
    // Taylor coefficients a_m of the regular part at the pole.
    let mut a = vec![Complex::new(0.0, 0.0); n]; // a[m]
    for (k, other) in sym.poles.iter().enumerate() {
        if k == pole_index || other.residue.norm() == 0.0 {
            continue;
        }
        let d = pole.position - other.position;
        let mut pw = 1.0 / d; // 1/(z0 - z_k)^{m+1} with alternating sign
        for (m, slot) in a.iter_mut().enumerate() {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            *slot += other.residue * sign * pw;
            pw /= d;
        }
    }
    // A(ε) = Σ a_m ε^{m+1}/(m+1), the primitive of the regular part.
    let mut big_a = vec![Complex::new(0.0, 0.0); n];
    for m in 0..n - 1 {
        big_a[m + 1] = a[m] / (m as f64 + 1.0);
    }
    let b = series_exp(&big_a);
    // T = (res+1)·Σ b_n ε^n/(res+n+1), normalized so T_0 = 1.
    let mut t = vec![Complex::new(0.0, 0.0); n];
    for (k, bk) in b.iter().enumerate() {
        t[k] = bk * (res + 1.0) / (res + 1.0 + k as f64);
    }
    let r = series_log(&t);
    // w = ε·exp(R/(res+1)).
    let scaled: Vec<Complex> = r.iter().map(|c| c / (res + 1.0)).collect();
    let e = series_exp(&scaled);
    Ok(NormalForm {
        pole: pole.position,
        residue: res,
        coefficients: e.into_iter().take(order).collect(),
    })
}

/// `∂̄ζ` by central differences on a square sample grid with the given
/// spacing; returns the interior `(n−2) × (n−2)` block.
pub fn curvature_form(samples: &[Vec<Complex>], spacing: f64) -> Vec<Vec<Complex>> {
    let rows = samples.len();
    if rows < 3 {
        return Vec::new();
    }
    let cols = samples[0].len();
    let mut out = Vec::with_capacity(rows - 2);
    for j in 1..rows - 1 {
        let mut line = Vec::with_capacity(cols - 2);
        for i in 1..cols - 1 {
            let dx = (samples[j][i + 1] - samples[j][i - 1]) / (2.0 * spacing);
            let dy = (samples[j + 1][i] - samples[j - 1][i]) / (2.0 * spacing);
            line.push(0.5 * (dx + I * dy));
        }
        out.push(line);
    }
    out
}

/// Principal-branch residue of a monodromy factor: `log_p(Λ)/(2πi)`.
pub fn residue_from_monodromy(factor: Complex) -> Complex {
    factor.ln() / (I * TAU)
}
