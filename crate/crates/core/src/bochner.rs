//! Finite-difference solver for the Bochner equation
//! `Δw = e^{2w} − e^{−2w}|q|²` with Dirichlet data `w = ½ ln|q|`.
//!
//! Disks use a Cartesian grid whose stencil arms are cut at the circle, so
//! the boundary condition is imposed on the circle itself. Annuli
//! `r0 ≤ |z| ≤ 1/r0` are solved in the logarithmic coordinate `ω = ln z`,
//! where the annulus becomes a periodic cylinder, `q` becomes
//! `q(e^ω) e^{2ω}` and `w` shifts by `Re ω`. The difference
//! `w₁ = w − ½ ln|q|` does not depend on the coordinate.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatgeom::q_distance_to_zeros;
use crate::poly::LaurentPoly;
use crate::qdiff::{Pole, QuadDiff};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    /// `|z| ≤ radius`.
    Disk { radius: f64 },
    /// `inner ≤ |z| ≤ 1/inner`.
    Annulus { inner: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Outside,
    Boundary,
    Interior,
}

/// Uniform grid in the solve coordinate (`z` for disks, `ln z` for annuli).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    geometry: Geometry,
    n: usize,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    x0: f64,
    y0: f64,
    kinds: Vec<NodeKind>,
    /// Arm lengths in cells toward `[+x, −x, +y, −y]`. Arms shorter than a
    /// cell end on the disk boundary, where the boundary value is imposed.
    arms: Vec<[f64; 4]>,
}

/// Nodes closer than this (in cells) to the circle are treated as lying on it.
const MIN_ARM: f64 = 1e-6;

impl Grid {
    pub fn new(geometry: Geometry, n: usize) -> Result<Self> {
        if n < 64 {
            return Err(Error::Grid(format!("resolution {n} is below the minimum of 64")));
        }
        match geometry {
            Geometry::Disk { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Grid("disk radius must be positive".into()));
                }
                let h = 2.0 * radius / (n - 1) as f64;
                let coord = |i: usize| -radius + i as f64 * h;
                let inside = |x: f64, y: f64| x * x + y * y <= radius * radius * (1.0 + 1e-12);
                let mut kinds = vec![NodeKind::Outside; n * n];
                let mut arms = vec![[1.0; 4]; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let (x, y) = (coord(i), coord(j));
                        if !inside(x, y) {
                            continue;
                        }
                        let k = i * n + j;
                        // Distance along each axis to the circle, in cells.
                        let reach = [
                            ((radius * radius - y * y).max(0.0).sqrt() - x) / h,
                            ((radius * radius - y * y).max(0.0).sqrt() + x) / h,
                            ((radius * radius - x * x).max(0.0).sqrt() - y) / h,
                            ((radius * radius - x * x).max(0.0).sqrt() + y) / h,
                        ];
                        let next = [(x + h, y), (x - h, y), (x, y + h), (x, y - h)];
                        for a in 0..4 {
                            if !inside(next[a].0, next[a].1) {
                                arms[k][a] = reach[a].clamp(0.0, 1.0 - 1e-12);
                            }
                        }
                        kinds[k] = if arms[k].iter().any(|t| *t < MIN_ARM) {
                            NodeKind::Boundary
                        } else {
                            NodeKind::Interior
                        };
                    }
                }
                Ok(Grid { geometry, n, nx: n, ny: n, hx: h, hy: h, x0: -radius, y0: -radius, kinds, arms })
            }
            Geometry::Annulus { inner } => {
                if !(inner > 0.0 && inner < 1.0) {
                    return Err(Error::Grid("annulus inner radius must lie in (0, 1)".into()));
                }
                let s0 = inner.ln();
                let ny = n - 1;
                let hx = -2.0 * s0 / (n - 1) as f64;
                let hy = 2.0 * PI / ny as f64;
                let mut kinds = vec![NodeKind::Interior; n * ny];
                for j in 0..ny {
                    kinds[j] = NodeKind::Boundary;
                    kinds[(n - 1) * ny + j] = NodeKind::Boundary;
                }
                Ok(Grid { geometry, n, nx: n, ny, hx, hy, x0: s0, y0: 0.0, kinds, arms: vec![[1.0; 4]; n * ny] })
            }
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Spacings `(h_x, h_y)` in the solve coordinate.
    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kinds[k]
    }

    fn periodic(&self) -> bool {
        matches!(self.geometry, Geometry::Annulus { .. })
    }

    /// Solve coordinate of node `k`.
    pub fn solve_coordinate(&self, k: usize) -> Complex64 {
        let (i, j) = (k / self.ny, k % self.ny);
        Complex64::new(self.x0 + i as f64 * self.hx, self.y0 + j as f64 * self.hy)
    }

    /// Physical position `z` of node `k`.
    pub fn position(&self, k: usize) -> Complex64 {
        let c = self.solve_coordinate(k);
        match self.geometry {
            Geometry::Disk { .. } => c,
            Geometry::Annulus { .. } => c.exp(),
        }
    }

    fn to_solve(&self, z: Complex64) -> Complex64 {
        match self.geometry {
            Geometry::Disk { .. } => z,
            Geometry::Annulus { .. } => {
                let l = z.ln();
                Complex64::new(l.re, l.im.rem_euclid(2.0 * PI))
            }
        }
    }

    fn neighbours(&self, k: usize) -> [usize; 4] {
        let (i, j) = (k / self.ny, k % self.ny);
        let ny = self.ny;
        let (jp, jm) = if self.periodic() {
            ((j + 1) % ny, (j + ny - 1) % ny)
        } else {
            (j + 1, j.wrapping_sub(1))
        };
        [(i + 1) * ny + j, (i - 1) * ny + j, i * ny + jp, i * ny + jm]
    }

    fn squared_arms(&self, k: usize) -> [f64; 4] {
        let (x, y) = (self.hx * self.hx, self.hy * self.hy);
        let t = self.arms[k];
        [t[0] * x, t[1] * x, t[2] * y, t[3] * y]
    }

    /// Five-point Laplacian in the symmetric form for shortened arms: an arm
    /// of `θ` cells contributes `(end − w)/(θh²)`, with its end value taken
    /// from `ends` (zero when `None`).
    fn laplacian_at(&self, w: &[f64], ends: Option<&[[f64; 4]]>, k: usize) -> f64 {
        let nb = self.neighbours(k);
        let h2 = self.squared_arms(k);
        (0..4)
            .map(|a| {
                let end = if self.arms[k][a] < 1.0 { ends.map_or(0.0, |e| e[k][a]) } else { w[nb[a]] };
                (end - w[k]) / h2[a]
            })
            .sum()
    }

    /// Diagonal of `−Δ_h` at node `k`.
    fn stencil_diagonal(&self, k: usize) -> f64 {
        self.squared_arms(k).iter().map(|h2| 1.0 / h2).sum()
    }

    /// Points of the domain boundary: the circle sampled at `8n` angles for
    /// disks, the boundary nodes for annuli.
    fn rim(&self) -> Vec<Complex64> {
        match self.geometry {
            Geometry::Disk { radius } => {
                let m = 8 * self.n;
                (0..m).map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / m as f64)).collect()
            }
            Geometry::Annulus { .. } => (0..self.len())
                .filter(|k| self.kinds[*k] == NodeKind::Boundary)
                .map(|k| self.position(k))
                .collect(),
        }
    }
}

/// Record of one Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub residual: f64,
    pub damping: f64,
    pub cg_iterations: usize,
    /// Largest pointwise increase of the iterate (≤ 0 for a monotone step).
    pub max_increase: f64,
}

/// A solved field `w` together with the data needed to derive `w₁` and `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    /// `w` in the solve coordinate; NaN outside the domain.
    pub values: Vec<f64>,
    /// `w − φ`, the unknown of the discrete problem.
    u: Vec<f64>,
    coef: Coefficients,
    /// Nodes within two grid cells of a zero of `q`.
    masked: Vec<bool>,
    differential: DifferentialSpec,
    pub history: Vec<NewtonStep>,
    /// Shift added to the initial guess to make it a super-solution.
    pub start_shift: f64,
}

/// Serializable description of the paired differential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSpec {
    pub terms: LaurentPoly,
    pub pole: Pole,
}

impl QuadDiff for DifferentialSpec {
    fn terms(&self) -> LaurentPoly {
        self.terms.clone()
    }

    fn pole(&self) -> Pole {
        self.pole
    }

    fn pole_order(&self) -> usize {
        match self.pole {
            Pole::Infinity => (self.terms.max_power() + 4).max(0) as usize,
            Pole::Origin => (-self.terms.min_power).max(0) as usize,
        }
    }

    fn domain(&self) -> crate::qdiff::Domain {
        crate::qdiff::QuadDiff::domain(&self.terms)
    }
}

/// Nodal coefficients of the discrete problem.
///
/// The unknown is `u = w − φ` with the smooth reference
/// `φ = ¼ ln F(|q|²)`, `F(t) = t + δ² e^{−t/δ²}`, whose Laplacian is known in
/// closed form. The scale `δ` depends on the domain but not on the
/// resolution, so `u` is one fixed smooth function under refinement, and
/// away from the zeros it is `w₁` up to a Gaussian-small term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Coefficients {
    q_abs: Vec<f64>,
    phi: Vec<f64>,
    lap_phi: Vec<f64>,
    /// `φ − ½ ln|q| = ¼ ln(1 + δ² e^{−|q|²/δ²}/|q|²)`.
    correction: Vec<f64>,
    /// `u` at the far ends of shortened arms, where `w₁ = 0`.
    ends: Vec<[f64; 4]>,
    delta: f64,
}

/// `φ − ½ ln|q|` at `|q| = a`.
fn correction(a: f64, d2: f64) -> f64 {
    if d2 == 0.0 {
        return 0.0;
    }
    let t = a * a;
    0.25 * (d2 * (-t / d2).exp() / t).ln_1p()
}

fn interior_residual(grid: &Grid, u: &[f64], c: &Coefficients) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if grid.kinds[k] != NodeKind::Interior {
                return 0.0;
            }
            let q2 = c.q_abs[k] * c.q_abs[k];
            let w = u[k] + c.phi[k];
            grid.laplacian_at(u, Some(&c.ends), k) + c.lap_phi[k] - (2.0 * w).exp() + (-2.0 * w).exp() * q2
        })
        .collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `(−Δ_h + diag(d)) x = b` on interior nodes by Jacobi-preconditioned
/// conjugate gradients; `x` is zero on non-interior nodes.
fn solve_linear(grid: &Grid, d: &[f64], b: &[f64], tol: f64) -> (Vec<f64>, usize) {
    let n = grid.len();
    let interior: Vec<bool> = grid.kinds.iter().map(|k| *k == NodeKind::Interior).collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|k| if interior[k] { -grid.laplacian_at(x, None, k) + d[k] * x[k] } else { 0.0 })
            .collect()
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        (0..n).map(|k| if interior[k] { r[k] / (grid.stencil_diagonal(k) + d[k]) } else { 0.0 }).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = (0..n).map(|k| if interior[k] { b[k] } else { 0.0 }).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let target = tol.max(1e-14 * sup_norm(&r));
    let max_iter = 20 * n.max(100);
    for it in 0..max_iter {
        if sup_norm(&r) <= target {
            return (x, it);
        }
        let ap = apply(&p);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    (x, max_iter)
}

/// Newton solve of the discretized Bochner equation.
///
/// The start is `½ ln(|q| + 1) + c` with the smallest `c` in steps of `1/4`
/// that makes it a discrete super-solution. Since the nonlinearity is convex
/// and increasing in `w`, full Newton steps from a super-solution stay
/// super-solutions and decrease pointwise; damping is used only if a step
/// fails to reduce the residual.
pub fn solve_bochner(q: &impl QuadDiff, grid: &Grid, tol: f64) -> Result<ScalarField> {
    solve_bochner_with_cap(q, grid, tol, 50)
}

pub fn solve_bochner_with_cap(
    q: &impl QuadDiff,
    grid: &Grid,
    tol: f64,
    max_newton: usize,
) -> Result<ScalarField> {
    if !(tol >= 1e-12) {
        return Err(Error::Grid(format!("tolerance {tol:e} is below 1e-12")));
    }
    let terms = q.terms();
    let annulus = matches!(grid.geometry, Geometry::Annulus { .. });
    let n = grid.len();
    // q and q' in the solve coordinate.
    let q_solve = |c: Complex64| -> (Complex64, Complex64) {
        if annulus {
            let z = c.exp();
            let (v, d) = terms.eval_with_derivative(z);
            (v * z * z, z * z * (z * d + 2.0 * v))
        } else {
            terms.eval_with_derivative(c)
        }
    };
    let values: Vec<(Complex64, Complex64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            if grid.kinds[k] == NodeKind::Outside {
                (Complex64::new(f64::NAN, 0.0), Complex64::new(f64::NAN, 0.0))
            } else {
                q_solve(grid.solve_coordinate(k))
            }
        })
        .collect();
    let q_abs: Vec<f64> = values.iter().map(|(v, _)| v.norm()).collect();

    let zeros = terms.zeros();
    let solve_zeros: Vec<Complex64> = zeros
        .iter()
        .filter(|z| z.norm() > 0.0 || !annulus)
        .map(|z| grid.to_solve(*z))
        .collect();
    let cell = grid.hx.max(grid.hy);
    let period = if annulus { Some(2.0 * PI) } else { None };
    let near = |c: Complex64, radius: f64| {
        solve_zeros.iter().any(|z| {
            let mut dy = (c.im - z.im).abs();
            if let Some(p) = period {
                dy = dy.min(p - dy);
            }
            (c.re - z.re).hypot(dy) <= radius
        })
    };
    let rim = grid.rim();
    for z in &rim {
        let c = grid.to_solve(*z);
        if q_solve(c).0.norm() < 1e-300 || near(c, 0.5 * cell) {
            return Err(Error::Grid(format!("q vanishes on the grid boundary near {z}")));
        }
    }
    let masked: Vec<bool> = (0..n)
        .map(|k| grid.kinds[k] != NodeKind::Outside && near(grid.solve_coordinate(k), 2.0 * cell))
        .collect();

    let differential = DifferentialSpec { terms: terms.clone(), pole: q.pole() };
    if !zeros.is_empty() {
        let margin = rim
            .par_iter()
            .filter_map(|z| q_distance_to_zeros(&differential, *z))
            .reduce(|| f64::INFINITY, f64::min);
        if margin < 2.0 {
            return Err(Error::Grid(format!(
                "the grid boundary comes within q-distance {margin:.3} of a zero (need 2)"
            )));
        }
    }

    // Smoothing scale: the size of |q| at a sixteenth of the domain width
    // from its zeros, four cells at the coarsest resolution.
    let core = grid.hx * (grid.nx - 1) as f64 / 16.0;
    let delta = solve_zeros
        .iter()
        .flat_map(|z| (0..8).map(move |j| *z + Complex64::from_polar(core, j as f64 * PI / 4.0)))
        .map(|c| q_solve(c).0.norm())
        .fold(0.0, f64::max);
    let d2 = delta * delta;
    let coef = Coefficients {
        phi: q_abs.iter().map(|a| 0.25 * (a * a + d2 * (-a * a / d2).exp()).ln()).collect(),
        lap_phi: values
            .iter()
            .zip(&q_abs)
            .map(|((_, d), a)| {
                if d2 == 0.0 {
                    return 0.0;
                }
                let t = a * a;
                let e = (-t / d2).exp();
                let f = t + d2 * e;
                d.norm_sqr() * e * ((1.0 - e) * (d2 + t) + t * f / d2) / (f * f)
            })
            .collect(),
        correction: q_abs.iter().map(|a| correction(*a, d2)).collect(),
        ends: (0..n)
            .into_par_iter()
            .map(|k| {
                let mut ends = [0.0; 4];
                if grid.kinds[k] != NodeKind::Interior {
                    return ends;
                }
                let c = grid.solve_coordinate(k);
                let h2 = grid.squared_arms(k);
                let steps = [
                    Complex64::new(1.0, 0.0),
                    Complex64::new(-1.0, 0.0),
                    Complex64::new(0.0, 1.0),
                    Complex64::new(0.0, -1.0),
                ];
                for a in 0..4 {
                    if grid.arms[k][a] < 1.0 {
                        ends[a] = -correction(q_solve(c + steps[a] * h2[a].sqrt()).0.norm(), d2);
                    }
                }
                ends
            })
            .collect(),
        q_abs,
        delta,
    };

    let mut start_shift = 0.0;
    let mut u: Vec<f64> = Vec::new();
    let mut found = false;
    while start_shift <= 20.0 {
        u = (0..n)
            .map(|k| match grid.kinds[k] {
                NodeKind::Outside => f64::NAN,
                NodeKind::Boundary => -coef.correction[k],
                NodeKind::Interior => {
                    0.5 * (coef.q_abs[k] + 1.0).ln() + start_shift - coef.phi[k]
                }
            })
            .collect();
        let f = interior_residual(grid, &u, &coef);
        if f.iter().all(|v| *v <= 0.0) {
            found = true;
            break;
        }
        start_shift += 0.25;
    }
    if !found {
        return Err(Error::Grid("no super-solution found for the initial guess".into()));
    }

    let mut history = Vec::new();
    let mut f = interior_residual(grid, &u, &coef);
    let mut res = sup_norm(&f);
    let mut iterations = 0;
    while res >= tol {
        if iterations >= max_newton {
            return Err(Error::NewtonDiverged { iterations, residual: res });
        }
        iterations += 1;
        let d: Vec<f64> = (0..n)
            .map(|k| {
                if grid.kinds[k] == NodeKind::Interior {
                    let q2 = coef.q_abs[k] * coef.q_abs[k];
                    let w = u[k] + coef.phi[k];
                    2.0 * (2.0 * w).exp() + 2.0 * (-2.0 * w).exp() * q2
                } else {
                    0.0
                }
            })
            .collect();
        // (−Δ + g') δ = F solves J δ = −F with J = Δ − g'.
        let (step, cg_iterations) = solve_linear(grid, &d, &f, 1e-3 * tol);
        let mut damping = 1.0;
        let (next, next_f, next_res) = loop {
            let trial: Vec<f64> = (0..n)
                .map(|k| {
                    if grid.kinds[k] == NodeKind::Interior { u[k] + damping * step[k] } else { u[k] }
                })
                .collect();
            let tf = interior_residual(grid, &trial, &coef);
            let tr = sup_norm(&tf);
            let finite = trial
                .iter()
                .zip(&grid.kinds)
                .all(|(v, k)| *k == NodeKind::Outside || v.is_finite());
            let still_super = tf.iter().all(|v| *v <= 1e-3 * tol);
            if finite && (tr < res || still_super) {
                break (trial, tf, tr);
            }
            damping *= 0.5;
            if damping < 1e-8 {
                return Err(Error::NewtonDiverged { iterations, residual: res });
            }
        };
        let max_increase = (0..n)
            .filter(|k| grid.kinds[*k] == NodeKind::Interior)
            .map(|k| next[k] - u[k])
            .fold(f64::NEG_INFINITY, f64::max);
        history.push(NewtonStep { residual: next_res, damping, cg_iterations, max_increase });
        u = next;
        f = next_f;
        res = next_res;
    }

    let values = u.iter().zip(&coef.phi).map(|(a, b)| a + b).collect();
    Ok(ScalarField {
        grid: grid.clone(),
        values,
        u,
        coef,
        masked,
        differential,
        history,
        start_shift,
    })
}

/// A derived nodal quantity; masked and outside nodes hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl NodalField {
    /// Bilinear interpolation at the physical point `z`; `None` if any
    /// surrounding node is masked or outside.
    pub fn interpolate(&self, z: Complex64) -> Option<f64> {
        interpolate(&self.grid, &self.values, z)
    }

    pub fn unmasked(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k, *v))
    }

    pub fn min(&self) -> f64 {
        self.unmasked().map(|(_, v)| v).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.unmasked().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn interpolate(grid: &Grid, values: &[f64], z: Complex64) -> Option<f64> {
    let c = grid.to_solve(z);
    let fx = (c.re - grid.x0) / grid.hx;
    let fy = (c.im - grid.y0) / grid.hy;
    if !fx.is_finite() || !fy.is_finite() || fx < 0.0 || fy < 0.0 {
        return None;
    }
    let i = (fx.floor() as usize).min(grid.nx - 2);
    let tx = fx - i as f64;
    let (j, j1, ty) = if grid.periodic() {
        let j = (fy.floor() as usize) % grid.ny;
        (j, (j + 1) % grid.ny, fy - fy.floor())
    } else {
        let j = (fy.floor() as usize).min(grid.ny - 2);
        (j, j + 1, fy - j as f64)
    };
    if tx > 1.0 + 1e-9 || ty > 1.0 + 1e-9 {
        return None;
    }
    let v = |a: usize, b: usize| values[a * grid.ny + b];
    let out = (1.0 - tx) * (1.0 - ty) * v(i, j)
        + tx * (1.0 - ty) * v(i + 1, j)
        + (1.0 - tx) * ty * v(i, j1)
        + tx * ty * v(i + 1, j1);
    out.is_finite().then_some(out)
}

impl ScalarField {
    pub fn residual(&self) -> f64 {
        sup_norm(&interior_residual(&self.grid, &self.u, &self.coef))
    }

    pub fn newton_iterations(&self) -> usize {
        self.history.len()
    }

    /// True if no Newton step raised any node by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.history.iter().all(|s| s.max_increase <= slack)
    }

    pub fn is_masked(&self, k: usize) -> bool {
        self.masked[k]
    }

    pub fn differential(&self) -> &DifferentialSpec {
        &self.differential
    }

    /// `w` in the physical coordinate `z`.
    pub fn w_physical(&self, k: usize) -> f64 {
        match self.grid.geometry {
            Geometry::Disk { .. } => self.values[k],
            Geometry::Annulus { .. } => self.values[k] - self.grid.solve_coordinate(k).re,
        }
    }

    /// `w₁ = w − ½ ln|q|` at the node, unmasked only.
    pub fn w1_at(&self, k: usize) -> Option<f64> {
        if self.grid.kinds[k] == NodeKind::Outside || self.masked[k] {
            return None;
        }
        if self.grid.kinds[k] == NodeKind::Boundary {
            return Some(0.0);
        }
        Some(self.u[k] + self.coef.correction[k])
    }

    /// Sup-norm distance to another solve at the physical points of this
    /// grid's unmasked interior nodes, skipping points where `other` cannot
    /// be interpolated.
    pub fn sup_difference(&self, other: &ScalarField) -> f64 {
        let other_w: Vec<f64> = (0..other.grid.len())
            .map(|k| {
                if other.grid.kinds[k] == NodeKind::Outside || other.masked[k] {
                    f64::NAN
                } else {
                    other.w_physical(k)
                }
            })
            .collect();
        (0..self.grid.len())
            .filter(|k| self.grid.kinds[*k] == NodeKind::Interior && !self.masked[*k])
            .filter_map(|k| {
                interpolate(&other.grid, &other_w, self.grid.position(k))
                    .map(|v| (v - self.w_physical(k)).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest violation of `w(z) = w(1/z)` (for symmetric differentials on
    /// annuli), measured in the solve coordinate where the symmetry reads
    /// `(s, θ) ↦ (−s, −θ)`.
    pub fn inversion_asymmetry(&self) -> Option<f64> {
        if !self.grid.periodic() {
            return None;
        }
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut worst = 0.0f64;
        for i in 0..nx {
            for j in 0..ny {
                let a = self.values[i * ny + j];
                let b = self.values[(nx - 1 - i) * ny + (ny - j) % ny];
                worst = worst.max((a - b).abs());
            }
        }
        Some(worst)
    }

    /// Writes `<stem>.bin` (little-endian f64 of `w` in the solve
    /// coordinate, NaN outside) and `<stem>.json` (header).
    pub fn export(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(stem.with_extension("bin"), bytes)?;
        let header = serde_json::json!({
            "geometry": self.grid.geometry,
            "N": self.grid.n,
            "shape": [self.grid.nx, self.grid.ny],
            "h": [self.grid.hx, self.grid.hy],
            "differential": self.differential,
        });
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }
}

pub fn w1_field(w: &ScalarField) -> NodalField {
    let values = (0..w.grid.len()).map(|k| w.w1_at(k).unwrap_or(f64::NAN)).collect();
    NodalField { grid: w.grid.clone(), values }
}

/// `e = 2 cosh(2 w₁)`, the energy density relative to `|q|`.
pub fn energy_density(w: &ScalarField) -> NodalField {
    let values = (0..w.grid.len())
        .map(|k| match w.w1_at(k) {
            Some(v) => 2.0 * (2.0 * v).cosh(),
            None => f64::NAN,
        })
        .collect();
    NodalField { grid: w.grid.clone(), values }
}

/// `2 sinh(2 w₁)`, proportional to the Jacobian of the harmonic map.
pub fn jacobian_field(w: &ScalarField) -> NodalField {
    let values = (0..w.grid.len())
        .map(|k| match w.w1_at(k) {
            Some(v) => 2.0 * (2.0 * v).sinh(),
            None => f64::NAN,
        })
        .collect();
    NodalField { grid: w.grid.clone(), values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c_fit: f64,
    pub alpha_fit: f64,
    /// Most negative `w₁` over unmasked nodes (0 if none is negative).
    pub max_violation: f64,
    /// `(s, sup over the shell r ∈ [s, s+1))` used in the fit.
    pub shells: Vec<(f64, f64)>,
}

/// Values below this are treated as round-off in shell fits.
const SHELL_FLOOR: f64 = 1e-12;

fn q_distances(w: &ScalarField) -> Vec<f64> {
    (0..w.grid.len())
        .into_par_iter()
        .map(|k| {
            if w.grid.kinds[k] == NodeKind::Outside {
                return f64::NAN;
            }
            q_distance_to_zeros(&w.differential, w.grid.position(k)).unwrap_or(f64::NAN)
        })
        .collect()
}

fn shell_fit(
    w: &ScalarField,
    values: &[Option<f64>],
    distances: &[f64],
) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    let boundary_r = w
        .grid
        .rim()
        .par_iter()
        .filter_map(|z| q_distance_to_zeros(&w.differential, *z))
        .reduce(|| f64::INFINITY, f64::min);
    if !boundary_r.is_finite() {
        return Err(Error::DegenerateFit("q has no zeros; the distance function is undefined".into()));
    }
    let mut shells = Vec::new();
    let mut s = 1.0;
    // Shells within two units of the artificial boundary feel the boundary
    // condition and are left out.
    while s + 1.0 <= boundary_r - 2.0 {
        let sup = (0..w.grid.len())
            .filter(|k| w.grid.kinds[*k] == NodeKind::Interior)
            .filter(|k| distances[*k] >= s && distances[*k] < s + 1.0)
            .filter_map(|k| values[k])
            .fold(f64::NEG_INFINITY, f64::max);
        if sup.is_finite() && sup > SHELL_FLOOR {
            shells.push((s, sup));
        }
        s += 1.0;
    }
    if shells.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "only {} shells above the round-off floor; grid too small",
            shells.len()
        )));
    }
    let m = shells.len() as f64;
    let sx: f64 = shells.iter().map(|(s, _)| s).sum();
    let sy: f64 = shells.iter().map(|(_, v)| v.ln()).sum();
    let sxx: f64 = shells.iter().map(|(s, _)| s * s).sum();
    let sxy: f64 = shells.iter().map(|(s, v)| s * v.ln()).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    Ok((intercept.exp(), -slope, shells))
}

/// Log-linear fit `sup_{r ∈ [s, s+1)} w₁ ≈ C e^{−α s}` over q-distance
/// shells from the zeros.
pub fn decay_fit(w: &ScalarField) -> Result<DecayFit> {
    let w1: Vec<Option<f64>> = (0..w.grid.len()).map(|k| w.w1_at(k)).collect();
    let max_violation = w1.iter().flatten().fold(0.0f64, |m, v| m.min(*v));
    if w1.iter().flatten().all(|v| v.abs() < SHELL_FLOOR) {
        return Err(Error::DegenerateFit("w1 vanishes identically".into()));
    }
    let distances = q_distances(w);
    let (c_fit, alpha_fit, shells) = shell_fit(w, &w1, &distances)?;
    Ok(DecayFit { c_fit, alpha_fit, max_violation, shells })
}

/// The same fit for `|∇w₁|` (central differences in the solve coordinate).
pub fn gradient_decay_fit(w: &ScalarField) -> Result<DecayFit> {
    let g = &w.grid;
    let w1: Vec<Option<f64>> = (0..g.len()).map(|k| w.w1_at(k)).collect();
    let grad: Vec<Option<f64>> = (0..g.len())
        .map(|k| {
            if g.kinds[k] != NodeKind::Interior {
                return None;
            }
            let [ip, im, jp, jm] = g.neighbours(k);
            let dx = (w1[ip]? - w1[im]?) / (2.0 * g.hx);
            let dy = (w1[jp]? - w1[jm]?) / (2.0 * g.hy);
            Some(dx.hypot(dy))
        })
        .collect();
    if grad.iter().flatten().all(|v| v.abs() < SHELL_FLOOR) {
        return Err(Error::DegenerateFit("gradient of w1 vanishes identically".into()));
    }
    let distances = q_distances(w);
    let (c_fit, alpha_fit, shells) = shell_fit(w, &grad, &distances)?;
    Ok(DecayFit { c_fit, alpha_fit, max_violation: 0.0, shells })
}
