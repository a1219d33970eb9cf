//! Energy-minimizing maps from a mesh into the Poincaré disk.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::hypgeom::{distance, exp_map, log_map, DiskPoint};

/// Largest modulus a vertex value may take.
const DISK_CLAMP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Initial {
    /// Every free vertex starts at the origin.
    Zero,
    /// Free vertices uniform in the disk of radius 0.9.
    Random(u64),
    Given(Vec<Complex64>),
    /// Euclidean cotangent-harmonic extension of the constrained values.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletOptions {
    /// Stop once no vertex moves by more than this hyperbolic distance.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Over-relaxation factor along the geodesic to the barycenter.
    pub relaxation: f64,
    pub init: Initial,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions { tol: 1e-10, max_sweeps: 20_000, relaxation: 1.85, init: Initial::Harmonic }
    }
}

/// Vertex values in the disk over a shared source mesh.
#[derive(Debug, Clone)]
pub struct DiscreteMap {
    mesh: Arc<Mesh>,
    values: Vec<Complex64>,
    constrained: Vec<bool>,
    /// Energy before the first sweep and after every sweep.
    pub energy_history: Vec<f64>,
    pub sweeps: usize,
    pub displacement: f64,
}

impl DiscreteMap {
    /// A map given directly by its values, with nothing constrained.
    pub fn from_values(mesh: Arc<Mesh>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != mesh.vertex_count() {
            return Err(Error::Mesh("one value per vertex required".into()));
        }
        if let Some(z) = values.iter().find(|z| !(z.norm() < 1.0)) {
            return Err(Error::Geometry(format!("{z} is not inside the unit disk")));
        }
        let n = values.len();
        Ok(DiscreteMap {
            mesh,
            values,
            constrained: vec![false; n],
            energy_history: Vec::new(),
            sweeps: 0,
            displacement: 0.0,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, v: usize) -> DiskPoint {
        DiskPoint::new(self.values[v]).expect("values stay inside the disk")
    }

    pub fn is_constrained(&self, v: usize) -> bool {
        self.constrained[v]
    }

    pub fn energy(&self) -> f64 {
        energy(&self.mesh, &self.values)
    }

    /// Largest norm of the energy gradient over unconstrained vertices.
    pub fn gradient_norm(&self) -> f64 {
        (0..self.values.len())
            .filter(|v| !self.constrained[*v])
            .map(|v| vertex_gradient(&self.mesh, &self.values, v))
            .fold(0.0, f64::max)
    }

    pub fn is_energy_monotone(&self) -> bool {
        self.energy_history
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-13) + 1e-300)
    }

    /// Largest hyperbolic distance between corresponding values.
    pub fn sup_distance(&self, other: &DiscreteMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| distance(*a, *b))
            .fold(0.0, f64::max)
    }

    pub fn export(&self) -> Vec<[f64; 2]> {
        self.values.iter().map(|z| [z.re, z.im]).collect()
    }
}

/// Σ over edges of `w_ij d(h_i, h_j)²`.
pub fn energy(mesh: &Mesh, values: &[Complex64]) -> f64 {
    mesh.edges()
        .iter()
        .map(|&(i, j, w)| {
            let d = distance(values[i], values[j]);
            w * d * d
        })
        .sum()
}

/// Norm of `∂E/∂h_v`, which is `−2 Σ w_j log_{h_v}(h_j)`.
pub fn vertex_gradient(mesh: &Mesh, values: &[Complex64], v: usize) -> f64 {
    let x = values[v];
    let s: Complex64 = mesh.neighbours(v).iter().map(|(u, w)| log_map(x, values[*u]) * *w).sum();
    2.0 * s.norm()
}

fn local_energy(mesh: &Mesh, values: &[Complex64], v: usize, x: Complex64) -> f64 {
    mesh.neighbours(v)
        .iter()
        .map(|(u, w)| {
            let d = distance(x, values[*u]);
            w * d * d
        })
        .sum()
}

/// Weighted hyperbolic barycenter of the neighbours of `v`, starting at `x`.
fn barycenter(mesh: &Mesh, values: &[Complex64], v: usize, mut x: Complex64) -> Complex64 {
    let total: f64 = mesh.neighbours(v).iter().map(|(_, w)| w).sum();
    for _ in 0..8 {
        let g: Complex64 = mesh
            .neighbours(v)
            .iter()
            .map(|(u, w)| log_map(x, values[*u]) * *w)
            .sum::<Complex64>()
            / total;
        x = clamp(exp_map(x, g));
        if g.norm() < 1e-15 {
            break;
        }
    }
    x
}

fn clamp(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > DISK_CLAMP {
        z * (DISK_CLAMP / r)
    } else {
        z
    }
}

fn initial_values(
    mesh: &Mesh,
    fixed: &[Option<Complex64>],
    init: &Initial,
) -> Result<Vec<Complex64>> {
    let n = mesh.vertex_count();
    let mut values = match init {
        Initial::Zero => vec![Complex64::new(0.0, 0.0); n],
        Initial::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..n)
                .map(|_| {
                    let r = 0.9 * rng.gen::<f64>().sqrt();
                    Complex64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect()
        }
        Initial::Given(v) => {
            if v.len() != n || v.iter().any(|z| !(z.norm() < 1.0)) {
                return Err(Error::Mesh("initial values must be one disk point per vertex".into()));
            }
            v.clone()
        }
        Initial::Harmonic => euclidean_extension(mesh, fixed)?,
    };
    for (v, f) in fixed.iter().enumerate() {
        if let Some(z) = f {
            values[v] = *z;
        }
    }
    Ok(values.into_iter().map(clamp).collect())
}

/// Cotangent-harmonic extension in the Euclidean sense, by conjugate
/// gradients on the free vertices.
fn euclidean_extension(mesh: &Mesh, fixed: &[Option<Complex64>]) -> Result<Vec<Complex64>> {
    let n = mesh.vertex_count();
    let mut x: Vec<Complex64> = fixed.iter().map(|f| f.unwrap_or_default()).collect();
    if fixed.iter().all(|f| f.is_none()) {
        return Ok(x);
    }
    let free: Vec<bool> = fixed.iter().map(|f| f.is_none()).collect();
    // A x = b on free vertices, A = weighted graph Laplacian.
    let apply = |p: &[Complex64]| -> Vec<Complex64> {
        (0..n)
            .map(|v| {
                if !free[v] {
                    return Complex64::default();
                }
                mesh.neighbours(v)
                    .iter()
                    .map(|(u, w)| {
                        let pu = if free[*u] { p[*u] } else { Complex64::default() };
                        (p[v] - pu) * *w
                    })
                    .sum()
            })
            .collect()
    };
    let mut r: Vec<Complex64> = (0..n)
        .map(|v| {
            if !free[v] {
                return Complex64::default();
            }
            mesh.neighbours(v)
                .iter()
                .filter(|(u, _)| !free[*u])
                .map(|(u, w)| x[*u] * *w)
                .sum()
        })
        .collect();
    let dot = |a: &[Complex64], b: &[Complex64]| -> f64 {
        a.iter().zip(b).map(|(p, q)| (p.conj() * q).re).sum()
    };
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let scale = rr.sqrt().max(1e-300);
    for _ in 0..10 * n {
        if rr.sqrt() < 1e-13 * scale {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for v in 0..n {
            if free[v] {
                x[v] += p[v] * alpha;
                r[v] -= ap[v] * alpha;
            }
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for v in 0..n {
            p[v] = r[v] + p[v] * beta;
        }
    }
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::Mesh("harmonic initialisation failed".into()));
    }
    Ok(x)
}

/// Minimizes the energy with the listed vertices held fixed. Unlisted
/// vertices, including unlisted mesh-boundary vertices, are free.
pub fn solve_dirichlet(
    mesh: Arc<Mesh>,
    constrained: &[(usize, DiskPoint)],
    options: &DirichletOptions,
) -> Result<DiscreteMap> {
    let n = mesh.vertex_count();
    let mut fixed = vec![None; n];
    for &(v, p) in constrained {
        if v >= n {
            return Err(Error::Mesh(format!("constrained vertex {v} does not exist")));
        }
        fixed[v] = Some(p.z());
    }
    for v in 0..n {
        if fixed[v].is_none() {
            let total: f64 = mesh.neighbours(v).iter().map(|(_, w)| w).sum();
            if !(total > 0.0) {
                return Err(Error::Mesh(format!("vertex {v} has non-positive total weight")));
            }
        }
    }
    let mut values = initial_values(&mesh, &fixed, &options.init)?;
    let colours: Vec<Vec<usize>> = mesh
        .colouring()
        .into_iter()
        .map(|c| c.into_iter().filter(|v| fixed[*v].is_none()).collect())
        .collect();
    let omega = options.relaxation;
    let mut history = vec![energy(&mesh, &values)];
    let mut displacement = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        displacement = 0.0;
        for class in &colours {
            let updates: Vec<(usize, Complex64, f64)> = class
                .par_iter()
                .map(|&v| {
                    let x0 = values[v];
                    let e0 = local_energy(&mesh, &values, v, x0);
                    let b = barycenter(&mesh, &values, v, x0);
                    let eb = local_energy(&mesh, &values, v, b);
                    let mut best = if eb <= e0 { b } else { x0 };
                    if omega != 1.0 && eb <= e0 {
                        let c = clamp(exp_map(x0, log_map(x0, b) * omega));
                        if local_energy(&mesh, &values, v, c) <= e0 {
                            best = c;
                        }
                    }
                    (v, best, distance(x0, best))
                })
                .collect();
            for (v, z, d) in updates {
                values[v] = z;
                displacement = f64::max(displacement, d);
            }
        }
        sweeps += 1;
        history.push(energy(&mesh, &values));
        if displacement < options.tol {
            break;
        }
    }
    if !(displacement < options.tol) {
        return Err(Error::SweepDiverged { sweeps, displacement });
    }
    let constrained = fixed.iter().map(|f| f.is_some()).collect();
    Ok(DiscreteMap { mesh, values, constrained, energy_history: history, sweeps, displacement })
}

/// Result of a partially free solve: the restriction to the given mesh,
/// the doubled solve it came from, and the diagnostics of the reflection.
#[derive(Debug, Clone)]
pub struct PfdSolution {
    pub map: DiscreteMap,
    pub doubled: DiscreteMap,
    /// Largest distance between the doubled map and its reflection.
    pub symmetry_error: f64,
    /// Largest energy gradient on the free boundary of the half map.
    pub free_boundary_residual: f64,
}

/// Mirror image of `mesh` across `Re z = 0`, glued along that line.
/// Returns the doubled mesh and, per original vertex, its mirror index.
pub fn reflect_mesh(mesh: &Mesh) -> Result<(Mesh, Vec<usize>)> {
    let pos = mesh.positions();
    if pos.iter().any(|p| p.re < -1e-12) {
        return Err(Error::Mesh("reflection needs a mesh in Re z ≥ 0".into()));
    }
    let n = pos.len();
    let mut positions = pos.to_vec();
    let mut mirror = vec![0; n];
    for v in 0..n {
        if pos[v].re.abs() < 1e-12 {
            mirror[v] = v;
        } else {
            mirror[v] = positions.len();
            positions.push(Complex64::new(-pos[v].re, pos[v].im));
        }
    }
    let mut triangles = mesh.triangles().to_vec();
    for &[a, b, c] in mesh.triangles() {
        triangles.push([mirror[a], mirror[c], mirror[b]]);
    }
    Ok((Mesh::new(positions, triangles, mesh.period())?, mirror))
}

/// Least-energy map with data on the listed vertices and the part of the
/// boundary on `Re z = 0` left free, computed by solving the doubled problem.
pub fn pfd_solve(
    mesh: Arc<Mesh>,
    outer: &[(usize, DiskPoint)],
    options: &DirichletOptions,
) -> Result<PfdSolution> {
    let (doubled_mesh, mirror) = reflect_mesh(&mesh)?;
    let mut data: Vec<(usize, DiskPoint)> = outer.to_vec();
    for &(v, p) in outer {
        if mirror[v] != v {
            data.push((mirror[v], p));
        }
    }
    let doubled = solve_dirichlet(Arc::new(doubled_mesh), &data, options)?;
    let n = mesh.vertex_count();
    let values: Vec<Complex64> = doubled.values[..n].to_vec();
    let symmetry_error = (0..n)
        .map(|v| distance(doubled.values[v], doubled.values[mirror[v]]))
        .fold(0.0, f64::max);
    let free_boundary_residual = (0..n)
        .filter(|v| mirror[*v] == *v)
        .map(|v| vertex_gradient(&mesh, &values, v))
        .fold(0.0, f64::max);
    let mut constrained = vec![false; n];
    for &(v, _) in outer {
        constrained[v] = true;
    }
    let map = DiscreteMap {
        mesh,
        values,
        constrained,
        energy_history: doubled.energy_history.iter().map(|e| 0.5 * e).collect(),
        sweeps: doubled.sweeps,
        displacement: doubled.displacement,
    };
    Ok(PfdSolution { map, doubled, symmetry_error, free_boundary_residual })
}

/// Energy change when the source of `map` is sheared by `τ·x/L` along the
/// periodic direction, `L` being the length of the cylinder.
pub fn twist_delta(map: &DiscreteMap, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return Ok(0.0);
    }
    let mesh = map.mesh();
    let (lo, hi) = mesh
        .positions()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.re), b.max(p.re)));
    let length = hi - lo;
    if !(length > 0.0) {
        return Err(Error::Mesh("twist needs a mesh of positive length".into()));
    }
    let sheared = mesh.with_positions(|p| Complex64::new(p.re, p.im - tau * (p.re - lo) / length))?;
    Ok(energy(&sheared, map.values()) - map.energy())
}
