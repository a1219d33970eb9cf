//! Triangle meshes of planar source domains with cotangent weights.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest interior angle accepted in any triangle.
pub const MIN_ANGLE_DEG: f64 = 5.0;

/// A triangulated planar domain. Cylinders are stored as strips with the
/// imaginary direction identified modulo `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    positions: Vec<Complex64>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    period: Option<f64>,
    /// `(i, j, w_ij)` with `i < j`.
    edges: Vec<(usize, usize, f64)>,
    /// Per vertex: `(neighbour, weight)`.
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Serialized form used for import/export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub positions: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub period: Option<f64>,
}

impl Mesh {
    pub fn new(
        positions: Vec<Complex64>,
        triangles: Vec<[usize; 3]>,
        period: Option<f64>,
    ) -> Result<Self> {
        let nv = positions.len();
        if triangles.iter().flatten().any(|&v| v >= nv) {
            return Err(Error::Mesh("triangle references a missing vertex".into()));
        }
        let mut mesh = Mesh {
            positions,
            triangles,
            boundary: vec![false; nv],
            period,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); nv],
        };
        let mut weights: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangles[t];
            let (e1, e2) = (mesh.edge_vector(a, b), mesh.edge_vector(a, c));
            let area = 0.5 * (e1.conj() * e2).im;
            if !(area > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} is degenerate or clockwise")));
            }
            for (p, q, r) in [(a, b, c), (b, c, a), (c, a, b)] {
                // Angle at p is opposite edge (q, r).
                let u = mesh.edge_vector(p, q);
                let v = mesh.edge_vector(p, r);
                let angle = (u.conj() * v).arg().abs();
                if angle.to_degrees() < MIN_ANGLE_DEG {
                    return Err(Error::Mesh(format!(
                        "triangle {t} has an angle of {:.2}°",
                        angle.to_degrees()
                    )));
                }
                let key = (q.min(r), q.max(r));
                let entry = weights.entry(key).or_insert((0.0, 0));
                entry.0 += 0.5 / angle.tan();
                entry.1 += 1;
            }
        }
        for (&(i, j), &(w, count)) in &weights {
            if count > 2 {
                return Err(Error::Mesh(format!("edge ({i}, {j}) is shared by {count} triangles")));
            }
            if count == 1 {
                mesh.boundary[i] = true;
                mesh.boundary[j] = true;
            }
            mesh.edges.push((i, j, w));
            mesh.adjacency[i].push((j, w));
            mesh.adjacency[j].push((i, w));
        }
        Ok(mesh)
    }

    /// Disk of the given radius: a centre vertex and `rings` concentric rings,
    /// ring `k` carrying `6k` vertices.
    pub fn disk(radius: f64, rings: usize) -> Result<Self> {
        if rings < 2 || !(radius > 0.0) {
            return Err(Error::Mesh("a disk mesh needs radius > 0 and at least 2 rings".into()));
        }
        let mut positions = vec![Complex64::new(0.0, 0.0)];
        let mut starts = vec![0usize];
        for k in 1..=rings {
            starts.push(positions.len());
            let r = radius * k as f64 / rings as f64;
            for m in 0..6 * k {
                positions.push(Complex64::from_polar(r, 2.0 * PI * m as f64 / (6 * k) as f64));
            }
        }
        let mut triangles = Vec::new();
        for m in 0..6 {
            triangles.push([0, 1 + m, 1 + (m + 1) % 6]);
        }
        for k in 2..=rings {
            let (na, nb) = (6 * (k - 1), 6 * k);
            let (sa, sb) = (starts[k - 1], starts[k]);
            let (mut i, mut j) = (0usize, 0usize);
            while i < na || j < nb {
                let next_a = (i + 1) as f64 / na as f64;
                let next_b = (j + 1) as f64 / nb as f64;
                if j < nb && (i == na || next_b <= next_a) {
                    triangles.push([sa + i % na, sb + j, sb + (j + 1) % nb]);
                    j += 1;
                } else {
                    triangles.push([sa + i, sb + j % nb, sa + (i + 1) % na]);
                    i += 1;
                }
            }
        }
        Mesh::new(positions, triangles, None)
    }

    /// Cylinder `[x0, x1] × ℝ/(period)` with `nx` cells along `x` and `ny`
    /// around. Cells left of `x = 0` use the mirrored diagonal, so a
    /// cylinder symmetric about `x = 0` is invariant under `x ↦ −x`.
    pub fn cylinder(x0: f64, x1: f64, period: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 1 || ny < 3 || !(x1 > x0) || !(period > 0.0) {
            return Err(Error::Mesh("invalid cylinder dimensions".into()));
        }
        let hx = (x1 - x0) / nx as f64;
        let hy = period / ny as f64;
        let id = |i: usize, j: usize| i * ny + (j % ny);
        let mut positions = Vec::with_capacity((nx + 1) * ny);
        for i in 0..=nx {
            for j in 0..ny {
                positions.push(Complex64::new(x0 + i as f64 * hx, j as f64 * hy));
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for i in 0..nx {
            let centre = x0 + (i as f64 + 0.5) * hx;
            for j in 0..ny {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if centre >= 0.0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Mesh::new(positions, triangles, Some(period))
    }

    pub fn from_record(record: &MeshRecord) -> Result<Self> {
        let positions = record.positions.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        Mesh::new(positions, record.triangles.clone(), record.period)
    }

    pub fn to_record(&self) -> MeshRecord {
        MeshRecord {
            positions: self.positions.iter().map(|p| [p.re, p.im]).collect(),
            triangles: self.triangles.clone(),
            period: self.period,
        }
    }

    /// `p_j − p_i`, reduced modulo the period for cylinders.
    pub fn edge_vector(&self, i: usize, j: usize) -> Complex64 {
        let mut d = self.positions[j] - self.positions[i];
        if let Some(p) = self.period {
            d.im -= p * (d.im / p).round();
        }
        d
    }

    pub fn positions(&self) -> &[Complex64] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count()).filter(|v| self.boundary[*v]).collect()
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbours(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    pub fn min_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).fold(f64::INFINITY, f64::min)
    }

    pub fn min_angle_degrees(&self) -> f64 {
        let mut worst = 180.0f64;
        for &[a, b, c] in &self.triangles {
            for (p, q, r) in [(a, b, c), (b, c, a), (c, a, b)] {
                let u = self.edge_vector(p, q);
                let v = self.edge_vector(p, r);
                worst = worst.min((u.conj() * v).arg().abs().to_degrees());
            }
        }
        worst
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * (self.edge_vector(a, b).conj() * self.edge_vector(a, c)).im
    }

    /// Longest edge length.
    pub fn spacing(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(i, j, _)| self.edge_vector(i, j).norm())
            .fold(0.0, f64::max)
    }

    /// The same connectivity with every position moved by `f`.
    pub fn with_positions(&self, f: impl Fn(Complex64) -> Complex64) -> Result<Mesh> {
        Mesh::new(self.positions.iter().map(|p| f(*p)).collect(), self.triangles.clone(), self.period)
    }

    /// Greedy colouring: no two neighbours share a colour.
    pub fn colouring(&self) -> Vec<Vec<usize>> {
        let n = self.vertex_count();
        let mut colour = vec![usize::MAX; n];
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for v in 0..n {
            let used: Vec<usize> = self.adjacency[v].iter().map(|(u, _)| colour[*u]).collect();
            let c = (0..).find(|c| !used.contains(c)).expect("unbounded search");
            colour[v] = c;
            if c == classes.len() {
                classes.push(Vec::new());
            }
            classes[c].push(v);
        }
        classes
    }
}
