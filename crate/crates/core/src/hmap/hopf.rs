//! Hopf differentials of discrete maps, and boundary data on truncated
//! ideal polygons.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use super::solver::DiscreteMap;
use crate::error::{Error, Result};
use crate::hypgeom::{distance, exp_map, horocycle, log_map, metric_density, minkowski, DiskPoint, IdealPolygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Preserving,
    Reversing,
    Mixed,
    Degenerate,
}

/// Hopf differential `ρ(h) h_z conj(h_z̄)` of a discrete map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfSample {
    /// One value per triangle, from the linear interpolant.
    pub triangle_values: Vec<Complex64>,
    /// Area-weighted average of the adjacent triangle values.
    pub vertex_values: Vec<Complex64>,
    /// `(vertex, |∂̄φ|)` for interior vertices, `φ` interpolated linearly
    /// from the vertex values and `|∂̄φ|` averaged over adjacent triangles.
    pub residual: Vec<(usize, f64)>,
    pub orientation: Orientation,
}

impl HopfSample {
    pub fn max_abs(&self) -> f64 {
        self.triangle_values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Mean residual over interior vertices accepted by `keep`.
    pub fn mean_residual(&self, mesh: &Mesh, keep: impl Fn(Complex64) -> bool) -> f64 {
        let picked: Vec<f64> = self
            .residual
            .iter()
            .filter(|(v, _)| keep(mesh.positions()[*v]))
            .map(|(_, r)| *r)
            .collect();
        if picked.is_empty() {
            0.0
        } else {
            picked.iter().sum::<f64>() / picked.len() as f64
        }
    }
}

/// `(∂_z, ∂_z̄)` of the linear function taking the values `f` at the
/// corners of triangle `t`.
fn triangle_derivatives(mesh: &Mesh, t: usize, f: [Complex64; 3]) -> Result<(Complex64, Complex64)> {
    let [a, b, c] = mesh.triangles()[t];
    let e1 = mesh.edge_vector(a, b);
    let e2 = mesh.edge_vector(a, c);
    let (d1, d2) = (f[1] - f[0], f[2] - f[0]);
    let det = e1 * e2.conj() - e2 * e1.conj();
    if !(det.norm() > 1e-300) {
        return Err(Error::Mesh(format!("triangle {t} has no gradient")));
    }
    Ok(((d1 * e2.conj() - d2 * e1.conj()) / det, (e1 * d2 - e2 * d1) / det))
}

fn corner_values(mesh: &Mesh, t: usize, values: &[Complex64]) -> [Complex64; 3] {
    let [a, b, c] = mesh.triangles()[t];
    [values[a], values[b], values[c]]
}

pub fn hopf_extract(map: &DiscreteMap) -> Result<HopfSample> {
    let mesh = map.mesh();
    let values = map.values();
    let nt = mesh.triangles().len();
    let mut triangle_values = Vec::with_capacity(nt);
    let (mut preserving, mut reversing) = (0usize, 0usize);
    for t in 0..nt {
        let f = corner_values(mesh, t, values);
        let (hz, hzb) = triangle_derivatives(mesh, t, f)?;
        let centre = (f[0] + f[1] + f[2]) / 3.0;
        let phi = hz * hzb.conj() * metric_density(centre);
        if !phi.is_finite() {
            return Err(Error::Mesh(format!("non-finite Hopf value on triangle {t}")));
        }
        let jac = hz.norm_sqr() - hzb.norm_sqr();
        let scale = hz.norm_sqr() + hzb.norm_sqr();
        if jac > 1e-12 * scale {
            preserving += 1;
        } else if jac < -1e-12 * scale {
            reversing += 1;
        }
        triangle_values.push(phi);
    }
    let orientation = match (preserving, reversing) {
        (p, 0) if p == nt => Orientation::Preserving,
        (0, r) if r == nt => Orientation::Reversing,
        (0, 0) => Orientation::Degenerate,
        _ => Orientation::Mixed,
    };

    let nv = mesh.vertex_count();
    let mut acc = vec![Complex64::default(); nv];
    let mut area = vec![0.0; nv];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t);
        for &v in tri {
            acc[v] += triangle_values[t] * a;
            area[v] += a;
        }
    }
    let vertex_values: Vec<Complex64> = acc.iter().zip(&area).map(|(s, a)| s / *a).collect();

    let mut res = vec![0.0; nv];
    for t in 0..nt {
        let (_, dbar) = triangle_derivatives(mesh, t, corner_values(mesh, t, &vertex_values))?;
        let a = mesh.triangle_area(t);
        for &v in &mesh.triangles()[t] {
            res[v] += dbar.norm() * a;
        }
    }
    let residual = (0..nv)
        .filter(|v| !mesh.is_boundary(*v))
        .map(|v| (v, res[v] / area[v]))
        .collect();
    Ok(HopfSample { triangle_values, vertex_values, residual, orientation })
}

/// Corners of the truncated polygon in the disk: on the horocycle of cusp
/// `k`, first the point on side `k − 1`, then the point on side `k`.
pub fn truncated_polygon_corners(polygon: &IdealPolygon, heights: &[f64]) -> Result<Vec<Complex64>> {
    let m = polygon.vertex_count();
    if heights.len() != m {
        return Err(Error::Geometry(format!("{} heights for {m} cusps", heights.len())));
    }
    let cusps: Vec<[f64; 3]> = polygon
        .angles()
        .iter()
        .zip(heights)
        .map(|(a, t)| horocycle(*a, *t))
        .collect();
    let to_disk = |x: [f64; 3]| Complex64::new(x[0], x[1]) / (1.0 + x[2]);
    let comb = |a: f64, u: &[f64; 3], b: f64, v: &[f64; 3]| {
        [a * u[0] + b * v[0], a * u[1] + b * v[1], a * u[2] + b * v[2]]
    };
    let mut corners = Vec::with_capacity(2 * m);
    for k in 0..m {
        let u = &cusps[k];
        let prev = &cusps[(k + m - 1) % m];
        let next = &cusps[(k + 1) % m];
        // On the geodesic through the cusps of u and v, the point
        // u/D + v/2 lies on the horocycle of v, with D = |⟨u, v⟩|.
        let d_prev = minkowski(prev, u).abs();
        let d_next = minkowski(u, next).abs();
        if 2.0 / d_prev.min(d_next) >= 1.0 {
            return Err(Error::Geometry(format!("horocycle at cusp {k} meets a neighbour")));
        }
        corners.push(to_disk(comb(1.0 / d_prev, prev, 0.5, u)));
        corners.push(to_disk(comb(0.5, u, 1.0 / d_next, next)));
    }
    Ok(corners)
}

/// Closed geodesic polygon through `corners`, parametrized proportionally
/// to hyperbolic arclength by `s ∈ [0, 1)`.
#[derive(Debug, Clone)]
pub struct GeodesicLoop {
    corners: Vec<Complex64>,
    cumulative: Vec<f64>,
}

impl GeodesicLoop {
    pub fn new(corners: Vec<Complex64>) -> Result<Self> {
        if corners.len() < 3 || corners.iter().any(|z| !(z.norm() < 1.0)) {
            return Err(Error::Geometry("a loop needs at least 3 corners in the disk".into()));
        }
        let n = corners.len();
        let mut cumulative = vec![0.0];
        for k in 0..n {
            let d = distance(corners[k], corners[(k + 1) % n]);
            cumulative.push(cumulative[k] + d);
        }
        Ok(GeodesicLoop { corners, cumulative })
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn point(&self, s: f64) -> Complex64 {
        let n = self.corners.len();
        let target = s.rem_euclid(1.0) * self.length();
        let k = self.cumulative[1..].partition_point(|c| *c < target).min(n - 1);
        let seg = self.cumulative[k + 1] - self.cumulative[k];
        let t = if seg > 0.0 { (target - self.cumulative[k]) / seg } else { 0.0 };
        let a = self.corners[k];
        exp_map(a, log_map(a, self.corners[(k + 1) % n]) * t)
    }
}

/// Boundary data on a disk mesh centred at the origin: the vertex at
/// angle `θ` goes to the loop point at `(θ − θ₀)/2π`.
pub fn loop_boundary_data(mesh: &Mesh, path: &GeodesicLoop, theta0: f64) -> Result<Vec<(usize, DiskPoint)>> {
    mesh.boundary_vertices()
        .into_iter()
        .map(|v| {
            let s = (mesh.positions()[v].arg() - theta0) / TAU;
            Ok((v, DiskPoint::new(path.point(s))?))
        })
        .collect()
}
