//! Poincaré-disk geometry: automorphisms, distances, ideal polygons and
//! hyperbolic crowns.
//!
//! Truncations are encoded by horocycles. A horocycle based at the ideal
//! point `e^{iθ}` is the light-cone vector `e^t (cos θ, sin θ, 1)` of the
//! hyperboloid model, where the height `t` is measured from the horocycle
//! through the origin (larger `t` cuts deeper into the cusp). The signed
//! distance between two horocycles along the geodesic joining their base
//! points is `ln(−⟨u, u'⟩ / 2)`. Cutting each cusp along the geodesic chord
//! between the points where its horocycle meets the two adjacent sides
//! leaves a convex region whose finite geodesic sides have exactly these
//! lengths.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A point of the open unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint(Complex64);

impl DiskPoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if z.is_finite() && z.norm() < 1.0 - 1e-14 {
            Ok(DiskPoint(z))
        } else {
            Err(Error::Geometry(format!("{z} is not inside the unit disk")))
        }
    }

    pub fn origin() -> Self {
        DiskPoint(ZERO)
    }

    pub fn z(self) -> Complex64 {
        self.0
    }

    /// Hyperboloid coordinates `(x, y, t)` with `x² + y² − t² = −1`.
    pub fn hyperboloid(self) -> [f64; 3] {
        let r2 = self.0.norm_sqr();
        let s = 1.0 / (1.0 - r2);
        [2.0 * self.0.re * s, 2.0 * self.0.im * s, (1.0 + r2) * s]
    }
}

/// Conformal factor of the disk metric, `4 / (1 − |z|²)²`.
pub fn metric_density(z: Complex64) -> f64 {
    let d = 1.0 - z.norm_sqr();
    4.0 / (d * d)
}

pub fn hyp_distance(p: DiskPoint, q: DiskPoint) -> f64 {
    distance(p.0, q.0)
}

/// Hyperbolic distance between raw disk coordinates.
pub fn distance(p: Complex64, q: Complex64) -> f64 {
    // 2 artanh |(p − q)/(1 − p̄q)| is better conditioned than the arcosh form.
    let t = ((p - q) / (ONE - p.conj() * q)).norm();
    2.0 * t.min(1.0 - 1e-16).atanh()
}

/// Tangent vector at `base` pointing to `target`, of length
/// `d(base, target)`, expressed in the frame obtained by moving `base` to
/// the origin with `z ↦ (z − base)/(1 − base̅ z)`.
pub fn log_map(base: Complex64, target: Complex64) -> Complex64 {
    let u = (target - base) / (ONE - base.conj() * target);
    let r = u.norm();
    if r == 0.0 {
        ZERO
    } else {
        u * (2.0 * r.min(1.0 - 1e-16).atanh() / r)
    }
}

/// Inverse of [`log_map`].
pub fn exp_map(base: Complex64, v: Complex64) -> Complex64 {
    let len = v.norm();
    if len == 0.0 {
        return base;
    }
    let y = v * ((0.5 * len).tanh() / len);
    (y + base) / (ONE + base.conj() * y)
}

/// A Möbius transformation `z ↦ (az + b)/(cz + d)` with `ad − bc = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        let det = a * d - b * c;
        if det.norm() < 1e-300 || !det.is_finite() {
            return Err(Error::Geometry("singular Möbius matrix".into()));
        }
        let k = det.sqrt().inv();
        Ok(Mobius { a: a * k, b: b * k, c: c * k, d: d * k })
    }

    pub fn identity() -> Self {
        Mobius { a: ONE, b: ZERO, c: ZERO, d: ONE }
    }

    /// `z ↦ e^{iφ} z`.
    pub fn rotation(phi: f64) -> Self {
        let h = Complex64::from_polar(1.0, 0.5 * phi);
        Mobius { a: h, b: ZERO, c: ZERO, d: h.conj() }
    }

    /// `z ↦ e^{iφ}(z − p)/(1 − p̄ z)`.
    pub fn disk_automorphism(phi: f64, p: Complex64) -> Result<Self> {
        if p.norm() >= 1.0 {
            return Err(Error::Geometry("automorphism center outside the disk".into()));
        }
        let e = Complex64::from_polar(1.0, phi);
        Mobius::new(e, -e * p, -p.conj(), ONE)
    }

    /// Hyperbolic translation of length `length` along the diameter
    /// `(−1, 1)`, moving the origin toward `+1`.
    pub fn axis_translation(length: f64) -> Self {
        let (c, s) = ((0.5 * length).cosh(), (0.5 * length).sinh());
        Mobius {
            a: Complex64::new(c, 0.0),
            b: Complex64::new(s, 0.0),
            c: Complex64::new(s, 0.0),
            d: Complex64::new(c, 0.0),
        }
    }

    /// The transformation taking `z1, z2, z3` to `0, 1, ∞`.
    fn cross_ratio(z1: Complex64, z2: Complex64, z3: Complex64) -> Result<Self> {
        Mobius::new(z2 - z3, -z1 * (z2 - z3), z2 - z1, -z3 * (z2 - z1))
    }

    /// The unique Möbius map sending `from[i]` to `to[i]`.
    pub fn from_three_points(from: [Complex64; 3], to: [Complex64; 3]) -> Result<Self> {
        let s = Self::cross_ratio(from[0], from[1], from[2])?;
        let t = Self::cross_ratio(to[0], to[1], to[2])?;
        Ok(t.inverse().compose(&s))
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    pub fn apply_point(&self, p: DiskPoint) -> Result<DiskPoint> {
        DiskPoint::new(self.apply(p.0))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Mobius {
        Mobius { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// True if the map preserves the unit circle and the disk.
    pub fn is_disk_automorphism(&self, tol: f64) -> bool {
        (0..8).all(|k| {
            let w = self.apply(Complex64::from_polar(1.0, k as f64 * PI / 4.0));
            (w.norm() - 1.0).abs() < tol
        }) && self.apply(ZERO).norm() < 1.0
    }

    /// `(φ, p)` with `self(z) = e^{iφ}(z − p)/(1 − p̄ z)`.
    pub fn automorphism_parameters(&self) -> (f64, Complex64) {
        let p = self.inverse().apply(ZERO);
        let e = self.apply(ONE) * (ONE - p.conj()) / (ONE - p);
        (e.arg(), p)
    }

    /// Sup-norm distance between two maps on a fixed probe set inside the
    /// disk, in Euclidean disk coordinates.
    pub fn distance_to(&self, other: &Mobius) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..12 {
            let z = Complex64::from_polar(0.2 + 0.05 * k as f64, 0.7 * k as f64);
            worst = worst.max((self.apply(z) - other.apply(z)).norm());
        }
        worst
    }
}

/// Minkowski product of signature `(+, +, −)`.
pub fn minkowski(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] - u[2] * v[2]
}

/// Light-cone vector of the horocycle at `e^{iθ}` with height `t`.
pub fn horocycle(angle: f64, height: f64) -> [f64; 3] {
    let k = height.exp();
    [k * angle.cos(), k * angle.sin(), k]
}

/// Signed distance between two horocycles (negative when they overlap).
pub fn horocycle_distance(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    (-minkowski(u, v) / 2.0).ln()
}

fn boost(u: &[f64; 3], length: f64) -> [f64; 3] {
    let (c, s) = (length.cosh(), length.sinh());
    [u[0] * c + u[2] * s, u[1], u[0] * s + u[2] * c]
}

/// Angle of the boundary point of a light-cone vector.
fn ideal_angle(u: &[f64; 3]) -> f64 {
    u[1].atan2(u[0])
}

/// An ideal polygon given by cyclically ordered boundary angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealPolygon {
    angles: Vec<f64>,
}

impl IdealPolygon {
    /// Angles must increase strictly and span less than a full turn.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.len() < 3 {
            return Err(Error::Geometry("an ideal polygon needs at least 3 vertices".into()));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Geometry("non-finite vertex angle".into()));
        }
        let ordered = angles.windows(2).all(|w| w[1] > w[0])
            && angles[angles.len() - 1] < angles[0] + 2.0 * PI;
        if !ordered {
            return Err(Error::Geometry("vertex angles are not in strict cyclic order".into()));
        }
        Ok(IdealPolygon { angles })
    }

    pub fn regular(m: usize, offset: f64) -> Result<Self> {
        Self::new((0..m).map(|k| offset + 2.0 * PI * k as f64 / m as f64).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn vertex_count(&self) -> usize {
        self.angles.len()
    }

    pub fn vertices(&self) -> Vec<Complex64> {
        self.angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()
    }

    /// Parameters left after fixing three vertices at `1, i, −1`.
    pub fn free_parameters(&self) -> usize {
        self.vertex_count() - 3
    }

    /// Image under the disk automorphism taking the first three vertices to
    /// `1, i, −1`, together with that automorphism.
    pub fn normalized(&self) -> Result<(IdealPolygon, Mobius)> {
        let v = self.vertices();
        let map = Mobius::from_three_points(
            [v[0], v[1], v[2]],
            [ONE, Complex64::new(0.0, 1.0), -ONE],
        )?;
        let mut angles: Vec<f64> = v.iter().map(|z| map.apply(*z).arg()).collect();
        angles[0] = 0.0;
        for k in 1..angles.len() {
            while angles[k] <= angles[k - 1] {
                angles[k] += 2.0 * PI;
            }
        }
        Ok((IdealPolygon::new(angles)?, map))
    }

    /// Truncation heights making all horodisks pairwise disjoint with a
    /// margin of one unit.
    pub fn default_heights(&self) -> Vec<f64> {
        uniform_safe_heights(&self.angles)
    }

    fn horocycles(&self, heights: &[f64]) -> Vec<[f64; 3]> {
        self.angles.iter().zip(heights).map(|(&a, &t)| horocycle(a, t)).collect()
    }
}

fn uniform_safe_heights(angles: &[f64]) -> Vec<f64> {
    let mut worst = 0.0f64;
    for i in 0..angles.len() {
        for j in (i + 1)..angles.len() {
            let d = horocycle_distance(&horocycle(angles[i], 0.0), &horocycle(angles[j], 0.0));
            worst = worst.max(-d);
        }
    }
    vec![0.5 * worst + 1.0; angles.len()]
}

fn check_disjoint(horos: &[[f64; 3]]) -> Result<()> {
    for i in 0..horos.len() {
        for j in (i + 1)..horos.len() {
            let d = horocycle_distance(&horos[i], &horos[j]);
            if !(d > 0.0) {
                return Err(Error::Geometry(format!(
                    "truncation neighborhoods at cusps {i} and {j} overlap (distance {d:.3e})"
                )));
            }
        }
    }
    Ok(())
}

/// Lengths of the finite geodesic sides of the truncated polygon; side `k`
/// joins vertex `k` to vertex `k + 1`.
pub fn truncate_and_sides(polygon: &IdealPolygon, heights: &[f64]) -> Result<Vec<f64>> {
    if heights.len() != polygon.vertex_count() {
        return Err(Error::Geometry(format!(
            "{} heights for {} cusps",
            heights.len(),
            polygon.vertex_count()
        )));
    }
    let horos = polygon.horocycles(heights);
    check_disjoint(&horos)?;
    let m = horos.len();
    Ok((0..m)
        .map(|k| horocycle_distance(&horos[k], &horos[(k + 1) % m]))
        .collect())
}

/// `Σ (−1)^k l_k` starting at the side after the first cusp; `0` for an odd
/// number of sides.
pub fn alternating(lengths: &[f64]) -> f64 {
    if lengths.len() % 2 == 1 {
        return 0.0;
    }
    lengths
        .iter()
        .enumerate()
        .map(|(k, l)| if k % 2 == 0 { *l } else { -*l })
        .sum()
}

impl IdealPolygon {
    pub fn metric_residue(&self) -> f64 {
        self.metric_residue_with_heights(&self.default_heights())
            .expect("default heights are disjoint")
    }

    pub fn metric_residue_with_heights(&self, heights: &[f64]) -> Result<f64> {
        if self.vertex_count() % 2 == 1 {
            return Ok(0.0);
        }
        Ok(alternating(&truncate_and_sides(self, heights)?))
    }
}

/// A hyperbolic crown in its normalized polygonal-end picture: the
/// boundary geodesic lifts to the diameter `(−1, 1)`, the first cusp sits
/// at `i`, and the deck translation moves points toward `+1`.
///
/// The fundamental vertices `v_1 = i, v_2, …, v_m` have strictly decreasing
/// angles in `(arg T(i), π/2]`. The boundary twist marks the point of the
/// axis at signed distance `τ` from the origin (the foot of the
/// perpendicular from `i`), positive toward `+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crown {
    cusp_count: usize,
    angles: Vec<f64>,
    translation_length: f64,
    boundary_twist: f64,
}

impl Crown {
    pub fn cusp_count(&self) -> usize {
        self.cusp_count
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn translation_length(&self) -> f64 {
        self.translation_length
    }

    pub fn boundary_twist(&self) -> f64 {
        self.boundary_twist
    }

    pub fn translation(&self) -> Mobius {
        Mobius::axis_translation(self.translation_length)
    }

    /// Marked point on the axis encoding the boundary twist.
    pub fn twist_point(&self) -> DiskPoint {
        DiskPoint(Complex64::new((0.5 * self.boundary_twist).tanh(), 0.0))
    }

    /// Angle of the translate of the first cusp, `arg T(i)`.
    pub fn next_period_angle(&self) -> f64 {
        self.translation().apply(Complex64::new(0.0, 1.0)).arg()
    }

    /// Ideal vertices over `periods` consecutive fundamental domains starting
    /// with the first cusp.
    pub fn chain(&self, periods: i32) -> Vec<Complex64> {
        let mut out = Vec::new();
        let t = self.translation();
        for p in 0..periods {
            let mut map = Mobius::identity();
            for _ in 0..p {
                map = t.compose(&map);
            }
            for a in &self.angles {
                out.push(map.apply(Complex64::from_polar(1.0, *a)));
            }
        }
        out
    }

    fn horocycles(&self, heights: &[f64]) -> Vec<[f64; 3]> {
        let mut h: Vec<[f64; 3]> =
            self.angles.iter().zip(heights).map(|(&a, &t)| horocycle(a, t)).collect();
        h.push(boost(&h[0], self.translation_length));
        h
    }

    /// Side lengths over one period: side `k` joins cusp `k` to cusp
    /// `k + 1`, the last one ending at the translate of the first cusp.
    pub fn truncated_sides(&self, heights: &[f64]) -> Result<Vec<f64>> {
        if heights.len() != self.cusp_count {
            return Err(Error::Geometry(format!(
                "{} heights for {} cusps",
                heights.len(),
                self.cusp_count
            )));
        }
        let horos = self.horocycles(heights);
        // Disjointness over two periods covers every neighbouring pair.
        let mut two_periods = horos.clone();
        for u in &horos[1..] {
            two_periods.push(boost(u, self.translation_length));
        }
        check_disjoint(&two_periods)?;
        Ok(horos.windows(2).map(|w| horocycle_distance(&w[0], &w[1])).collect())
    }

    pub fn default_heights(&self) -> Vec<f64> {
        let mut angles = self.angles.clone();
        let t = self.translation();
        for a in &self.angles {
            angles.push(t.apply(Complex64::from_polar(1.0, *a)).arg());
        }
        let h = uniform_safe_heights(&angles);
        h[..self.cusp_count].to_vec()
    }

    pub fn metric_residue(&self) -> f64 {
        self.metric_residue_with_heights(&self.default_heights())
            .expect("default heights are disjoint")
    }

    pub fn metric_residue_with_heights(&self, heights: &[f64]) -> Result<f64> {
        if self.cusp_count % 2 == 1 {
            return Ok(0.0);
        }
        Ok(alternating(&self.truncated_sides(heights)?))
    }
}

/// Parameters `(m, angles, translation length, twist)` of a crown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrownParameters {
    pub cusp_count: usize,
    pub angles: Vec<f64>,
    pub translation_length: f64,
    pub boundary_twist: f64,
}

pub fn crown_from_parameters(
    cusp_count: usize,
    angles: Vec<f64>,
    translation_length: f64,
    boundary_twist: f64,
) -> Result<Crown> {
    if cusp_count == 0 || angles.len() != cusp_count {
        return Err(Error::Geometry(format!(
            "expected {cusp_count} vertex angles, got {}",
            angles.len()
        )));
    }
    if !(translation_length > 0.0) || !translation_length.is_finite() {
        return Err(Error::Geometry("translation length must be positive".into()));
    }
    if !boundary_twist.is_finite() {
        return Err(Error::Geometry("boundary twist must be finite".into()));
    }
    if angles[0] != FRAC_PI_2 {
        return Err(Error::Geometry("the first cusp must sit at i (angle π/2)".into()));
    }
    let crown = Crown { cusp_count, angles, translation_length, boundary_twist };
    let floor = crown.next_period_angle();
    let decreasing = crown.angles.windows(2).all(|w| w[1] < w[0]);
    if !decreasing || crown.angles[cusp_count - 1] <= floor {
        return Err(Error::Geometry(format!(
            "vertex angles must decrease strictly from π/2 and stay above arg T(i) = {floor:.6}"
        )));
    }
    Ok(crown)
}

pub fn crown_parameters(crown: &Crown) -> CrownParameters {
    CrownParameters {
        cusp_count: crown.cusp_count,
        angles: crown.angles.clone(),
        translation_length: crown.translation_length,
        boundary_twist: crown.boundary_twist,
    }
}

/// Reads crown parameters back from its geometry in any position: one
/// period of cusps (starting with the cusp to be placed at `i`), the deck
/// translation and the twist marker on its axis.
pub fn crown_from_geometry(
    cusps: &[Complex64],
    translation: &Mobius,
    twist_point: Complex64,
) -> Result<Crown> {
    let Mobius { a, b, c, d } = *translation;
    if c.norm() < 1e-14 {
        return Err(Error::Geometry("translation fixes the origin; not hyperbolic".into()));
    }
    let trace = (a + d).norm();
    if trace <= 2.0 + 1e-12 {
        return Err(Error::Geometry(format!("trace {trace:.6} is not hyperbolic")));
    }
    let disc = ((d - a) * (d - a) + 4.0 * b * c).sqrt();
    let roots = [(a - d + disc) / (2.0 * c), (a - d - disc) / (2.0 * c)];
    // Attracting fixed point: |T'(p)| = |cp + d|^{−2} < 1.
    let (attract, repel) = if (c * roots[0] + d).norm() > (c * roots[1] + d).norm() {
        (roots[0], roots[1])
    } else {
        (roots[1], roots[0])
    };
    let first = *cusps.first().ok_or_else(|| Error::Geometry("no cusps".into()))?;
    let normal = Mobius::from_three_points(
        [repel, attract, first],
        [Complex64::new(-1.0, 0.0), ONE, Complex64::new(0.0, 1.0)],
    )?;
    let mut angles: Vec<f64> = cusps.iter().map(|v| normal.apply(*v).arg()).collect();
    angles[0] = FRAC_PI_2;
    let marker = normal.apply(twist_point);
    if marker.im.abs() > 1e-8 || marker.re.abs() >= 1.0 {
        return Err(Error::Geometry("twist marker is off the translation axis".into()));
    }
    let length = 2.0 * (0.5 * trace).acosh();
    crown_from_parameters(cusps.len(), angles, length, 2.0 * marker.re.atanh())
}

/// Completes `leading_angles` (all but the last cusp) with the unique last
/// vertex giving metric residue `target`. The alternating sum is monotone in
/// the last vertex, so bisection suffices.
pub fn crown_with_metric_residue(
    cusp_count: usize,
    leading_angles: &[f64],
    translation_length: f64,
    boundary_twist: f64,
    target: f64,
) -> Result<Crown> {
    if cusp_count % 2 == 1 || leading_angles.len() + 1 != cusp_count {
        return Err(Error::Geometry(
            "prescribing the residue needs an even cusp count and m − 1 leading angles".into(),
        ));
    }
    let floor = Mobius::axis_translation(translation_length)
        .apply(Complex64::new(0.0, 1.0))
        .arg();
    let upper = *leading_angles.last().expect("m ≥ 2");
    let build = |last: f64| {
        let mut angles = leading_angles.to_vec();
        angles.push(last);
        crown_from_parameters(cusp_count, angles, translation_length, boundary_twist)
    };
    let residue_at = |last: f64| -> Result<f64> {
        let crown = build(last)?;
        let sides = crown.truncated_sides(&crown.default_heights())?;
        Ok(sides.iter().enumerate().map(|(k, l)| if k % 2 == 0 { *l } else { -*l }).sum())
    };
    // Residue decreases as the last vertex moves toward the previous one.
    let (mut lo, mut hi) = (floor, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residue_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    build(0.5 * (lo + hi))
}

/// Least-squares disk automorphism `A` minimizing `Σ d(A p_i, q_i)²`;
/// returns `A` and the root-mean-square distance.
pub fn fit_isometry(pairs: &[(DiskPoint, DiskPoint)]) -> Result<(Mobius, f64)> {
    if pairs.len() < 3 {
        return Err(Error::Geometry("fit_isometry needs at least 3 pairs".into()));
    }
    let mut min_sep = f64::INFINITY;
    for i in 0..pairs.len() {
        for j in (i + 1)..pairs.len() {
            min_sep = min_sep.min(hyp_distance(pairs[i].0, pairs[j].0));
        }
    }
    if min_sep < 1e-9 {
        return Err(Error::Geometry("degenerate configuration: repeated source points".into()));
    }
    let (p0, q0) = (pairs[0].0.z(), pairs[0].1.z());
    let (p1, q1) = (pairs[1].0.z(), pairs[1].1.z());
    let psi = log_map(q0, q1).arg() - log_map(p0, p1).arg();
    let start = Mobius::disk_automorphism(0.0, q0)?
        .inverse()
        .compose(&Mobius::rotation(psi))
        .compose(&Mobius::disk_automorphism(0.0, p0)?);
    let (phi, center) = start.automorphism_parameters();
    let mut params = [phi, center.re, center.im];

    let residuals = |x: &[f64; 3]| -> Option<Vec<f64>> {
        let c = Complex64::new(x[1], x[2]);
        if c.norm() >= 1.0 - 1e-12 {
            return None;
        }
        let map = Mobius::disk_automorphism(x[0], c).ok()?;
        let mut out = Vec::with_capacity(2 * pairs.len());
        for (p, q) in pairs {
            let v = log_map(q.z(), map.apply(p.z()));
            out.push(v.re);
            out.push(v.im);
        }
        Some(out)
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();

    let mut r = residuals(&params).ok_or_else(|| Error::Geometry("bad initial fit".into()))?;
    let mut current = cost(&r);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        if current < 1e-30 {
            break;
        }
        let mut jac = vec![[0.0; 3]; r.len()];
        for k in 0..3 {
            let h = 1e-7;
            let mut plus = params;
            let mut minus = params;
            plus[k] += h;
            minus[k] -= h;
            let (rp, rm) = match (residuals(&plus), residuals(&minus)) {
                (Some(a), Some(b)) => (a, b),
                _ => break,
            };
            for i in 0..r.len() {
                jac[i][k] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..3 {
                jtr[a] += row[a] * ri;
                for b in 0..3 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for a in 0..3 {
                m[a][a] += lambda * (1.0 + jtj[a][a]);
            }
            let Some(step) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [params[0] + step[0], params[1] + step[1], params[2] + step[2]];
            if let Some(rt) = residuals(&trial) {
                let c = cost(&rt);
                if c < current {
                    let small = step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-16;
                    params = trial;
                    r = rt;
                    current = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !small;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let map = Mobius::disk_automorphism(params[0], Complex64::new(params[1], params[2]))?;
    let rms = (current / pairs.len() as f64).sqrt();
    Ok((map, rms))
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in (row + 1)..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Ideal angle of a light-cone vector; exposed for tests of the boost.
pub fn light_cone_angle(u: &[f64; 3]) -> f64 {
    ideal_angle(u)
}

/// Applies the axis translation to a light-cone vector.
pub fn translate_light_cone(u: &[f64; 3], length: f64) -> [f64; 3] {
    boost(u, length)
}
