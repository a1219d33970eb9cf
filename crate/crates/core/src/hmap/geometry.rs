//! Lengths and curvature of images of trajectories, read off the energy
//! density `e = 2 cosh 2w₁` of a Bochner solution.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bochner::{energy_density, Geometry, NodalField, ScalarField};
use crate::error::{Error, Result};
use crate::flatgeom::{
    q_lengths, trace_trajectory_directed, Direction, Exhaustion, PolygonalLoop, SegmentKind,
    TrajectorySegment,
};
use crate::poly::LaurentPoly;
use crate::qdiff::{principal_sqrt, QuadDiff};

fn sample(e: &NodalField, z: Complex64) -> Result<f64> {
    e.interpolate(z).ok_or(Error::LeftDomain { at: z })
}

/// Image length of one trajectory side: `∫√(e+2) dx` for horizontal sides,
/// `∫√(e−2) dy` for vertical ones, by Simpson's rule on every chord.
pub fn image_length(q: &impl QuadDiff, e: &NodalField, side: &TrajectorySegment) -> Result<f64> {
    let shift = match side.kind {
        SegmentKind::Horizontal => 2.0,
        SegmentKind::Vertical => -2.0,
    };
    let f = |z: Complex64| -> Result<f64> { Ok((sample(e, z)? + shift).max(0.0).sqrt()) };
    let mut total = 0.0;
    let mut fa = f(side.points[0])?;
    for pair in side.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let lengths = q_lengths(pair, q)?;
        let dx = match side.kind {
            SegmentKind::Horizontal => lengths.horizontal,
            SegmentKind::Vertical => lengths.vertical,
        };
        let fb = f(b)?;
        total += dx * (fa + 4.0 * f(0.5 * (a + b))? + fb) / 6.0;
        fa = fb;
    }
    Ok(total)
}

/// Image lengths of every side of `lp`, in loop order.
pub fn image_side_lengths(q: &impl QuadDiff, w: &ScalarField, lp: &PolygonalLoop) -> Result<Vec<f64>> {
    let e = energy_density(w);
    lp.sides.iter().map(|s| image_length(q, &e, s)).collect()
}

/// Alternating sum of the horizontal image lengths at one level.
pub fn image_metric_residue(
    q: &impl QuadDiff,
    w: &ScalarField,
    exhaustion: &Exhaustion,
    level: usize,
) -> Result<f64> {
    if q.pole_order() % 2 == 1 {
        return Err(Error::InvalidDifferential(
            "image metric residue needs an even pole order".into(),
        ));
    }
    let lp = exhaustion
        .loops
        .get(level)
        .ok_or_else(|| Error::Exhaustion(format!("no level {level}")))?;
    let e = energy_density(w);
    let mut total = 0.0;
    let mut sign = 1.0;
    for side in lp.sides.iter().filter(|s| s.kind == SegmentKind::Horizontal) {
        total += sign * image_length(q, &e, side)?;
        sign = -sign;
    }
    Ok(total)
}

/// Physical grid spacing near `z`.
fn local_spacing(w: &ScalarField, z: Complex64) -> f64 {
    let (hx, hy) = w.grid.spacing();
    match w.grid.geometry() {
        Geometry::Disk { .. } => hx.max(hy),
        Geometry::Annulus { .. } => hx.max(hy) * z.norm(),
    }
}

/// Largest `|κ|` along a horizontal segment, with
/// `κ = −½ √(e−2)/(e+2) ∂e/∂y` and `∂e/∂y` a central difference across the
/// leaf in the natural coordinate.
pub fn curvature_estimate(q: &impl QuadDiff, w: &ScalarField, segment: &TrajectorySegment) -> Result<f64> {
    if segment.kind != SegmentKind::Horizontal {
        return Err(Error::InvalidDifferential("curvature is computed on horizontal segments".into()));
    }
    let e = energy_density(w);
    let terms = q.terms();
    let mut worst = 0.0f64;
    for &z in &segment.points {
        let root = principal_sqrt(terms.eval(z));
        let delta = 2.0 * local_spacing(w, z) * root.norm();
        // dz = i dy / √q moves across the horizontal leaf.
        let step = Complex64::new(0.0, delta) / root;
        let de = (sample(&e, z + step)? - sample(&e, z - step)?) / (2.0 * delta);
        let ez = sample(&e, z)?;
        let kappa = -0.5 * (ez - 2.0).max(0.0).sqrt() / (ez + 2.0) * de;
        worst = worst.max(kappa.abs());
    }
    Ok(worst)
}

/// Leading behaviour `q ≈ c (z − z₀)^k` at a zero.
fn local_model(terms: &LaurentPoly, z0: Complex64, k: usize) -> Complex64 {
    let r = 1e-3 * (1.0 + z0.norm());
    // Average over a small circle to cancel the next order.
    let n = 16;
    (0..n)
        .map(|j| {
            let u = Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / n as f64);
            terms.eval(z0 + u) / u.powu(k as u32)
        })
        .sum::<Complex64>()
        / n as f64
}

/// A horizontal segment at q-distance `distance` from the zero `z0`,
/// extending `half_length` to each side of the foot of the perpendicular
/// vertical trajectory. `branch` picks one of the vertical prongs.
pub fn horizontal_segment_near_zero(
    q: &impl QuadDiff,
    z0: Complex64,
    branch: usize,
    distance: f64,
    half_length: f64,
    step: f64,
) -> Result<TrajectorySegment> {
    let terms = q.terms();
    let k = terms.zeros().iter().filter(|r| (*r - z0).norm() < 1e-6 * (1.0 + z0.norm())).count();
    if k == 0 {
        return Err(Error::InvalidDifferential(format!("{z0} is not a zero of q")));
    }
    let c = local_model(&terms, z0, k);
    // Vertical prongs: arg c + (k + 2)θ ≡ π.
    let prongs = k + 2;
    let theta = (std::f64::consts::PI - c.arg() + std::f64::consts::TAU * (branch % prongs) as f64)
        / prongs as f64;
    let eps = 1e-3 * (1.0 + z0.norm());
    let start = z0 + Complex64::from_polar(eps, theta);
    let p = 0.5 * k as f64 + 1.0;
    let used = c.norm().sqrt() * eps.powf(p) / p;
    if distance <= used {
        return Err(Error::InvalidDifferential("distance too small".into()));
    }
    let mut foot = None;
    for dir in [Direction::Forward, Direction::Backward] {
        let probe = trace_trajectory_directed(q, start, SegmentKind::Vertical, dir, 0.1 * used.max(1e-6), step)?;
        if (probe.points.last().expect("non-empty") - z0).norm() > eps {
            let ray = trace_trajectory_directed(q, start, SegmentKind::Vertical, dir, distance - used, step)?;
            foot = Some(*ray.points.last().expect("non-empty"));
            break;
        }
    }
    let foot = foot.ok_or_else(|| Error::BranchTracking { at: start, reason: "no outgoing prong".into() })?;
    let back = trace_trajectory_directed(q, foot, SegmentKind::Horizontal, Direction::Backward, half_length, step)?;
    let ahead = trace_trajectory_directed(q, foot, SegmentKind::Horizontal, Direction::Forward, half_length, step)?;
    let mut points: Vec<Complex64> = back.points.into_iter().rev().collect();
    points.extend_from_slice(&ahead.points[1..]);
    let q_length = q_lengths(&points, q)?.total;
    Ok(TrajectorySegment { kind: SegmentKind::Horizontal, points, q_length })
}

/// Per-side image data of one loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideImage {
    pub kind: SegmentKind,
    pub q_length: f64,
    pub image_length: f64,
}

pub fn side_images(q: &impl QuadDiff, w: &ScalarField, lp: &PolygonalLoop) -> Result<Vec<SideImage>> {
    let lengths = image_side_lengths(q, w, lp)?;
    Ok(lp
        .sides
        .iter()
        .zip(lengths)
        .map(|(s, l)| SideImage { kind: s.kind, q_length: s.q_length, image_length: l })
        .collect())
}
