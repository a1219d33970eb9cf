//! The singular flat metric `|q|`: zeros, horizontal and vertical
//! trajectories, q-lengths of paths and polygonal exhaustions of a pole.
//!
//! Pole geometry is handled in a chart `w` in which the pole sits at
//! infinity: `w = z` for a pole at infinity and `w = 1/z` for a pole at the
//! origin. Exhaustion loops are built in the natural coordinate
//! `ζ = ∫ √q dw` and pulled back by Newton continuation; all reported
//! lengths are measured again by quadrature on the resulting polylines.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{LaurentPoly, GAUSS8};
use crate::qdiff::{principal_sqrt, Domain, Pole, QuadDiff, SqrtTracker};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Horizontal,
    Vertical,
}

impl SegmentKind {
    /// Unit factor `u` with `√q dz ∈ u·ℝ` along trajectories of this kind.
    fn unit(self) -> Complex64 {
        match self {
            SegmentKind::Horizontal => Complex64::new(1.0, 0.0),
            SegmentKind::Vertical => I,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub kind: SegmentKind,
    pub points: Vec<Complex64>,
    pub q_length: f64,
}

/// Total, horizontal and vertical q-lengths of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLengths {
    pub total: f64,
    pub horizontal: f64,
    pub vertical: f64,
    /// Set when some quadrature node landed on (numerically) a zero of `q`.
    pub touches_zero: bool,
}

/// Zeros of `q` in its coordinate `z`, with multiplicity.
pub fn zeros(q: &impl QuadDiff) -> Vec<Complex64> {
    q.terms().zeros()
}

fn normalize_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI - 1e-15 { 0.0 } else { t }
}

/// Asymptotic horizontal directions into the pole, as angles in `[0, 2π)`
/// of the coordinate `z`, sorted.
pub fn horizontal_rays_at_pole(q: &impl QuadDiff) -> Vec<f64> {
    let terms = q.terms();
    let n = q.pole_order() as i32;
    let m = n - 2;
    if m <= 0 {
        return Vec::new();
    }
    let mut out: Vec<f64> = match q.pole() {
        Pole::Origin => {
            let lead = terms.lowest();
            (0..m).map(|j| (lead.arg() + 2.0 * PI * j as f64) / m as f64).collect()
        }
        Pole::Infinity => {
            let lead = terms.leading();
            (0..m).map(|j| (2.0 * PI * j as f64 - lead.arg()) / m as f64).collect()
        }
    };
    for a in out.iter_mut() {
        *a = normalize_angle(*a);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// `∫ √q dz` over the segment `a → b` with eight Gauss nodes, continuing the
/// branch in `tracker`; the tracker ends at the branch value at `b`.
fn segment_integral(
    terms: &LaurentPoly,
    a: Complex64,
    b: Complex64,
    tracker: &mut SqrtTracker,
) -> Result<Complex64> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = ZERO;
    for (x, w) in GAUSS8 {
        let z = mid + half * x;
        sum += tracker.next(terms.eval(z), z)? * w;
    }
    tracker.next(terms.eval(b), b)?;
    Ok(sum * half)
}

/// q-lengths of the polyline `path`, with branch continuation of `√q`.
pub fn q_lengths(path: &[Complex64], q: &impl QuadDiff) -> Result<QLengths> {
    let terms = q.terms();
    let mut out = QLengths { total: 0.0, horizontal: 0.0, vertical: 0.0, touches_zero: false };
    let mut current: Option<Complex64> = None;
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in GAUSS8 {
            let z = mid + half * x;
            let value = terms.eval(z);
            if !value.is_finite() {
                return Err(Error::HitSingularity { at: z });
            }
            if value.norm() < 1e-300 {
                out.touches_zero = true;
                continue;
            }
            let s = principal_sqrt(value);
            let s = match current {
                Some(prev) if (s + prev).norm() < (s - prev).norm() => -s,
                _ => s,
            };
            current = Some(s);
            let element = s * half;
            out.total += w * element.norm();
            out.horizontal += w * element.re.abs();
            out.vertical += w * element.im.abs();
            if value.norm() < 1e-24 * (1.0 + z.norm()) {
                out.touches_zero = true;
            }
        }
    }
    Ok(out)
}

/// Largest deviation of a trajectory from its leaf: the maximum over chords
/// of `|Im ∫ √q dz|` (horizontal) or `|Re ∫ √q dz|` (vertical). The integral
/// is path independent, so this measures how far consecutive samples are
/// from lying on one leaf.
pub fn kind_residual(q: &impl QuadDiff, segment: &TrajectorySegment) -> Result<f64> {
    let terms = q.terms();
    let mut tracker = SqrtTracker::new();
    if let Some(&z0) = segment.points.first() {
        tracker.next(terms.eval(z0), z0)?;
    }
    let mut worst = 0.0f64;
    for pair in segment.points.windows(2) {
        let d = segment_integral(&terms, pair[0], pair[1], &mut tracker)?;
        let off = match segment.kind {
            SegmentKind::Horizontal => d.im,
            SegmentKind::Vertical => d.re,
        };
        worst = worst.max(off.abs());
    }
    Ok(worst)
}

/// Direction of travel along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

fn domain_check(q: &impl QuadDiff, z: Complex64) -> Result<()> {
    if !z.is_finite() || z.norm() > 1e12 {
        return Err(Error::LeftDomain { at: z });
    }
    match q.domain() {
        Domain::PuncturedDisk if z.norm() >= 1.0 => Err(Error::LeftDomain { at: z }),
        Domain::PuncturedDisk | Domain::PuncturedPlane if z.norm() < 1e-12 => {
            Err(Error::HitSingularity { at: z })
        }
        _ => Ok(()),
    }
}

/// Traces a horizontal or vertical trajectory forward from `z0` for the
/// given q-length.
pub fn trace_trajectory(
    q: &impl QuadDiff,
    z0: Complex64,
    kind: SegmentKind,
    length: f64,
    step: f64,
) -> Result<TrajectorySegment> {
    trace_trajectory_directed(q, z0, kind, Direction::Forward, length, step)
}

/// Integrates `dz/dt = ±u/√q(z)` with `u = 1` (horizontal) or `u = i`
/// (vertical), so that `t` is q-arclength. The forward branch of `√q` at
/// `z0` is the principal one; adaptive RK4 with step doubling keeps the
/// local error below `1e-12` in `z` and shrinks the step near zeros of `q`.
pub fn trace_trajectory_directed(
    q: &impl QuadDiff,
    z0: Complex64,
    kind: SegmentKind,
    direction: Direction,
    length: f64,
    step: f64,
) -> Result<TrajectorySegment> {
    if !(length > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidDifferential("length and step must be positive".into()));
    }
    domain_check(q, z0)?;
    let terms = q.terms();
    let v0 = terms.eval(z0);
    if !v0.is_finite() || v0.norm() < 1e-24 {
        return Err(Error::HitSingularity { at: z0 });
    }
    let sign = match direction {
        Direction::Forward => 1.0,
        Direction::Backward => -1.0,
    };
    let unit = kind.unit() * sign;
    let mut branch = principal_sqrt(v0);

    // Velocity at z using the branch closest to `near`.
    let velocity = |z: Complex64, near: Complex64| -> Result<(Complex64, Complex64)> {
        let v = terms.eval(z);
        if !v.is_finite() {
            return Err(Error::HitSingularity { at: z });
        }
        if v.norm() < 1e-24 {
            return Err(Error::HitSingularity { at: z });
        }
        let s = principal_sqrt(v);
        let s = if (s - near).norm() <= (s + near).norm() { s } else { -s };
        if (s - near).norm() > 0.5 * (s + near).norm() {
            return Err(Error::BranchTracking { at: z, reason: "branch jump in RK stage".into() });
        }
        Ok((unit / s, s))
    };
    let rk4 = |z: Complex64, b: Complex64, h: f64| -> Result<(Complex64, Complex64)> {
        let (k1, b1) = velocity(z, b)?;
        let (k2, b2) = velocity(z + k1 * (0.5 * h), b1)?;
        let (k3, b3) = velocity(z + k2 * (0.5 * h), b2)?;
        let (k4, _) = velocity(z + k3 * h, b3)?;
        let z1 = z + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
        let (_, b_end) = velocity(z1, b)?;
        Ok((z1, b_end))
    };

    let mut z = z0;
    let mut t = 0.0;
    let mut points = vec![z0];
    let mut h = step;
    while t < length - 1e-14 * length {
        let (value, deriv) = terms.eval_with_derivative(z);
        // Keep the z-step below a fifth of |q|/|q'| (distance scale to the
        // nearest zero or pole).
        let scale = if deriv.norm() > 0.0 { value.norm() / deriv.norm() } else { f64::INFINITY };
        let limit = 0.2 * scale * branch.norm();
        let mut trial = h.min(step).min(limit).min(length - t);
        loop {
            if trial < 1e-13 * length.max(1.0) {
                return Err(Error::HitSingularity { at: z });
            }
            let full = rk4(z, branch, trial);
            let halves = rk4(z, branch, 0.5 * trial)
                .and_then(|(zm, bm)| rk4(zm, bm, 0.5 * trial));
            match (full, halves) {
                (Ok((z1, _)), Ok((z2, b2))) => {
                    let err = (z1 - z2).norm();
                    if err <= 1e-12 * (1.0 + z2.norm()) {
                        z = z2;
                        branch = b2;
                        t += trial;
                        h = if err < 1e-14 * (1.0 + z.norm()) { 2.0 * trial } else { trial };
                        break;
                    }
                    trial *= 0.5;
                }
                (Err(Error::HitSingularity { at }), _) | (_, Err(Error::HitSingularity { at }))
                    if trial < 1e-9 =>
                {
                    return Err(Error::HitSingularity { at });
                }
                _ => trial *= 0.5,
            }
        }
        domain_check(q, z)?;
        points.push(z);
    }
    let measured = q_lengths(&points, q)?;
    Ok(TrajectorySegment { kind, points, q_length: measured.total })
}

/// Upper bound for the q-distance from `z` to the nearest zero of `q`: the
/// q-length of the straight segment. Exact for monomial differentials along
/// rays. `None` when `q` has no zeros.
pub fn q_distance_to_zeros(q: &impl QuadDiff, z: Complex64) -> Option<f64> {
    let terms = q.terms();
    let roots = terms.zeros();
    roots
        .iter()
        .map(|r| straight_q_length(&terms, z, *r, 32))
        .min_by(f64::total_cmp)
}

fn straight_q_length(terms: &LaurentPoly, a: Complex64, b: Complex64, panels: usize) -> f64 {
    let mut total = 0.0;
    let d = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + d * p as f64;
        let mid = lo + d * 0.5;
        for (x, w) in GAUSS8 {
            let z = mid + d * (0.5 * x);
            total += w * terms.eval(z).norm().sqrt();
        }
    }
    total * 0.5 * d.norm()
}

/// Winding number of the closed polyline `path` around `point`.
pub fn winding_number(path: &[Complex64], point: Complex64) -> i32 {
    let n = path.len();
    if n < 2 {
        return 0;
    }
    let mut total = 0.0;
    for k in 0..n {
        let a = path[k] - point;
        let b = path[(k + 1) % n] - point;
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i32
}

/// A point of the working chart together with its natural coordinate and
/// the branch of `√q` used there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub w: Complex64,
    pub zeta: Complex64,
    pub sqrt: Complex64,
}

/// The natural coordinate `ζ = ∫ √q dw` near the pole, in the chart where
/// the pole lies at infinity.
#[derive(Debug, Clone)]
pub struct NaturalChart {
    terms: LaurentPoly,
    inverted: bool,
    singular: Vec<Complex64>,
    sides: usize,
}

impl NaturalChart {
    pub fn new(q: &impl QuadDiff) -> Result<Self> {
        let (terms, inverted) = match q.pole() {
            Pole::Origin => (q.terms().invert_chart(), true),
            Pole::Infinity => (q.terms(), false),
        };
        if terms.is_zero() {
            return Err(Error::InvalidDifferential("q is identically zero".into()));
        }
        let d = terms.max_power();
        if d < 0 {
            return Err(Error::InvalidDifferential(format!(
                "pole order {} is below 4; no exhaustion exists",
                d + 4
            )));
        }
        let mut singular = terms.zeros();
        if terms.min_power < 0 {
            singular.push(ZERO);
        }
        Ok(NaturalChart { terms, inverted, singular, sides: (d + 2) as usize })
    }

    /// Number of horizontal (and of vertical) sides of an exhaustion loop.
    pub fn side_count(&self) -> usize {
        self.sides
    }

    pub fn terms(&self) -> &LaurentPoly {
        &self.terms
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    pub fn to_z(&self, w: Complex64) -> Complex64 {
        if self.inverted { w.inv() } else { w }
    }

    pub fn to_w(&self, z: Complex64) -> Complex64 {
        if self.inverted { z.inv() } else { z }
    }

    /// Zeros of `q` (and the opposite puncture, if any) in the chart.
    pub fn singular_points(&self) -> &[Complex64] {
        &self.singular
    }

    /// Radius of a circle enclosing every zero and puncture of the chart.
    pub fn seed_radius(&self) -> f64 {
        let far = self.singular.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if far > 0.0 { 1.5 * far } else { 1e-2 }
    }

    /// Horizontal directions at infinity in the chart, increasing, the
    /// first one closest to angle 0 in the coordinate `z`.
    pub fn directions(&self) -> Vec<f64> {
        let m = self.sides;
        let lead = self.terms.leading();
        let raw: Vec<f64> =
            (0..m).map(|j| (2.0 * PI * j as f64 - lead.arg()) / m as f64).collect();
        let z_angle = |a: f64| if self.inverted { -a } else { a };
        let dist0 = |a: f64| {
            let t = normalize_angle(z_angle(a));
            t.min(2.0 * PI - t)
        };
        let start = (0..m)
            .min_by(|&i, &j| dist0(raw[i]).total_cmp(&dist0(raw[j])).then(i.cmp(&j)))
            .unwrap_or(0);
        (0..m).map(|k| raw[start] + 2.0 * PI * k as f64 / m as f64).collect()
    }

    fn scale_at(&self, w: Complex64) -> f64 {
        let mut s = w.norm();
        for p in &self.singular {
            s = s.min((w - p).norm());
        }
        s
    }

    /// A chart point at `w` with the principal branch and `ζ = 0`.
    pub fn anchor(&self, w: Complex64) -> Result<ChartPoint> {
        let v = self.terms.eval(w);
        if !v.is_finite() || v.norm() == 0.0 {
            return Err(Error::HitSingularity { at: self.to_z(w) });
        }
        Ok(ChartPoint { w, zeta: ZERO, sqrt: principal_sqrt(v) })
    }

    /// Moves along a straight chord in `w`, integrating `ζ`.
    pub fn advance(&self, from: ChartPoint, to: Complex64) -> Result<ChartPoint> {
        let mut current = from;
        let total = to - from.w;
        let pieces = ((total.norm() / (0.1 * self.scale_at(from.w).max(1e-300))).ceil() as usize)
            .clamp(1, 1_000_000);
        for k in 1..=pieces {
            let target = from.w + total * (k as f64 / pieces as f64);
            let mut tracker = SqrtTracker::starting_at(current.sqrt);
            let dz = segment_integral(&self.terms, current.w, target, &mut tracker)?;
            current = ChartPoint {
                w: target,
                zeta: current.zeta + dz,
                sqrt: tracker.current().expect("tracker fed"),
            };
        }
        Ok(current)
    }

    /// Continues from `from` to the point with natural coordinate `target`
    /// along the straight segment in `ζ`.
    pub fn continue_to(&self, from: ChartPoint, target: Complex64) -> Result<ChartPoint> {
        let mut cur = from;
        let mut guard = 0usize;
        loop {
            let delta = target - cur.zeta;
            if delta.norm() <= 1e-13 * (1.0 + target.norm()) {
                return Ok(ChartPoint { zeta: target, ..cur });
            }
            guard += 1;
            if guard > 200_000 {
                return Err(Error::Exhaustion("natural-coordinate continuation stalled".into()));
            }
            let scale = self.scale_at(cur.w);
            let predicted = delta / cur.sqrt;
            let limit = 0.2 * scale;
            let sub = if predicted.norm() > limit {
                cur.zeta + delta * (limit / predicted.norm())
            } else {
                target
            };
            cur = self.newton_step(cur, sub)?;
        }
    }

    fn newton_step(&self, cur: ChartPoint, target: Complex64) -> Result<ChartPoint> {
        let mut w = cur.w + (target - cur.zeta) / cur.sqrt;
        for _ in 0..30 {
            let mut tracker = SqrtTracker::starting_at(cur.sqrt);
            let zeta = cur.zeta + segment_integral(&self.terms, cur.w, w, &mut tracker)?;
            let s = tracker.current().expect("tracker fed");
            let corr = (target - zeta) / s;
            w += corr;
            if corr.norm() <= 1e-14 * (1.0 + w.norm()) {
                let mut tracker = SqrtTracker::starting_at(cur.sqrt);
                let zeta = cur.zeta + segment_integral(&self.terms, cur.w, w, &mut tracker)?;
                let s = tracker.current().expect("tracker fed");
                if (zeta - target).norm() > 1e-9 * (1.0 + target.norm()) {
                    break;
                }
                if self.scale_at(w) < 1e-12 {
                    return Err(Error::HitSingularity { at: self.to_z(w) });
                }
                return Ok(ChartPoint { w, zeta, sqrt: s });
            }
        }
        Err(Error::Exhaustion(format!(
            "Newton inversion of the natural coordinate failed near z = {}",
            self.to_z(cur.w)
        )))
    }
}

/// One closed loop of an exhaustion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonalLoop {
    pub level_index: usize,
    /// Target height `L` of the horizontal sides in the natural coordinate.
    pub level: f64,
    /// Alternating vertical/horizontal sides, starting with a vertical side.
    pub sides: Vec<TrajectorySegment>,
    /// Corners in `z`, `corners[2k]` starting vertical side `k`.
    pub corners: Vec<Complex64>,
    pub closure_gap: f64,
    /// Minimum q-distance (upper bound) from the loop to the zeros of `q`.
    pub zero_distance: Option<f64>,
}

/// JSON record of one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideRecord {
    pub kind: SegmentKind,
    pub length: f64,
    pub endpoints: [[f64; 2]; 2],
}

impl PolygonalLoop {
    pub fn horizontal_lengths(&self) -> Vec<f64> {
        self.sides
            .iter()
            .filter(|s| s.kind == SegmentKind::Horizontal)
            .map(|s| s.q_length)
            .collect()
    }

    pub fn vertical_lengths(&self) -> Vec<f64> {
        self.sides
            .iter()
            .filter(|s| s.kind == SegmentKind::Vertical)
            .map(|s| s.q_length)
            .collect()
    }

    /// The loop as one closed polyline (last point not repeated).
    pub fn polyline(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for side in &self.sides {
            out.extend_from_slice(&side.points[..side.points.len() - 1]);
        }
        out
    }

    pub fn side_records(&self) -> Vec<SideRecord> {
        self.sides
            .iter()
            .map(|s| {
                let a = s.points[0];
                let b = s.points[s.points.len() - 1];
                SideRecord { kind: s.kind, length: s.q_length, endpoints: [[a.re, a.im], [b.re, b.im]] }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub loops: Vec<PolygonalLoop>,
    /// True when the pole is at the origin of `z`.
    pub pole_at_origin: bool,
}

impl Exhaustion {
    fn chart_polyline(&self, lp: &PolygonalLoop) -> Vec<Complex64> {
        let pts = lp.polyline();
        if self.pole_at_origin { pts.iter().map(|z| z.inv()).collect() } else { pts }
    }

    /// Each loop lies strictly between its neighbours: inside the next one
    /// and outside the previous one (as seen from the pole).
    pub fn is_nested(&self) -> bool {
        let charts: Vec<Vec<Complex64>> = self.loops.iter().map(|l| self.chart_polyline(l)).collect();
        for j in 0..charts.len() {
            if j + 1 < charts.len()
                && !charts[j].iter().all(|p| winding_number(&charts[j + 1], *p) == 1)
            {
                return false;
            }
            if j > 0 && !charts[j].iter().all(|p| winding_number(&charts[j - 1], *p) == 0) {
                return false;
            }
        }
        true
    }
}

/// Data of the seed circle shared by all levels.
struct Seeds {
    directions: Vec<f64>,
    /// Natural coordinates of the seed points, continued along the circle;
    /// one extra entry for the return to the first seed.
    zeta: Vec<Complex64>,
    signs: Vec<f64>,
    /// `+1` if `√q` returns to itself around the circle, `−1` otherwise.
    monodromy: f64,
    start: ChartPoint,
}

fn seeds(chart: &NaturalChart) -> Result<Seeds> {
    let dirs = chart.directions();
    let m = dirs.len();
    let r0 = chart.seed_radius();
    let start = chart.anchor(Complex64::from_polar(r0, dirs[0]))?;
    let per_sector = 256;
    let mut cur = start;
    let mut zeta = vec![start.zeta];
    let mut signs = Vec::with_capacity(m + 1);
    let sign_of = |p: &ChartPoint| if (p.sqrt * p.w).re >= 0.0 { 1.0 } else { -1.0 };
    signs.push(sign_of(&start));
    for k in 0..m {
        let a0 = dirs[k];
        let a1 = if k + 1 < m { dirs[k + 1] } else { dirs[0] + 2.0 * PI };
        for s in 1..=per_sector {
            let a = a0 + (a1 - a0) * s as f64 / per_sector as f64;
            cur = chart.advance(cur, Complex64::from_polar(r0, a))?;
        }
        zeta.push(cur.zeta);
        signs.push(sign_of(&cur));
    }
    let monodromy = if (cur.sqrt - start.sqrt).norm() < (cur.sqrt + start.sqrt).norm() {
        1.0
    } else {
        -1.0
    };
    Ok(Seeds { directions: dirs, zeta, signs, monodromy, start })
}

/// A level schedule `L_j = L_0 (j + 1)` whose first level clears the seed
/// circle comfortably.
pub fn default_levels(q: &impl QuadDiff, count: usize) -> Result<Vec<f64>> {
    let chart = NaturalChart::new(q)?;
    let s = seeds(&chart)?;
    let spread = s.zeta.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let base = 1.0 + 2.0 * spread;
    Ok((0..count).map(|j| base * (j + 1) as f64).collect())
}

/// Builds one loop per entry of `levels` (strictly increasing heights `L`).
pub fn build_exhaustion(q: &impl QuadDiff, levels: &[f64]) -> Result<Exhaustion> {
    if levels.is_empty() {
        return Err(Error::Exhaustion("no levels requested".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] <= 0.0 {
        return Err(Error::Exhaustion("levels must be positive and strictly increasing".into()));
    }
    let chart = NaturalChart::new(q)?;
    let seeds = seeds(&chart)?;
    let mut loops = Vec::with_capacity(levels.len());
    for (j, &level) in levels.iter().enumerate() {
        loops.push(build_loop(q, &chart, &seeds, j, level)?);
    }
    Ok(Exhaustion { loops, pole_at_origin: chart.is_inverted() })
}

fn build_loop(
    q: &impl QuadDiff,
    chart: &NaturalChart,
    seeds: &Seeds,
    index: usize,
    level: f64,
) -> Result<PolygonalLoop> {
    let m = seeds.directions.len();
    let zs = &seeds.zeta;
    let s = &seeds.signs;
    let xi: Vec<f64> = (0..=m).map(|k| zs[k].re + s[k] * level).collect();
    let y: Vec<f64> = (0..m).map(|k| s[k] * level + 0.5 * (zs[k].im + zs[k + 1].im)).collect();
    let sigma = seeds.monodromy;
    let y_before = zs[0].im + sigma * (y[m - 1] - zs[m].im);

    // Corners in the natural coordinate: A_k = ξ_k + i y_{k−1}, B_k = ξ_k + i y_k.
    let mut corners_zeta = Vec::with_capacity(2 * m + 1);
    for k in 0..m {
        let below = if k == 0 { y_before } else { y[k - 1] };
        corners_zeta.push(Complex64::new(xi[k], below));
        corners_zeta.push(Complex64::new(xi[k], y[k]));
    }
    corners_zeta.push(Complex64::new(xi[m], y[m - 1]));

    let too_small = |e: Error| match e {
        Error::HitSingularity { .. } | Error::BranchTracking { .. } | Error::Exhaustion(_) => {
            Error::Exhaustion(format!("level {level} is too small: the loop runs into a zero ({e})"))
        }
        other => other,
    };

    let mut cur = seeds.start;
    cur = chart
        .continue_to(cur, Complex64::new(xi[0], zs[0].im))
        .and_then(|p| chart.continue_to(p, corners_zeta[0]))
        .map_err(too_small)?;
    let first_corner = cur.w;

    let samples = 96;
    let mut sides = Vec::with_capacity(2 * m);
    let mut corners = vec![chart.to_z(cur.w)];
    for k in 0..(2 * m) {
        let kind = if k % 2 == 0 { SegmentKind::Vertical } else { SegmentKind::Horizontal };
        let (a, b) = (corners_zeta[k], corners_zeta[k + 1]);
        let mut points = vec![chart.to_z(cur.w)];
        for i in 1..=samples {
            let target = a + (b - a) * (i as f64 / samples as f64);
            cur = chart.continue_to(cur, target).map_err(too_small)?;
            points.push(chart.to_z(cur.w));
        }
        corners.push(chart.to_z(cur.w));
        let measured = q_lengths(&points, q)?;
        let q_length = match kind {
            SegmentKind::Horizontal => measured.horizontal,
            SegmentKind::Vertical => measured.vertical,
        };
        sides.push(TrajectorySegment { kind, points, q_length });
    }
    let end = chart.to_z(cur.w);
    let start = chart.to_z(first_corner);
    let closure_gap = (end - start).norm();
    corners.pop();
    if closure_gap > 1e-6 * start.norm().max(1.0) {
        return Err(Error::ClosureFailure { gap: closure_gap });
    }

    let mut lp = PolygonalLoop {
        level_index: index,
        level,
        sides,
        corners,
        closure_gap,
        zero_distance: None,
    };
    let chart_path: Vec<Complex64> = lp.polyline().iter().map(|z| chart.to_w(*z)).collect();
    for p in chart.singular_points() {
        if winding_number(&chart_path, *p) != 1 {
            return Err(Error::Exhaustion(format!(
                "level {level} is too small: the loop does not enclose the zero at {}",
                chart.to_z(*p)
            )));
        }
    }
    lp.zero_distance = lp
        .corners
        .iter()
        .chain(lp.sides.iter().flat_map(|s| s.points.iter().step_by(8)))
        .filter_map(|z| q_distance_to_zeros(q, *z))
        .min_by(f64::total_cmp);
    Ok(lp)
}

/// `Σ (−1)^i l_i` over the horizontal sides, starting with the side that
/// follows the horizontal direction nearest angle 0.
pub fn alternating_sum(lp: &PolygonalLoop) -> Result<f64> {
    let lengths = lp.horizontal_lengths();
    if lengths.len() % 2 == 1 {
        return Err(Error::Exhaustion(format!(
            "alternating sum needs an even number of horizontal sides, got {}",
            lengths.len()
        )));
    }
    Ok(lengths
        .iter()
        .enumerate()
        .map(|(i, l)| if i % 2 == 0 { *l } else { -*l })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdiff::{LaurentQD, PolynomialQD};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(coeffs: &[(f64, f64)]) -> PolynomialQD {
        PolynomialQD::new(coeffs.iter().map(|&(a, b)| c(a, b)).collect()).unwrap()
    }

    #[test]
    fn zeros_of_examples() {
        let q = LaurentQD::from_terms(4, &[(4, c(1.0, 0.0))]).unwrap();
        assert!(zeros(&q).is_empty());
        let q = poly(&[(1.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let mut z = zeros(&q);
        z.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((z[0] + I).norm() < 1e-13 && (z[1] - I).norm() < 1e-13);
    }

    #[test]
    fn ray_examples() {
        let q = poly(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let rays = horizontal_rays_at_pole(&q);
        for (r, e) in rays.iter().zip([0.0, PI / 2.0, PI, 1.5 * PI]) {
            assert!((r - e).abs() < 1e-14);
        }
        let q = LaurentQD::from_terms(5, &[(5, c(1.0, 0.0))]).unwrap();
        let rays = horizontal_rays_at_pole(&q);
        assert_eq!(rays.len(), 3);
        assert!((rays[1] - 2.0 * PI / 3.0).abs() < 1e-14);
        let q = LaurentQD::from_terms(4, &[(4, c(-1.0, 0.0))]).unwrap();
        let rays = horizontal_rays_at_pole(&q);
        assert!((rays[0] - PI / 2.0).abs() < 1e-14 && (rays[1] - 1.5 * PI).abs() < 1e-14);
    }

    #[test]
    fn flat_lengths() {
        let q = poly(&[(1.0, 0.0)]);
        let l = q_lengths(&[ZERO, c(1.0, 1.0)], &q).unwrap();
        assert!((l.total - 2f64.sqrt()).abs() < 1e-14);
        assert!((l.horizontal - 1.0).abs() < 1e-14 && (l.vertical - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flat_trajectory_is_straight() {
        let q = poly(&[(1.0, 0.0)]);
        let seg = trace_trajectory(&q, ZERO, SegmentKind::Horizontal, 2.0, 0.1).unwrap();
        assert!((seg.points.last().unwrap() - c(2.0, 0.0)).norm() < 1e-12);
        assert!((seg.q_length - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_of_z_squared_along_real_axis() {
        let q = poly(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let seg = trace_trajectory(&q, c(1.0, 0.0), SegmentKind::Horizontal, 4.0, 0.05).unwrap();
        let end = *seg.points.last().unwrap();
        // ∫_1^R t dt = 4 gives R = 3.
        assert!((end - c(3.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn winding() {
        let square = [c(1.0, 1.0), c(-1.0, 1.0), c(-1.0, -1.0), c(1.0, -1.0)];
        assert_eq!(winding_number(&square, ZERO), 1);
        assert_eq!(winding_number(&square, c(3.0, 0.0)), 0);
    }

    #[test]
    fn monomial_loops_have_equal_sides() {
        let q = poly(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let ex = build_exhaustion(&q, &[1.0, 2.0]).unwrap();
        for lp in &ex.loops {
            let h = lp.horizontal_lengths();
            assert_eq!(h.len(), 4);
            for l in &h {
                assert!((l - h[0]).abs() < 1e-8 * h[0]);
            }
            assert!(alternating_sum(lp).unwrap().abs() < 1e-8);
        }
        assert!(ex.is_nested());
    }

    #[test]
    fn odd_side_count_rejected() {
        let q = poly(&[(0.0, 0.0), (1.0, 0.0)]);
        let ex = build_exhaustion(&q, &[3.0]).unwrap();
        assert_eq!(ex.loops[0].horizontal_lengths().len(), 3);
        assert!(alternating_sum(&ex.loops[0]).is_err());
    }
}
