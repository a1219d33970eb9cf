use crownflow::flatgeom::{
    alternating_sum, build_exhaustion, default_levels, kind_residual, trace_trajectory,
    trace_trajectory_directed, Direction, SegmentKind,
};
use crownflow::qdiff::{residue_contour, separating_radius, LaurentQD, PolynomialQD};
use crownflow::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn poly(coeffs: &[Complex64]) -> PolynomialQD {
    PolynomialQD::new(coeffs.to_vec()).unwrap()
}

fn contour_re(q: &PolynomialQD) -> f64 {
    residue_contour(q, separating_radius(q), 4096).unwrap().value.re
}

#[test]
fn alternating_sum_matches_contour_residue() {
    let cases = [
        vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(2.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
    ];
    for coeffs in cases {
        let q = poly(&coeffs);
        let reference = contour_re(&q).abs();
        let levels = default_levels(&q, 3).unwrap();
        let ex = build_exhaustion(&q, &levels).unwrap();
        assert!(ex.is_nested());
        let sums: Vec<f64> = ex.loops.iter().map(|l| alternating_sum(l).unwrap().abs()).collect();
        for s in &sums {
            assert!((s - reference).abs() <= 1e-2 * reference.max(1.0));
            assert!((s - sums[0]).abs() <= 1e-3 * sums[0].max(1.0));
        }
    }
}

#[test]
fn origin_pole_exhaustion() {
    // z^{-6}(1 + 2z) + z^{-4}: pole of order 6 at the origin.
    let q = LaurentQD::from_terms(6, &[(6, c(1.0, 0.0)), (5, c(0.5, 0.3)), (4, c(1.0, 0.0))]).unwrap();
    let reference = residue_contour(&q, separating_radius(&q), 4096).unwrap().value.re.abs();
    let levels = default_levels(&q, 3).unwrap();
    let ex = build_exhaustion(&q, &levels).unwrap();
    assert!(ex.is_nested());
    for lp in &ex.loops {
        assert_eq!(lp.horizontal_lengths().len(), 4);
        let s = alternating_sum(lp).unwrap().abs();
        assert!((s - reference).abs() <= 1e-2 * reference.max(1.0));
    }
}

#[test]
fn cubic_pole_gives_three_sided_loops() {
    let q = poly(&[c(0.0, 0.0), c(1.0, 0.0)]);
    let ex = build_exhaustion(&q, &default_levels(&q, 2).unwrap()).unwrap();
    for lp in &ex.loops {
        assert_eq!(lp.horizontal_lengths().len(), 3);
        assert_eq!(lp.vertical_lengths().len(), 3);
        let kinds: Vec<_> = lp.sides.iter().map(|s| s.kind).collect();
        for w in kinds.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }
}

#[test]
fn vertical_trajectory_residual_is_small() {
    let q = poly(&[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let seg = trace_trajectory(&q, c(2.0, 0.0), SegmentKind::Vertical, 0.5, 0.01).unwrap();
    assert!(kind_residual(&q, &seg).unwrap() < 1e-6);
    assert!((seg.q_length - 0.5).abs() < 5e-4);
}

#[test]
fn reversal_retraces() {
    let q = poly(&[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
    let fwd = trace_trajectory(&q, c(1.5, 0.5), SegmentKind::Horizontal, 3.0, 0.05).unwrap();
    let end = *fwd.points.last().unwrap();
    // The principal branch at the end may differ from the continued one, so
    // try both directions and keep the one that returns.
    let back = [Direction::Forward, Direction::Backward]
        .iter()
        .map(|d| trace_trajectory_directed(&q, end, SegmentKind::Horizontal, *d, 3.0, 0.05).unwrap())
        .min_by(|a, b| {
            let da = (a.points.last().unwrap() - c(1.5, 0.5)).norm();
            let db = (b.points.last().unwrap() - c(1.5, 0.5)).norm();
            da.total_cmp(&db)
        })
        .unwrap();
    let hausdorff = fwd
        .points
        .iter()
        .map(|p| back.points.iter().map(|b| (p - b).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    assert!((back.points.last().unwrap() - c(1.5, 0.5)).norm() < 1e-6);
    // Sample spacing bounds the discrete Hausdorff distance; check against it.
    assert!(hausdorff < 0.06);
}
