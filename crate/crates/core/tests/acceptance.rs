//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crownflow::bochner::{decay_fit, solve_bochner, Geometry, Grid};
use crownflow::flatgeom::{alternating_sum, build_exhaustion, default_levels, zeros, SegmentKind};
use crownflow::hmap::{
    curvature_estimate, hopf_extract, horizontal_segment_near_zero, image_metric_residue,
    loop_boundary_data, model_pipeline, pfd_solve, side_images, solve_dirichlet,
    truncated_polygon_corners, twist_delta, DirichletOptions, GeodesicLoop, Initial, Mesh,
    PipelineConfig,
};
use crownflow::hypgeom::{
    crown_from_geometry, crown_from_parameters, fit_isometry, DiskPoint, IdealPolygon,
    Mobius,
};
use crownflow::qdiff::{
    extract_principal_part, rebuild_leading, residue, residue_contour, separating_radius,
    Domain, LaurentQD, PolynomialQD, PrincipalPart,
};
use crownflow::{Complex64, Result};

const SEED: u64 = 20_240_601;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

fn random_part(rng: &mut ChaCha8Rng, n: usize) -> PrincipalPart {
    let parity = (n % 2) as u8;
    let r = n / 2;
    let mut alphas: Vec<Complex64> = (0..r).map(|_| random_complex(rng, 2.0)).collect();
    if alphas[0].norm() < 0.1 {
        alphas[0] += c(0.5, 0.0);
    }
    PrincipalPart::new(parity, alphas).unwrap()
}

fn random_automorphism(rng: &mut ChaCha8Rng) -> Mobius {
    let p = Complex64::from_polar(rng.gen_range(0.0..0.6), rng.gen_range(0.0..TAU));
    Mobius::disk_automorphism(rng.gen_range(0.0..TAU), p).unwrap()
}

fn relative(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Largest relative difference of two coefficient lists, up to a global sign.
fn up_to_sign(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff = |s: f64| a.iter().zip(b).map(|(x, y)| relative(*x, s * y)).fold(0.0, f64::max);
    diff(1.0).min(diff(-1.0))
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn criterion_1() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut round_trip = 0.0f64;
    let mut left_inverse = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=10);
        let p = random_part(&mut rng, n);
        let back = extract_principal_part(&p.to_differential())?;
        if back.parity() != p.parity() || back.r() != p.r() {
            return outcome(false, format!("parity or length changed for n = {n}"));
        }
        round_trip = round_trip.max(up_to_sign(back.alphas(), p.alphas()));

        // rebuild ∘ extract is the identity on leading coefficients, so
        // extraction is injective there.
        let mut laurent: Vec<Complex64> = (0..n - 1).map(|_| random_complex(&mut rng, 2.0)).collect();
        if laurent[0].norm() < 0.1 {
            laurent[0] += c(0.5, 0.0);
        }
        let q = LaurentQD::new(n, laurent.clone(), Vec::new(), Domain::PuncturedDisk)?;
        let rebuilt = rebuild_leading(&extract_principal_part(&q)?);
        let scale = laurent[0].norm().max(1.0);
        let err = rebuilt
            .iter()
            .zip(&laurent)
            .map(|(a, b)| (a - b).norm() / scale)
            .fold(0.0, f64::max);
        left_inverse = left_inverse.max(err);
    }
    outcome(
        round_trip < 1e-12 && left_inverse < 1e-12,
        format!("round trip {round_trip:.2e}, rebuild∘extract {left_inverse:.2e} (< 1e-12)"),
    )
}

fn criterion_2() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0f64;
    let mut drift = 0.0f64;
    for _ in 0..20 {
        let n = 2 * rng.gen_range(2..=5);
        let p = random_part(&mut rng, n);
        let q = p.to_differential();
        let radius = separating_radius(&q);
        let a = residue_contour(&q, radius, 2048)?.value;
        let b = residue_contour(&q, radius, 4096)?.value;
        let exact = residue(&p).to_contour().value;
        worst = worst.max((b - exact).norm().min((b + exact).norm()) / exact.norm().max(1.0));
        drift = drift.max((a - b).norm() / b.norm().max(1.0));
    }
    outcome(worst < 1e-6 && drift < 1e-6, format!("error {worst:.2e}, doubling drift {drift:.2e} (< 1e-6)"))
}

fn criterion_3() -> Result<Outcome> {
    // z³ + z + 1 has a pole of odd order 7 at infinity, where there is no
    // alternating sum; an even-order quartic takes its place.
    let cases = [
        ("z²+1", vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
        ("z²+i", vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]),
        ("z⁴+iz+1", vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]),
    ];
    let mut passed = true;
    let mut detail = Vec::new();
    for (name, coeffs) in cases {
        let q = PolynomialQD::new(coeffs)?;
        let reference = residue_contour(&q, separating_radius(&q), 4096)?.value.re.abs();
        let ex = build_exhaustion(&q, &default_levels(&q, 3)?)?;
        let sums: Vec<f64> = ex.loops.iter().map(|l| Ok(alternating_sum(l)?.abs())).collect::<Result<_>>()?;
        let vs_residue = sums.iter().map(|s| (s - reference).abs() / reference.max(1.0)).fold(0.0, f64::max);
        let spread = sums.iter().map(|s| (s - sums[0]).abs() / sums[0].max(1.0)).fold(0.0, f64::max);
        passed &= vs_residue <= 1e-2 && spread <= 1e-3 && ex.is_nested();
        detail.push(format!("{name}: {vs_residue:.1e}/{spread:.1e}"));
    }
    let odd = PolynomialQD::new(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])?;
    let odd_residue = residue_contour(&odd, separating_radius(&odd), 4096)?.value.norm();
    passed &= odd_residue < 1e-9;
    detail.push(format!("z³+z+1 residue {odd_residue:.1e}"));
    outcome(passed, format!("vs residue / between levels: {}", detail.join(", ")))
}

fn criterion_4() -> Result<Outcome> {
    let flat = PolynomialQD::new(vec![c(1.0, 0.0)])?;
    let w = solve_bochner(&flat, &Grid::new(Geometry::Disk { radius: 8.0 }, 129)?, 1e-12)?;
    let flat_sup = (0..w.grid.len()).filter_map(|k| w.w1_at(k)).fold(0.0f64, |m, v| m.max(v.abs()));

    let q = PolynomialQD::new(vec![c(0.0, 0.0), c(1.0, 0.0)])?;
    let mut fits = Vec::new();
    let mut violation = 0.0f64;
    for n in [257, 513] {
        let w = solve_bochner(&q, &Grid::new(Geometry::Disk { radius: 8.0 }, n)?, 1e-10)?;
        let fit = decay_fit(&w)?;
        violation = violation.min(fit.max_violation);
        fits.push(fit.alpha_fit);
    }
    let stable = (fits[1] - fits[0]).abs() <= 0.2 * fits[0];
    outcome(
        flat_sup < 1e-10 && violation >= -1e-8 && fits[0] > 0.0 && stable,
        format!(
            "‖w‖ flat {flat_sup:.1e}, min w₁ {violation:.1e}, α {:.3} → {:.3}",
            fits[0], fits[1]
        ),
    )
}

fn criterion_5() -> Result<Outcome> {
    let q = PolynomialQD::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])?;
    let w = solve_bochner(&q, &Grid::new(Geometry::Disk { radius: 6.0 }, 257)?, 1e-10)?;
    let ex = build_exhaustion(&q, &[5.0, 7.5, 10.0])?;
    let mut horizontal = (f64::INFINITY, f64::NEG_INFINITY);
    let mut vertical = 0.0f64;
    let mut counted = 0;
    for lp in &ex.loops {
        if lp.zero_distance.map_or(true, |d| d < 5.0) {
            continue;
        }
        for s in side_images(&q, &w, lp)? {
            counted += 1;
            match s.kind {
                SegmentKind::Horizontal => {
                    let excess = s.image_length - 2.0 * s.q_length;
                    horizontal = (horizontal.0.min(excess), horizontal.1.max(excess));
                }
                SegmentKind::Vertical => vertical = vertical.max(s.image_length / s.q_length),
            }
        }
    }
    let lengths_ok = counted > 0 && horizontal.0 >= -1e-6 && horizontal.1 <= 0.05 && vertical < 0.05;

    let lin = PolynomialQD::new(vec![c(0.0, 0.0), c(1.0, 0.0)])?;
    let wl = solve_bochner(&lin, &Grid::new(Geometry::Disk { radius: 8.0 }, 257)?, 1e-10)?;
    let z0 = zeros(&lin)[0];
    let kappas: Vec<f64> = [3.0, 4.0, 5.0]
        .iter()
        .map(|d| curvature_estimate(&lin, &wl, &horizontal_segment_near_zero(&lin, z0, 0, *d, 1.0, 0.05)?))
        .collect::<Result<_>>()?;
    let decreasing = kappas.windows(2).all(|p| p[1] < p[0]);
    outcome(
        lengths_ok && decreasing,
        format!(
            "{counted} sides: image − 2L ∈ [{:.1e}, {:.1e}], vertical/L ≤ {vertical:.1e}; κ {:.1e} > {:.1e} > {:.1e}",
            horizontal.0, horizontal.1, kappas[0], kappas[1], kappas[2]
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let mut passed = true;
    let mut detail = Vec::new();

    // (z² + i) dz² on a disk containing its loops.
    let q = PolynomialQD::new(vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)])?;
    let expected = 2.0 * residue_contour(&q, separating_radius(&q), 4096)?.value.re.abs();
    let w = solve_bochner(&q, &Grid::new(Geometry::Disk { radius: 7.0 }, 257)?, 1e-10)?;
    let base = default_levels(&q, 1)?[0];
    let ex = build_exhaustion(&q, &[base, 1.5 * base])?;
    let values = [image_metric_residue(&q, &w, &ex, 0)?.abs(), image_metric_residue(&q, &w, &ex, 1)?.abs()];
    let err = (values[1] - expected).abs() / expected.max(1.0);
    let stability = (values[1] - values[0]).abs() / values[1].max(1.0);
    passed &= err < 0.05 && stability < 1e-2;
    detail.push(format!("z²+i disk {err:.1e}/{stability:.1e}"));

    // Model maps of three principal parts, one of them the pole of z²+i.
    let parts = [
        ("(1,0,i/2)", PrincipalPart::new(0, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.5)])?, 2),
        ("(1,0.3+0.2i)", PrincipalPart::new(0, vec![c(1.0, 0.0), c(0.3, 0.2)])?, 1),
        ("(1,0.2i,0.1,0.3−0.4i)", PrincipalPart::new(0, vec![c(1.0, 0.0), c(0.0, 0.2), c(0.1, 0.0), c(0.3, -0.4)])?, 3),
    ];
    for (name, p, lower) in parts {
        let report = model_pipeline(&p, &vec![c(0.0, 0.0); lower], &PipelineConfig::default())?;
        let err = report.relative_error.unwrap_or(f64::INFINITY);
        let stability = report.level_stability.unwrap_or(f64::INFINITY);
        passed &= err < 0.05 && stability < 1e-2;
        detail.push(format!("{name} {err:.1e}/{stability:.1e}"));
    }
    outcome(passed, format!("relative error / level stability: {}", detail.join(", ")))
}

fn polygon_boundary(mesh: &Mesh) -> Result<Vec<(usize, DiskPoint)>> {
    let polygon = IdealPolygon::regular(4, 0.3)?;
    let corners = truncated_polygon_corners(&polygon, &polygon.default_heights())?;
    loop_boundary_data(mesh, &GeodesicLoop::new(corners)?, 0.0)
}

fn criterion_7() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let mesh = Arc::new(Mesh::disk(1.0, 8)?);
    let data = polygon_boundary(&mesh)?;
    let a = random_automorphism(&mut rng);
    let moved: Vec<(usize, DiskPoint)> =
        data.iter().map(|(v, p)| Ok((*v, a.apply_point(*p)?))).collect::<Result<_>>()?;
    let options = DirichletOptions::default();
    let h1 = solve_dirichlet(mesh.clone(), &data, &options)?;
    let h2 = solve_dirichlet(mesh.clone(), &moved, &options)?;
    let pairs: Vec<(DiskPoint, DiskPoint)> = (0..mesh.vertex_count()).map(|v| (h1.value(v), h2.value(v))).collect();
    let (fit, rms) = fit_isometry(&pairs)?;
    let recovered = fit.distance_to(&a);

    let r1 = solve_dirichlet(mesh.clone(), &data, &DirichletOptions { init: Initial::Random(rng.gen()), ..options.clone() })?;
    let r2 = solve_dirichlet(mesh.clone(), &data, &DirichletOptions { init: Initial::Random(rng.gen()), ..options.clone() })?;
    let agree = r1.sup_distance(&r2);
    let monotone = [&h1, &h2, &r1, &r2].iter().all(|m| m.is_energy_monotone());

    let mut residuals = Vec::new();
    for rings in [8, 16] {
        let mesh = Arc::new(Mesh::disk(1.0, rings)?);
        let map = solve_dirichlet(mesh.clone(), &polygon_boundary(&mesh)?, &options)?;
        residuals.push(hopf_extract(&map)?.mean_residual(&mesh, |z| z.norm() <= 0.5));
    }
    let ratio = residuals[1] / residuals[0];
    outcome(
        rms < 1e-6 && recovered < 1e-6 && agree < 1e-6 && monotone && (0.35..=0.65).contains(&ratio),
        format!(
            "fit rms {rms:.1e}, vs A {recovered:.1e}, random inits {agree:.1e}, monotone {monotone}, ∂̄ {:.3} → {:.3} (ratio {ratio:.2})",
            residuals[0], residuals[1]
        ),
    )
}

fn circle(mesh: &Mesh, at: impl Fn(f64) -> bool, f: impl Fn(f64) -> Complex64) -> Result<Vec<(usize, DiskPoint)>> {
    mesh.boundary_vertices()
        .into_iter()
        .filter(|v| at(mesh.positions()[*v].re))
        .map(|v| Ok((v, DiskPoint::new(f(mesh.positions()[v].im))?)))
        .collect()
}

fn criterion_8() -> Result<Outcome> {
    let options = DirichletOptions::default();
    let length = 2.0;
    let mesh = Arc::new(Mesh::cylinder(0.0, length, TAU, 8, 16)?);
    let outer = circle(&mesh, |x| x > 0.5 * length, |y| Complex64::from_polar(0.5, y))?;
    let pfd = pfd_solve(mesh.clone(), &outer, &options)?;
    let pfd_energy = pfd.map.energy();
    let mut comparisons = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    for _ in 0..5 {
        let centre = Complex64::from_polar(rng.gen_range(0.0..0.3), rng.gen_range(0.0..TAU));
        let radius = rng.gen_range(0.02..0.5);
        let phase = rng.gen_range(0.0..TAU);
        let mut data = outer.clone();
        data.extend(circle(&mesh, |x| x < 0.5 * length, |y| centre + Complex64::from_polar(radius, y + phase))?);
        comparisons.push(solve_dirichlet(mesh.clone(), &data, &options)?.energy());
    }
    let least = comparisons.iter().all(|e| pfd_energy <= e * (1.0 + 1e-12));

    // Centred cylinders: the mesh diagonals mirror across x = 0, which keeps
    // the triangulation from biasing one shear direction.
    let mut twists = Vec::new();
    for l in [4.0, 8.0, 16.0, 32.0] {
        let mesh = Arc::new(Mesh::cylinder(-0.5 * l, 0.5 * l, TAU, (2.0 * l) as usize, 16)?);
        let mut data = circle(&mesh, |x| x < 0.0, |y| Complex64::from_polar(0.5, y))?;
        data.extend(circle(&mesh, |x| x > 0.0, |y| Complex64::from_polar(0.5, y + 1.0))?);
        let map = solve_dirichlet(mesh.clone(), &data, &options)?;
        twists.push(twist_delta(&map, 1.0)?.abs());
    }
    let no_increase = twists.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-6) + 1e-12);
    outcome(
        least && pfd.symmetry_error < 1e-8 && no_increase,
        format!(
            "E_pfd {pfd_energy:.6} ≤ min {:.6}, symmetry {:.1e}, twist |ΔE| {:?}",
            comparisons.iter().cloned().fold(f64::INFINITY, f64::min),
            pfd.symmetry_error,
            twists.iter().map(|t| format!("{t:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut drift = 0.0f64;
    let mut trials = 0;
    while trials < 100 {
        let m = 2 * rng.gen_range(2..=5);
        let mut angles: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        if angles.windows(2).any(|w| w[1] - w[0] < 0.05) || angles[0] + TAU - angles[m - 1] < 0.05 {
            continue;
        }
        let polygon = IdealPolygon::new(angles)?;
        let base = polygon.metric_residue();
        let heights: Vec<f64> = polygon.default_heights().iter().map(|h| h + rng.gen_range(0.0..2.0)).collect();
        drift = drift.max((polygon.metric_residue_with_heights(&heights)? - base).abs());
        trials += 1;
    }

    let mut round_trip = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(1..=6);
        let length = rng.gen_range(0.3..3.0);
        let twist = rng.gen_range(-2.0..2.0);
        let floor = Mobius::axis_translation(length).apply(c(0.0, 1.0)).arg();
        let mut tail: Vec<f64> = (1..m).map(|_| rng.gen_range(floor + 0.01..FRAC_PI_2 - 0.01)).collect();
        tail.sort_by(|a, b| b.total_cmp(a));
        let mut angles = vec![FRAC_PI_2];
        angles.extend(tail);
        let Ok(crown) = crown_from_parameters(m, angles, length, twist) else {
            continue;
        };
        let a = random_automorphism(&mut rng);
        let cusps: Vec<Complex64> = crown.chain(1).iter().map(|v| a.apply(*v)).collect();
        let t = a.compose(&crown.translation()).compose(&a.inverse());
        let back = crown_from_geometry(&cusps, &t, a.apply(crown.twist_point().z()))?;
        let err = back
            .angles()
            .iter()
            .zip(crown.angles())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            .max((back.translation_length() - length).abs())
            .max((back.boundary_twist() - twist).abs());
        round_trip = round_trip.max(err);
    }
    outcome(
        drift < 1e-10 && round_trip < 1e-12,
        format!("truncation drift {drift:.1e} (< 1e-10), crown round trip {round_trip:.1e} (< 1e-12)"),
    )
}

fn criterion_10() -> Result<Outcome> {
    let base = std::env::temp_dir().join(format!("crownflow-acceptance-{}", std::process::id()));
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for run in ["a", "b"] {
        let out = base.join(run);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_crownflow"))
            .args(["check", "--seed", "11", "--out"])
            .arg(&out)
            .output()?;
        codes.push(status.status.code().unwrap_or(-1));
        reports.push(std::fs::read(out.join("check.json"))?);
        if status.stdout != reports[reports.len() - 1] {
            return outcome(false, "stdout differs from check.json".into());
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    let identical = reports[0] == reports[1];
    outcome(
        codes == [0, 0] && identical,
        format!("exit codes {codes:?}, byte-identical {identical}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>, Duration); 10] = [
        ("principal-part algebra", criterion_1, Duration::from_secs(1)),
        ("residue oracle", criterion_2, Duration::from_secs(5)),
        ("alternating sums", criterion_3, Duration::from_secs(30)),
        ("Bochner solve", criterion_4, Duration::from_secs(120)),
        ("length estimates", criterion_5, Duration::from_secs(120)),
        ("image metric residue", criterion_6, Duration::from_secs(120)),
        ("discrete harmonic maps", criterion_7, Duration::from_secs(120)),
        ("PFD and twist", criterion_8, Duration::from_secs(180)),
        ("geometry kernel", criterion_9, Duration::from_secs(1)),
        ("end-to-end determinism", criterion_10, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= *limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.2}s, limit {}s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
