use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crownflow::hypgeom::{
    crown_from_geometry, crown_from_parameters, crown_parameters, distance, fit_isometry,
    truncate_and_sides, DiskPoint, IdealPolygon, Mobius,
};
use crownflow::Complex64;

/// Box–Muller sample of `N(0, σ²)`.
fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..TAU);
    sigma * (-2.0 * u.ln()).sqrt() * v.cos()
}

fn random_automorphism(rng: &mut ChaCha8Rng) -> Mobius {
    let p = Complex64::from_polar(rng.gen_range(0.0..0.7), rng.gen_range(0.0..TAU));
    Mobius::disk_automorphism(rng.gen_range(0.0..TAU), p).unwrap()
}

#[test]
fn automorphisms_preserve_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = random_automorphism(&mut rng);
        assert!(a.is_disk_automorphism(1e-12));
        let p = Complex64::from_polar(rng.gen_range(0.0..0.9), rng.gen_range(0.0..TAU));
        let q = Complex64::from_polar(rng.gen_range(0.0..0.9), rng.gen_range(0.0..TAU));
        let d = distance(p, q);
        assert!((distance(a.apply(p), a.apply(q)) - d).abs() < 1e-9 * d.max(1.0));
        let (phi, centre) = a.automorphism_parameters();
        assert!(Mobius::disk_automorphism(phi, centre).unwrap().distance_to(&a) < 1e-12);
    }
}

#[test]
fn ideal_triangle_has_finite_sides_for_any_heights() {
    let triangle = IdealPolygon::new(vec![0.3, 2.0, 4.4]).unwrap();
    let base = triangle.default_heights();
    for shift in [0.0, 0.5, 2.0, 5.0] {
        let heights: Vec<f64> = base.iter().map(|h| h + shift).collect();
        let sides = truncate_and_sides(&triangle, &heights).unwrap();
        assert_eq!(sides.len(), 3);
        assert!(sides.iter().all(|s| s.is_finite()));
    }
    assert_eq!(triangle.metric_residue(), 0.0);
}

#[test]
fn quadrilateral_residue_is_truncation_invariant() {
    let quad = IdealPolygon::new(vec![0.0, FRAC_PI_2 + 0.3, PI, 3.0 * FRAC_PI_2]).unwrap();
    let base = quad.metric_residue();
    assert!(base.abs() > 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let heights: Vec<f64> = quad.default_heights().iter().map(|h| h + rng.gen_range(0.0..3.0)).collect();
        assert!((quad.metric_residue_with_heights(&heights).unwrap() - base).abs() < 1e-10);
    }
}

#[test]
fn random_crowns_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let length = rng.gen_range(0.5..2.5);
        let floor = Mobius::axis_translation(length).apply(Complex64::new(0.0, 1.0)).arg();
        let mut tail = [rng.gen_range(floor..FRAC_PI_2), rng.gen_range(floor..FRAC_PI_2)];
        tail.sort_by(|a, b| b.total_cmp(a));
        let angles = vec![FRAC_PI_2, tail[0], tail[1]];
        let twist = rng.gen_range(-1.0..1.0);
        let crown = crown_from_parameters(3, angles.clone(), length, twist).unwrap();
        let p = crown_parameters(&crown);
        assert_eq!(p.angles, angles);
        assert_eq!((p.translation_length, p.boundary_twist), (length, twist));

        let a = random_automorphism(&mut rng);
        let cusps: Vec<Complex64> = crown.chain(1).iter().map(|v| a.apply(*v)).collect();
        let t = a.compose(&crown.translation()).compose(&a.inverse());
        let back = crown_from_geometry(&cusps, &t, a.apply(crown.twist_point().z())).unwrap();
        for (x, y) in back.angles().iter().zip(&angles) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((back.translation_length() - length).abs() < 1e-12);
        assert!((back.boundary_twist() - twist).abs() < 1e-12);
    }
}

#[test]
fn noisy_isometry_fit_has_residual_of_noise_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_automorphism(&mut rng);
    let sigma = 1e-3;
    let pairs: Vec<(DiskPoint, DiskPoint)> = (0..40)
        .map(|_| {
            let z = Complex64::from_polar(rng.gen_range(0.0..0.8), rng.gen_range(0.0..TAU));
            let noise = Complex64::new(gaussian(&mut rng, sigma), gaussian(&mut rng, sigma));
            (DiskPoint::new(z).unwrap(), DiskPoint::new(a.apply(z) + noise).unwrap())
        })
        .collect();
    let (fit, rms) = fit_isometry(&pairs).unwrap();
    assert!(rms > 1e-4 && rms < 2e-2, "{rms}");
    assert!(fit.distance_to(&a) < 1e-2);
}
