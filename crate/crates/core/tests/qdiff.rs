use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crownflow::flatgeom::zeros;
use crownflow::qdiff::{
    evaluate, extract_principal_part, rebuild_leading, residue, residue_contour, separating_radius,
    sqrt_along_path, symmetrize, LaurentQD, PolynomialQD, PrincipalPart,
};
use crownflow::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn contour(q: &PolynomialQD, samples: usize) -> Complex64 {
    residue_contour(q, separating_radius(q), samples).unwrap().value
}

#[test]
fn quadratic_residues_by_quadrature() {
    // √(z² + 1) = z + 1/(2z) + …, so the contour residue is ±πi.
    let q = PolynomialQD::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let (a, b) = (contour(&q, 1024), contour(&q, 2048));
    assert!((a - b).norm() < 1e-10);
    assert!((b - c(0.0, PI)).norm().min((b + c(0.0, PI)).norm()) < 1e-10);

    // √(z² + i) = z + i/(2z) + …: 2πi · i/2 = −π.
    let q = PolynomialQD::new(vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let v = contour(&q, 2048);
    assert!((v.re.abs() - PI).abs() < 1e-10 && v.im.abs() < 1e-10);
}

#[test]
fn laurent_residue_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let alphas: Vec<Complex64> =
            (0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let p = PrincipalPart::new(0, alphas).unwrap();
        let q = p.to_differential();
        let numeric = residue_contour(&q, separating_radius(&q), 4096).unwrap();
        assert!(numeric.agrees(&residue(&p), 1e-9));
    }
}

#[test]
fn symmetrized_differential_is_inversion_invariant() {
    let q = LaurentQD::from_terms(5, &[(5, c(2.0, 0.0)), (3, c(3.0, 0.0))]).unwrap();
    let qs = symmetrize(&q);
    // Expected q_sym = 2z⁻⁵ + 3z⁻³ + 3z⁻¹ + 2z.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z = Complex64::from_polar(rng.gen_range(0.3..3.0), rng.gen_range(0.0..TAU));
        let expected = 2.0 * z.powi(-5) + 3.0 * z.powi(-3) + 3.0 * z.inv() + 2.0 * z;
        let value = evaluate(&qs, z);
        assert!((value - expected).norm() < 1e-12 * expected.norm().max(1.0));
        let pulled = evaluate(&qs, z.inv()) * z.powi(-4);
        assert!((pulled - value).norm() < 1e-12 * value.norm().max(1.0));
    }
}

#[test]
fn square_root_returns_after_a_full_loop() {
    let q = PolynomialQD::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let path: Vec<Complex64> = (0..=400).map(|k| Complex64::from_polar(3.0, TAU * k as f64 / 400.0)).collect();
    let roots = sqrt_along_path(&q, &path).unwrap();
    assert!((roots[400] - roots[0]).norm() < 1e-10);
    for (z, r) in path.iter().zip(&roots) {
        assert!((r * r - evaluate(&q, *z)).norm() < 1e-10);
    }
}

/// Roots of `Σ c_k z^k` as eigenvalues of the companion matrix.
fn companion_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let d = coeffs.len() - 1;
    let lead = coeffs[d];
    let m = DMatrix::from_fn(d, d, |i, j| {
        if i == 0 {
            -coeffs[d - 1 - j] / lead
        } else if i == j + 1 {
            c(1.0, 0.0)
        } else {
            c(0.0, 0.0)
        }
    });
    m.schur().eigenvalues().expect("complex Schur form").iter().copied().collect()
}

#[test]
fn zeros_agree_with_companion_eigenvalues() {
    let cases = [
        vec![c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(0.3, -0.2), c(1.5, 0.5), c(-0.7, 0.0), c(0.0, 2.0), c(1.0, 1.0), c(2.0, 0.0)],
    ];
    for coeffs in cases {
        let q = PolynomialQD::new(coeffs.clone()).unwrap();
        let found = zeros(&q);
        let oracle = companion_roots(&coeffs);
        assert_eq!(found.len(), oracle.len());
        for r in &oracle {
            let nearest = found.iter().map(|z| (z - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9, "{r} missing from {found:?}");
        }
    }
    // z³ − 2z + 1 vanishes at 1.
    let q = PolynomialQD::new(vec![c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    assert!(zeros(&q).iter().any(|z| (z - c(1.0, 0.0)).norm() < 1e-12));
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| c(a, b))
}

proptest! {
    #[test]
    fn principal_part_round_trip(
        parity in 0u8..2,
        lead in complex().prop_filter("nonzero", |z| z.norm() > 0.05),
        rest in prop::collection::vec(complex(), 0..5),
    ) {
        let mut alphas = vec![lead];
        alphas.extend(rest);
        prop_assume!(2 * alphas.len() + parity as usize >= 3);
        let p = PrincipalPart::new(parity, alphas).unwrap();
        let q = p.to_differential();
        let back = extract_principal_part(&q).unwrap();
        prop_assert_eq!(back.parity(), p.parity());
        let scale = p.alphas().iter().map(|a| a.norm()).fold(1.0, f64::max);
        let diff = |s: f64| p.alphas().iter().zip(back.alphas()).map(|(a, b)| (a - s * b).norm()).fold(0.0, f64::max);
        prop_assert!(diff(1.0).min(diff(-1.0)) < 1e-11 * scale);
        let rebuilt = rebuild_leading(&back);
        prop_assert!(rebuilt.iter().zip(q.laurent()).all(|(a, b)| (a - b).norm() < 1e-10 * scale * scale));
    }
}
