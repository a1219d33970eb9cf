use crownflow::bochner::{
    decay_fit, energy_density, gradient_decay_fit, jacobian_field, solve_bochner, w1_field,
    Geometry, Grid,
};
use crownflow::flatgeom::q_distance_to_zeros;
use crownflow::qdiff::PolynomialQD;
use crownflow::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn linear_differential_decay() {
    let q = PolynomialQD::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let g = Grid::new(Geometry::Disk { radius: 8.0 }, 257).unwrap();
    let w = solve_bochner(&q, &g, 1e-10).unwrap();
    let fit = decay_fit(&w).unwrap();
    let gfit = gradient_decay_fit(&w).unwrap();
    assert!(gfit.alpha_fit > 0.5);
    assert!(fit.max_violation > -1e-8);
    assert!(fit.alpha_fit > 0.5);
    assert!(jacobian_field(&w).min() > -1e-8);
    assert!(energy_density(&w).min() >= 2.0 - 1e-9);
    let w1 = w1_field(&w);
    // A node at q-distance about 5 from the zero.
    let k = (0..g.len())
        .filter(|k| w1.values[*k].is_finite())
        .min_by(|a, b| {
            let da = (q_distance_to_zeros(&q, g.position(*a)).unwrap() - 5.0).abs();
            let db = (q_distance_to_zeros(&q, g.position(*b)).unwrap() - 5.0).abs();
            da.total_cmp(&db)
        })
        .unwrap();
    assert!(w1.values[k] < 0.01);
}

#[test]
fn decay_rate_stable_under_refinement() {
    let q = PolynomialQD::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let fits: Vec<f64> = [257, 513]
        .iter()
        .map(|&n| {
            let g = Grid::new(Geometry::Disk { radius: 8.0 }, n).unwrap();
            decay_fit(&solve_bochner(&q, &g, 1e-10).unwrap()).unwrap().alpha_fit
        })
        .collect();
    assert!((fits[1] - fits[0]).abs() <= 0.2 * fits[0]);
}

/// Sup of `|a − b|` over the nodes of `coarse` at q-distance ≥ 1 from the
/// zeros, reading `fine` at the same points.
fn node_gap(q: &PolynomialQD, coarse: &crownflow::bochner::ScalarField, fine: &crownflow::bochner::ScalarField) -> f64 {
    let (a, b) = (w1_field(coarse), w1_field(fine));
    (0..coarse.grid.len())
        .filter(|k| a.values[*k].is_finite())
        .filter(|k| q_distance_to_zeros(q, coarse.grid.position(*k)).is_some_and(|d| d >= 1.0))
        .filter_map(|k| Some((a.values[k] - b.interpolate(coarse.grid.position(k))?).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn second_order_self_convergence() {
    let q = PolynomialQD::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let solves: Vec<_> = [65, 129, 257]
        .iter()
        .map(|&n| solve_bochner(&q, &Grid::new(Geometry::Disk { radius: 3.0 }, n).unwrap(), 1e-12).unwrap())
        .collect();
    assert!(solves.iter().all(|w| w.residual() < 1e-9));
    let coarse = node_gap(&q, &solves[0], &solves[1]);
    let fine = node_gap(&q, &solves[1], &solves[2]);
    assert!(coarse / fine > 3.0, "{coarse} {fine}");
}

#[test]
fn quadratic_shell_sups_decrease() {
    let q = PolynomialQD::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
    let w = solve_bochner(&q, &Grid::new(Geometry::Disk { radius: 5.0 }, 257).unwrap(), 1e-10).unwrap();
    let fit = decay_fit(&w).unwrap();
    assert!(fit.shells.windows(2).all(|p| p[1].1 < p[0].1), "{:?}", fit.shells);
    assert!(energy_density(&w).min() >= 2.0 - 1e-9);
}
