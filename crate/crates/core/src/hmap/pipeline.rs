//! The model-map pipeline: principal part and lower coefficients in, image
//! geometry of the harmonic map with the symmetrized Hopf differential out.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::geometry::{curvature_estimate, horizontal_segment_near_zero, side_images, SideImage};
use crate::bochner::{decay_fit, solve_bochner_with_cap, DecayFit, Geometry, Grid, ScalarField};
use crate::error::{Error, Result};
use crate::flatgeom::{build_exhaustion, default_levels, zeros, SegmentKind};
use crate::qdiff::{
    extract_principal_part, rebuild_leading, residue_contour, separating_radius, symmetrize,
    Domain, LaurentQD, PrincipalPart, QuadDiff,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Inner radius of the annulus `inner ≤ |z| ≤ 1/inner`; `None` picks one
    /// from the leading coefficient.
    pub inner: Option<f64>,
    pub n: usize,
    pub tol: f64,
    pub max_newton: usize,
    /// Exhaustion levels; `None` tries a geometric schedule and keeps the
    /// levels whose loops fit in the solved region.
    pub levels: Option<Vec<f64>>,
    pub curvature_distances: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inner: None,
            n: 257,
            tol: 1e-9,
            max_newton: 60,
            levels: None,
            curvature_distances: vec![3.0, 4.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub zero_distance: Option<f64>,
    pub sides: Vec<SideImage>,
    pub image_metric_residue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub distance: f64,
    pub kappa: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pole_order: usize,
    pub principal_part: PrincipalPart,
    /// Principal part read back from the assembled differential.
    pub recovered_principal_part: PrincipalPart,
    /// `a_n, …, a_2` of the assembled differential.
    pub laurent: Vec<Complex64>,
    pub inner_radius: f64,
    pub residue_contour: Complex64,
    /// `2 |Re ∮√q|`.
    pub expected_metric_residue: f64,
    pub levels: Vec<LevelReport>,
    /// Image metric residue at the deepest level.
    pub image_metric_residue: Option<f64>,
    /// `|image − expected| / max(1, expected)`.
    pub relative_error: Option<f64>,
    /// Relative change of the image metric residue between the two deepest
    /// levels.
    pub level_stability: Option<f64>,
    pub decay: Option<DecayFit>,
    pub decay_error: Option<String>,
    pub curvature: Vec<CurvatureSample>,
    pub newton_iterations: usize,
    pub residual: f64,
    pub inversion_asymmetry: Option<f64>,
}

/// `q` with the leading coefficients of `p` and `lower = [a_{n−r}, …, a_2]`.
pub fn assemble(p: &PrincipalPart, lower: &[Complex64]) -> Result<LaurentQD> {
    let n = p.pole_order();
    let mut laurent = rebuild_leading(p);
    if lower.len() != n - p.r() - 1 {
        return Err(Error::InvalidDifferential(format!(
            "pole order {n} needs {} lower coefficients a_{}..a_2, got {}",
            n - p.r() - 1,
            n - p.r(),
            lower.len()
        )));
    }
    laurent.extend_from_slice(lower);
    LaurentQD::new(n, laurent, Vec::new(), Domain::PuncturedDisk)
}

/// Inner radius putting the inner circle at natural-coordinate distance
/// about 40 from the pole's model `a_n z^{−n}`.
fn auto_inner(q: &LaurentQD) -> f64 {
    let n = q.laurent().len() + 1;
    let p = 0.5 * n as f64 - 1.0;
    let lead = q.laurent()[0].norm().sqrt();
    (40.0 * p / lead).powf(-1.0 / p).clamp(1e-3, 0.5)
}

pub fn model_pipeline(
    p: &PrincipalPart,
    lower: &[Complex64],
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    let n = p.pole_order();
    let q = assemble(p, lower)?;
    let recovered = extract_principal_part(&q)?;
    let qs = symmetrize(&q);
    let inner = config.inner.unwrap_or_else(|| auto_inner(&q));
    let grid = Grid::new(Geometry::Annulus { inner }, config.n)?;
    let w = solve_bochner_with_cap(&qs, &grid, config.tol, config.max_newton)?;

    let res = residue_contour(&qs, separating_radius(&qs), 2048)?.value;
    let expected = 2.0 * res.re.abs();

    let levels = if n >= 4 { exhaustion_levels(&qs, &w, config)? } else { Vec::new() };
    let deepest = levels.last().and_then(|l| l.image_metric_residue);
    let relative_error = deepest.map(|v| (v.abs() - expected).abs() / expected.max(1.0));
    let level_stability = match levels.len() {
        k if k >= 2 => match (levels[k - 2].image_metric_residue, levels[k - 1].image_metric_residue) {
            (Some(a), Some(b)) => Some((a.abs() - b.abs()).abs() / b.abs().max(1.0)),
            _ => None,
        },
        _ => None,
    };

    let (decay, decay_error) = match decay_fit(&w) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let curvature = curvature_samples(&qs, &w, &config.curvature_distances);

    Ok(PipelineReport {
        pole_order: n,
        principal_part: p.clone(),
        recovered_principal_part: recovered,
        laurent: q.laurent().to_vec(),
        inner_radius: inner,
        residue_contour: res,
        expected_metric_residue: expected,
        levels,
        image_metric_residue: deepest,
        relative_error,
        level_stability,
        decay,
        decay_error,
        curvature,
        newton_iterations: w.newton_iterations(),
        residual: w.residual(),
        inversion_asymmetry: w.inversion_asymmetry(),
    })
}

fn level_report(qs: &LaurentQD, w: &ScalarField, level: f64) -> Result<LevelReport> {
    let ex = build_exhaustion(qs, &[level])?;
    let lp = &ex.loops[0];
    let sides = side_images(qs, w, lp)?;
    let image_metric_residue = (qs.pole_order() % 2 == 0).then(|| {
        let mut sign = 1.0;
        let mut total = 0.0;
        for s in sides.iter().filter(|s| s.kind == SegmentKind::Horizontal) {
            total += sign * s.image_length;
            sign = -sign;
        }
        total
    });
    Ok(LevelReport { level, zero_distance: lp.zero_distance, sides, image_metric_residue })
}

fn exhaustion_levels(qs: &LaurentQD, w: &ScalarField, config: &PipelineConfig) -> Result<Vec<LevelReport>> {
    if let Some(levels) = &config.levels {
        return levels.iter().map(|l| level_report(qs, w, *l)).collect();
    }
    let base = default_levels(qs, 1)?[0];
    let mut out = Vec::new();
    for j in 0..8 {
        let level = base * 1.25f64.powi(j);
        match level_report(qs, w, level) {
            Ok(r) => out.push(r),
            Err(Error::LeftDomain { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::Exhaustion(format!(
            "no exhaustion level fits inside the annulus (first level {base:.3})"
        )));
    }
    Ok(out)
}

fn curvature_samples(qs: &LaurentQD, w: &ScalarField, distances: &[f64]) -> Vec<CurvatureSample> {
    let mut roots = zeros(qs);
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.arg().total_cmp(&b.arg())));
    let Some(&z0) = roots.first() else {
        return Vec::new();
    };
    distances
        .iter()
        .map(|&d| {
            match horizontal_segment_near_zero(qs, z0, 0, d, 1.0, 0.05)
                .and_then(|seg| curvature_estimate(qs, w, &seg))
            {
                Ok(k) => CurvatureSample { distance: d, kappa: Some(k), error: None },
                Err(e) => CurvatureSample { distance: d, kappa: None, error: Some(e.to_string()) },
            }
        })
        .collect()
}
