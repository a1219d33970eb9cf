use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{Differential, GeometryKind, JobConfig};
use super::{Command, Options, Report, Writer, SCHEMA};
use crate::bochner::{decay_fit, solve_bochner_with_cap, w1_field, DecayFit, Geometry, Grid};
use crate::error::{Error, Result};
use crate::flatgeom::{
    alternating_sum, build_exhaustion, default_levels, horizontal_rays_at_pole,
    trace_trajectory_directed, zeros, Direction, Exhaustion, SegmentKind, SideRecord,
};
use crate::hmap::{model_pipeline, PipelineConfig, PipelineReport};
use crate::qdiff::{
    residue, residue_contour, separating_radius, symmetrize, Domain, QuadDiff,
};
use crate::svg::Figure;

fn envelope<T: Serialize>(command: Command, options: &Options, warnings: Vec<String>, body: T) -> Result<(String, Vec<String>)> {
    let report = Report {
        schema: SCHEMA.to_string(),
        command: command.name().to_string(),
        seed: options.seed,
        warnings: warnings.clone(),
        body,
    };
    Ok((serde_json::to_string_pretty(&report)?, warnings))
}

fn figure(options: &Options, title: &str) -> Figure {
    let f = Figure::new().title(title);
    if options.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        f.comment(&format!("generated at unix time {secs}"))
    } else {
        f
    }
}

pub(super) fn dispatch(
    command: Command,
    config: &JobConfig,
    options: &Options,
    writer: &mut Writer,
) -> Result<(String, Vec<String>)> {
    let differential = config.differential.resolve()?;
    let (json, warnings) = match command {
        Command::Info => info(&differential, options)?,
        Command::Foliate => foliate(&differential, config, options, writer)?,
        Command::Exhaust => exhaust(&differential, config, options, writer)?,
        Command::Solve => solve(&differential, config, options, writer)?,
        Command::Pipeline => pipeline(&differential, config, options, writer)?,
        Command::Check => unreachable!("handled by the caller"),
    };
    writer.write(&format!("{}.json", command.name()), format!("{json}\n").as_bytes())?;
    Ok((json, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoBody {
    pub pole_order: usize,
    pub parity: u8,
    /// `α_r, …, α_1`.
    pub alphas: Vec<Complex64>,
    /// Coefficient of `dz/z` in `√q` (up to sign).
    pub residue_laurent: Complex64,
    /// `2πi` times the above.
    pub residue_contour: Complex64,
    /// `∮ √q` evaluated numerically on a separating circle.
    pub residue_contour_numeric: Complex64,
    pub zeros: Vec<Complex64>,
    pub horizontal_rays: Vec<f64>,
    pub rays: usize,
    pub free_real_parameters: usize,
}

fn sorted_zeros(q: &impl QuadDiff) -> Vec<Complex64> {
    let mut z = zeros(q);
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    z
}

fn info(d: &Differential, options: &Options) -> Result<(String, Vec<String>)> {
    let p = d.principal_part()?;
    let res = residue(&p);
    let (numeric, zs, rays) = match d {
        Differential::Polynomial(q) => (
            residue_contour(q, separating_radius(q), 1024)?.value,
            sorted_zeros(q),
            horizontal_rays_at_pole(q),
        ),
        Differential::Laurent(q) => (
            residue_contour(q, separating_radius(q), 1024)?.value,
            sorted_zeros(q),
            horizontal_rays_at_pole(q),
        ),
    };
    let body = InfoBody {
        pole_order: p.pole_order(),
        parity: p.parity(),
        alphas: p.alphas().to_vec(),
        residue_laurent: res.value,
        residue_contour: res.to_contour().value,
        residue_contour_numeric: numeric,
        zeros: zs,
        rays: rays.len(),
        horizontal_rays: rays,
        free_real_parameters: p.free_real_parameters(),
    };
    envelope(Command::Info, options, Vec::new(), body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub kind: SegmentKind,
    pub length: f64,
    pub endpoints: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliateBody {
    pub seed_radius: f64,
    pub trajectories: Vec<TrajectoryRecord>,
    pub skipped: usize,
    pub zeros: Vec<Complex64>,
}

fn foliate_with(
    q: &impl QuadDiff,
    config: &JobConfig,
    options: &Options,
    writer: &mut Writer,
) -> Result<(String, Vec<String>)> {
    let zs = sorted_zeros(q);
    let far = zs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let near = zs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let radius = config.foliate.radius.unwrap_or(match q.domain() {
        Domain::Plane => 1.5 * far.max(0.5),
        _ => 0.5 * near.min(1.0),
    });
    let count = config.foliate.seeds;
    let step = config.foliate.length / 64.0;
    let mut records = Vec::new();
    let mut paths = Vec::new();
    let mut skipped = 0;
    for k in 0..count {
        let z0 = Complex64::from_polar(radius, 2.0 * PI * (k as f64 + 0.5) / count as f64);
        for kind in [SegmentKind::Horizontal, SegmentKind::Vertical] {
            for dir in [Direction::Forward, Direction::Backward] {
                match trace_trajectory_directed(q, z0, kind, dir, config.foliate.length, step) {
                    Ok(seg) => {
                        let a = seg.points[0];
                        let b = seg.points[seg.points.len() - 1];
                        records.push(TrajectoryRecord {
                            kind,
                            length: seg.q_length,
                            endpoints: [[a.re, a.im], [b.re, b.im]],
                        });
                        paths.push((kind, seg.points));
                    }
                    Err(_) => skipped += 1,
                }
            }
        }
    }
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!("{skipped} trajectories ran into a singularity or left the domain"));
    }
    if options.svg {
        let mut fig = figure(options, "trajectories");
        for (kind, pts) in &paths {
            let colour = if *kind == SegmentKind::Horizontal { "#1f5fbf" } else { "#bf3f1f" };
            fig.polyline(pts, colour, 1.0);
        }
        for z in &zs {
            fig.circle(*z, 0.02 * radius.max(1.0), "black", "black");
        }
        writer.write("foliate.svg", fig.render(600.0).as_bytes())?;
    }
    let body = FoliateBody { seed_radius: radius, trajectories: records, skipped, zeros: zs };
    envelope(Command::Foliate, options, warnings, body)
}

fn foliate(d: &Differential, config: &JobConfig, options: &Options, writer: &mut Writer) -> Result<(String, Vec<String>)> {
    match d {
        Differential::Polynomial(q) => foliate_with(q, config, options, writer),
        Differential::Laurent(q) => foliate_with(q, config, options, writer),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelBody {
    pub level: f64,
    pub alternating_sum: Option<f64>,
    pub closure_gap: f64,
    pub zero_distance: Option<f64>,
    pub sides: Vec<SideRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustBody {
    pub residue_contour: Complex64,
    /// `|Re ∮√q|`, the value the alternating sums should reproduce.
    pub expected_alternating_sum: f64,
    pub nested: bool,
    pub levels: Vec<LevelBody>,
}

fn exhaustion_for(q: &impl QuadDiff, config: &JobConfig) -> Result<Exhaustion> {
    let levels = match &config.exhaustion.levels {
        Some(l) => l.clone(),
        None => default_levels(q, config.exhaustion.count.unwrap_or(3))?,
    };
    build_exhaustion(q, &levels)
}

fn exhaust_with(
    q: &impl QuadDiff,
    config: &JobConfig,
    options: &Options,
    writer: &mut Writer,
) -> Result<(String, Vec<String>)> {
    let ex = exhaustion_for(q, config)?;
    let res = residue_contour(q, separating_radius(q), 1024)?.value;
    let expected = res.re.abs();
    let even = q.pole_order() % 2 == 0;
    let mut warnings = Vec::new();
    let mut levels = Vec::new();
    for lp in &ex.loops {
        let sum = if even { Some(alternating_sum(lp)?) } else { None };
        if let Some(s) = sum {
            if (s.abs() - expected).abs() > 0.01 * expected.max(1.0) {
                warnings.push(format!(
                    "level {}: alternating sum {s:.6} differs from |Re residue| {expected:.6}",
                    lp.level
                ));
            }
        }
        levels.push(LevelBody {
            level: lp.level,
            alternating_sum: sum,
            closure_gap: lp.closure_gap,
            zero_distance: lp.zero_distance,
            sides: lp.side_records(),
        });
    }
    let nested = ex.is_nested();
    if !nested {
        warnings.push("loops are not nested".into());
    }
    if options.svg {
        let mut fig = figure(options, "polygonal exhaustion");
        for lp in &ex.loops {
            fig.polygon(&lp.polyline(), "#1f5fbf", 1.0);
        }
        for z in sorted_zeros(q) {
            fig.circle(z, 0.05, "black", "black");
        }
        writer.write("exhaust.svg", fig.render(600.0).as_bytes())?;
    }
    let body = ExhaustBody { residue_contour: res, expected_alternating_sum: expected, nested, levels };
    envelope(Command::Exhaust, options, warnings, body)
}

fn exhaust(d: &Differential, config: &JobConfig, options: &Options, writer: &mut Writer) -> Result<(String, Vec<String>)> {
    match d {
        Differential::Polynomial(q) => exhaust_with(q, config, options, writer),
        Differential::Laurent(q) => exhaust_with(q, config, options, writer),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveBody {
    pub geometry: Geometry,
    pub n: usize,
    pub shape: (usize, usize),
    pub spacing: (f64, f64),
    pub newton_iterations: usize,
    pub residual: f64,
    pub monotone: bool,
    pub start_shift: f64,
    pub w1_min: f64,
    pub w1_max: f64,
    pub decay: Option<DecayFit>,
    pub decay_error: Option<String>,
    /// Files holding the solution (`.bin` data and `.json` header).
    pub field: String,
}

fn solve(d: &Differential, config: &JobConfig, options: &Options, writer: &mut Writer) -> Result<(String, Vec<String>)> {
    let s = &config.solver;
    let grid = Grid::new(s.geometry()?, s.n)?;
    let w = match (d, s.geometry) {
        (Differential::Polynomial(q), GeometryKind::Disk) => solve_bochner_with_cap(q, &grid, s.tol, s.max_newton)?,
        (Differential::Laurent(q), GeometryKind::Annulus) => {
            let qs = if q.domain() == Domain::PuncturedPlane { q.clone() } else { symmetrize(q) };
            solve_bochner_with_cap(&qs, &grid, s.tol, s.max_newton)?
        }
        (Differential::Polynomial(_), GeometryKind::Annulus) => {
            return Err(Error::Config("polynomial differentials are solved on a disk".into()))
        }
        (Differential::Laurent(_), GeometryKind::Disk) => {
            return Err(Error::Config(
                "a pole at the origin needs the annulus geometry (solver.geometry = \"annulus\")".into(),
            ))
        }
    };
    w.export(&writer.path("field"))?;
    writer.note("field.bin");
    writer.note("field.json");
    let w1 = w1_field(&w);
    let (decay, decay_error) = match decay_fit(&w) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut warnings = Vec::new();
    if !w.is_monotone(1e-9) {
        warnings.push("Newton iterates were not monotone".into());
    }
    if let Some(e) = &decay_error {
        warnings.push(format!("decay fit unavailable: {e}"));
    }
    let body = SolveBody {
        geometry: grid.geometry(),
        n: grid.resolution(),
        shape: grid.shape(),
        spacing: grid.spacing(),
        newton_iterations: w.newton_iterations(),
        residual: w.residual(),
        monotone: w.is_monotone(1e-9),
        start_shift: w.start_shift,
        w1_min: w1.min(),
        w1_max: w1.max(),
        decay,
        decay_error,
        field: "field".into(),
    };
    envelope(Command::Solve, options, warnings, body)
}

fn pipeline(d: &Differential, config: &JobConfig, options: &Options, writer: &mut Writer) -> Result<(String, Vec<String>)> {
    let (p, lower) = d.pipeline_input()?;
    let s = &config.solver;
    let pc = PipelineConfig {
        inner: s.inner,
        n: s.n,
        tol: s.tol,
        max_newton: s.max_newton,
        levels: config.exhaustion.levels.clone(),
        ..PipelineConfig::default()
    };
    let report: PipelineReport = model_pipeline(&p, &lower, &pc)?;
    let mut warnings = Vec::new();
    if let Some(e) = report.relative_error {
        if e > 0.05 {
            warnings.push(format!("image metric residue off by {:.2}% from 2|Re residue|", 100.0 * e));
        }
    }
    if let Some(s) = report.level_stability {
        if s > 1e-2 {
            warnings.push(format!("image metric residue changes by {s:.3e} between the deepest levels"));
        }
    }
    if report.principal_part != report.recovered_principal_part {
        warnings.push("principal part not recovered from the assembled differential".into());
    }
    if let Some(e) = &report.decay_error {
        warnings.push(format!("decay fit unavailable: {e}"));
    }
    if options.svg {
        if let Some(level) = report.levels.last() {
            let q = crate::hmap::assemble(&p, &lower)?;
            let ex = build_exhaustion(&symmetrize(&q), &[level.level])?;
            let mut fig = figure(options, "deepest exhaustion loop");
            fig.polygon(&ex.loops[0].polyline(), "#1f5fbf", 1.0);
            fig.circle(Complex64::default(), report.inner_radius, "gray", "none");
            writer.write("pipeline.svg", fig.render(600.0).as_bytes())?;
        }
    }
    envelope(Command::Pipeline, options, warnings, report)
}
