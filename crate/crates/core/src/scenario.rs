//! Named initial maps and assembly of a run from its configuration.

use std::f64::consts::PI;

use crate::config::{MapScenario, RunConfig, TargetKind};
use crate::error::{Error, Result};
use crate::grid::{build_grid, EmbeddedField, Grid};
use crate::metric::MetricField;
use crate::rng::SimRng;
use crate::target::{project_map, TargetManifold};

/// Blend radii for the bump scenario: inverse-stereographic bubble inside,
/// smooth interpolation to the pole on [inner, outer].
pub const BUMP_BLEND_INNER: f64 = 0.15;
pub const BUMP_BLEND_OUTER: f64 = 0.30;

pub struct Assembled {
    pub grid: Grid,
    pub target: TargetManifold,
    pub initial_map: EmbeddedField,
    pub initial_metric: MetricField,
}

pub fn build_target(cfg: &RunConfig) -> Result<TargetManifold> {
    match cfg.target_kind {
        TargetKind::Sphere => TargetManifold::sphere(cfg.ambient_dim),
        TargetKind::TorusOfRevolution => TargetManifold::torus_of_revolution(cfg.torus_major, cfg.torus_minor),
    }
}

pub fn assemble(cfg: &RunConfig) -> Result<Assembled> {
    let grid = build_grid(cfg.nx, cfg.ny)?;
    let target = build_target(cfg)?;
    let initial_map = build_initial_map(cfg, grid, &target)?;
    let initial_metric = MetricField::flat(grid, cfg.teich);
    Ok(Assembled { grid, target, initial_map, initial_metric })
}

pub fn build_initial_map(cfg: &RunConfig, grid: Grid, target: &TargetManifold) -> Result<EmbeddedField> {
    let k = target.ambient_dim();
    let mut u = match cfg.scenario {
        MapScenario::Constant => constant_map(grid, target),
        MapScenario::Equator => {
            require_circle_target(target, "equator")?;
            circle_map(grid, k, |x, _| 2.0 * PI * x)
        }
        MapScenario::Spiral => {
            require_circle_target(target, "spiral")?;
            let eps = cfg.spiral_eps;
            circle_map(grid, k, move |x, _| 2.0 * PI * x + eps * (2.0 * PI * x).sin())
        }
        MapScenario::Bump => {
            if !matches!(target, TargetManifold::Sphere { ambient_dim: 3 }) {
                return Err(Error::Engine("bump scenario needs the S^2 target (sphere, dimension 3)".into()));
            }
            bump_map(grid, cfg.bump_center, cfg.bump_scale)
        }
        MapScenario::File => {
            let path = cfg.map_file.as_ref().expect("validated by config");
            let u = crate::io::load_map(std::path::Path::new(path))?;
            u.grid.same(&grid, "map file")?;
            if u.dim != k {
                return Err(Error::ShapeMismatch(format!(
                    "map file has ambient dimension {}, target needs {k}",
                    u.dim
                )));
            }
            u
        }
    };
    project_map(&mut u, target)?;
    Ok(u)
}

fn require_circle_target(target: &TargetManifold, scenario: &str) -> Result<()> {
    match target {
        TargetManifold::Sphere { .. } => Ok(()),
        _ => Err(Error::Engine(format!("{scenario} scenario needs a sphere target"))),
    }
}

fn constant_map(grid: Grid, target: &TargetManifold) -> EmbeddedField {
    let k = target.ambient_dim();
    let mut point = vec![0.0; k];
    match target {
        TargetManifold::Sphere { .. } => point[k - 1] = 1.0,
        TargetManifold::TorusOfRevolution { major, minor } => {
            point[0] = major + minor;
        }
    }
    EmbeddedField::from_fn(grid, k, |_, _, out| out.copy_from_slice(&point))
}

fn circle_map(grid: Grid, k: usize, theta: impl Fn(f64, f64) -> f64) -> EmbeddedField {
    EmbeddedField::from_fn(grid, k, |x, y, out| {
        let th = theta(x, y);
        out.iter_mut().for_each(|v| *v = 0.0);
        out[0] = th.cos();
        out[1] = th.sin();
    })
}

/// Degree-1 bubble: inverse stereographic projection of (offset / scale),
/// blended to the north pole away from the center so the map is smooth on the
/// torus. Carries energy close to 4 pi concentrated at the center.
fn bump_map(grid: Grid, center: (f64, f64), scale: f64) -> EmbeddedField {
    EmbeddedField::from_fn(grid, 3, |x, y, out| {
        let (dx, dy) = grid.min_image(x - center.0, y - center.1);
        let rho = (dx * dx + dy * dy).sqrt();
        let w = (dx / scale, dy / scale);
        let w2 = w.0 * w.0 + w.1 * w.1;
        let denom = 1.0 + w2;
        let bubble = [2.0 * w.0 / denom, 2.0 * w.1 / denom, (w2 - 1.0) / denom];
        let pole = [0.0, 0.0, 1.0];
        let chi = blend(rho);
        let mut v = [0.0; 3];
        let mut norm = 0.0;
        for c in 0..3 {
            v[c] = chi * bubble[c] + (1.0 - chi) * pole[c];
            norm += v[c] * v[c];
        }
        let norm = norm.sqrt().max(1e-300);
        for c in 0..3 {
            out[c] = v[c] / norm;
        }
    })
}

/// 1 inside the inner radius, smooth cosine taper to 0 at the outer radius.
fn blend(rho: f64) -> f64 {
    if rho <= BUMP_BLEND_INNER {
        1.0
    } else if rho >= BUMP_BLEND_OUTER {
        0.0
    } else {
        let s = (rho - BUMP_BLEND_INNER) / (BUMP_BLEND_OUTER - BUMP_BLEND_INNER);
        (0.5 * PI * s).cos().powi(2)
    }
}

/// Smooth deterministic perturbation field with sup norm eps: a few low
/// Fourier modes with seeded coefficients, then rescaled.
pub fn perturbation_field(grid: Grid, dim: usize, eps: f64, seed: u64) -> EmbeddedField {
    let mut rng = SimRng::new(seed.wrapping_mul(0x9E37_79B9).wrapping_add(1));
    let mut modes = Vec::new();
    for m in 0..=2i32 {
        for n in -2..=2i32 {
            if m == 0 && n <= 0 {
                continue;
            }
            for _ in 0..dim {
                modes.push((m as f64, n as f64, rng.symmetric(), rng.symmetric()));
            }
        }
    }
    let per_comp = modes.len() / dim;
    let mut v = EmbeddedField::from_fn(grid, dim, |x, y, out| {
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (m, n, alpha, beta) in &modes[c * per_comp..(c + 1) * per_comp] {
                let phase = 2.0 * PI * (m * x + n * y);
                acc += alpha * phase.sin() + beta * phase.cos();
            }
            *o = acc;
        }
    });
    let sup = v.data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if sup > 0.0 {
        let s = eps / sup;
        v.data.iter_mut().for_each(|x| *x *= s);
    }
    v
}
