//! Metric-dependent differential operators, quadrature and energies.
//!
//! Laplace-Beltrami is assembled as Dc_i(sqrt(det g) g^{ij} Dc_j f) / sqrt(det g)
//! from centered differences, so the discrete integration-by-parts identity
//! <Lap f, w>_{dv_g} = -<grad f, grad w>_{g} holds to rounding, not just O(h^2).

use crate::error::{Error, Result};
use crate::grid::{dcx_into, dcy_into, EmbeddedField, Grid, ScalarField, VectorField2};
use crate::metric::MetricField;

/// Scalar L^2(M, dv_g) inner product by midpoint quadrature.
pub fn scalar_l2(g: &MetricField, f: &[f64], w: &[f64]) -> f64 {
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g.grid.cells() {
        acc += f[c] * w[c] * g.sqrt_det(c);
    }
    acc * area
}

/// Vector L^2 inner product: integral of g_{ij} X^i Y^j dv_g.
pub fn vector_l2(g: &MetricField, xf: &VectorField2, yf: &VectorField2) -> f64 {
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g.grid.cells() {
        let v = g.g11[c] * xf.x[c] * yf.x[c]
            + g.g12[c] * (xf.x[c] * yf.y[c] + xf.y[c] * yf.x[c])
            + g.g22[c] * xf.y[c] * yf.y[c];
        acc += v * g.sqrt_det(c);
    }
    acc * area
}

/// Scratch buffers for the Laplace-Beltrami kernel (reused across CG iterations).
pub struct LaplaceScratch {
    dx: Vec<f64>,
    dy: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl LaplaceScratch {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.cells();
        Self { dx: vec![0.0; n], dy: vec![0.0; n], fx: vec![0.0; n], fy: vec![0.0; n] }
    }
}

/// Laplace-Beltrami of a scalar slice, written into `out`.
pub fn laplace_beltrami_into(g: &MetricField, src: &[f64], scratch: &mut LaplaceScratch, out: &mut [f64]) {
    let grid = &g.grid;
    dcx_into(grid, src, &mut scratch.dx);
    dcy_into(grid, src, &mut scratch.dy);
    for c in 0..grid.cells() {
        let (i11, i12, i22) = g.inv(c);
        let sd = g.sqrt_det(c);
        scratch.fx[c] = sd * (i11 * scratch.dx[c] + i12 * scratch.dy[c]);
        scratch.fy[c] = sd * (i12 * scratch.dx[c] + i22 * scratch.dy[c]);
    }
    dcx_into(grid, &scratch.fx, out);
    dcy_into(grid, &scratch.fy, &mut scratch.dx); // reuse dx as temp
    for c in 0..grid.cells() {
        out[c] = (out[c] + scratch.dx[c]) / g.sqrt_det(c);
    }
}

pub fn laplace_beltrami(g: &MetricField, f: &ScalarField) -> Result<ScalarField> {
    g.grid.same(&f.grid, "laplace_beltrami")?;
    g.check_spd()?;
    let mut scratch = LaplaceScratch::new(&g.grid);
    let mut out = ScalarField::zeros(g.grid);
    laplace_beltrami_into(g, &f.data, &mut scratch, &mut out.data);
    Ok(out)
}

/// Component-wise Laplace-Beltrami of a map into R^K.
pub fn laplace_beltrami_embedded(g: &MetricField, u: &EmbeddedField) -> Result<EmbeddedField> {
    g.grid.same(&u.grid, "laplace_beltrami_embedded")?;
    g.check_spd()?;
    let n = g.grid.cells();
    let mut scratch = LaplaceScratch::new(&g.grid);
    let mut comp = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let mut out = EmbeddedField::zeros(g.grid, u.dim);
    for k in 0..u.dim {
        for c in 0..n {
            comp[c] = u.data[c * u.dim + k];
        }
        laplace_beltrami_into(g, &comp, &mut scratch, &mut lap);
        for c in 0..n {
            out.data[c * u.dim + k] = lap[c];
        }
    }
    Ok(out)
}

/// Pointwise energy density e(u, g) = (1/2) g^{ij} du_i . du_j.
pub fn energy_density(u: &EmbeddedField, g: &MetricField) -> Result<ScalarField> {
    g.grid.same(&u.grid, "energy_density")?;
    let ux = u.dcx();
    let uy = u.dcy();
    let mut e = ScalarField::zeros(g.grid);
    let k = u.dim;
    for c in 0..g.grid.cells() {
        let (i11, i12, i22) = g.inv(c);
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        let (ax, ay) = (&ux.data[c * k..(c + 1) * k], &uy.data[c * k..(c + 1) * k]);
        for comp in 0..k {
            xx += ax[comp] * ax[comp];
            xy += ax[comp] * ay[comp];
            yy += ay[comp] * ay[comp];
        }
        e.data[c] = 0.5 * (i11 * xx + 2.0 * i12 * xy + i22 * yy);
    }
    Ok(e)
}

/// Total Dirichlet energy E(u, g) = integral of e(u, g) dv_g.
pub fn dirichlet_energy(u: &EmbeddedField, g: &MetricField) -> Result<f64> {
    let e = energy_density(u, g)?;
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g.grid.cells() {
        acc += e.data[c] * g.sqrt_det(c);
    }
    Ok(acc * area)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cutoff {
    /// Indicator of the metric ball.
    Sharp,
    /// 1 on B_{r/2}, cosine taper to 0 at radius r.
    Smooth,
}

#[derive(Clone, Copy, Debug)]
pub struct LocalEnergyOpts {
    pub cutoff: Cutoff,
    /// Skip the embeddability precondition (diagnostic use, e.g. full-domain sums).
    pub skip_embedding_check: bool,
}

impl Default for LocalEnergyOpts {
    fn default() -> Self {
        Self { cutoff: Cutoff::Sharp, skip_embedding_check: false }
    }
}

/// Dirichlet energy restricted to the metric ball B_r(center).
pub fn local_energy(u: &EmbeddedField, g: &MetricField, center: (f64, f64), r: f64) -> Result<f64> {
    local_energy_opts(u, g, center, r, LocalEnergyOpts::default())
}

pub fn local_energy_opts(
    u: &EmbeddedField,
    g: &MetricField,
    center: (f64, f64),
    r: f64,
    opts: LocalEnergyOpts,
) -> Result<f64> {
    let tp = g.require_teich()?;
    if !opts.skip_embedding_check {
        let half_sys = 0.5 * tp.systole();
        if !(r > 0.0 && r < half_sys) {
            return Err(Error::BallNotEmbedded { radius: r, half_systole: half_sys });
        }
    }
    let e = energy_density(u, g)?;
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for j in 0..g.grid.ny {
        for i in 0..g.grid.nx {
            let c = g.grid.idx(i, j);
            let d = g.torus_distance((g.grid.x(i), g.grid.y(j)), center)?;
            let w = match opts.cutoff {
                Cutoff::Sharp => {
                    if d < r {
                        1.0
                    } else {
                        0.0
                    }
                }
                Cutoff::Smooth => {
                    if d <= 0.5 * r {
                        1.0
                    } else if d < r {
                        let s = (d - 0.5 * r) / (0.5 * r);
                        (0.5 * std::f64::consts::PI * s).cos().powi(2)
                    } else {
                        0.0
                    }
                }
            };
            if w > 0.0 {
                acc += w * e.data[c] * g.sqrt_det(c);
            }
        }
    }
    Ok(acc * area)
}

/// Local energies at every cell center by convolution with precomputed ball offsets.
pub fn local_energy_scan(e_density: &ScalarField, g: &MetricField, offsets: &[(isize, isize)]) -> ScalarField {
    let grid = &g.grid;
    let area = grid.cell_area();
    let mut out = ScalarField::zeros(*grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let mut acc = 0.0;
            for &(di, dj) in offsets {
                let ii = grid.wrap_x(i as isize + di);
                let jj = grid.wrap_y(j as isize + dj);
                let c = grid.idx(ii, jj);
                acc += e_density.data[c] * g.sqrt_det(c);
            }
            out.data[grid.idx(i, j)] = acc * area;
        }
    }
    out
}
