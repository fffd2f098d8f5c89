//! Periodic structured grid on the unit square and the field types living on it.
//!
//! Values are cell-centered: cell (i, j) sits at ((i + 1/2) hx, (j + 1/2) hy).
//! All derivative operators are second-order centered differences with exact
//! periodic wrap-around, so discrete summation by parts holds to rounding.

use crate::error::{Error, Result};

pub const MIN_CELLS_PER_AXIS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> Result<Grid> {
        if nx < MIN_CELLS_PER_AXIS || ny < MIN_CELLS_PER_AXIS {
            return Err(Error::GridTooCoarse { nx, ny });
        }
        Ok(Grid { nx, ny, hx: 1.0 / nx as f64, hy: 1.0 / ny as f64 })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Cell-center coordinates.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    #[inline]
    pub fn wrap_x(&self, i: isize) -> usize {
        i.rem_euclid(self.nx as isize) as usize
    }

    #[inline]
    pub fn wrap_y(&self, j: isize) -> usize {
        j.rem_euclid(self.ny as isize) as usize
    }

    /// Per-axis minimal-image offset, each component reduced to [-1/2, 1/2).
    #[inline]
    pub fn min_image(&self, dx: f64, dy: f64) -> (f64, f64) {
        (dx - (dx + 0.5).floor(), dy - (dy + 0.5).floor())
    }

    pub fn same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }
}

pub fn build_grid(nx: usize, ny: usize) -> Result<Grid> {
    Grid::new(nx, ny)
}

/// Centered x-difference of a scalar slice (periodic), written into `out`.
pub fn dcx_into(grid: &Grid, src: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv2h = 1.0 / (2.0 * grid.hx);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let ip = if i + 1 == nx { 0 } else { i + 1 };
            let im = if i == 0 { nx - 1 } else { i - 1 };
            out[row + i] = (src[row + ip] - src[row + im]) * inv2h;
        }
    }
}

/// Centered y-difference of a scalar slice (periodic), written into `out`.
pub fn dcy_into(grid: &Grid, src: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv2h = 1.0 / (2.0 * grid.hy);
    for j in 0..ny {
        let jp = if j + 1 == ny { 0 } else { j + 1 };
        let jm = if j == 0 { ny - 1 } else { j - 1 };
        let (rp, rm, row) = (jp * nx, jm * nx, j * nx);
        for i in 0..nx {
            out[row + i] = (src[rp + i] - src[rm + i]) * inv2h;
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, data: vec![0.0; grid.cells()] }
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        Self { grid, data: vec![v; grid.cells()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.cells()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data[grid.idx(i, j)] = f(grid.x(i), grid.y(j));
            }
        }
        Self { grid, data }
    }

    pub fn dcx(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        dcx_into(&self.grid, &self.data, &mut out.data);
        out
    }

    pub fn dcy(&self) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        dcy_into(&self.grid, &self.data, &mut out.data);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct VectorField2 {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField2 {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.cells();
        Self { grid, x: vec![0.0; n], y: vec![0.0; n] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut v = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (vx, vy) = f(grid.x(i), grid.y(j));
                let c = grid.idx(i, j);
                v.x[c] = vx;
                v.y[c] = vy;
            }
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        let mx = self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.y.iter().fold(mx, |m, v| m.max(v.abs()))
    }
}

/// Map into R^K, stored cell-major: `data[cell * dim + component]`.
#[derive(Clone, Debug)]
pub struct EmbeddedField {
    pub grid: Grid,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl EmbeddedField {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self { grid, dim, data: vec![0.0; grid.cells() * dim] }
    }

    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, f64, &mut [f64])) -> Self {
        let mut u = Self::zeros(grid, dim);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.idx(i, j);
                f(grid.x(i), grid.y(j), &mut u.data[c * dim..(c + 1) * dim]);
            }
        }
        u
    }

    #[inline]
    pub fn at(&self, cell: usize) -> &[f64] {
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    /// Centered x-difference, component-wise.
    pub fn dcx(&self) -> EmbeddedField {
        let mut out = EmbeddedField::zeros(self.grid, self.dim);
        let (nx, ny, k) = (self.grid.nx, self.grid.ny, self.dim);
        let inv2h = 1.0 / (2.0 * self.grid.hx);
        for j in 0..ny {
            for i in 0..nx {
                let ip = if i + 1 == nx { 0 } else { i + 1 };
                let im = if i == 0 { nx - 1 } else { i - 1 };
                let (cp, cm, c) = (self.grid.idx(ip, j) * k, self.grid.idx(im, j) * k, self.grid.idx(i, j) * k);
                for comp in 0..k {
                    out.data[c + comp] = (self.data[cp + comp] - self.data[cm + comp]) * inv2h;
                }
            }
        }
        out
    }

    pub fn dcy(&self) -> EmbeddedField {
        let mut out = EmbeddedField::zeros(self.grid, self.dim);
        let (nx, ny, k) = (self.grid.nx, self.grid.ny, self.dim);
        let inv2h = 1.0 / (2.0 * self.grid.hy);
        for j in 0..ny {
            let jp = if j + 1 == ny { 0 } else { j + 1 };
            let jm = if j == 0 { ny - 1 } else { j - 1 };
            for i in 0..nx {
                let (cp, cm, c) = (self.grid.idx(i, jp) * k, self.grid.idx(i, jm) * k, self.grid.idx(i, j) * k);
                for comp in 0..k {
                    out.data[c + comp] = (self.data[cp + comp] - self.data[cm + comp]) * inv2h;
                }
            }
        }
        out
    }

    pub fn sup_distance(&self, other: &EmbeddedField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
