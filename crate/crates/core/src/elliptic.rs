//! Matrix-free conjugate-gradient solves on the periodic grid.
//!
//! The centered-difference operators have a discrete kernel beyond the
//! constants: on even grid dimensions the Nyquist checkerboard modes
//! (-1)^i, (-1)^j, (-1)^{i+j} are annihilated as well. Solvers orthogonalize
//! right sides and solutions against the full discrete kernel; the constants
//! are the Killing fields of the flat torus, the checkerboards are stencil
//! artifacts.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::metric::MetricField;
use crate::ops::{laplace_beltrami_into, LaplaceScratch};

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

pub fn iteration_cap(grid: &Grid) -> usize {
    10 * grid.cells()
}

/// Unpreconditioned CG in a caller-supplied inner product. `apply` must be
/// self-adjoint positive semidefinite in `dot`, and `b` consistent.
/// Summation order is fixed, so repeated runs are bit-identical.
pub fn cg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    dot: &dyn Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = dot(b, b).max(0.0).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, rel_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    p.copy_from_slice(&r);
    let mut rs = dot(&r, &r);
    for it in 0..max_iter {
        let rnorm = rs.max(0.0).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok(CgOutcome { iterations: it, rel_residual: rnorm / bnorm });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // numerically singular direction; give up with the current residual
            return Err(Error::SolverBudget { iterations: it, rel_residual: rnorm / bnorm });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    let rel = rs.max(0.0).sqrt() / bnorm;
    if rel <= rtol {
        Ok(CgOutcome { iterations: max_iter, rel_residual: rel })
    } else {
        Err(Error::SolverBudget { iterations: max_iter, rel_residual: rel })
    }
}

/// Orthonormal basis (in a weighted dot) of the discrete kernel modes
/// 1, (-1)^i, (-1)^j, (-1)^{i+j} over `blocks` interleaved components.
pub struct KernelBasis {
    pub vectors: Vec<Vec<f64>>,
}

impl KernelBasis {
    /// `layout(i, j, block, out)` writes the raw mode value into the flat vector.
    pub fn build(grid: &Grid, blocks: usize, block_len: usize, dot: &dyn Fn(&[f64], &[f64]) -> f64) -> Self {
        let mut modes: Vec<Box<dyn Fn(usize, usize) -> f64>> = vec![Box::new(|_, _| 1.0)];
        if grid.nx.is_multiple_of(2) {
            modes.push(Box::new(|i, _| if i % 2 == 0 { 1.0 } else { -1.0 }));
        }
        if grid.ny.is_multiple_of(2) {
            modes.push(Box::new(|_, j| if j % 2 == 0 { 1.0 } else { -1.0 }));
        }
        if grid.nx.is_multiple_of(2) && grid.ny.is_multiple_of(2) {
            modes.push(Box::new(|i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 }));
        }
        let mut raw = Vec::new();
        for block in 0..blocks {
            for mode in &modes {
                let mut v = vec![0.0; blocks * block_len];
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        v[block * block_len + grid.idx(i, j)] = mode(i, j);
                    }
                }
                raw.push(v);
            }
        }
        // modified Gram-Schmidt
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            for e in &vectors {
                let c = dot(&v, e);
                for i in 0..v.len() {
                    v[i] -= c * e[i];
                }
            }
            let norm = dot(&v, &v).max(0.0).sqrt();
            if norm > 1e-12 {
                v.iter_mut().for_each(|x| *x /= norm);
                vectors.push(v);
            }
        }
        KernelBasis { vectors }
    }

    pub fn project_out(&self, x: &mut [f64], dot: &dyn Fn(&[f64], &[f64]) -> f64) {
        for e in &self.vectors {
            let c = dot(x, e);
            for i in 0..x.len() {
                x[i] -= c * e[i];
            }
        }
    }

    /// Largest |<x, e>| / |x| over kernel directions.
    pub fn relative_moment(&self, x: &[f64], dot: &dyn Fn(&[f64], &[f64]) -> f64) -> f64 {
        let xn = dot(x, x).max(0.0).sqrt();
        if xn == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for e in &self.vectors {
            worst = worst.max(dot(x, e).abs() / xn);
        }
        worst
    }
}

/// Solve -Lap_g x = rhs for mean-free x (rhs orthogonalized against the
/// discrete kernel first). Returns the solution and solver stats.
pub fn solve_scalar_poisson(g: &MetricField, rhs: &ScalarField, rtol: f64) -> Result<(ScalarField, CgOutcome)> {
    g.grid.same(&rhs.grid, "solve_scalar_poisson")?;
    let grid = g.grid;
    let n = grid.cells();
    let weights: Vec<f64> = (0..n).map(|c| g.sqrt_det(c) * grid.cell_area()).collect();
    let dot = move |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += a[i] * b[i] * weights[i];
        }
        acc
    };
    let kernel = KernelBasis::build(&grid, 1, n, &dot);
    let mut b = rhs.data.clone();
    kernel.project_out(&mut b, &dot);

    let mut scratch = LaplaceScratch::new(&grid);
    let mut apply = |x: &[f64], out: &mut [f64]| {
        laplace_beltrami_into(g, x, &mut scratch, out);
        out.iter_mut().for_each(|v| *v = -*v);
    };
    let mut x = vec![0.0; n];
    let outcome = cg(&mut apply, &dot, &b, &mut x, rtol, iteration_cap(&grid))?;
    kernel.project_out(&mut x, &dot);
    Ok((ScalarField { grid, data: x }, outcome))
}

/// Solve (id - dt Lap_g) x = rhs; SPD for dt > 0, no kernel handling needed.
pub fn solve_heat_step(
    g: &MetricField,
    dt: f64,
    rhs: &[f64],
    x: &mut [f64],
    rtol: f64,
) -> Result<CgOutcome> {
    let grid = g.grid;
    let n = grid.cells();
    let weights: Vec<f64> = (0..n).map(|c| g.sqrt_det(c) * grid.cell_area()).collect();
    let dot = move |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += a[i] * b[i] * weights[i];
        }
        acc
    };
    let mut scratch = LaplaceScratch::new(&grid);
    let mut lap = vec![0.0; n];
    let mut apply = |v: &[f64], out: &mut [f64]| {
        laplace_beltrami_into(g, v, &mut scratch, &mut lap);
        for i in 0..n {
            out[i] = v[i] - dt * lap[i];
        }
    };
    cg(&mut apply, &dot, rhs, x, rtol, iteration_cap(&grid))
}
