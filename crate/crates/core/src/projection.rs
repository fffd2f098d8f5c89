//! L^2-orthogonal projection onto the horizontal space H(g) of a flat torus:
//! trace-free divergence-free symmetric tensors, i.e. real parts of constant
//! quadratic differentials phi dz^2.
//!
//! Two independent routes are provided and cross-validated:
//!   * orthonormal-basis route: P k = sum_j <k, Theta^j> Theta^j;
//!   * decomposition route: k = P + mu g + L_X g with X from an elliptic solve
//!     of the trace-free part, then mu from the trace condition.

use crate::elliptic::{cg, iteration_cap, CgOutcome, KernelBasis};
use crate::error::{Error, Result};
use crate::grid::{ScalarField, VectorField2};
use crate::metric::MetricField;
use crate::rng::SimRng;
use crate::tensor::{divergence, inner_l2, lie_derivative, tensor_l1_norm, tensor_l2_norm, trace, SymTensorField};

pub const ELLIPTIC_RTOL: f64 = 1e-10;

/// Relative kernel moment above which a right side is rejected as incompatible.
pub const KILLING_MOMENT_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct HorizontalBasis {
    pub theta: [SymTensorField; 2],
    /// Gram matrix of the raw tensors Re(dz^2), Re(-i dz^2) before orthonormalization.
    pub gram: [[f64; 2]; 2],
}

/// Orthonormal basis of H(g) from Gram-Schmidt on {Re(dz^2), Re(-i dz^2)}.
pub fn horizontal_basis(g: &MetricField) -> Result<HorizontalBasis> {
    let tp = g.require_teich()?;
    let (a, b) = (tp.a, tp.b);
    // Re(dz^2) and Re(-i dz^2) for dz = dx + (a + i b) dy
    let raw1 = SymTensorField::constant(g.grid, 1.0, a, a * a - b * b);
    let raw2 = SymTensorField::constant(g.grid, 0.0, b, 2.0 * a * b);
    let g11 = inner_l2(g, &raw1, &raw1)?;
    let g12 = inner_l2(g, &raw1, &raw2)?;
    let g22 = inner_l2(g, &raw2, &raw2)?;
    let gram = [[g11, g12], [g12, g22]];

    let mut theta1 = raw1.scaled(1.0 / g11.sqrt());
    let c = inner_l2(g, &raw2, &theta1)?;
    let mut theta2 = raw2;
    theta2.axpy(-c, &theta1);
    let n2 = tensor_l2_norm(g, &theta2)?;
    theta2 = theta2.scaled(1.0 / n2);
    // re-normalize theta1 defensively against quadrature rounding
    let n1 = tensor_l2_norm(g, &theta1)?;
    theta1 = theta1.scaled(1.0 / n1);
    Ok(HorizontalBasis { theta: [theta1, theta2], gram })
}

/// Coefficients <k, Theta^j>.
pub fn basis_coefficients(g: &MetricField, basis: &HorizontalBasis, k: &SymTensorField) -> Result<[f64; 2]> {
    Ok([inner_l2(g, k, &basis.theta[0])?, inner_l2(g, k, &basis.theta[1])?])
}

/// P_g(k) via the orthonormal basis.
pub fn project_basis(g: &MetricField, k: &SymTensorField) -> Result<SymTensorField> {
    let basis = horizontal_basis(g)?;
    project_basis_with(g, &basis, k)
}

pub fn project_basis_with(g: &MetricField, basis: &HorizontalBasis, k: &SymTensorField) -> Result<SymTensorField> {
    let c = basis_coefficients(g, basis, k)?;
    let mut out = basis.theta[0].scaled(c[0]);
    out.axpy(c[1], &basis.theta[1]);
    Ok(out)
}

/// Solve delta_g delta_g^* X = Y (delta^* X = -L_X g) for a mean-free vector
/// field. Y must be orthogonal to the Killing fields (constants).
pub fn solve_vector_elliptic(g: &MetricField, y: &VectorField2) -> Result<(VectorField2, CgOutcome)> {
    g.grid.same(&y.grid, "solve_vector_elliptic")?;
    let grid = g.grid;
    let n = grid.cells();
    let dot = vector_dot(g);
    let kernel = KernelBasis::build(&grid, 2, n, &dot);

    let mut b = flatten(y);
    // reject constant (Killing) components, silently remove checkerboard artifacts
    let ynorm = dot(&b, &b).max(0.0).sqrt();
    if ynorm > 0.0 {
        let const_basis = constant_killing_basis(g, &dot);
        let mut worst = 0.0f64;
        for e in &const_basis {
            worst = worst.max(dot(&b, e).abs() / ynorm);
        }
        if worst > KILLING_MOMENT_TOL {
            return Err(Error::RhsNotCompatible { moment: worst });
        }
    }
    kernel.project_out(&mut b, &dot);

    let mut apply = |x: &[f64], out: &mut [f64]| {
        let xf = unflatten(&grid, x);
        let lie = lie_derivative(g, &xf).expect("shapes fixed");
        let div = divergence(g, &lie).expect("shapes fixed");
        // delta_g(delta_g^* X) = -delta_g(L_X g)
        for c in 0..n {
            out[c] = -div.x[c];
            out[n + c] = -div.y[c];
        }
    };
    let mut x = vec![0.0; 2 * n];
    let outcome = cg(&mut apply, &dot, &b, &mut x, ELLIPTIC_RTOL, iteration_cap(&grid))?;
    kernel.project_out(&mut x, &dot);
    Ok((unflatten(&grid, &x), outcome))
}

/// Full decomposition k = P + mu g + L_X g with tr_g P = 0 and div_g P = 0.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub p: SymTensorField,
    pub mu: ScalarField,
    pub x: VectorField2,
    pub solver: CgOutcome,
}

/// The elliptic step solves the divergence condition for the *trace-free*
/// part of L_X g (the conformal Killing operator): with CK(X) := L_X g -
/// (1/2) tr_g(L_X g) g, the condition div_g(k - mu g - L_X g) = 0 becomes
/// div_g CK(X) = div_g(k - (1/2) tr_g(k) g), which for constant flat metrics
/// decouples into two scalar Poisson equations. mu then follows from the
/// trace condition.
pub fn project_decomposition(g: &MetricField, k: &SymTensorField) -> Result<Decomposition> {
    g.grid.same(&k.grid, "project_decomposition")?;
    let grid = g.grid;
    let n = grid.cells();

    let tr_k = trace(g, k)?;
    let sigma = ScalarField { grid, data: tr_k.data.iter().map(|v| 0.5 * v).collect() };
    let ktf = k.sub_scalar_times_metric(&sigma, g);
    let y = divergence(g, &ktf)?;

    let (x, solver) = if g.teich.is_some() {
        // constant metric: div_g(CK(X)) = 2 Lap_g X component-wise
        let rhs_x = ScalarField { grid, data: y.x.iter().map(|v| -0.5 * v).collect() };
        let rhs_y = ScalarField { grid, data: y.y.iter().map(|v| -0.5 * v).collect() };
        let (sx, ox) = crate::elliptic::solve_scalar_poisson(g, &rhs_x, ELLIPTIC_RTOL)?;
        let (sy, oy) = crate::elliptic::solve_scalar_poisson(g, &rhs_y, ELLIPTIC_RTOL)?;
        let x = VectorField2 { grid, x: sx.data, y: sy.data };
        let solver = CgOutcome {
            iterations: ox.iterations + oy.iterations,
            rel_residual: ox.rel_residual.max(oy.rel_residual),
        };
        (x, solver)
    } else {
        // generic metric: CG on X -> -div_g(CK(X)), SPD in the vector product
        let dot = vector_dot(g);
        let kernel = KernelBasis::build(&grid, 2, n, &dot);
        let mut b = flatten(&y);
        for v in b.iter_mut() {
            *v = -*v;
        }
        kernel.project_out(&mut b, &dot);
        let mut apply = |xs: &[f64], out: &mut [f64]| {
            let xf = unflatten(&grid, xs);
            let ck = conformal_killing(g, &xf).expect("shapes fixed");
            let div = divergence(g, &ck).expect("shapes fixed");
            for c in 0..n {
                out[c] = -div.x[c];
                out[n + c] = -div.y[c];
            }
        };
        let mut xs = vec![0.0; 2 * n];
        let outcome = cg(&mut apply, &dot, &b, &mut xs, ELLIPTIC_RTOL, iteration_cap(&grid))?;
        kernel.project_out(&mut xs, &dot);
        (unflatten(&grid, &xs), outcome)
    };

    let lie = lie_derivative(g, &x)?;
    let tr_lie = trace(g, &lie)?;
    let mut mu = ScalarField::zeros(grid);
    for c in 0..n {
        mu.data[c] = sigma.data[c] - 0.5 * tr_lie.data[c];
    }
    let mut p = k.clone();
    for c in 0..n {
        p.s11[c] -= mu.data[c] * g.g11[c] + lie.s11[c];
        p.s12[c] -= mu.data[c] * g.g12[c] + lie.s12[c];
        p.s22[c] -= mu.data[c] * g.g22[c] + lie.s22[c];
    }
    Ok(Decomposition { p, mu, x, solver })
}

/// Trace-free part of the Lie derivative (conformal Killing operator).
pub fn conformal_killing(g: &MetricField, x: &VectorField2) -> Result<SymTensorField> {
    let lie = lie_derivative(g, x)?;
    let tr = trace(g, &lie)?;
    let half = ScalarField { grid: g.grid, data: tr.data.iter().map(|v| 0.5 * v).collect() };
    Ok(lie.sub_scalar_times_metric(&half, g))
}

fn vector_dot(g: &MetricField) -> impl Fn(&[f64], &[f64]) -> f64 {
    let n = g.grid.cells();
    let area = g.grid.cell_area();
    let mut w11 = Vec::with_capacity(n);
    let mut w12 = Vec::with_capacity(n);
    let mut w22 = Vec::with_capacity(n);
    for c in 0..n {
        let sd = g.sqrt_det(c) * area;
        w11.push(g.g11[c] * sd);
        w12.push(g.g12[c] * sd);
        w22.push(g.g22[c] * sd);
    }
    move |a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for c in 0..n {
            acc += w11[c] * a[c] * b[c] + w12[c] * (a[c] * b[n + c] + a[n + c] * b[c]) + w22[c] * a[n + c] * b[n + c];
        }
        acc
    }
}

fn constant_killing_basis(g: &MetricField, dot: &dyn Fn(&[f64], &[f64]) -> f64) -> Vec<Vec<f64>> {
    let n = g.grid.cells();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for block in 0..2 {
        let mut v = vec![0.0; 2 * n];
        v[block * n..(block + 1) * n].iter_mut().for_each(|x| *x = 1.0);
        for e in &out {
            let c = dot(&v, e);
            for i in 0..v.len() {
                v[i] -= c * e[i];
            }
        }
        let norm = dot(&v, &v).max(0.0).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

fn flatten(v: &VectorField2) -> Vec<f64> {
    let n = v.grid.cells();
    let mut out = vec![0.0; 2 * n];
    out[..n].copy_from_slice(&v.x);
    out[n..].copy_from_slice(&v.y);
    out
}

fn unflatten(grid: &crate::grid::Grid, flat: &[f64]) -> VectorField2 {
    let n = grid.cells();
    VectorField2 { grid: *grid, x: flat[..n].to_vec(), y: flat[n..].to_vec() }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct LipschitzProbeReport {
    pub samples: usize,
    pub param_distance: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub max_numerator: f64,
}

/// Empirical Lipschitz ratio ||P_{g1} k - P_{g2} k|| / (|params1 - params2| ||k||_{L^1})
/// over random tensor fields. Reported, never asserted against a constant.
pub fn projection_lipschitz_probe(
    g1: &MetricField,
    g2: &MetricField,
    samples: usize,
    seed: u64,
) -> Result<LipschitzProbeReport> {
    g1.grid.same(&g2.grid, "projection_lipschitz_probe")?;
    let t1 = g1.require_teich()?;
    let t2 = g2.require_teich()?;
    let dparam = ((t1.a - t2.a).powi(2) + (t1.b - t2.b).powi(2)).sqrt();
    let b1 = horizontal_basis(g1)?;
    let b2 = horizontal_basis(g2)?;
    let mut rng = SimRng::new(seed);
    let mut max_ratio = 0.0f64;
    let mut sum_ratio = 0.0f64;
    let mut max_num = 0.0f64;
    for _ in 0..samples {
        let k = SymTensorField::random_smooth(g1.grid, &mut rng);
        let p1 = project_basis_with(g1, &b1, &k)?;
        let p2 = project_basis_with(g2, &b2, &k)?;
        let mut diff = p1.clone();
        diff.axpy(-1.0, &p2);
        let num = tensor_l2_norm(g1, &diff)?;
        max_num = max_num.max(num);
        if dparam > 0.0 {
            let den = dparam * tensor_l1_norm(g1, &k)?;
            let ratio = num / den;
            max_ratio = max_ratio.max(ratio);
            sum_ratio += ratio;
        }
    }
    Ok(LipschitzProbeReport {
        samples,
        param_distance: dparam,
        max_ratio,
        mean_ratio: if samples > 0 && dparam > 0.0 { sum_ratio / samples as f64 } else { 0.0 },
        max_numerator: max_num,
    })
}
