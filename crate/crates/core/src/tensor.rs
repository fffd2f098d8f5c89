//! Symmetric (0,2) tensor calculus: trace, divergence, Lie derivative, the
//! Hopf differential in real-tensor and complex form, and the metric-variation
//! identity for the Dirichlet energy.
//!
//! Sign convention for the divergence: it is *defined* as the adjoint of the
//! Lie derivative under the discrete inner products,
//!     <div_g k, X>_{L^2} = -<k, L_X g>_{L^2},
//! so the adjoint identity holds to rounding for every field.

use crate::error::Result;
use crate::grid::{Grid, ScalarField, VectorField2};
use crate::grid::EmbeddedField;
use crate::metric::{MetricField, TeichParams};
use crate::ops::{dirichlet_energy, energy_density};

#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub grid: Grid,
    pub s11: Vec<f64>,
    pub s12: Vec<f64>,
    pub s22: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(grid: Grid) -> Self {
        let n = grid.cells();
        Self { grid, s11: vec![0.0; n], s12: vec![0.0; n], s22: vec![0.0; n] }
    }

    pub fn constant(grid: Grid, s11: f64, s12: f64, s22: f64) -> Self {
        let n = grid.cells();
        Self { grid, s11: vec![s11; n], s12: vec![s12; n], s22: vec![s22; n] }
    }

    pub fn from_metric(g: &MetricField) -> Self {
        Self { grid: g.grid, s11: g.g11.clone(), s12: g.g12.clone(), s22: g.g22.clone() }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> (f64, f64, f64)) -> Self {
        let mut t = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.idx(i, j);
                let (a, b, d) = f(grid.x(i), grid.y(j));
                t.s11[c] = a;
                t.s12[c] = b;
                t.s22[c] = d;
            }
        }
        t
    }

    pub fn axpy(&mut self, alpha: f64, other: &SymTensorField) {
        for c in 0..self.grid.cells() {
            self.s11[c] += alpha * other.s11[c];
            self.s12[c] += alpha * other.s12[c];
            self.s22[c] += alpha * other.s22[c];
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymTensorField {
        let mut out = self.clone();
        for c in 0..self.grid.cells() {
            out.s11[c] *= alpha;
            out.s12[c] *= alpha;
            out.s22[c] *= alpha;
        }
        out
    }

    /// self - f * g, pointwise scalar multiple of the metric.
    pub fn sub_scalar_times_metric(&self, f: &ScalarField, g: &MetricField) -> SymTensorField {
        let mut out = self.clone();
        for c in 0..self.grid.cells() {
            out.s11[c] -= f.data[c] * g.g11[c];
            out.s12[c] -= f.data[c] * g.g12[c];
            out.s22[c] -= f.data[c] * g.g22[c];
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let m = self.s11.iter().chain(&self.s12).chain(&self.s22);
        m.fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Seeded random tensor with the Nyquist lines filtered out: white noise
    /// smoothed by one 2x2 cell average per component. The centered-difference
    /// calculus is blind to Nyquist modes, so probes use band-limited fields.
    pub fn random_smooth(grid: Grid, rng: &mut crate::rng::SimRng) -> Self {
        let mut t = Self::from_fn(grid, |_, _| (rng.symmetric(), rng.symmetric(), rng.symmetric()));
        for comp in [&mut t.s11, &mut t.s12, &mut t.s22] {
            filter_nyquist(grid, comp);
        }
        t
    }
}

/// 2x2 cell average; its symbol vanishes on both Nyquist lines exactly.
pub(crate) fn filter_nyquist(grid: Grid, data: &mut [f64]) {
    let src = data.to_vec();
    for j in 0..grid.ny {
        let jp = if j + 1 == grid.ny { 0 } else { j + 1 };
        for i in 0..grid.nx {
            let ip = if i + 1 == grid.nx { 0 } else { i + 1 };
            data[grid.idx(i, j)] = 0.25
                * (src[grid.idx(i, j)] + src[grid.idx(ip, j)] + src[grid.idx(i, jp)] + src[grid.idx(ip, jp)]);
        }
    }
}

/// L^2(M, g) inner product of symmetric 2-tensors:
/// integral of g^{ij} g^{lm} k_{il} h_{jm} dv_g.
pub fn inner_l2(g: &MetricField, k: &SymTensorField, h: &SymTensorField) -> Result<f64> {
    g.grid.same(&k.grid, "inner_l2 k")?;
    g.grid.same(&h.grid, "inner_l2 h")?;
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g.grid.cells() {
        acc += contract_cell(g, c, k.s11[c], k.s12[c], k.s22[c], h.s11[c], h.s12[c], h.s22[c]) * g.sqrt_det(c);
    }
    Ok(acc * area)
}

/// tr(g^{-1} k g^{-1} h) at one cell.
#[inline]
#[allow(clippy::too_many_arguments)]
fn contract_cell(g: &MetricField, c: usize, k11: f64, k12: f64, k22: f64, h11: f64, h12: f64, h22: f64) -> f64 {
    let (i11, i12, i22) = g.inv(c);
    // B = g^{-1} k g^{-1}
    let m11 = i11 * k11 + i12 * k12;
    let m12 = i11 * k12 + i12 * k22;
    let m21 = i12 * k11 + i22 * k12;
    let m22 = i12 * k12 + i22 * k22;
    let b11 = m11 * i11 + m12 * i12;
    let b12 = m11 * i12 + m12 * i22;
    let b21 = m21 * i11 + m22 * i12;
    let b22 = m21 * i12 + m22 * i22;
    b11 * h11 + (b12 + b21) * h12 + b22 * h22
}

pub fn tensor_l2_norm(g: &MetricField, k: &SymTensorField) -> Result<f64> {
    Ok(inner_l2(g, k, k)?.max(0.0).sqrt())
}

/// L^1(M, g) norm: integral of |k|_g dv_g with |k|_g the pointwise Frobenius
/// norm in the metric.
pub fn tensor_l1_norm(g: &MetricField, k: &SymTensorField) -> Result<f64> {
    g.grid.same(&k.grid, "tensor_l1_norm")?;
    let area = g.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g.grid.cells() {
        let sq = contract_cell(g, c, k.s11[c], k.s12[c], k.s22[c], k.s11[c], k.s12[c], k.s22[c]);
        acc += sq.max(0.0).sqrt() * g.sqrt_det(c);
    }
    Ok(acc * area)
}

/// Pointwise trace tr_g k = g^{ij} k_{ij}.
pub fn trace(g: &MetricField, k: &SymTensorField) -> Result<ScalarField> {
    g.grid.same(&k.grid, "trace")?;
    let mut out = ScalarField::zeros(g.grid);
    for c in 0..g.grid.cells() {
        let (i11, i12, i22) = g.inv(c);
        out.data[c] = i11 * k.s11[c] + 2.0 * i12 * k.s12[c] + i22 * k.s22[c];
    }
    Ok(out)
}

/// Lie derivative of the metric along X (contravariant components):
/// (L_X g)_{ij} = X^p d_p g_{ij} + g_{pj} d_i X^p + g_{ip} d_j X^p.
pub fn lie_derivative(g: &MetricField, xf: &VectorField2) -> Result<SymTensorField> {
    g.grid.same(&xf.grid, "lie_derivative")?;
    let grid = g.grid;
    let dxx = {
        let f = ScalarField { grid, data: xf.x.clone() };
        (f.dcx(), f.dcy())
    };
    let dyy = {
        let f = ScalarField { grid, data: xf.y.clone() };
        (f.dcx(), f.dcy())
    };
    let (g11x, g11y) = metric_component_gradients(&grid, &g.g11);
    let (g12x, g12y) = metric_component_gradients(&grid, &g.g12);
    let (g22x, g22y) = metric_component_gradients(&grid, &g.g22);

    let mut out = SymTensorField::zeros(grid);
    for c in 0..grid.cells() {
        let (x1, x2) = (xf.x[c], xf.y[c]);
        let (dx1dx, dx1dy) = (dxx.0.data[c], dxx.1.data[c]);
        let (dx2dx, dx2dy) = (dyy.0.data[c], dyy.1.data[c]);
        out.s11[c] = x1 * g11x.data[c] + x2 * g11y.data[c] + 2.0 * (g.g11[c] * dx1dx + g.g12[c] * dx2dx);
        out.s12[c] = x1 * g12x.data[c]
            + x2 * g12y.data[c]
            + (g.g12[c] * dx1dx + g.g22[c] * dx2dx)
            + (g.g11[c] * dx1dy + g.g12[c] * dx2dy);
        out.s22[c] = x1 * g22x.data[c] + x2 * g22y.data[c] + 2.0 * (g.g12[c] * dx1dy + g.g22[c] * dx2dy);
    }
    Ok(out)
}

fn metric_component_gradients(grid: &Grid, comp: &[f64]) -> (ScalarField, ScalarField) {
    let f = ScalarField { grid: *grid, data: comp.to_vec() };
    (f.dcx(), f.dcy())
}

/// Metric divergence of a symmetric tensor, defined as the exact discrete
/// adjoint of X -> -L_X g: <divergence(g, k), X>_vec = -<k, L_X g>.
pub fn divergence(g: &MetricField, k: &SymTensorField) -> Result<VectorField2> {
    g.grid.same(&k.grid, "divergence")?;
    let grid = g.grid;
    let n = grid.cells();

    // A^{jm} = (g^{-1} k g^{-1})^{jm} sqrt(det g)
    let mut a11 = vec![0.0; n];
    let mut a12 = vec![0.0; n];
    let mut a22 = vec![0.0; n];
    for c in 0..n {
        let (i11, i12, i22) = g.inv(c);
        let m11 = i11 * k.s11[c] + i12 * k.s12[c];
        let m12 = i11 * k.s12[c] + i12 * k.s22[c];
        let m21 = i12 * k.s11[c] + i22 * k.s12[c];
        let m22 = i12 * k.s12[c] + i22 * k.s22[c];
        let sd = g.sqrt_det(c);
        a11[c] = (m11 * i11 + m12 * i12) * sd;
        a12[c] = (m11 * i12 + m12 * i22) * sd;
        a22[c] = (m21 * i12 + m22 * i22) * sd;
    }

    // F^j_p = A^{jm} g_{pm}; W_p = A^{jm} Dc_p g_{jm} - 2 Dc_j F^j_p
    let mut f_x_p1 = vec![0.0; n]; // j = x, p = 1
    let mut f_x_p2 = vec![0.0; n];
    let mut f_y_p1 = vec![0.0; n];
    let mut f_y_p2 = vec![0.0; n];
    for c in 0..n {
        f_x_p1[c] = a11[c] * g.g11[c] + a12[c] * g.g12[c];
        f_x_p2[c] = a11[c] * g.g12[c] + a12[c] * g.g22[c];
        f_y_p1[c] = a12[c] * g.g11[c] + a22[c] * g.g12[c];
        f_y_p2[c] = a12[c] * g.g12[c] + a22[c] * g.g22[c];
    }
    let dcx = |v: &Vec<f64>| {
        let f = ScalarField { grid, data: v.clone() };
        f.dcx()
    };
    let dcy = |v: &Vec<f64>| {
        let f = ScalarField { grid, data: v.clone() };
        f.dcy()
    };
    let dfx1 = dcx(&f_x_p1);
    let dfx2 = dcx(&f_x_p2);
    let dfy1 = dcy(&f_y_p1);
    let dfy2 = dcy(&f_y_p2);

    let (g11x, g11y) = metric_component_gradients(&grid, &g.g11);
    let (g12x, g12y) = metric_component_gradients(&grid, &g.g12);
    let (g22x, g22y) = metric_component_gradients(&grid, &g.g22);

    let mut out = VectorField2::zeros(grid);
    for c in 0..n {
        let w1 = a11[c] * g11x.data[c] + 2.0 * a12[c] * g12x.data[c] + a22[c] * g22x.data[c]
            - 2.0 * (dfx1.data[c] + dfy1.data[c]);
        let w2 = a11[c] * g11y.data[c] + 2.0 * a12[c] * g12y.data[c] + a22[c] * g22y.data[c]
            - 2.0 * (dfx2.data[c] + dfy2.data[c]);
        let (i11, i12, i22) = g.inv(c);
        let sd = g.sqrt_det(c);
        out.x[c] = -(i11 * w1 + i12 * w2) / sd;
        out.y[c] = -(i12 * w1 + i22 * w2) / sd;
    }
    Ok(out)
}

/// Real part of the Hopf differential as a symmetric tensor:
/// k(u, g) = 2 u* G_N - 2 e(u, g) g. Trace-free w.r.t. g by construction.
pub fn hopf_real_tensor(u: &EmbeddedField, g: &MetricField) -> Result<SymTensorField> {
    g.grid.same(&u.grid, "hopf_real_tensor")?;
    let e = energy_density(u, g)?;
    let ux = u.dcx();
    let uy = u.dcy();
    let kdim = u.dim;
    let mut out = SymTensorField::zeros(g.grid);
    for c in 0..g.grid.cells() {
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        let (ax, ay) = (&ux.data[c * kdim..(c + 1) * kdim], &uy.data[c * kdim..(c + 1) * kdim]);
        for comp in 0..kdim {
            xx += ax[comp] * ax[comp];
            xy += ax[comp] * ay[comp];
            yy += ay[comp] * ay[comp];
        }
        out.s11[c] = 2.0 * xx - 2.0 * e.data[c] * g.g11[c];
        out.s12[c] = 2.0 * xy - 2.0 * e.data[c] * g.g12[c];
        out.s22[c] = 2.0 * yy - 2.0 * e.data[c] * g.g22[c];
    }
    Ok(out)
}

/// Hopf differential coefficient in the conformal frame dz = dx + omega dy,
/// omega = a + i b, normalized so that Re(phi dz^2) equals hopf_real_tensor.
#[derive(Clone, Debug)]
pub struct QuadDiffField {
    pub grid: Grid,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub teich: TeichParams,
}

impl QuadDiffField {
    /// Re(phi dz^2) as a symmetric tensor.
    pub fn to_real_tensor(&self) -> SymTensorField {
        let (a, b) = (self.teich.a, self.teich.b);
        let mut out = SymTensorField::zeros(self.grid);
        for c in 0..self.grid.cells() {
            let (p, q) = (self.re[c], self.im[c]);
            out.s11[c] = p;
            out.s12[c] = p * a - q * b;
            out.s22[c] = p * (a * a - b * b) - 2.0 * a * b * q;
        }
        out
    }
}

pub fn hopf_complex(u: &EmbeddedField, g: &MetricField) -> Result<QuadDiffField> {
    let tp = g.require_teich()?;
    let k = hopf_real_tensor(u, g)?;
    let (a, b) = (tp.a, tp.b);
    let n = g.grid.cells();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for c in 0..n {
        re[c] = k.s11[c];
        im[c] = (a * k.s11[c] - k.s12[c]) / b;
    }
    Ok(QuadDiffField { grid: g.grid, re, im, teich: tp })
}

#[derive(Clone, Copy, Debug)]
pub struct GradientCheckReport {
    pub finite_difference: f64,
    pub analytic: f64,
    pub gap: f64,
}

/// Compare the centered difference (E(u, g+sl) - E(u, g-sl)) / 2s with the
/// analytic variation -1/4 <Re Phi(u,g), l>_{L^2(M,g)}.
pub fn energy_metric_gradient_check(
    u: &EmbeddedField,
    g: &MetricField,
    l: &SymTensorField,
    s: f64,
) -> Result<GradientCheckReport> {
    g.grid.same(&l.grid, "energy_metric_gradient_check")?;
    let gp = perturbed_metric(g, s, l)?;
    let gm = perturbed_metric(g, -s, l)?;
    let ep = dirichlet_energy(u, &gp)?;
    let em = dirichlet_energy(u, &gm)?;
    let fd = (ep - em) / (2.0 * s);
    let k = hopf_real_tensor(u, g)?;
    let analytic = -0.25 * inner_l2(g, &k, l)?;
    Ok(GradientCheckReport { finite_difference: fd, analytic, gap: (fd - analytic).abs() })
}

fn perturbed_metric(g: &MetricField, s: f64, l: &SymTensorField) -> Result<MetricField> {
    let n = g.grid.cells();
    let mut g11 = Vec::with_capacity(n);
    let mut g12 = Vec::with_capacity(n);
    let mut g22 = Vec::with_capacity(n);
    for c in 0..n {
        g11.push(g.g11[c] + s * l.s11[c]);
        g12.push(g.g12[c] + s * l.s12[c]);
        g22.push(g.g22[c] + s * l.s22[c]);
    }
    MetricField::from_components(g.grid, g11, g12, g22)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::grid::build_grid;
    use crate::ops::vector_l2;
    use crate::rng::SimRng;
    use std::f64::consts::PI;

    fn square_metric(n: usize) -> MetricField {
        MetricField::flat(build_grid(n, n).unwrap(), TeichParams::square())
    }

    fn equator_map(grid: Grid) -> EmbeddedField {
        EmbeddedField::from_fn(grid, 3, |x, _, out| {
            out[0] = (2.0 * PI * x).cos();
            out[1] = (2.0 * PI * x).sin();
            out[2] = 0.0;
        })
    }

    fn random_tensor(grid: Grid, rng: &mut SimRng) -> SymTensorField {
        SymTensorField::from_fn(grid, |_, _| (rng.symmetric(), rng.symmetric(), rng.symmetric()))
    }

    #[test]
    fn inner_l2_metric_with_itself_is_two() {
        let g = square_metric(16);
        let k = SymTensorField::from_metric(&g);
        let v = inner_l2(&g, &k, &k).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        // also for a skew unit-determinant metric: tr(id) = 2 on unit area
        let grid = build_grid(16, 16).unwrap();
        let g2 = MetricField::flat(grid, TeichParams::new(0.8, 1.7).unwrap());
        let k2 = SymTensorField::from_metric(&g2);
        assert!((inner_l2(&g2, &k2, &k2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inner_l2_orthogonal_pair() {
        let g = square_metric(16);
        let k = SymTensorField::constant(g.grid, 1.0, 0.0, -1.0);
        let h = SymTensorField::constant(g.grid, 0.0, 1.0, 0.0);
        assert!(inner_l2(&g, &k, &h).unwrap().abs() < 1e-14);
        let z = SymTensorField::zeros(g.grid);
        assert_eq!(inner_l2(&g, &z, &k).unwrap(), 0.0);
    }

    #[test]
    fn inner_l2_symmetric_positive_definite() {
        let g = square_metric(12);
        let mut rng = SimRng::new(5);
        for _ in 0..20 {
            let k = random_tensor(g.grid, &mut rng);
            let h = random_tensor(g.grid, &mut rng);
            let kh = inner_l2(&g, &k, &h).unwrap();
            let hk = inner_l2(&g, &h, &k).unwrap();
            assert!((kh - hk).abs() < 1e-12 * (1.0 + kh.abs()));
            let kk = inner_l2(&g, &k, &k).unwrap();
            assert!(kk > 0.0);
        }
    }

    #[test]
    fn trace_of_metric_is_two() {
        let grid = build_grid(12, 16).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(0.4, 2.2).unwrap());
        let k = SymTensorField::from_metric(&g);
        let tr = trace(&g, &k).unwrap();
        for v in &tr.data {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lie_derivative_of_constant_field_vanishes() {
        let g = square_metric(16);
        let xf = VectorField2::from_fn(g.grid, |_, _| (0.3, -1.1));
        let l = lie_derivative(&g, &xf).unwrap();
        assert!(l.max_abs() < 1e-14);
    }

    #[test]
    fn lie_derivative_hand_example() {
        // X = (sin 2 pi x, 0), identity metric: L_X g = [[4 pi cos, 0], [0, 0]] + O(h^2)
        let g = square_metric(64);
        let xf = VectorField2::from_fn(g.grid, |x, _| ((2.0 * PI * x).sin(), 0.0));
        let l = lie_derivative(&g, &xf).unwrap();
        let mut err = 0.0f64;
        for j in 0..g.grid.ny {
            for i in 0..g.grid.nx {
                let c = g.grid.idx(i, j);
                let exact = 4.0 * PI * (2.0 * PI * g.grid.x(i)).cos();
                err = err.max((l.s11[c] - exact).abs());
                err = err.max(l.s12[c].abs());
                err = err.max(l.s22[c].abs());
            }
        }
        assert!(err < 4.0 * PI * 0.01, "err = {err}");
    }

    #[test]
    fn divergence_is_exact_adjoint_of_lie() {
        // <div k, X>_vec + <k, L_X g> = 0 to machine precision, random fields,
        // including a spatially varying metric.
        let grid = build_grid(20, 14).unwrap();
        let mut rng = SimRng::new(9);
        let n = grid.cells();
        let mut g11 = vec![0.0; n];
        let mut g12 = vec![0.0; n];
        let mut g22 = vec![0.0; n];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let c = grid.idx(i, j);
                let (x, y) = (grid.x(i), grid.y(j));
                g11[c] = 1.2 + 0.3 * (2.0 * PI * x).sin();
                g12[c] = 0.15 * (2.0 * PI * y).cos();
                g22[c] = 0.9 + 0.2 * (2.0 * PI * (x - y)).sin();
            }
        }
        let g = MetricField::from_components(grid, g11, g12, g22).unwrap();
        for _ in 0..5 {
            let k = random_tensor(grid, &mut rng);
            let xf = VectorField2::from_fn(grid, |_, _| (rng.symmetric(), rng.symmetric()));
            let div = divergence(&g, &k).unwrap();
            let lie = lie_derivative(&g, &xf).unwrap();
            let lhs = vector_l2(&g, &div, &xf);
            let rhs = inner_l2(&g, &k, &lie).unwrap();
            assert!((lhs + rhs).abs() < 1e-12 * (1.0 + rhs.abs()), "lhs {lhs}, rhs {rhs}");
        }
    }

    #[test]
    fn hopf_tensor_equator_and_conformal() {
        let g = square_metric(48);
        let u = equator_map(g.grid);
        let k = hopf_real_tensor(&u, &g).unwrap();
        // diag(4 pi^2, -4 pi^2) up to the discrete-derivative factor
        let s = (2.0 * PI * g.grid.hx).sin() / g.grid.hx;
        let expect = s * s;
        for c in 0..g.grid.cells() {
            assert!((k.s11[c] - expect).abs() < 1e-10 * expect);
            assert!(k.s12[c].abs() < 1e-10 * expect);
            assert!((k.s22[c] + expect).abs() < 1e-10 * expect);
        }
        // constant map -> zero tensor
        let u0 = EmbeddedField::from_fn(g.grid, 3, |_, _, out| out.copy_from_slice(&[0.0, 1.0, 0.0]));
        assert!(hopf_real_tensor(&u0, &g).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn hopf_tensor_trace_free_pointwise() {
        let grid = build_grid(16, 12).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(-0.6, 1.8).unwrap());
        let mut rng = SimRng::new(21);
        let u = EmbeddedField::from_fn(grid, 3, |_, _, out| {
            for v in out.iter_mut() {
                *v = rng.symmetric();
            }
        });
        let k = hopf_real_tensor(&u, &g).unwrap();
        let tr = trace(&g, &k).unwrap();
        assert!(tr.max_abs() < 1e-12, "max |tr| = {}", tr.max_abs());
    }

    #[test]
    fn hopf_vanishes_for_conformal_input() {
        // flat product-torus map into R^4 tuned so that u* G_N = lambda g
        // pointwise, including the discrete derivative factors
        let beta = 1.7;
        let grid = build_grid(48, 40).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(0.0, beta).unwrap());
        let sx = (2.0 * PI * grid.hx).sin() / grid.hx;
        let sy = (2.0 * PI * grid.hy).sin() / grid.hy;
        let (ra, rb) = (1.0, beta * sx / sy);
        let u = EmbeddedField::from_fn(grid, 4, |x, y, out| {
            out[0] = ra * (2.0 * PI * x).cos();
            out[1] = ra * (2.0 * PI * x).sin();
            out[2] = rb * (2.0 * PI * y).cos();
            out[3] = rb * (2.0 * PI * y).sin();
        });
        let k = hopf_real_tensor(&u, &g).unwrap();
        assert!(k.max_abs() < 1e-10 * sx * sx, "conformal input must give zero, got {}", k.max_abs());
    }

    #[test]
    fn hopf_complex_values_and_roundtrip() {
        let g = square_metric(32);
        let u = equator_map(g.grid);
        let phi = hopf_complex(&u, &g).unwrap();
        let s = (2.0 * PI * g.grid.hx).sin() / g.grid.hx;
        for c in 0..g.grid.cells() {
            assert!((phi.re[c] - s * s).abs() < 1e-10 * s * s);
            assert!(phi.im[c].abs() < 1e-10 * s * s);
        }

        // map in the y-cycle: phi = -4 pi^2 (up to discrete factor, hy here)
        let uy = EmbeddedField::from_fn(g.grid, 3, |_, y, out| {
            out[0] = (2.0 * PI * y).cos();
            out[1] = (2.0 * PI * y).sin();
            out[2] = 0.0;
        });
        let phiy = hopf_complex(&uy, &g).unwrap();
        let sy = (2.0 * PI * g.grid.hy).sin() / g.grid.hy;
        for c in 0..g.grid.cells() {
            assert!((phiy.re[c] + sy * sy).abs() < 1e-10 * sy * sy);
            assert!(phiy.im[c].abs() < 1e-10 * sy * sy);
        }

        // frame-consistency roundtrip on a skew torus with a random map
        let grid = build_grid(16, 16).unwrap();
        let gsk = MetricField::flat(grid, TeichParams::new(0.7, 1.3).unwrap());
        let mut rng = SimRng::new(2);
        let ur = EmbeddedField::from_fn(grid, 3, |_, _, out| {
            for v in out.iter_mut() {
                *v = rng.symmetric();
            }
        });
        let k = hopf_real_tensor(&ur, &gsk).unwrap();
        let q = hopf_complex(&ur, &gsk).unwrap();
        let back = q.to_real_tensor();
        let scale = k.max_abs().max(1.0);
        for c in 0..grid.cells() {
            assert!((back.s11[c] - k.s11[c]).abs() < 1e-10 * scale);
            assert!((back.s12[c] - k.s12[c]).abs() < 1e-10 * scale);
            assert!((back.s22[c] - k.s22[c]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn hopf_complex_requires_teich() {
        let grid = build_grid(8, 8).unwrap();
        let n = grid.cells();
        let g = MetricField::from_components(grid, vec![1.0; n], vec![0.0; n], vec![1.0; n]).unwrap();
        let u = equator_map(grid);
        assert!(matches!(hopf_complex(&u, &g), Err(Error::MissingTeichParams)));
    }

    #[test]
    fn gradient_check_equator_order_two() {
        let g = square_metric(32);
        let u = equator_map(g.grid);
        let l = SymTensorField::constant(g.grid, 1.0, 0.0, -1.0);
        let mut gaps = Vec::new();
        for s in [1e-2, 1e-3, 1e-4] {
            let rep = energy_metric_gradient_check(&u, &g, &l, s).unwrap();
            gaps.push(rep.gap);
        }
        // log-log slope between successive s values
        let slope1 = (gaps[0] / gaps[1]).log10();
        let slope2 = (gaps[1] / gaps[2]).log10();
        assert!(slope1 > 1.9 && slope2 > 1.9, "slopes {slope1} {slope2}, gaps {gaps:?}");
    }

    #[test]
    fn gradient_check_trivial_cases() {
        let g = square_metric(16);
        let u0 = EmbeddedField::from_fn(g.grid, 3, |_, _, out| out.copy_from_slice(&[1.0, 0.0, 0.0]));
        let l = SymTensorField::constant(g.grid, 1.0, 0.0, -1.0);
        let rep = energy_metric_gradient_check(&u0, &g, &l, 1e-3).unwrap();
        assert_eq!(rep.finite_difference, 0.0);
        assert_eq!(rep.analytic, 0.0);

        // l = g: analytic side vanishes (trace-free pairing) and the energy is
        // conformally invariant, so the finite difference vanishes too
        let u = equator_map(g.grid);
        let lg = SymTensorField::from_metric(&g);
        let rep = energy_metric_gradient_check(&u, &g, &lg, 1e-3).unwrap();
        assert!(rep.analytic.abs() < 1e-10);
        assert!(rep.gap < 1e-9, "gap = {}", rep.gap);
    }

    #[test]
    fn gradient_check_rejects_non_spd_perturbation() {
        let g = square_metric(16);
        let u = equator_map(g.grid);
        let l = SymTensorField::constant(g.grid, 1.0, 0.0, -1.0);
        assert!(energy_metric_gradient_check(&u, &g, &l, 2.0).is_err());
    }
}
