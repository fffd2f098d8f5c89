//! Flat torus metrics: Teichmueller parameters and per-cell metric fields.
//!
//! The unit-area flat metric for parameters (a, b), b > 0, is
//!     g = (1/b) [[1, a], [a, a^2 + b^2]],
//! i.e. g = (1/b) |dx + omega dy|^2 with omega = a + i b, det g = 1.

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const SYSTOLE_LATTICE_RANGE: i64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TeichParams {
    pub a: f64,
    pub b: f64,
}

impl TeichParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidTeichParams(format!("(a, b) = ({a}, {b}) requires finite a and b > 0")));
        }
        Ok(Self { a, b })
    }

    pub fn square() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    /// Metric components (g11, g12, g22).
    #[inline]
    pub fn components(&self) -> (f64, f64, f64) {
        let (a, b) = (self.a, self.b);
        (1.0 / b, a / b, (a * a + b * b) / b)
    }

    /// Length of the shortest closed geodesic of the unit-area torus:
    /// min over nonzero lattice vectors m + n*omega of |m + n*omega| / sqrt(b).
    pub fn systole(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        let mut min_sq = f64::INFINITY;
        for m in -SYSTOLE_LATTICE_RANGE..=SYSTOLE_LATTICE_RANGE {
            for n in -SYSTOLE_LATTICE_RANGE..=SYSTOLE_LATTICE_RANGE {
                if m == 0 && n == 0 {
                    continue;
                }
                let re = m as f64 + n as f64 * a;
                let im = n as f64 * b;
                min_sq = min_sq.min(re * re + im * im);
            }
        }
        (min_sq / b).sqrt()
    }

    /// d(g)/da as a constant symmetric tensor (components 11, 12, 22).
    pub fn d_da(&self) -> (f64, f64, f64) {
        let (a, b) = (self.a, self.b);
        (0.0, 1.0 / b, 2.0 * a / b)
    }

    /// d(g)/db as a constant symmetric tensor.
    pub fn d_db(&self) -> (f64, f64, f64) {
        let (a, b) = (self.a, self.b);
        (-1.0 / (b * b), -a / (b * b), (b * b - a * a) / (b * b))
    }

    /// Invert a constant unit-determinant metric tensor back to parameters.
    pub fn from_unit_det_components(g11: f64, g12: f64) -> Result<Self> {
        if g11 <= 0.0 {
            return Err(Error::InvalidTeichParams(format!("g11 = {g11} must be positive")));
        }
        TeichParams::new(g12 / g11, 1.0 / g11)
    }
}

#[derive(Clone, Debug)]
pub struct MetricField {
    pub grid: Grid,
    pub g11: Vec<f64>,
    pub g12: Vec<f64>,
    pub g22: Vec<f64>,
    /// Present when the field is the constant unit-area flat metric g(a, b).
    pub teich: Option<TeichParams>,
}

impl MetricField {
    pub fn flat(grid: Grid, tp: TeichParams) -> Self {
        let (g11, g12, g22) = tp.components();
        let n = grid.cells();
        Self {
            grid,
            g11: vec![g11; n],
            g12: vec![g12; n],
            g22: vec![g22; n],
            teich: Some(tp),
        }
    }

    pub fn from_components(grid: Grid, g11: Vec<f64>, g12: Vec<f64>, g22: Vec<f64>) -> Result<Self> {
        let n = grid.cells();
        if g11.len() != n || g12.len() != n || g22.len() != n {
            return Err(Error::ShapeMismatch("metric component extents".into()));
        }
        let m = Self { grid, g11, g12, g22, teich: None };
        m.check_spd()?;
        Ok(m)
    }

    pub fn check_spd(&self) -> Result<()> {
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let c = self.grid.idx(i, j);
                if !self.cell_is_spd(c) {
                    return Err(Error::NonSpdMetric { i, j });
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn cell_is_spd(&self, c: usize) -> bool {
        let det = self.g11[c] * self.g22[c] - self.g12[c] * self.g12[c];
        self.g11[c] > 0.0 && det > 0.0 && det.is_finite()
    }

    #[inline]
    pub fn det(&self, c: usize) -> f64 {
        self.g11[c] * self.g22[c] - self.g12[c] * self.g12[c]
    }

    #[inline]
    pub fn sqrt_det(&self, c: usize) -> f64 {
        self.det(c).sqrt()
    }

    /// Inverse metric components (g^11, g^12, g^22) at a cell.
    #[inline]
    pub fn inv(&self, c: usize) -> (f64, f64, f64) {
        let det = self.det(c);
        (self.g22[c] / det, -self.g12[c] / det, self.g11[c] / det)
    }

    pub fn require_teich(&self) -> Result<TeichParams> {
        self.teich.ok_or(Error::MissingTeichParams)
    }

    pub fn systole(&self) -> Result<f64> {
        Ok(self.require_teich()?.systole())
    }

    /// Torus distance between two points under this (flat) metric:
    /// per-axis minimal image, then minimum over the 9 nearest lattice translates.
    pub fn torus_distance(&self, p: (f64, f64), q: (f64, f64)) -> Result<f64> {
        let tp = self.require_teich()?;
        let (g11, g12, g22) = tp.components();
        let (dx, dy) = self.grid.min_image(p.0 - q.0, p.1 - q.1);
        let mut best = f64::INFINITY;
        for m in -1i64..=1 {
            for n in -1i64..=1 {
                let vx = dx + m as f64;
                let vy = dy + n as f64;
                let d2 = g11 * vx * vx + 2.0 * g12 * vx * vy + g22 * vy * vy;
                best = best.min(d2);
            }
        }
        Ok(best.sqrt())
    }

    /// Cell offsets (di, dj) whose centers lie within metric distance r of a
    /// reference center. Valid for constant metrics (translation invariant).
    pub fn ball_offsets(&self, r: f64) -> Result<Vec<(isize, isize)>> {
        self.require_teich()?;
        let g = &self.grid;
        let mut offsets = Vec::new();
        for dj in 0..g.ny as isize {
            for di in 0..g.nx as isize {
                let d = self.torus_distance((di as f64 * g.hx, dj as f64 * g.hy), (0.0, 0.0))?;
                if d < r {
                    offsets.push((di, dj));
                }
            }
        }
        Ok(offsets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn unit_determinant() {
        for (a, b) in [(0.0, 1.0), (0.3, 0.7), (-1.2, 2.5), (0.5, 3.0_f64.sqrt() / 2.0)] {
            let tp = TeichParams::new(a, b).unwrap();
            let (g11, g12, g22) = tp.components();
            assert!((g11 * g22 - g12 * g12 - 1.0).abs() < 1e-12, "det != 1 for ({a}, {b})");
        }
    }

    #[test]
    fn rejects_nonpositive_b() {
        assert!(TeichParams::new(0.0, 0.0).is_err());
        assert!(TeichParams::new(0.0, -1.0).is_err());
    }

    #[test]
    fn systole_square_and_tall_torus() {
        assert!((TeichParams::new(0.0, 1.0).unwrap().systole() - 1.0).abs() < 1e-12);
        assert!((TeichParams::new(0.0, 4.0).unwrap().systole() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn systole_hexagonal_torus() {
        let tp = TeichParams::new(0.5, 3.0_f64.sqrt() / 2.0).unwrap();
        let expected = (2.0 / 3.0_f64.sqrt()).sqrt();
        assert!((tp.systole() - expected).abs() < 1e-10);
        assert!((expected - 1.07457).abs() < 1e-4);
    }

    #[test]
    fn tangent_tensors_are_trace_free() {
        // tr_g(dg/da) = tr_g(dg/db) = 0 along the unit-determinant family
        for (a, b) in [(0.0, 1.0), (0.4, 1.7)] {
            let tp = TeichParams::new(a, b).unwrap();
            let (g11, g12, g22) = tp.components();
            let det = g11 * g22 - g12 * g12;
            let (i11, i12, i22) = (g22 / det, -g12 / det, g11 / det);
            for (t11, t12, t22) in [tp.d_da(), tp.d_db()] {
                let tr = i11 * t11 + 2.0 * i12 * t12 + i22 * t22;
                assert!(tr.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_params_components() {
        let tp = TeichParams::new(-0.7, 1.9).unwrap();
        let (g11, g12, _) = tp.components();
        let back = TeichParams::from_unit_det_components(g11, g12).unwrap();
        assert!((back.a - tp.a).abs() < 1e-14);
        assert!((back.b - tp.b).abs() < 1e-14);
    }

    #[test]
    fn spd_check_reports_cell() {
        let grid = build_grid(8, 8).unwrap();
        let n = grid.cells();
        let mut g11 = vec![1.0; n];
        let g12 = vec![0.0; n];
        let g22 = vec![1.0; n];
        g11[grid.idx(3, 5)] = -1.0;
        let err = MetricField::from_components(grid, g11, g12, g22).unwrap_err();
        assert!(err.to_string().contains("(3, 5)"));
    }

    #[test]
    fn torus_distance_min_image() {
        let grid = build_grid(8, 8).unwrap();
        let m = MetricField::flat(grid, TeichParams::square());
        let d = m.torus_distance((0.95, 0.0), (0.05, 0.0)).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ball_offsets_square_count() {
        // area of r-ball ~ pi r^2; offsets count times cell area approximates it
        let grid = build_grid(64, 64).unwrap();
        let m = MetricField::flat(grid, TeichParams::square());
        let offs = m.ball_offsets(0.25).unwrap();
        let area = offs.len() as f64 * grid.cell_area();
        assert!((area - std::f64::consts::PI * 0.0625).abs() < 0.01);
    }
}
