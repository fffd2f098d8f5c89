//! The coupled flow: heat flow of the map paired with the horizontal motion
//! of the flat metric, integrated by a per-step Picard splitting.
//!
//! Per step, the loop alternates (i) an explicit-midpoint substep of the two
//! Teichmueller parameter ODEs driven by the previous map iterate and (ii) a
//! semi-implicit heat substep of the map (implicit Laplace-Beltrami, explicit
//! second-fundamental-form term) followed by reprojection to the target, until
//! successive map iterates agree in the sup norm.

use crate::elliptic::solve_heat_step;
use crate::error::{Error, Result};
use crate::grid::{EmbeddedField, Grid};
use crate::metric::{MetricField, TeichParams};
use crate::ops::{dirichlet_energy, energy_density, local_energy_scan};
use crate::projection::{basis_coefficients, horizontal_basis};
use crate::target::{project_map, second_fundamental_term, tension_field, TargetManifold};
use crate::tensor::hopf_real_tensor;

pub const HEAT_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    /// Coupling constant eta; eta = 0 freezes the metric (plain heat flow).
    pub eta: f64,
    pub picard_iters: usize,
    pub picard_tol: f64,
    /// Concentration threshold epsilon_0.
    pub eps0: f64,
    pub concentration_radii: Vec<f64>,
    /// Locality budget: flag when E(B_2r) <= budget * E(B_r).
    pub locality_budget: f64,
    pub systole_floor: f64,
    pub max_steps: u64,
    pub t_end: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            eta: 2.0,
            picard_iters: 4,
            picard_tol: 1e-11,
            eps0: 0.3,
            concentration_radii: vec![0.05, 0.1, 0.2],
            locality_budget: 1.5,
            systole_floor: 0.05,
            max_steps: 1000,
            t_end: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Engine(format!("invalid flow config: {m}")));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be nonnegative");
        }
        if self.picard_iters == 0 {
            return bad("picard_iters must be at least 1");
        }
        if !(self.picard_tol > 0.0) {
            return bad("picard_tol must be positive");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if self.concentration_radii.iter().any(|r| !(*r > 0.0)) {
            return bad("concentration radii must be positive");
        }
        if !(self.locality_budget >= 1.0) {
            return bad("locality budget must be at least 1");
        }
        if !(self.systole_floor > 0.0) {
            return bad("systole_floor must be positive");
        }
        Ok(())
    }

    /// Per-step energy tolerance for the monotonicity contract.
    pub fn monotonicity_tolerance(&self, energy_before: f64) -> f64 {
        1e-8 * (1.0 + energy_before)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind")]
pub enum Event {
    Halt { step: u64, systole: f64 },
    Concentration { step: u64, points: usize, max_ball_energy: f64 },
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub step: u64,
    pub t: f64,
    pub u: EmbeddedField,
    pub metric: MetricField,
    pub energy: f64,
    pub tension_l2sq: f64,
    pub horiz_hopf_l2sq: f64,
    pub events: Vec<Event>,
}

impl FlowState {
    pub fn halted(&self) -> bool {
        self.events.iter().any(|e| matches!(e, Event::Halt { .. }))
    }
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub picard_gaps: Vec<f64>,
    pub picard_iters_used: usize,
    pub halted: bool,
}

impl StepReport {
    /// Ratios gap_{i+1} / gap_i for gaps above the floor; empty when the
    /// iteration converged immediately.
    pub fn gap_ratios(&self, floor: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for w in self.picard_gaps.windows(2) {
            if w[0] > floor && w[1] > floor {
                out.push(w[1] / w[0]);
            }
        }
        out
    }
}

/// One row of the emitted time series.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub t: f64,
    pub energy: f64,
    pub tension_l2sq: f64,
    pub horiz_hopf_l2sq: f64,
    pub energy_identity_residual: f64,
    pub a: f64,
    pub b: f64,
    pub systole: f64,
    pub max_local_energy: f64,
}

/// dg/dt = (eta^2 / 4) P_g(Re Phi(u, g)) as a tensor field.
pub fn metric_velocity(u: &EmbeddedField, g: &MetricField, eta: f64) -> Result<crate::tensor::SymTensorField> {
    let basis = horizontal_basis(g)?;
    let k = hopf_real_tensor(u, g)?;
    let c = basis_coefficients(g, &basis, &k)?;
    let s = eta * eta / 4.0;
    let mut out = basis.theta[0].scaled(c[0] * s);
    out.axpy(c[1] * s, &basis.theta[1]);
    Ok(out)
}

/// Constant components of the horizontal velocity plus ||P_g k||^2.
#[derive(Clone, Copy, Debug)]
struct HorizontalVelocity {
    v11: f64,
    v12: f64,
    v22: f64,
    hopf_l2sq: f64,
}

pub struct FlowEngine {
    pub grid: Grid,
    pub target: TargetManifold,
    pub cfg: FlowConfig,
}

impl FlowEngine {
    pub fn new(grid: Grid, target: TargetManifold, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { grid, target, cfg })
    }

    pub fn initial_state(&self, u: EmbeddedField, metric: MetricField) -> Result<FlowState> {
        self.grid.same(&u.grid, "initial state map")?;
        self.grid.same(&metric.grid, "initial state metric")?;
        metric.require_teich()?;
        let (energy, tension_l2sq, horiz_hopf_l2sq) = self.diagnostics(&u, &metric)?;
        let mut events = Vec::new();
        let sys = metric.systole()?;
        if sys < self.cfg.systole_floor {
            events.push(Event::Halt { step: 0, systole: sys });
        }
        Ok(FlowState { step: 0, t: 0.0, u, metric, energy, tension_l2sq, horiz_hopf_l2sq, events })
    }

    fn diagnostics(&self, u: &EmbeddedField, metric: &MetricField) -> Result<(f64, f64, f64)> {
        let energy = dirichlet_energy(u, metric)?;
        let tau = tension_field(u, metric, &self.target)?;
        let area = metric.grid.cell_area();
        let mut tension_l2sq = 0.0;
        let k = u.dim;
        for c in 0..metric.grid.cells() {
            let tv = &tau.data[c * k..(c + 1) * k];
            let sq: f64 = tv.iter().map(|v| v * v).sum();
            tension_l2sq += sq * metric.sqrt_det(c);
        }
        tension_l2sq *= area;
        let hv = self.horizontal_velocity(u, metric)?;
        Ok((energy, tension_l2sq, hv.hopf_l2sq))
    }

    fn horizontal_velocity(&self, u: &EmbeddedField, metric: &MetricField) -> Result<HorizontalVelocity> {
        let basis = horizontal_basis(metric)?;
        let k = hopf_real_tensor(u, metric)?;
        let c = basis_coefficients(metric, &basis, &k)?;
        let s = self.cfg.eta * self.cfg.eta / 4.0;
        let t0 = &basis.theta[0];
        let t1 = &basis.theta[1];
        Ok(HorizontalVelocity {
            v11: s * (c[0] * t0.s11[0] + c[1] * t1.s11[0]),
            v12: s * (c[0] * t0.s12[0] + c[1] * t1.s12[0]),
            v22: s * (c[0] * t0.s22[0] + c[1] * t1.s22[0]),
            hopf_l2sq: c[0] * c[0] + c[1] * c[1],
        })
    }

    /// (da/dt, db/dt) from a horizontal velocity tensor at parameters tp:
    /// the 11 and 12 components determine the two scalar ODEs.
    fn params_rate(tp: TeichParams, v: &HorizontalVelocity) -> (f64, f64) {
        let bdot = -tp.b * tp.b * v.v11;
        let adot = tp.b * v.v12 - tp.a * tp.b * v.v11;
        (adot, bdot)
    }

    /// Explicit midpoint step of the parameter ODEs, frozen map iterate.
    pub fn metric_substep_params(&self, u_ref: &EmbeddedField, tp: TeichParams, dt: f64) -> Result<TeichParams> {
        let v1 = self.horizontal_velocity(u_ref, &MetricField::flat(self.grid, tp))?;
        let (adot1, bdot1) = Self::params_rate(tp, &v1);
        let half = TeichParams::new(tp.a + 0.5 * dt * adot1, tp.b + 0.5 * dt * bdot1)
            .map_err(|_| Error::MetricDomain)?;
        let v2 = self.horizontal_velocity(u_ref, &MetricField::flat(self.grid, half))?;
        let (adot2, bdot2) = Self::params_rate(half, &v2);
        TeichParams::new(tp.a + dt * adot2, tp.b + dt * bdot2).map_err(|_| Error::MetricDomain)
    }

    /// Mirror full-tensor midpoint step with determinant renormalization.
    /// Kept for cross-checking the parameter substep.
    pub fn metric_substep_tensor(&self, u_ref: &EmbeddedField, tp: TeichParams, dt: f64) -> Result<(f64, f64, f64)> {
        let (g11, g12, g22) = tp.components();
        let v1 = self.horizontal_velocity(u_ref, &MetricField::flat(self.grid, tp))?;
        let half = renormalize(g11 + 0.5 * dt * v1.v11, g12 + 0.5 * dt * v1.v12, g22 + 0.5 * dt * v1.v22)?;
        let tp_half = TeichParams::from_unit_det_components(half.0, half.1)?;
        let v2 = self.horizontal_velocity(u_ref, &MetricField::flat(self.grid, tp_half))?;
        renormalize(g11 + dt * v2.v11, g12 + dt * v2.v12, g22 + dt * v2.v22)
    }

    /// Semi-implicit heat substep followed by reprojection to the target.
    fn map_substep(
        &self,
        metric_new: &MetricField,
        u_old: &EmbeddedField,
        u_ref: &EmbeddedField,
        dt: f64,
    ) -> Result<EmbeddedField> {
        let aterm = second_fundamental_term(u_ref, metric_new, &self.target)?;
        let n = self.grid.cells();
        let k = u_old.dim;
        let mut u_next = u_old.clone();
        let mut rhs = vec![0.0; n];
        let mut x = vec![0.0; n];
        for comp in 0..k {
            for c in 0..n {
                rhs[c] = u_old.data[c * k + comp] + dt * aterm.data[c * k + comp];
                x[c] = u_old.data[c * k + comp];
            }
            solve_heat_step(metric_new, dt, &rhs, &mut x, HEAT_RTOL)?;
            for c in 0..n {
                u_next.data[c * k + comp] = x[c];
            }
        }
        project_map(&mut u_next, &self.target)?;
        Ok(u_next)
    }

    /// One coupled time step.
    pub fn step(&self, state: &FlowState) -> Result<(FlowState, StepReport)> {
        let dt = self.cfg.dt;
        let tp0 = state.metric.require_teich()?;
        let sup_scale = 1.0 + state.u.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap_floor = self.cfg.picard_tol * sup_scale;
        // rounding jitter near the fixed point must not read as divergence
        let growth_floor = (10.0 * gap_floor).max(1e-12 * sup_scale);

        let mut u_ref = state.u.clone();
        let mut gaps = Vec::new();
        let mut tp_new = tp0;
        let mut metric_new = state.metric.clone();
        let mut iters_used = 0;
        for _ in 0..self.cfg.picard_iters {
            iters_used += 1;
            tp_new = if self.cfg.eta == 0.0 {
                tp0
            } else {
                self.metric_substep_params(&u_ref, tp0, dt)?
            };
            metric_new = MetricField::flat(self.grid, tp_new);
            let u_next = self.map_substep(&metric_new, &state.u, &u_ref, dt)?;
            let gap = u_next.sup_distance(&u_ref);
            if let Some(&prev) = gaps.last() {
                if gap > prev && gap > growth_floor {
                    return Err(Error::DtTooLarge { previous: prev, current: gap });
                }
            }
            gaps.push(gap);
            u_ref = u_next;
            if gap < gap_floor {
                break;
            }
        }

        let (energy, tension_l2sq, horiz_hopf_l2sq) = self.diagnostics(&u_ref, &metric_new)?;
        let mut events = Vec::new();
        let sys = tp_new.systole();
        let halted = sys < self.cfg.systole_floor;
        if halted {
            events.push(Event::Halt { step: state.step + 1, systole: sys });
        }
        let new_state = FlowState {
            step: state.step + 1,
            t: state.t + dt,
            u: u_ref,
            metric: metric_new,
            energy,
            tension_l2sq,
            horiz_hopf_l2sq,
            events,
        };
        Ok((new_state, StepReport { picard_gaps: gaps, picard_iters_used: iters_used, halted }))
    }

    /// Dissipation functional -dE/dt predicted by the flow equations.
    pub fn dissipation(&self, state: &FlowState) -> f64 {
        state.tension_l2sq + self.cfg.eta.powi(2) / 16.0 * state.horiz_hopf_l2sq
    }

    /// |Delta E / dt + mean dissipation| across one accepted step.
    pub fn energy_identity_residual(&self, before: &FlowState, after: &FlowState) -> f64 {
        let dt = after.t - before.t;
        if dt <= 0.0 {
            return 0.0;
        }
        let de = (after.energy - before.energy) / dt;
        let diss = 0.5 * (self.dissipation(before) + self.dissipation(after));
        (de + diss).abs()
    }

    /// Scan for concentration: a cell is flagged at radius r when the r-ball
    /// energy reaches eps0 while the 2r-ball stays within the locality budget.
    pub fn detect_concentration(&self, state: &FlowState) -> Result<ConcentrationReport> {
        let metric = &state.metric;
        let tp = metric.require_teich()?;
        let half_sys = 0.5 * tp.systole();
        let e = energy_density(&state.u, metric)?;
        let mut radii: Vec<f64> = self.cfg.concentration_radii.clone();
        radii.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut report = ConcentrationReport {
            points: Vec::new(),
            radii_scanned: Vec::new(),
            bubble_suspected: false,
            max_ball_energy: 0.0,
        };
        for &r in &radii {
            if !(2.0 * r < half_sys) {
                continue;
            }
            report.radii_scanned.push(r);
            let offs_r = metric.ball_offsets(r)?;
            let offs_2r = metric.ball_offsets(2.0 * r)?;
            let er = local_energy_scan(&e, metric, &offs_r);
            let e2r = local_energy_scan(&e, metric, &offs_2r);
            report.max_ball_energy = report.max_ball_energy.max(er.data.iter().cloned().fold(0.0, f64::max));
            let mut flagged: Vec<(usize, usize, f64, f64)> = Vec::new();
            for j in 0..self.grid.ny {
                for i in 0..self.grid.nx {
                    let c = self.grid.idx(i, j);
                    if er.data[c] >= self.cfg.eps0 && e2r.data[c] <= self.cfg.locality_budget * er.data[c] {
                        flagged.push((i, j, er.data[c], e2r.data[c]));
                    }
                }
            }
            // cluster: keep energy-sorted local representatives separated by r
            flagged.sort_by(|p, q| {
                q.2.partial_cmp(&p.2)
                    .unwrap()
                    .then((p.1 * self.grid.nx + p.0).cmp(&(q.1 * self.grid.nx + q.0)))
            });
            let mut kept: Vec<(usize, usize, f64, f64)> = Vec::new();
            'cand: for cand in flagged {
                let cx = (self.grid.x(cand.0), self.grid.y(cand.1));
                for k in &kept {
                    let kx = (self.grid.x(k.0), self.grid.y(k.1));
                    if metric.torus_distance(cx, kx)? < r {
                        continue 'cand;
                    }
                }
                kept.push(cand);
            }
            for (i, j, ball, double_ball) in kept {
                let pos = (self.grid.x(i), self.grid.y(j));
                let flag = ConcentrationFlag { radius: r, ball_energy: ball, double_ball_energy: double_ball };
                let mut matched = false;
                for pt in report.points.iter_mut() {
                    if metric.torus_distance(pos, (pt.x, pt.y))? < r {
                        pt.flags.push(flag.clone());
                        matched = true;
                        break;
                    }
                }
                if !matched {
                    report.points.push(ConcentrationPoint { i, j, x: pos.0, y: pos.1, flags: vec![flag] });
                }
            }
        }
        report.bubble_suspected = report.points.iter().any(|p| p.flags.len() >= 2);
        Ok(report)
    }

    /// Max local energy at the given radius over a coarse lattice of centers.
    pub fn max_local_energy_coarse(&self, state: &FlowState, radius: f64) -> Result<f64> {
        let metric = &state.metric;
        let tp = metric.require_teich()?;
        if !(radius < 0.5 * tp.systole()) {
            return Ok(f64::NAN);
        }
        let e = energy_density(&state.u, metric)?;
        let offs = metric.ball_offsets(radius)?;
        let area = self.grid.cell_area();
        let stride = (self.grid.nx / 16).max(1);
        let mut worst = 0.0f64;
        let mut j = 0;
        while j < self.grid.ny {
            let mut i = 0;
            while i < self.grid.nx {
                let mut acc = 0.0;
                for &(di, dj) in &offs {
                    let ii = self.grid.wrap_x(i as isize + di);
                    let jj = self.grid.wrap_y(j as isize + dj);
                    let c = self.grid.idx(ii, jj);
                    acc += e.data[c] * metric.sqrt_det(c);
                }
                worst = worst.max(acc * area);
                i += stride;
            }
            j += stride;
        }
        Ok(worst)
    }

    pub fn trajectory_point(&self, state: &FlowState, residual: f64) -> Result<TrajectoryPoint> {
        let tp = state.metric.require_teich()?;
        let radius = self
            .cfg
            .concentration_radii
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let max_local = if radius.is_finite() {
            self.max_local_energy_coarse(state, radius)?
        } else {
            f64::NAN
        };
        Ok(TrajectoryPoint {
            step: state.step,
            t: state.t,
            energy: state.energy,
            tension_l2sq: state.tension_l2sq,
            horiz_hopf_l2sq: state.horiz_hopf_l2sq,
            energy_identity_residual: residual,
            a: tp.a,
            b: tp.b,
            systole: tp.systole(),
            max_local_energy: max_local,
        })
    }
}

fn renormalize(g11: f64, g12: f64, g22: f64) -> Result<(f64, f64, f64)> {
    let det = g11 * g22 - g12 * g12;
    if !(det > 0.0 && g11 > 0.0) {
        return Err(Error::MetricDomain);
    }
    let s = det.sqrt();
    Ok((g11 / s, g12 / s, g22 / s))
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ConcentrationFlag {
    pub radius: f64,
    pub ball_energy: f64,
    pub double_ball_energy: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ConcentrationPoint {
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub flags: Vec<ConcentrationFlag>,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ConcentrationReport {
    pub points: Vec<ConcentrationPoint>,
    pub radii_scanned: Vec<f64>,
    pub bubble_suspected: bool,
    pub max_ball_energy: f64,
}

/// Weil-Petersson length of the metric trajectory: half the L^2 length,
/// trapezoid rule over the stored horizontal speeds.
pub fn wp_length(points: &[TrajectoryPoint], eta: f64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let speed = |p: &TrajectoryPoint| eta * eta / 4.0 * p.horiz_hopf_l2sq.max(0.0).sqrt();
    let mut acc = 0.0;
    for w in points.windows(2) {
        let dt = w[1].t - w[0].t;
        acc += 0.5 * (speed(&w[0]) + speed(&w[1])) * dt;
    }
    0.5 * acc
}

/// Norm of the difference of two maps in L^2(M, dv_{g_ref}).
pub fn map_l2_distance(u1: &EmbeddedField, u2: &EmbeddedField, g_ref: &MetricField) -> f64 {
    let n = g_ref.grid.cells();
    let k = u1.dim;
    let area = g_ref.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..n {
        let mut sq = 0.0;
        for comp in 0..k {
            let d = u1.data[c * k + comp] - u2.data[c * k + comp];
            sq += d * d;
        }
        acc += sq * g_ref.sqrt_det(c);
    }
    (acc * area).sqrt()
}

/// psi(t) = ||grad V||^4_{L^4} + 1 with |grad V| the pointwise max gradient.
pub fn psi_integrand(u1: &EmbeddedField, u2: &EmbeddedField, g_ref: &MetricField) -> Result<f64> {
    let e1 = energy_density(u1, g_ref)?;
    let e2 = energy_density(u2, g_ref)?;
    let area = g_ref.grid.cell_area();
    let mut acc = 0.0;
    for c in 0..g_ref.grid.cells() {
        let m = (2.0 * e1.data[c]).max(2.0 * e2.data[c]);
        acc += m * m * g_ref.sqrt_det(c);
    }
    Ok(acc * area + 1.0)
}
