//! Scenario execution, the convergence-study harness, the dual-run
//! continuity experiment and the Picard contraction threshold search.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::flow::{
    map_l2_distance, psi_integrand, wp_length, Event, FlowEngine, FlowState, StepReport, TrajectoryPoint,
};
use crate::io::{write_checkpoint, write_summary, CsvWriter, RunSummary};
use crate::metric::{MetricField, TeichParams};
use crate::scenario::{assemble, perturbation_field};
use crate::target::project_map;

/// A stepping simulator: engine plus current state.
pub struct Simulator {
    pub engine: FlowEngine,
    pub state: FlowState,
}

impl Simulator {
    pub fn from_config(cfg: &RunConfig) -> Result<Simulator> {
        let asm = assemble(cfg)?;
        let engine = FlowEngine::new(asm.grid, asm.target, cfg.flow.clone())?;
        let state = engine.initial_state(asm.initial_map, asm.initial_metric)?;
        Ok(Simulator { engine, state })
    }

    pub fn halted(&self) -> bool {
        self.state.halted()
    }

    /// Advance one step; returns the step report. No-op error when halted.
    pub fn step(&mut self) -> Result<StepReport> {
        if self.halted() {
            return Err(Error::Engine("flow already halted by the systole floor".into()));
        }
        let (next, report) = self.engine.step(&self.state)?;
        self.state = next;
        Ok(report)
    }
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub points: Vec<TrajectoryPoint>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Execute a configured scenario, emitting the CSV series, the JSON summary
/// and optional checkpoints into the output directory.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let csv_path = out_dir.join("series.csv");
    let summary_path = out_dir.join("summary.json");

    let mut sim = Simulator::from_config(cfg)?;
    let initial_energy = sim.state.energy;
    let mut events: Vec<Event> = sim.state.events.clone();
    let mut csv = CsvWriter::create(&csv_path)?;
    let mut points = Vec::new();

    let first = sim.engine.trajectory_point(&sim.state, 0.0)?;
    csv.write_row(&first)?;
    points.push(first);
    record_concentration(&mut sim, &mut events)?;

    let mut error: Option<Error> = None;
    while !sim.halted() && sim.state.step < cfg.flow.max_steps {
        if let Some(t_end) = cfg.flow.t_end {
            if sim.state.t >= t_end {
                break;
            }
        }
        let before = sim.state.clone();
        match sim.step() {
            Ok(_) => {}
            Err(e) => {
                error = Some(e);
                break;
            }
        }
        let emit = sim.state.step % cfg.emit_every == 0 || sim.halted();
        events.extend(sim.state.events.iter().cloned());
        if emit {
            let residual = sim.engine.energy_identity_residual(&before, &sim.state);
            let row = sim.engine.trajectory_point(&sim.state, residual)?;
            csv.write_row(&row)?;
            points.push(row);
            record_concentration(&mut sim, &mut events)?;
        }
        if cfg.checkpoint_every > 0 && sim.state.step % cfg.checkpoint_every == 0 {
            write_checkpoint(&out_dir.join(format!("step-{:08}.ckpt", sim.state.step)), &sim.state)?;
        }
    }
    csv.finish()?;
    write_checkpoint(&out_dir.join("final.ckpt"), &sim.state)?;

    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        initial_energy,
        final_energy: sim.state.energy,
        final_t: sim.state.t,
        final_step: sim.state.step,
        halted: sim.halted(),
        events,
        wp_length: wp_length(&points, cfg.flow.eta),
        wall_time_s: started.elapsed().as_secs_f64(),
        error: error.as_ref().map(|e| e.to_string()),
        config: cfg.echo.clone(),
    };
    write_summary(&summary_path, &summary)?;
    if let Some(e) = error {
        return Err(e);
    }
    if summary.final_energy > summary.initial_energy + 1e-8 * (1.0 + summary.initial_energy) {
        return Err(Error::Engine(format!(
            "energy increased over the run: {} -> {}",
            summary.initial_energy, summary.final_energy
        )));
    }
    Ok(RunOutput { summary, points, csv_path, summary_path })
}

fn record_concentration(sim: &mut Simulator, events: &mut Vec<Event>) -> Result<()> {
    let report = sim.engine.detect_concentration(&sim.state)?;
    if !report.points.is_empty() {
        events.push(Event::Concentration {
            step: sim.state.step,
            points: report.points.len(),
            max_ball_energy: report.max_ball_energy,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct StudyReport {
    /// (cells per axis, h, residual) for the spatial study.
    pub h_entries: Vec<(usize, f64, f64)>,
    pub h_slope: Option<f64>,
    pub h_exact: bool,
    /// (dt, max per-step residual) for the temporal study.
    pub dt_entries: Vec<(f64, f64)>,
    pub dt_slope: Option<f64>,
    pub dt_exact: bool,
}

/// Convergence study of the energy-identity residual.
///
/// Spatial part: the dissipation functional at t = 0 is compared against a
/// reference grid at twice the finest resolution (no time stepping enters).
/// Temporal part: max per-step residual over a fixed horizon for each dt.
pub fn convergence_study(cfg: &RunConfig, grids: &[usize], dts: &[f64]) -> Result<StudyReport> {
    if grids.len() < 3 || dts.len() < 3 {
        return Err(Error::Engine("convergence study needs at least 3 grids and 3 dts".into()));
    }
    let zero_floor = 1e-14;

    // spatial study
    let ref_n = 2 * grids.iter().cloned().max().unwrap();
    let d_ref = dissipation_at_start(cfg, ref_n)?;
    let mut h_entries = Vec::new();
    for &n in grids {
        let d = dissipation_at_start(cfg, n)?;
        h_entries.push((n, 1.0 / n as f64, (d - d_ref).abs()));
    }
    let h_exact = h_entries.iter().all(|e| e.2 < zero_floor) && d_ref.abs() < zero_floor;
    let h_slope = if h_exact {
        None
    } else {
        Some(fit_loglog(&h_entries.iter().map(|e| (e.1, e.2)).collect::<Vec<_>>()))
    };

    // temporal study on the configured grid
    let horizon = cfg.study_steps as f64 * dts.iter().cloned().fold(f64::MIN, f64::max);
    let mut dt_entries = Vec::new();
    for &dt in dts {
        let mut run_cfg = cfg.clone();
        run_cfg.flow.dt = dt;
        run_cfg.flow.max_steps = (horizon / dt).round() as u64;
        run_cfg.flow.t_end = None;
        let mut sim = Simulator::from_config(&run_cfg)?;
        let mut worst = 0.0f64;
        while !sim.halted() && sim.state.step < run_cfg.flow.max_steps {
            let before = sim.state.clone();
            sim.step()?;
            worst = worst.max(sim.engine.energy_identity_residual(&before, &sim.state));
        }
        dt_entries.push((dt, worst));
    }
    let dt_exact = dt_entries.iter().all(|e| e.1 < zero_floor);
    let dt_slope = if dt_exact {
        None
    } else {
        Some(fit_loglog(&dt_entries))
    };

    Ok(StudyReport { h_entries, h_slope, h_exact, dt_entries, dt_slope, dt_exact })
}

fn dissipation_at_start(cfg: &RunConfig, n: usize) -> Result<f64> {
    let mut c = cfg.clone();
    c.nx = n;
    c.ny = n;
    let sim = Simulator::from_config(&c)?;
    Ok(sim.engine.dissipation(&sim.state))
}

/// Least-squares slope of log(y) against log(x); entries with y = 0 are
/// clamped to the floor to keep the fit defined.
fn fit_loglog(entries: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = entries.iter().map(|&(x, y)| (x.ln(), y.max(1e-300).ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbKind {
    /// Add a smooth field of the given sup norm to the map, then reproject.
    Map,
    /// Shift the parameter b of the initial metric.
    MetricB,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DualRunReport {
    pub eps: f64,
    pub steps: u64,
    pub sup_map_distance: f64,
    pub sup_param_distance: f64,
    pub final_map_distance: f64,
    pub psi_integral: f64,
}

impl DualRunReport {
    pub fn sup_distance(&self) -> f64 {
        self.sup_map_distance + self.sup_param_distance
    }
}

/// Run the flow twice, from base initial data and from data perturbed by eps,
/// with identical configuration, and record the distance history.
pub fn dual_run_uniqueness(cfg: &RunConfig, eps: f64, kind: PerturbKind, t_end: f64) -> Result<DualRunReport> {
    let asm = assemble(cfg)?;
    let engine1 = FlowEngine::new(asm.grid, asm.target.clone(), cfg.flow.clone())?;
    let engine2 = FlowEngine::new(asm.grid, asm.target.clone(), cfg.flow.clone())?;

    let (u2, metric2) = match kind {
        PerturbKind::Map => {
            let mut u2 = asm.initial_map.clone();
            if eps != 0.0 {
                let v = perturbation_field(asm.grid, u2.dim, eps, cfg.seed);
                for (uv, dv) in u2.data.iter_mut().zip(&v.data) {
                    *uv += dv;
                }
                project_map(&mut u2, &asm.target)?;
            }
            (u2, asm.initial_metric.clone())
        }
        PerturbKind::MetricB => {
            let tp = asm.initial_metric.require_teich()?;
            let tp2 = TeichParams::new(tp.a, tp.b + eps)?;
            (asm.initial_map.clone(), MetricField::flat(asm.grid, tp2))
        }
    };

    let g_ref = asm.initial_metric.clone();
    let mut s1 = engine1.initial_state(asm.initial_map, asm.initial_metric)?;
    let mut s2 = engine2.initial_state(u2, metric2)?;

    let steps = (t_end / cfg.flow.dt).round().max(1.0) as u64;
    let mut sup_w = map_l2_distance(&s1.u, &s2.u, &g_ref);
    let mut sup_p = param_distance(&s1, &s2)?;
    let mut psi_prev = psi_integrand(&s1.u, &s2.u, &g_ref)?;
    let mut psi_integral = 0.0;
    let mut done = 0;
    for _ in 0..steps {
        if s1.halted() || s2.halted() {
            break;
        }
        let (n1, _) = engine1.step(&s1)?;
        let (n2, _) = engine2.step(&s2)?;
        s1 = n1;
        s2 = n2;
        done += 1;
        sup_w = sup_w.max(map_l2_distance(&s1.u, &s2.u, &g_ref));
        sup_p = sup_p.max(param_distance(&s1, &s2)?);
        let psi = psi_integrand(&s1.u, &s2.u, &g_ref)?;
        psi_integral += 0.5 * (psi + psi_prev) * cfg.flow.dt;
        psi_prev = psi;
    }
    Ok(DualRunReport {
        eps,
        steps: done,
        sup_map_distance: sup_w,
        sup_param_distance: sup_p,
        final_map_distance: map_l2_distance(&s1.u, &s2.u, &g_ref),
        psi_integral,
    })
}

fn param_distance(s1: &FlowState, s2: &FlowState) -> Result<f64> {
    let t1 = s1.metric.require_teich()?;
    let t2 = s2.metric.require_teich()?;
    Ok(((t1.a - t2.a).powi(2) + (t1.b - t2.b).powi(2)).sqrt())
}

/// Largest dt (by bisection) for which the Picard iterate gaps contract with
/// ratio at most 1/2 over the first few steps of the configured scenario.
pub fn measure_picard_threshold(cfg: &RunConfig, dt_lo: f64, dt_hi: f64, probe_steps: u64) -> Result<f64> {
    let contracts = |dt: f64| -> Result<bool> {
        let mut c = cfg.clone();
        c.flow.dt = dt;
        c.flow.picard_iters = 4;
        c.flow.picard_tol = 1e-300; // force all iterations so ratios are measured
        let mut sim = Simulator::from_config(&c)?;
        for _ in 0..probe_steps {
            if sim.halted() {
                break;
            }
            let report = match sim.step() {
                Ok(r) => r,
                // gap growth, leaving the parameter domain and drifting off
                // the target band are all symptoms of an oversized step
                Err(Error::DtTooLarge { .. }) | Err(Error::MetricDomain) | Err(Error::OffManifold { .. }) => {
                    return Ok(false)
                }
                Err(e) => return Err(e),
            };
            let floor = 1e-13 * (1.0 + sim.state.u.max_abs());
            if report.gap_ratios(floor).iter().any(|r| *r > 0.5) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    if !contracts(dt_lo)? {
        return Err(Error::Engine(format!("no contraction even at dt = {dt_lo}")));
    }
    if contracts(dt_hi)? {
        return Ok(dt_hi);
    }
    let (mut lo, mut hi) = (dt_lo, dt_hi);
    for _ in 0..24 {
        let mid = (lo * hi).sqrt();
        if contracts(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Box-mode Lipschitz probe used by the CLI: random parameter pairs in the
/// configured box, random tensors, reports the worst ratio seen.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BoxProbeReport {
    pub pairs: usize,
    pub samples_per_pair: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
}

pub fn lipschitz_box_probe(cfg: &RunConfig) -> Result<BoxProbeReport> {
    let grid = crate::grid::build_grid(cfg.nx, cfg.ny)?;
    let (a_min, a_max, b_min, b_max) = cfg.probe_box;
    if !(b_min > 0.0 && b_max >= b_min && a_max >= a_min) {
        return Err(Error::ConfigValue { key: "probe.b_min".into(), message: "invalid probe box".into() });
    }
    let mut rng = crate::rng::SimRng::new(cfg.seed.wrapping_add(0xC0FFEE));
    let pairs = cfg.probe_samples.max(1);
    let samples_per_pair = 4;
    let mut max_ratio = 0.0f64;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for _ in 0..pairs {
        let g1 = MetricField::flat(grid, TeichParams::new(rng.range(a_min, a_max), rng.range(b_min, b_max))?);
        let g2 = MetricField::flat(grid, TeichParams::new(rng.range(a_min, a_max), rng.range(b_min, b_max))?);
        let rep = crate::projection::projection_lipschitz_probe(&g1, &g2, samples_per_pair, rng.next_u64())?;
        if rep.param_distance > 0.0 {
            max_ratio = max_ratio.max(rep.max_ratio);
            sum += rep.mean_ratio;
            count += 1;
        }
    }
    Ok(BoxProbeReport {
        pairs,
        samples_per_pair,
        max_ratio,
        mean_ratio: if count > 0 { sum / count as f64 } else { 0.0 },
    })
}

/// Resume a run from a checkpoint path using the engine settings from cfg.
pub fn simulator_from_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Simulator> {
    let asm = assemble(cfg)?;
    let state = crate::io::load_checkpoint(path)?;
    state.u.grid.same(&asm.grid, "checkpoint grid")?;
    if state.u.dim != asm.target.ambient_dim() {
        return Err(Error::CheckpointFormat("ambient dimension mismatch with config".into()));
    }
    let engine = FlowEngine::new(asm.grid, asm.target, cfg.flow.clone())?;
    Ok(Simulator { engine, state })
}
