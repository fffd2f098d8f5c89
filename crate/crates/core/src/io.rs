//! Bit-stable data emission: CSV time series, binary checkpoints, map files
//! and the JSON run summary.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a given
//! config and seed reproduce byte-identical CSV output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{Event, FlowState, TrajectoryPoint};
use crate::grid::{EmbeddedField, Grid};
use crate::metric::{MetricField, TeichParams};

pub const CSV_HEADER: &str =
    "step,t,E,tension_l2sq,horiz_hopf_l2sq,energy_identity_residual,a,b,systole,max_local_energy";

const CHECKPOINT_MAGIC: &[u8; 8] = b"HMFCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;
const MAP_MAGIC: &[u8; 8] = b"HMFMAP\0\0";

pub struct CsvWriter {
    w: BufWriter<File>,
    path: String,
}

impl CsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(Self { w, path: path.display().to_string() })
    }

    pub fn write_row(&mut self, p: &TrajectoryPoint) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{},{},{},{},{},{},{},{}",
            p.step,
            p.t,
            p.energy,
            p.tension_l2sq,
            p.horiz_hopf_l2sq,
            p.energy_identity_residual,
            p.a,
            p.b,
            p.systole,
            p.max_local_energy
        )
        .map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct RunSummary {
    pub version: String,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_t: f64,
    pub final_step: u64,
    pub halted: bool,
    pub events: Vec<Event>,
    pub wp_length: f64,
    pub wall_time_s: f64,
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, summary)
        .map_err(|e| Error::Engine(format!("summary serialization: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

struct ByteWriter {
    w: BufWriter<File>,
    path: String,
}

impl ByteWriter {
    fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { w: BufWriter::new(f), path: path.display().to_string() })
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.w.write_all(b).map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }

    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }
}

struct ByteReader {
    r: BufReader<File>,
    path: String,
}

impl ByteReader {
    fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { r: BufReader::new(f), path: path.display().to_string() })
    }

    fn bytes(&mut self, out: &mut [u8]) -> Result<()> {
        self.r
            .read_exact(out)
            .map_err(|e| Error::Io { path: self.path.clone(), source: e })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Binary checkpoint with a versioned header; the round trip is bit-exact.
pub fn write_checkpoint(path: &Path, state: &FlowState) -> Result<()> {
    let mut w = ByteWriter::create(path)?;
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.u32(state.u.grid.nx as u32)?;
    w.u32(state.u.grid.ny as u32)?;
    w.u32(state.u.dim as u32)?;
    w.u64(state.step)?;
    w.f64(state.t)?;
    w.f64(state.energy)?;
    w.f64(state.tension_l2sq)?;
    w.f64(state.horiz_hopf_l2sq)?;
    let tp = state.metric.require_teich()?;
    w.f64(tp.a)?;
    w.f64(tp.b)?;
    for v in &state.u.data {
        w.f64(*v)?;
    }
    w.u32(state.events.len() as u32)?;
    for e in &state.events {
        match e {
            Event::Halt { step, systole } => {
                w.u32(1)?;
                w.u64(*step)?;
                w.f64(*systole)?;
                w.f64(0.0)?;
                w.u32(0)?;
            }
            Event::Concentration { step, points, max_ball_energy } => {
                w.u32(2)?;
                w.u64(*step)?;
                w.f64(*max_ball_energy)?;
                w.f64(0.0)?;
                w.u32(*points as u32)?;
            }
        }
    }
    w.finish()
}

pub fn load_checkpoint(path: &Path) -> Result<FlowState> {
    let mut r = ByteReader::open(path)?;
    let mut magic = [0u8; 8];
    r.bytes(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!("unsupported version {version}")));
    }
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let grid = Grid::new(nx, ny)?;
    let step = r.u64()?;
    let t = r.f64()?;
    let energy = r.f64()?;
    let tension_l2sq = r.f64()?;
    let horiz_hopf_l2sq = r.f64()?;
    let a = r.f64()?;
    let b = r.f64()?;
    let teich = TeichParams::new(a, b)?;
    let mut u = EmbeddedField::zeros(grid, dim);
    for v in u.data.iter_mut() {
        *v = r.f64()?;
    }
    let n_events = r.u32()? as usize;
    let mut events = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let kind = r.u32()?;
        let step = r.u64()?;
        let f0 = r.f64()?;
        let _f1 = r.f64()?;
        let extra = r.u32()?;
        events.push(match kind {
            1 => Event::Halt { step, systole: f0 },
            2 => Event::Concentration { step, points: extra as usize, max_ball_energy: f0 },
            k => return Err(Error::CheckpointFormat(format!("unknown event kind {k}"))),
        });
    }
    Ok(FlowState {
        step,
        t,
        u,
        metric: MetricField::flat(grid, teich),
        energy,
        tension_l2sq,
        horiz_hopf_l2sq,
        events,
    })
}

/// Map file: grid dims, ambient dimension, raw f64 data.
pub fn save_map(path: &Path, u: &EmbeddedField) -> Result<()> {
    let mut w = ByteWriter::create(path)?;
    w.bytes(MAP_MAGIC)?;
    w.u32(u.grid.nx as u32)?;
    w.u32(u.grid.ny as u32)?;
    w.u32(u.dim as u32)?;
    for v in &u.data {
        w.f64(*v)?;
    }
    w.finish()
}

pub fn load_map(path: &Path) -> Result<EmbeddedField> {
    let mut r = ByteReader::open(path)?;
    let mut magic = [0u8; 8];
    r.bytes(&mut magic)?;
    if &magic != MAP_MAGIC {
        return Err(Error::CheckpointFormat("bad map file magic".into()));
    }
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let grid = Grid::new(nx, ny)?;
    let mut u = EmbeddedField::zeros(grid, dim);
    for v in u.data.iter_mut() {
        *v = r.f64()?;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn csv_header_only_for_empty_trajectory() {
        let dir = std::env::temp_dir().join(format!("harmflow-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        CsvWriter::create(&path).unwrap().finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let grid = build_grid(16, 12).unwrap();
        let mut u = EmbeddedField::zeros(grid, 3);
        let mut rng = crate::rng::SimRng::new(5);
        for v in u.data.iter_mut() {
            *v = rng.symmetric();
        }
        let tp = TeichParams::new(0.123456789, 1.987654321).unwrap();
        let state = FlowState {
            step: 41,
            t: 0.123,
            u,
            metric: MetricField::flat(grid, tp),
            energy: 3.25,
            tension_l2sq: 1e-9,
            horiz_hopf_l2sq: 7.5,
            events: vec![
                Event::Halt { step: 41, systole: 0.89 },
                Event::Concentration { step: 40, points: 2, max_ball_energy: 12.0 },
            ],
        };
        let dir = std::env::temp_dir().join(format!("harmflow-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.ckpt");
        write_checkpoint(&path, &state).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, state.step);
        assert_eq!(back.t.to_bits(), state.t.to_bits());
        assert_eq!(back.u.data, state.u.data);
        assert_eq!(back.metric.teich, state.metric.teich);
        assert_eq!(back.events, state.events);
        assert_eq!(back.energy.to_bits(), state.energy.to_bits());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn map_file_roundtrip() {
        let grid = build_grid(8, 8).unwrap();
        let mut u = EmbeddedField::zeros(grid, 3);
        for (i, v) in u.data.iter_mut().enumerate() {
            *v = i as f64 * 0.25 - 3.0;
        }
        let dir = std::env::temp_dir().join(format!("harmflow-map-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("u.map");
        save_map(&path, &u).unwrap();
        let back = load_map(&path).unwrap();
        assert_eq!(back.data, u.data);
        assert_eq!(back.dim, 3);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = std::env::temp_dir().join(format!("harmflow-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
