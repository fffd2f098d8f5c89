//! Flat key-value run configuration with dotted section names.
//!
//! Format: one `key = value` per line, `#` starts a comment, keys are dotted
//! (e.g. `flow.dt = 1e-4`). Unknown and duplicate keys are rejected. Lists are
//! comma-separated.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::metric::TeichParams;

const KNOWN_KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "target.kind",
    "target.ambient_dim",
    "target.major",
    "target.minor",
    "map.scenario",
    "map.file",
    "map.spiral_eps",
    "map.bump_scale",
    "map.bump_cx",
    "map.bump_cy",
    "teich.a",
    "teich.b",
    "flow.dt",
    "flow.eta",
    "flow.picard_iters",
    "flow.picard_tol",
    "flow.eps0",
    "flow.radii",
    "flow.locality",
    "flow.systole_floor",
    "flow.max_steps",
    "flow.t_end",
    "output.dir",
    "output.emit_every",
    "output.checkpoint_every",
    "probe.seed",
    "probe.samples",
    "probe.a_min",
    "probe.a_max",
    "probe.b_min",
    "probe.b_max",
    "study.grids",
    "study.dts",
    "study.steps",
];

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum TargetKind {
    Sphere,
    TorusOfRevolution,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum MapScenario {
    Constant,
    Equator,
    Spiral,
    Bump,
    File,
}

impl MapScenario {
    pub fn name(&self) -> &'static str {
        match self {
            MapScenario::Constant => "constant",
            MapScenario::Equator => "equator",
            MapScenario::Spiral => "spiral",
            MapScenario::Bump => "bump",
            MapScenario::File => "file",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub target_kind: TargetKind,
    pub ambient_dim: usize,
    pub torus_major: f64,
    pub torus_minor: f64,
    pub scenario: MapScenario,
    pub map_file: Option<String>,
    pub spiral_eps: f64,
    pub bump_scale: f64,
    pub bump_center: (f64, f64),
    pub teich: TeichParams,
    pub flow: FlowConfig,
    pub out_dir: String,
    pub emit_every: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub probe_samples: usize,
    pub probe_box: (f64, f64, f64, f64), // a_min, a_max, b_min, b_max
    pub study_grids: Vec<usize>,
    pub study_dts: Vec<f64>,
    pub study_steps: usize,
    /// Normalized key/value echo for the run summary.
    pub echo: BTreeMap<String, String>,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let line = match line.find('#') {
            Some(pos) => line[..pos].trim_end(),
            None => line,
        };
        if line.is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::ConfigParse {
                line: lineno + 1,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(Error::ConfigParse { line: lineno + 1, message: "empty key or value".into() });
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::ConfigParse { line: lineno + 1, message: format!("unknown key '{key}'") });
        }
        if kv.contains_key(&key) {
            return Err(Error::ConfigParse { line: lineno + 1, message: format!("duplicate key '{key}'") });
        }
        kv.insert(key, value);
    }
    build_config(kv)
}

fn build_config(kv: BTreeMap<String, String>) -> Result<RunConfig> {
    let get = |key: &str| kv.get(key).map(|s| s.as_str());
    let required = |key: &str| -> Result<&str> {
        get(key).ok_or_else(|| Error::ConfigValue { key: key.into(), message: "required key missing".into() })
    };

    let nx = parse_usize("grid.nx", required("grid.nx")?)?;
    let ny = parse_usize("grid.ny", required("grid.ny")?)?;

    let target_kind = match get("target.kind").unwrap_or("sphere") {
        "sphere" => TargetKind::Sphere,
        "torus_rev" => TargetKind::TorusOfRevolution,
        other => {
            return Err(Error::ConfigValue {
                key: "target.kind".into(),
                message: format!("unknown target '{other}' (expected sphere | torus_rev)"),
            })
        }
    };
    let ambient_dim = opt_parse(get("target.ambient_dim"), 3, parse_usize, "target.ambient_dim")?;
    let torus_major = opt_parse(get("target.major"), 2.0, parse_f64, "target.major")?;
    let torus_minor = opt_parse(get("target.minor"), 0.5, parse_f64, "target.minor")?;

    let scenario = match required("map.scenario")? {
        "constant" => MapScenario::Constant,
        "equator" => MapScenario::Equator,
        "spiral" => MapScenario::Spiral,
        "bump" => MapScenario::Bump,
        "file" => MapScenario::File,
        other => {
            return Err(Error::ConfigValue {
                key: "map.scenario".into(),
                message: format!("unknown scenario '{other}' (expected constant | equator | spiral | bump | file)"),
            })
        }
    };
    let map_file = get("map.file").map(|s| s.to_string());
    if scenario == MapScenario::File && map_file.is_none() {
        return Err(Error::ConfigValue { key: "map.file".into(), message: "required for map.scenario = file".into() });
    }
    let spiral_eps = opt_parse(get("map.spiral_eps"), 0.1, parse_f64, "map.spiral_eps")?;
    let bump_scale = opt_parse(get("map.bump_scale"), 0.035, parse_f64, "map.bump_scale")?;
    let bump_cx = opt_parse(get("map.bump_cx"), 0.5, parse_f64, "map.bump_cx")?;
    let bump_cy = opt_parse(get("map.bump_cy"), 0.5, parse_f64, "map.bump_cy")?;

    let teich_a = opt_parse(get("teich.a"), 0.0, parse_f64, "teich.a")?;
    let teich_b = opt_parse(get("teich.b"), 1.0, parse_f64, "teich.b")?;
    let teich = TeichParams::new(teich_a, teich_b)
        .map_err(|e| Error::ConfigValue { key: "teich.b".into(), message: e.to_string() })?;

    let defaults = FlowConfig::default();
    let flow = FlowConfig {
        dt: opt_parse(get("flow.dt"), defaults.dt, parse_f64, "flow.dt")?,
        eta: opt_parse(get("flow.eta"), defaults.eta, parse_f64, "flow.eta")?,
        picard_iters: opt_parse(get("flow.picard_iters"), defaults.picard_iters, parse_usize, "flow.picard_iters")?,
        picard_tol: opt_parse(get("flow.picard_tol"), defaults.picard_tol, parse_f64, "flow.picard_tol")?,
        eps0: opt_parse(get("flow.eps0"), defaults.eps0, parse_f64, "flow.eps0")?,
        concentration_radii: match get("flow.radii") {
            Some(s) => parse_f64_list("flow.radii", s)?,
            None => defaults.concentration_radii.clone(),
        },
        locality_budget: opt_parse(get("flow.locality"), defaults.locality_budget, parse_f64, "flow.locality")?,
        systole_floor: opt_parse(get("flow.systole_floor"), defaults.systole_floor, parse_f64, "flow.systole_floor")?,
        max_steps: opt_parse(get("flow.max_steps"), defaults.max_steps, parse_u64, "flow.max_steps")?,
        t_end: match get("flow.t_end") {
            Some(s) => Some(parse_f64("flow.t_end", s)?),
            None => None,
        },
    };
    flow.validate()
        .map_err(|e| Error::ConfigValue { key: "flow".into(), message: e.to_string() })?;

    let cfg = RunConfig {
        nx,
        ny,
        target_kind,
        ambient_dim,
        torus_major,
        torus_minor,
        scenario,
        map_file,
        spiral_eps,
        bump_scale,
        bump_center: (bump_cx, bump_cy),
        teich,
        flow,
        out_dir: get("output.dir").unwrap_or("out").to_string(),
        emit_every: opt_parse(get("output.emit_every"), 1, parse_u64, "output.emit_every")?,
        checkpoint_every: opt_parse(get("output.checkpoint_every"), 0, parse_u64, "output.checkpoint_every")?,
        seed: opt_parse(get("probe.seed"), 0, parse_u64, "probe.seed")?,
        probe_samples: opt_parse(get("probe.samples"), 100, parse_usize, "probe.samples")?,
        probe_box: (
            opt_parse(get("probe.a_min"), -0.5, parse_f64, "probe.a_min")?,
            opt_parse(get("probe.a_max"), 0.5, parse_f64, "probe.a_max")?,
            opt_parse(get("probe.b_min"), 0.5, parse_f64, "probe.b_min")?,
            opt_parse(get("probe.b_max"), 2.0, parse_f64, "probe.b_max")?,
        ),
        study_grids: match get("study.grids") {
            Some(s) => parse_usize_list("study.grids", s)?,
            None => vec![32, 64, 128],
        },
        study_dts: match get("study.dts") {
            Some(s) => parse_f64_list("study.dts", s)?,
            None => vec![1e-4, 5e-5, 2.5e-5],
        },
        study_steps: opt_parse(get("study.steps"), 20, parse_usize, "study.steps")?,
        echo: kv,
    };
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &RunConfig) -> Result<()> {
    if cfg.emit_every == 0 {
        return Err(Error::ConfigValue { key: "output.emit_every".into(), message: "must be at least 1".into() });
    }
    if cfg.target_kind == TargetKind::Sphere && cfg.ambient_dim < 2 {
        return Err(Error::ConfigValue { key: "target.ambient_dim".into(), message: "sphere needs dimension >= 2".into() });
    }
    if cfg.target_kind == TargetKind::TorusOfRevolution && !(cfg.torus_major > cfg.torus_minor && cfg.torus_minor > 0.0) {
        return Err(Error::ConfigValue { key: "target.major".into(), message: "needs major > minor > 0".into() });
    }
    if !(cfg.bump_scale > 0.0) {
        return Err(Error::ConfigValue { key: "map.bump_scale".into(), message: "must be positive".into() });
    }
    Ok(())
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::ConfigValue { key: key.into(), message: format!("not a number: '{s}'") })
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::ConfigValue { key: key.into(), message: format!("not a nonnegative integer: '{s}'") })
}

fn parse_u64(key: &str, s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| Error::ConfigValue { key: key.into(), message: format!("not a nonnegative integer: '{s}'") })
}

fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(key, p.trim())).collect()
}

fn parse_usize_list(key: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|p| parse_usize(key, p.trim())).collect()
}

fn opt_parse<T>(value: Option<&str>, default: T, f: impl Fn(&str, &str) -> Result<T>, key: &str) -> Result<T> {
    match value {
        Some(s) => f(key, s),
        None => Ok(default),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "grid.nx = 32\ngrid.ny = 32\nmap.scenario = equator\n";

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.flow.dt, 1e-4);
        assert_eq!(cfg.flow.eta, 2.0);
        assert_eq!(cfg.flow.eps0, 0.3);
        assert_eq!(cfg.teich, TeichParams::square());
        assert_eq!(cfg.target_kind, TargetKind::Sphere);
        assert_eq!(cfg.scenario, MapScenario::Equator);
    }

    #[test]
    fn duplicate_key_names_the_key() {
        let text = format!("{MINIMAL}flow.dt = 1e-4\nflow.dt = 2e-4\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate key 'flow.dt'"), "{err}");
        assert!(err.to_string().contains("line 5"));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = format!("{MINIMAL}flow.dx = 1e-4\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("unknown key 'flow.dx'"));
    }

    #[test]
    fn invalid_teich_b() {
        let text = format!("{MINIMAL}teich.b = -1.0\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("TeichParams invalid"), "{err}");
    }

    #[test]
    fn comments_and_lists() {
        let text = "# a comment\ngrid.nx = 16 # trailing\ngrid.ny = 16\nmap.scenario = constant\nflow.radii = 0.05, 0.1\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.flow.concentration_radii, vec![0.05, 0.1]);
    }

    #[test]
    fn missing_required_key() {
        let err = parse_config("grid.nx = 16\ngrid.ny = 16\n").unwrap_err();
        assert!(err.to_string().contains("map.scenario"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_config("grid.nx 16\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn file_scenario_requires_path() {
        let err = parse_config("grid.nx = 16\ngrid.ny = 16\nmap.scenario = file\n").unwrap_err();
        assert!(err.to_string().contains("map.file"));
    }
}
