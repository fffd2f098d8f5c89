//! CLI: run scenarios, convergence studies, the projection Lipschitz probe
//! and the invariant check suite.
//!
//! Exit codes: 0 success, 2 config error, 3 engine error, 4 halted by the
//! systole floor.

use std::path::PathBuf;
use std::process::ExitCode;

use harmflow::config::{parse_config, RunConfig};
use harmflow::error::Error;
use harmflow::run::{convergence_study, lipschitz_box_probe, run_scenario};

const USAGE: &str = "\
usage: harmflow <run | study | probe | check> --config PATH [options]

subcommands:
  run     execute the configured scenario, emit CSV series + JSON summary
  study   convergence study of the energy-identity residual in h and dt
  probe   projection Lipschitz probe over a Teichmueller parameter box
  check   run the discrete-invariant suite on the configured grid

options:
  --config PATH   configuration file (required)
  --out DIR       override output.dir
  --seed N        override probe.seed
  --steps N       override flow.max_steps
";

struct Args {
    command: String,
    config: Option<PathBuf>,
    out: Option<String>,
    seed: Option<u64>,
    steps: Option<u64>,
}

fn parse_args() -> Result<Args, String> {
    let mut argv = std::env::args().skip(1);
    let command = argv.next().ok_or_else(|| USAGE.to_string())?;
    let mut args = Args { command, config: None, out: None, seed: None, steps: None };
    while let Some(flag) = argv.next() {
        let mut take = |name: &str| argv.next().ok_or(format!("missing value for {name}"));
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(take("--config")?)),
            "--out" => args.out = Some(take("--out")?),
            "--seed" => {
                args.seed = Some(take("--seed")?.parse().map_err(|_| "bad --seed value".to_string())?)
            }
            "--steps" => {
                args.steps = Some(take("--steps")?.parse().map_err(|_| "bad --steps value".to_string())?)
            }
            "--help" | "-h" => return Err(USAGE.to_string()),
            other => return Err(format!("unknown flag '{other}'\n{USAGE}")),
        }
    }
    Ok(args)
}

fn load_config(args: &Args) -> Result<RunConfig, Error> {
    let path = args.config.as_ref().ok_or_else(|| Error::ConfigValue {
        key: "--config".into(),
        message: "required flag missing".into(),
    })?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
        cfg.echo.insert("output.dir".into(), out.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.echo.insert("probe.seed".into(), seed.to_string());
    }
    if let Some(steps) = args.steps {
        cfg.flow.max_steps = steps;
        cfg.echo.insert("flow.max_steps".into(), steps.to_string());
    }
    Ok(cfg)
}

fn dispatch(args: &Args) -> Result<u8, Error> {
    let cfg = load_config(args)?;
    match args.command.as_str() {
        "run" => {
            let out = run_scenario(&cfg)?;
            println!(
                "run: {} steps, E {} -> {}, wp_length {}, events {}",
                out.summary.final_step,
                out.summary.initial_energy,
                out.summary.final_energy,
                out.summary.wp_length,
                out.summary.events.len()
            );
            println!("series:  {}", out.csv_path.display());
            println!("summary: {}", out.summary_path.display());
            Ok(if out.summary.halted { 4 } else { 0 })
        }
        "study" => {
            let rep = convergence_study(&cfg, &cfg.study_grids, &cfg.study_dts)?;
            for (n, h, r) in &rep.h_entries {
                println!("h-study: n = {n:4}  h = {h:.5}  residual = {r:.6e}");
            }
            match (rep.h_exact, rep.h_slope) {
                (true, _) => println!("h-slope: exact (all residuals zero)"),
                (false, Some(s)) => println!("h-slope: {s:.3}"),
                _ => {}
            }
            for (dt, r) in &rep.dt_entries {
                println!("dt-study: dt = {dt:.3e}  residual = {r:.6e}");
            }
            match (rep.dt_exact, rep.dt_slope) {
                (true, _) => println!("dt-slope: exact (all residuals zero)"),
                (false, Some(s)) => println!("dt-slope: {s:.3}"),
                _ => {}
            }
            println!("{}", serde_json::to_string(&rep).map_err(|e| Error::Engine(e.to_string()))?);
            Ok(0)
        }
        "probe" => {
            let rep = lipschitz_box_probe(&cfg)?;
            println!(
                "probe: {} pairs x {} tensors, max ratio {:.6}, mean ratio {:.6}",
                rep.pairs, rep.samples_per_pair, rep.max_ratio, rep.mean_ratio
            );
            println!("{}", serde_json::to_string(&rep).map_err(|e| Error::Engine(e.to_string()))?);
            Ok(0)
        }
        "check" => {
            let results = harmflow::check::run_invariant_suite(&cfg)?;
            let mut all_pass = true;
            for r in &results {
                println!("{}: {} ({})", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
                all_pass &= r.pass;
            }
            Ok(if all_pass { 0 } else { 3 })
        }
        other => Err(Error::ConfigValue {
            key: "subcommand".into(),
            message: format!("unknown subcommand '{other}'"),
        }),
    }
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
