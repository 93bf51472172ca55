//! Command-line front end: config ingestion, presets, orchestration and
//! file emission.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::protocol::{scan, PointRun, ScanAxis, ScanResult};
use config::{ExperimentConfig, Runner};
use output::{DesignReport, Manifest, Meta, Resolved, MANIFEST_VERSION, VERSION};
use runner::{check_regime, columns, evolve, prepare, Prepared, TimeSeries};

#[derive(Debug, Parser)]
#[command(name = "floqres", version, about = "Floquet-dissipative state preparation in driven lattices coupled to cavities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design, validate and propagate an experiment.
    Run(CommonArgs),
    /// Design and validate only.
    Design(CommonArgs),
    /// Evaluate the experiment on the config's scan grid.
    Scan(CommonArgs),
    /// Print the built-in presets.
    ListPresets,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Experiment config or an emitted manifest.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for trajectories and scan points.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Proceed even when the regime validation fails.
    #[arg(long)]
    pub force: bool,
    #[arg(long, value_enum)]
    pub runner: Option<Runner>,
}

impl CommonArgs {
    /// The config with command-line overrides applied.
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(p), None) => presets::preset(p)?,
            (None, Some(path)) => ExperimentConfig::load(path)?,
            _ => return Err(Error::Config("give exactly one of --preset or --config".into())),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(r) = self.runner {
            cfg.run.runner = r;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.display().to_string();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Files written by a command, relative to the output directory.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub prepared: Option<Prepared>,
    pub timeseries: Option<TimeSeries>,
    pub scan: Option<ScanResult>,
}

fn meta(cfg: &ExperimentConfig) -> Meta {
    Meta::new(cfg)
}

fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, p: Option<&Prepared>, ts: Option<&TimeSeries>, outputs: &mut Vec<String>) -> Result<()> {
    outputs.push("manifest.json".into());
    let m = Manifest {
        manifest_version: MANIFEST_VERSION,
        code_version: VERSION,
        command,
        config: cfg,
        resolved: p.map(|p| Resolved {
            drive: &p.drive,
            cavities: &p.model.cavities,
            effective_dim: p.eff.basis.len(),
            run_dim: ts.map(|t| t.dim),
            plan: ts.map(|t| t.plan),
        }),
        outputs: outputs.clone(),
    };
    output::write_json(&dir.join("manifest.json"), &m)
}

fn design_outputs(dir: &Path, cfg: &ExperimentConfig, p: &Prepared, outputs: &mut Vec<String>) -> Result<()> {
    output::write_json(&dir.join("design.json"), &DesignReport::new(p))?;
    outputs.push("design.json".into());
    if cfg.output.spectrum {
        output::write_spectrum(&dir.join("spectrum.csv"), &meta(cfg), &p.spectrum)?;
        outputs.push("spectrum.csv".into());
    }
    Ok(())
}

fn begin(cfg: &ExperimentConfig, command: &str, force: bool) -> Result<(PathBuf, Prepared, Vec<String>)> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let p = prepare(cfg)?;
    let mut outputs = Vec::new();
    design_outputs(&dir, cfg, &p, &mut outputs)?;
    if let Err(e) = check_regime(&p, force) {
        write_manifest(&dir, command, cfg, Some(&p), None, &mut outputs)?;
        return Err(e);
    }
    Ok((dir, p, outputs))
}

/// Design report only.
pub fn design_experiment(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let (dir, p, mut outputs) = begin(cfg, "design", force)?;
    write_manifest(&dir, "design", cfg, Some(&p), None, &mut outputs)?;
    Ok(Outcome { outputs, prepared: Some(p), ..Default::default() })
}

/// Design, validate, propagate and write the time series.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let (dir, p, mut outputs) = begin(cfg, "run", force)?;
    if cfg.observables.include.is_empty() {
        write_manifest(&dir, "run", cfg, Some(&p), None, &mut outputs)?;
        return Ok(Outcome { outputs, prepared: Some(p), ..Default::default() });
    }
    let ts = evolve(cfg, &p)?;
    let meta = meta(cfg)
        .with("plan", serde_json::to_value(ts.plan).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default())
        .with("dim", ts.dim)
        .with("n_traj", ts.n_traj)
        .with("norm_drift", format!("{:.3e}", ts.norm_drift));
    output::write_timeseries(&dir.join("timeseries.csv"), &meta, &ts)?;
    outputs.push("timeseries.csv".into());
    write_manifest(&dir, "run", cfg, Some(&p), Some(&ts), &mut outputs)?;
    Ok(Outcome { outputs, prepared: Some(p), timeseries: Some(ts), ..Default::default() })
}

fn point_config(base: &ExperimentConfig, axes: &[ScanAxis], point: &[f64]) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    c.scan = None;
    for (a, &v) in axes.iter().zip(point) {
        c.set_param(&a.name, v)?;
    }
    Ok(c)
}

/// Scan the grid; resonant points are flagged but still evaluated when the
/// effective model can be built.
pub fn scan_experiment(cfg: &ExperimentConfig, force: bool) -> Result<Outcome> {
    let Some(sc) = &cfg.scan else {
        return Err(Error::Config("scan requires a scan section".into()));
    };
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    let first: Vec<f64> = sc.axes.iter().map(|a| a.values.first().copied().unwrap_or(f64::NAN)).collect();
    let cols = {
        let c0 = point_config(cfg, &sc.axes, &first)?;
        let p0 = prepare(&c0).or_else(|_| prepare(cfg))?;
        let mut c = columns(&c0, &p0);
        let se: Vec<String> = c.iter().map(|x| format!("{x}_se")).collect();
        c.extend(se);
        c
    };
    let flag_g = sc.flag_threshold_g;
    let res = scan(&sc.axes, &cols, sc.budget, |pt| {
        let c = point_config(cfg, &sc.axes, pt)?;
        let p = prepare(&c)?;
        let gmin = p.model.cavities.iter().map(|c| c.g.abs()).fold(f64::INFINITY, f64::min);
        let dmin = p.eff.resonance.min_abs_denominator();
        let mut msgs = Vec::new();
        let flagged = dmin < flag_g * gmin;
        if flagged {
            if let Some(e) = p.eff.resonance.min_entry() {
                msgs.push(format!("resonance: cavity {}, n = {}, m = {}, denominator {:.3e}", e.cavity, e.n, e.m, e.denominator));
            }
        }
        if let Err(e) = check_regime(&p, force) {
            msgs.push(e.to_string());
        }
        if c.observables.include.is_empty() {
            return Ok(PointRun { series: Vec::new(), flagged, message: msgs.join("; ") });
        }
        let ts = evolve(&c, &p)?;
        let series = ts
            .times
            .iter()
            .zip(ts.values.iter().zip(&ts.std_err))
            .map(|(&t, (v, s))| {
                let mut x = v.clone();
                x.extend(s);
                (t, x)
            })
            .collect();
        Ok(PointRun { series, flagged, message: msgs.join("; ") })
    })?;
    let m = meta(cfg).with("points", res.rows.iter().map(|r| r.point).max().map_or(0, |x| x + 1));
    output::write_scan(&dir.join("scan.csv"), &m, &res)?;
    output::write_scan_points(&dir.join("scan_points.csv"), &m, &res)?;
    let mut outputs = vec!["scan.csv".to_string(), "scan_points.csv".to_string()];
    write_manifest(&dir, "scan", cfg, None, None, &mut outputs)?;
    Ok(Outcome { outputs, scan: Some(res), ..Default::default() })
}

fn set_workers(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    Ok(())
}

fn report(o: &Outcome, dir: &str) {
    if let Some(p) = &o.prepared {
        eprintln!("sector N = {}, {} states, regime {:?}", p.sector(), p.spectrum.len(), p.validity.overall());
        for c in &p.design.cavities {
            eprintln!("  cavity {} (site {}): d = {:.5}, nbar = {:.3}", c.cavity, c.site, c.detuning, c.nbar);
        }
    }
    if let Some(ts) = o.timeseries.as_ref() {
        eprintln!("{} samples, dim {}, {:?}", ts.times.len(), ts.dim, ts.plan);
    }
    eprintln!("wrote {} to {dir}", o.outputs.join(", "));
}

/// Execute a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListPresets => {
            for (id, about, _) in presets::PRESETS {
                println!("{id:<28} {about}");
            }
            Ok(())
        }
        Command::Run(a) => {
            set_workers(a.workers)?;
            let cfg = a.load()?;
            let o = run_experiment(&cfg, a.force)?;
            report(&o, &cfg.output.dir);
            Ok(())
        }
        Command::Design(a) => {
            set_workers(a.workers)?;
            let cfg = a.load()?;
            let o = design_experiment(&cfg, a.force)?;
            report(&o, &cfg.output.dir);
            Ok(())
        }
        Command::Scan(a) => {
            set_workers(a.workers)?;
            let cfg = a.load()?;
            let o = scan_experiment(&cfg, a.force)?;
            if let Some(r) = &o.scan {
                let flagged = r.rows.iter().filter(|r| r.flagged).map(|r| r.point).collect::<std::collections::BTreeSet<_>>();
                eprintln!("{} rows, flagged points {:?}", r.rows.len(), flagged);
            }
            report(&o, &cfg.output.dir);
            Ok(())
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
