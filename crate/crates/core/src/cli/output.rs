//! CSV and JSON emission. CSV files open with a `#`-prefixed metadata block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::runner::{Prepared, TimeSeries};
use crate::error::{Error, Result};
use crate::model::{CavitySpec, DriveSpec};
use crate::protocol::{ChiTable, CavityDesign, EffectiveSpectrum, ScanResult, ValidityReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Meta {
    pub preset: String,
    pub seed: u64,
    pub name: String,
    pub extra: Vec<(String, String)>,
}

impl Meta {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Meta {
            preset: cfg.preset.clone().unwrap_or_else(|| "none".into()),
            seed: cfg.run.seed,
            name: cfg.name.clone(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, k: &str, v: impl ToString) -> Self {
        self.extra.push((k.into(), v.to_string()));
        self
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn open_csv(path: &Path, meta: &Meta) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# floqres {VERSION}")?;
    writeln!(w, "# preset: {}", meta.preset)?;
    writeln!(w, "# seed: {}", meta.seed)?;
    writeln!(w, "# name: {}", meta.name)?;
    for (k, v) in &meta.extra {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(csv::Writer::from_writer(w))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// One row per sample time; every value column is followed in the header
/// order by its `_se` partner after all value columns.
pub fn write_timeseries(path: &Path, meta: &Meta, ts: &TimeSeries) -> Result<()> {
    let mut w = open_csv(path, meta)?;
    let mut head = vec!["t".to_string()];
    head.extend(ts.columns.iter().cloned());
    head.extend(ts.columns.iter().map(|c| format!("{c}_se")));
    w.write_record(&head).map_err(csv_err)?;
    for (i, &t) in ts.times.iter().enumerate() {
        let mut rec = vec![num(t)];
        rec.extend(ts.values[i].iter().map(|&x| num(x)));
        rec.extend(ts.std_err[i].iter().map(|&x| num(x)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum(path: &Path, meta: &Meta, sp: &EffectiveSpectrum) -> Result<()> {
    let mut w = open_csv(path, meta)?;
    w.write_record(["eta", "energy"]).map_err(csv_err)?;
    for (e, &x) in sp.energies.iter().enumerate() {
        w.write_record([e.to_string(), num(x)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (point, time, observable).
pub fn write_scan(path: &Path, meta: &Meta, r: &ScanResult) -> Result<()> {
    let mut w = open_csv(path, meta)?;
    let mut head = vec!["point".to_string()];
    head.extend(r.axes.iter().cloned());
    head.extend(["t", "observable", "value", "flagged"].map(String::from));
    w.write_record(&head).map_err(csv_err)?;
    for row in &r.rows {
        for (c, &v) in r.columns.iter().zip(&row.values) {
            let mut rec = vec![row.point.to_string()];
            rec.extend(row.params.iter().map(|&x| num(x)));
            rec.push(num(row.t));
            rec.push(c.clone());
            rec.push(num(v));
            rec.push((row.flagged as u8).to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per scan point with its flag and diagnostic message.
pub fn write_scan_points(path: &Path, meta: &Meta, r: &ScanResult) -> Result<()> {
    let mut w = open_csv(path, meta)?;
    let mut head = vec!["point".to_string()];
    head.extend(r.axes.iter().cloned());
    head.extend(["flagged", "message"].map(String::from));
    w.write_record(&head).map_err(csv_err)?;
    let mut last = None;
    for row in &r.rows {
        if last == Some(row.point) {
            continue;
        }
        last = Some(row.point);
        let mut rec = vec![row.point.to_string()];
        rec.extend(row.params.iter().map(|&x| num(x)));
        rec.push((row.flagged as u8).to_string());
        rec.push(row.message.clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct DesignReport<'a> {
    pub sector: usize,
    pub energies: &'a [f64],
    pub min_denominator: f64,
    pub cavities: &'a [CavityDesign],
    pub chi_tables: &'a [ChiTable],
    pub validity: &'a ValidityReport,
    pub overall: crate::protocol::Status,
}

impl<'a> DesignReport<'a> {
    pub fn new(p: &'a Prepared) -> Self {
        DesignReport {
            sector: p.design.sector,
            energies: &p.design.energies,
            min_denominator: p.eff.resonance.min_abs_denominator(),
            cavities: &p.design.cavities,
            chi_tables: &p.design.chi_tables,
            validity: &p.validity,
            overall: p.validity.overall(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Parameters derived during resolution, echoed for provenance.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved<'a> {
    pub drive: &'a DriveSpec,
    pub cavities: &'a [CavitySpec],
    pub effective_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<super::runner::Plan>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub manifest_version: u32,
    pub code_version: &'static str,
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub resolved: Option<Resolved<'a>>,
    pub outputs: Vec<String>,
}
