//! Experiment configuration. JSON, energies in units of J, times in ħ/J.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{flux_drive_pattern, Bond, CavitySpec, DriveSpec, FluxOptions, LatticeSpec};
use crate::protocol::{CavityAssignment, ScanAxis, Thresholds};

pub const DEFAULT_PHOTONS: usize = 3;
pub const DEFAULT_N_TRAJ: usize = 350;
pub const DEFAULT_BASIS_LIMIT: usize = 100_000;
pub const DEFAULT_SCAN_BUDGET: usize = 256;

fn default_photons() -> usize {
    DEFAULT_PHOTONS
}
fn default_m_trunc() -> usize {
    crate::effective::DEFAULT_M_TRUNC
}
fn default_threshold_g() -> f64 {
    crate::effective::ERROR_THRESHOLD_G
}
fn default_basis_limit() -> usize {
    DEFAULT_BASIS_LIMIT
}
fn default_g() -> f64 {
    1.0
}
fn default_n_traj() -> usize {
    DEFAULT_N_TRAJ
}
fn default_true() -> bool {
    true
}
fn default_one() -> f64 {
    1.0
}
fn default_budget() -> usize {
    DEFAULT_SCAN_BUDGET
}
fn default_observables() -> Vec<Observable> {
    vec![Observable::Populations, Observable::Discarded]
}
fn default_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub model: ModelConfig,
    #[serde(default)]
    pub design: DesignConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lattice: LatticeConfig,
    pub drive: DriveConfig,
    pub u: f64,
    /// Lattice excitation number N of the target sector.
    pub excitations: usize,
    #[serde(default)]
    pub hardcore: bool,
    #[serde(default = "default_photons")]
    pub photons: usize,
    #[serde(default = "default_m_trunc")]
    pub m_trunc: usize,
    /// Resonance error threshold in units of g.
    #[serde(default = "default_threshold_g")]
    pub resonance_threshold_g: f64,
    #[serde(default = "default_basis_limit")]
    pub basis_limit: usize,
    #[serde(default)]
    pub cavities: Vec<CavityConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LatticeConfig {
    Ladder { rungs: usize },
    Plaquette,
    Rhombic { cells: usize },
    Custom { n_sites: usize, bonds: Vec<Bond> },
}

impl LatticeConfig {
    pub fn build(&self) -> Result<LatticeSpec> {
        let lat = match self {
            LatticeConfig::Ladder { rungs } if *rungs >= 2 => LatticeSpec::ladder(*rungs),
            LatticeConfig::Ladder { rungs } => {
                return Err(Error::Config(format!("model.lattice.rungs: a ladder needs at least 2 rungs, got {rungs}")))
            }
            LatticeConfig::Plaquette => LatticeSpec::plaquette(),
            LatticeConfig::Rhombic { cells } if *cells >= 1 => LatticeSpec::rhombic(*cells),
            LatticeConfig::Rhombic { .. } => return Err(Error::Config("model.lattice.cells must be at least 1".into())),
            LatticeConfig::Custom { n_sites, bonds } => LatticeSpec::new(*n_sites, bonds.clone(), "custom")?,
        };
        lat.validate()?;
        Ok(lat)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux_over_pi: Option<f64>,
    /// Overrides the amplitude solved from the flux condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_over_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rung_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<i64>>,
}

impl DriveConfig {
    pub fn flux_value(&self) -> Result<Option<f64>> {
        match (self.flux, self.flux_over_pi) {
            (Some(_), Some(_)) => Err(Error::Config("model.drive: give either flux or flux_over_pi, not both".into())),
            (Some(f), None) => Ok(Some(f)),
            (None, Some(f)) => Ok(Some(f * PI)),
            (None, None) => Ok(None),
        }
    }

    fn lambda_override(&self) -> Result<Option<f64>> {
        match (self.lambda, self.lambda_over_omega) {
            (Some(_), Some(_)) => Err(Error::Config("model.drive: give either lambda or lambda_over_omega, not both".into())),
            (Some(l), None) => Ok(Some(l)),
            (None, Some(r)) => Ok(Some(r * self.omega)),
            (None, None) => Ok(None),
        }
    }

    pub fn build(&self, lattice: &LatticeSpec) -> Result<DriveSpec> {
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!("model.drive.omega must be positive, got {}", self.omega)));
        }
        let lambda = self.lambda_override()?;
        let mut drive = match (&self.phases, self.flux_value()?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("model.drive: explicit phases exclude a flux value".into()));
            }
            (Some(ph), None) => {
                let offsets = self.offsets.clone().unwrap_or_else(|| vec![0; lattice.n_sites]);
                let Some(l) = lambda else {
                    return Err(Error::Config("model.drive: explicit phases need lambda or lambda_over_omega".into()));
                };
                DriveSpec { omega: self.omega, lambda: l, phases: ph.clone(), offsets, delta_static: 0.0 }
            }
            (None, Some(f)) => {
                if self.offsets.is_some() {
                    return Err(Error::Config("model.drive.offsets require explicit phases".into()));
                }
                let opts = FluxOptions { rung_ratio: self.rung_ratio.unwrap_or(1.0) };
                flux_drive_pattern(lattice, f, self.omega, opts)?
            }
            (None, None) => {
                let mut d = DriveSpec::undriven(lattice.n_sites, self.omega);
                if let Some(o) = &self.offsets {
                    d.offsets = o.clone();
                }
                d
            }
        };
        if let Some(l) = lambda {
            drive.lambda = l;
        }
        drive.validate(lattice.n_sites)?;
        Ok(drive)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub site: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_over_omega: Option<f64>,
    #[serde(default = "default_g")]
    pub g: f64,
    pub kappa: f64,
    /// Pump amplitude E as [re, im].
    #[serde(default)]
    pub pump: [f64; 2],
    /// Cavity-pump detuning d_j; used when no design assignment sets it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
}

impl CavityConfig {
    pub fn delta_value(&self, omega: f64, j: usize) -> Result<f64> {
        match (self.delta, self.delta_over_omega) {
            (Some(d), None) => Ok(d),
            (None, Some(r)) => Ok(r * omega),
            _ => Err(Error::Config(format!("model.cavities[{j}]: give exactly one of delta, delta_over_omega"))),
        }
    }

    pub fn build(&self, omega: f64, j: usize) -> Result<CavitySpec> {
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("model.cavities[{j}].kappa must be non-negative")));
        }
        let mut c = CavitySpec {
            site: self.site,
            delta: self.delta_value(omega, j)?,
            g: self.g,
            pump_amp: (self.pump[0], self.pump[1]),
            pump_freq: 0.0,
            kappa: self.kappa,
        };
        c.pump_freq = c.pump_freq_for_detuning(self.detuning.unwrap_or(0.0));
        Ok(c)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default)]
    pub assignments: Vec<CavityAssignment>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Runner {
    Full,
    Effective,
    Mcwf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Effective,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    /// One boson on each listed site (repeats stack).
    Sites { sites: Vec<usize> },
    /// Explicit lattice occupations.
    Fock { occupations: Vec<u8> },
    /// Eigenstate η of H_S^eff in the target sector, ascending energy.
    Eigenstate { index: usize },
    /// Maximally mixed state of the target sector.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub runner: Runner,
    /// Model propagated by the mcwf runner.
    #[serde(default)]
    pub mcwf_model: ModelKind,
    /// Direct density-matrix integration of the full model even where
    /// trajectories are the default.
    #[serde(default)]
    pub direct: bool,
    pub initial: InitialState,
    pub t_final: f64,
    pub dt: f64,
    /// Snap sample times to multiples of the drive period.
    #[serde(default = "default_true")]
    pub stroboscopic: bool,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    /// Photon cutoff override for the full model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_photons: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Postselected eigenstate populations p_η.
    Populations,
    /// tr(P_N Π_η ρ) without normalisation.
    RawPopulations,
    Discarded,
    Densities,
    Currents,
    Photons,
    CavityField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    #[serde(default = "default_observables")]
    pub include: Vec<Observable>,
    /// Prefactor of the current operators in units of J.
    #[serde(default = "default_one")]
    pub current_prefactor: f64,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig { include: default_observables(), current_prefactor: 1.0 }
    }
}

impl ObservablesConfig {
    pub fn has(&self, o: Observable) -> bool {
        self.include.contains(&o)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_true")]
    pub spectrum: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), spectrum: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub axes: Vec<ScanAxis>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Points whose smallest dressed denominator is below this many g are flagged.
    #[serde(default = "default_one")]
    pub flag_threshold_g: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        // a manifest wraps the resolved config
        let cfg: ExperimentConfig = match v.get("config") {
            Some(c) if v.get("manifest_version").is_some() => serde_json::from_value(c.clone())
                .map_err(|e| Error::Config(format!("{origin} (config section): {e}")))?,
            _ => serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.excitations == 0 {
            return Err(Error::Config("model.excitations must be at least 1".into()));
        }
        if m.photons == 0 && !m.cavities.is_empty() {
            return Err(Error::Config("model.photons must be at least 1 with cavities".into()));
        }
        let r = &self.run;
        if !(r.t_final >= 0.0) || !r.t_final.is_finite() {
            return Err(Error::Config(format!("run.t_final must be non-negative, got {}", r.t_final)));
        }
        if !(r.dt > 0.0) {
            return Err(Error::Config(format!("run.dt must be positive, got {}", r.dt)));
        }
        if r.n_traj == 0 {
            return Err(Error::Config("run.n_traj must be positive".into()));
        }
        for (k, a) in self.design.assignments.iter().enumerate() {
            if a.cavity >= m.cavities.len() {
                return Err(Error::Config(format!(
                    "design.assignments[{k}].cavity = {} but only {} cavities are configured",
                    a.cavity,
                    m.cavities.len()
                )));
            }
        }
        if let Some(s) = &self.scan {
            if s.axes.is_empty() {
                return Err(Error::Config("scan.axes is empty".into()));
            }
        }
        Ok(())
    }

    /// Set a named scan parameter. Cavity-specific names take the form
    /// `cavity<j>.<field>`; bare cavity fields apply to every cavity.
    pub fn set_param(&mut self, name: &str, v: f64) -> Result<()> {
        let unknown = || Error::Config(format!("unknown scan parameter '{name}'"));
        if let Some(rest) = name.strip_prefix("cavity") {
            let (idx, field) = rest.split_once('.').ok_or_else(unknown)?;
            let j: usize = idx.parse().map_err(|_| unknown())?;
            let n = self.model.cavities.len();
            let c = self
                .model
                .cavities
                .get_mut(j)
                .ok_or_else(|| Error::Config(format!("scan parameter '{name}': only {n} cavities")))?;
            return set_cavity(c, field, v).ok_or_else(unknown);
        }
        match name {
            "u" => self.model.u = v,
            "omega" => self.model.drive.omega = v,
            "flux" => {
                self.model.drive.flux = Some(v);
                self.model.drive.flux_over_pi = None;
            }
            "flux_over_pi" => {
                self.model.drive.flux_over_pi = Some(v);
                self.model.drive.flux = None;
            }
            "lambda_over_omega" => {
                self.model.drive.lambda_over_omega = Some(v);
                self.model.drive.lambda = None;
            }
            "t_final" => self.run.t_final = v,
            "seed" => self.run.seed = v as u64,
            _ => {
                if self.model.cavities.is_empty() {
                    return Err(unknown());
                }
                for c in &mut self.model.cavities {
                    set_cavity(c, name, v).ok_or_else(unknown)?;
                }
            }
        }
        Ok(())
    }
}

fn set_cavity(c: &mut CavityConfig, field: &str, v: f64) -> Option<()> {
    match field {
        "delta" => {
            c.delta = Some(v);
            c.delta_over_omega = None;
        }
        "delta_over_omega" => {
            c.delta_over_omega = Some(v);
            c.delta = None;
        }
        "kappa" => c.kappa = v,
        "g" => c.g = v,
        "pump" => c.pump = [v, 0.0],
        "detuning" => c.detuning = Some(v),
        _ => return None,
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "t",
        "model": {
            "lattice": {"kind": "plaquette"},
            "drive": {"omega": 20, "flux_over_pi": 0.5},
            "u": -8, "excitations": 1,
            "cavities": [{"site": 0, "delta": 35.2, "kappa": 0.1, "pump": [1, 0]}]
        },
        "run": {"runner": "effective", "initial": {"kind": "sites", "sites": [1]}, "t_final": 10, "dt": 1}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL, "t").unwrap();
        assert_eq!(c.model.photons, 3);
        assert_eq!(c.run.n_traj, 350);
        assert!(c.run.stroboscopic);
        assert_eq!(c.observables.include, vec![Observable::Populations, Observable::Discarded]);
        let back = ExperimentConfig::from_json(&c.to_json(), "t").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_named() {
        let bad = MINIMAL.replace("\"u\": -8", "\"u\": -8, \"uu\": 1");
        let e = ExperimentConfig::from_json(&bad, "cfg.json").unwrap_err();
        let s = e.to_string();
        assert!(s.contains("uu") && s.contains("line"), "{s}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn drive_resolution() {
        let c = ExperimentConfig::from_json(MINIMAL, "t").unwrap();
        let lat = c.model.lattice.build().unwrap();
        let d = c.model.drive.build(&lat).unwrap();
        assert!((d.lambda / 20.0 * (PI / 4.0).sin() - 0.7174).abs() < 1e-3);
        let mut dc = c.model.drive.clone();
        dc.lambda_over_omega = Some(1.0);
        assert_eq!(dc.build(&lat).unwrap().lambda, 20.0);
        dc.flux = Some(1.0);
        assert!(dc.build(&lat).is_err());
    }

    #[test]
    fn scan_parameters() {
        let mut c = ExperimentConfig::from_json(MINIMAL, "t").unwrap();
        c.set_param("delta", 40.0).unwrap();
        assert_eq!(c.model.cavities[0].delta, Some(40.0));
        c.set_param("cavity0.delta_over_omega", 2.0).unwrap();
        assert_eq!(c.model.cavities[0].delta_value(20.0, 0).unwrap(), 40.0);
        c.set_param("flux_over_pi", 0.4).unwrap();
        assert_eq!(c.model.drive.flux_over_pi, Some(0.4));
        assert!(c.set_param("cavity3.delta", 1.0).is_err());
        assert!(c.set_param("nonsense", 1.0).is_err());
    }
}
