//! Built-in experiments, one per reproduced figure.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const PRESETS: &[(&str, &str, &str)] = &[
    (
        "fig3c_ladder_1exc",
        "6-site flux ladder, one excitation, two-cavity cascade to the ground state",
        include_str!("../../presets/fig3c_ladder_1exc.json"),
    ),
    (
        "fig3d_ladder_2exc_hardcore",
        "6-site flux ladder, two hardcore excitations, three cavities",
        include_str!("../../presets/fig3d_ladder_2exc_hardcore.json"),
    ),
    (
        "fig4_interband_100",
        "100-site ladder with fast rungs, interband cooling with two end cavities",
        include_str!("../../presets/fig4_interband_100.json"),
    ),
    (
        "sm_3plaquette",
        "8-site ladder (three plaquettes), ground-state preparation",
        include_str!("../../presets/sm_3plaquette.json"),
    ),
    ("sm_abcage", "rhombic chain at flux pi, Aharonov-Bohm cage preparation", include_str!("../../presets/sm_abcage.json")),
    (
        "sm_plaquette_scan_U155",
        "single plaquette, detuning scan at |U| = 15.5",
        include_str!("../../presets/sm_plaquette_scan_U155.json"),
    ),
    (
        "sm_plaquette_scan_U8",
        "single plaquette, detuning scan at |U| = 8",
        include_str!("../../presets/sm_plaquette_scan_U8.json"),
    ),
    (
        "sm_autostab",
        "single plaquette, two cavities stabilising the first excited state",
        include_str!("../../presets/sm_autostab.json"),
    ),
];

pub fn preset_ids() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn preset(id: &str) -> Result<ExperimentConfig> {
    let Some((_, _, text)) = PRESETS.iter().find(|p| p.0 == id) else {
        return Err(Error::Config(format!("unknown preset '{id}'; available: {}", preset_ids().join(", "))));
    };
    ExperimentConfig::from_json(text, &format!("preset {id}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_parse() {
        for id in preset_ids() {
            let c = preset(id).unwrap();
            assert_eq!(c.name, id);
            assert_eq!(c.preset.as_deref(), Some(id));
        }
        assert!(preset("fig9").is_err());
    }
}
