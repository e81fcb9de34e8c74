//! Scenario files: TOML sections, built-in presets, `key=value` overrides and
//! resolution into validated simulation settings.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_dt, default_stride, IntegrationSettings, Scheme};
use crate::error::{Error, Result, Violation};
use crate::model::{Band, Boundary, ChainParams, GaussianPacket, Mode};
use crate::observables::ObservableKind;
use crate::spectra::Window;

/// Built-in presets as `(name, toml)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
    ("fig6", include_str!("../../presets/fig6.toml")),
    ("fig7", include_str!("../../presets/fig7.toml")),
    ("fig9", include_str!("../../presets/fig9.toml")),
    ("fig11", include_str!("../../presets/fig11.toml")),
    ("fig12", include_str!("../../presets/fig12.toml")),
    ("fig13", include_str!("../../presets/fig13.toml")),
    ("fig15", include_str!("../../presets/fig15.toml")),
    ("fig18", include_str!("../../presets/fig18.toml")),
    ("fig20", include_str!("../../presets/fig20.toml")),
];

/// Upper bound on time rows written to the long-format and grid CSVs when
/// `[output] every` is not given.
pub const DEFAULT_MAX_ROWS: usize = 1000;

const SECTIONS: &[(&str, &[&str])] = &[
    ("chain", &["n_sites", "lattice_const_nm", "t_a", "t_b", "boundary", "mode"]),
    ("drive", &["omega0", "drive_freq", "rabi", "bloch"]),
    ("loss", &["gamma", "q_factor"]),
    ("init", &["center_site", "width_sites", "band", "phase_per_site"]),
    ("integrate", &["t_end", "bloch_periods", "drive_periods", "dt", "record_every"]),
    (
        "spectrum",
        &["sites", "observables", "window", "zero_pad_factor", "rel_threshold", "min_separation_bins", "m_max", "n_max", "tol", "omega_bar"],
    ),
    ("output", &["every", "site_every"]),
];

/// Keys that exclude each other within a section; setting one drops the others.
const EXCLUSIVE: &[&[&str]] = &[&["gamma", "q_factor"], &["t_end", "bloch_periods", "drive_periods"]];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub n_sites: Option<usize>,
    pub lattice_const_nm: Option<f64>,
    pub t_a: Option<f64>,
    pub t_b: Option<f64>,
    pub boundary: Option<Boundary>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub omega0: Option<f64>,
    pub drive_freq: Option<f64>,
    pub rabi: Option<f64>,
    pub bloch: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub gamma: Option<f64>,
    pub q_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub center_site: Option<f64>,
    pub width_sites: Option<f64>,
    pub band: Option<Band>,
    pub phase_per_site: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    pub t_end: Option<f64>,
    pub bloch_periods: Option<f64>,
    pub drive_periods: Option<f64>,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub sites: Option<Vec<usize>>,
    pub observables: Option<Vec<ObservableKind>>,
    pub window: Option<Window>,
    pub zero_pad_factor: Option<usize>,
    pub rel_threshold: Option<f64>,
    pub min_separation_bins: Option<usize>,
    pub m_max: Option<u32>,
    pub n_max: Option<u32>,
    pub tol: Option<f64>,
    pub omega_bar: Option<OmegaBarSetting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub every: Option<usize>,
    pub site_every: Option<usize>,
}

/// On-disk layout of a scenario. Every key is optional; missing keys take the
/// defaults of the strong-coupling scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub integrate: IntegrateSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Where the mean Rabi frequency used for labelling comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaBarSetting {
    Value(f64),
    Named(OmegaBarSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaBarSource {
    /// Quadrature matching the mode: RWA form for `full`/`rwa`, Stark form for `stark`.
    Auto,
    Floquet,
}

impl std::str::FromStr for OmegaBarSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Named(OmegaBarSource::Auto)),
            "floquet" => Ok(Self::Named(OmegaBarSource::Floquet)),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(Self::Value)
                .ok_or_else(|| Error::Config(format!("omega_bar must be auto, floquet or a number ≥ 0, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub observables: Vec<ObservableKind>,
    pub window: Window,
    pub zero_pad_factor: usize,
    pub rel_threshold: f64,
    pub min_separation_bins: usize,
    pub m_max: u32,
    pub n_max: u32,
    pub tol: f64,
    pub omega_bar: OmegaBarSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSettings {
    /// Snapshot stride for the long-format and grid CSVs.
    pub every: usize,
    pub site_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: ChainParams,
    pub packet: GaussianPacket,
    pub integration: IntegrationSettings,
    pub spectrum_sites: Vec<usize>,
    pub spectrum: SpectrumSettings,
    pub output: OutputSettings,
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Raw table for a preset name or a file path. JSON files are taken to be
/// run metadata and contribute their `scenario` block.
pub fn load_table(spec: &str) -> Result<toml::Table> {
    if let Some(src) = preset_source(spec) {
        return parse_table(src, spec);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Config(format!(
            "'{spec}' is neither a preset nor a file; presets: {}",
            preset_names().join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let meta: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
        let block = meta.get("scenario").cloned().unwrap_or(meta);
        let file: ScenarioFile = serde_json::from_value(block).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
        return to_table(&file);
    }
    parse_table(&text, spec)
}

fn to_table(file: &ScenarioFile) -> Result<toml::Table> {
    toml::Table::try_from(file).map_err(|e| Error::Config(e.to_string()))
}

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn parse_value(raw: &str) -> toml::Value {
    // anything that is not a TOML literal is taken as a bare string
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `key=value` override. The key is either `section.key` or a
/// bare key, which is unique across sections.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    if key == "name" {
        table.insert("name".into(), toml::Value::String(raw.trim_matches('"').to_string()));
        return Ok(());
    }
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s, f),
        None => (section_of(key).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?, key),
    };
    let known = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, keys)| *keys);
    if !known.is_some_and(|keys| keys.contains(&field)) {
        return Err(Error::Config(format!("unknown key '{key}'")));
    }
    let entry = table.entry(section).or_insert_with(|| toml::Value::Table(Default::default()));
    let sec = entry
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("'{section}' is not a section")))?;
    for group in EXCLUSIVE {
        if group.contains(&field) {
            for other in group.iter().filter(|k| **k != field) {
                sec.remove(*other);
            }
        }
    }
    sec.insert(field.to_string(), parse_value(raw));
    Ok(())
}

/// Loads a preset or file, applies overrides and resolves it.
pub fn load_scenario(spec: &str, overrides: &[String]) -> Result<Scenario> {
    let mut table = load_table(spec)?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let file: ScenarioFile = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("{spec}: {e}")))?;
    let fallback = if preset_source(spec).is_some() { spec.to_string() } else { "custom".to_string() };
    Scenario::from_file(&file, &fallback)
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Scenario::from_file(&file, "custom")
}

fn default_n_max(params: &ChainParams) -> u32 {
    if params.bloch > 0.0 {
        (params.omega0 / params.bloch).ceil().clamp(1.0, 64.0) as u32
    } else {
        1
    }
}

impl Scenario {
    pub fn from_file(file: &ScenarioFile, fallback_name: &str) -> Result<Self> {
        let base = ChainParams::default();
        let c = &file.chain;
        let d = &file.drive;
        let omega0 = d.omega0.unwrap_or(base.omega0);
        let gamma = match (file.loss.gamma, file.loss.q_factor) {
            (Some(_), Some(_)) => return Err(Error::Config("[loss] takes gamma or q_factor, not both".into())),
            (Some(g), None) => g,
            (None, Some(q)) => {
                if !(q > 0.0) {
                    return Err(Error::InvalidParams(vec![Violation::new("q_factor", "q_factor must be > 0")]));
                }
                ChainParams::gamma_from_q(omega0, q)
            }
            (None, None) => 0.0,
        };
        let params = ChainParams {
            n_sites: c.n_sites.unwrap_or(base.n_sites),
            lattice_const_nm: c.lattice_const_nm.unwrap_or(base.lattice_const_nm),
            omega0,
            drive_freq: d.drive_freq.unwrap_or(base.drive_freq),
            rabi: d.rabi.unwrap_or(base.rabi),
            bloch: d.bloch.unwrap_or(base.bloch),
            t_a: c.t_a.unwrap_or(base.t_a),
            t_b: c.t_b.unwrap_or(base.t_b),
            gamma,
            boundary: c.boundary.unwrap_or(base.boundary),
            mode: c.mode.unwrap_or(base.mode),
        };
        params.validate()?;

        let pb = GaussianPacket::default();
        let i = &file.init;
        let packet = GaussianPacket {
            center_site: i.center_site.unwrap_or(pb.center_site),
            width_sites: i.width_sites.unwrap_or(pb.width_sites),
            band: i.band.unwrap_or(pb.band),
            phase_per_site: i.phase_per_site.unwrap_or(pb.phase_per_site),
        };
        crate::model::make_initial_state(&params, &packet)?;

        let g = &file.integrate;
        let t_end = match (g.t_end, g.bloch_periods, g.drive_periods) {
            (Some(t), None, None) => t,
            (None, Some(k), None) => {
                if !(params.bloch > 0.0) {
                    return Err(Error::Config("bloch_periods needs bloch > 0".into()));
                }
                k * 2.0 * PI / params.bloch
            }
            (None, None, Some(k)) => k * 2.0 * PI / params.drive_freq,
            (None, None, None) => 16.0 * PI / params.bloch.max(f64::MIN_POSITIVE),
            _ => return Err(Error::Config("[integrate] takes one of t_end, bloch_periods, drive_periods".into())),
        };
        let dt = g.dt.unwrap_or_else(|| default_dt(&params));
        let integration = IntegrationSettings {
            dt,
            t_end,
            record_every: g.record_every.unwrap_or_else(|| default_stride(dt)),
            scheme: Scheme::Rk4,
        };
        integration.validate(&params)?;

        let s = &file.spectrum;
        let spectrum_sites = s.sites.clone().unwrap_or_else(|| vec![params.n_sites / 2]);
        let bad: Vec<Violation> = spectrum_sites
            .iter()
            .filter(|&&j| j >= params.n_sites)
            .map(|j| Violation::new("sites", format!("spectrum site {j} outside 0..{}", params.n_sites)))
            .collect();
        if !bad.is_empty() {
            return Err(Error::InvalidParams(bad));
        }
        let zero_pad_factor = s.zero_pad_factor.unwrap_or(4).max(1);
        let spectrum = SpectrumSettings {
            observables: s.observables.clone().unwrap_or_else(|| vec![ObservableKind::Current]),
            window: s.window.unwrap_or_default(),
            zero_pad_factor,
            rel_threshold: s.rel_threshold.unwrap_or(0.01),
            min_separation_bins: s.min_separation_bins.unwrap_or(zero_pad_factor),
            m_max: s.m_max.unwrap_or(2),
            n_max: s.n_max.unwrap_or_else(|| default_n_max(&params)),
            tol: s.tol.unwrap_or(params.bloch / 4.0),
            omega_bar: s.omega_bar.unwrap_or(OmegaBarSetting::Named(OmegaBarSource::Auto)),
        };
        if !(spectrum.rel_threshold > 0.0 && spectrum.rel_threshold < 1.0) {
            return Err(Error::InvalidParams(vec![Violation::new("rel_threshold", "rel_threshold must lie in (0, 1)")]));
        }
        if !(spectrum.tol > 0.0) {
            return Err(Error::InvalidParams(vec![Violation::new("tol", "tol must be > 0")]));
        }
        if spectrum.observables.iter().any(|k| !k.per_site()) {
            return Err(Error::InvalidParams(vec![Violation::new(
                "observables",
                "spectrum observables must be per-site (current, inversion, dipole)",
            )]));
        }

        let snapshots = integration.snapshot_count();
        let output = OutputSettings {
            every: file.output.every.unwrap_or_else(|| snapshots.div_ceil(DEFAULT_MAX_ROWS)).max(1),
            site_every: file.output.site_every.unwrap_or(1).max(1),
        };

        Ok(Self {
            name: file.name.clone().unwrap_or_else(|| fallback_name.to_string()),
            params,
            packet,
            integration,
            spectrum_sites,
            spectrum,
            output,
        })
    }

    /// Fully explicit file form; loading it back reproduces this scenario.
    pub fn to_file(&self) -> ScenarioFile {
        let p = &self.params;
        let s = &self.spectrum;
        ScenarioFile {
            name: Some(self.name.clone()),
            chain: ChainSection {
                n_sites: Some(p.n_sites),
                lattice_const_nm: Some(p.lattice_const_nm),
                t_a: Some(p.t_a),
                t_b: Some(p.t_b),
                boundary: Some(p.boundary),
                mode: Some(p.mode),
            },
            drive: DriveSection { omega0: Some(p.omega0), drive_freq: Some(p.drive_freq), rabi: Some(p.rabi), bloch: Some(p.bloch) },
            loss: LossSection { gamma: Some(p.gamma), q_factor: None },
            init: InitSection {
                center_site: Some(self.packet.center_site),
                width_sites: Some(self.packet.width_sites),
                band: Some(self.packet.band),
                phase_per_site: Some(self.packet.phase_per_site),
            },
            integrate: IntegrateSection {
                t_end: Some(self.integration.t_end),
                bloch_periods: None,
                drive_periods: None,
                dt: Some(self.integration.dt),
                record_every: Some(self.integration.record_every),
            },
            spectrum: SpectrumSection {
                sites: Some(self.spectrum_sites.clone()),
                observables: Some(s.observables.clone()),
                window: Some(s.window),
                zero_pad_factor: Some(s.zero_pad_factor),
                rel_threshold: Some(s.rel_threshold),
                min_separation_bins: Some(s.min_separation_bins),
                m_max: Some(s.m_max),
                n_max: Some(s.n_max),
                tol: Some(s.tol),
                omega_bar: Some(s.omega_bar),
            },
            output: OutputSection { every: Some(self.output.every), site_every: Some(self.output.site_every) },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_preset_matches_caption() {
        let s = load_scenario("fig3", &[]).unwrap();
        let p = &s.params;
        assert_eq!((p.n_sites, p.bloch, p.rabi, p.t_a, p.t_b, p.gamma), (128, 0.04, 0.8, 0.4, 0.04, 0.0));
        assert_eq!(p.mode, Mode::Full);
        assert_eq!((s.packet.center_site, s.packet.width_sites, s.packet.band), (80.0, 20.0, Band::Excited));
        assert!((s.integration.t_end - 16.0 * PI / 0.04).abs() < 1e-9);
        assert_eq!(s.spectrum_sites, vec![90]);
        assert!(s.integration.sample_interval() <= 0.1);
    }

    #[test]
    fn fig15_is_fig11_with_loss() {
        let a = load_scenario("fig11", &[]).unwrap();
        let b = load_scenario("fig15", &[]).unwrap();
        assert!((b.params.gamma - 1.0 / 30.0).abs() < 1e-15);
        assert_eq!(ChainParams { gamma: 0.0, ..b.params }, a.params);
        assert_eq!(b.integration.t_end, a.integration.t_end);
    }

    #[test]
    fn every_preset_resolves() {
        for name in preset_names() {
            let s = load_scenario(name, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
            assert!(s.integration.sample_interval() <= 0.1 + 1e-12, "{name}");
        }
    }

    #[test]
    fn override_changes_one_key() {
        let a = load_scenario("fig3", &[]).unwrap();
        let b = load_scenario("fig3", &["n_sites=100".into()]).unwrap();
        assert_eq!(b.params, ChainParams { n_sites: 100, ..a.params });
        assert_eq!(b.packet, a.packet);
        let c = load_scenario("fig3", &["chain.mode=rwa".into()]).unwrap();
        assert_eq!(c.params.mode, Mode::Rwa);
    }

    #[test]
    fn exclusive_keys_replace_each_other() {
        let s = load_scenario("fig15", &["gamma=0.01".into()]).unwrap();
        assert_eq!(s.params.gamma, 0.01);
        let s = load_scenario("fig3", &["t_end=10".into()]).unwrap();
        assert_eq!(s.integration.t_end, 10.0);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let e = load_scenario("fig99", &[]).unwrap_err();
        assert!(e.to_string().contains("fig3"), "{e}");
        assert_eq!(e.exit_code(), 2);
        assert!(load_scenario("fig3", &["voltage=3".into()]).is_err());
        assert!(load_scenario("fig3", &["n_sites".into()]).is_err());
        assert!(load_scenario("fig3", &["n_sites=0".into()]).is_err());
        assert!(load_scenario("fig3", &["dt=1.0".into()]).is_err());
        let e = parse_scenario("[chain]\nn_sites = \"many\"\n").unwrap_err();
        assert!(e.to_string().contains("line"), "{e}");
        assert!(parse_scenario("[chain]\nwidth = 3\n").is_err());
    }

    #[test]
    fn file_form_round_trips() {
        for name in ["fig3", "fig13", "fig15", "fig18"] {
            let s = load_scenario(name, &[]).unwrap();
            let text = toml::to_string(&s.to_file()).unwrap();
            assert_eq!(parse_scenario(&text).unwrap(), s, "{name}");
            let json = serde_json::to_string(&s.to_file()).unwrap();
            let back: ScenarioFile = serde_json::from_str(&json).unwrap();
            assert_eq!(Scenario::from_file(&back, "x").unwrap(), s, "{name}");
        }
    }

    #[test]
    fn omega_bar_setting_parses() {
        assert_eq!("auto".parse::<OmegaBarSetting>().unwrap(), OmegaBarSetting::Named(OmegaBarSource::Auto));
        assert_eq!("0.9".parse::<OmegaBarSetting>().unwrap(), OmegaBarSetting::Value(0.9));
        assert!("soon".parse::<OmegaBarSetting>().is_err());
        let s = load_scenario("fig3", &["omega_bar=\"floquet\"".into()]).unwrap();
        assert_eq!(s.spectrum.omega_bar, OmegaBarSetting::Named(OmegaBarSource::Floquet));
        let s = load_scenario("fig3", &["omega_bar=floquet".into()]).unwrap();
        assert_eq!(s.spectrum.omega_bar, OmegaBarSetting::Named(OmegaBarSource::Floquet));
    }
}
