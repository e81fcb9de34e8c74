//! Single scenario run: integrate, extract observables, analyse spectra and
//! emit the output files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::files::{num, write_atomic, CsvText};
use super::scenario::{OmegaBarSetting, OmegaBarSource, Scenario, ScenarioFile, SpectrumSettings};
use crate::analytics::{mean_ro_frequency_rwa, mean_ro_frequency_stark};
use crate::dynamics::{evolve, Trajectory};
use crate::error::{Error, Result};
use crate::floquet::mean_ro_frequency_floquet;
use crate::model::{make_initial_state, ChainParams, Mode};
use crate::observables::{centroid, dipole_density, extract_series, inversion_density, tunneling_current_density};
use crate::spectra::{find_peaks, label_peaks, power_spectrum, spectrum_of, CombSearch, SpectralLine, Spectrum, Window};

/// Phase samples for the Floquet mean.
const FLOQUET_PHASES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaBar {
    pub value: f64,
    pub provenance: &'static str,
}

/// Mean Rabi frequency used to label spectral lines.
pub fn resolve_omega_bar(params: &ChainParams, setting: OmegaBarSetting) -> Result<OmegaBar> {
    Ok(match setting {
        OmegaBarSetting::Value(v) => OmegaBar { value: v, provenance: "user" },
        OmegaBarSetting::Named(OmegaBarSource::Auto) => match params.mode {
            Mode::Stark => OmegaBar { value: mean_ro_frequency_stark(params), provenance: "stark-quadrature" },
            Mode::Full | Mode::Rwa => OmegaBar { value: mean_ro_frequency_rwa(params), provenance: "rwa-quadrature" },
        },
        OmegaBarSetting::Named(OmegaBarSource::Floquet) => {
            if params.mode == Mode::Stark {
                return Err(Error::Config("floquet omega_bar needs a periodic drive (mode full or rwa)".into()));
            }
            OmegaBar { value: mean_ro_frequency_floquet(params, FLOQUET_PHASES)?.abs(), provenance: "floquet" }
        }
    })
}

/// Contents of a `lines_*.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinesFile {
    pub observable: String,
    pub site: Option<usize>,
    pub omega_bar: f64,
    pub omega_bar_provenance: String,
    pub omega0: f64,
    pub bloch: f64,
    pub tol: f64,
    pub m_max: u32,
    pub n_max: u32,
    pub window: Window,
    pub zero_pad_factor: usize,
    pub n_samples: usize,
    pub dt_sample: f64,
    /// Native resolution `2 pi / (n_samples dt_sample)`.
    pub resolution: f64,
    pub lines: Vec<SpectralLine>,
}

/// Peaks of `spectrum` labelled against the comb built from `params`.
pub fn analyse_spectrum(
    spectrum: &Spectrum,
    params: &ChainParams,
    settings: &SpectrumSettings,
    omega_bar: OmegaBar,
    observable: &str,
    site: Option<usize>,
) -> Result<LinesFile> {
    let peaks = find_peaks(spectrum, settings.rel_threshold, settings.min_separation_bins)?;
    let search = CombSearch {
        omega0: params.omega0,
        bloch: params.bloch,
        omega_bar: omega_bar.value,
        m_max: settings.m_max,
        n_max: settings.n_max,
        tol: settings.tol,
    };
    Ok(LinesFile {
        observable: observable.to_string(),
        site,
        omega_bar: omega_bar.value,
        omega_bar_provenance: omega_bar.provenance.to_string(),
        omega0: params.omega0,
        bloch: params.bloch,
        tol: settings.tol,
        m_max: settings.m_max,
        n_max: settings.n_max,
        window: settings.window,
        zero_pad_factor: settings.zero_pad_factor,
        n_samples: spectrum.n_samples,
        dt_sample: spectrum.dt_sample,
        resolution: spectrum.resolution(),
        lines: label_peaks(&peaks, &search),
    })
}

pub fn spectrum_csv(spectrum: &Spectrum) -> Vec<u8> {
    let mut c = CsvText::with_header(&["omega", "magnitude"]);
    for (w, m) in spectrum.omegas.iter().zip(&spectrum.magnitudes) {
        c.row([num(*w), num(*m)]);
    }
    c.into_bytes()
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub runtime_s: f64,
    pub steps: usize,
    pub snapshots: usize,
    pub norm_drift: f64,
    pub peak_count: usize,
    /// Largest minus smallest centroid over the run, in sites.
    pub centroid_excursion: f64,
    pub omega_bar: f64,
    pub omega_bar_provenance: String,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct SolverInfo {
    scheme: &'static str,
    dt: f64,
    record_every: usize,
    sample_interval: f64,
    t_end: f64,
    lambda_max: f64,
    step_budget: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: ScenarioFile,
    solver: SolverInfo,
    summary: &'a RunReport,
}

/// In-memory result of a run, before anything touches the filesystem.
#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: RunReport,
    pub files: Vec<(String, Vec<u8>)>,
    pub lines: Vec<LinesFile>,
}

fn grid_csv(traj: &Trajectory, scenario: &Scenario, density: impl Fn(&crate::model::AmplitudeState) -> Vec<f64>) -> Vec<u8> {
    let sites: Vec<usize> = (0..scenario.params.n_sites).step_by(scenario.output.site_every).collect();
    let mut header = String::from("t");
    for j in &sites {
        header.push_str(&format!(",site_{j}"));
    }
    let mut c = CsvText::header_line(&header);
    let mut row = Vec::with_capacity(sites.len() + 1);
    for s in traj.snapshots.iter().step_by(scenario.output.every) {
        let d = density(s);
        row.clear();
        row.push(s.time);
        row.extend(sites.iter().map(|&j| d[j]));
        c.numbers(&row);
    }
    c.into_bytes()
}

/// Integrates and analyses `scenario` without writing anything.
pub fn compute(scenario: &Scenario) -> Result<RunOutput> {
    let start = Instant::now();
    let params = &scenario.params;
    let initial = make_initial_state(params, &scenario.packet)?;
    let traj = evolve(&initial, params, &scenario.integration)?;
    let omega_bar = resolve_omega_bar(params, scenario.spectrum.omega_bar)?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();

    let mut obs = CsvText::with_header(&["t", "site", "current", "inversion", "dipole"]);
    for s in traj.snapshots.iter().step_by(scenario.output.every) {
        let (j_t, w, d) = (tunneling_current_density(s, params), inversion_density(s), dipole_density(s));
        let t = num(s.time);
        for j in (0..params.n_sites).step_by(scenario.output.site_every) {
            obs.row([t.as_str(), &j.to_string(), &num(j_t[j]), &num(w[j]), &num(d[j])]);
        }
    }
    files.push(("observables.csv".into(), obs.into_bytes()));

    let mut cen = CsvText::with_header(&["t", "centroid", "norm"]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &traj.snapshots {
        let c = centroid(s)?;
        lo = lo.min(c);
        hi = hi.max(c);
        cen.numbers(&[s.time, c, s.norm()]);
    }
    files.push(("centroid.csv".into(), cen.into_bytes()));

    files.push(("spacetime_current.csv".into(), grid_csv(&traj, scenario, |s| tunneling_current_density(s, params))));
    files.push(("spacetime_inversion.csv".into(), grid_csv(&traj, scenario, inversion_density)));
    files.push(("spacetime_dipole.csv".into(), grid_csv(&traj, scenario, dipole_density)));

    let mut all_lines = Vec::new();
    for &kind in &scenario.spectrum.observables {
        for &site in &scenario.spectrum_sites {
            let series = extract_series(&traj, kind, Some(site))?;
            let spectrum = power_spectrum(&series, scenario.spectrum.window, scenario.spectrum.zero_pad_factor)?;
            let lines = analyse_spectrum(&spectrum, params, &scenario.spectrum, omega_bar, kind.name(), Some(site))?;
            files.push((format!("spectrum_{}_j{site}.csv", kind.name()), spectrum_csv(&spectrum)));
            files.push((format!("lines_{}_j{site}.json", kind.name()), json_bytes(&lines)?));
            all_lines.push(lines);
        }
    }

    let steps = (traj.snapshots.len() - 1) * scenario.integration.record_every;
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.insert(0, "meta.json".into());
    let report = RunReport {
        runtime_s: start.elapsed().as_secs_f64(),
        steps,
        snapshots: traj.snapshots.len(),
        norm_drift: traj.max_norm_drift(),
        peak_count: all_lines.iter().map(|l| l.lines.len()).sum(),
        centroid_excursion: hi - lo,
        omega_bar: omega_bar.value,
        omega_bar_provenance: omega_bar.provenance.to_string(),
        files: names,
    };
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        scenario: scenario.to_file(),
        solver: SolverInfo {
            scheme: "rk4",
            dt: scenario.integration.dt,
            record_every: scenario.integration.record_every,
            sample_interval: scenario.integration.sample_interval(),
            t_end: scenario.integration.t_end,
            lambda_max: params.lambda_max(),
            step_budget: scenario.integration.dt * params.lambda_max(),
        },
        summary: &report,
    };
    files.insert(0, ("meta.json".into(), json_bytes(&meta)?));
    Ok(RunOutput { trajectory: traj, report, files, lines: all_lines })
}

/// Runs `scenario` and writes its files into `out_dir`. Nothing is written
/// when the run fails.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<RunReport> {
    let output = compute(scenario)?;
    write_files(out_dir, &output.files)?;
    Ok(output.report)
}

pub fn write_files(out_dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out_dir.display()))))?;
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_atomic(&path, bytes).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            other => other,
        })?;
    }
    Ok(())
}

/// Spectrum of one column of a CSV, optionally filtered to one site of a
/// long-format file. Returns the written paths and the lines when labelled.
pub struct ColumnSpectrum {
    pub spectrum: Spectrum,
    pub lines: Option<LinesFile>,
    pub written: Vec<PathBuf>,
}

pub struct ColumnRequest<'a> {
    pub input: &'a Path,
    pub column: &'a str,
    pub site: Option<usize>,
    pub out_dir: &'a Path,
    pub window: Window,
    pub zero_pad_factor: usize,
    /// Scenario whose parameters and labelling bounds drive the labelling.
    pub label_with: Option<&'a Scenario>,
    pub omega_bar: OmegaBarSetting,
}

pub fn column_spectrum(req: &ColumnRequest) -> Result<ColumnSpectrum> {
    let table = super::files::read_table(req.input)?;
    let t_idx = table.column_index("t")?;
    let v_idx = table.column_index(req.column)?;
    let site_idx = table.columns.iter().position(|c| c == "site");
    let rows: Vec<&Vec<f64>> = match (site_idx, req.site) {
        (Some(i), Some(j)) => table.rows.iter().filter(|r| r[i] == j as f64).collect(),
        (Some(_), None) => return Err(Error::Config("long-format input needs --site".into())),
        (None, Some(_)) => return Err(Error::Config("--site given but the input has no site column".into())),
        (None, None) => table.rows.iter().collect(),
    };
    let times: Vec<f64> = rows.iter().map(|r| r[t_idx]).collect();
    let values: Vec<f64> = rows.iter().map(|r| r[v_idx]).collect();
    let spectrum = spectrum_of(&times, &values, req.window, req.zero_pad_factor)?;
    let stem = match req.site {
        Some(j) => format!("{}_j{j}", req.column),
        None => req.column.to_string(),
    };
    let mut files = vec![(format!("spectrum_{stem}.csv"), spectrum_csv(&spectrum))];
    let lines = match req.label_with {
        Some(sc) => {
            let omega_bar = resolve_omega_bar(&sc.params, req.omega_bar)?;
            let settings = SpectrumSettings {
                window: req.window,
                zero_pad_factor: req.zero_pad_factor,
                min_separation_bins: req.zero_pad_factor,
                ..sc.spectrum.clone()
            };
            let lines = analyse_spectrum(&spectrum, &sc.params, &settings, omega_bar, req.column, req.site)?;
            files.push((format!("lines_{stem}.json"), json_bytes(&lines)?));
            Some(lines)
        }
        None => None,
    };
    write_files(req.out_dir, &files)?;
    let written = files.iter().map(|(n, _)| req.out_dir.join(n)).collect();
    Ok(ColumnSpectrum { spectrum, lines, written })
}
