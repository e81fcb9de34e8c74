use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rabi_bloch::cli::run::{column_spectrum, resolve_omega_bar, run, ColumnRequest};
use rabi_bloch::cli::scenario::{load_scenario, preset_names, preset_source, OmegaBarSetting, OmegaBarSource};
use rabi_bloch::cli::sweep::{sweep, Axis};
use rabi_bloch::floquet::predicted_lines;
use rabi_bloch::spectra::Window;
use rabi_bloch::{Error, Result};

macro_rules! say {
    ($w:expr, $($arg:tt)*) => {
        let _ = writeln!($w, $($arg)*);
    };
}

#[derive(Parser)]
#[command(name = "rabi-bloch", version, about = "Rabi-Bloch oscillations in driven two-level chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write observables, grids, spectra and lines
    Run {
        /// Preset name, TOML file or a previous run's meta.json
        #[arg(long)]
        scenario: String,
        /// Override a scenario key, e.g. --set n_sites=64 or --set drive.rabi=0.5
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectrum of one column of a CSV file
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long)]
        out: PathBuf,
        /// Site to select from a long-format file
        #[arg(long)]
        site: Option<usize>,
        #[arg(long, value_enum, default_value = "hann")]
        window: WindowArg,
        #[arg(long, default_value_t = 4)]
        zero_pad: usize,
        /// Label peaks against the line comb
        #[arg(long)]
        label: bool,
        /// auto, floquet or a number
        #[arg(long, default_value = "auto")]
        omega_bar: String,
        /// Scenario for labelling; defaults to meta.json beside the input
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Print the predicted line comb of a scenario
    Lines {
        #[arg(long)]
        params: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Use the Floquet mean Rabi frequency instead of the quadrature one
        #[arg(long)]
        floquet: bool,
        /// Highest frequency to print
        #[arg(long, default_value_t = 3.0)]
        max_freq: f64,
    },
    /// Run the Cartesian product of axis values, one directory per cell
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// key=v1,v2,...; repeat for more axes
        #[arg(long = "axis", value_name = "KEY=V1,V2", required = true)]
        axes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List presets, or print one as TOML
    Presets { name: Option<String> },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WindowArg {
    Hann,
    Rect,
}

fn main() -> ExitCode {
    let mut w = String::new();
    let result = dispatch(Cli::parse().command, &mut w);
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = std::io::stdout().write_all(w.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command, w: &mut String) -> Result<()> {
    match command {
        Command::Run { scenario, set, out } => {
            let sc = load_scenario(&scenario, &set)?;
            let r = run(&sc, &out)?;
            say!(w,
                "{}: {} steps, {} snapshots, norm drift {:.3e}, {} peaks, {:.2} s -> {}",
                sc.name,
                r.steps,
                r.snapshots,
                r.norm_drift,
                r.peak_count,
                r.runtime_s,
                out.display()
            );
        }
        Command::Spectrum { input, column, out, site, window, zero_pad, label, omega_bar, scenario } => {
            let omega_bar: OmegaBarSetting = omega_bar.parse()?;
            let labelling = if label {
                let spec = match scenario {
                    Some(s) => s,
                    None => meta_beside(&input)?,
                };
                Some(load_scenario(&spec, &[])?)
            } else {
                None
            };
            let result = column_spectrum(&ColumnRequest {
                input: &input,
                column: &column,
                site,
                out_dir: &out,
                window: match window {
                    WindowArg::Hann => Window::Hann,
                    WindowArg::Rect => Window::Rect,
                },
                zero_pad_factor: zero_pad,
                label_with: labelling.as_ref(),
                omega_bar,
            })?;
            if let Some(lines) = &result.lines {
                for l in &lines.lines {
                    let tag = l.label.map(|c| format!("({}, {}, {})", c.m, c.n, c.p)).unwrap_or_else(|| "-".into());
                    say!(w, "{:.6}  {:.3e}  {tag}", l.omega_peak, l.magnitude);
                }
            }
            for p in &result.written {
                say!(w, "wrote {}", p.display());
            }
        }
        Command::Lines { params, set, floquet, max_freq } => {
            let sc = load_scenario(&params, &set)?;
            let source = if floquet { OmegaBarSource::Floquet } else { OmegaBarSource::Auto };
            let bar = resolve_omega_bar(&sc.params, OmegaBarSetting::Named(source))?;
            say!(w, "# omega_bar = {} ({})", bar.value, bar.provenance);
            say!(w, "freq,m,n,p");
            for l in predicted_lines(&sc.params, bar.value, sc.spectrum.m_max, sc.spectrum.n_max) {
                if l.freq <= max_freq {
                    say!(w, "{:.10},{},{},{}", l.freq, l.m, l.n, l.p);
                }
            }
        }
        Command::Sweep { scenario, set, axes, out, jobs } => {
            let axes = axes.iter().map(|a| a.parse::<Axis>()).collect::<Result<Vec<_>>>()?;
            let index = sweep(&scenario, &set, &axes, &out, jobs)?;
            for c in &index.cells {
                say!(w, "{} [{}] exit {}", c.dir, c.overrides.join(" "), c.exit_code);
            }
            say!(w, "{} cells, {} failed -> {}", index.cells.len(), index.failed(), out.join("index.json").display());
        }
        Command::Presets { name: None } => {
            for n in preset_names() {
                say!(w, "{n}");
            }
        }
        Command::Presets { name: Some(n) } => {
            let src = preset_source(&n)
                .ok_or_else(|| Error::Config(format!("unknown preset '{n}'; presets: {}", preset_names().join(", "))))?;
            w.push_str(src);
        }
    }
    Ok(())
}

fn meta_beside(input: &Path) -> Result<String> {
    let meta = input.parent().unwrap_or(Path::new(".")).join("meta.json");
    if meta.is_file() {
        Ok(meta.to_string_lossy().into_owned())
    } else {
        Err(Error::Config(format!("--label needs --scenario or {}", meta.display())))
    }
}
