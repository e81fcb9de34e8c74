//! Cartesian parameter sweeps over scenario keys, run on a bounded pool of
//! scoped threads.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::files::write_atomic;
use super::run::run;
use super::scenario::load_scenario;
use crate::error::{Error, Result};

/// One swept key and its values, as given on the command line (`key=v1,v2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, rest) = s.split_once('=').ok_or_else(|| Error::Config(format!("axis '{s}' is not key=v1,v2,...")))?;
        let values: Vec<String> = rest.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if key.trim().is_empty() || values.is_empty() {
            return Err(Error::Config(format!("axis '{s}' needs a key and at least one value")));
        }
        Ok(Self { key: key.trim().to_string(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub dir: String,
    /// `key=value` assignments applied on top of the base scenario.
    pub overrides: Vec<String>,
    pub exit_code: i32,
    pub error: Option<String>,
    pub norm_drift: Option<f64>,
    pub peak_count: Option<usize>,
    pub centroid_excursion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepIndex {
    pub base: String,
    pub base_overrides: Vec<String>,
    pub axes: Vec<Axis>,
    pub cells: Vec<CellRecord>,
}

impl SweepIndex {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.exit_code != 0).count()
    }
}

/// Cartesian product of the axes; the last axis varies fastest.
pub fn cell_assignments(axes: &[Axis]) -> Vec<Vec<String>> {
    let mut cells: Vec<Vec<String>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut c = prefix.clone();
                    c.push(format!("{}={v}", axis.key));
                    c
                })
            })
            .collect();
    }
    cells
}

fn run_cell(base: &str, overrides: Vec<String>, index: usize, out_dir: &Path) -> CellRecord {
    let dir = format!("cell_{index:04}");
    let result = load_scenario(base, &overrides).and_then(|sc| run(&sc, &out_dir.join(&dir)));
    let cell_overrides = overrides;
    match result {
        Ok(r) => CellRecord {
            index,
            dir,
            overrides: cell_overrides,
            exit_code: 0,
            error: None,
            norm_drift: Some(r.norm_drift),
            peak_count: Some(r.peak_count),
            centroid_excursion: Some(r.centroid_excursion),
        },
        Err(e) => CellRecord {
            index,
            dir,
            overrides: cell_overrides,
            exit_code: e.exit_code(),
            error: Some(e.to_string()),
            norm_drift: None,
            peak_count: None,
            centroid_excursion: None,
        },
    }
}

/// Runs every cell of the product, at most `jobs` at a time, and writes
/// `index.json`. Failed cells are recorded and do not stop the sweep.
pub fn sweep(base: &str, base_overrides: &[String], axes: &[Axis], out_dir: &Path, jobs: usize) -> Result<SweepIndex> {
    std::fs::create_dir_all(out_dir)?;
    let cells = cell_assignments(axes);
    let next = AtomicUsize::new(0);
    let records: Mutex<Vec<Option<CellRecord>>> = Mutex::new(vec![None; cells.len()]);
    let workers = jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let mut overrides = base_overrides.to_vec();
                overrides.extend(cells[i].iter().cloned());
                let record = run_cell(base, overrides, i, out_dir);
                records.lock().expect("no worker panics while holding the lock")[i] = Some(record);
            });
        }
    });
    let cells: Vec<CellRecord> = records
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect();
    let index = SweepIndex { base: base.to_string(), base_overrides: base_overrides.to_vec(), axes: axes.to_vec(), cells };
    let mut bytes = serde_json::to_vec_pretty(&index).map_err(|e| Error::Config(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&out_dir.join("index.json"), &bytes)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a: Axis = "bloch=0.04, 0.5,0.7".parse().unwrap();
        assert_eq!(a.key, "bloch");
        assert_eq!(a.values, vec!["0.04", "0.5", "0.7"]);
        assert!("bloch".parse::<Axis>().is_err());
        assert!("bloch=".parse::<Axis>().is_err());
    }

    #[test]
    fn product_order() {
        let axes = vec![
            Axis { key: "a".into(), values: vec!["1".into(), "2".into()] },
            Axis { key: "b".into(), values: vec!["x".into(), "y".into(), "z".into()] },
        ];
        let cells = cell_assignments(&axes);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], vec!["a=1", "b=x"]);
        assert_eq!(cells[5], vec!["a=2", "b=z"]);
        assert_eq!(cell_assignments(&[]), vec![Vec::<String>::new()]);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let base = vec!["n_sites=16".into(), "center_site=8".into(), "width_sites=2".into(), "t_end=5".into(), "sites=[8]".into()];
        let axes = vec![Axis { key: "t_a".into(), values: vec!["0.4".into(), "nan".into()] }];
        let index = sweep("fig3", &base, &axes, dir.path(), 2).unwrap();
        assert_eq!(index.cells.len(), 2);
        assert_eq!(index.cells[0].exit_code, 0);
        assert_eq!(index.cells[1].exit_code, 2);
        assert_eq!(index.failed(), 1);
        assert!(dir.path().join("cell_0000/meta.json").is_file());
        assert!(dir.path().join("index.json").is_file());
    }
}
