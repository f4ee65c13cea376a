//! On-disk formats. Every file names its schema in row 1 (CSV) or in a
//! `schema` field (JSON); floats in CSV use 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use solscope_core::nls::{CookIntegrals, Monitor, Trajectory};
use solscope_core::radial::{build_grid, Grid, RadialField};
use solscope_core::scattering::History;
use thiserror::Error;

pub const SNAPSHOT_SCHEMA: &str = "solscope.snapshot/1";
pub const RUN_SCHEMA: &str = "solscope.run/1";
pub const COOK_SCHEMA: &str = "solscope.cook_integrals/1";
pub const MONITORS_SCHEMA: &str = "solscope.monitors/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] solscope_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(fs_err(path))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(fs_err(path))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(fs_err(path))
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Interleaved `(re, im)` little-endian `f64`, base64.
pub fn encode_complex(values: &[Complex64]) -> String {
    let mut bytes = Vec::with_capacity(16 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_complex(text: &str) -> std::result::Result<Vec<Complex64>, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 16 != 0 {
        return Err(format!("{} bytes is not a whole number of complex values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub n: usize,
    pub r_max: f64,
    pub num_points: usize,
}

impl GridHeader {
    pub fn of(grid: &Grid) -> Self {
        GridHeader {
            n: grid.dimension(),
            r_max: grid.r_max(),
            num_points: grid.num_points(),
        }
    }

    pub fn build(&self) -> solscope_core::Result<Arc<Grid>> {
        build_grid(self.n, self.r_max, self.num_points)
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    schema: String,
    grid: GridHeader,
    t: f64,
    encoding: String,
    values: String,
}

const ENCODING: &str = "base64:f64le:re,im";

pub fn write_snapshot(path: &Path, t: f64, psi: &RadialField) -> Result<()> {
    let file = SnapshotFile {
        schema: SNAPSHOT_SCHEMA.into(),
        grid: GridHeader::of(psi.grid()),
        t,
        encoding: ENCODING.into(),
        values: encode_complex(psi.values()),
    };
    write_json(path, &file)
}

/// Reads a snapshot; `grid` is reused when the header matches it.
pub fn read_snapshot(path: &Path, grid: Option<&Arc<Grid>>) -> Result<(f64, RadialField)> {
    let file: SnapshotFile = read_json(path)?;
    if file.schema != SNAPSHOT_SCHEMA || file.encoding != ENCODING {
        return Err(format_err(path, format!("unsupported schema {} / {}", file.schema, file.encoding)));
    }
    let grid = match grid {
        Some(g) if GridHeader::of(g) == file.grid => g.clone(),
        Some(_) => return Err(format_err(path, "grid differs from the rest of the trajectory")),
        None => file.grid.build()?,
    };
    let values = decode_complex(&file.values).map_err(|m| format_err(path, m))?;
    Ok((file.t, RadialField::new(grid, values)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// A CSV body under a `# schema: …` line.
pub struct Csv {
    text: String,
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

impl Csv {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        Csv {
            text: format!("# schema: {schema}\n{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        let cells: Vec<String> = cells.iter().map(|c| quote(c)).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Header cells and data rows of a file written by [`Csv`] with unquoted cells.
pub fn read_csv(path: &Path, schema: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != format!("# schema: {schema}") {
        return Err(format_err(path, format!("expected schema {schema}, found {first:?}")));
    }
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "missing header"))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Ok((header, rows))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn monitors_csv(monitors: &[Monitor]) -> Csv {
    let mut csv = Csv::new(MONITORS_SCHEMA, &["t", "mass", "h1", "energy"]);
    for m in monitors {
        csv.row(&[fmt_f64(m.t), fmt_f64(m.mass), fmt_f64(m.h1), opt_f64(m.energy)]);
    }
    csv
}

fn parse_monitors(path: &Path) -> Result<Vec<Monitor>> {
    let (_, rows) = read_csv(path, MONITORS_SCHEMA)?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| format_err(path, format!("{s:?}: {e}")));
    rows.iter()
        .map(|r| {
            if r.len() != 4 {
                return Err(format_err(path, format!("row has {} cells, expected 4", r.len())));
            }
            Ok(Monitor {
                t: num(&r[0])?,
                mass: num(&r[1])?,
                h1: num(&r[2])?,
                energy: if r[3].is_empty() { None } else { Some(num(&r[3])?) },
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    schema: String,
    grid: GridHeader,
    times: Vec<f64>,
    snapshots: Vec<String>,
    cook_integrals: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CookFile {
    schema: String,
    radius: f64,
    encoding: String,
    interaction: Vec<String>,
    smooth: Vec<String>,
    plain: Vec<String>,
}

/// `run.json`, `monitors.csv`, `snapshots/NNNNNN.json` and, when recorded,
/// `cook_integrals.json`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    let snaps = dir.join("snapshots");
    create_dir(&snaps)?;
    let mut names = Vec::with_capacity(traj.states.len());
    for (k, (t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
        let name = format!("snapshots/{k:06}.json");
        write_snapshot(&dir.join(&name), *t, psi)?;
        names.push(name);
    }
    monitors_csv(&traj.monitors).write(&dir.join("monitors.csv"))?;
    let cook_name = match &traj.integrals {
        Some(ci) => {
            let enc = |v: &Vec<Vec<Complex64>>| v.iter().map(|x| encode_complex(x)).collect();
            let file = CookFile {
                schema: COOK_SCHEMA.into(),
                radius: ci.radius,
                encoding: ENCODING.into(),
                interaction: enc(&ci.interaction),
                smooth: enc(&ci.smooth),
                plain: enc(&ci.plain),
            };
            write_json(&dir.join("cook_integrals.json"), &file)?;
            Some("cook_integrals.json".to_string())
        }
        None => None,
    };
    write_json(
        &dir.join("run.json"),
        &RunFile {
            schema: RUN_SCHEMA.into(),
            grid: GridHeader::of(traj.grid()),
            times: traj.times.clone(),
            snapshots: names,
            cook_integrals: cook_name,
        },
    )
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let run_path = dir.join("run.json");
    let run: RunFile = read_json(&run_path)?;
    if run.schema != RUN_SCHEMA {
        return Err(format_err(&run_path, format!("unsupported schema {}", run.schema)));
    }
    if run.snapshots.is_empty() || run.snapshots.len() != run.times.len() {
        return Err(format_err(&run_path, "snapshot list does not match the times"));
    }
    let grid = run.grid.build()?;
    let mut states = Vec::with_capacity(run.snapshots.len());
    for (name, &t) in run.snapshots.iter().zip(&run.times) {
        let path = dir.join(name);
        let (ts, psi) = read_snapshot(&path, Some(&grid))?;
        if ts.to_bits() != t.to_bits() {
            return Err(format_err(&path, format!("snapshot time {ts} differs from run.json ({t})")));
        }
        states.push(psi);
    }
    let monitors = parse_monitors(&dir.join("monitors.csv"))?;
    let integrals = match &run.cook_integrals {
        Some(name) => {
            let path = dir.join(name);
            let file: CookFile = read_json(&path)?;
            if file.schema != COOK_SCHEMA || file.encoding != ENCODING {
                return Err(format_err(&path, format!("unsupported schema {}", file.schema)));
            }
            let dec = |v: &[String]| -> Result<Vec<Vec<Complex64>>> {
                let out = v
                    .iter()
                    .map(|x| decode_complex(x).map_err(|m| format_err(&path, m)))
                    .collect::<Result<Vec<_>>>()?;
                if out.len() != states.len() || out.iter().any(|x| x.len() != grid.num_points()) {
                    return Err(format_err(&path, "integral shapes do not match the snapshots"));
                }
                Ok(out)
            };
            Some(CookIntegrals {
                radius: file.radius,
                interaction: dec(&file.interaction)?,
                smooth: dec(&file.smooth)?,
                plain: dec(&file.plain)?,
            })
        }
        None => None,
    };
    Ok(Trajectory {
        times: run.times,
        states,
        monitors,
        integrals,
    })
}

/// Forward run under `dir/forward`, time-reversed run under `dir/backward`.
pub fn write_history(dir: &Path, history: &History) -> Result<()> {
    write_trajectory(&dir.join("forward"), history.forward())?;
    if let Some(b) = history.backward() {
        write_trajectory(&dir.join("backward"), b)?;
    }
    Ok(())
}

pub fn read_history(dir: &Path) -> Result<History> {
    let forward = read_trajectory(&dir.join("forward"))?;
    let back_dir = dir.join("backward");
    if back_dir.join("run.json").exists() {
        Ok(History::with_backward(forward, read_trajectory(&back_dir)?)?)
    } else {
        Ok(History::new(forward))
    }
}
