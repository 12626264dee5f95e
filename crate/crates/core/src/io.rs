//! Run configuration and every file format the tool writes.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`. Every data file gets a JSON sidecar holding
//! the resolved [`RunConfig`], so a file can be regenerated from its sidecar.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Boundary, ModelParams};
use crate::scan::ScanSpec;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "QUASITIP_OUT";

/// Output directory used when neither `--out` nor [`OUT_DIR_ENV`] is set.
pub const DEFAULT_OUT_DIR: &str = "quasitip-out";

/// Smallest value written to log10 heatmaps.
pub const LOG10_FLOOR: f64 = -16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SpSpectrum,
    TpSpectrum,
    Sweep,
    Evolve,
    Scan,
    Fock,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SpSpectrum => "sp-spectrum",
            Command::TpSpectrum => "tp-spectrum",
            Command::Sweep => "sweep",
            Command::Evolve => "evolve",
            Command::Scan => "scan",
            Command::Fock => "fock",
        }
    }
}

/// Every option of every subcommand. Unset fields take per-command
/// defaults; a JSON config file and command-line flags are merged with
/// flags taking precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    /// Final time for `evolve` and `scan`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Number of sample intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Left site of the initial adjacent pair for `evolve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<usize>,
    /// `[start, end, step]` of the `sweep` U grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_grid: Option<[f64; 3]>,
    /// `[lower, upper)` energy window for `tp-spectrum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Dense solver up to this dimension, spectrum slicing above it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_limit: Option<usize>,
    /// Write eigenvectors to a binary dump (`tp-spectrum`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_vectors: Option<bool>,
    /// Named scan preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Full scan specification; preset and flags adjust it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    /// Explicit initial positions for scan realizations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_positions: Option<Vec<usize>>,
    /// Metal threshold σ_c for scan classification (default N/10).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Resume a scan from its state file in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<bool>,
    /// Miniband distance Δ for resonance estimates (default: measured).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbosity: Option<u8>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),*) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field.clone(); } )*
    };
}

impl RunConfig {
    /// Parses a JSON config, rejecting unknown keys.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(mut self, over: &RunConfig) -> Self {
        overlay!(
            self, over, command, n, lambda, u, beta, alpha, boundary, t, samples, l0, u_grid, window, dense_limit,
            dump_vectors, preset, scan, realizations, seed_positions, threshold, resume, gap, out,
            threads, verbosity
        );
        self
    }

    /// Model parameters with `default_n` when `n` is unset.
    pub fn model_params(&self, default_n: usize) -> Result<ModelParams> {
        let d = ModelParams::default();
        let p = ModelParams {
            n: self.n.unwrap_or(default_n),
            lambda: self.lambda.unwrap_or(d.lambda),
            u: self.u.unwrap_or(d.u),
            beta: self.beta.unwrap_or(d.beta),
            alpha: self.alpha.unwrap_or(d.alpha),
            boundary: self.boundary.unwrap_or(d.boundary),
        };
        p.validate()?;
        Ok(p)
    }

    /// `--out`, else the environment variable, else [`DEFAULT_OUT_DIR`].
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// 17-significant-digit scientific notation.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

/// `log10(p)`, floored at [`LOG10_FLOOR`].
pub fn log10_floored(p: f64) -> f64 {
    if p > 0.0 {
        p.log10().max(LOG10_FLOOR)
    } else {
        LOG10_FLOOR
    }
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => fmt_f64(*x),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Field {
    fn from(x: f64) -> Self {
        Field::Num(x)
    }
}

impl From<usize> for Field {
    fn from(x: usize) -> Self {
        Field::Int(x as i64)
    }
}

impl From<String> for Field {
    fn from(s: String) -> Self {
        Field::Text(s)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

/// A header line plus rows, written as comma-separated text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Field::render).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

/// Parsed CSV: header and raw string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let rows = lines
            .enumerate()
            .map(|(i, l)| {
                let cells: Vec<String> = l.split(',').map(str::to_string).collect();
                if cells.len() != columns.len() {
                    return Err(Error::Parse(format!(
                        "row {} has {} fields, header has {}",
                        i + 1,
                        cells.len(),
                        columns.len()
                    )));
                }
                Ok(cells)
            })
            .collect::<Result<_>>()?;
        Ok(Csv { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse(format!("no column `{name}`")))
    }

    /// A numeric column.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows.iter().map(|r| parse_f64(&r[k])).collect()
    }
}

/// Row-major numeric matrix with optional row and column coordinates.
///
/// With both coordinate vectors present the text follows gnuplot's
/// `nonuniform matrix` layout: the first line is `<cols> x_1 .. x_cols` and
/// every following line is `y_i v_i1 .. v_icols`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub row_coords: Option<Vec<f64>>,
    pub col_coords: Option<Vec<f64>>,
    /// Written as leading `#` lines.
    pub comments: Vec<String>,
}

impl GridData {
    pub fn to_dat(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        let nonuniform = self.row_coords.is_some() && self.col_coords.is_some();
        if nonuniform {
            let cols = self.col_coords.as_ref().unwrap();
            let head: Vec<String> = std::iter::once(fmt_f64(self.cols as f64))
                .chain(cols.iter().map(|&x| fmt_f64(x)))
                .collect();
            let _ = writeln!(s, "{}", head.join(" "));
        }
        for r in 0..self.rows {
            let mut line: Vec<String> = Vec::with_capacity(self.cols + 1);
            if nonuniform {
                line.push(fmt_f64(self.row_coords.as_ref().unwrap()[r]));
            }
            line.extend(self.values[r * self.cols..(r + 1) * self.cols].iter().map(|&v| fmt_f64(v)));
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    /// Parses text produced by [`GridData::to_dat`]; `nonuniform` selects
    /// the coordinate layout.
    pub fn parse(text: &str, nonuniform: bool) -> Result<Self> {
        let mut comments = Vec::new();
        let mut lines: Vec<Vec<f64>> = Vec::new();
        for l in text.lines() {
            if let Some(c) = l.strip_prefix('#') {
                comments.push(c.trim_start().to_string());
            } else if !l.trim().is_empty() {
                lines.push(l.split_whitespace().map(parse_f64).collect::<Result<_>>()?);
            }
        }
        let (col_coords, body) = if nonuniform {
            let (head, body) = lines.split_first().ok_or_else(|| Error::Parse("empty matrix".into()))?;
            (Some(head[1..].to_vec()), body.to_vec())
        } else {
            (None, lines)
        };
        let width = body.first().map_or(0, Vec::len);
        if body.iter().any(|r| r.len() != width) {
            return Err(Error::Parse("ragged matrix".into()));
        }
        let (row_coords, values): (Option<Vec<f64>>, Vec<f64>) = if nonuniform {
            (
                Some(body.iter().map(|r| r[0]).collect()),
                body.iter().flat_map(|r| r[1..].iter().copied()).collect(),
            )
        } else {
            (None, body.iter().flatten().copied().collect())
        };
        let cols = if nonuniform { width.saturating_sub(1) } else { width };
        Ok(GridData {
            rows: body.len(),
            cols,
            values,
            row_coords,
            col_coords,
            comments,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_dat())
    }
}

/// Two-column `x y` file.
pub fn two_column(comments: &[String], xs: &[f64], ys: &[f64]) -> GridData {
    GridData {
        rows: xs.len(),
        cols: 2,
        values: xs.iter().zip(ys).flat_map(|(&x, &y)| [x, y]).collect(),
        row_coords: None,
        col_coords: None,
        comments: comments.to_vec(),
    }
}

/// Metadata written next to each data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub kind: String,
    /// Resolved configuration; re-running it reproduces the data files.
    pub config: RunConfig,
    pub params: Option<ModelParams>,
    pub files: Vec<String>,
    pub results: serde_json::Value,
}

impl Sidecar {
    pub fn new(kind: &str, config: &RunConfig, params: Option<ModelParams>, results: serde_json::Value) -> Self {
        Sidecar {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            config: config.clone(),
            params,
            files: Vec::new(),
            results,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_text(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Binary eigenvector dump: little-endian `u64` dimension, `u64` count,
/// then `count` vectors of `dimension` `f64` each.
pub fn write_vectors(path: &Path, dim: usize, data: &[f64]) -> Result<()> {
    let count = data.len().checked_div(dim).unwrap_or(0);
    if count * dim != data.len() {
        return Err(Error::Precondition(format!("{} values do not form vectors of length {dim}", data.len())));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&(dim as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(count as u64).to_le_bytes()).map_err(io)?;
    for x in data {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a dump written by [`write_vectors`]: `(dimension, values)`.
pub fn read_vectors(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::Parse("vector dump shorter than its header".into()));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap()) as usize;
    let (dim, count) = (word(0), word(1));
    let expected = dim
        .checked_mul(count)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::Parse(format!(
            "vector dump of {} bytes does not match header ({dim} × {count})",
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dim, values))
}

/// `<stem>-<hash>.<ext>` for scan outputs.
pub fn hashed_name(stem: &str, hash: &str, ext: &str) -> String {
    format!("{stem}-{hash}.{ext}")
}
