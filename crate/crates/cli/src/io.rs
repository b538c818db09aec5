//! Versioned flat-file formats.
//!
//! Every CSV starts with the line `#schema=fgp-v1`. Data files are long
//! format, one row per (realization, location):
//!
//! * `train.csv`: `s,u1,u2,y,x_1..x_q`
//! * `test.csv`: `s,u1,u2,x_1..x_q` plus an optional `truth` column
//! * `globals.csv`, `test_globals.csv`: `s,z_1..z_p`
//!
//! `s` is a non-negative integer realization label. Realizations are ordered
//! as in the globals file and locations by first appearance.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use faer::Mat;
use fgp_core::inference::PosteriorDraws;
use fgp_core::prediction::{PredictionResult, TestSet};
use fgp_core::{Dataset, LocationSet, ParamState, Point, Smoothness};

use crate::error::{CliError, Result};

pub const SCHEMA: &str = "fgp-v1";
const SCHEMA_LINE: &str = "#schema=fgp-v1";

struct Table {
    headers: Vec<String>,
    /// `(line, fields)`.
    rows: Vec<(Option<u64>, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut first = String::new();
        BufReader::new(file)
            .read_line(&mut first)
            .map_err(|e| CliError::io(path, e))?;
        let first = first.trim_end();
        if let Some(tag) = first.strip_prefix("#schema=") {
            if tag != SCHEMA {
                return Err(CliError::parse(
                    path,
                    Some(1),
                    format!("unsupported schema `{tag}`, expected `{SCHEMA}`"),
                ));
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map(|p| p.line());
            rows.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(Table { headers, rows })
    }

    fn column(&self, path: &Path, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(path, Some(1), format!("missing column `{name}`")))
    }

    fn optional_column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Indices of `prefix1`, `prefix2`, ... in order.
    fn numbered_columns(&self, path: &Path, prefix: &str) -> Result<Vec<usize>> {
        let count = self
            .headers
            .iter()
            .filter(|h| h.starts_with(prefix))
            .count();
        if count == 0 {
            return Err(CliError::parse(
                path,
                Some(1),
                format!("missing column `{prefix}1`"),
            ));
        }
        (1..=count)
            .map(|j| self.column(path, &format!("{prefix}{j}")))
            .collect()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    CliError::parse(path, line, e.to_string())
}

fn field_f64(
    path: &Path,
    line: Option<u64>,
    fields: &[String],
    col: usize,
    name: &str,
) -> Result<f64> {
    let raw = &fields[col];
    let v: f64 = raw.parse().map_err(|_| {
        CliError::parse(
            path,
            line,
            format!("column `{name}`: `{raw}` is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(CliError::parse(
            path,
            line,
            format!("column `{name}` is not finite"),
        ));
    }
    Ok(v)
}

fn field_label(path: &Path, line: Option<u64>, fields: &[String], col: usize) -> Result<u64> {
    let raw = &fields[col];
    raw.parse().map_err(|_| {
        CliError::parse(
            path,
            line,
            format!("column `s`: `{raw}` is not a realization label"),
        )
    })
}

/// Realization labels and their global predictors.
#[derive(Clone, Debug, PartialEq)]
pub struct Globals {
    pub labels: Vec<u64>,
    pub z: Mat<f64>,
}

pub fn read_globals(path: &Path) -> Result<Globals> {
    let t = Table::read(path)?;
    let s_col = t.column(path, "s")?;
    let z_cols = t.numbered_columns(path, "z_")?;
    let mut labels = Vec::with_capacity(t.rows.len());
    let mut z = Mat::zeros(t.rows.len(), z_cols.len());
    for (r, (line, fields)) in t.rows.iter().enumerate() {
        let label = field_label(path, *line, fields, s_col)?;
        if labels.contains(&label) {
            return Err(CliError::parse(
                path,
                *line,
                format!("realization {label} listed twice"),
            ));
        }
        labels.push(label);
        for (d, &c) in z_cols.iter().enumerate() {
            z[(r, d)] = field_f64(path, *line, fields, c, &t.headers[c])?;
        }
    }
    if labels.is_empty() {
        return Err(CliError::parse(path, None, "no realizations"));
    }
    Ok(Globals { labels, z })
}

/// A complete realization-by-location table.
struct LongData {
    locations: Vec<Point>,
    x: Mat<f64>,
    /// Realization-major; `None` when the value column is absent.
    values: Option<Vec<f64>>,
}

fn read_long(
    path: &Path,
    globals: &Globals,
    value_column: &str,
    required: bool,
) -> Result<LongData> {
    let t = Table::read(path)?;
    let s_col = t.column(path, "s")?;
    let u_cols = [t.column(path, "u1")?, t.column(path, "u2")?];
    let v_col = if required {
        Some(t.column(path, value_column)?)
    } else {
        t.optional_column(value_column)
    };
    let x_cols = t.numbered_columns(path, "x_")?;
    let q = x_cols.len();
    let realization: HashMap<u64, usize> = globals
        .labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i))
        .collect();

    let mut locations: Vec<Point> = Vec::new();
    let mut loc_index: HashMap<[u64; 2], usize> = HashMap::new();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    for (line, fields) in &t.rows {
        let line = *line;
        let label = field_label(path, line, fields, s_col)?;
        let s = *realization.get(&label).ok_or_else(|| {
            CliError::parse(
                path,
                line,
                format!("realization {label} has no global predictors"),
            )
        })?;
        let u = [
            field_f64(path, line, fields, u_cols[0], "u1")?,
            field_f64(path, line, fields, u_cols[1], "u2")?,
        ];
        let xs: Vec<f64> = x_cols
            .iter()
            .map(|&c| field_f64(path, line, fields, c, &t.headers[c]))
            .collect::<Result<_>>()?;
        let key = [u[0].to_bits(), u[1].to_bits()];
        let i = match loc_index.get(&key) {
            Some(&i) => {
                if x_rows[i] != xs {
                    return Err(CliError::parse(
                        path,
                        line,
                        format!(
                            "functional predictors at ({}, {}) differ between realizations",
                            u[0], u[1]
                        ),
                    ));
                }
                i
            }
            None => {
                loc_index.insert(key, locations.len());
                locations.push(u);
                x_rows.push(xs);
                locations.len() - 1
            }
        };
        let v = match v_col {
            Some(c) => field_f64(path, line, fields, c, value_column)?,
            None => 0.0,
        };
        if cells.insert((s, i), v).is_some() {
            return Err(CliError::parse(
                path,
                line,
                format!("realization {label} observed twice at ({}, {})", u[0], u[1]),
            ));
        }
    }
    let n = locations.len();
    let s_count = globals.labels.len();
    if n == 0 {
        return Err(CliError::parse(path, None, "no observations"));
    }
    let mut values = vec![0.0; s_count * n];
    for s in 0..s_count {
        for i in 0..n {
            match cells.get(&(s, i)) {
                Some(&v) => values[s * n + i] = v,
                None => {
                    return Err(CliError::parse(
                        path,
                        None,
                        format!(
                            "realization {} has no row at ({}, {}); every realization must cover every location",
                            globals.labels[s], locations[i][0], locations[i][1]
                        ),
                    ))
                }
            }
        }
    }
    let x = Mat::from_fn(n, q, |i, j| x_rows[i][j]);
    Ok(LongData {
        locations,
        x,
        values: v_col.map(|_| values),
    })
}

pub fn read_train(train: &Path, globals: &Path) -> Result<(Dataset, Vec<u64>)> {
    let g = read_globals(globals)?;
    let long = read_long(train, &g, "y", true)?;
    let data = Dataset::new(
        LocationSet::new(long.locations)?,
        long.x,
        g.z,
        long.values.expect("required column"),
    )?;
    Ok((data, g.labels))
}

pub fn read_test(test: &Path, globals: &Path) -> Result<(TestSet, Vec<u64>)> {
    let g = read_globals(globals)?;
    let long = read_long(test, &g, "truth", false)?;
    let set = TestSet::new(LocationSet::new(long.locations)?, long.x, g.z, long.values)?;
    Ok((set, g.labels))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let mut file = File::create(path).map_err(|e| CliError::io(path, e))?;
    writeln!(file, "{SCHEMA_LINE}").map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I>(path: &Path, headers: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = create(path)?;
    let io = |e: csv::Error| CliError::io(path, std::io::Error::other(e.to_string()));
    w.write_record(headers).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |j| format!("{prefix}{j}"))
}

pub fn write_globals(path: &Path, labels: &[u64], z: &Mat<f64>) -> Result<()> {
    let headers: Vec<String> = std::iter::once("s".to_string())
        .chain(numbered("z_", z.ncols()))
        .collect();
    let rows = labels.iter().enumerate().map(|(s, l)| {
        std::iter::once(l.to_string())
            .chain((0..z.ncols()).map(|d| fmt(z[(s, d)])))
            .collect()
    });
    write_rows(path, &headers, rows)
}

fn long_rows<'a>(
    labels: &'a [u64],
    locations: &'a LocationSet,
    x: &'a Mat<f64>,
    values: Option<&'a [f64]>,
) -> impl Iterator<Item = Vec<String>> + 'a {
    let n = locations.len();
    labels.iter().enumerate().flat_map(move |(s, l)| {
        (0..n).map(move |i| {
            let u = locations.get(i);
            let mut row = vec![l.to_string(), fmt(u[0]), fmt(u[1])];
            if let Some(v) = values {
                row.push(fmt(v[s * n + i]));
            }
            row.extend((0..x.ncols()).map(|j| fmt(x[(i, j)])));
            row
        })
    })
}

pub fn write_train(path: &Path, labels: &[u64], data: &Dataset) -> Result<()> {
    let headers: Vec<String> = ["s", "u1", "u2", "y"]
        .into_iter()
        .map(String::from)
        .chain(numbered("x_", data.q()))
        .collect();
    write_rows(
        path,
        &headers,
        long_rows(labels, data.locations(), data.x(), Some(data.y())),
    )
}

pub fn write_test(path: &Path, labels: &[u64], test: &TestSet) -> Result<()> {
    let mut headers: Vec<String> = ["s", "u1", "u2"].into_iter().map(String::from).collect();
    if test.y().is_some() {
        headers.push("truth".into());
    }
    headers.extend(numbered("x_", test.x().ncols()));
    write_rows(
        path,
        &headers,
        long_rows(labels, test.locations(), test.x(), test.y()),
    )
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws, q: usize, k: usize) -> Result<()> {
    let headers: Vec<String> = ["chain", "draw"]
        .into_iter()
        .map(String::from)
        .chain(ParamState::column_names(q, k))
        .collect();
    let rows = draws.chains.iter().enumerate().flat_map(|(c, chain)| {
        chain.draws.iter().enumerate().map(move |(d, state)| {
            [c.to_string(), d.to_string()]
                .into_iter()
                .chain(state.flatten().into_iter().map(fmt))
                .collect()
        })
    });
    write_rows(path, &headers, rows)
}

/// Reads draws written by [`write_draws`] for a model with `q` functional
/// predictors and `k` basis functions.
pub fn read_draws(
    path: &Path,
    q: usize,
    k: usize,
    nu_beta: Smoothness,
    nu_eta: Smoothness,
) -> Result<Vec<ParamState>> {
    let t = Table::read(path)?;
    let expected = ParamState::column_names(q, k);
    let params: Vec<&String> = t
        .headers
        .iter()
        .filter(|h| *h != "chain" && *h != "draw")
        .collect();
    if params.len() != expected.len() || params.iter().zip(&expected).any(|(a, b)| *a != b) {
        let count = |p: &str| params.iter().filter(|h| h.starts_with(p)).count();
        return Err(CliError::Config(format!(
            "{} holds draws for q = {}, K = {} but the model has q = {q}, K = {k}",
            path.display(),
            count("sigma2_beta_"),
            count("sigma2_eta_"),
        )));
    }
    let cols: Vec<usize> = expected
        .iter()
        .map(|name| t.column(path, name))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, fields) in &t.rows {
        let values: Vec<f64> = cols
            .iter()
            .zip(&expected)
            .map(|(&c, name)| field_f64(path, *line, fields, c, name))
            .collect::<Result<_>>()?;
        let state = ParamState::unflatten(&values, q, k, nu_beta, nu_eta)
            .map_err(|e| CliError::parse(path, *line, e.to_string()))?;
        out.push(state);
    }
    if out.is_empty() {
        return Err(CliError::parse(path, None, "no draws"));
    }
    Ok(out)
}

pub fn write_trace(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let headers: Vec<String> = ["chain", "iteration", "log_posterior"]
        .into_iter()
        .map(String::from)
        .chain(draws.block_names.iter().map(|b| format!("step_{b}")))
        .collect();
    let rows = draws.chains.iter().enumerate().flat_map(|(c, chain)| {
        chain
            .log_posterior_trace
            .iter()
            .enumerate()
            .map(move |(it, lp)| {
                let mut row = vec![c.to_string(), it.to_string(), fmt(*lp)];
                if let Some(steps) = chain.step_size_trace.get(it) {
                    row.extend(steps.iter().map(|v| fmt(*v)));
                }
                row
            })
    });
    write_rows(path, &headers, rows)
}

pub fn write_predictions(
    path: &Path,
    labels: &[u64],
    test: &TestSet,
    pred: &PredictionResult,
) -> Result<()> {
    let mut headers: Vec<String> = ["s", "u1", "u2", "mean", "sd", "lower95", "upper95"]
        .into_iter()
        .map(String::from)
        .collect();
    if test.y().is_some() {
        headers.push("truth".into());
    }
    let n = test.n();
    let rows = (0..pred.len()).map(|r| {
        let (s, i) = (r / n, r % n);
        let u = test.locations().get(i);
        let mut row = vec![
            labels[s].to_string(),
            fmt(u[0]),
            fmt(u[1]),
            fmt(pred.mean[r]),
            fmt(pred.sd[r]),
            fmt(pred.lower95[r]),
            fmt(pred.upper95[r]),
        ];
        if let Some(y) = test.y() {
            row.push(fmt(y[r]));
        }
        row
    });
    write_rows(path, &headers, rows)
}

/// One row per (surface, grid point).
pub fn write_surfaces(
    path: &Path,
    grid: &LocationSet,
    surfaces: &[(String, Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let headers: Vec<String> = ["surface", "u1", "u2", "mean", "sd"]
        .into_iter()
        .map(String::from)
        .collect();
    let rows = surfaces.iter().flat_map(|(name, mean, sd)| {
        (0..grid.len()).map(move |a| {
            let u = grid.get(a);
            vec![name.clone(), fmt(u[0]), fmt(u[1]), fmt(mean[a]), fmt(sd[a])]
        })
    });
    write_rows(path, &headers, rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
