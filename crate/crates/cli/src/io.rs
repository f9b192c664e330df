use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use hilbfs::geometry::{grid_metric, Density, ManifoldModel, MetricWeight};
use hilbfs::linalg::{cholesky_lower, hermitian_defect, MatrixJson};
use hilbfs::pushforward::ContinuationTrace;
use hilbfs::report::{to_json_string, SCHEMA_VERSION};
use hilbfs::{Error, HermitianForm};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub stage: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        CliError { code: 1, stage: "input", message }
    }

    pub fn numerical(stage: &'static str, message: String) -> Self {
        CliError { code: 2, stage, message }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_validation() { 1 } else { 2 },
            stage: e.stage().unwrap_or("compute"),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::usage(format!("csv: {e}"))
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<&'a str>,
    result: &'a T,
}

/// Where a command's main artifact goes: `DIR/<command>.{json,csv}` or stdout.
pub struct Output {
    dir: Option<PathBuf>,
    command: &'static str,
    seed: u64,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, command: &'static str, seed: u64) -> Self {
        Output { dir, command, seed }
    }

    fn emit(&self, ext: &str, body: &[u8]) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                fs::write(d.join(format!("{}.{ext}", self.command)), body)?;
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(body)?;
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&self, result: &T) -> Result<(), CliError> {
        self.report(None, result)
    }

    /// `failed_stage` marks a report that accompanies exit code 2.
    pub fn report<T: Serialize>(&self, failed_stage: Option<&str>, result: &T) -> Result<(), CliError> {
        let envelope = Envelope {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            seed: self.seed,
            status: if failed_stage.is_some() { "failed" } else { "ok" },
            stage: failed_stage,
            result,
        };
        let mut s = to_json_string(&envelope)
            .map_err(|e| CliError::usage(format!("json: {e}")))?;
        s.push('\n');
        self.emit("json", s.as_bytes())
    }

    pub fn csv(&self, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        self.emit("csv", &csv_bytes(header, rows)?)
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::usage(format!("csv: {e}")))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    fs::write(path, csv_bytes(header, rows)?)?;
    Ok(())
}

/// Reads a form from a bare matrix file or from any report whose `result` is one.
pub fn read_form(path: impl AsRef<Path>) -> Result<HermitianForm, CliError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("result") {
        v = inner.take();
    }
    let j: MatrixJson = serde_json::from_value(v)
        .map_err(|e| CliError::usage(format!("{}: not a matrix: {e}", path.display())))?;
    let m = j.to_matrix()?;
    let (defect, row, col) = hermitian_defect(&m);
    if defect > HERMITIAN_TOL {
        return Err(CliError::usage(format!(
            "{}: matrix is not hermitian: defect {defect:.3e} at entry ({row}, {col})",
            path.display()
        )));
    }
    let form = HermitianForm::new(m)?;
    // every command consumes positive forms
    cholesky_lower(&form).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok(form)
}

/// Two-column CSV `node,value` with a header, in node order.
fn read_node_column(path: &Path, n: usize) -> Result<Vec<f64>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut values = vec![f64::NAN; n];
    for rec in r.records() {
        let rec = rec?;
        let bad = || CliError::usage(format!("{}: malformed row {:?}", path.display(), rec));
        let node: usize = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        let value: f64 = rec.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        if node >= n {
            return Err(CliError::usage(format!("{}: node {node} out of range (model has {n})", path.display())));
        }
        values[node] = value;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(CliError::usage(format!("{}: no value for node {i}", path.display())));
    }
    Ok(values)
}

pub fn read_grid_metric(path: impl AsRef<Path>, model: &ManifoldModel) -> Result<MetricWeight, CliError> {
    Ok(grid_metric(model, read_node_column(path.as_ref(), model.n_nodes())?)?)
}

pub fn read_density(path: impl AsRef<Path>, model: &ManifoldModel) -> Result<Density, CliError> {
    Ok(Density::new(read_node_column(path.as_ref(), model.n_nodes())?)?)
}

pub fn write_potential_csv(path: &Path, u: &[f64]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = u.iter().enumerate().map(|(i, x)| vec![i.to_string(), num(*x)]).collect();
    write_csv(path, &["node", "u"], &rows)
}

pub fn write_trace_csv(path: &Path, trace: &ContinuationTrace) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = trace
        .rows
        .iter()
        .map(|r| vec![num(r.t), num(r.residual), num(r.step), r.newton_iters.to_string()])
        .collect();
    write_csv(path, &["t", "residual", "step", "newton_iters"], &rows)
}

pub fn write_densities_csv(path: &Path, densities: &[Density]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (i, d) in densities.iter().enumerate() {
        for (x, w) in d.weights.iter().enumerate() {
            rows.push(vec![i.to_string(), x.to_string(), num(*w)]);
        }
    }
    write_csv(path, &["row", "node", "weight"], &rows)
}

pub fn model_table(model: &ManifoldModel) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["node", "z_re", "z_im", "quad_weight", "ref_weight"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..model.n_sections() {
        header.push(format!("s{i}_re"));
        header.push(format!("s{i}_im"));
    }
    let rows = model
        .dump_rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(c, v)| if c == 0 { (*v as usize).to_string() } else { num(*v) })
                .collect()
        })
        .collect();
    (header, rows)
}

pub fn write_model_csv(path: &Path, model: &ManifoldModel) -> Result<(), CliError> {
    let (header, rows) = model_table(model);
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &refs, &rows)
}
