//! File formats: parameter JSON, slice and time-delay CSV, fit results.
//!
//! Every number is written with 17 significant digits so values survive a
//! write/read cycle bit for bit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number, Value};

use crate::coords::NuclearCoords;
use crate::error::{Error, Result};
use crate::fitting::{FitResult, FittedParams, ResonanceSample, TimeDelayCurve};
use crate::params::{JtParams, Model, PjtParams, C64};

/// `x` with 17 significant digits and a signed exponent (`1.5000000000000000e+0`);
/// non-finite values as `NaN`, `inf`, `-inf`.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.16e}");
    match s.split_once('e') {
        Some((m, e)) if !e.starts_with('-') => format!("{m}e+{e}"),
        _ => s,
    }
}

/// JSON number carrying exactly the [`fmt17`] text; `null` if not finite.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let n: Number = fmt17(x).parse().expect("formatted float is a valid JSON number");
    Value::Number(n)
}

pub fn complex(z: C64) -> Value {
    Value::Array(vec![num(z.re), num(z.im)])
}

/// Serializes with sorted keys and a trailing newline.
pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values are always serializable");
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    model: String,
    #[serde(default)]
    order: Option<u8>,
    params: BTreeMap<String, [f64; 2]>,
}

fn schema<E: std::fmt::Display>(e: E) -> Error {
    Error::Schema(e.to_string())
}

/// `{"model": "pjt" | "jt", "order": 2 | 3, "params": {"eps_E": [re, im], …}}`.
/// Unknown and missing keys are schema errors.
pub fn params_from_json(text: &str) -> Result<Model> {
    let raw: RawParams = serde_json::from_str(text).map_err(schema)?;
    let (names, order): (&[&str], u8) = match (raw.model.as_str(), raw.order) {
        ("pjt", None | Some(2)) => (PjtParams::names(2), 2),
        ("pjt", Some(3)) => (PjtParams::names(3), 3),
        ("jt", None | Some(2)) => (JtParams::names(), 2),
        (m @ ("pjt" | "jt"), Some(o)) => return Err(Error::Schema(format!("model {m} has no order {o}"))),
        (m, _) => return Err(Error::Schema(format!("unknown model '{m}' (expected pjt or jt)"))),
    };
    if let Some(extra) = raw.params.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::Schema(format!("unknown parameter '{extra}' for order-{order} {}", raw.model)));
    }
    let values: Vec<C64> = names
        .iter()
        .map(|n| {
            raw.params
                .get(*n)
                .map(|v| C64::new(v[0], v[1]))
                .ok_or_else(|| Error::Schema(format!("missing parameter '{n}'")))
        })
        .collect::<Result<_>>()?;
    if raw.model == "pjt" {
        Ok(Model::Pjt(PjtParams::from_slice(&values)?))
    } else {
        Ok(Model::Jt(JtParams::from_slice(&values)?))
    }
}

fn params_object(names: &[&str], values: &[C64]) -> Value {
    let mut m = Map::new();
    for (n, v) in names.iter().zip(values) {
        m.insert((*n).to_string(), complex(*v));
    }
    Value::Object(m)
}

pub fn params_to_value(model: &Model) -> Value {
    match model {
        Model::Pjt(p) => json!({
            "model": "pjt",
            "order": p.order(),
            "params": params_object(PjtParams::names(p.order()), &p.to_vec()),
        }),
        Model::Jt(p) => json!({
            "model": "jt",
            "order": 2,
            "params": params_object(JtParams::names(), &p.to_vec()),
        }),
    }
}

pub fn params_to_json(model: &Model) -> String {
    to_json_string(&params_to_value(model))
}

/// A parameter file, or a fit result (recognised by its `converged` field)
/// whose parameters are read instead.
pub fn read_params(path: &Path) -> Result<Model> {
    params_from_file_text(&std::fs::read_to_string(path)?)
}

fn params_from_file_text(text: &str) -> Result<Model> {
    let is_fit = serde_json::from_str::<Value>(text)
        .ok()
        .and_then(|v| v.as_object().map(|o| o.contains_key("converged")))
        .unwrap_or(false);
    if is_fit {
        params_from_fit_json(text)
    } else {
        params_from_json(text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliceRow {
    qx: f64,
    branch: u8,
    eps_n: f64,
    gamma_n: f64,
    v_ion: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayRow {
    e: f64,
    ddelta_de: f64,
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers()?;
    let got: Vec<&str> = h.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!("expected columns {expected:?}, found {got:?}")));
    }
    Ok(())
}

/// Slice data: `qx,branch,eps_n,gamma_n,v_ion`. Row numbers in errors count
/// data rows from 1.
pub fn read_slice_csv<R: Read>(r: R) -> Result<Vec<ResonanceSample>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["qx", "branch", "eps_n", "gamma_n", "v_ion"])?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SliceRow>().enumerate() {
        let row = row.map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
        let q = NuclearCoords::cartesian(row.qx, 0.0).map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
        let s = ResonanceSample::new(q, row.branch, row.eps_n, row.gamma_n, row.v_ion)
            .map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_slice_csv<W: Write>(w: W, data: &[ResonanceSample]) -> Result<()> {
    let mut t = Table::new(&["qx", "branch", "eps_n", "gamma_n", "v_ion"]);
    for s in data {
        t.push(vec![
            Cell::Num(s.q.qx()),
            Cell::Int(s.branch as i64),
            Cell::Num(s.eps),
            Cell::Num(s.gamma),
            Cell::Num(s.v_ion),
        ]);
    }
    t.write_csv(w)
}

/// Time delay: `e,ddelta_de`.
pub fn read_time_delay_csv<R: Read>(r: R) -> Result<TimeDelayCurve> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["e", "ddelta_de"])?;
    let mut e = Vec::new();
    let mut v = Vec::new();
    for (i, row) in rdr.deserialize::<DelayRow>().enumerate() {
        let row = row.map_err(|err| Error::Schema(format!("row {}: {err}", i + 1)))?;
        e.push(row.e);
        v.push(row.ddelta_de);
    }
    TimeDelayCurve::new(e, v).map_err(|err| Error::Schema(err.to_string()))
}

pub fn write_time_delay_csv<W: Write>(w: W, curve: &TimeDelayCurve) -> Result<()> {
    let mut t = Table::new(&["e", "ddelta_de"]);
    for (e, v) in curve.energies().iter().zip(curve.values()) {
        t.push(vec![Cell::Num(*e), Cell::Num(*v)]);
    }
    t.write_csv(w)
}

/// Fit output. Potential fits carry the parameter file fields (`model`,
/// `order`, `params`) so the result can be reduced to a parameter file.
pub fn fit_result_value(fit: &FitResult) -> Value {
    let mut m = match &fit.params {
        FittedParams::Pjt(p) => params_to_value(&Model::Pjt(*p)),
        FittedParams::Jt(p) => params_to_value(&Model::Jt(*p)),
        FittedParams::BreitWigner { resonances, background } => json!({
            "model": "breit_wigner",
            "resonances": resonances.iter().map(|r| json!({"position": num(r.position), "width": num(r.width)})).collect::<Vec<_>>(),
            "background": num(*background),
        }),
    };
    let obj = m.as_object_mut().expect("object");
    obj.insert("residual".into(), num(fit.residual));
    obj.insert("iterations".into(), json!(fit.iterations));
    obj.insert("converged".into(), json!(fit.converged));
    obj.insert("condition_number".into(), num(fit.condition_number));
    obj.insert(
        "diagnostics".into(),
        Value::Array(
            fit.diagnostics
                .iter()
                .map(|d| {
                    json!({
                        "name": d.name,
                        "value": num(d.value),
                        "std_error": num(d.std_error),
                        "sensitivity": num(d.sensitivity),
                    })
                })
                .collect(),
        ),
    );
    obj.insert("std_error_note".into(), json!("linearized, indicative only"));
    m
}

/// Reduces a fit output (or a parameter file) to the model it describes.
pub fn params_from_fit_json(text: &str) -> Result<Model> {
    let v: Value = serde_json::from_str(text).map_err(schema)?;
    let obj = v.as_object().ok_or_else(|| Error::Schema("expected a JSON object".into()))?;
    let mut keep = Map::new();
    for k in ["model", "order", "params"] {
        if let Some(x) = obj.get(k) {
            keep.insert(k.into(), x.clone());
        }
    }
    params_from_json(&Value::Object(keep).to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(x) => fmt17(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn value(&self) -> Value {
        match self {
            Cell::Num(x) => num(*x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

/// Column-named rows written as CSV or as a JSON array of objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::text))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut m = Map::new();
                    for (c, v) in self.columns.iter().zip(row) {
                        m.insert(c.clone(), v.value());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    /// Data row (from 1) where applicable.
    pub row: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileReport {
    pub path: String,
    pub kind: String,
    pub violations: Vec<Violation>,
}

fn violation(row: Option<usize>, message: impl Into<String>) -> Violation {
    Violation {
        row,
        message: message.into(),
    }
}

fn check_params(text: &str) -> Vec<Violation> {
    match params_from_file_text(text) {
        Ok(_) => Vec::new(),
        Err(e) => vec![violation(None, e.to_string())],
    }
}

fn check_slice(text: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut rdr = reader(text.as_bytes());
    for (i, row) in rdr.deserialize::<SliceRow>().enumerate() {
        let n = Some(i + 1);
        match row {
            Err(e) => out.push(violation(n, e.to_string())),
            Ok(r) => {
                if !(r.qx.is_finite() && r.eps_n.is_finite() && r.gamma_n.is_finite() && r.v_ion.is_finite()) {
                    out.push(violation(n, "non-finite value"));
                }
                if r.gamma_n < 0.0 {
                    out.push(violation(n, format!("negative width gamma_n = {}", r.gamma_n)));
                }
                if !(1..=3).contains(&r.branch) {
                    out.push(violation(n, format!("branch {} is not 1, 2 or 3", r.branch)));
                }
            }
        }
    }
    out
}

fn check_delay(text: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut rdr = reader(text.as_bytes());
    let mut last: Option<f64> = None;
    for (i, row) in rdr.deserialize::<DelayRow>().enumerate() {
        let n = Some(i + 1);
        match row {
            Err(e) => out.push(violation(n, e.to_string())),
            Ok(r) => {
                if !(r.e.is_finite() && r.ddelta_de.is_finite()) {
                    out.push(violation(n, "non-finite value"));
                }
                if let Some(prev) = last {
                    if r.e <= prev {
                        out.push(violation(n, format!("energy {} does not increase (previous {prev})", r.e)));
                    }
                }
                last = Some(r.e);
            }
        }
    }
    out
}

/// Schema and invariant checks without running any computation. The file
/// kind is taken from the extension and, for CSV, the header.
pub fn validate_file(path: &Path) -> Result<FileReport> {
    let text = std::fs::read_to_string(path)?;
    let name = path.display().to_string();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (kind, violations) = if ext == "json" {
        ("params", check_params(&text))
    } else {
        let header: Vec<String> = reader(text.as_bytes())
            .headers()
            .map(|h| h.iter().map(str::to_string).collect())
            .unwrap_or_default();
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        match h.as_slice() {
            ["qx", "branch", "eps_n", "gamma_n", "v_ion"] => ("slice_data", check_slice(&text)),
            ["e", "ddelta_de"] => ("time_delay", check_delay(&text)),
            _ => (
                "unknown",
                vec![violation(None, format!("unrecognized columns {h:?}; expected slice data or time delay"))],
            ),
        }
    };
    Ok(FileReport {
        path: name,
        kind: kind.into(),
        violations,
    })
}
