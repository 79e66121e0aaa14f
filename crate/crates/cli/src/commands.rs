//! Subcommand bodies. Flags take precedence over the run configuration.

use std::path::PathBuf;

use serde_json::{json, Value};
use vibronic::berry::{berry_phase, BerryMethod, LoopSpec};
use vibronic::coords::NuclearCoords;
use vibronic::fitting::{
    fit_jt_slice, fit_pjt_slice, fit_time_delay, slice_model_value, synth_data, synth_time_delay, FitOptions, FittedParams, LmOptions,
    SynthSpec, Weights,
};
use vibronic::io::{self, num, to_json_string, Cell, Table};
use vibronic::nac::{analytic_jt_nac, nac_field, numeric_nac, Gauge, NacField};
use vibronic::params::Model;
use vibronic::topology::{find_exceptional_points, grid_scan, offset_from_axis, trace_seams, GridSpec};
use vibronic::{Error, Result};

use crate::config::{self, required, RunConfig};
use crate::{Format, Output, RegionArgs};

pub enum Failure {
    Error(Error),
    /// Output already written; exit with this status.
    Report(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn format_of(cfg: &RunConfig, output: &Output, default: Format) -> Result<Format> {
    if let Some(f) = output.format {
        return Ok(f);
    }
    match cfg.format.as_deref() {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(Error::Schema(format!("format must be csv or json, got '{other}'"))),
    }
}

fn emit(cfg: &RunConfig, output: &Output, bytes: Vec<u8>) -> Result<()> {
    match output.out.clone().or_else(|| cfg.out.clone()) {
        Some(path) => io::write_atomic(&path, &bytes),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            match out.write_all(&bytes).and_then(|_| out.flush()) {
                // a closed reader (`| head`) is not a failure
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn emit_table(cfg: &RunConfig, output: &Output, table: &Table, default: Format) -> Result<()> {
    let bytes = match format_of(cfg, output, default)? {
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            buf
        }
        Format::Json => to_json_string(&table.to_value()).into_bytes(),
    };
    emit(cfg, output, bytes)
}

fn emit_json(cfg: &RunConfig, output: &Output, value: &Value) -> Result<()> {
    if format_of(cfg, output, Format::Json)? == Format::Csv {
        return Err(Error::Schema("this command only writes JSON".into()));
    }
    emit(cfg, output, to_json_string(value).into_bytes())
}

fn model_from(cfg: &RunConfig, params: Option<PathBuf>) -> Result<Model> {
    config::load_model(&required(params.or_else(|| cfg.params.clone()), "params")?)
}

fn open(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn value_columns(dim: usize) -> Vec<String> {
    (1..=dim).flat_map(|i| [format!("re_v{i}"), format!("im_v{i}")]).collect()
}

fn columns(head: &[&str], mid: Vec<String>, tail: &[&str]) -> Vec<String> {
    head.iter().map(|s| s.to_string()).chain(mid).chain(tail.iter().map(|s| s.to_string())).collect()
}

pub fn surface(cfg: &RunConfig, params: Option<PathBuf>, grid: Option<String>, output: Output) -> CmdResult {
    let grid = config::parse_grid(&required(grid.or_else(|| cfg.grid.clone()), "grid")?)?;
    let model = model_from(cfg, params)?;
    let table = grid_scan(&model, &grid)?;
    let mut t = Table {
        columns: columns(&["qx", "qy"], value_columns(table.dim), &["rigidity"]),
        rows: Vec::new(),
    };
    for row in &table.rows {
        let mut cells = vec![Cell::Num(row.q.qx()), Cell::Num(row.q.qy())];
        cells.extend(row.values.iter().flat_map(|v| [Cell::Num(v.re), Cell::Num(v.im)]));
        cells.push(Cell::Num(row.rigidity));
        t.push(cells);
    }
    Ok(emit_table(cfg, &output, &t, Format::Csv)?)
}

pub fn slice(cfg: &RunConfig, params: Option<PathBuf>, qx: Option<String>, output: Output) -> CmdResult {
    let axis = config::parse_axis(&required(qx.or_else(|| cfg.qx.clone()), "qx")?, "qx")?;
    let model = model_from(cfg, params)?;
    let fp = match model {
        Model::Pjt(p) => FittedParams::Pjt(p),
        Model::Jt(p) => FittedParams::Jt(p),
    };
    let mut t = Table {
        columns: columns(&["qx"], value_columns(model.dim()), &[]),
        rows: Vec::new(),
    };
    for x in axis.nodes() {
        let mut cells = vec![Cell::Num(x)];
        for b in 1..=model.dim() as u8 {
            let v = slice_model_value(&fp, x, b)?;
            cells.push(Cell::Num(v.re));
            cells.push(Cell::Num(v.im));
        }
        t.push(cells);
    }
    Ok(emit_table(cfg, &output, &t, Format::Csv)?)
}

pub struct BerryArgs {
    pub params: Option<PathBuf>,
    pub center: Option<String>,
    pub radius: Option<f64>,
    pub points: Option<usize>,
    pub start: Option<f64>,
    pub method: Option<String>,
    pub output: Output,
}

pub fn berry(cfg: &RunConfig, a: BerryArgs) -> CmdResult {
    let center = match a.center.or_else(|| cfg.center.clone()) {
        Some(s) => config::parse_point(&s)?,
        None => NuclearCoords::origin(),
    };
    let radius = required(a.radius.or(cfg.radius), "radius")?;
    let method = match a.method.or_else(|| cfg.method.clone()).as_deref() {
        None | Some("line-integral") => BerryMethod::LineIntegral,
        Some("holonomy") => BerryMethod::Holonomy,
        Some(m) => return Err(Error::Schema(format!("method must be line-integral or holonomy, got '{m}'")).into()),
    };
    let start = a.start.or(cfg.start_deg).unwrap_or(0.0).to_radians();
    let points = a.points.or(cfg.points).unwrap_or(64);
    let model = model_from(cfg, a.params)?;
    let lp = LoopSpec::new(center, radius, points)
        .map_err(|e| Error::Schema(e.to_string()))?
        .starting_at(start);
    let b = berry_phase(&model, &lp, method)?;
    let v = json!({
        "tau": num(b.tau),
        "tau_over_pi": num(b.tau / std::f64::consts::PI),
        "method": b.method.as_str(),
        "n_points": b.n_points,
        "permutation": b.permutation,
        "pair": [b.pair.0, b.pair.1],
        "swaps_pair": b.swaps_pair(),
        "center": [num(center.qx()), num(center.qy())],
        "radius": num(radius),
    });
    Ok(emit_json(cfg, &a.output, &v)?)
}

pub struct NacArgs {
    pub params: Option<PathBuf>,
    pub grid: Option<String>,
    pub method: Option<String>,
    pub gauge: Option<String>,
    pub step: Option<f64>,
    pub output: Output,
}

pub fn nac(cfg: &RunConfig, a: NacArgs) -> CmdResult {
    let grid = config::parse_grid(&required(a.grid.or_else(|| cfg.grid.clone()), "grid")?)?;
    let method = a.method.or_else(|| cfg.method.clone()).unwrap_or_else(|| "perturbative".into());
    let gauge = match a.gauge.or_else(|| cfg.gauge.clone()).as_deref() {
        None | Some("single-valued") => Gauge::SingleValued,
        Some("raw") => Gauge::Raw,
        Some(g) => return Err(Error::Schema(format!("gauge must be single-valued or raw, got '{g}'")).into()),
    };
    let step = a.step.or(cfg.tol().fd_step).unwrap_or(1e-5);
    let model = model_from(cfg, a.params)?;
    let compute = |q: &NuclearCoords| -> Result<NacField> {
        match method.as_str() {
            "perturbative" => nac_field(&model, q),
            "numeric" => numeric_nac(&model, q, step),
            "analytic" => match &model {
                Model::Jt(p) => analytic_jt_nac(p, q).map(|r| r.1),
                Model::Pjt(_) => Err(Error::Unsupported("closed-form couplings exist for the jt model only".into())),
            },
            m => Err(Error::Schema(format!("method must be perturbative, numeric or analytic, got '{m}'"))),
        }
    };
    let points: Vec<NuclearCoords> = match grid {
        GridSpec::Cartesian { qx, qy } => qy
            .nodes()
            .into_iter()
            .flat_map(|y| qx.nodes().into_iter().map(move |x| NuclearCoords::cartesian(x, y)))
            .collect::<Result<_>>()?,
        GridSpec::Polar { rho, phi } => phi
            .nodes()
            .into_iter()
            .flat_map(|p| rho.nodes().into_iter().map(move |r| NuclearCoords::polar(r, p)))
            .collect::<Result<_>>()?,
    };
    let mut t = Table::new(&[
        "qx", "qy", "row", "col", "re_fx", "im_fx", "re_fy", "im_fy", "re_frho", "im_frho", "re_fphi", "im_fphi", "status",
    ]);
    let dim = model.dim();
    for q in &points {
        let field = match compute(q) {
            Ok(f) => Some(if gauge == Gauge::Raw { f.raw() } else { f }),
            Err(Error::Singularity { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        for i in 0..dim {
            for j in 0..dim {
                let mut cells = vec![Cell::Num(q.qx()), Cell::Num(q.qy()), Cell::Int(i as i64 + 1), Cell::Int(j as i64 + 1)];
                match &field {
                    Some(f) => {
                        let (r, p) = (f.radial(), f.angular());
                        for z in [f.x[(i, j)], f.y[(i, j)], r[(i, j)], p[(i, j)]] {
                            cells.push(Cell::Num(z.re));
                            cells.push(Cell::Num(z.im));
                        }
                        cells.push(Cell::Text("ok".into()));
                    }
                    None => {
                        cells.extend((0..8).map(|_| Cell::Num(f64::NAN)));
                        cells.push(Cell::Text("singular".into()));
                    }
                }
                t.push(cells);
            }
        }
    }
    Ok(emit_table(cfg, &a.output, &t, Format::Csv)?)
}

fn region_of(cfg: &RunConfig, r: &RegionArgs) -> Result<(vibronic::topology::Region, vibronic::topology::SearchOptions)> {
    let base = cfg.region.clone().unwrap_or_default();
    let merged = config::RegionConfig {
        rho_min: r.rho_min.or(base.rho_min),
        rho_max: r.rho_max.or(base.rho_max),
        phi_min_deg: r.phi_min.or(base.phi_min_deg),
        phi_max_deg: r.phi_max.or(base.phi_max_deg),
    };
    let mut tol = cfg.tol();
    tol.d_rho = r.d_rho.or(tol.d_rho);
    tol.d_phi_deg = r.d_phi.or(tol.d_phi_deg);
    tol.validity_radius = r.validity_radius.or(tol.validity_radius);
    let opts = config::search_options(&tol);
    if !(opts.d_rho > 0.0 && opts.d_phi > 0.0) {
        return Err(Error::Schema("scan spacings must be positive".into()));
    }
    Ok((config::region(&merged)?, opts))
}

pub fn find_ep(cfg: &RunConfig, params: Option<PathBuf>, region: RegionArgs, output: Output) -> CmdResult {
    let (reg, opts) = region_of(cfg, &region)?;
    let model = model_from(cfg, params)?;
    let points = find_exceptional_points(&model, &reg, &opts)?;
    let mut t = Table::new(&[
        "kind", "qx", "qy", "rho", "phi_deg", "offset_deg", "branch_i", "branch_j", "residual", "rigidity", "extrapolated",
    ]);
    for p in &points {
        t.push(vec![
            Cell::Text(p.kind.as_str().into()),
            Cell::Num(p.coords.qx()),
            Cell::Num(p.coords.qy()),
            Cell::Num(p.coords.rho()),
            Cell::Num(p.coords.phi().to_degrees()),
            Cell::Num(offset_from_axis(&p.coords)),
            Cell::Int(p.branches.0 as i64 + 1),
            Cell::Int(p.branches.1 as i64 + 1),
            Cell::Num(p.residual),
            Cell::Num(p.rigidity),
            Cell::Text(p.extrapolated.to_string()),
        ]);
    }
    Ok(emit_table(cfg, &output, &t, Format::Json)?)
}

pub fn seams(cfg: &RunConfig, params: Option<PathBuf>, region: RegionArgs, output: Output) -> CmdResult {
    let (reg, opts) = region_of(cfg, &region)?;
    let model = model_from(cfg, params)?;
    let report = trace_seams(&model, &reg, &opts)?;
    if report.degenerate {
        eprintln!("note: real parameters; the imaginary parts coincide everywhere, no isolated seams");
    }
    let mut t = Table::new(&["curve", "kind", "branch_i", "branch_j", "qx", "qy", "rho", "phi_deg"]);
    for (k, c) in report.curves.iter().enumerate() {
        for q in &c.points {
            t.push(vec![
                Cell::Int(k as i64),
                Cell::Text(c.kind.as_str().into()),
                Cell::Int(c.branches.0 as i64 + 1),
                Cell::Int(c.branches.1 as i64 + 1),
                Cell::Num(q.qx()),
                Cell::Num(q.qy()),
                Cell::Num(q.rho()),
                Cell::Num(q.phi().to_degrees()),
            ]);
        }
    }
    Ok(emit_table(cfg, &output, &t, Format::Csv)?)
}

pub struct FitArgs {
    pub data: Option<PathBuf>,
    pub model: Option<String>,
    pub order: Option<u8>,
    pub init: Option<PathBuf>,
    pub weight_re: Option<f64>,
    pub weight_im: Option<f64>,
    pub max_iter: Option<usize>,
    pub output: Output,
}

fn lm_options(cfg: &RunConfig, max_iter: Option<usize>) -> LmOptions {
    let t = cfg.tol();
    let d = LmOptions::default();
    LmOptions {
        initial_damping: t.lm_initial_damping.unwrap_or(d.initial_damping),
        rel_tol: t.lm_rel_tol.unwrap_or(d.rel_tol),
        max_iter: max_iter.or(t.lm_max_iter).unwrap_or(d.max_iter),
        ..d
    }
}

fn not_converged(fit: &vibronic::fitting::FitResult) -> Error {
    Error::NonConvergence {
        iterations: fit.iterations,
        sse: fit.residual,
        best: fit.diagnostics.iter().map(|d| d.value).collect(),
    }
}

pub fn fit(cfg: &RunConfig, a: FitArgs) -> CmdResult {
    let path = required(a.data.or_else(|| cfg.data.clone()), "data")?;
    let kind = required(a.model.or_else(|| cfg.model.clone()), "model")?;
    let order = a.order.or(cfg.order).unwrap_or(2);
    let t = cfg.tol();
    let weights = Weights {
        re: a.weight_re.or(t.weight_re).unwrap_or(1.0),
        im: a.weight_im.or(t.weight_im).unwrap_or(1.0),
    };
    if !(weights.re > 0.0 && weights.im > 0.0) {
        return Err(Error::Schema("weights must be positive".into()).into());
    }
    let opts = FitOptions {
        weights,
        lm: lm_options(cfg, a.max_iter),
    };
    let init = match a.init.or_else(|| cfg.init.clone()) {
        Some(p) => Some(config::load_model(&p)?),
        None => None,
    };
    let data = io::read_slice_csv(open(&path)?)?;
    let result = match (kind.as_str(), order) {
        ("pjt", 2 | 3) => {
            let init = match init {
                Some(Model::Pjt(p)) => Some(p),
                Some(Model::Jt(_)) => return Err(Error::Schema("initial parameters for a pjt fit must be a pjt file".into()).into()),
                None => None,
            };
            fit_pjt_slice(&data, order, init.as_ref(), &opts)?
        }
        ("jt", 2) => fit_jt_slice(&data, &opts)?,
        (m, o) => return Err(Error::Schema(format!("cannot fit model '{m}' at order {o}")).into()),
    };
    emit_json(cfg, &a.output, &io::fit_result_value(&result))?;
    if !result.converged {
        return Err(not_converged(&result).into());
    }
    Ok(())
}

pub fn bw_fit(cfg: &RunConfig, data: Option<PathBuf>, n_res: Option<usize>, max_iter: Option<usize>, output: Output) -> CmdResult {
    let path = required(data.or_else(|| cfg.data.clone()), "data")?;
    let n = required(n_res.or(cfg.n_res), "n_res")?;
    let curve = io::read_time_delay_csv(open(&path)?)?;
    let fit = fit_time_delay(&curve, n, None, &lm_options(cfg, max_iter))?;
    Ok(emit_json(cfg, &output, &io::fit_result_value(&fit.fit))?)
}

pub struct SynthArgs {
    pub params: Option<PathBuf>,
    pub qx: Option<String>,
    pub resonances: Option<String>,
    pub background: Option<f64>,
    pub energies: Option<String>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub v_ion: Option<f64>,
    pub output: Output,
}

pub fn synth(cfg: &RunConfig, a: SynthArgs) -> CmdResult {
    let sigma = a.sigma.or(cfg.sigma).unwrap_or(0.0);
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    if let Some(res) = a.resonances.or_else(|| cfg.resonances.clone()) {
        let res = config::parse_resonances(&res)?;
        let grid = config::parse_axis(&required(a.energies.or_else(|| cfg.energies.clone()), "energies")?, "energies")?;
        let bg = a.background.or(cfg.background).unwrap_or(0.0);
        let curve = synth_time_delay(&res, bg, &grid.nodes(), sigma, seed)?;
        let mut buf = Vec::new();
        io::write_time_delay_csv(&mut buf, &curve)?;
        return Ok(emit(cfg, &a.output, buf)?);
    }
    let axis = config::parse_axis(&required(a.qx.or_else(|| cfg.qx.clone()), "qx")?, "qx")?;
    let model = model_from(cfg, a.params)?;
    let spec = SynthSpec {
        qx: axis.nodes(),
        sigma,
        seed,
        v_ion: a.v_ion.or(cfg.v_ion).unwrap_or(0.0),
    };
    let data = synth_data(&model, &spec)?;
    let mut buf = Vec::new();
    io::write_slice_csv(&mut buf, &data)?;
    Ok(emit(cfg, &a.output, buf)?)
}

pub fn validate(_cfg: &RunConfig, files: Vec<PathBuf>, out: Option<PathBuf>) -> CmdResult {
    let mut reports = Vec::new();
    for f in &files {
        reports.push(io::validate_file(f)?);
    }
    let ok = reports.iter().all(|r| r.violations.is_empty());
    let v = json!({ "ok": ok, "files": reports });
    let output = Output { out, format: None };
    emit(_cfg, &output, to_json_string(&v).into_bytes())?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Report(2))
    }
}
