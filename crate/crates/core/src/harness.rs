//! Experiment orchestration: runs a configured solver and writes the
//! plain-text artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! config.ini          serialized configuration
//! series.csv          `# schema=1`, header, one row per step
//! snapshots/NNNN.csv  field snapshots; final.csv is the last state
//! shock_report.txt    key = value (`case = I` when no shock formed)
//! compare_report.csv  compare mode only
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::cartesian::{self, CartesianError, CartesianGrid, CartesianOptions, CartesianSolver, CartesianState, CompareReport};
use crate::config::{ConfigError, RunConfig, SolverKind};
use crate::diagnostics::{initial_data_size, DataSizeParams, Outcome, SeriesRow, ShockReport};
use crate::geo2d::{self, Geo2DError, Geo2DGrid, Geo2DOptions, Geo2DState};
use crate::metric::{MetricError, MetricModel};
use crate::plane::{self, PlaneError, PlaneOptions, PlaneState};

pub const SCHEMA_LINE: &str = "# schema=1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("harness-cli/run: invalid data: {0}")]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Geo(#[from] Geo2DError),
    #[error(transparent)]
    Cartesian(#[from] CartesianError),
    #[error("harness-cli/{op}: {path}: {msg}")]
    Io { op: &'static str, path: String, msg: String },
    #[error("harness-cli/{op}: {path}: {msg}")]
    Format { op: &'static str, path: String, msg: String },
    #[error("harness-cli/sweep: key {0:?} is not a numeric configuration key")]
    SweepKey(String),
}

fn io_err<'a>(op: &'static str, path: &'a Path) -> impl FnOnce(std::io::Error) -> HarnessError + 'a {
    move |e| HarnessError::Io {
        op,
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn write_file(op: &'static str, path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(op, dir))?;
    }
    fs::write(path, text).map_err(io_err(op, path))
}

/// Shortest round-trip float text.
fn f(x: f64) -> String {
    format!("{x:e}")
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Shock(ShockReport),
    NoShock { t_end: f64, mu_star_min: f64 },
    /// Cartesian reference run to a fixed time.
    Reference { t_end: f64 },
    Compared(CompareReport),
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub solver: SolverKind,
    pub params: DataSizeParams,
    pub outcome: RunOutcome,
    pub wall_time: f64,
}

impl RunSummary {
    pub fn shock(&self) -> Option<&ShockReport> {
        match &self.outcome {
            RunOutcome::Shock(r) => Some(r),
            _ => None,
        }
    }
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut s = format!("{SCHEMA_LINE}\n{}\n", SeriesRow::HEADER);
    for r in rows {
        let line: Vec<String> = r.values().iter().map(|&v| f(v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub const PLANE_SNAPSHOT_HEADER: &str = "u,psi,a,b,mu,r,s,w";
pub const GEO_SNAPSHOT_HEADER: &str = "u,theta,psi,b,mu,l1s,l2s,x1,x2,w,w0,w1,w2";
pub const CART_SNAPSHOT_HEADER: &str = "x1,x2,psi,dt_psi,d1_psi,d2_psi,w,w0,w1,w2";

pub fn plane_snapshot(st: &PlaneState) -> String {
    let mut s = format!("{SCHEMA_LINE}\n# solver=plane t={} nu={}\n{PLANE_SNAPSHOT_HEADER}\n", f(st.t), st.nodes() - 1);
    for j in 0..st.nodes() {
        let _ = write!(s, "{}", f(st.u(j)));
        for k in 0..plane::NF {
            let _ = write!(s, ",{}", f(st.f[k][j]));
        }
        s.push('\n');
    }
    s
}

pub fn geo_snapshot(st: &Geo2DState) -> String {
    let g = &st.grid;
    let mut s = format!(
        "{SCHEMA_LINE}\n# solver=geo2d t={} nu={} nt={} u0={}\n{GEO_SNAPSHOT_HEADER}\n",
        f(st.t),
        g.nu,
        g.nt,
        f(g.u0)
    );
    for i in 0..=g.nu {
        for j in 0..g.nt {
            let _ = write!(s, "{},{}", f(g.u(i)), f(g.theta(j)));
            for k in 0..geo2d::NG {
                let v = if k == geo2d::X2 { st.x2(i, j) } else { st.at(k, i, j) };
                let _ = write!(s, ",{}", f(v));
            }
            s.push('\n');
        }
    }
    s
}

pub fn cart_snapshot(st: &CartesianState, grad: &[Vec<f64>; 2]) -> String {
    let g = &st.grid;
    let mut s = format!(
        "{SCHEMA_LINE}\n# solver=cartesian t={} nx={} nt={} x_lo={} x_hi={}\n{CART_SNAPSHOT_HEADER}\n",
        f(st.t),
        g.nx,
        g.nt,
        f(g.x_lo),
        f(g.x_hi)
    );
    for i in 0..=g.nx {
        for j in 0..g.nt {
            let n = g.idx(i, j);
            let v = [
                st.f[cartesian::PSI][n],
                st.f[cartesian::PI][n],
                grad[0][n],
                grad[1][n],
                st.f[cartesian::W][n],
                st.f[cartesian::W0][n],
                st.f[cartesian::W1][n],
                st.f[cartesian::W2][n],
            ];
            let _ = write!(s, "{},{}", f(g.x1(i)), f(g.x2(j)));
            for x in v {
                let _ = write!(s, ",{}", f(x));
            }
            s.push('\n');
        }
    }
    s
}

pub fn shock_report_text(outcome: &RunOutcome, params: &DataSizeParams, wall_time: f64) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    match outcome {
        RunOutcome::Shock(r) => {
            kv("case", "II".into());
            kv("T_shock", f(r.t_shock));
            kv("kappa", f(r.kappa));
            kv("r2", f(r.r2));
            kv("u_star", f(r.u_star));
            kv("theta_star", f(r.theta_star));
            kv("blowup_exponent", f(r.blowup_exponent));
            kv("max_w_sup", f(r.max_w_sup));
            kv("t_end", f(r.t_end));
            kv("mu_star_end", f(r.mu_star_end));
            kv("steps", r.steps.to_string());
            let m = &r.residuals;
            kv("res_jacobian", f(m.jacobian));
            kv("res_curl", f(m.curl));
            kv("res_b", f(m.b));
            kv("res_lnu", f(m.lnu));
            kv("res_null", f(m.null));
            kv("res_radl", f(m.radl));
            kv("res_xbu", f(m.xbu));
            kv("audit_fast", f(m.audit_fast));
            kv("audit_slow", f(m.audit_slow));
        }
        RunOutcome::NoShock { t_end, mu_star_min } => {
            kv("case", "I".into());
            kv("t_end", f(*t_end));
            kv("mu_star_min", f(*mu_star_min));
        }
        RunOutcome::Reference { t_end } => {
            kv("case", "reference".into());
            kv("t_end", f(*t_end));
        }
        RunOutcome::Compared(c) => {
            kv("case", "compare".into());
            kv("t_end", f(c.t_cart));
            kv("worst_max_rel", f(c.worst_max_rel()));
            kv("worst_l2_rel", f(c.worst_l2_rel()));
        }
    }
    kv("deltastar", f(params.deltastar));
    kv("alpha0", f(params.alpha0));
    kv("eps0", f(params.eps0));
    kv("delta0", f(params.delta0));
    kv("wall_time", format!("{wall_time:.3}"));
    s
}

pub fn compare_report_csv(r: &CompareReport) -> String {
    let mut s = format!(
        "{SCHEMA_LINE}\n# t_cart={} t_geo={} samples={}\nquantity,max_abs,max_rel,l2_rel\n",
        f(r.t_cart),
        f(r.t_geo),
        r.samples
    );
    for (q, name) in cartesian::COMPARE_NAMES.iter().enumerate() {
        let _ = writeln!(s, "{name},{},{},{}", f(r.max_abs[q]), f(r.max_rel[q]), f(r.l2_rel[q]));
    }
    s
}

fn snapshot_times(dt: f64, t_max: f64) -> Vec<f64> {
    if dt <= 0.0 {
        return Vec::new();
    }
    (1..).map(|k| k as f64 * dt).take_while(|&t| t < t_max).collect()
}

fn snap_path(dir: &Path, k: usize) -> PathBuf {
    dir.join("snapshots").join(format!("{k:04}.csv"))
}

fn outcome_of(o: &Outcome) -> RunOutcome {
    match o {
        Outcome::Shock(r) => RunOutcome::Shock(*r),
        Outcome::NoShock { t_end, mu_star_min } => RunOutcome::NoShock {
            t_end: *t_end,
            mu_star_min: *mu_star_min,
        },
    }
}

/// Comparison time used when `t_max` is unset in cartesian/compare mode.
pub fn default_compare_time(deltastar: f64) -> f64 {
    0.3 / deltastar.max(0.05)
}

fn cart_options(cfg: &RunConfig) -> CartesianOptions {
    CartesianOptions {
        nx: cfg.nx,
        nt: cfg.nt,
        x_lo: cfg.x_lo,
        x_hi: cfg.x_hi,
        cfl: cfg.cfl.unwrap_or(0.5),
        t_ref_max: None,
    }
}

fn geo_options(cfg: &RunConfig, t_max: Option<f64>, output_times: Vec<f64>) -> Geo2DOptions {
    Geo2DOptions {
        nu: cfg.nu,
        nt: cfg.nt,
        u0: cfg.u0,
        cfl: cfg.cfl.unwrap_or(0.4),
        mu_stop: cfg.mu_stop,
        t_max,
        output_times,
        audit: cfg.audit,
        fast_a_mode: cfg.fast_a_mode,
    }
}

/// Run the Cartesian solver, recording a reduced series.
fn run_cartesian_recorded(
    model: &MetricModel,
    cfg: &RunConfig,
    data: &crate::data::InitialData,
    deltastar: f64,
    t_end: f64,
    snap_times: &[f64],
) -> Result<(CartesianSolver, Vec<SeriesRow>, Vec<CartesianState>), HarnessError> {
    let opts = cart_options(cfg);
    let init = cartesian::init_cartesian(model, data, opts.grid())?;
    let t_ref_max = 0.5 / deltastar.max(1e-12);
    let mut s = CartesianSolver::new(model.clone(), init, opts.cfl, t_ref_max);
    let mut rows = Vec::new();
    let mut snaps = Vec::new();
    let record = |s: &mut CartesianSolver, rows: &mut Vec<SeriesRow>| {
        let curl = s.curl_residual();
        let [g1, _] = s.spatial_gradient();
        let st = s.state();
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut r = SeriesRow {
            t: st.t,
            max_d1psi: sup(&g1),
            max_dtpsi: sup(&st.f[cartesian::PI]),
            sup_w: [
                sup(&st.f[cartesian::W]),
                sup(&st.f[cartesian::W0]),
                sup(&st.f[cartesian::W1]),
                sup(&st.f[cartesian::W2]),
            ],
            res_curl: curl,
            ..Default::default()
        };
        // Geometric quantities are not defined on this grid.
        for v in [&mut r.mu_star, &mut r.u_star, &mut r.theta_star, &mut r.max_xpsi] {
            *v = f64::NAN;
        }
        rows.push(r);
    };
    record(&mut s, &mut rows);
    let dt0 = s.dt_max();
    let mut pending: Vec<f64> = snap_times.iter().rev().copied().collect();
    while s.state().t < t_end - 1e-12 {
        let t = s.state().t;
        let mut dt = dt0.min(t_end - t);
        let mut hit = false;
        if let Some(&next) = pending.last() {
            if t + dt >= next - 1e-12 {
                dt = next - t;
                hit = true;
            }
        }
        s.step(dt)?;
        record(&mut s, &mut rows);
        if hit {
            snaps.push(s.state().clone());
            pending.pop();
        }
    }
    Ok((s, rows, snaps))
}

/// Execute `cfg`, writing artifacts under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let clock = Instant::now();
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(io_err("run", &dir))?;
    write_file("run", &dir.join("config.ini"), &cfg.serialize())?;
    let model = cfg.build_model();
    let data = cfg.build_data(&model)?;
    let params = initial_data_size(&model, &data)?;
    let (outcome, series) = match cfg.solver {
        SolverKind::Plane => {
            let t_max = cfg.t_max.unwrap_or_else(|| plane::default_t_max(params.deltastar));
            let times = snapshot_times(cfg.snapshot_dt, t_max);
            let opts = PlaneOptions {
                nu: cfg.nu,
                cfl: cfg.cfl.unwrap_or(1.0),
                mu_stop: cfg.mu_stop,
                t_max: Some(t_max),
                output_times: times,
                audit: cfg.audit,
            };
            let r = plane::run_plane_full(&model, &data, &opts)?;
            write_file("run", &snap_path(&dir, 0), &plane_snapshot(&r.initial))?;
            for (k, st) in r.outputs.iter().enumerate() {
                write_file("run", &snap_path(&dir, k + 1), &plane_snapshot(st))?;
            }
            write_file("run", &dir.join("snapshots/final.csv"), &plane_snapshot(&r.final_state))?;
            (outcome_of(&r.outcome), r.series)
        }
        SolverKind::Geo2D => {
            let t_max = cfg.t_max.unwrap_or_else(|| geo2d::default_t_max(params.deltastar));
            let r = geo2d::run_geo2d_full(&model, &data, &geo_options(cfg, Some(t_max), snapshot_times(cfg.snapshot_dt, t_max)))?;
            write_file("run", &snap_path(&dir, 0), &geo_snapshot(&r.initial))?;
            for (k, st) in r.outputs.iter().enumerate() {
                write_file("run", &snap_path(&dir, k + 1), &geo_snapshot(st))?;
            }
            write_file("run", &dir.join("snapshots/final.csv"), &geo_snapshot(&r.final_state))?;
            (outcome_of(&r.outcome), r.series)
        }
        SolverKind::Cartesian => {
            let t_end = cfg.t_max.unwrap_or_else(|| default_compare_time(params.deltastar));
            let times = snapshot_times(cfg.snapshot_dt, t_end);
            let init = cartesian::init_cartesian(&model, &data, cart_options(cfg).grid())?;
            let mut probe = CartesianSolver::new(model.clone(), init, 0.5, f64::INFINITY);
            let g0 = probe.spatial_gradient();
            write_file("run", &snap_path(&dir, 0), &cart_snapshot(probe.state(), &g0))?;
            let (mut s, rows, snaps) = run_cartesian_recorded(&model, cfg, &data, params.deltastar, t_end, &times)?;
            for (k, st) in snaps.into_iter().enumerate() {
                let mut tmp = CartesianSolver::new(model.clone(), st, 0.5, f64::INFINITY);
                let g = tmp.spatial_gradient();
                write_file("run", &snap_path(&dir, k + 1), &cart_snapshot(tmp.state(), &g))?;
            }
            let g = s.spatial_gradient();
            write_file("run", &dir.join("snapshots/final.csv"), &cart_snapshot(s.state(), &g))?;
            (RunOutcome::Reference { t_end: s.state().t }, rows)
        }
        SolverKind::Compare => {
            let t_end = cfg.t_max.unwrap_or_else(|| default_compare_time(params.deltastar));
            let geo_dir = dir.join("geo2d");
            let cart_dir = dir.join("cartesian");
            for sub in [&geo_dir, &cart_dir] {
                write_file("run", &sub.join("config.ini"), &cfg.serialize())?;
            }
            let r = geo2d::run_geo2d_full(&model, &data, &geo_options(cfg, Some(t_end), Vec::new()))?;
            write_file("run", &geo_dir.join("series.csv"), &series_csv(&r.series))?;
            write_file("run", &geo_dir.join("snapshots/final.csv"), &geo_snapshot(&r.final_state))?;
            let (mut s, rows, _) = run_cartesian_recorded(&model, cfg, &data, params.deltastar, t_end, &[])?;
            let g = s.spatial_gradient();
            write_file("run", &cart_dir.join("series.csv"), &series_csv(&rows))?;
            write_file("run", &cart_dir.join("snapshots/final.csv"), &cart_snapshot(s.state(), &g))?;
            let rep = cartesian::compare_to_geo(&model, s.state(), &g, &r.final_state)?;
            write_file("run", &dir.join("compare_report.csv"), &compare_report_csv(&rep))?;
            (RunOutcome::Compared(rep), r.series)
        }
    };
    write_file("run", &dir.join("series.csv"), &series_csv(&series))?;
    let wall_time = clock.elapsed().as_secs_f64();
    write_file("run", &dir.join("shock_report.txt"), &shock_report_text(&outcome, &params, wall_time))?;
    Ok(RunSummary {
        dir,
        solver: cfg.solver,
        params,
        outcome,
        wall_time,
    })
}

/// Data-size parameters of the configured initial data.
pub fn params(cfg: &RunConfig) -> Result<DataSizeParams, HarnessError> {
    cfg.validate()?;
    let model = cfg.build_model();
    let data = cfg.build_data(&model)?;
    Ok(initial_data_size(&model, &data)?)
}

pub fn params_text(p: &DataSizeParams) -> String {
    format!(
        "alpha0 = {}\neps0 = {}\neps0_measured = {}\ndelta0 = {}\ndeltastar = {}\n",
        f(p.alpha0),
        f(p.eps0),
        f(p.eps0_measured),
        f(p.delta0),
        f(p.deltastar)
    )
}

// ---------------------------------------------------------------- sweep

pub const SWEEP_HEADER: &str = "value,status,T_shock,kappa,r2,u_star,theta_star,blowup_exponent,max_w_sup,\
deltastar,alpha0,eps0,delta0,T_times_deltastar,observed_order,error";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// `shock`, `no_shock`, `reference`, `compare` or `error`.
    pub status: String,
    pub report: Option<ShockReport>,
    pub params: Option<DataSizeParams>,
    /// Richardson estimate from this and the two previous resolutions.
    pub observed_order: Option<f64>,
    pub error: String,
}

impl SweepRow {
    fn csv(&self) -> String {
        let o = |x: Option<f64>| x.map(f).unwrap_or_default();
        let r = self.report.as_ref();
        let p = self.params.as_ref();
        let cells = [
            self.value.clone(),
            self.status.clone(),
            o(r.map(|r| r.t_shock)),
            o(r.map(|r| r.kappa)),
            o(r.map(|r| r.r2)),
            o(r.map(|r| r.u_star)),
            o(r.map(|r| r.theta_star)),
            o(r.map(|r| r.blowup_exponent)),
            o(r.map(|r| r.max_w_sup)),
            o(p.map(|p| p.deltastar)),
            o(p.map(|p| p.alpha0)),
            o(p.map(|p| p.eps0)),
            o(p.map(|p| p.delta0)),
            o(r.zip(p).map(|(r, p)| r.t_shock * p.deltastar)),
            o(self.observed_order),
            self.error.replace([',', '\n'], ";"),
        ];
        cells.join(",")
    }
}

/// Observed order from three T_shock values at resolutions n₀ < n₁ < n₂
/// with a common refinement ratio.
pub fn observed_order(n: [f64; 3], t: [f64; 3]) -> Option<f64> {
    let r1 = n[1] / n[0];
    let r2 = n[2] / n[1];
    if !(r1 > 1.0) || (r1 - r2).abs() > 1e-9 * r1 {
        return None;
    }
    let (d1, d2) = ((t[0] - t[1]).abs(), (t[1] - t[2]).abs());
    (d1 > 0.0 && d2 > 0.0).then(|| (d1 / d2).ln() / r1.ln())
}

/// Repeat `run` over `values` of `key`, each in `out/<key>=<value>`, and
/// write `out/sweep_<key>.csv`. Failures are recorded and the sweep continues.
pub fn sweep(cfg: &RunConfig, key: &str, values: &[String]) -> Result<(PathBuf, Vec<SweepRow>), HarnessError> {
    if !RunConfig::is_numeric_key(key) {
        return Err(HarnessError::SweepKey(key.into()));
    }
    let short = key.rsplit('.').next().unwrap_or(key);
    let resolution = matches!(short, "nu" | "nt" | "nx");
    let mut rows: Vec<SweepRow> = Vec::new();
    for v in values {
        let mut c = cfg.clone();
        c.out = cfg.out.join(format!("{short}={v}"));
        let res = c
            .set(key, v)
            .map_err(|msg| HarnessError::Config(ConfigError::Parse { line: 0, msg }))
            .and_then(|_| run(&c));
        let row = match res {
            Ok(s) => SweepRow {
                value: v.clone(),
                status: match &s.outcome {
                    RunOutcome::Shock(_) => "shock",
                    RunOutcome::NoShock { .. } => "no_shock",
                    RunOutcome::Reference { .. } => "reference",
                    RunOutcome::Compared(_) => "compare",
                }
                .into(),
                report: s.shock().copied(),
                params: Some(s.params),
                observed_order: None,
                error: String::new(),
            },
            Err(e) => SweepRow {
                value: v.clone(),
                status: "error".into(),
                report: None,
                params: None,
                observed_order: None,
                error: e.to_string(),
            },
        };
        rows.push(row);
    }
    if resolution {
        for k in 2..rows.len() {
            let n: Option<Vec<f64>> = rows[k - 2..=k].iter().map(|r| r.value.parse().ok()).collect();
            let t: Option<Vec<f64>> = rows[k - 2..=k].iter().map(|r| r.report.map(|x| x.t_shock)).collect();
            if let (Some(n), Some(t)) = (n, t) {
                rows[k].observed_order = observed_order([n[0], n[1], n[2]], [t[0], t[1], t[2]]);
            }
        }
    }
    let mut text = format!("{SCHEMA_LINE}\n# key={short}\n{SWEEP_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    let path = cfg.out.join(format!("sweep_{short}.csv"));
    write_file("sweep", &path, &text)?;
    Ok((path, rows))
}

// ---------------------------------------------------------------- compare

/// Parsed snapshot: metadata from the `# solver=...` line and numeric rows.
struct Snapshot {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Snapshot {
    fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err("compare", path))?;
        let bad = |msg: String| HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some(SCHEMA_LINE) {
            return Err(bad("missing schema line".into()));
        }
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| bad("missing metadata line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split(',')
            .map(String::from)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for (n, l) in lines.enumerate() {
            let row: Result<Vec<f64>, _> = l.split(',').map(str::parse).collect();
            let row = row.map_err(|_| bad(format!("bad number on data row {}", n + 1)))?;
            if row.len() != header.len() {
                return Err(bad(format!("data row {} has {} columns", n + 1, row.len())));
            }
            rows.push(row);
        }
        Ok(Self { meta, header, rows })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn num<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T, HarnessError> {
        self.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg: format!("missing or invalid {key}"),
        })
    }
}

fn load_geo(path: &Path) -> Result<Geo2DState, HarnessError> {
    let s = Snapshot::read(path)?;
    if s.get("solver") != Some("geo2d") || s.header.join(",") != GEO_SNAPSHOT_HEADER {
        return Err(HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg: "not a geo2d snapshot".into(),
        });
    }
    let mut grid = Geo2DGrid::new(s.num("nu", path)?, s.num("nt", path)?);
    grid.u0 = s.num("u0", path)?;
    if s.rows.len() != grid.nodes() {
        return Err(HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg: format!("expected {} rows, found {}", grid.nodes(), s.rows.len()),
        });
    }
    let mut st = Geo2DState {
        t: s.num("t", path)?,
        grid,
        f: std::array::from_fn(|_| vec![0.0; grid.nodes()]),
    };
    for (n, row) in s.rows.iter().enumerate() {
        for k in 0..geo2d::NG {
            st.f[k][n] = row[2 + k];
        }
        st.f[geo2d::X2][n] -= row[1];
    }
    Ok(st)
}

fn load_cart(path: &Path) -> Result<(CartesianState, [Vec<f64>; 2]), HarnessError> {
    let s = Snapshot::read(path)?;
    if s.get("solver") != Some("cartesian") || s.header.join(",") != CART_SNAPSHOT_HEADER {
        return Err(HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg: "not a cartesian snapshot".into(),
        });
    }
    let grid = CartesianGrid {
        nx: s.num("nx", path)?,
        nt: s.num("nt", path)?,
        x_lo: s.num("x_lo", path)?,
        x_hi: s.num("x_hi", path)?,
    };
    if s.rows.len() != grid.nodes() {
        return Err(HarnessError::Format {
            op: "compare",
            path: path.display().to_string(),
            msg: format!("expected {} rows, found {}", grid.nodes(), s.rows.len()),
        });
    }
    let n = grid.nodes();
    let mut st = CartesianState {
        t: s.num("t", path)?,
        grid,
        f: std::array::from_fn(|_| vec![0.0; n]),
    };
    let mut grad = [vec![0.0; n], vec![0.0; n]];
    // Columns after (x1, x2): psi, dt_psi, d1_psi, d2_psi, w, w0, w1, w2.
    for (m, row) in s.rows.iter().enumerate() {
        st.f[cartesian::PSI][m] = row[2];
        st.f[cartesian::PI][m] = row[3];
        grad[0][m] = row[4];
        grad[1][m] = row[5];
        for (c, k) in [cartesian::W, cartesian::W0, cartesian::W1, cartesian::W2].into_iter().enumerate() {
            st.f[k][m] = row[6 + c];
        }
    }
    Ok((st, grad))
}

/// Compare the final snapshots of a geo2d run directory and a cartesian run
/// directory; the model comes from the geo2d run's config.
pub fn compare_dirs(geo_dir: &Path, cart_dir: &Path, out: &Path) -> Result<CompareReport, HarnessError> {
    let cfg = RunConfig::from_path(&geo_dir.join("config.ini"))?;
    let model = cfg.build_model();
    let geo = load_geo(&geo_dir.join("snapshots/final.csv"))?;
    let (cart, grad) = load_cart(&cart_dir.join("snapshots/final.csv"))?;
    let rep = cartesian::compare_to_geo(&model, &cart, &grad, &geo)?;
    write_file("compare", &out.join("compare_report.csv"), &compare_report_csv(&rep))?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ProfileKind;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn read_report(dir: &Path) -> Vec<(String, String)> {
        fs::read_to_string(dir.join("shock_report.txt"))
            .unwrap()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn value(kv: &[(String, String)], k: &str) -> String {
        kv.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone()).unwrap()
    }

    #[test]
    fn default_config_forms_shock_near_ten() {
        let d = tmp();
        let cfg = RunConfig {
            out: d.path().into(),
            snapshot_dt: 4.0,
            ..Default::default()
        };
        let s = run(&cfg).unwrap();
        let t = s.shock().unwrap().t_shock;
        assert!((t - 10.0).abs() < 1e-3, "{t}");
        let kv = read_report(d.path());
        assert_eq!(value(&kv, "case"), "II");
        for k in ["T_shock", "kappa", "r2", "u_star", "theta_star", "blowup_exponent", "max_w_sup", "deltastar", "alpha0", "eps0", "delta0"] {
            assert!(kv.iter().any(|(a, _)| a == k), "{k}");
        }
        let series = fs::read_to_string(d.path().join("series.csv")).unwrap();
        assert!(series.starts_with("# schema=1\nt,mu_star,"));
        assert!(d.path().join("snapshots/0001.csv").exists());
        assert!(d.path().join("snapshots/final.csv").exists());
        let back = RunConfig::from_path(&d.path().join("config.ini")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_data_is_case_one() {
        let d = tmp();
        let cfg = RunConfig {
            out: d.path().into(),
            lambda: 0.0,
            nu: 64,
            t_max: Some(2.0),
            ..Default::default()
        };
        let s = run(&cfg).unwrap();
        assert!(matches!(s.outcome, RunOutcome::NoShock { .. }));
        assert_eq!(value(&read_report(d.path()), "case"), "I");
    }

    #[test]
    fn series_is_deterministic() {
        let (d1, d2) = (tmp(), tmp());
        let base = RunConfig {
            profile: ProfileKind::Bump,
            eps: 1e-3,
            seed: 9,
            nu: 128,
            ..Default::default()
        };
        for d in [&d1, &d2] {
            run(&RunConfig {
                out: d.path().into(),
                ..base.clone()
            })
            .unwrap();
        }
        let a = fs::read(d1.path().join("series.csv")).unwrap();
        let b = fs::read(d2.path().join("series.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let d = tmp();
        let cfg = RunConfig {
            out: d.path().into(),
            ..Default::default()
        };
        let (path, rows) = sweep(&cfg, "nu", &[]).unwrap();
        assert!(rows.is_empty());
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(matches!(sweep(&cfg, "solver", &[]), Err(HarnessError::SweepKey(_))));
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let d = tmp();
        let cfg = RunConfig {
            out: d.path().into(),
            nu: 64,
            t_max: Some(0.5),
            ..Default::default()
        };
        let (_, rows) = sweep(&cfg, "mu_stop", &["-1".into(), "0.05".into()]).unwrap();
        assert_eq!(rows[0].status, "error");
        assert!(rows[0].error.contains("mu_stop"));
        assert_eq!(rows[1].status, "no_shock");
    }

    #[test]
    fn observed_order_of_exact_sequence() {
        let t = |n: f64| 10.0 + 3.0 / (n * n);
        let p = observed_order([128.0, 256.0, 512.0], [t(128.0), t(256.0), t(512.0)]).unwrap();
        assert!((p - 2.0).abs() < 1e-9);
        assert!(observed_order([100.0, 300.0, 400.0], [1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn compare_mode_and_directory_compare_agree() {
        let d = tmp();
        let cfg = RunConfig {
            solver: SolverKind::Compare,
            out: d.path().into(),
            profile: ProfileKind::Bump,
            eps: 2e-3,
            theta_modes: 1,
            nu: 32,
            nt: 8,
            nx: 128,
            t_max: Some(0.1),
            audit: false,
            ..Default::default()
        };
        let s = run(&cfg).unwrap();
        let RunOutcome::Compared(rep) = s.outcome else {
            panic!("expected a comparison")
        };
        assert!(rep.worst_max_rel() < 0.05, "{rep:?}");
        let text = fs::read_to_string(d.path().join("compare_report.csv")).unwrap();
        assert!(text.contains("quantity,max_abs,max_rel,l2_rel"));
        let out = tmp();
        let again = compare_dirs(&d.path().join("geo2d"), &d.path().join("cartesian"), out.path()).unwrap();
        assert_eq!(again.samples, rep.samples);
        for q in 0..8 {
            assert!((again.max_abs[q] - rep.max_abs[q]).abs() <= 1e-12 * (1.0 + rep.max_abs[q]), "{q}");
        }
    }
}
