//! Run configuration: a flat `key = value` grammar with `[section]` headers.
//!
//! ```text
//! [run]      solver, out, snapshot_dt
//! [model]    metric, semilinear, slow_null_coupling, g11, g12, g22, h
//! [data]     profile, lambda, alpha_target, eps, eps_rel, seed, theta_modes
//! [grid]     nu, nt, u0, nx, x_lo, x_hi
//! [solver]   cfl, mu_stop, t_max, fast_a_mode, audit
//! ```
//!
//! `#` starts a comment. Keys may also appear before any header. Lists are
//! comma separated. Optional keys take the literal `auto` for "unset".

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{InitialData, PerturbationSpec, Profile, ProfileKind};
use crate::geo2d::FastAMode;
use crate::metric::{MetricModel, Semilinear};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("harness-cli/parse_config: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("harness-cli/parse_config: value of {0} is out of range")]
    Range(String),
    #[error("harness-cli/parse_config: cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Plane,
    Geo2D,
    Cartesian,
    Compare,
}

impl SolverKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plane" => Some(Self::Plane),
            "geo2d" => Some(Self::Geo2D),
            "cartesian" => Some(Self::Cartesian),
            "compare" => Some(Self::Compare),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Plane => "plane",
            Self::Geo2D => "geo2d",
            Self::Cartesian => "cartesian",
            Self::Compare => "compare",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub solver: SolverKind,
    pub out: PathBuf,
    /// Snapshot spacing in t; 0 writes only the initial and final states.
    pub snapshot_dt: f64,

    /// `model-quadratic` or `custom`.
    pub metric: String,
    pub semilinear: String,
    pub slow_null_coupling: Option<f64>,
    /// Power-series coefficients of g^(Small)_ij for `custom`.
    pub g11: Vec<f64>,
    pub g12: Vec<f64>,
    pub g22: Vec<f64>,
    /// Spatial block of h⁻¹ for `custom`.
    pub h: [f64; 3],

    pub profile: ProfileKind,
    pub lambda: f64,
    /// If set, λ is chosen so that α̊ equals this value.
    pub alpha_target: Option<f64>,
    pub eps: f64,
    /// If set, ε̊ = eps_rel · δ̊ of the unperturbed profile (overrides eps).
    pub eps_rel: Option<f64>,
    pub seed: u64,
    pub theta_modes: usize,

    pub nu: usize,
    pub nt: usize,
    pub u0: f64,
    pub nx: usize,
    pub x_lo: f64,
    pub x_hi: f64,

    /// Per-solver default when unset.
    pub cfl: Option<f64>,
    pub mu_stop: f64,
    pub t_max: Option<f64>,
    pub fast_a_mode: FastAMode,
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Plane,
            out: PathBuf::from("out"),
            snapshot_dt: 0.0,
            metric: "model-quadratic".into(),
            semilinear: "model".into(),
            slow_null_coupling: None,
            g11: vec![2.0, 1.0],
            g12: vec![0.0],
            g22: vec![0.0],
            h: [0.25, 0.0, 0.25],
            profile: ProfileKind::Ramp,
            lambda: 0.1,
            alpha_target: None,
            eps: 0.0,
            eps_rel: None,
            seed: 1,
            theta_modes: 0,
            nu: 512,
            nt: 128,
            u0: 1.0,
            nx: 1024,
            x_lo: -1.0,
            x_hi: 3.0,
            cfl: None,
            mu_stop: 0.05,
            t_max: None,
            fast_a_mode: FastAMode::Algebraic,
            audit: true,
        }
    }
}

/// Every key with its section, in serialization order.
pub const KEYS: [(&str, &str); 28] = [
    ("run", "solver"),
    ("run", "out"),
    ("run", "snapshot_dt"),
    ("model", "metric"),
    ("model", "semilinear"),
    ("model", "slow_null_coupling"),
    ("model", "g11"),
    ("model", "g12"),
    ("model", "g22"),
    ("model", "h"),
    ("data", "profile"),
    ("data", "lambda"),
    ("data", "alpha_target"),
    ("data", "eps"),
    ("data", "eps_rel"),
    ("data", "seed"),
    ("data", "theta_modes"),
    ("grid", "nu"),
    ("grid", "nt"),
    ("grid", "u0"),
    ("grid", "nx"),
    ("grid", "x_lo"),
    ("grid", "x_hi"),
    ("solver", "cfl"),
    ("solver", "mu_stop"),
    ("solver", "t_max"),
    ("solver", "fast_a_mode"),
    ("solver", "audit"),
];

fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .find(|(_, k)| *k == key)
        .map(|(s, _)| *s)
}

fn num(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got {s:?}"))
    }
}

fn opt_num(s: &str) -> Result<Option<f64>, String> {
    if s == "auto" {
        Ok(None)
    } else {
        num(s).map(Some)
    }
}

fn int(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, got {s:?}"))
}

fn list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|p| num(p.trim())).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("auto".into(), |x| format!("{x:?}"))
}

impl RunConfig {
    /// Set one key from its textual value. `key` may be `section.key`.
    /// Errors carry no line number; the caller attaches one.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = match key.split_once('.') {
            Some((sec, k)) if section_of(k) == Some(sec) => k,
            Some(_) => return Err(format!("unknown key {key:?}")),
            None => key,
        };
        let v = value.trim();
        match key {
            "solver" => self.solver = SolverKind::parse(v).ok_or(format!("unknown solver {v:?}"))?,
            "out" => self.out = PathBuf::from(v),
            "snapshot_dt" => self.snapshot_dt = num(v)?,
            "metric" => match v {
                "model-quadratic" | "custom" => self.metric = v.into(),
                _ => return Err(format!("unknown metric {v:?}")),
            },
            "semilinear" => {
                Semilinear::by_name(v).ok_or(format!("unknown semilinear set {v:?}"))?;
                self.semilinear = v.into();
            }
            "slow_null_coupling" => self.slow_null_coupling = opt_num(v)?,
            "g11" => self.g11 = list(v)?,
            "g12" => self.g12 = list(v)?,
            "g22" => self.g22 = list(v)?,
            "h" => {
                let l = list(v)?;
                self.h = l.try_into().map_err(|_| "h takes three values h11, h12, h22".to_string())?;
            }
            "profile" => self.profile = ProfileKind::parse(v).ok_or(format!("unknown profile {v:?}"))?,
            "lambda" => self.lambda = num(v)?,
            "alpha_target" => self.alpha_target = opt_num(v)?,
            "eps" => self.eps = num(v)?,
            "eps_rel" => self.eps_rel = opt_num(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("expected a 64-bit seed, got {v:?}"))?,
            "theta_modes" => self.theta_modes = int(v)?,
            "nu" => self.nu = int(v)?,
            "nt" => self.nt = int(v)?,
            "u0" => self.u0 = num(v)?,
            "nx" => self.nx = int(v)?,
            "x_lo" => self.x_lo = num(v)?,
            "x_hi" => self.x_hi = num(v)?,
            "cfl" => self.cfl = opt_num(v)?,
            "mu_stop" => self.mu_stop = num(v)?,
            "t_max" => self.t_max = opt_num(v)?,
            "fast_a_mode" => self.fast_a_mode = FastAMode::parse(v).ok_or(format!("unknown fast_a_mode {v:?}"))?,
            "audit" => {
                self.audit = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("expected true or false, got {v:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Range checks; the error names the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str| Err(ConfigError::Range(k.into()));
        let pos = |x: f64| x > 0.0;
        if !(self.snapshot_dt >= 0.0) {
            return bad("snapshot_dt");
        }
        if let Some(c) = self.slow_null_coupling {
            if c.abs() > 100.0 {
                return bad("slow_null_coupling");
            }
        }
        if self.h[0] <= 0.0 || self.h[2] <= 0.0 || self.h[0] * self.h[2] <= self.h[1] * self.h[1] {
            return bad("h");
        }
        if !(self.lambda.abs() <= 0.5) {
            return bad("lambda");
        }
        if let Some(a) = self.alpha_target {
            if !(a >= 0.0 && a <= 0.5) {
                return bad("alpha_target");
            }
        }
        if !(self.eps >= 0.0 && self.eps <= 0.1) {
            return bad("eps");
        }
        if let Some(e) = self.eps_rel {
            if !(e >= 0.0 && e <= 1.0) {
                return bad("eps_rel");
            }
        }
        if self.theta_modes > 16 {
            return bad("theta_modes");
        }
        if !(16..=1 << 16).contains(&self.nu) {
            return bad("nu");
        }
        if !(4..=1 << 12).contains(&self.nt) {
            return bad("nt");
        }
        if !(pos(self.u0) && self.u0 <= 1.0) {
            return bad("u0");
        }
        if !(16..=1 << 16).contains(&self.nx) {
            return bad("nx");
        }
        if !(self.x_lo < 0.0) {
            return bad("x_lo");
        }
        if !(self.x_hi > 1.0 && self.x_hi > self.x_lo) {
            return bad("x_hi");
        }
        if let Some(c) = self.cfl {
            if !(pos(c) && c <= 1.0) {
                return bad("cfl");
            }
        }
        if !(self.mu_stop > 0.0 && self.mu_stop < 0.5) {
            return bad("mu_stop");
        }
        if let Some(t) = self.t_max {
            if !pos(t) {
                return bad("t_max");
            }
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |msg: String| ConfigError::Parse { line, msg };
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("malformed section header {s:?}")))?
                    .trim();
                if !KEYS.iter().any(|(sec, _)| *sec == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| err(format!("expected key = value, got {s:?}")))?;
            let k = k.trim();
            match (section_of(k), &section) {
                (None, _) => return Err(err(format!("unknown key {k:?}"))),
                (Some(want), Some(have)) if want != have => {
                    return Err(err(format!("key {k:?} belongs in [{want}], not [{have}]")));
                }
                _ => {}
            }
            cfg.set(k, v).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (sec, key) in KEYS {
            if sec != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                current = sec;
            }
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    /// Textual value of one key, as written by `serialize`.
    pub fn value_of(&self, key: &str) -> String {
        match key {
            "solver" => self.solver.name().into(),
            "out" => self.out.display().to_string(),
            "snapshot_dt" => format!("{:?}", self.snapshot_dt),
            "metric" => self.metric.clone(),
            "semilinear" => self.semilinear.clone(),
            "slow_null_coupling" => fmt_opt(self.slow_null_coupling),
            "g11" => fmt_list(&self.g11),
            "g12" => fmt_list(&self.g12),
            "g22" => fmt_list(&self.g22),
            "h" => fmt_list(&self.h),
            "profile" => self.profile.name().into(),
            "lambda" => format!("{:?}", self.lambda),
            "alpha_target" => fmt_opt(self.alpha_target),
            "eps" => format!("{:?}", self.eps),
            "eps_rel" => fmt_opt(self.eps_rel),
            "seed" => self.seed.to_string(),
            "theta_modes" => self.theta_modes.to_string(),
            "nu" => self.nu.to_string(),
            "nt" => self.nt.to_string(),
            "u0" => format!("{:?}", self.u0),
            "nx" => self.nx.to_string(),
            "x_lo" => format!("{:?}", self.x_lo),
            "x_hi" => format!("{:?}", self.x_hi),
            "cfl" => fmt_opt(self.cfl),
            "mu_stop" => format!("{:?}", self.mu_stop),
            "t_max" => fmt_opt(self.t_max),
            "fast_a_mode" => self.fast_a_mode.name().into(),
            "audit" => self.audit.to_string(),
            _ => String::new(),
        }
    }

    /// Whether `key` holds a single number (sweepable).
    pub fn is_numeric_key(key: &str) -> bool {
        let k = key.rsplit('.').next().unwrap_or(key);
        matches!(
            k,
            "snapshot_dt"
                | "slow_null_coupling"
                | "lambda"
                | "alpha_target"
                | "eps"
                | "eps_rel"
                | "seed"
                | "theta_modes"
                | "nu"
                | "nt"
                | "u0"
                | "nx"
                | "x_lo"
                | "x_hi"
                | "cfl"
                | "mu_stop"
                | "t_max"
        )
    }

    pub fn build_model(&self) -> MetricModel {
        let mut sl = Semilinear::by_name(&self.semilinear).unwrap_or_else(Semilinear::model);
        if let Some(c) = self.slow_null_coupling {
            sl = sl.with_slow_null_coupling(c);
        }
        match self.metric.as_str() {
            "custom" => MetricModel::custom(&self.g11, &self.g12, &self.g22, self.h, sl),
            _ => MetricModel::model_quadratic().with_semilinear(sl),
        }
    }

    pub fn profile(&self) -> Profile {
        let lambda = match self.alpha_target {
            // sup|Ψ₀| over x¹ ∈ [0, 1] is |λ| for both profiles.
            Some(a) => a,
            None => self.lambda,
        };
        Profile {
            kind: self.profile,
            lambda,
        }
    }

    /// Initial data; `eps_rel` needs the model to measure δ̊.
    pub fn build_data(&self, model: &MetricModel) -> Result<InitialData, crate::metric::MetricError> {
        let profile = self.profile();
        let eps = match self.eps_rel {
            Some(r) => r * crate::diagnostics::initial_data_size(model, &InitialData::unperturbed(profile))?.delta0,
            None => self.eps,
        };
        Ok(InitialData::new(
            profile,
            PerturbationSpec {
                eps,
                seed: self.seed,
                theta_modes: self.theta_modes,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.solver, SolverKind::Plane);
        assert_eq!(c.metric, "model-quadratic");
        assert_eq!(c.profile(), Profile::ramp(0.1));
        assert_eq!(c.nu, 512);
    }

    #[test]
    fn negative_mu_stop_is_range_error() {
        let e = RunConfig::parse_str("[solver]\nmu_stop = -1\n").unwrap_err();
        assert_eq!(e, ConfigError::Range("mu_stop".into()));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = RunConfig::parse_str("[data]\nlambda = 0.1\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }), "{e}");
        let e = RunConfig::parse_str("[grid]\nlambda = 0.1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = RunConfig::parse_str("# c\n\nnu 12\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 3, .. }));
        let e = RunConfig::parse_str("[nowhere]\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 1, .. }));
        assert!(e.to_string().starts_with("harness-cli/parse_config"));
    }

    #[test]
    fn sections_and_comments() {
        let text = "solver = geo2d  # flat key\n[data]\nprofile = bump\neps = 1e-3\ntheta_modes = 2\n[solver]\ncfl = 0.3\nfast_a_mode = semilagrangian\n";
        let c = RunConfig::parse_str(text).unwrap();
        assert_eq!(c.solver, SolverKind::Geo2D);
        assert_eq!(c.profile, ProfileKind::Bump);
        assert_eq!(c.eps, 1e-3);
        assert_eq!(c.cfl, Some(0.3));
        assert_eq!(c.fast_a_mode, FastAMode::SemiLagrangian);
    }

    #[test]
    fn dotted_keys_in_set() {
        let mut c = RunConfig::default();
        c.set("grid.nu", "128").unwrap();
        assert_eq!(c.nu, 128);
        assert!(c.set("data.nu", "128").is_err());
        assert!(RunConfig::is_numeric_key("data.lambda"));
        assert!(!RunConfig::is_numeric_key("solver"));
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop_oneof![Just(SolverKind::Plane), Just(SolverKind::Geo2D), Just(SolverKind::Cartesian), Just(SolverKind::Compare)],
            -0.5f64..0.5,
            0.0f64..0.1,
            any::<u64>(),
            16usize..4096,
            proptest::option::of(0.01f64..1.0),
            proptest::option::of(0.1f64..100.0),
            proptest::collection::vec(-3.0f64..3.0, 1..4),
            any::<bool>(),
        )
            .prop_map(|(solver, lambda, eps, seed, nu, cfl, t_max, g11, audit)| RunConfig {
                solver,
                lambda,
                eps,
                seed,
                nu,
                cfl,
                t_max,
                g11,
                audit,
                metric: "custom".into(),
                ..RunConfig::default()
            })
    }

    proptest! {
        #[test]
        fn round_trip(c in arb_config()) {
            let text = c.serialize();
            let back = RunConfig::parse_str(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.serialize(), text);
        }
    }
}
