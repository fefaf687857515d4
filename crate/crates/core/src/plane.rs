//! Plane-symmetric solver on the (t, u) rectangle.
//!
//! Ψ, b = ŬLΨ, μ and w are integrated along L (vertical lines u = const) by
//! RK4; a = LΨ and the slow-wave Riemann invariants r = w₀ − c w₁,
//! s = w₀ + c w₁ (c² = (h⁻¹)¹¹) are integrated along their transversal
//! characteristics by a semi-Lagrangian trace. Two Picard sweeps couple the
//! two blocks.
//!
//! In geometric coordinates L = ∂_t and ŬL = μ∂_t + 2∂_u, so
//! ∂_t = ½(L + ŬL/μ) and ∂₁ = (γ/2)(L − ŬL/μ) with γ = √g₁₁. The
//! characteristic families used by the trace are
//!
//! ```text
//! a: dt/du = μ/2,         da/du = (Lb − (Lμ) a)/2
//! r: dt/du = μ/(1 − cγ),  dr/du = μS/(1 − cγ)
//! s: dt/du = μ/(1 + cγ),  ds/du = μS/(1 + cγ)
//! ```
//!
//! where S is the source of ∂_t w₀ in the first-order slow system. Only
//! metrics whose g is diagonal with (g⁻¹)⁰⁰ = −1 and whose h⁻¹ is constant
//! and diagonal are supported.

use thiserror::Error;

use crate::data::InitialData;
use crate::diagnostics::{
    fast_energy_density, fast_flux_density, slow_current, slow_divergence, slow_flux_density, AuditSample,
    initial_data_size, DataSizeParams, DiagError, EnergyLedger, FastAuditPoint, Outcome, SeriesRow, ShockReport,
    SlowForcing,
};
use crate::metric::{Mat3, MetricError, MetricModel, Slow, Vec3};
use crate::numerics::{d1_open, lagrange, parabolic_min, simpson, stencil_start};

pub const PSI: usize = 0;
pub const A: usize = 1;
pub const B: usize = 2;
pub const MU: usize = 3;
pub const R: usize = 4;
pub const S: usize = 5;
pub const W: usize = 6;
pub const NF: usize = 7;
pub const FIELD_NAMES: [&str; NF] = ["psi", "a", "b", "mu", "r", "s", "w"];

const PICARD_SWEEPS: usize = 2;
const TRACE_ITERS: usize = 3;
const DEPARTURE_ITERS: usize = 2;
const HISTORY: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("plane-solver/init_plane: invalid profile: {0}")]
    InvalidProfile(MetricError),
    #[error("plane-solver/init_plane: Nu = {0} is below the minimum of 16")]
    GridTooSmall(usize),
    #[error("plane-solver: metric model '{name}' is not supported: {reason}")]
    UnsupportedModel { name: String, reason: String },
    #[error("plane-solver/step_plane: characteristic exit at u = {u}, t = {t} (slope dt/du = {slope})")]
    CharacteristicExit { u: f64, t: f64, slope: f64 },
    #[error("plane-solver/step_plane: {0}")]
    Metric(MetricError),
    #[error("plane-solver/run_plane: no shock, mu_star = {mu_star_min} at t = {t_end}")]
    NoShock { t_end: f64, mu_star_min: f64 },
    #[error("plane-solver/run_plane: {0}")]
    Diag(#[from] DiagError),
}

/// Nodal fields at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneState {
    pub t: f64,
    pub h: f64,
    pub f: [Vec<f64>; NF],
}

impl PlaneState {
    pub fn nodes(&self) -> usize {
        self.f[0].len()
    }

    pub fn u(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn field(&self, k: usize) -> &[f64] {
        &self.f[k]
    }

    fn node(&self, j: usize) -> [f64; NF] {
        std::array::from_fn(|k| self.f[k][j])
    }

    fn set_node(&mut self, j: usize, v: &[f64; NF]) {
        for k in 0..NF {
            self.f[k][j] = v[k];
        }
    }

    pub fn mu_min(&self) -> f64 {
        self.f[MU].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// (μ★, u★) with μ★ = min{1, min μ}; ties resolved by the smallest u.
    /// An interior discrete minimum is refined by the parabola through its
    /// neighbours, so μ★ tracks the minimum between nodes.
    pub fn mu_star(&self) -> (f64, f64) {
        let mu = &self.f[MU];
        let mut jmin = 0;
        for (j, &m) in mu.iter().enumerate() {
            if m < mu[jmin] {
                jmin = j;
            }
        }
        let mut m = mu[jmin];
        if jmin > 0 && jmin + 1 < mu.len() {
            m = parabolic_min(mu[jmin - 1], m, mu[jmin + 1]);
        }
        (m.min(1.0), self.u(jmin))
    }
}

/// Pointwise metric data needed by the plane equations.
#[derive(Clone, Copy, Debug)]
struct Local {
    gamma: f64,
    dgamma: f64,
    upsilon: f64,
    /// ½ G₂₂/g₂₂
    k22: f64,
}

/// The metric model restricted to plane symmetry.
#[derive(Clone, Debug)]
pub struct PlaneModel {
    pub model: MetricModel,
    pub cs: f64,
    hinv: Mat3,
}

impl PlaneModel {
    pub fn new(model: MetricModel) -> Result<Self, PlaneError> {
        let unsupported = |reason: String| PlaneError::UnsupportedModel {
            name: model.name.clone(),
            reason,
        };
        for psi in [-0.1, -0.03, 0.0, 0.05, 0.1] {
            let (g, _) = model.g_and_dg(psi);
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                if g[(i, j)].abs() > 1e-14 {
                    return Err(unsupported(format!("g_{i}{j} = {} at psi = {psi}", g[(i, j)])));
                }
            }
            if (g[(0, 0)] + 1.0).abs() > 1e-14 {
                return Err(unsupported(format!("g_00 = {} at psi = {psi}", g[(0, 0)])));
            }
        }
        let hinv = model.h_inv(0.0, &Slow::zeros());
        for (psi, w) in [(0.07, Slow::new(0.05, -0.03, 0.02, 0.01)), (-0.05, Slow::new(-0.02, 0.04, -0.01, 0.03))] {
            if (model.h_inv(psi, &w) - hinv).abs().max() > 1e-14 {
                return Err(unsupported("h^-1 depends on the solution".into()));
            }
        }
        if hinv[(0, 1)] != 0.0 || hinv[(0, 2)] != 0.0 || hinv[(1, 2)] != 0.0 {
            return Err(unsupported("h^-1 is not diagonal".into()));
        }
        if !(hinv[(1, 1)] > 0.0) {
            return Err(unsupported(format!("(h^-1)^11 = {}", hinv[(1, 1)])));
        }
        let cs = hinv[(1, 1)].sqrt();
        Ok(Self { model, cs, hinv })
    }

    fn gamma(&self, psi: f64) -> f64 {
        (1.0 + self.model.g_small(psi)[(1, 1)]).sqrt()
    }

    fn local(&self, psi: f64) -> Local {
        let (g, dg) = self.model.g_and_dg(psi);
        let gamma = g[(1, 1)].sqrt();
        Local {
            gamma,
            dgamma: dg[(1, 1)] / (2.0 * gamma),
            upsilon: g[(2, 2)].sqrt(),
            k22: 0.5 * dg[(2, 2)] / g[(2, 2)],
        }
    }

    fn slow_vector(&self, v: &[f64; NF]) -> Slow {
        Slow::new(v[W], 0.5 * (v[R] + v[S]), (v[S] - v[R]) / (2.0 * self.cs), 0.0)
    }

    /// μ 𝔉_fast.
    fn mu_fast_source(&self, v: &[f64; NF], gamma: f64) -> f64 {
        let (psi, a, b, mu) = (v[PSI], v[A], v[B], v[MU]);
        let w = self.slow_vector(v);
        let mu_dpsi = Vec3::new(0.5 * (mu * a + b), 0.5 * gamma * (mu * a - b), 0.0);
        let sl = &self.model.semilinear;
        -(sl.m)(psi, &w) * a * b + (sl.n1)(psi, &w).dot(&mu_dpsi) + mu * (sl.n2)(psi, &w)
    }

    /// μ S, with S the source of ∂_t w₀.
    fn mu_slow_source(&self, v: &[f64; NF], gamma: f64) -> f64 {
        let (psi, a, b, mu) = (v[PSI], v[A], v[B], v[MU]);
        let w = self.slow_vector(v);
        let mu_dpsi = Vec3::new(0.5 * (mu * a + b), 0.5 * gamma * (mu * a - b), 0.0);
        let sl = &self.model.semilinear;
        (sl.m_slow)(psi, &w) * a * b - (sl.n1_slow)(psi, &w).dot(&mu_dpsi) - mu * (sl.n2_slow)(psi, &w)
    }

    fn lmu(loc: &Local, v: &[f64; NF]) -> f64 {
        loc.dgamma / (2.0 * loc.gamma) * (v[B] + v[MU] * v[A])
    }

    /// Lb from the frame decomposition; the torus terms reduce to
    /// trχ = tr k̸^(Tan) = ½(G₂₂/g₂₂) a and tr k̸^(Trans) = ½(G₂₂/g₂₂) X̆Ψ.
    fn lb(&self, loc: &Local, v: &[f64; NF], mu_f: f64) -> f64 {
        let (a, mu) = (v[A], v[MU]);
        let xb = 0.5 * (v[B] - mu * a);
        let trchi = loc.k22 * a;
        let trk = loc.k22 * xb + mu * loc.k22 * a;
        -trchi * xb - trk * a - mu_f
    }

    /// d/dt of (Ψ, b, μ, w) along L.
    pub(crate) fn ode_rhs(&self, v: &[f64; NF]) -> [f64; 4] {
        let loc = self.local(v[PSI]);
        let mu_f = self.mu_fast_source(v, loc.gamma);
        let w = self.slow_vector(v);
        [
            v[A],
            self.lb(&loc, v, mu_f),
            Self::lmu(&loc, v),
            w[1] + w[2] / loc.gamma,
        ]
    }

    /// dt/du along the characteristic of family k ∈ {A, R, S}.
    fn slope(&self, k: usize, v: &[f64; NF]) -> f64 {
        match k {
            A => 0.5 * v[MU],
            R => v[MU] / (1.0 - self.cs * self.gamma(v[PSI])),
            _ => v[MU] / (1.0 + self.cs * self.gamma(v[PSI])),
        }
    }

    /// (dt/du, dq/du) along the characteristic of family k ∈ {A, R, S}.
    fn characteristic(&self, k: usize, v: &[f64; NF]) -> (f64, f64) {
        self.characteristic_at(k, v, &self.local(v[PSI]))
    }

    fn characteristic_at(&self, k: usize, v: &[f64; NF], loc: &Local) -> (f64, f64) {
        let mu = v[MU];
        if k != A {
            let mu_s = self.mu_slow_source(v, loc.gamma);
            let d = if k == R { 1.0 - self.cs * loc.gamma } else { 1.0 + self.cs * loc.gamma };
            return (mu / d, mu_s / d);
        }
        let mu_f = self.mu_fast_source(v, loc.gamma);
        let lb = self.lb(loc, v, mu_f);
        (0.5 * mu, 0.5 * (lb - Self::lmu(loc, v) * v[A]))
    }

    /// Cartesian (∂_tΨ, ∂₁Ψ) at a node.
    fn cartesian_dpsi(loc: &Local, v: &[f64; NF]) -> (f64, f64) {
        let (a, b, mu) = (v[A], v[B], v[MU]);
        ((mu * a + b) / (2.0 * mu), loc.gamma * (mu * a - b) / (2.0 * mu))
    }
}

/// Initial state: μ|₀ = γ(Ψ₀) = 1/√((ḡ⁻¹)¹¹), X̆Ψ|₀ = ∂_uΨ₀, b = μa + 2X̆Ψ.
pub fn init_plane(pm: &PlaneModel, data: &InitialData, nu: usize) -> Result<PlaneState, PlaneError> {
    if nu < 16 {
        return Err(PlaneError::GridTooSmall(nu));
    }
    let h = 1.0 / nu as f64;
    let mut st = PlaneState {
        t: 0.0,
        h,
        f: std::array::from_fn(|_| vec![0.0; nu + 1]),
    };
    for j in 0..=nu {
        let p = data.at(j as f64 * h, 0.0);
        pm.model
            .eval_fast_metric(p.psi)
            .map_err(PlaneError::InvalidProfile)?;
        let loc = pm.local(p.psi);
        let mu = loc.gamma;
        let xb = p.psi_u;
        let (w1, _) = p.w_cart();
        let v = [
            p.psi,
            p.a,
            mu * p.a + 2.0 * xb,
            mu,
            p.w0 - pm.cs * w1,
            p.w0 + pm.cs * w1,
            p.w,
        ];
        st.set_node(j, &v);
    }
    Ok(st)
}

/// Time stepper with the short history needed for cubic interpolation in t.
#[derive(Clone, Debug)]
pub struct PlaneSolver {
    pub pm: PlaneModel,
    hist: Vec<PlaneState>,
    inflow: [f64; NF],
}

/// Lagrange weights for up to four abscissae; unused slots are zero.
fn lagrange_weights(times: &[f64], t: f64) -> [f64; 4] {
    let n = times.len();
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate().take(n) {
        let mut w = 1.0;
        for j in 0..n {
            if i != j {
                w *= (t - times[j]) / (times[i] - times[j]);
            }
        }
        *o = w;
    }
    out
}

impl PlaneSolver {
    pub fn new(pm: PlaneModel, state: PlaneState) -> Self {
        let inflow = state.node(0);
        Self {
            pm,
            hist: vec![state],
            inflow,
        }
    }

    pub fn state(&self) -> &PlaneState {
        self.hist.last().expect("history is never empty")
    }

    /// Times of the stored levels followed by the level under construction.
    fn level_times(&self, new: &PlaneState) -> ([f64; 4], usize) {
        let mut times = [0.0; 4];
        for (o, s) in times.iter_mut().zip(self.hist.iter().chain(std::iter::once(new))) {
            *o = s.t;
        }
        (times, self.hist.len() + 1)
    }

    /// Selected fields at node j and time t, interpolating over the stored
    /// levels and the level under construction.
    fn time_interp_fields(&self, new: &PlaneState, j: usize, t: f64, fields: &[usize]) -> [f64; NF] {
        let (times, n) = self.level_times(new);
        let w = lagrange_weights(&times[..n], t);
        let mut out = [0.0; NF];
        for (i, s) in self.hist.iter().chain(std::iter::once(new)).enumerate() {
            for &k in fields {
                out[k] += w[i] * s.f[k][j];
            }
        }
        out
    }

    fn space_interp_fields(st: &PlaneState, u: f64, fields: &[usize]) -> [f64; NF] {
        let n = st.nodes();
        let s0 = stencil_start(n, 0.0, st.h, u);
        let xs: [f64; 4] = std::array::from_fn(|i| st.u(s0 + i));
        let w = lagrange_weights(&xs, u);
        let mut out = [0.0; NF];
        for &k in fields {
            let f = &st.f[k][s0..s0 + 4];
            out[k] = w[0] * f[0] + w[1] * f[1] + w[2] * f[2] + w[3] * f[3];
        }
        out
    }

    /// Foot of the family-k characteristic through (u_j, t1) with arrival
    /// slope ca: (du, interpolated fields there).
    fn foot(&self, cur: &PlaneState, new: &PlaneState, j: usize, k: usize, ca: f64) -> Result<(f64, [f64; NF]), PlaneError> {
        const ALL: [usize; NF] = [PSI, A, B, MU, R, S, W];
        let (h, t0, t1) = (cur.h, cur.t, new.t);
        let mut cp = ca;
        for it in 0..DEPARTURE_ITERS {
            let fields: &[usize] = if it + 1 == DEPARTURE_ITERS { &ALL } else { &[PSI, MU] };
            let tp = t1 - 0.5 * h * (cp + ca);
            let (du, tp, vp) = if tp >= t0 {
                (h, tp, self.time_interp_fields(new, j - 1, tp, fields))
            } else {
                let du = 2.0 * (t1 - t0) / (cp + ca);
                (du, t0, Self::space_interp_fields(cur, cur.u(j) - du, fields))
            };
            let c = self.pm.slope(k, &vp);
            if !(c > 0.0 && c.is_finite()) {
                return Err(PlaneError::CharacteristicExit {
                    u: cur.u(j) - du,
                    t: tp,
                    slope: c,
                });
            }
            if it + 1 == DEPARTURE_ITERS {
                return Ok((du, vp));
            }
            cp = c;
        }
        unreachable!("DEPARTURE_ITERS is positive")
    }

    /// Advance one level of size dt.
    pub fn step(&mut self, dt: f64) -> Result<(), PlaneError> {
        let cur = self.state().clone();
        let n = cur.nodes();
        let t1 = cur.t + dt;
        let mut new = cur.clone();
        new.t = t1;
        if self.hist.len() >= 2 {
            let times: Vec<f64> = self.hist.iter().map(|s| s.t).collect();
            let w = lagrange_weights(&times, t1);
            for k in [A, R, S] {
                for j in 0..n {
                    new.f[k][j] = self.hist.iter().zip(&w).map(|(s, wi)| wi * s.f[k][j]).sum();
                }
            }
        }
        for _ in 0..PICARD_SWEEPS {
            self.ode_block(&cur, &mut new, dt);
            // A sweep that leaves (a, r, s) unchanged is a fixed point.
            if self.trace_block(&cur, &mut new)? == 0.0 {
                break;
            }
        }
        for k in [A, R, S] {
            new.f[k][0] = self.inflow[k];
        }
        self.hist.push(new);
        if self.hist.len() > HISTORY {
            self.hist.remove(0);
        }
        Ok(())
    }

    fn ode_block(&self, cur: &PlaneState, new: &mut PlaneState, dt: f64) {
        let (times, n) = self.level_times(new);
        let wm = lagrange_weights(&times[..n], cur.t + 0.5 * dt);
        let forced = |j: usize, w: &[f64], new: &PlaneState| -> [f64; 3] {
            let mut out = [0.0; 3];
            for (i, s) in self.hist.iter().chain(std::iter::once(new)).enumerate() {
                for (o, k) in out.iter_mut().zip([A, R, S]) {
                    *o += w[i] * s.f[k][j];
                }
            }
            out
        };
        for j in 0..cur.nodes() {
            let mid = forced(j, &wm, new);
            let end = [new.f[A][j], new.f[R][j], new.f[S][j]];
            let start = [cur.f[A][j], cur.f[R][j], cur.f[S][j]];
            let y0 = [cur.f[PSI][j], cur.f[B][j], cur.f[MU][j], cur.f[W][j]];
            let eval = |y: &[f64; 4], f: &[f64; 3]| {
                let v = [y[0], f[0], y[1], y[2], f[1], f[2], y[3]];
                self.pm.ode_rhs(&v)
            };
            let add = |y: &[f64; 4], k: &[f64; 4], c: f64| std::array::from_fn::<f64, 4, _>(|i| y[i] + c * k[i]);
            let k1 = eval(&y0, &start);
            let k2 = eval(&add(&y0, &k1, 0.5 * dt), &mid);
            let k3 = eval(&add(&y0, &k2, 0.5 * dt), &mid);
            let k4 = eval(&add(&y0, &k3, dt), &end);
            for (i, k) in [PSI, B, MU, W].into_iter().enumerate() {
                new.f[k][j] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }

    /// Characteristic slopes depend on (Ψ, μ) only, so the foot is located
    /// once per family and the trapezoid rule is then iterated in q alone.
    /// Returns the largest change made to a, r or s.
    fn trace_block(&self, cur: &PlaneState, new: &mut PlaneState) -> Result<f64, PlaneError> {
        let mut change = 0.0f64;
        for j in 1..cur.nodes() {
            let loc = self.pm.local(new.f[PSI][j]);
            for k in [A, R, S] {
                let mut va = new.node(j);
                let (ca, mut ra) = self.pm.characteristic_at(k, &va, &loc);
                if !(ca > 0.0 && ca.is_finite()) {
                    return Err(PlaneError::CharacteristicExit {
                        u: cur.u(j),
                        t: new.t,
                        slope: ca,
                    });
                }
                let (du, vp) = self.foot(cur, new, j, k, ca)?;
                let rp = self.pm.characteristic(k, &vp).1;
                let mut q = vp[k] + 0.5 * du * (rp + ra);
                for _ in 1..TRACE_ITERS {
                    va[k] = q;
                    ra = self.pm.characteristic_at(k, &va, &loc).1;
                    q = vp[k] + 0.5 * du * (rp + ra);
                }
                change = change.max((q - new.f[k][j]).abs());
                new.f[k][j] = q;
            }
        }
        Ok(change)
    }
}

/// One step from a single level (first-order start in the time interpolation).
pub fn step_plane(pm: &PlaneModel, state: &PlaneState, dt: f64) -> Result<PlaneState, PlaneError> {
    let mut s = PlaneSolver::new(pm.clone(), state.clone());
    s.step(dt)?;
    Ok(s.state().clone())
}

/// Series row and audit sample of one level.
pub fn measure(pm: &PlaneModel, st: &PlaneState, with_audit: bool) -> (SeriesRow, Option<AuditSample>) {
    let n = st.nodes();
    let (mu_star, u_star) = st.mu_star();
    let mut row = SeriesRow {
        t: st.t,
        mu_star,
        u_star,
        ..Default::default()
    };
    let mut dpsi_u = vec![0.0; n];
    d1_open(&st.f[PSI], n, 1, 0, st.h, &mut dpsi_u);
    let mut xbmu = vec![0.0; n];
    if with_audit {
        d1_open(&st.f[MU], n, 1, 0, st.h, &mut xbmu);
    }
    let mut e_fast = vec![0.0; n];
    let mut e_slow = vec![0.0; n];
    let mut bulk_fast = vec![0.0; n];
    let mut bulk_slow = vec![0.0; n];
    let mut flux = [[0.0; 2]; 2];
    for j in 0..n {
        let v = st.node(j);
        let loc = pm.local(v[PSI]);
        let (dt_psi, d1_psi) = PlaneModel::cartesian_dpsi(&loc, &v);
        let xb = 0.5 * (v[B] - v[MU] * v[A]);
        row.max_dtpsi = row.max_dtpsi.max(dt_psi.abs());
        row.max_d1psi = row.max_d1psi.max(d1_psi.abs());
        row.max_xpsi = row.max_xpsi.max((xb / v[MU]).abs());
        let w = pm.slow_vector(&v);
        for i in 0..4 {
            row.sup_w[i] = row.sup_w[i].max(w[i].abs());
        }
        row.res_b = row.res_b.max((v[B] - v[MU] * v[A] - 2.0 * dpsi_u[j]).abs());
        if !with_audit {
            continue;
        }
        let mu_f = pm.mu_fast_source(&v, loc.gamma);
        let mu_s = pm.mu_slow_source(&v, loc.gamma);
        let mu = v[MU];
        let p = FastAuditPoint {
            mu,
            upsilon: loc.upsilon,
            lf: v[A],
            xbf: xb,
            forcing: mu_f,
            lmu: PlaneModel::lmu(&loc, &v),
            xbmu: xbmu[j],
            trchi: loc.k22 * v[A],
            trk_trans: loc.k22 * xb,
            trk_tan: loc.k22 * v[A],
            ..Default::default()
        };
        e_fast[j] = fast_energy_density(mu, v[A], xb, 0.0) * loc.upsilon;
        bulk_fast[j] = p.bulk() * loc.upsilon;
        let j_cur = slow_current(&pm.hinv, &w);
        // |∂x/∂(u,θ)| = μυ/√det ḡ = μ/γ.
        e_slow[j] = j_cur[0] * mu / loc.gamma;
        let forcing = SlowForcing {
            f0: mu_s,
            ..Default::default()
        };
        bulk_slow[j] = slow_divergence(&pm.hinv, &[Mat3::zeros(); 3], &w, mu, &forcing) / loc.gamma;
        if j == 0 || j == n - 1 {
            let l = Vec3::new(1.0, 1.0 / loc.gamma, 0.0);
            let l_flat = Vec3::new(-1.0, loc.gamma, 0.0);
            let theta = Vec3::new(0.0, 0.0, 1.0);
            let side = usize::from(j != 0);
            flux[0][side] = fast_flux_density(mu, v[A], 0.0) * loc.upsilon;
            flux[1][side] = slow_flux_density(&j_cur, &l_flat, &l, &theta);
        }
    }
    let audit = with_audit.then(|| AuditSample {
        t: st.t,
        e_fast: simpson(&e_fast, st.h),
        e_slow: simpson(&e_slow, st.h),
        fast_flux_in: flux[0][0],
        fast_flux_out: flux[0][1],
        slow_flux_in: flux[1][0],
        slow_flux_out: flux[1][1],
        fast_bulk: simpson(&bulk_fast, st.h),
        slow_bulk: simpson(&bulk_slow, st.h),
        k_rate: 0.0,
    });
    (row, audit)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneOptions {
    pub nu: usize,
    /// dt = cfl · h.
    pub cfl: f64,
    pub mu_stop: f64,
    /// Defaults to 4/max(δ̊★, 0.05).
    pub t_max: Option<f64>,
    /// Times at which the run lands exactly and stores a copy of the state.
    pub output_times: Vec<f64>,
    pub audit: bool,
}

impl Default for PlaneOptions {
    fn default() -> Self {
        Self {
            nu: 512,
            cfl: 1.0,
            mu_stop: 0.05,
            t_max: None,
            output_times: Vec::new(),
            audit: true,
        }
    }
}

/// Everything recorded by a plane run.
#[derive(Clone, Debug)]
pub struct PlaneRun {
    pub series: Vec<SeriesRow>,
    pub outputs: Vec<PlaneState>,
    pub initial: PlaneState,
    pub final_state: PlaneState,
    pub params: DataSizeParams,
    pub ledger: EnergyLedger,
    pub outcome: Outcome,
}

/// Default end time when none is configured.
pub fn default_t_max(deltastar: f64) -> f64 {
    4.0 / deltastar.max(0.05)
}

/// March until min μ ≤ μ_stop or t_max, recording the series.
pub fn run_plane_full(model: &MetricModel, data: &InitialData, opts: &PlaneOptions) -> Result<PlaneRun, PlaneError> {
    if !(opts.mu_stop > 0.0 && opts.mu_stop < 0.5) {
        return Err(PlaneError::UnsupportedModel {
            name: model.name.clone(),
            reason: format!("mu_stop = {} outside (0, 0.5)", opts.mu_stop),
        });
    }
    let pm = PlaneModel::new(model.clone())?;
    let init = init_plane(&pm, data, opts.nu)?;
    let params = initial_data_size(model, data).map_err(PlaneError::InvalidProfile)?;
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(params.deltastar));
    let dt0 = opts.cfl * init.h;
    let mut solver = PlaneSolver::new(pm.clone(), init.clone());
    let mut ledger = EnergyLedger::new();
    let mut series = Vec::new();
    let mut outputs = Vec::new();
    let mut pending: Vec<f64> = opts.output_times.iter().copied().filter(|&t| t <= t_max).collect();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let record = |st: &PlaneState, ledger: &mut EnergyLedger, series: &mut Vec<SeriesRow>| {
        let (mut row, audit) = measure(&pm, st, opts.audit);
        if let Some(a) = audit {
            ledger.push(a);
        }
        row.set_energies(ledger);
        series.push(row);
    };
    record(&init, &mut ledger, &mut series);
    if pending.last() == Some(&0.0) {
        outputs.push(init.clone());
        pending.pop();
    }
    loop {
        let st = solver.state();
        if st.mu_min() <= opts.mu_stop || st.t >= t_max - 1e-12 {
            break;
        }
        let mut dt = dt0.min(t_max - st.t);
        let mut hit = false;
        if let Some(&next) = pending.last() {
            if st.t + dt >= next - 1e-12 {
                dt = next - st.t;
                hit = true;
            }
        }
        solver.step(dt)?;
        let st = solver.state();
        record(st, &mut ledger, &mut series);
        if hit {
            outputs.push(st.clone());
            pending.pop();
        }
    }
    let final_state = solver.state().clone();
    let outcome = if final_state.mu_min() <= opts.mu_stop {
        Outcome::Shock(ShockReport::from_series(&series, params)?)
    } else {
        Outcome::NoShock {
            t_end: final_state.t,
            mu_star_min: series.iter().map(|r| r.mu_star).fold(1.0, f64::min),
        }
    };
    Ok(PlaneRun {
        series,
        outputs,
        initial: init,
        final_state,
        params,
        ledger,
        outcome,
    })
}

/// Shock report of a plane run; `NoShock` if μ★ stayed above 0.9.
pub fn run_plane(model: &MetricModel, data: &InitialData, opts: &PlaneOptions) -> Result<ShockReport, PlaneError> {
    let run = run_plane_full(model, data, opts)?;
    match run.outcome {
        Outcome::Shock(r) => Ok(r),
        Outcome::NoShock { t_end, mu_star_min } => Err(PlaneError::NoShock { t_end, mu_star_min }),
    }
}

/// Lagrange interpolation of nodal values of one field at an arbitrary u.
pub fn sample_u(st: &PlaneState, k: usize, u: f64) -> f64 {
    let n = st.nodes();
    let s0 = stencil_start(n, 0.0, st.h, u);
    let xs: Vec<f64> = (0..4).map(|i| st.u(s0 + i)).collect();
    let ys: Vec<f64> = (0..4).map(|i| st.f[k][s0 + i]).collect();
    lagrange(&xs, &ys, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PerturbationSpec, Profile};

    fn pm() -> PlaneModel {
        PlaneModel::new(MetricModel::model_quadratic()).unwrap()
    }

    #[test]
    fn init_of_ramp() {
        let st = init_plane(&pm(), &InitialData::unperturbed(Profile::ramp(0.1)), 64).unwrap();
        for j in 0..st.nodes() {
            let u = st.u(j);
            assert!((st.f[MU][j] - (1.0 + 0.1 * (1.0 - u))).abs() < 1e-14);
            assert!((st.f[B][j] + 0.2).abs() < 1e-15);
            assert_eq!(st.f[A][j], 0.0);
        }
        let m = MetricModel::model_quadratic();
        let ds = |d: &InitialData| initial_data_size(&m, d).unwrap().deltastar;
        assert!((ds(&InitialData::unperturbed(Profile::ramp(0.1))) - 0.1).abs() < 1e-14);
        let neg = InitialData::unperturbed(Profile::ramp(-0.1));
        assert_eq!(ds(&neg), 0.0);
        assert!(matches!(
            init_plane(&pm(), &neg, 8),
            Err(PlaneError::GridTooSmall(8))
        ));
    }

    #[test]
    fn zero_data_is_fixed_point() {
        let st = init_plane(&pm(), &InitialData::unperturbed(Profile::ramp(0.0)), 32).unwrap();
        let next = step_plane(&pm(), &st, 0.01).unwrap();
        assert_eq!(next.f, st.f);
        assert!(next.f[MU].iter().all(|&m| m == 1.0));
    }

    #[test]
    fn simple_wave_single_step() {
        let st = init_plane(&pm(), &InitialData::unperturbed(Profile::ramp(0.1)), 64).unwrap();
        let dt = 0.05;
        let next = step_plane(&pm(), &st, dt).unwrap();
        for j in 0..st.nodes() {
            let psi0 = st.f[PSI][j];
            assert!(next.f[A][j].abs() < 1e-14);
            assert_eq!(next.f[B][j], st.f[B][j]);
            let want = st.f[MU][j] + dt * st.f[B][j] / (2.0 * (1.0 + psi0));
            assert!((next.f[MU][j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_diagonal_model() {
        let m = MetricModel::custom(&[2.0], &[0.5], &[0.0], [0.25, 0.0, 0.25], crate::metric::Semilinear::model());
        assert!(matches!(PlaneModel::new(m), Err(PlaneError::UnsupportedModel { .. })));
    }

    #[test]
    fn perturbed_run_converges_in_time_and_space() {
        let data = InitialData::new(
            Profile::bump(0.05),
            PerturbationSpec {
                eps: 5e-3,
                seed: 4,
                theta_modes: 0,
            },
        );
        let run = |nu: usize| {
            let opts = PlaneOptions {
                nu,
                t_max: Some(1.0),
                output_times: vec![1.0],
                audit: false,
                ..Default::default()
            };
            run_plane_full(&MetricModel::model_quadratic(), &data, &opts).unwrap().outputs[0].clone()
        };
        let (c, m, f) = (run(64), run(128), run(256));
        let err = |x: &PlaneState, y: &PlaneState| {
            let mut e = 0.0f64;
            for k in 0..NF {
                for j in 0..x.nodes() {
                    e = e.max((x.f[k][j] - y.f[k][2 * j]).abs());
                }
            }
            e
        };
        let ratio = err(&c, &m) / err(&m, &f);
        assert!(ratio > 3.5, "ratio {ratio}");
    }
}
