//! Full 1+2 solver in geometric coordinates (t, u, θ).
//!
//! Unknowns on the (u, θ) grid are Ψ, b = ŬLΨ, μ, L¹_s, L²_s, the maps x¹
//! and x² (stored as x² − θ, which is periodic) and W = (w, w0, w1, w2).
//! Every equation is a transport equation along L = ∂_t. Spatial derivatives
//! are fourth-order differences, periodic in θ and one-sided at the u-edges;
//! time stepping is classical RK4.
//!
//! Per stage the solver recomputes Θ = ∂_θx, υ = |Θ|_g, the Jacobian of
//! (u, θ) ↦ (x¹, x²), ξ from X̆ = ∂_u − ξ∂_θ, a = (b − 2X̆Ψ)/μ and
//! Δ̸Ψ = υ⁻¹∂_θ(υ⁻¹∂_θΨ). The slow system is the Cartesian first-order
//! system for V = (w0, w1, w2) rewritten through ∂_ν = c^L L + c^X X + c^Y Y.
//!
//! At u = 0 the fields Ψ, b and W hold their initial trace (every fast and
//! slow characteristic enters the grid there); μ, L_s and x keep evolving by
//! their transport equations.

use thiserror::Error;

use crate::data::InitialData;
use crate::diagnostics::{
    fast_energy_density, fast_flux_density, initial_data_size, slow_current, slow_divergence, slow_flux_density,
    AuditSample, DataSizeParams, DiagError, EnergyLedger, FastAuditPoint, Outcome, SeriesRow, ShockReport,
    SlowForcing,
};
use crate::frame::{
    build_frame_unchecked, cartesian_in_frame_unchecked, connection_pieces, frame_g_components, frame_residuals,
    initial_relations, jacobian_det, jacobian_formula, ConnectionInputs, ConnectionPieces, FrameBundle,
    FrameComponents,
};
use crate::metric::{Mat3, MetricError, MetricEval, MetricModel, Slow, Vec3};
use crate::numerics::{d1_open, d1_periodic, lagrange4, parabolic_min, periodic_sum, simpson, stencil_start};

pub const PSI: usize = 0;
pub const B: usize = 1;
pub const MU: usize = 2;
pub const LS1: usize = 3;
pub const LS2: usize = 4;
pub const X1: usize = 5;
/// x² − θ.
pub const X2: usize = 6;
pub const W: usize = 7;
pub const W0: usize = 8;
pub const W1: usize = 9;
pub const W2: usize = 10;
pub const NG: usize = 11;
pub const FIELD_NAMES: [&str; NG] = ["psi", "b", "mu", "l1s", "l2s", "x1", "x2", "w", "w0", "w1", "w2"];

/// The grid has folded once |J| drops below this fraction of its initial value.
pub const JACOBIAN_FLOOR: f64 = 1e-3;

/// Fields frozen at the inflow edge u = 0.
const HELD_AT_INFLOW: [usize; 6] = [PSI, B, W, W0, W1, W2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Geo2DError {
    #[error("geo2d-solver/init_geo2d: invalid profile: {0}")]
    InvalidProfile(MetricError),
    #[error("geo2d-solver/init_geo2d: grid {nu}x{nt} is below the minimum 16x4")]
    GridTooSmall { nu: usize, nt: usize },
    #[error(
        "geo2d-solver/spatial_derivatives: degenerate map at (u, theta) = ({u}, {theta}): jacobian {jac}, initial {jac0}"
    )]
    DegenerateMap { u: f64, theta: f64, jac: f64, jac0: f64 },
    #[error("geo2d-solver/step_geo2d: dt = {dt} exceeds the CFL bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("geo2d-solver/step_geo2d: {0}")]
    Metric(MetricError),
    #[error("geo2d-solver/run_geo2d: no shock, mu_star = {mu_star_min} at t = {t_end}")]
    NoShock { t_end: f64, mu_star_min: f64 },
    #[error("geo2d-solver/run_geo2d: {0}")]
    InvalidOption(String),
    #[error("geo2d-solver/run_geo2d: {0}")]
    Diag(#[from] DiagError),
}

/// How a = LΨ is obtained inside a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FastAMode {
    /// a = (b − 2X̆Ψ)/μ at every stage.
    Algebraic,
    /// a transported along ŬL with ŬLa = Lb − (Lμ)a + 2(Lξ)∂_θΨ.
    SemiLagrangian,
}

impl FastAMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "algebraic" => Some(Self::Algebraic),
            "semilagrangian" => Some(Self::SemiLagrangian),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Algebraic => "algebraic",
            Self::SemiLagrangian => "semilagrangian",
        }
    }
}

/// Nu intervals on u ∈ [0, U₀] and Nθ periodic nodes on θ ∈ [0, 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geo2DGrid {
    pub nu: usize,
    pub nt: usize,
    pub u0: f64,
}

impl Geo2DGrid {
    pub fn new(nu: usize, nt: usize) -> Self {
        Self { nu, nt, u0: 1.0 }
    }

    pub fn hu(&self) -> f64 {
        self.u0 / self.nu as f64
    }

    pub fn ht(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn nodes(&self) -> usize {
        (self.nu + 1) * self.nt
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nt + j
    }

    pub fn u(&self, i: usize) -> f64 {
        i as f64 * self.hu()
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.ht()
    }

    /// (i, j) of a flat index.
    pub fn ij(&self, n: usize) -> (usize, usize) {
        (n / self.nt, n % self.nt)
    }

    /// Bicubic interpolation of nodal values at (u, θ): cubic Lagrange in u
    /// (stencil shifted inward at the edges) and periodic cubic in θ.
    pub fn sample(&self, f: &[f64], u: f64, theta: f64) -> f64 {
        let hu = self.hu();
        let ht = self.ht();
        let s = stencil_start(self.nu + 1, 0.0, hu, u);
        let tf = theta / ht;
        let j0 = tf.floor() as isize;
        let frac = tf - j0 as f64;
        let nt = self.nt as isize;
        let mut col = [0.0; 4];
        for (k, c) in col.iter_mut().enumerate() {
            let ys = [-1, 0, 1, 2].map(|m| f[self.idx(s + k, (j0 + m).rem_euclid(nt) as usize)]);
            *c = lagrange4([-1.0, 0.0, 1.0, 2.0], ys, frac);
        }
        lagrange4([0, 1, 2, 3].map(|k| (s + k) as f64 * hu), col, u)
    }
}

/// Nodal fields at one time level, flattened as i·Nθ + j.
#[derive(Clone, Debug, PartialEq)]
pub struct Geo2DState {
    pub t: f64,
    pub grid: Geo2DGrid,
    pub f: [Vec<f64>; NG],
}

impl Geo2DState {
    pub fn field(&self, k: usize) -> &[f64] {
        &self.f[k]
    }

    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.f[k][self.grid.idx(i, j)]
    }

    /// Cartesian x² at a node.
    pub fn x2(&self, i: usize, j: usize) -> f64 {
        self.grid.theta(j) + self.at(X2, i, j)
    }

    /// Value of field k at (u, θ), with x² reported in Cartesian form.
    pub fn sample(&self, k: usize, u: f64, theta: f64) -> f64 {
        let v = self.grid.sample(&self.f[k], u, theta);
        if k == X2 {
            v + theta
        } else {
            v
        }
    }

    pub fn mu_min(&self) -> f64 {
        self.f[MU].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// (μ★, u★, θ★) with μ★ = min{1, min μ}; ties go to the first node.
    /// The node minimum is refined by parabolas along u (interior nodes) and
    /// along θ.
    pub fn mu_star(&self) -> (f64, f64, f64) {
        let mu = &self.f[MU];
        let mut nmin = 0;
        for (n, &m) in mu.iter().enumerate() {
            if m < mu[nmin] {
                nmin = n;
            }
        }
        let g = &self.grid;
        let (i, j) = g.ij(nmin);
        let b = mu[nmin];
        let mut m = b;
        if i > 0 && i < g.nu {
            m += parabolic_min(mu[g.idx(i - 1, j)], b, mu[g.idx(i + 1, j)]) - b;
        }
        let (jm, jp) = ((j + g.nt - 1) % g.nt, (j + 1) % g.nt);
        m += parabolic_min(mu[g.idx(i, jm)], b, mu[g.idx(i, jp)]) - b;
        (m.min(1.0), g.u(i), g.theta(j))
    }

    /// max over u of (max_θ − min_θ) of field k.
    pub fn theta_variation(&self, k: usize) -> f64 {
        let nt = self.grid.nt;
        self.f[k]
            .chunks(nt)
            .map(|row| {
                let (lo, hi) = row
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// Initial state: x¹ = 1 − u, x² = θ, μ and L_s from the initial relations,
/// b = μ LΨ|₀ + 2X̆Ψ|₀, and (w1, w2) the Cartesian gradient of w.
pub fn init_geo2d(model: &MetricModel, data: &InitialData, grid: Geo2DGrid) -> Result<Geo2DState, Geo2DError> {
    if grid.nu < 16 || grid.nt < 4 {
        return Err(Geo2DError::GridTooSmall {
            nu: grid.nu,
            nt: grid.nt,
        });
    }
    let mut st = Geo2DState {
        t: 0.0,
        grid,
        f: std::array::from_fn(|_| vec![0.0; grid.nodes()]),
    };
    for i in 0..=grid.nu {
        for j in 0..grid.nt {
            let (u, th) = (grid.u(i), grid.theta(j));
            let p = data.at(u, th);
            let ge = model.eval_fast_metric(p.psi).map_err(Geo2DError::InvalidProfile)?;
            let (mu, ls, xi) = initial_relations(&ge);
            let xb = p.psi_u - xi[1] * p.psi_th;
            let (w1, w2) = p.w_cart();
            let n = grid.idx(i, j);
            let vals = [p.psi, mu * p.a + 2.0 * xb, mu, ls[0], ls[1], 1.0 - u, 0.0, p.w, p.w0, w1, w2];
            for k in 0..NG {
                st.f[k][n] = vals[k];
            }
        }
    }
    Ok(st)
}

/// Grid derivatives of every stored field and the torus Laplacian of Ψ.
#[derive(Clone, Debug)]
pub struct GridDerivatives {
    pub du: [Vec<f64>; NG],
    pub dth: [Vec<f64>; NG],
    pub upsilon: Vec<f64>,
    pub lap_psi: Vec<f64>,
    q: Vec<f64>,
}

impl GridDerivatives {
    pub fn new(grid: &Geo2DGrid) -> Self {
        let n = grid.nodes();
        Self {
            du: std::array::from_fn(|_| vec![0.0; n]),
            dth: std::array::from_fn(|_| vec![0.0; n]),
            upsilon: vec![0.0; n],
            lap_psi: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    pub fn compute(&mut self, model: &MetricModel, st: &Geo2DState) {
        let g = &st.grid;
        let (nu1, nt) = (g.nu + 1, g.nt);
        let (hu, ht) = (g.hu(), g.ht());
        for k in 0..NG {
            for j in 0..nt {
                d1_open(&st.f[k], nu1, nt, j, hu, &mut self.du[k]);
            }
            for i in 0..nu1 {
                d1_periodic(&st.f[k], nt, 1, i * nt, ht, &mut self.dth[k]);
            }
        }
        for n in 0..g.nodes() {
            let gs = model.g_small(st.f[PSI][n]);
            let t1 = self.dth[X1][n];
            let t2 = 1.0 + self.dth[X2][n];
            let ups = ((1.0 + gs[(1, 1)]) * t1 * t1 + 2.0 * gs[(1, 2)] * t1 * t2 + (1.0 + gs[(2, 2)]) * t2 * t2).sqrt();
            self.upsilon[n] = ups;
            self.q[n] = self.dth[PSI][n] / ups;
        }
        for i in 0..nu1 {
            d1_periodic(&self.q, nt, 1, i * nt, ht, &mut self.lap_psi);
        }
        for n in 0..g.nodes() {
            self.lap_psi[n] /= self.upsilon[n];
        }
    }

    fn xb(&self, k: usize, n: usize, xi: f64) -> f64 {
        self.du[k][n] - xi * self.dth[k][n]
    }

    fn along(&self, k: usize, n: usize, c: [f64; 2]) -> f64 {
        c[0] * self.du[k][n] + c[1] * self.dth[k][n]
    }
}

/// Pointwise derived quantities at one node.
#[derive(Clone, Copy, Debug)]
pub struct NodeDerived {
    pub ge: MetricEval,
    pub fb: FrameBundle,
    pub fc: FrameComponents,
    pub conn: ConnectionPieces,
    pub theta: Vec3,
    pub jac: f64,
    pub xi: f64,
    /// u-component of X̆ in the (∂_u, ∂_θ) basis, minus one.
    pub xbu_res: f64,
    /// (∂_u, ∂_θ) components of Y.
    pub y_ut: [f64; 2],
    pub gyy: f64,
    pub a: f64,
    pub xbpsi: f64,
    pub ypsi: f64,
    /// Rows ν of (c^L, c^X, c^Y).
    pub cif: [[f64; 3]; 3],
    pub w: Slow,
    /// μ ∂_νΨ.
    pub mu_dpsi: Vec3,
    pub mu_q: f64,
}

impl NodeDerived {
    /// Cartesian spatial derivative ∂_i (i = 1, 2) of field k from X̆ and Y.
    fn d_spatial(&self, der: &GridDerivatives, k: usize, n: usize, i: usize) -> f64 {
        self.cif[i][1] * der.xb(k, n, self.xi) / self.fb.mu + self.cif[i][2] * der.along(k, n, self.y_ut)
    }
}

/// Everything a stage needs besides the state.
struct Ctx<'a> {
    model: &'a MetricModel,
    st: &'a Geo2DState,
    der: &'a GridDerivatives,
    a_field: Option<&'a [f64]>,
    jac0: &'a [f64],
}

impl Ctx<'_> {
    fn derived(&self, n: usize) -> Result<NodeDerived, Geo2DError> {
        let st = self.st;
        let der = self.der;
        let psi = st.f[PSI][n];
        let mu = st.f[MU][n];
        let ge = self.model.eval_fast_metric(psi).map_err(Geo2DError::Metric)?;
        let fb = build_frame_unchecked(&ge, mu, [st.f[LS1][n], st.f[LS2][n]]);
        let (x1u, x1t) = (der.du[X1][n], der.dth[X1][n]);
        let (x2u, x2t) = (der.du[X2][n], 1.0 + der.dth[X2][n]);
        let jac = jacobian_det(x1u, x1t, x2u, x2t);
        if !(jac.abs() >= JACOBIAN_FLOOR * self.jac0[n].abs()) {
            let (i, j) = st.grid.ij(n);
            return Err(Geo2DError::DegenerateMap {
                u: st.grid.u(i),
                theta: st.grid.theta(j),
                jac,
                jac0: self.jac0[n],
            });
        }
        let solve = |v1: f64, v2: f64| [(v1 * x2t - x1t * v2) / jac, (x1u * v2 - x2u * v1) / jac];
        let xb_ut = solve(fb.xb[1], fb.xb[2]);
        let xi = -xb_ut[1];
        let y_ut = solve(fb.y[1], fb.y[2]);
        let theta = Vec3::new(0.0, x1t, x2t);
        let fc = frame_g_components(&ge, &fb, &theta);
        let xbpsi = der.xb(PSI, n, xi);
        let a = match self.a_field {
            Some(a) => a[n],
            None => (st.f[B][n] - 2.0 * xbpsi) / mu,
        };
        let ypsi = der.along(PSI, n, y_ut);
        let gyy = ge.dot(&fb.y, &fb.y);
        let cif = cartesian_in_frame_unchecked(&ge, &fb, gyy);
        let mu_dpsi = Vec3::from_fn(|nu, _| cif[nu][0] * mu * a + cif[nu][1] * xbpsi + cif[nu][2] * mu * ypsi);
        let mu_q = -a * (mu * a + 2.0 * xbpsi) + mu * ypsi * ypsi / gyy;
        let conn = connection_pieces(
            &ge,
            &fb,
            &fc,
            &ConnectionInputs {
                lpsi: a,
                xbpsi,
                dth_psi: der.dth[PSI][n],
                dth_l: [der.dth[LS1][n], der.dth[LS2][n]],
                dth_x: [x1t, x2t],
            },
        );
        Ok(NodeDerived {
            ge,
            fb,
            fc,
            conn,
            theta,
            jac,
            xi,
            xbu_res: xb_ut[0] - 1.0,
            y_ut,
            gyy,
            a,
            xbpsi,
            ypsi,
            cif,
            w: Slow::new(st.f[W][n], st.f[W0][n], st.f[W1][n], st.f[W2][n]),
            mu_dpsi,
            mu_q,
        })
    }

    /// μ 𝔉_fast and μ S̃ (the slow wave source).
    fn sources(&self, n: usize, nd: &NodeDerived) -> (f64, f64) {
        let psi = self.st.f[PSI][n];
        let mu = nd.fb.mu;
        let sl = &self.model.semilinear;
        let w = &nd.w;
        let fast = (sl.m)(psi, w) * nd.mu_q + (sl.n1)(psi, w).dot(&nd.mu_dpsi) + mu * (sl.n2)(psi, w);
        let slow =
            (sl.m_slow)(psi, w) * nd.mu_q + (sl.n1_slow)(psi, w).dot(&nd.mu_dpsi) + mu * (sl.n2_slow)(psi, w);
        (fast, slow)
    }

    /// L-derivatives of every stored field at an interior node.
    fn rhs(&self, n: usize, nd: &NodeDerived) -> [f64; NG] {
        let st = self.st;
        let der = self.der;
        let psi = st.f[PSI][n];
        let mu = nd.fb.mu;
        let a = nd.a;
        let fc = &nd.fc;
        let ups2 = fc.upsilon * fc.upsilon;
        let dth_psi = der.dth[PSI][n];
        let (mu_f, mu_s) = self.sources(n, nd);
        let conn = &nd.conn;
        let mut out = [0.0; NG];
        out[PSI] = a;
        out[B] = mu * der.lap_psi[n]
            - conn.trchi * nd.xbpsi
            - conn.mu_trk * a
            - 2.0 * conn.mu_zeta * dth_psi / ups2
            - mu_f;
        out[MU] = 0.5 * fc.g_ll * nd.xbpsi - 0.5 * mu * fc.g_ll * a - mu * fc.g_lx * a;
        for i in 0..2 {
            let th_i = nd.theta[i + 1] / ups2;
            out[LS1 + i] = -0.5 * fc.g_ll * a * (nd.fb.l[i + 1] + nd.ge.ginv[(0, i + 1)]) - fc.g_ltheta * a * th_i
                + 0.5 * fc.g_ll * dth_psi * th_i;
        }
        out[X1] = nd.fb.l[1];
        out[X2] = nd.fb.l[2];
        // Slow block: ∂_t w0 = 2h^{0a}∂_a w0 + h^{ab}∂_a w_b − S̃, ∂_t w_i = ∂_i w0,
        // with ∂_t = L + c^X_0 X + c^Y_0 Y and ∂_a = c^X_a X + c^Y_a Y.
        let h = self.model.h_inv(psi, &nd.w);
        let mut da = [[0.0; 3]; 2];
        for (ai, row) in da.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = nd.d_spatial(der, W0 + k, n, ai + 1);
            }
        }
        let t_part = |k: usize| nd.cif[0][1] * der.xb(W0 + k, n, nd.xi) / mu + nd.cif[0][2] * der.along(W0 + k, n, nd.y_ut);
        let mut dt_w0 = -mu_s / mu;
        for ai in 0..2 {
            dt_w0 += 2.0 * h[(0, ai + 1)] * da[ai][0];
            for bi in 0..2 {
                dt_w0 += h[(ai + 1, bi + 1)] * da[ai][bi + 1];
            }
        }
        out[W] = nd.w[1] + nd.fb.l[1] * nd.w[2] + nd.fb.l[2] * nd.w[3];
        out[W0] = dt_w0 - t_part(0);
        out[W1] = da[0][0] - t_part(1);
        out[W2] = da[1][0] - t_part(2);
        out
    }
}

/// Per-node summary of the derived fields of one state.
#[derive(Clone, Debug)]
pub struct DerivedFields {
    pub a: Vec<f64>,
    pub xbpsi: Vec<f64>,
    pub dth_psi: Vec<f64>,
    pub lap_psi: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub xi: Vec<f64>,
    pub jacobian: Vec<f64>,
    pub jacobian_formula: Vec<f64>,
    pub xbu_res: Vec<f64>,
    pub trchi: Vec<f64>,
    pub mu_zeta: Vec<f64>,
    pub mu_trk: Vec<f64>,
}

fn exact_jac0(st: &Geo2DState) -> Vec<f64> {
    // The initial maps are x¹ = 1 − u, x² = θ.
    vec![-1.0; st.grid.nodes()]
}

/// Derived fields with the algebraic a-recovery.
pub fn spatial_derivatives(model: &MetricModel, st: &Geo2DState) -> Result<DerivedFields, Geo2DError> {
    let mut der = GridDerivatives::new(&st.grid);
    der.compute(model, st);
    let jac0 = exact_jac0(st);
    let ctx = Ctx {
        model,
        st,
        der: &der,
        a_field: None,
        jac0: &jac0,
    };
    let n = st.grid.nodes();
    let mut out = DerivedFields {
        a: vec![0.0; n],
        xbpsi: vec![0.0; n],
        dth_psi: der.dth[PSI].clone(),
        lap_psi: der.lap_psi.clone(),
        upsilon: der.upsilon.clone(),
        xi: vec![0.0; n],
        jacobian: vec![0.0; n],
        jacobian_formula: vec![0.0; n],
        xbu_res: vec![0.0; n],
        trchi: vec![0.0; n],
        mu_zeta: vec![0.0; n],
        mu_trk: vec![0.0; n],
    };
    for k in 0..n {
        let nd = ctx.derived(k)?;
        out.a[k] = nd.a;
        out.xbpsi[k] = nd.xbpsi;
        out.xi[k] = nd.xi;
        out.jacobian[k] = nd.jac;
        out.jacobian_formula[k] = jacobian_formula(&nd.ge, nd.fb.mu, nd.fc.upsilon);
        out.xbu_res[k] = nd.xbu_res;
        out.trchi[k] = nd.conn.trchi;
        out.mu_zeta[k] = nd.conn.mu_zeta;
        out.mu_trk[k] = nd.conn.mu_trk;
    }
    Ok(out)
}

/// Cartesian gradient (∂_tΨ, ∂₁Ψ, ∂₂Ψ) at every node.
pub fn cartesian_gradient(model: &MetricModel, st: &Geo2DState) -> Result<[Vec<f64>; 3], Geo2DError> {
    let mut der = GridDerivatives::new(&st.grid);
    der.compute(model, st);
    let jac0 = exact_jac0(st);
    let ctx = Ctx {
        model,
        st,
        der: &der,
        a_field: None,
        jac0: &jac0,
    };
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; st.grid.nodes()]);
    for n in 0..st.grid.nodes() {
        let nd = ctx.derived(n)?;
        for nu in 0..3 {
            out[nu][n] = nd.mu_dpsi[nu] / nd.fb.mu;
        }
    }
    Ok(out)
}

/// L-derivatives of all stored fields (Ψ, b, μ, L_s, x, W), with the
/// inflow row held, using the algebraic a-recovery.
pub fn rhs_fields(model: &MetricModel, st: &Geo2DState) -> Result<[Vec<f64>; NG], Geo2DError> {
    let mut der = GridDerivatives::new(&st.grid);
    der.compute(model, st);
    let jac0 = exact_jac0(st);
    let mut out: [Vec<f64>; NG] = std::array::from_fn(|_| vec![0.0; st.grid.nodes()]);
    eval_rhs(
        &Ctx {
            model,
            st,
            der: &der,
            a_field: None,
            jac0: &jac0,
        },
        &mut out,
    )?;
    Ok(out)
}

fn eval_rhs(ctx: &Ctx, out: &mut [Vec<f64>; NG]) -> Result<(), Geo2DError> {
    let nt = ctx.st.grid.nt;
    for n in 0..ctx.st.grid.nodes() {
        let nd = ctx.derived(n)?;
        let r = ctx.rhs(n, &nd);
        for k in 0..NG {
            out[k][n] = r[k];
        }
        if n < nt {
            for k in HELD_AT_INFLOW {
                out[k][n] = 0.0;
            }
        }
    }
    Ok(())
}

/// Stored a-field of the semi-Lagrangian mode.
#[derive(Clone, Debug)]
struct SlState {
    a: Vec<f64>,
    a_prev: Vec<f64>,
    dt_prev: f64,
    /// a at u = 0, held.
    a_inflow: Vec<f64>,
}

/// RK4 stepper with reusable scratch.
pub struct Geo2DSolver {
    pub model: MetricModel,
    pub cfl: f64,
    state: Geo2DState,
    jac0: Vec<f64>,
    der: GridDerivatives,
    k: [[Vec<f64>; NG]; 4],
    stage: Geo2DState,
    sl: Option<SlState>,
    prev_lnu: Option<(f64, Vec<f64>, Vec<f64>)>,
}

impl Geo2DSolver {
    pub fn new(model: MetricModel, state: Geo2DState, cfl: f64, mode: FastAMode) -> Result<Self, Geo2DError> {
        let grid = state.grid;
        let mut der = GridDerivatives::new(&grid);
        der.compute(&model, &state);
        let jac0: Vec<f64> = (0..grid.nodes())
            .map(|n| jacobian_det(der.du[X1][n], der.dth[X1][n], der.du[X2][n], 1.0 + der.dth[X2][n]))
            .collect();
        let zeros = || std::array::from_fn(|_| vec![0.0; grid.nodes()]);
        let mut s = Self {
            model,
            cfl,
            stage: state.clone(),
            state,
            jac0,
            der,
            k: std::array::from_fn(|_| zeros()),
            sl: None,
            prev_lnu: None,
        };
        if mode == FastAMode::SemiLagrangian {
            let ctx = s.ctx(&s.state, None);
            let a: Vec<f64> = (0..grid.nodes())
                .map(|n| ctx.derived(n).map(|nd| nd.a))
                .collect::<Result<_, _>>()?;
            s.sl = Some(SlState {
                a_prev: a.clone(),
                a_inflow: a[..grid.nt].to_vec(),
                a,
                dt_prev: 0.0,
            });
        }
        Ok(s)
    }

    fn ctx<'a>(&'a self, st: &'a Geo2DState, a_field: Option<&'a [f64]>) -> Ctx<'a> {
        Ctx {
            model: &self.model,
            st,
            der: &self.der,
            a_field,
            jac0: &self.jac0,
        }
    }

    pub fn state(&self) -> &Geo2DState {
        &self.state
    }

    pub fn mode(&self) -> FastAMode {
        if self.sl.is_some() {
            FastAMode::SemiLagrangian
        } else {
            FastAMode::Algebraic
        }
    }

    /// The stored a-field (semi-Lagrangian mode only).
    pub fn a_field(&self) -> Option<&[f64]> {
        self.sl.as_ref().map(|s| s.a.as_slice())
    }

    /// cfl · min(μ_min h_u, υ_min h_θ) for the current state.
    pub fn dt_limit(&mut self) -> f64 {
        self.der.compute(&self.model, &self.state);
        let ups_min = self.der.upsilon.iter().copied().fold(f64::INFINITY, f64::min);
        let g = &self.state.grid;
        self.cfl * (self.state.mu_min() * g.hu()).min(ups_min * g.ht())
    }

    fn stage_rhs(&mut self, which: usize, from_stage: bool, a_stage: Option<&[f64]>) -> Result<(), Geo2DError> {
        let st = if from_stage { &self.stage } else { &self.state };
        self.der.compute(&self.model, st);
        let mut out = std::mem::replace(&mut self.k[which], std::array::from_fn(|_| Vec::new()));
        let res = eval_rhs(&self.ctx(st, a_stage), &mut out);
        self.k[which] = out;
        res
    }

    /// One RK4 step of size dt.
    pub fn step(&mut self, dt: f64) -> Result<(), Geo2DError> {
        let limit = self.dt_limit();
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-9)) {
            return Err(Geo2DError::CflViolation { dt, limit });
        }
        let n = self.state.grid.nodes();
        let a_at = |c: f64, sl: &Option<SlState>| -> Option<Vec<f64>> {
            sl.as_ref().map(|s| {
                let r = if s.dt_prev > 0.0 { c * dt / s.dt_prev } else { 0.0 };
                (0..n).map(|k| s.a[k] + r * (s.a[k] - s.a_prev[k])).collect()
            })
        };
        let stage_c = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s > 0 {
                let h = stage_c[s] * dt;
                for k in 0..NG {
                    let (y, ks, out) = (&self.state.f[k], &self.k[s - 1][k], &mut self.stage.f[k]);
                    for m in 0..n {
                        out[m] = y[m] + h * ks[m];
                    }
                }
                self.stage.t = self.state.t + h;
            }
            let a = a_at(stage_c[s], &self.sl);
            self.stage_rhs(s, s > 0, a.as_deref())?;
        }
        let old = self.sl.is_some().then(|| self.state.clone());
        for k in 0..NG {
            let y = &mut self.state.f[k];
            let [k1, k2, k3, k4] = [&self.k[0][k], &self.k[1][k], &self.k[2][k], &self.k[3][k]];
            for m in 0..n {
                y[m] += dt / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
            }
        }
        self.state.t += dt;
        if let Some(old) = old {
            self.semi_lagrangian_update(&old, dt)?;
        }
        Ok(())
    }

    /// ξ at every node of a state.
    fn xi_field(&mut self, st: &Geo2DState) -> Result<Vec<f64>, Geo2DError> {
        self.der.compute(&self.model, st);
        let ctx = self.ctx(st, None);
        (0..st.grid.nodes()).map(|n| ctx.derived(n).map(|nd| nd.xi)).collect()
    }

    /// Trace ŬL back from every node of the new level to the old one and
    /// integrate ŬLa = Lb − (Lμ)a + 2(Lξ)∂_θΨ with the trapezoid rule.
    fn semi_lagrangian_update(&mut self, old: &Geo2DState, dt: f64) -> Result<(), Geo2DError> {
        let grid = old.grid;
        let n = grid.nodes();
        let xi_old = self.xi_field(old)?;
        let xi_new = self.xi_field(&self.state.clone())?;
        let lxi: Vec<f64> = (0..n).map(|k| (xi_new[k] - xi_old[k]) / dt).collect();
        let sl = self.sl.take().expect("semi-Lagrangian state");
        // R at the old level; k[0] holds Lb and Lμ evaluated with a^n.
        self.der.compute(&self.model, old);
        let r_old: Vec<f64> = (0..n)
            .map(|k| self.k[0][B][k] - self.k[0][MU][k] * sl.a[k] + 2.0 * lxi[k] * self.der.dth[PSI][k])
            .collect();
        let r = if sl.dt_prev > 0.0 { dt / sl.dt_prev } else { 0.0 };
        let mut a_new: Vec<f64> = (0..n).map(|k| sl.a[k] + r * (sl.a[k] - sl.a_prev[k])).collect();
        let new = self.state.clone();
        let mut rhs_new: [Vec<f64>; NG] = std::array::from_fn(|_| vec![0.0; n]);
        for _ in 0..2 {
            self.der.compute(&self.model, &new);
            eval_rhs(&self.ctx(&new, Some(&a_new)), &mut rhs_new)?;
            let dth_psi_new = self.der.dth[PSI].clone();
            for k in 0..n {
                let (i, j) = grid.ij(k);
                if i == 0 {
                    a_new[k] = sl.a_inflow[j];
                    continue;
                }
                let (u, th) = (grid.u(i), grid.theta(j));
                let mu_arr = new.f[MU][k];
                let mut ds = dt / mu_arr;
                let mut foot = (u - 2.0 * ds, th + 2.0 * xi_new[k] * ds);
                for _ in 0..2 {
                    let uf = foot.0.max(0.0);
                    let mu_bar = 0.5 * (mu_arr + grid.sample(&old.f[MU], uf, foot.1));
                    let xi_bar = 0.5 * (xi_new[k] + grid.sample(&xi_old, uf, foot.1));
                    ds = dt / mu_bar;
                    foot = (u - 2.0 * ds, th + 2.0 * xi_bar * ds);
                }
                let (a_foot, r_foot) = if foot.0 >= 0.0 {
                    (grid.sample(&sl.a, foot.0, foot.1), grid.sample(&r_old, foot.0, foot.1))
                } else {
                    // The characteristic enters through u = 0.
                    let frac = u / (u - foot.0);
                    ds *= frac;
                    let th_b = th + (foot.1 - th) * frac;
                    let a_b = crate::numerics::interp_periodic(&sl.a_inflow, grid.ht(), th_b.rem_euclid(1.0));
                    (a_b, grid.sample(&r_old, 0.0, th_b))
                };
                let src = rhs_new[B][k] + 2.0 * lxi[k] * dth_psi_new[k];
                a_new[k] = (a_foot + 0.5 * ds * (r_foot + src)) / (1.0 + 0.5 * ds * rhs_new[MU][k]);
            }
        }
        self.sl = Some(SlState {
            a_prev: sl.a,
            a: a_new,
            dt_prev: dt,
            a_inflow: sl.a_inflow,
        });
        Ok(())
    }

    /// Series row and, if requested, the audit sample of the current level.
    pub fn measure(&mut self, with_audit: bool) -> Result<(SeriesRow, Option<AuditSample>), Geo2DError> {
        let st = self.state.clone();
        let grid = st.grid;
        let n = grid.nodes();
        self.der.compute(&self.model, &st);
        let a_field = self.sl.as_ref().map(|s| s.a.clone());
        let ctx = self.ctx(&st, a_field.as_deref());
        let der = &self.der;
        let (mu_star, u_star, theta_star) = st.mu_star();
        let mut row = SeriesRow {
            t: st.t,
            mu_star,
            u_star,
            theta_star,
            ..Default::default()
        };
        let mut lnu = vec![0.0; n];
        let mut trchi = vec![0.0; n];
        let mut dens = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut flux = [[vec![0.0; grid.nt], vec![0.0; grid.nt]], [vec![0.0; grid.nt], vec![0.0; grid.nt]]];
        for k in 0..n {
            let nd = ctx.derived(k)?;
            let mu = nd.fb.mu;
            let ups = nd.fc.upsilon;
            let ups2 = ups * ups;
            lnu[k] = ups.ln();
            trchi[k] = nd.conn.trchi;
            row.max_dtpsi = row.max_dtpsi.max((nd.mu_dpsi[0] / mu).abs());
            row.max_d1psi = row.max_d1psi.max((nd.mu_dpsi[1] / mu).abs());
            row.max_xpsi = row.max_xpsi.max((nd.xbpsi / mu).abs());
            for c in 0..4 {
                row.sup_w[c] = row.sup_w[c].max(nd.w[c].abs());
            }
            let jf = jacobian_formula(&nd.ge, mu, ups);
            row.res_jacobian = row.res_jacobian.max((nd.jac - jf).abs());
            let curl = nd.d_spatial(der, W2, k, 1) - nd.d_spatial(der, W1, k, 2);
            row.res_curl = row.res_curl.max(curl.abs());
            if ctx.a_field.is_some() {
                row.res_b = row.res_b.max((st.f[B][k] - mu * nd.a - 2.0 * nd.xbpsi).abs());
            }
            row.res_null = row.res_null.max(frame_residuals(&nd.fb, &nd.ge).iter().copied().fold(0.0, f64::max));
            row.res_xbu = row.res_xbu.max(nd.xbu_res.abs());
            // X̆L^i_s against its algebraic expression.
            let fc = &nd.fc;
            let dpsi_th = der.dth[PSI][k];
            let brace = -0.5 * fc.g_ll * nd.xbpsi
                + 0.5 * mu * fc.g_ll * nd.a
                + mu * fc.g_lx * nd.a
                + 0.5 * mu * fc.g_xx * nd.a;
            for i in 0..2 {
                let th_i = nd.theta[i + 1] / ups2;
                let formula = brace * (nd.fb.l[i + 1] + nd.ge.ginv[(0, i + 1)])
                    - (fc.g_ltheta * nd.xbpsi + 0.5 * mu * fc.g_xx * dpsi_th) * th_i
                    + der.dth[MU][k] * th_i;
                row.res_radl = row.res_radl.max((der.xb(LS1 + i, k, nd.xi) - formula).abs());
            }
            if !with_audit {
                continue;
            }
            let rhs = ctx.rhs(k, &nd);
            let (mu_f, mu_s) = ctx.sources(k, &nd);
            let dslash2 = dpsi_th * dpsi_th / ups2;
            let p = FastAuditPoint {
                mu,
                upsilon: ups,
                lf: nd.a,
                xbf: nd.xbpsi,
                dth_f: dpsi_th,
                forcing: mu_f,
                lmu: rhs[MU],
                xbmu: der.xb(MU, k, nd.xi),
                dth_mu: der.dth[MU][k],
                trchi: nd.conn.trchi,
                trk_trans: nd.conn.trk_trans,
                trk_tan: nd.conn.trk_tan,
                zeta_trans: nd.conn.zeta_trans,
                zeta_tan: nd.conn.zeta_tan,
            };
            dens[0][k] = fast_energy_density(mu, nd.a, nd.xbpsi, dslash2) * ups;
            dens[1][k] = p.bulk() * ups;
            dens[2][k] = p.k_density() * ups;
            let psi = st.f[PSI][k];
            let h = self.model.h_inv(psi, &nd.w);
            let j_cur = slow_current(&h, &nd.w);
            let sqrt_det = nd.ge.det_gbar().sqrt();
            dens[3][k] = j_cur[0] * mu * ups / sqrt_det;
            // Cartesian derivatives of (Ψ, W) for ∂h⁻¹ by the chain rule.
            let dh: [Mat3; 3] = std::array::from_fn(|nu| {
                let d_psi = nd.mu_dpsi[nu] / mu;
                let d_w = Slow::from_fn(|c, _| {
                    let f = W + c;
                    nd.cif[nu][0] * rhs[f]
                        + nd.cif[nu][1] * der.xb(f, k, nd.xi) / mu
                        + nd.cif[nu][2] * der.along(f, k, nd.y_ut)
                });
                let eps = 1e-6;
                (self.model.h_inv(psi + eps * d_psi, &(nd.w + d_w * eps))
                    - self.model.h_inv(psi - eps * d_psi, &(nd.w - d_w * eps)))
                    / (2.0 * eps)
            });
            // μ times the source of ∂_t w0, which is −S̃.
            let forcing = SlowForcing {
                f0: -mu_s,
                ..Default::default()
            };
            dens[4][k] = slow_divergence(&h, &dh, &nd.w, mu, &forcing) * ups / sqrt_det;
            let (i, j) = grid.ij(k);
            if i == 0 || i == grid.nu {
                let side = usize::from(i != 0);
                let l_flat = nd.ge.g * nd.fb.l;
                flux[0][side][j] = fast_flux_density(mu, nd.a, dslash2) * ups;
                flux[1][side][j] = slow_flux_density(&j_cur, &l_flat, &nd.fb.l, &nd.theta);
            }
        }
        if let Some((t0, lnu0, trchi0)) = &self.prev_lnu {
            let dtl = st.t - t0;
            if dtl > 0.0 {
                for k in 0..n {
                    let r = (lnu[k] - lnu0[k]) / dtl - 0.5 * (trchi[k] + trchi0[k]);
                    row.res_lnu = row.res_lnu.max(r.abs());
                }
            }
        }
        self.prev_lnu = Some((st.t, lnu, trchi));
        let integrate = |f: &[f64]| {
            let rows: Vec<f64> = f.chunks(grid.nt).map(|r| periodic_sum(r, grid.ht())).collect();
            simpson(&rows, grid.hu())
        };
        let audit = with_audit.then(|| AuditSample {
            t: st.t,
            e_fast: integrate(&dens[0]),
            e_slow: integrate(&dens[3]),
            fast_flux_in: periodic_sum(&flux[0][0], grid.ht()),
            fast_flux_out: periodic_sum(&flux[0][1], grid.ht()),
            slow_flux_in: periodic_sum(&flux[1][0], grid.ht()),
            slow_flux_out: periodic_sum(&flux[1][1], grid.ht()),
            fast_bulk: integrate(&dens[1]),
            slow_bulk: integrate(&dens[4]),
            k_rate: integrate(&dens[2]),
        });
        Ok((row, audit))
    }
}

/// One RK4 step from a state (convenience wrapper; reuses nothing).
pub fn step_geo2d(model: &MetricModel, state: &Geo2DState, dt: f64, cfl: f64) -> Result<Geo2DState, Geo2DError> {
    let mut s = Geo2DSolver::new(model.clone(), state.clone(), cfl, FastAMode::Algebraic)?;
    s.step(dt)?;
    Ok(s.state().clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geo2DOptions {
    pub nu: usize,
    pub nt: usize,
    pub u0: f64,
    /// dt = cfl · min(μ_min h_u, υ_min h_θ).
    pub cfl: f64,
    pub mu_stop: f64,
    /// Defaults to 2/max(δ̊★, 0.05).
    pub t_max: Option<f64>,
    pub output_times: Vec<f64>,
    pub audit: bool,
    pub fast_a_mode: FastAMode,
}

impl Default for Geo2DOptions {
    fn default() -> Self {
        Self {
            nu: 256,
            nt: 128,
            u0: 1.0,
            cfl: 0.4,
            mu_stop: 0.05,
            t_max: None,
            output_times: Vec::new(),
            audit: true,
            fast_a_mode: FastAMode::Algebraic,
        }
    }
}

/// Everything recorded by a geo2d run.
#[derive(Clone, Debug)]
pub struct Geo2DRun {
    pub series: Vec<SeriesRow>,
    pub outputs: Vec<Geo2DState>,
    pub initial: Geo2DState,
    pub final_state: Geo2DState,
    pub params: DataSizeParams,
    pub ledger: EnergyLedger,
    pub outcome: Outcome,
}

pub fn default_t_max(deltastar: f64) -> f64 {
    2.0 / deltastar.max(0.05)
}

/// March until min μ ≤ μ_stop or t_max, recording the series.
pub fn run_geo2d_full(model: &MetricModel, data: &InitialData, opts: &Geo2DOptions) -> Result<Geo2DRun, Geo2DError> {
    if !(opts.mu_stop > 0.0 && opts.mu_stop < 0.5) {
        return Err(Geo2DError::InvalidOption(format!("mu_stop = {} outside (0, 0.5)", opts.mu_stop)));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(Geo2DError::InvalidOption(format!("cfl = {} outside (0, 1]", opts.cfl)));
    }
    let grid = Geo2DGrid {
        nu: opts.nu,
        nt: opts.nt,
        u0: opts.u0,
    };
    let init = init_geo2d(model, data, grid)?;
    let params = initial_data_size(model, data).map_err(Geo2DError::InvalidProfile)?;
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(params.deltastar));
    let mut solver = Geo2DSolver::new(model.clone(), init.clone(), opts.cfl, opts.fast_a_mode)?;
    let mut ledger = EnergyLedger::new();
    let mut series = Vec::new();
    let mut outputs = Vec::new();
    let mut pending: Vec<f64> = opts.output_times.iter().copied().filter(|&t| t <= t_max).collect();
    pending.sort_by(f64::total_cmp);
    pending.reverse();
    let mut record = |solver: &mut Geo2DSolver, ledger: &mut EnergyLedger| -> Result<(), Geo2DError> {
        let (mut row, audit) = solver.measure(opts.audit)?;
        if let Some(a) = audit {
            ledger.push(a);
        }
        row.set_energies(ledger);
        series.push(row);
        Ok(())
    };
    record(&mut solver, &mut ledger)?;
    if pending.last() == Some(&0.0) {
        outputs.push(init.clone());
        pending.pop();
    }
    loop {
        let st = solver.state();
        if st.mu_min() <= opts.mu_stop || st.t >= t_max - 1e-12 {
            break;
        }
        let t = st.t;
        let mut dt = solver.dt_limit().min(t_max - t);
        let mut hit = false;
        if let Some(&next) = pending.last() {
            if t + dt >= next - 1e-12 {
                dt = next - t;
                hit = true;
            }
        }
        solver.step(dt)?;
        record(&mut solver, &mut ledger)?;
        if hit {
            outputs.push(solver.state().clone());
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
    Ok(Geo2DRun {
        series,
        outputs,
        initial: init,
        final_state,
        params,
        ledger,
        outcome,
    })
}

/// Shock report of a geo2d run; `NoShock` (case I) if μ★ never reached μ_stop.
pub fn run_geo2d(model: &MetricModel, data: &InitialData, opts: &Geo2DOptions) -> Result<ShockReport, Geo2DError> {
    let run = run_geo2d_full(model, data, opts)?;
    match run.outcome {
        Outcome::Shock(r) => Ok(r),
        Outcome::NoShock { t_end, mu_star_min } => Err(Geo2DError::NoShock { t_end, mu_star_min }),
    }
}
