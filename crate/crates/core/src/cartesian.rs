//! Cartesian reference solver for the pre-shock window.
//!
//! Unknowns on x¹ ∈ [x_lo, x_hi] (data vanish near both ends) times the
//! periodic x² circle are Ψ, Π = ∂_tΨ and W = (w, w0, w1, w2). The fast
//! equation is □_gΨ written out in coordinates,
//!
//! ```text
//! □_gΨ = g^{αβ}∂_α∂_βΨ + {(dg⁻¹/dΨ)^{αβ} + ½ tr(g⁻¹G) g^{αβ}} ∂_αΨ ∂_βΨ,
//! ```
//!
//! solved for ∂_tΠ with (g⁻¹)⁰⁰ = −1. The slow wave is the first-order
//! system ∂_t w = w0, ∂_t w0 = 2h^{0a}∂_a w0 + h^{ab}∂_a w_b − S̃,
//! ∂_t w_i = ∂_i w0. RK4 in time, fourth-order centered differences in space.

use thiserror::Error;

use crate::data::InitialData;
use crate::frame::{build_frame_unchecked, initial_relations};
use crate::geo2d::{self, Geo2DError, Geo2DState};
use crate::metric::{MetricError, MetricModel, Slow, Vec3};
use crate::numerics::{d12_zero_padded, d1_periodic, d2_periodic};

pub const PSI: usize = 0;
pub const PI: usize = 1;
pub const W: usize = 2;
pub const W0: usize = 3;
pub const W1: usize = 4;
pub const W2: usize = 5;
pub const NC: usize = 6;
pub const FIELD_NAMES: [&str; NC] = ["psi", "dt_psi", "w", "w0", "w1", "w2"];

/// Cells next to an x¹-edge that must stay free of the solution.
pub const EDGE_CELLS: usize = 3;
/// Relative size above which a value counts as support.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CartesianError {
    #[error("cartesian-oracle/init_cartesian: invalid profile: {0}")]
    InvalidProfile(MetricError),
    #[error("cartesian-oracle/init_cartesian: grid {nx}x{nt} is below the minimum 16x4")]
    GridTooSmall { nx: usize, nt: usize },
    #[error("cartesian-oracle/step_cartesian: support of {field} reached x1 = {x1} (value {value})")]
    SupportBreach { field: &'static str, x1: f64, value: f64 },
    #[error("cartesian-oracle/step_cartesian: t = {t} is past the pre-shock window {t_ref_max}")]
    WindowExceeded { t: f64, t_ref_max: f64 },
    #[error("cartesian-oracle/step_cartesian: {0}")]
    Metric(MetricError),
    #[error("cartesian-oracle/compare_to_geo: sample point ({x1}, {x2}) lies outside the geometric chart")]
    OutOfChart { x1: f64, x2: f64 },
    #[error("cartesian-oracle/compare_to_geo: {0}")]
    Geo(#[from] Geo2DError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianGrid {
    /// Intervals along x¹.
    pub nx: usize,
    /// Periodic nodes along x².
    pub nt: usize,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl CartesianGrid {
    pub fn new(nx: usize, nt: usize) -> Self {
        Self {
            nx,
            nt,
            x_lo: -1.0,
            x_hi: 3.0,
        }
    }

    pub fn hx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn ht(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn nodes(&self) -> usize {
        (self.nx + 1) * self.nt
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nt + j
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.hx()
    }

    pub fn x2(&self, j: usize) -> f64 {
        j as f64 * self.ht()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartesianState {
    pub t: f64,
    pub grid: CartesianGrid,
    pub f: [Vec<f64>; NC],
}

impl CartesianState {
    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.f[k][self.grid.idx(i, j)]
    }
}

/// Ψ(0, x) = Ψ|₀ at u = 1 − x¹, θ = x²; ∂_tΨ = LΨ|₀ − L^a∂_aΨ with L from the
/// initial relations; W with (w1, w2) the analytic gradient of w.
pub fn init_cartesian(model: &MetricModel, data: &InitialData, grid: CartesianGrid) -> Result<CartesianState, CartesianError> {
    if grid.nx < 16 || grid.nt < 4 {
        return Err(CartesianError::GridTooSmall {
            nx: grid.nx,
            nt: grid.nt,
        });
    }
    let mut st = CartesianState {
        t: 0.0,
        grid,
        f: std::array::from_fn(|_| vec![0.0; grid.nodes()]),
    };
    for i in 0..=grid.nx {
        for j in 0..grid.nt {
            let p = data.at(1.0 - grid.x1(i), grid.x2(j));
            let ge = model.eval_fast_metric(p.psi).map_err(CartesianError::InvalidProfile)?;
            let (mu, ls, _) = initial_relations(&ge);
            let fb = build_frame_unchecked(&ge, mu, ls);
            let dt_psi = p.a - fb.l[1] * (-p.psi_u) - fb.l[2] * p.psi_th;
            let (w1, w2) = p.w_cart();
            let n = grid.idx(i, j);
            let vals = [p.psi, dt_psi, p.w, p.w0, w1, w2];
            for k in 0..NC {
                st.f[k][n] = vals[k];
            }
        }
    }
    Ok(st)
}

/// Spatial derivatives of one state.
#[derive(Clone, Debug)]
struct CartDerivatives {
    /// ∂₁ and ∂₂ of every field.
    d1: [Vec<f64>; NC],
    d2: [Vec<f64>; NC],
    psi_11: Vec<f64>,
    psi_22: Vec<f64>,
    psi_12: Vec<f64>,
    scratch: Vec<f64>,
}

impl CartDerivatives {
    fn new(grid: &CartesianGrid) -> Self {
        let n = grid.nodes();
        Self {
            d1: std::array::from_fn(|_| vec![0.0; n]),
            d2: std::array::from_fn(|_| vec![0.0; n]),
            psi_11: vec![0.0; n],
            psi_22: vec![0.0; n],
            psi_12: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn compute(&mut self, st: &CartesianState) {
        let g = &st.grid;
        let (nx1, nt) = (g.nx + 1, g.nt);
        let (hx, ht) = (g.hx(), g.ht());
        for k in 0..NC {
            for j in 0..nt {
                let out2: &mut [f64] = if k == PSI { &mut self.psi_11 } else { &mut self.scratch };
                d12_zero_padded(&st.f[k], nx1, nt, j, hx, &mut self.d1[k], out2);
            }
            for i in 0..nx1 {
                d1_periodic(&st.f[k], nt, 1, i * nt, ht, &mut self.d2[k]);
            }
        }
        for i in 0..nx1 {
            d2_periodic(&st.f[PSI], nt, 1, i * nt, ht, &mut self.psi_22);
            d1_periodic(&self.d1[PSI], nt, 1, i * nt, ht, &mut self.psi_12);
        }
    }
}

fn node_rhs(model: &MetricModel, st: &CartesianState, d: &CartDerivatives, n: usize) -> Result<[f64; NC], CartesianError> {
    let f = |k: usize| st.f[k][n];
    let psi = f(PSI);
    let ge = model.eval_fast_metric(psi).map_err(CartesianError::Metric)?;
    let gi = &ge.ginv;
    let dpsi = Vec3::new(f(PI), d.d1[PSI][n], d.d2[PSI][n]);
    let q = dpsi.dot(&(gi * dpsi));
    let dginv = -(gi * ge.big_g * gi);
    let tr = (gi * ge.big_g).trace();
    let lower = dpsi.dot(&(dginv * dpsi)) + 0.5 * tr * q;
    let principal = 2.0 * gi[(0, 1)] * d.d1[PI][n]
        + 2.0 * gi[(0, 2)] * d.d2[PI][n]
        + gi[(1, 1)] * d.psi_11[n]
        + 2.0 * gi[(1, 2)] * d.psi_12[n]
        + gi[(2, 2)] * d.psi_22[n];
    let w = Slow::new(f(W), f(W0), f(W1), f(W2));
    let (fast, slow) = model.semilinear_sources(psi, &dpsi, &w, q);
    let h = model.h_inv(psi, &w);
    let dw = |k: usize, a: usize| if a == 1 { d.d1[k][n] } else { d.d2[k][n] };
    let mut dt_w0 = -slow;
    for a in 1..3 {
        dt_w0 += 2.0 * h[(0, a)] * dw(W0, a);
        for b in 1..3 {
            dt_w0 += h[(a, b)] * dw(W0 + b, a);
        }
    }
    Ok([f(PI), principal + lower - fast, f(W0), dt_w0, d.d1[W0][n], d.d2[W0][n]])
}

/// RK4 stepper with reusable scratch.
pub struct CartesianSolver {
    pub model: MetricModel,
    /// dt = cfl · min(h_x, h_θ).
    pub cfl: f64,
    /// End of the pre-shock window.
    pub t_ref_max: f64,
    state: CartesianState,
    stage: CartesianState,
    der: CartDerivatives,
    k: [[Vec<f64>; NC]; 4],
}

impl CartesianSolver {
    pub fn new(model: MetricModel, state: CartesianState, cfl: f64, t_ref_max: f64) -> Self {
        let grid = state.grid;
        Self {
            model,
            cfl,
            t_ref_max,
            stage: state.clone(),
            der: CartDerivatives::new(&grid),
            k: std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; grid.nodes()])),
            state,
        }
    }

    pub fn state(&self) -> &CartesianState {
        &self.state
    }

    pub fn dt_max(&self) -> f64 {
        let g = &self.state.grid;
        self.cfl * g.hx().min(g.ht())
    }

    fn eval(&mut self, which: usize, from_stage: bool) -> Result<(), CartesianError> {
        let st = if from_stage { &self.stage } else { &self.state };
        self.der.compute(st);
        for n in 0..st.grid.nodes() {
            let r = node_rhs(&self.model, st, &self.der, n)?;
            for c in 0..NC {
                self.k[which][c][n] = r[c];
            }
        }
        Ok(())
    }

    pub fn step(&mut self, dt: f64) -> Result<(), CartesianError> {
        let t1 = self.state.t + dt;
        if t1 > self.t_ref_max * (1.0 + 1e-12) {
            return Err(CartesianError::WindowExceeded {
                t: t1,
                t_ref_max: self.t_ref_max,
            });
        }
        let n = self.state.grid.nodes();
        let stage_c = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s > 0 {
                let h = stage_c[s] * dt;
                for c in 0..NC {
                    for m in 0..n {
                        self.stage.f[c][m] = self.state.f[c][m] + h * self.k[s - 1][c][m];
                    }
                }
                self.stage.t = self.state.t + h;
            }
            self.eval(s, s > 0)?;
        }
        for c in 0..NC {
            let [k1, k2, k3, k4] = [&self.k[0][c], &self.k[1][c], &self.k[2][c], &self.k[3][c]];
            for m in 0..n {
                self.state.f[c][m] += dt / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
            }
        }
        self.state.t = t1;
        check_support(&self.state)
    }

    /// Step until t_end, landing on it exactly.
    pub fn run_to(&mut self, t_end: f64) -> Result<(), CartesianError> {
        let dt0 = self.dt_max();
        while self.state.t < t_end - 1e-12 {
            let dt = dt0.min(t_end - self.state.t);
            self.step(dt)?;
        }
        Ok(())
    }

    /// max |∂₁w₂ − ∂₂w₁| over the grid.
    pub fn curl_residual(&mut self) -> f64 {
        self.der.compute(&self.state);
        (0..self.state.grid.nodes())
            .map(|n| (self.der.d1[W2][n] - self.der.d2[W1][n]).abs())
            .fold(0.0, f64::max)
    }

    /// (∂₁Ψ, ∂₂Ψ) at every node.
    pub fn spatial_gradient(&mut self) -> [Vec<f64>; 2] {
        self.der.compute(&self.state);
        [self.der.d1[PSI].clone(), self.der.d2[PSI].clone()]
    }
}

/// SupportBreach if any field is non-negligible within EDGE_CELLS of an x¹-edge.
pub fn check_support(st: &CartesianState) -> Result<(), CartesianError> {
    let g = &st.grid;
    for k in 0..NC {
        let scale = st.f[k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        for i in (0..EDGE_CELLS).chain(g.nx + 1 - EDGE_CELLS..=g.nx) {
            for j in 0..g.nt {
                let v = st.at(k, i, j);
                if v.abs() > SUPPORT_TOL * scale {
                    return Err(CartesianError::SupportBreach {
                        field: FIELD_NAMES[k],
                        x1: g.x1(i),
                        value: v,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Quantities compared between the two solvers.
pub const COMPARE_NAMES: [&str; 8] = ["psi", "dt_psi", "d1_psi", "d2_psi", "w", "w0", "w1", "w2"];

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub t_cart: f64,
    pub t_geo: f64,
    pub samples: usize,
    /// Per quantity, in the order of COMPARE_NAMES.
    pub max_abs: [f64; 8],
    /// max |error| / max |reference|.
    pub max_rel: [f64; 8],
    /// ‖error‖₂ / ‖reference‖₂.
    pub l2_rel: [f64; 8],
}

impl CompareReport {
    pub fn worst_max_rel(&self) -> f64 {
        self.max_rel.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_l2_rel(&self) -> f64 {
        self.l2_rel.iter().copied().fold(0.0, f64::max)
    }
}

/// Invert (u, θ) ↦ (x¹, x²) by Newton's method on the bicubic maps.
fn invert_map(geo: &Geo2DState, x1: f64, x2: f64, guess: (f64, f64)) -> Option<(f64, f64)> {
    let map = |u: f64, th: f64| (geo.sample(geo2d::X1, u, th), geo.sample(geo2d::X2, u, th));
    let (mut u, mut th) = guess;
    let e = 1e-6;
    for _ in 0..30 {
        let (f1, f2) = map(u, th);
        let (r1, r2) = (f1 - x1, f2 - x2);
        if r1.abs().max(r2.abs()) < 1e-13 {
            return Some((u, th));
        }
        let (a1, a2) = map(u + e, th);
        let (b1, b2) = map(u - e, th);
        let (c1, c2) = map(u, th + e);
        let (d1, d2) = map(u, th - e);
        let (j11, j21) = ((a1 - b1) / (2.0 * e), (a2 - b2) / (2.0 * e));
        let (j12, j22) = ((c1 - d1) / (2.0 * e), (c2 - d2) / (2.0 * e));
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        u -= (r1 * j22 - j12 * r2) / det;
        th -= (j11 * r2 - j21 * r1) / det;
        if !u.is_finite() || !(-0.5..=geo.grid.u0 + 0.5).contains(&u) {
            return None;
        }
    }
    let (f1, f2) = map(u, th);
    ((f1 - x1).abs().max((f2 - x2).abs()) < 1e-10).then_some((u, th))
}

/// Sample the geometric solution at every Cartesian node inside the band
/// covered by the chart and compare Ψ, ∂Ψ and W.
pub fn compare_to_geo(
    model: &MetricModel,
    cart: &CartesianState,
    cart_grad: &[Vec<f64>; 2],
    geo: &Geo2DState,
) -> Result<CompareReport, CartesianError> {
    let gg = &geo.grid;
    let cg = &cart.grid;
    let geo_grad = geo2d::cartesian_gradient(model, geo)?;
    // x¹-band covered by every θ-line of the chart.
    let lo = (0..gg.nt).map(|j| geo.at(geo2d::X1, gg.nu, j)).fold(f64::NEG_INFINITY, f64::max);
    let hi = (0..gg.nt).map(|j| geo.at(geo2d::X1, 0, j)).fold(f64::INFINITY, f64::min);
    let mut err = [[0.0f64; 2]; 8];
    let mut refm = [[0.0f64; 2]; 8];
    let mut samples = 0;
    for i in 0..=cg.nx {
        let x1 = cg.x1(i);
        if !(x1 >= lo - 1e-12 && x1 <= hi + 1e-12) {
            continue;
        }
        let mut guess = ((1.0 + geo.t - x1).clamp(0.0, gg.u0), 0.0);
        for j in 0..cg.nt {
            let x2 = cg.x2(j);
            let start = if j == 0 { (guess.0, x2) } else { (guess.0, guess.1 + cg.ht()) };
            let (u, th) = invert_map(geo, x1, x2, start)
                .filter(|&(u, _)| (-1e-9..=gg.u0 + 1e-9).contains(&u))
                .ok_or(CartesianError::OutOfChart { x1, x2 })?;
            guess = (u, th);
            let th = th.rem_euclid(1.0);
            let u = u.clamp(0.0, gg.u0);
            let n = cg.idx(i, j);
            let pairs = [
                (cart.f[PSI][n], geo.sample(geo2d::PSI, u, th)),
                (cart.f[PI][n], gg.sample(&geo_grad[0], u, th)),
                (cart_grad[0][n], gg.sample(&geo_grad[1], u, th)),
                (cart_grad[1][n], gg.sample(&geo_grad[2], u, th)),
                (cart.f[W][n], geo.sample(geo2d::W, u, th)),
                (cart.f[W0][n], geo.sample(geo2d::W0, u, th)),
                (cart.f[W1][n], geo.sample(geo2d::W1, u, th)),
                (cart.f[W2][n], geo.sample(geo2d::W2, u, th)),
            ];
            for (q, (c, g)) in pairs.into_iter().enumerate() {
                let e = (c - g).abs();
                err[q][0] = err[q][0].max(e);
                err[q][1] += e * e;
                refm[q][0] = refm[q][0].max(c.abs());
                refm[q][1] += c * c;
            }
            samples += 1;
        }
    }
    let ratio = |e: f64, r: f64| if r > 0.0 { e / r } else { e };
    Ok(CompareReport {
        t_cart: cart.t,
        t_geo: geo.t,
        samples,
        max_abs: std::array::from_fn(|q| err[q][0]),
        max_rel: std::array::from_fn(|q| ratio(err[q][0], refm[q][0])),
        l2_rel: std::array::from_fn(|q| ratio(err[q][1].sqrt(), refm[q][1].sqrt())),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartesianOptions {
    pub nx: usize,
    pub nt: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub cfl: f64,
    /// Defaults to 0.5/δ̊★.
    pub t_ref_max: Option<f64>,
}

impl Default for CartesianOptions {
    fn default() -> Self {
        Self {
            nx: 1024,
            nt: 128,
            x_lo: -1.0,
            x_hi: 3.0,
            cfl: 0.5,
            t_ref_max: None,
        }
    }
}

impl CartesianOptions {
    pub fn grid(&self) -> CartesianGrid {
        CartesianGrid {
            nx: self.nx,
            nt: self.nt,
            x_lo: self.x_lo,
            x_hi: self.x_hi,
        }
    }
}

/// Run the reference solver from t = 0 to t_end.
pub fn run_cartesian(
    model: &MetricModel,
    data: &InitialData,
    opts: &CartesianOptions,
    deltastar: f64,
    t_end: f64,
) -> Result<CartesianSolver, CartesianError> {
    let init = init_cartesian(model, data, opts.grid())?;
    let t_ref_max = opts.t_ref_max.unwrap_or(0.5 / deltastar.max(1e-12));
    let mut s = CartesianSolver::new(model.clone(), init, opts.cfl, t_ref_max);
    s.run_to(t_end)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PerturbationSpec, Profile};
    use crate::geo2d::{init_geo2d, run_geo2d_full, Geo2DGrid, Geo2DOptions};
    use crate::metric::{default_h_inv, Semilinear};

    fn model() -> MetricModel {
        MetricModel::model_quadratic()
    }

    fn perturbed(eps: f64) -> InitialData {
        InitialData::new(
            Profile::bump(0.1),
            PerturbationSpec {
                eps,
                seed: 7,
                theta_modes: 2,
            },
        )
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let m = model();
        let init = init_cartesian(&m, &InitialData::unperturbed(Profile::bump(0.0)), CartesianGrid::new(64, 8)).unwrap();
        let mut s = CartesianSolver::new(m, init.clone(), 0.5, 1.0);
        s.run_to(0.3).unwrap();
        assert_eq!(s.state().f, init.f);
    }

    #[test]
    fn minkowski_traveling_wave() {
        // g = m, no sources: Ψ = F(x¹ − t) is exact.
        let flat = MetricModel::custom(&[0.0], &[0.0], &[0.0], [0.25, 0.0, 0.25], Semilinear::none());
        let prof = |x: f64| (-40.0 * (x - 0.5).powi(2)).exp();
        let err = |nx: usize| {
            let grid = CartesianGrid::new(nx, 4);
            let mut st = CartesianState {
                t: 0.0,
                grid,
                f: std::array::from_fn(|_| vec![0.0; grid.nodes()]),
            };
            for i in 0..=nx {
                for j in 0..4 {
                    let x = grid.x1(i);
                    st.f[PSI][grid.idx(i, j)] = prof(x);
                    st.f[PI][grid.idx(i, j)] = 80.0 * (x - 0.5) * prof(x);
                }
            }
            let mut s = CartesianSolver::new(flat.clone(), st, 0.5, 1.0);
            s.run_to(0.5).unwrap();
            (0..=nx)
                .map(|i| (s.state().at(PSI, i, 0) - prof(grid.x1(i) - 0.5)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(128), err(256));
        assert!(e2 < 1e-4 && e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn slow_system_matches_dalembert() {
        // Ψ ≡ 0, h = diag(−1, 1/4, 1/4): w = ½(F(x − t/2) + F(x + t/2)).
        let m = MetricModel::custom(&[0.0], &[0.0], &[0.0], [0.25, 0.0, 0.25], Semilinear::none());
        assert_eq!(m.h_inv(0.0, &Slow::zeros()), default_h_inv());
        let f = |x: f64| (-40.0 * (x - 1.0).powi(2)).exp();
        let df = |x: f64| -80.0 * (x - 1.0) * f(x);
        let run = |nx: usize| {
            let grid = CartesianGrid::new(nx, 4);
            let mut st = CartesianState {
                t: 0.0,
                grid,
                f: std::array::from_fn(|_| vec![0.0; grid.nodes()]),
            };
            for i in 0..=grid.nx {
                for j in 0..4 {
                    st.f[W][grid.idx(i, j)] = f(grid.x1(i));
                    st.f[W1][grid.idx(i, j)] = df(grid.x1(i));
                }
            }
            let mut s = CartesianSolver::new(m.clone(), st, 0.5, 2.0);
            s.run_to(1.0).unwrap();
            let e = (0..=grid.nx)
                .map(|i| {
                    let x = grid.x1(i);
                    (s.state().at(W, i, 1) - 0.5 * (f(x - 0.5) + f(x + 0.5))).abs()
                })
                .fold(0.0, f64::max);
            assert!(s.curl_residual() < 1e-12);
            e
        };
        let (e1, e2) = (run(256), run(512));
        assert!(e2 < 2e-5 && e1 / e2 > 12.0, "{e1} {e2}");
    }

    #[test]
    fn support_breach_and_window() {
        let m = model();
        let grid = CartesianGrid {
            nx: 64,
            nt: 4,
            x_lo: 0.0,
            x_hi: 1.2,
        };
        let init = init_cartesian(&m, &InitialData::unperturbed(Profile::bump(0.1)), grid).unwrap();
        let mut s = CartesianSolver::new(m.clone(), init.clone(), 0.5, 10.0);
        assert!(matches!(s.run_to(0.5), Err(CartesianError::SupportBreach { .. })));
        let init = init_cartesian(&m, &InitialData::unperturbed(Profile::bump(0.1)), CartesianGrid::new(64, 4)).unwrap();
        let mut s = CartesianSolver::new(m, init, 0.5, 0.1);
        assert!(matches!(s.run_to(0.5), Err(CartesianError::WindowExceeded { .. })));
    }

    #[test]
    fn initial_comparison_is_at_discretization_level() {
        let m = model();
        let data = perturbed(1e-3);
        let geo = init_geo2d(&m, &data, Geo2DGrid::new(128, 32)).unwrap();
        let cart = init_cartesian(&m, &data, CartesianGrid::new(512, 32)).unwrap();
        let mut s = CartesianSolver::new(m.clone(), cart, 0.5, 1.0);
        let grad = s.spatial_gradient();
        let rep = compare_to_geo(&m, s.state(), &grad, &geo).unwrap();
        assert!(rep.samples > 100);
        // Undifferentiated fields coincide at the nodes.
        for q in [0, 4, 5, 6, 7] {
            assert!(rep.max_abs[q] < 1e-12, "{} {}", COMPARE_NAMES[q], rep.max_abs[q]);
        }
        // Gradients carry the finite-difference error of either grid.
        for q in [1, 2, 3] {
            assert!(rep.max_rel[q] < 1e-4, "{} {}", COMPARE_NAMES[q], rep.max_rel[q]);
        }
    }

    #[test]
    fn short_run_agrees_with_geometric_solver() {
        let m = model();
        let data = perturbed(5e-3);
        let t = 0.2;
        let geo = run_geo2d_full(
            &m,
            &data,
            &Geo2DOptions {
                nu: 64,
                nt: 16,
                t_max: Some(t),
                audit: false,
                ..Default::default()
            },
        )
        .unwrap()
        .final_state;
        let mut cart = run_cartesian(&m, &data, &CartesianOptions { nx: 256, nt: 16, ..Default::default() }, 0.46, t).unwrap();
        let grad = cart.spatial_gradient();
        let rep = compare_to_geo(&m, cart.state(), &grad, &geo).unwrap();
        assert!(rep.worst_max_rel() < 1e-2, "{rep:?}");
        // Negative control: a Cartesian state at another time.
        let mut early = run_cartesian(&m, &data, &CartesianOptions { nx: 256, nt: 16, ..Default::default() }, 0.46, 0.1).unwrap();
        let grad = early.spatial_gradient();
        match compare_to_geo(&m, early.state(), &grad, &geo) {
            Ok(r) => assert!(r.worst_max_rel() > 1e-2),
            Err(e) => assert!(matches!(e, CartesianError::OutOfChart { .. })),
        }
    }
}
