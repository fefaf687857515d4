//! Energies, null fluxes, the coercive spacetime integral, data-size
//! parameters, energy-identity audits and the μ★ / blowup fits.
//!
//! Pointwise densities live here; the solvers assemble them over their grids
//! into [`AuditSample`]s and feed an [`EnergyLedger`] once per step.

use thiserror::Error;

use crate::data::InitialData;
use crate::frame::{build_frame_unchecked, initial_relations};
use crate::metric::{Mat3, MetricError, MetricModel, Slow, Vec3};
use crate::numerics::linear_fit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("diagnostics/shock_fit: no shock, fitted slope kappa = {kappa} is not positive")]
    NoShock { kappa: f64 },
    #[error("diagnostics/shock_fit: only {have} samples with mu_star <= 0.8 (need {need})")]
    InsufficientSamples { have: usize, need: usize },
    #[error("diagnostics/slow_energy_flux: coercivity violated, {quantity} = {value}")]
    CoercivityViolation { quantity: &'static str, value: f64 },
}

/// μ★ at or below which samples enter the final fitting window.
pub const FINAL_WINDOW_MU: f64 = 0.3;
/// Upper end of the μ★ range used for the blowup-exponent fit.
pub const BLOWUP_WINDOW_MU: f64 = 0.5;
const MIN_FIT_SAMPLES: usize = 10;

// ---------------------------------------------------------------- fast wave

/// Integrand of the fast energy (without the measure υ dθ du).
pub fn fast_energy_density(mu: f64, lf: f64, xbf: f64, dslash2: f64) -> f64 {
    0.5 * (1.0 + 2.0 * mu) * mu * lf * lf + 2.0 * mu * lf * xbf + 2.0 * xbf * xbf + 0.5 * (1.0 + 2.0 * mu) * mu * dslash2
}

/// Integrand of the fast null flux (without the measure υ dθ dt).
pub fn fast_flux_density(mu: f64, lf: f64, dslash2: f64) -> f64 {
    (1.0 + mu) * lf * lf + mu * dslash2
}

/// Pointwise inputs to the fast energy identity for f = Ψ. Tori are one
/// dimensional, so d̸-quantities are represented by their Θ-components and
/// d̸^#f·ω = (∂_θ f)(ω_Θ)/υ².
#[derive(Clone, Copy, Debug, Default)]
pub struct FastAuditPoint {
    pub mu: f64,
    pub upsilon: f64,
    pub lf: f64,
    pub xbf: f64,
    pub dth_f: f64,
    /// μ □_g f.
    pub forcing: f64,
    pub lmu: f64,
    pub xbmu: f64,
    pub dth_mu: f64,
    pub trchi: f64,
    pub trk_trans: f64,
    pub trk_tan: f64,
    pub zeta_trans: f64,
    pub zeta_tan: f64,
}

impl FastAuditPoint {
    /// Integrand (per υ dθ du dt) of the spacetime terms on the right of the
    /// fast identity: −(Tf)𝔉 − ½[Lμ]₋|d̸f|² + Σᵢ 𝔈ᵢ.
    pub fn bulk(&self) -> f64 {
        let p = self;
        let ups2 = p.upsilon * p.upsilon;
        let dslash2 = p.dth_f * p.dth_f / ups2;
        let tf = (1.0 + 2.0 * p.mu) * p.lf + 2.0 * p.xbf;
        let lmu_minus = (-p.lmu).max(0.0);
        let lmu_plus = p.lmu.max(0.0);
        let e1 = p.lf * p.lf
            * (-0.5 * p.lmu + p.xbmu - 0.5 * p.mu * p.trchi - p.trk_trans - p.mu * p.trk_tan);
        let e2 = -p.lf * p.xbf * (p.trchi + 2.0 * p.trk_trans + 2.0 * p.mu * p.trk_tan);
        let e3 = p.mu
            * dslash2
            * (0.5 * lmu_plus / p.mu + p.xbmu / p.mu + 2.0 * p.lmu - 0.5 * p.trchi - p.trk_trans - p.mu * p.trk_tan);
        let sharp = p.dth_f / ups2;
        let e4 = p.lf * sharp * ((1.0 - 2.0 * p.mu) * p.dth_mu + 2.0 * p.zeta_trans + 2.0 * p.mu * p.zeta_tan);
        let e5 = -2.0 * p.xbf * sharp * (p.dth_mu + 2.0 * p.zeta_trans + 2.0 * p.mu * p.zeta_tan);
        -tf * p.forcing - 0.5 * lmu_minus * dslash2 + e1 + e2 + e3 + e4 + e5
    }

    /// Integrand of the coercive spacetime integral: ½[Lμ]₋|d̸f|².
    pub fn k_density(&self) -> f64 {
        0.5 * (-self.lmu).max(0.0) * self.dth_f * self.dth_f / (self.upsilon * self.upsilon)
    }
}

// ---------------------------------------------------------------- slow wave

/// Cartesian components of the compatible current J[V].
pub fn slow_current(hinv: &Mat3, v: &Slow) -> Vec3 {
    let vd = Vec3::new(v[1], v[2], v[3]);
    let hv = hinv * vd;
    let q = vd.dot(&hv);
    let mut j = Vec3::zeros();
    j[0] = 2.0 * hv[0] * hv[0] + q + v[0] * v[0];
    for i in 1..3 {
        j[i] = 2.0 * hv[i] * hv[0] - hinv[(i, 0)] * q - hinv[(i, 0)] * v[0] * v[0];
    }
    j
}

/// Euclidean-unit co-normal H_α = −L_α/|L♭|_E to the null hypersurfaces.
pub fn euclidean_conormal(l_flat: &Vec3) -> Vec3 {
    -l_flat / l_flat.norm()
}

/// J^α H_α times the area factor |det[H♯, L, Θ]| relating the Euclidean
/// area form on P_u to dt dθ.
pub fn slow_flux_density(j: &Vec3, l_flat: &Vec3, l: &Vec3, theta: &Vec3) -> f64 {
    let h = euclidean_conormal(l_flat);
    let area = Mat3::from_columns(&[h, *l, *theta]).determinant().abs();
    j.dot(&h) * area
}

/// Inhomogeneous terms of the first-order slow system in μ-weighted form:
/// F₀, F_i, F (for ∂_t v) and F₁₂ (the curl constraint).
#[derive(Clone, Copy, Debug, Default)]
pub struct SlowForcing {
    pub f0: f64,
    pub fi: [f64; 2],
    pub f: f64,
    pub f12: f64,
}

/// μ ∂_α J^α for a solution of the μ-weighted inhomogeneous slow system;
/// `dh[α]` is the Cartesian derivative ∂_α h⁻¹.
pub fn slow_divergence(hinv: &Mat3, dh: &[Mat3; 3], v: &Slow, mu: f64, forcing: &SlowForcing) -> f64 {
    let vd = Vec3::new(v[1], v[2], v[3]);
    let vv = v[0];
    let fd = Vec3::new(forcing.f0, forcing.fi[0], forcing.fi[1]);
    let col0 = |m: &Mat3| Vec3::new(m[(0, 0)], m[(1, 0)], m[(2, 0)]);
    let h0v = col0(hinv).dot(&vd);
    let quad = |m: &Mat3| vd.dot(&(m * vd));
    let mut w = 4.0 * col0(&dh[0]).dot(&vd) * h0v + quad(&dh[0]);
    for a in 1..3 {
        // (∂_a h^{αa}) v_α, h^{αa} v_α, ∂_a h^{a0}
        let da_col = Vec3::new(dh[a][(0, a)], dh[a][(1, a)], dh[a][(2, a)]);
        let ha_v = Vec3::new(hinv[(0, a)], hinv[(1, a)], hinv[(2, a)]).dot(&vd);
        let da_h0v = col0(&dh[a]).dot(&vd);
        let div_a0 = dh[a][(a, 0)];
        w += 2.0 * da_col.dot(&vd) * h0v + 2.0 * ha_v * da_h0v
            - div_a0 * quad(hinv)
            - hinv[(a, 0)] * quad(&dh[a])
            - div_a0 * vv * vv;
    }
    w -= 2.0 * h0v * vv;
    w *= mu;
    let hf = hinv * fd;
    let mut src = 4.0 * h0v * col0(hinv).dot(&fd) + 2.0 * vd.dot(&hf) + 2.0 * vv * forcing.f;
    // 2 h^{αa} h^{b0} v_α F_ab with F_12 = −F_21.
    let hv = hinv * vd;
    src += 2.0 * (hv[1] * hinv[(2, 0)] - hv[2] * hinv[(1, 0)]) * forcing.f12;
    w + src
}

/// Pointwise check of the slow-wave coerciveness.
pub fn check_coercive(j0: f64, jh: f64) -> Result<(), DiagError> {
    if j0 < 0.0 {
        return Err(DiagError::CoercivityViolation {
            quantity: "J^0",
            value: j0,
        });
    }
    if jh < 0.0 {
        return Err(DiagError::CoercivityViolation {
            quantity: "J^a H_a",
            value: jh,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- ledger

/// Grid-integrated quantities at one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditSample {
    pub t: f64,
    pub e_fast: f64,
    pub e_slow: f64,
    /// Flux densities integrated over θ at u = U₀ (out) and u = 0 (in).
    pub fast_flux_out: f64,
    pub fast_flux_in: f64,
    pub slow_flux_out: f64,
    pub slow_flux_in: f64,
    /// Spacetime integrands integrated over (u, θ).
    pub fast_bulk: f64,
    pub slow_bulk: f64,
    pub k_rate: f64,
}

/// Time-accumulated fluxes and spacetime integrals (trapezoid in t).
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    first: Option<AuditSample>,
    last: Option<AuditSample>,
    pub f_fast_out: f64,
    pub f_fast_in: f64,
    pub f_slow_out: f64,
    pub f_slow_in: f64,
    pub bulk_fast: f64,
    pub bulk_slow: f64,
    pub k: f64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: AuditSample) {
        if let Some(p) = self.last {
            let dt = s.t - p.t;
            let tr = |a: f64, b: f64| 0.5 * dt * (a + b);
            self.f_fast_out += tr(p.fast_flux_out, s.fast_flux_out);
            self.f_fast_in += tr(p.fast_flux_in, s.fast_flux_in);
            self.f_slow_out += tr(p.slow_flux_out, s.slow_flux_out);
            self.f_slow_in += tr(p.slow_flux_in, s.slow_flux_in);
            self.bulk_fast += tr(p.fast_bulk, s.fast_bulk);
            self.bulk_slow += tr(p.slow_bulk, s.slow_bulk);
            self.k += tr(p.k_rate, s.k_rate);
        } else {
            self.first = Some(s);
        }
        self.last = Some(s);
    }

    pub fn current(&self) -> Option<&AuditSample> {
        self.last.as_ref()
    }

    /// Normalized imbalance of the fast identity (0 when both sides agree).
    pub fn fast_imbalance(&self) -> f64 {
        let (Some(a), Some(b)) = (self.first, self.last) else {
            return 0.0;
        };
        let lhs = b.e_fast + self.f_fast_out;
        let rhs = a.e_fast + self.f_fast_in + self.bulk_fast;
        normalized(lhs - rhs, &[a.e_fast, b.e_fast, self.f_fast_out, self.f_fast_in, self.bulk_fast])
    }

    pub fn slow_imbalance(&self) -> f64 {
        let (Some(a), Some(b)) = (self.first, self.last) else {
            return 0.0;
        };
        let lhs = b.e_slow + self.f_slow_out;
        let rhs = a.e_slow + self.f_slow_in + self.bulk_slow;
        normalized(lhs - rhs, &[a.e_slow, b.e_slow, self.f_slow_out, self.f_slow_in, self.bulk_slow])
    }
}

fn normalized(diff: f64, parts: &[f64]) -> f64 {
    let scale = parts.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        diff.abs()
    } else {
        diff.abs() / scale
    }
}

// ---------------------------------------------------------------- data size

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DataSizeParams {
    /// sup |Ψ| on Σ₀.
    pub alpha0: f64,
    /// Configured perturbation scale.
    pub eps0: f64,
    /// Measured sup of |LΨ|, |d̸Ψ| and |W| on Σ₀.
    pub eps0_measured: f64,
    /// sup |X̆Ψ| on Σ₀.
    pub delta0: f64,
    /// ½ sup [G_LL X̆Ψ]₋ on Σ₀.
    pub deltastar: f64,
}

/// Accumulates [`DataSizeParams`] from pointwise samples on Σ₀.
#[derive(Clone, Copy, Debug, Default)]
pub struct DataSizeBuilder {
    p: DataSizeParams,
}

impl DataSizeBuilder {
    pub fn new(eps0: f64) -> Self {
        Self {
            p: DataSizeParams {
                eps0,
                ..Default::default()
            },
        }
    }

    /// One node: Ψ, X̆Ψ, G_LL, and the tangential sizes |LΨ|, |d̸Ψ|, sup|W|.
    pub fn add(&mut self, psi: f64, xbpsi: f64, g_ll: f64, tangential: f64) {
        let p = &mut self.p;
        p.alpha0 = p.alpha0.max(psi.abs());
        p.delta0 = p.delta0.max(xbpsi.abs());
        p.deltastar = p.deltastar.max(0.5 * (-g_ll * xbpsi).max(0.0));
        p.eps0_measured = p.eps0_measured.max(tangential.abs());
    }

    pub fn finish(self) -> DataSizeParams {
        self.p
    }
}

const SIZE_NU: usize = 4096;
const SIZE_NT: usize = 64;

/// (Ψ, X̆Ψ, G_LL, tangential size) at a point of Σ₀, using the initial
/// relations for the frame and X̆Ψ = ∂_uΨ − ξ∂_θΨ.
fn sigma0_point(model: &MetricModel, data: &InitialData, u: f64, theta: f64) -> Result<[f64; 4], MetricError> {
    let p = data.at(u, theta);
    let ge = model.eval_fast_metric(p.psi)?;
    let (mu, l_small, xi) = initial_relations(&ge);
    let fb = build_frame_unchecked(&ge, mu, l_small);
    let g_ll = ge.big_g_dot(&fb.l, &fb.l);
    let xb = p.psi_u - xi[1] * p.psi_th;
    let upsilon = ge.dot(&fb.y, &fb.y).sqrt();
    let tang = p
        .a
        .abs()
        .max((p.psi_th / upsilon).abs())
        .max(p.w.abs())
        .max(p.w0.abs())
        .max(p.w_u.abs())
        .max(p.w_th.abs());
    Ok([p.psi, xb, g_ll, tang])
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Data-size parameters of the initial data itself, independent of any
/// solver grid: a fine sampling of Σ₀ with the δ̊★ maximizer refined by
/// golden-section search.
pub fn initial_data_size(model: &MetricModel, data: &InitialData) -> Result<DataSizeParams, MetricError> {
    let nt = if data.is_plane() { 1 } else { SIZE_NT };
    let mut b = DataSizeBuilder::new(data.eps);
    let dstar = |q: [f64; 4]| 0.5 * (-q[2] * q[1]).max(0.0);
    let mut best = (0.0, 0.0, -1.0);
    for i in 0..=SIZE_NU {
        let u = i as f64 / SIZE_NU as f64;
        for k in 0..nt {
            let th = k as f64 / nt as f64;
            let q = sigma0_point(model, data, u, th)?;
            b.add(q[0], q[1], q[2], q[3]);
            if dstar(q) > best.2 {
                best = (u, th, dstar(q));
            }
        }
    }
    let mut p = b.finish();
    if best.2 > 0.0 {
        let eval = |u: f64, th: f64| sigma0_point(model, data, u, th).map(dstar).unwrap_or(0.0);
        let (mut u, mut th) = (best.0, best.1);
        let hu = 1.0 / SIZE_NU as f64;
        let ht = 1.0 / nt as f64;
        for _ in 0..if nt == 1 { 1 } else { 3 } {
            u = golden_max(|x| eval(x, th), (u - hu).max(0.0), (u + hu).min(1.0)).0;
            if nt > 1 {
                th = golden_max(|x| eval(u, x), th - ht, th + ht).0;
            }
        }
        p.deltastar = p.deltastar.max(eval(u, th));
    }
    Ok(p)
}

// ---------------------------------------------------------------- series

/// One row of the per-step series.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub mu_star: f64,
    pub u_star: f64,
    pub theta_star: f64,
    pub max_d1psi: f64,
    pub max_dtpsi: f64,
    /// max |XΨ| with X = X̆/μ.
    pub max_xpsi: f64,
    pub sup_w: [f64; 4],
    pub e_fast: f64,
    pub f_fast: f64,
    pub e_slow: f64,
    pub f_slow: f64,
    pub k: f64,
    pub audit_fast: f64,
    pub audit_slow: f64,
    pub res_jacobian: f64,
    pub res_curl: f64,
    pub res_b: f64,
    pub res_lnu: f64,
    pub res_null: f64,
    /// X̆L^i_s from the grid against its algebraic formula (geo2d only).
    pub res_radl: f64,
    /// |u-component of X̆ − 1| from the Jacobian solve (geo2d only).
    pub res_xbu: f64,
}

impl SeriesRow {
    pub const HEADER: &'static str = "t,mu_star,u_star,theta_star,max_d1psi,max_dtpsi,max_xpsi,\
sup_w,sup_w0,sup_w1,sup_w2,e_fast,f_fast,e_slow,f_slow,k,audit_fast,audit_slow,\
res_jacobian,res_curl,res_b,res_lnu,res_null,res_radl,res_xbu";

    pub fn values(&self) -> [f64; 25] {
        [
            self.t,
            self.mu_star,
            self.u_star,
            self.theta_star,
            self.max_d1psi,
            self.max_dtpsi,
            self.max_xpsi,
            self.sup_w[0],
            self.sup_w[1],
            self.sup_w[2],
            self.sup_w[3],
            self.e_fast,
            self.f_fast,
            self.e_slow,
            self.f_slow,
            self.k,
            self.audit_fast,
            self.audit_slow,
            self.res_jacobian,
            self.res_curl,
            self.res_b,
            self.res_lnu,
            self.res_null,
            self.res_radl,
            self.res_xbu,
        ]
    }

    pub fn sup_w_max(&self) -> f64 {
        self.sup_w.iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    /// Fill the energy columns from a ledger.
    pub fn set_energies(&mut self, ledger: &EnergyLedger) {
        if let Some(s) = ledger.current() {
            self.e_fast = s.e_fast;
            self.e_slow = s.e_slow;
        }
        self.f_fast = ledger.f_fast_out;
        self.f_slow = ledger.f_slow_out;
        self.k = ledger.k;
        self.audit_fast = ledger.fast_imbalance();
        self.audit_slow = ledger.slow_imbalance();
    }
}

/// Column-wise maxima of the residual monitors over a series.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualMaxima {
    pub jacobian: f64,
    pub curl: f64,
    pub b: f64,
    pub lnu: f64,
    pub null: f64,
    pub radl: f64,
    pub xbu: f64,
    pub audit_fast: f64,
    pub audit_slow: f64,
}

impl ResidualMaxima {
    pub fn from_series(rows: &[SeriesRow]) -> Self {
        let mut m = Self::default();
        for r in rows {
            m.jacobian = m.jacobian.max(r.res_jacobian);
            m.curl = m.curl.max(r.res_curl);
            m.b = m.b.max(r.res_b);
            m.lnu = m.lnu.max(r.res_lnu);
            m.null = m.null.max(r.res_null);
            m.radl = m.radl.max(r.res_radl);
            m.xbu = m.xbu.max(r.res_xbu);
            m.audit_fast = m.audit_fast.max(r.audit_fast);
            m.audit_slow = m.audit_slow.max(r.audit_slow);
        }
        m
    }
}

// ---------------------------------------------------------------- fits

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShockFit {
    pub t_shock: f64,
    pub kappa: f64,
    pub c0: f64,
    pub r2: f64,
    pub window_samples: usize,
    pub blowup_exponent: f64,
}

/// Linear fit μ★ ≈ c₀ − κt over the final window (μ★ ≤ 0.3, at least ten
/// samples), T_shock = c₀/κ, and the slope of log max|XΨ| against log(1/μ★)
/// over μ★ ∈ [min μ★, 0.5].
pub fn shock_fit(rows: &[SeriesRow]) -> Result<ShockFit, DiagError> {
    let have = rows.iter().filter(|r| r.mu_star <= 0.8).count();
    if have < MIN_FIT_SAMPLES {
        return Err(DiagError::InsufficientSamples {
            have,
            need: MIN_FIT_SAMPLES,
        });
    }
    let mut start = rows
        .iter()
        .position(|r| r.mu_star <= FINAL_WINDOW_MU)
        .unwrap_or(rows.len());
    start = start.min(rows.len().saturating_sub(MIN_FIT_SAMPLES));
    let window = &rows[start..];
    let t: Vec<f64> = window.iter().map(|r| r.t).collect();
    let m: Vec<f64> = window.iter().map(|r| r.mu_star).collect();
    let fit = linear_fit(&t, &m).ok_or(DiagError::NoShock { kappa: 0.0 })?;
    let kappa = -fit.slope;
    if !(kappa > 0.0) {
        return Err(DiagError::NoShock { kappa });
    }
    Ok(ShockFit {
        t_shock: fit.intercept / kappa,
        kappa,
        c0: fit.intercept,
        r2: fit.r2,
        window_samples: window.len(),
        blowup_exponent: blowup_exponent(rows, BLOWUP_WINDOW_MU),
    })
}

/// Slope of log max|XΨ| versus log(1/μ★) over samples with μ★ ≤ `mu_hi`.
pub fn blowup_exponent(rows: &[SeriesRow], mu_hi: f64) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mu_star <= mu_hi && r.mu_star > 0.0 && r.max_xpsi > 0.0)
        .map(|r| ((1.0 / r.mu_star).ln(), r.max_xpsi.ln()))
        .unzip();
    linear_fit(&x, &y).map_or(f64::NAN, |f| f.slope)
}

/// Linear fit of μ★ over t ∈ [lo, hi]; returns (κ, R²).
pub fn mu_star_fit_on(rows: &[SeriesRow], lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (t, m): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi)
        .map(|r| (r.t, r.mu_star))
        .unzip();
    linear_fit(&t, &m).map(|f| (-f.slope, f.r2))
}

/// Observable content of a run that reached μ_stop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShockReport {
    pub t_shock: f64,
    pub kappa: f64,
    pub r2: f64,
    pub u_star: f64,
    pub theta_star: f64,
    pub blowup_exponent: f64,
    pub max_w_sup: f64,
    pub params: DataSizeParams,
    pub residuals: ResidualMaxima,
    pub steps: usize,
    pub t_end: f64,
    pub mu_star_end: f64,
}

impl ShockReport {
    pub fn from_series(rows: &[SeriesRow], params: DataSizeParams) -> Result<Self, DiagError> {
        let fit = shock_fit(rows)?;
        let last = rows.last().copied().unwrap_or_default();
        Ok(Self {
            t_shock: fit.t_shock,
            kappa: fit.kappa,
            r2: fit.r2,
            u_star: last.u_star,
            theta_star: last.theta_star,
            blowup_exponent: fit.blowup_exponent,
            max_w_sup: rows.iter().map(SeriesRow::sup_w_max).fold(0.0, f64::max),
            params,
            residuals: ResidualMaxima::from_series(rows),
            steps: rows.len().saturating_sub(1),
            t_end: last.t,
            mu_star_end: last.mu_star,
        })
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// μ★ reached μ_stop.
    Shock(ShockReport),
    /// Case I: μ★ stayed above μ_stop up to t_max.
    NoShock { t_end: f64, mu_star_min: f64 },
}

impl Outcome {
    pub fn report(&self) -> Option<&ShockReport> {
        match self {
            Outcome::Shock(r) => Some(r),
            Outcome::NoShock { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deltastar_matches_log_derivative_of_bump() {
        use crate::data::Profile;
        let m = MetricModel::model_quadratic();
        for lam in [0.02, 0.05, 0.1] {
            let prof = Profile::bump(lam);
            let n = 1_000_000;
            let oracle = (0..=n)
                .map(|k| {
                    let [p, dp, _] = prof.at_x(k as f64 / n as f64);
                    dp / (1.0 + p)
                })
                .fold(0.0f64, f64::max);
            let got = initial_data_size(&m, &InitialData::unperturbed(prof)).unwrap();
            assert!((got.deltastar - oracle).abs() < 1e-8, "{} {}", got.deltastar, oracle);
            assert!((got.alpha0 - lam).abs() < 1e-6);
            assert!(got.deltastar <= 0.5 * got.delta0 * 2.0 + 1e-15);
        }
    }
    use crate::metric::default_h_inv;
    use crate::rng::Rng;

    #[test]
    fn fast_energy_of_pure_transversal_state() {
        // LΨ = 0, d̸Ψ = 0, X̆Ψ = q: integrand is 2q².
        for mu in [0.3, 1.0, 1.7] {
            assert_eq!(fast_energy_density(mu, 0.0, 0.25, 0.0), 2.0 * 0.0625);
        }
        assert_eq!(fast_energy_density(1.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(fast_flux_density(1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn slow_current_examples() {
        let h = default_h_inv();
        let j = slow_current(&h, &Slow::new(0.0, 1.0, 0.0, 0.0));
        assert!((j[0] - 1.0).abs() < 1e-15);
        assert_eq!(slow_current(&h, &Slow::zeros()), Vec3::zeros());
    }

    #[test]
    fn slow_divergence_matches_direct_calculation() {
        // Constant h = diag(−1, c², c²), F₀ = μS only: μ∂J = 2μ v v₀ + 2 v₀ F₀.
        let h = default_h_inv();
        let v = Slow::new(0.3, -0.2, 0.5, 0.1);
        let f = SlowForcing {
            f0: 0.7,
            ..Default::default()
        };
        let got = slow_divergence(&h, &[Mat3::zeros(); 3], &v, 0.8, &f);
        let want = 2.0 * 0.8 * 0.3 * -0.2 + 2.0 * -0.2 * 0.7;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn k_accumulates_exactly_on_unit_box() {
        // [Lμ]₋ = 1, |d̸Ψ|² = 1, υ = 1 on a unit box: K = 1/2.
        let p = FastAuditPoint {
            mu: 1.0,
            upsilon: 1.0,
            dth_f: 1.0,
            lmu: -1.0,
            ..Default::default()
        };
        let mut ledger = EnergyLedger::new();
        for k in 0..=10 {
            ledger.push(AuditSample {
                t: k as f64 * 0.1,
                k_rate: p.k_density(),
                ..Default::default()
            });
        }
        assert!((ledger.k - 0.5).abs() < 1e-14);
        let q = FastAuditPoint { lmu: 1.0, ..p };
        assert_eq!(q.k_density(), 0.0);
    }

    #[test]
    fn coerciveness_on_random_admissible_states() {
        let h = default_h_inv();
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            let v = Slow::new(rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0));
            let j = slow_current(&h, &v);
            let l_flat = Vec3::new(-1.0, 1.0 + rng.range(-0.1, 0.1), rng.range(-0.1, 0.1));
            let jh = j.dot(&euclidean_conormal(&l_flat));
            assert!(check_coercive(j[0], jh).is_ok());
        }
        assert!(check_coercive(-1.0, 1.0).is_err());
    }

    fn linear_series(kappa: f64, n: usize) -> Vec<SeriesRow> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.95 / (kappa * (n - 1) as f64);
                let mu = 1.0 - kappa * t;
                SeriesRow {
                    t,
                    mu_star: mu,
                    max_xpsi: 0.1 / mu,
                    ..Default::default()
                }
            })
            .collect()
    }

    #[test]
    fn fit_of_exact_simple_wave_series() {
        let rows = linear_series(0.1, 200);
        let fit = shock_fit(&rows).unwrap();
        assert!((fit.t_shock - 10.0).abs() < 1e-10);
        assert!((fit.kappa - 0.1).abs() < 1e-12);
        assert!((fit.blowup_exponent - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_series_is_no_shock() {
        let rows: Vec<SeriesRow> = (0..50)
            .map(|k| SeriesRow {
                t: k as f64,
                mu_star: 0.5,
                ..Default::default()
            })
            .collect();
        assert!(matches!(shock_fit(&rows), Err(DiagError::NoShock { .. })));
        assert!(matches!(
            shock_fit(&rows[..3]),
            Err(DiagError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn data_size_invariant() {
        let mut b = DataSizeBuilder::new(0.0);
        b.add(0.1, -0.1, 2.0 / 1.1, 0.0);
        b.add(0.05, 0.2, 2.0 / 1.05, 0.0);
        let p = b.finish();
        assert!((p.deltastar - 0.1 / 1.1).abs() < 1e-15);
        assert!(p.deltastar <= p.delta0 * (2.0 / 1.05) / 2.0);
    }
}
